use nalgebra::Vector3;

use super::{normalize_quat, quat_norm, Gaussian3D, Scene};
use crate::error::{Error, Result};

/// Trainable scalars per Gaussian: center 3, quaternion 4, log-scale 3,
/// color logits 3, opacity logit 1.
pub const PARAMS_PER_GAUSSIAN: usize = 14;

/// Parameter classes in packed order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamField {
    Center,
    Rotation,
    LogScale,
    Color,
    Opacity,
}

impl ParamField {
    pub const ALL: [ParamField; 5] = [
        ParamField::Center,
        ParamField::Rotation,
        ParamField::LogScale,
        ParamField::Color,
        ParamField::Opacity,
    ];

    /// Offset of the field within one Gaussian's block.
    pub const fn offset(self) -> usize {
        match self {
            ParamField::Center => 0,
            ParamField::Rotation => 3,
            ParamField::LogScale => 7,
            ParamField::Color => 10,
            ParamField::Opacity => 13,
        }
    }

    pub const fn len(self) -> usize {
        match self {
            ParamField::Center | ParamField::LogScale | ParamField::Color => 3,
            ParamField::Rotation => 4,
            ParamField::Opacity => 1,
        }
    }

    /// Field owning a slot within a Gaussian's block.
    pub fn of_slot(slot: usize) -> ParamField {
        match slot {
            0..=2 => ParamField::Center,
            3..=6 => ParamField::Rotation,
            7..=9 => ParamField::LogScale,
            10..=12 => ParamField::Color,
            13 => ParamField::Opacity,
            _ => panic!("slot {slot} is outside a gaussian block"),
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            ParamField::Center => "center",
            ParamField::Rotation => "rotation",
            ParamField::LogScale => "log_scale",
            ParamField::Color => "color",
            ParamField::Opacity => "opacity",
        }
    }
}

/// Flat vector of every trainable scalar, `PARAMS_PER_GAUSSIAN` per Gaussian
/// in scene order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
}

impl ParamVector {
    pub fn from_vec(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(gaussians: usize) -> Self {
        Self {
            values: vec![0.0; gaussians * PARAMS_PER_GAUSSIAN],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn gaussians(&self) -> usize {
        self.values.len() / PARAMS_PER_GAUSSIAN
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    /// Index of `field[component]` of Gaussian `gaussian`.
    pub fn index(gaussian: usize, field: ParamField, component: usize) -> usize {
        debug_assert!(component < field.len());
        gaussian * PARAMS_PER_GAUSSIAN + field.offset() + component
    }

    pub fn field(&self, gaussian: usize, field: ParamField) -> &[f64] {
        let start = Self::index(gaussian, field, 0);
        &self.values[start..start + field.len()]
    }

    pub fn field_mut(&mut self, gaussian: usize, field: ParamField) -> &mut [f64] {
        let start = Self::index(gaussian, field, 0);
        &mut self.values[start..start + field.len()]
    }
}

pub fn pack_params(scene: &Scene) -> ParamVector {
    let mut values = Vec::with_capacity(scene.len() * PARAMS_PER_GAUSSIAN);
    for g in &scene.gaussians {
        values.extend(g.center.iter());
        values.extend(g.rotation);
        values.extend(g.log_scale.iter());
        values.extend(g.color_logit.iter());
        values.push(g.opacity_logit);
    }
    ParamVector { values }
}

/// Rebuilds `template`'s topology from `v`.
///
/// Quaternions that are off unit norm are re-normalized; quaternions already
/// at unit norm pass through untouched so the round trip stays bit-exact.
pub fn unpack_params(v: &ParamVector, template: &Scene) -> Result<Scene> {
    let expected = template.len() * PARAMS_PER_GAUSSIAN;
    if v.len() != expected {
        return Err(Error::Topology {
            expected,
            actual: v.len(),
        });
    }
    let gaussians = v
        .values
        .chunks_exact(PARAMS_PER_GAUSSIAN)
        .map(|b| {
            let q = [b[3], b[4], b[5], b[6]];
            let rotation = if (quat_norm(q) - 1.0).abs() > 4.0 * f64::EPSILON {
                normalize_quat(q)
            } else {
                q
            };
            Gaussian3D {
                center: Vector3::new(b[0], b[1], b[2]),
                rotation,
                log_scale: Vector3::new(b[7], b[8], b[9]),
                color_logit: Vector3::new(b[10], b[11], b[12]),
                opacity_logit: b[13],
            }
        })
        .collect();
    Ok(Scene {
        gaussians,
        background: template.background,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::scene::{normalize_quat, IDENTITY_QUAT};

    fn one_gaussian() -> Scene {
        Scene::new(
            vec![Gaussian3D {
                center: Vector3::new(0.5, -1.0, 3.0),
                rotation: IDENTITY_QUAT,
                log_scale: Vector3::new(-1.0, -2.0, -0.5),
                color_logit: Vector3::new(0.1, 0.2, 0.3),
                opacity_logit: -2.0,
            }],
            [0.0, 0.0, 0.0],
        )
    }

    #[test]
    fn one_gaussian_packs_to_fourteen() {
        assert_eq!(pack_params(&one_gaussian()).len(), 14);
    }

    #[test]
    fn round_trip_is_identity() {
        let s = one_gaussian();
        assert_eq!(unpack_params(&pack_params(&s), &s).unwrap(), s);
    }

    #[test]
    fn length_mismatch_is_topology_error() {
        let s = one_gaussian();
        let v = ParamVector::zeros(2);
        assert!(matches!(
            unpack_params(&v, &s),
            Err(Error::Topology {
                expected: 14,
                actual: 28
            })
        ));
    }

    #[test]
    fn perturbing_one_scalar_changes_one_field() {
        let mut g = one_gaussian().gaussians[0].clone();
        // bumping w of the identity quaternion would renormalize back to identity
        g.rotation = normalize_quat([0.9, 0.2, -0.3, 0.1]);
        let s = Scene::new(vec![g; 3], [0.0; 3]);
        let base = pack_params(&s);
        for k in 0..base.len() {
            let mut v = base.clone();
            v.as_mut_slice()[k] += 0.25;
            let changed = unpack_params(&v, &s).unwrap();
            let mut diffs = Vec::new();
            for (gi, (a, b)) in s.gaussians.iter().zip(&changed.gaussians).enumerate() {
                if a.center != b.center {
                    diffs.push((gi, ParamField::Center));
                }
                if a.rotation != b.rotation {
                    diffs.push((gi, ParamField::Rotation));
                }
                if a.log_scale != b.log_scale {
                    diffs.push((gi, ParamField::LogScale));
                }
                if a.color_logit != b.color_logit {
                    diffs.push((gi, ParamField::Color));
                }
                if a.opacity_logit != b.opacity_logit {
                    diffs.push((gi, ParamField::Opacity));
                }
            }
            let gi = k / PARAMS_PER_GAUSSIAN;
            let field = ParamField::of_slot(k % PARAMS_PER_GAUSSIAN);
            assert_eq!(diffs, vec![(gi, field)], "slot {k}");
        }
    }

    #[test]
    fn slot_table_is_consistent() {
        let mut seen = [false; PARAMS_PER_GAUSSIAN];
        for f in ParamField::ALL {
            for c in 0..f.len() {
                let slot = ParamVector::index(0, f, c);
                assert_eq!(ParamField::of_slot(slot), f);
                assert!(!seen[slot]);
                seen[slot] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    proptest! {
        #[test]
        fn round_trip_bit_exact(
            raw in proptest::collection::vec(
                (proptest::array::uniform3(-5.0f64..5.0),
                 proptest::array::uniform4(-1.0f64..1.0),
                 proptest::array::uniform3(-4.0f64..1.0),
                 proptest::array::uniform3(-6.0f64..6.0),
                 -6.0f64..6.0),
                1..12)
        ) {
            let gaussians: Vec<_> = raw.into_iter().filter_map(|(c, q, s, col, o)| {
                if q.iter().map(|v| v * v).sum::<f64>() < 1e-3 { return None; }
                Some(Gaussian3D {
                    center: Vector3::from(c),
                    rotation: normalize_quat(q),
                    log_scale: Vector3::from(s),
                    color_logit: Vector3::from(col),
                    opacity_logit: o,
                })
            }).collect();
            prop_assume!(!gaussians.is_empty());
            let s = Scene::new(gaussians, [0.2, 0.4, 0.6]);
            let v = pack_params(&s);
            let back = unpack_params(&v, &s).unwrap();
            let v2 = pack_params(&back);
            prop_assert!(v.as_slice().iter().zip(v2.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
