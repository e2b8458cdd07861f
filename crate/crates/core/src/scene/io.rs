//! Text formats for scenes (`gsscene v1`) and cameras (`gscam v1`).
//!
//! Scene files start with `gsscene v1 N=<count> bg=<r> <g> <b>` followed by
//! one line per Gaussian holding 14 numbers:
//! `cx cy cz qw qx qy qz ls1 ls2 ls3 colr colg colb op_logit`.
//! Camera files start with `gscam v1` followed by the row-major rotation,
//! the translation, then `fx fy cx cy width height near`. Both formats
//! allow `#` comments and blank lines.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use super::{CameraModel, Gaussian3D, Scene, PARAMS_PER_GAUSSIAN};
use crate::error::{Error, Result};

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(k) => &line[..k],
        None => line,
    }
}

/// Non-empty, comment-stripped lines with 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(k, l)| (k + 1, strip_comment(l).trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_f64(tok: &str, path: &Path, line: usize) -> Result<f64> {
    tok.parse::<f64>().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("'{tok}' is not a number"),
    })
}

pub fn parse_scene(text: &str, path: &Path) -> Result<Scene> {
    let perr = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = content_lines(text);
    let (hline, header) = lines.next().ok_or_else(|| perr(1, "missing gsscene header".into()))?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 6 || toks[0] != "gsscene" || toks[1] != "v1" {
        return Err(perr(hline, "expected `gsscene v1 N=<count> bg=<r> <g> <b>`".into()));
    }
    let count: usize = toks[2]
        .strip_prefix("N=")
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| perr(hline, format!("bad gaussian count '{}'", toks[2])))?;
    let r = toks[3]
        .strip_prefix("bg=")
        .ok_or_else(|| perr(hline, "missing bg=".into()))?;
    let background = [
        parse_f64(r, path, hline)?,
        parse_f64(toks[4], path, hline)?,
        parse_f64(toks[5], path, hline)?,
    ];

    let mut gaussians = Vec::with_capacity(count);
    for (ln, l) in lines {
        let vals = l
            .split_whitespace()
            .map(|t| parse_f64(t, path, ln))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != PARAMS_PER_GAUSSIAN {
            return Err(perr(
                ln,
                format!("expected {PARAMS_PER_GAUSSIAN} fields, found {}", vals.len()),
            ));
        }
        if let Some(k) = vals.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "{}:{ln}: field {} is not finite",
                path.display(),
                k + 1
            )));
        }
        gaussians.push(Gaussian3D {
            center: Vector3::new(vals[0], vals[1], vals[2]),
            rotation: [vals[3], vals[4], vals[5], vals[6]],
            log_scale: Vector3::new(vals[7], vals[8], vals[9]),
            color_logit: Vector3::new(vals[10], vals[11], vals[12]),
            opacity_logit: vals[13],
        });
    }
    if gaussians.len() != count {
        return Err(perr(
            hline,
            format!("header declares {count} gaussians, file has {}", gaussians.len()),
        ));
    }
    if gaussians.iter().any(|g| super::quat_norm(g.rotation) == 0.0) {
        return Err(Error::Validation("zero quaternion".into()));
    }
    let scene = Scene::new(gaussians, background);
    scene.validate()?;
    Ok(scene)
}

/// Canonical text: `{}` formatting is the shortest round-tripping decimal.
pub fn write_scene(scene: &Scene) -> String {
    let [r, g, b] = scene.background;
    let mut out = format!("gsscene v1 N={} bg={r} {g} {b}\n", scene.len());
    for gs in &scene.gaussians {
        let c = gs.center;
        let q = gs.rotation;
        let s = gs.log_scale;
        let k = gs.color_logit;
        writeln!(
            out,
            "{} {} {} {} {} {} {} {} {} {} {} {} {} {}",
            c.x, c.y, c.z, q[0], q[1], q[2], q[3], s.x, s.y, s.z, k.x, k.y, k.z, gs.opacity_logit
        )
        .unwrap();
    }
    out
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<Scene> {
    let path = path.as_ref();
    parse_scene(&fs::read_to_string(path)?, path)
}

pub fn save_scene(scene: &Scene, path: impl AsRef<Path>) -> Result<()> {
    scene.validate()?;
    fs::write(path, write_scene(scene))?;
    Ok(())
}

pub fn parse_camera(text: &str, path: &Path) -> Result<CameraModel> {
    let perr = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = content_lines(text);
    let (hline, header) = lines.next().ok_or_else(|| perr(1, "missing gscam header".into()))?;
    if header.split_whitespace().collect::<Vec<_>>() != ["gscam", "v1"] {
        return Err(perr(hline, "expected `gscam v1`".into()));
    }
    let mut vals = Vec::with_capacity(19);
    let mut last = hline;
    for (ln, l) in lines {
        last = ln;
        for t in l.split_whitespace() {
            vals.push(parse_f64(t, path, ln)?);
        }
    }
    if vals.len() != 19 {
        return Err(perr(last, format!("expected 19 camera values, found {}", vals.len())));
    }
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("camera has non-finite entries".into()));
    }
    let dim = |v: f64, what: &str| -> Result<usize> {
        if v >= 0.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(perr(last, format!("{what} must be a non-negative integer")))
        }
    };
    let cam = CameraModel {
        rotation: Matrix3::from_row_slice(&vals[0..9]),
        translation: Vector3::new(vals[9], vals[10], vals[11]),
        fx: vals[12],
        fy: vals[13],
        cx: vals[14],
        cy: vals[15],
        width: dim(vals[16], "width")?,
        height: dim(vals[17], "height")?,
        near_clip: vals[18],
    };
    cam.validate()?;
    Ok(cam)
}

pub fn write_camera(cam: &CameraModel) -> String {
    let r = &cam.rotation;
    let t = &cam.translation;
    let mut out = String::from("gscam v1\n");
    for i in 0..3 {
        writeln!(out, "{} {} {}", r[(i, 0)], r[(i, 1)], r[(i, 2)]).unwrap();
    }
    writeln!(out, "{} {} {}", t.x, t.y, t.z).unwrap();
    writeln!(
        out,
        "{} {} {} {} {} {} {}",
        cam.fx, cam.fy, cam.cx, cam.cy, cam.width, cam.height, cam.near_clip
    )
    .unwrap();
    out
}

pub fn load_camera(path: impl AsRef<Path>) -> Result<CameraModel> {
    let path = path.as_ref();
    parse_camera(&fs::read_to_string(path)?, path)
}

pub fn save_camera(cam: &CameraModel, path: impl AsRef<Path>) -> Result<()> {
    cam.validate()?;
    fs::write(path, write_camera(cam))?;
    Ok(())
}
