//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs with a custom harness so the summary is printed even when
//! `cargo test` captures output. Any failure makes the process exit 1.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splat_core::autodiff::{default_fixture, grad_check, GradCheckOptions};
use splat_core::diagnostics::{haar_dwt, haar_idwt};
use splat_core::loss::{dssim, gdc_loss, pixel_error, weight_map, weighted_l1, Objective, WeightMap};
use splat_core::raster::{render, render_single_sample, CompositingMode, RenderConfig, SampleSpec};
use splat_core::scene::{pack_params, CameraModel, Gaussian3D, Scene, IDENTITY_QUAT};
use splat_core::train::{
    aliasing_scene, benchmark, make_synthetic_target, run_ablation, train, AblationOverrides, Arm, TargetKind,
    TrainConfig,
};
use splat_core::ImageBuffer;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn gradient_correctness() -> Outcome {
    let (scene, cam, gt) = default_fixture(7);
    let report = ok(grad_check(
        &scene,
        &cam,
        &gt,
        &RenderConfig::default(),
        &SampleSpec::rotated_grid4(),
        &Objective::default(),
        &GradCheckOptions::default(),
    ))?;
    let worst = report
        .classes
        .iter()
        .map(|c| format!("{}={:.1e}", c.field.name(), c.max_rel_err))
        .collect::<Vec<_>>()
        .join(" ");
    check(report.passed && report.max_rel_err() < 1e-4, || format!("{worst}\n{}", report.table()))?;
    Ok(worst)
}

fn degeneracy_fixtures() -> Vec<(&'static str, Scene, CameraModel)> {
    let (fixture, cam, _) = default_fixture(7);
    let blobs = make_synthetic_target(TargetKind::GaussianBlobs, 32, 40, 3).unwrap();
    let (edge, edge_cam) = aliasing_scene(TargetKind::EdgeHalfplane, 48, 7).unwrap();
    vec![
        ("default_fixture", fixture, cam),
        ("gaussian_blobs", blobs.scene.unwrap(), blobs.camera.unwrap()),
        ("edge_halfplane", edge, edge_cam),
    ]
}

fn msaa_degeneracy() -> Outcome {
    let mut done = Vec::new();
    for (name, scene, cam) in degeneracy_fixtures() {
        for mode in [CompositingMode::Normalized, CompositingMode::FrontToBack] {
            let cfg = RenderConfig {
                mode,
                ..RenderConfig::default()
            };
            let a = ok(render(&scene, &cam, &cfg, &ok(SampleSpec::new(vec![[0.0, 0.0]]))?))?;
            let b = ok(render_single_sample(&scene, &cam, &cfg))?;
            let same = a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits());
            check(same, || format!("{name} ({mode:?}) differs, max {:e}", a.max_abs_diff(&b)))?;
        }
        done.push(name);
    }
    Ok(format!("bit-identical on {}", done.join(", ")))
}

fn anti_aliasing() -> Outcome {
    let mut parts = Vec::new();
    for kind in [TargetKind::EdgeHalfplane, TargetKind::Checkerboard] {
        let (scene, cam) = ok(aliasing_scene(kind, 64, 7))?;
        let cfg = RenderConfig::default();
        let reference = ok(render(&scene, &cam, &cfg, &SampleSpec::grid(8)))?;
        let one = ok(render(&scene, &cam, &cfg, &SampleSpec::single()))?.mean_abs_diff(&reference);
        let four = ok(render(&scene, &cam, &cfg, &SampleSpec::rotated_grid4()))?.mean_abs_diff(&reference);
        let ratio = four / one;
        let detail = || format!("{}: L1 n=1 {one:.3e}, n=4 {four:.3e}, ratio {ratio:.3}", kind.name());
        check(ratio <= 0.9, detail)?;
        // measured ratios are 0.03 to 0.04; pinned regression bound
        check(ratio < 0.1, || format!("above pinned bound: {}", detail()))?;
        parts.push(format!("{} n4/n1={ratio:.3}", kind.name()));
    }
    Ok(parts.join(", "))
}

fn loss_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let img = ImageBuffer::from_fn(24, 20, |_, _| [rng.random(), rng.random(), rng.random()]);
    let same = img.clone();
    let w = ok(weight_map(&ok(pixel_error(&img, &same))?, 0.2, 1e-8))?;
    let values = [
        ("weighted_l1", ok(weighted_l1(&img, &same, &w))?),
        ("dssim", ok(dssim(&img, &same))?),
        ("gdc_loss", ok(gdc_loss(&img, &same))?),
    ];
    for (name, v) in values {
        check(v.abs() <= 1e-12, || format!("{name} of identical pair is {v:e}"))?;
    }

    let mut shifted = img.clone();
    for v in shifted.data_mut() {
        *v += 0.25;
    }
    let g = ok(gdc_loss(&shifted, &img))?;
    check(g.abs() <= 1e-12, || format!("gdc_loss of constant offset is {g:e}"))?;

    check(w.grid.values.iter().all(|&v| v == 0.2), || "weight map is not the floor for zero error".into())?;

    // 2×1 image, channel-0 errors 0.2 and 0.4, floor 0.5, ε negligible
    let gt = ImageBuffer::new(2, 1);
    let pred = ok(ImageBuffer::from_vec(2, 1, vec![0.2, 0.0, 0.0, 0.4, 0.0, 0.0]))?;
    let e = ok(pixel_error(&pred, &gt))?;
    let hand: WeightMap = ok(weight_map(&e, 0.5, 1e-300))?;
    check(hand.grid.values == [0.75, 1.0], || format!("hand weights {:?}", hand.grid.values))?;
    let lw = ok(weighted_l1(&pred, &gt, &hand))?;
    check(lw == 0.275, || format!("hand example L_w = {lw}"))?;
    Ok(format!("identities hold, hand L_w = {lw}"))
}

fn random_scene(rng: &mut ChaCha8Rng, count: usize) -> Scene {
    let gaussians = (0..count)
        .map(|_| {
            let q = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            Gaussian3D::from_natural(
                Vector3::new(rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6), rng.random_range(2.5..4.0)),
                q,
                Vector3::new(rng.random_range(0.03..0.2), rng.random_range(0.03..0.2), rng.random_range(0.03..0.2)),
                [rng.random_range(0.05..0.95), rng.random_range(0.05..0.95), rng.random_range(0.05..0.95)],
                rng.random_range(0.2..0.95),
            )
        })
        .collect();
    Scene::new(gaussians, [0.1, 0.2, 0.3])
}

fn compositing_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cam = CameraModel::centered(40, 32, 40.0);
    let cfg = RenderConfig {
        deterministic: true,
        ..RenderConfig::default()
    };
    let spec = SampleSpec::rotated_grid4();
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let scene = random_scene(&mut rng, 30);
        let base = ok(render(&scene, &cam, &cfg, &spec))?;
        let mut shuffled = scene.gaussians.clone();
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.random_range(0..=i));
        }
        let other = ok(render(&Scene::new(shuffled, scene.background), &cam, &cfg, &spec))?;
        worst = worst.max(base.max_abs_diff(&other));
    }
    check(worst < 1e-9, || format!("permutation changes image by {worst:e}"))?;

    let color = [0.8, 0.5, 0.35];
    let opacity = 0.9;
    let bg = [0.1, 0.2, 0.3];
    let single = Scene::new(
        vec![Gaussian3D::from_natural(Vector3::new(0.0, 0.0, 3.0), IDENTITY_QUAT, Vector3::new(0.1, 0.1, 0.1), color, opacity)],
        bg,
    );
    // one sample per pixel so that edge pixels do not average in background samples
    let img = ok(render(&single, &cam, &cfg, &SampleSpec::single()))?;
    // every covered sample has αw ≥ opacity·cutoff, so the relative error is at most ε/(that)
    let bound = cfg.denom_epsilon / (opacity * cfg.weight_cutoff);
    let (mut covered, mut empty) = (0, 0);
    for r in 0..img.height() {
        for c in 0..img.width() {
            let p = img.pixel(r, c);
            if p == bg {
                empty += 1;
                continue;
            }
            covered += 1;
            for ch in 0..3 {
                let rel = (p[ch] - color[ch]).abs() / color[ch];
                check(rel <= bound, || format!("pixel ({r},{c}) channel {ch} off by {rel:e}"))?;
            }
        }
    }
    check(covered > 0 && empty > 0, || format!("{covered} covered, {empty} empty pixels"))?;
    check(img.pixel(16, 20) != bg, || "center pixel not covered".into())?;

    for mode in [CompositingMode::Normalized, CompositingMode::FrontToBack] {
        let cfg = RenderConfig { mode, ..cfg };
        let img = ok(render(&single, &cam, &cfg, &spec))?;
        for (r, c) in [(0, 0), (0, 39), (31, 0), (31, 39)] {
            check(img.pixel(r, c) == bg, || format!("{mode:?}: corner ({r},{c}) is {:?}", img.pixel(r, c)))?;
        }
    }
    Ok(format!("permutation L∞ {worst:.1e}, {covered} covered pixels within {bound:.1e}"))
}

fn ablation_ordering() -> Outcome {
    let t = ok(run_ablation("checker_edge", &AblationOverrides::default()))?;
    let p = |arm| t.row(arm).map(|r| r.psnr).ok_or_else(|| format!("missing {arm:?} row"));
    let (base, msaa, cons, full) = (p(Arm::Baseline)?, p(Arm::MsaaOnly)?, p(Arm::ConstraintsOnly)?, p(Arm::Full)?);
    let summary = format!("baseline {base:.2} msaa_only {msaa:.2} constraints_only {cons:.2} full {full:.2} dB");
    check(full >= base + 0.2 && full >= msaa && full >= cons, || format!("ordering violated: {summary}"))?;
    // pinned regression bounds: measured full-baseline 1.80 dB and full-msaa_only 0.47 dB
    check(full - base >= 1.5 && full - msaa >= 0.3, || format!("below pinned margins: {summary}"))?;
    Ok(summary)
}

fn wavelet_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let h = 2 * rng.random_range(1..=24);
        let w = 2 * rng.random_range(1..=24);
        let img = ImageBuffer::from_fn(h, w, |_, _| [rng.random(), rng.random(), rng.random()]);
        let back = haar_idwt(&haar_dwt(&img));
        check(back.height() == h && back.width() == w, || "shape changed".into())?;
        worst = worst.max(back.max_abs_diff(&img));
    }
    check(worst < 1e-12, || format!("round trip L∞ {worst:e}"))?;
    Ok(format!("100 images, L∞ {worst:.1e}"))
}

fn training_run(threads: usize, dir: &std::path::Path) -> Result<(String, Vec<(String, Vec<u8>)>), String> {
    let data = ok(ok(benchmark("smoke"))?.build(7))?;
    let cfg = TrainConfig {
        iterations: 60,
        arm: Arm::Full,
        seed: 7,
        log_every: 5,
        checkpoint_every: Some(20),
        checkpoint_dir: Some(dir.to_path_buf()),
        render: RenderConfig {
            deterministic: true,
            ..RenderConfig::default()
        },
        ..TrainConfig::default()
    };
    let pool = ok(rayon::ThreadPoolBuilder::new().num_threads(threads).build())?;
    let outcome = ok(pool.install(|| train(&data.scene0, &data.train, &cfg)))?;
    let mut files = Vec::new();
    for entry in ok(std::fs::read_dir(dir))? {
        let path = ok(entry)?.path();
        files.push((path.file_name().unwrap().to_string_lossy().into_owned(), ok(std::fs::read(&path))?));
    }
    files.sort();
    Ok((outcome.log.to_csv(), files))
}

fn determinism() -> Outcome {
    let root = ok(tempfile::tempdir())?;
    let mut runs = Vec::new();
    for threads in [1, 2, 8] {
        for rep in 0..2 {
            let dir = root.path().join(format!("t{threads}_{rep}"));
            ok(std::fs::create_dir_all(&dir))?;
            runs.push((threads, training_run(threads, &dir)?));
        }
    }
    let (_, (log0, files0)) = &runs[0];
    check(files0.len() >= 3, || format!("only {} checkpoints", files0.len()))?;
    for (threads, (log, files)) in &runs[1..] {
        check(log == log0, || format!("log differs at {threads} threads"))?;
        check(files == files0, || format!("checkpoints differ at {threads} threads"))?;
    }
    Ok(format!("6 runs, {} log bytes and {} checkpoints identical", log0.len(), files0.len()))
}

fn fixed_point() -> Outcome {
    let blobs = ok(make_synthetic_target(TargetKind::GaussianBlobs, 32, 32, 4))?;
    let scene = blobs.scene.unwrap();
    let cam = blobs.camera.unwrap();
    let cfg = TrainConfig {
        iterations: 100,
        arm: Arm::Full,
        log_every: 1,
        ..TrainConfig::default()
    };
    let target = ok(render(&scene, &cam, &cfg.render, &cfg.sample_spec()))?;
    let outcome = ok(train(&scene, &[(cam, target)], &cfg))?;
    let worst_loss = outcome.log.records.iter().map(|r| r.loss.composite).fold(0.0, f64::max);
    let before = pack_params(&scene);
    let after = pack_params(&outcome.final_scene);
    let drift = before
        .as_slice()
        .iter()
        .zip(after.as_slice())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    check(outcome.log.records.len() == 101, || "missing log records".into())?;
    check(worst_loss < 1e-6 && drift < 1e-3, || format!("loss {worst_loss:e}, drift {drift:e}"))?;
    Ok(format!("max loss {worst_loss:.1e}, drift {drift:.1e}"))
}

struct Criterion {
    id: usize,
    name: &'static str,
    limit: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "gradient correctness", limit: Duration::from_secs(60), run: gradient_correctness },
        Criterion { id: 2, name: "msaa degeneracy", limit: Duration::from_secs(5), run: msaa_degeneracy },
        Criterion { id: 3, name: "anti-aliasing efficacy", limit: Duration::from_secs(30), run: anti_aliasing },
        Criterion { id: 4, name: "loss identities", limit: Duration::from_secs(5), run: loss_identities },
        Criterion { id: 5, name: "compositing invariants", limit: Duration::from_secs(5), run: compositing_invariants },
        Criterion { id: 6, name: "ablation ordering", limit: Duration::from_secs(900), run: ablation_ordering },
        Criterion { id: 7, name: "wavelet round trip", limit: Duration::from_secs(5), run: wavelet_round_trip },
        Criterion { id: 8, name: "determinism", limit: Duration::from_secs(600), run: determinism },
        Criterion { id: 9, name: "fixed-point training", limit: Duration::from_secs(120), run: fixed_point },
    ];
    // libtest-style filter: `cargo test --test acceptance -- 6` runs criterion 6 only
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for c in &criteria {
        if !filters.is_empty() && !filters.iter().any(|f| c.id.to_string() == *f || c.name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panic: {}", msg.unwrap_or_default()))
        });
        let elapsed = start.elapsed();
        let result = match result {
            Ok(detail) if elapsed > c.limit => Err(format!("{detail}; exceeded {}s limit", c.limit.as_secs())),
            r => r,
        };
        let secs = elapsed.as_secs_f64();
        match result {
            Ok(detail) => println!("PASS criterion {} {} ({secs:.1}s): {detail}", c.id, c.name),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {} {} ({secs:.1}s): {why}", c.id, c.name);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
