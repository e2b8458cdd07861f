use nalgebra::Vector3;
use splat_core::diagnostics::psnr;
use splat_core::raster::render;
use splat_core::scene::{load_scene, save_scene};
use splat_core::train::{initial_scene, make_synthetic_target, train, Arm, LearningRates, TargetKind, TrainConfig};

#[test]
fn training_improves_fit_and_checkpoints_reload() {
    let target = make_synthetic_target(TargetKind::GaussianBlobs, 24, 24, 2).unwrap();
    let cam = target.camera.unwrap();
    let views = vec![(cam.clone(), target.image.clone())];
    let scene0 = initial_scene(60, Vector3::new(-0.6, -0.6, 2.8), Vector3::new(0.6, 0.6, 3.2), 1, [0.0; 3]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        iterations: 150,
        rates: LearningRates::default().scaled(4.0),
        arm: Arm::Full,
        checkpoint_every: Some(50),
        checkpoint_dir: Some(dir.path().to_path_buf()),
        ..TrainConfig::default()
    };
    let outcome = train(&scene0, &views, &cfg).unwrap().into_result().unwrap();
    let first = outcome.log.records.first().unwrap().psnr;
    assert!(outcome.best_psnr > first + 1.0, "{first} -> {}", outcome.best_psnr);
    let best = outcome.log.best_so_far();
    assert!(best.windows(2).all(|w| w[1] >= w[0]));

    let reloaded = load_scene(dir.path().join("full_150.gsscene")).unwrap();
    let spec = cfg.sample_spec();
    let a = render(&reloaded, &cam, &cfg.render, &spec).unwrap();
    let b = render(&outcome.final_scene, &cam, &cfg.render, &spec).unwrap();
    assert!(a.max_abs_diff(&b) < 1e-9);

    let path = dir.path().join("best.gsscene");
    save_scene(&outcome.scene, &path).unwrap();
    let best_img = render(&load_scene(&path).unwrap(), &cam, &cfg.render, &spec).unwrap();
    assert!((psnr(&best_img, &target.image).unwrap() - outcome.best_psnr).abs() < 1e-6);
}
