use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use nalgebra::Vector3;
use splat_core::raster::{render, RenderConfig, SampleSpec};
use splat_core::scene::{save_camera, save_scene, CameraModel, Gaussian3D, Scene, IDENTITY_QUAT};
use splat_ffi::*;

fn c_path(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn fixture(dir: &Path) -> (Scene, CameraModel) {
    let scene = Scene::new(
        vec![
            Gaussian3D::from_natural(Vector3::new(0.0, 0.0, 3.0), IDENTITY_QUAT, Vector3::new(0.2, 0.1, 0.1), [0.9, 0.2, 0.1], 0.8),
            Gaussian3D::from_natural(Vector3::new(0.2, -0.1, 3.5), IDENTITY_QUAT, Vector3::new(0.1, 0.3, 0.1), [0.1, 0.5, 0.9], 0.6),
        ],
        [0.0; 3],
    );
    let cam = CameraModel::centered(20, 16, 25.0);
    save_scene(&scene, dir.join("s.gsscene")).unwrap();
    save_camera(&cam, dir.join("c.gscam")).unwrap();
    (scene, cam)
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(splat_last_error_message()).to_string_lossy().into_owned() }
}

#[test]
fn render_matches_core_and_round_trips_ppm() {
    let dir = tempfile::tempdir().unwrap();
    let (scene, cam) = fixture(dir.path());
    unsafe {
        let mut s = ptr::null_mut();
        let mut c = ptr::null_mut();
        assert_eq!(splat_scene_load(c_path(&dir.path().join("s.gsscene")).as_ptr(), &mut s), SPLAT_OK);
        assert_eq!(splat_camera_load(c_path(&dir.path().join("c.gscam")).as_ptr(), &mut c), SPLAT_OK);
        assert_eq!(splat_scene_len(s), 2);

        let mut img = ptr::null_mut();
        assert_eq!(splat_render(s, c, 4, &mut img), SPLAT_OK);
        let (h, w) = (splat_image_height(img), splat_image_width(img));
        assert_eq!((h, w), (16, 20));
        let data = std::slice::from_raw_parts(splat_image_data(img), h * w * 3);
        let want = render(&scene, &cam, &RenderConfig::default(), &SampleSpec::for_count(4).unwrap()).unwrap();
        assert_eq!(data, want.data());

        let out = dir.path().join("r.ppm");
        assert_eq!(splat_image_write_ppm(img, c_path(&out).as_ptr()), SPLAT_OK);
        let mut back = ptr::null_mut();
        assert_eq!(splat_image_read_ppm(c_path(&out).as_ptr(), &mut back), SPLAT_OK);
        let mut p = 0.0;
        assert_eq!(splat_psnr(back, back, &mut p), SPLAT_OK);
        assert_eq!(p, 99.0);
        let mut q = 0.0;
        assert_eq!(splat_ssim(back, back, &mut q), SPLAT_OK);
        assert_eq!(q, 1.0);
        // 8-bit quantization keeps the error under half a level
        assert_eq!(splat_psnr(img, back, &mut p), SPLAT_OK);
        assert!(p > 20.0 * (2.0 * 255.0f64).log10() - 1e-9);

        splat_image_free(back);
        splat_image_free(img);
        splat_camera_free(c);
        splat_scene_free(s);
    }
}

#[test]
fn failures_set_codes_and_messages() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(splat_scene_load(c_path(&dir.path().join("missing")).as_ptr(), &mut s), SPLAT_ERR_IO);
        assert!(s.is_null());
        assert!(!last_error().is_empty());

        std::fs::write(dir.path().join("bad.gsscene"), "gsscene v2\n").unwrap();
        assert_eq!(splat_scene_load(c_path(&dir.path().join("bad.gsscene")).as_ptr(), &mut s), SPLAT_ERR_PARSE);
        assert!(last_error().contains("bad.gsscene"));

        assert_eq!(splat_scene_load(c_path(&dir.path().join("s.gsscene")).as_ptr(), &mut s), SPLAT_OK);
        let mut c = ptr::null_mut();
        assert_eq!(splat_camera_new_centered(8, 8, 10.0, &mut c), SPLAT_OK);
        let mut img = ptr::null_mut();
        assert_eq!(splat_render(s, c, 3, &mut img), SPLAT_ERR_INVALID);
        assert!(img.is_null());
        assert_eq!(splat_render(ptr::null(), c, 1, &mut img), SPLAT_ERR_NULL);

        let mut a = ptr::null_mut();
        let mut b = ptr::null_mut();
        assert_eq!(splat_render(s, c, 1, &mut a), SPLAT_OK);
        let mut c2 = ptr::null_mut();
        assert_eq!(splat_camera_new_centered(9, 8, 10.0, &mut c2), SPLAT_OK);
        assert_eq!(splat_render(s, c2, 1, &mut b), SPLAT_OK);
        let mut p = 0.0;
        assert_eq!(splat_psnr(a, b, &mut p), SPLAT_ERR_SHAPE);

        splat_image_free(a);
        splat_image_free(b);
        splat_camera_free(c);
        splat_camera_free(c2);
        splat_scene_free(s);
    }
}

#[test]
fn header_declares_every_export_and_compiles() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(root.join("include/splat_ffi.h")).unwrap();
    let src = std::fs::read_to_string(root.join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 15);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    for handle in ["SplatScene", "SplatCamera", "SplatImage"] {
        assert!(header.contains(&format!("typedef struct {handle} {handle};")));
    }

    let Ok(status) = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(root.join("include/splat_ffi.h"))
        .status()
    else {
        eprintln!("no C compiler; skipping header compile");
        return;
    };
    assert!(status.success());
}
