use std::path::Path;
use std::process::{Command, Output};

use splat_core::ImageBuffer;

fn splat(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_splat"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("run splat")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn bench(dir: &Path) {
    let o = splat(&["make-bench", "--kind", "edge_halfplane", "--size", "48", "--out-dir", "b"], dir);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn more_samples_render_closer_to_reference() {
    let dir = tempfile::tempdir().unwrap();
    bench(dir.path());
    let mut l1 = Vec::new();
    for n in ["1", "4"] {
        let out = format!("r{n}.ppm");
        let o = splat(
            &["render", "--scene", "b/edge_halfplane.gsscene", "--camera", "b/edge_halfplane.gscam", "--samples", n, "--out", &out],
            dir.path(),
        );
        assert_eq!(o.status.code(), Some(0));
        let img = ImageBuffer::read_ppm(dir.path().join(&out)).unwrap();
        let reference = ImageBuffer::read_ppm(dir.path().join("b/edge_halfplane_reference.ppm")).unwrap();
        l1.push(img.mean_abs_diff(&reference));
    }
    assert!(l1[1] < l1[0], "{l1:?}");
}

#[test]
fn metrics_of_identical_images() {
    let dir = tempfile::tempdir().unwrap();
    bench(dir.path());
    let a = "b/edge_halfplane_reference.ppm";
    let o = splat(&["metrics", a, a], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[2].parse::<f64>().unwrap(), 99.0);
    assert_eq!(row[3].parse::<f64>().unwrap(), 1.0);

    let o = splat(&["metrics", a], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn gradcheck_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = splat(&["gradcheck", "--seed", "7"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("PASS"));
    let o = splat(&["gradcheck", "--seed", "7", "--tolerance", "1e-30"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn usage_and_runtime_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = splat(&["frobnicate"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(splat(&["render", "--bogus"], dir.path()).status.code(), Some(1));
    assert_eq!(splat(&["--help"], dir.path()).status.code(), Some(0));
    let o = splat(&["render", "--scene", "none.gsscene", "--camera", "none.gscam", "--out", "x.ppm"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn diff_and_wavelet_write_images() {
    let dir = tempfile::tempdir().unwrap();
    bench(dir.path());
    let a = "b/edge_halfplane_reference.ppm";
    assert_eq!(splat(&["diff", a, a, "--out", "d.ppm"], dir.path()).status.code(), Some(0));
    let d = ImageBuffer::read_ppm(dir.path().join("d.ppm")).unwrap();
    assert!(d.data().iter().all(|&v| v == 1.0));

    assert_eq!(splat(&["wavelet", a, "--out-dir", "w", "--stem", "ref"], dir.path()).status.code(), Some(0));
    for band in ["LL", "LH", "HL", "HH"] {
        let img = ImageBuffer::read_ppm(dir.path().join(format!("w/ref_{band}.ppm"))).unwrap();
        assert_eq!((img.height(), img.width()), (24, 24));
    }
    let csv = std::fs::read_to_string(dir.path().join("w/ref_coefficients.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4 * 24 * 24 * 3);
}

#[test]
fn deterministic_training_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    bench(dir.path());
    let run = |out: &str, threads: &str| {
        let o = splat(
            &[
                "train",
                "--camera",
                "b/edge_halfplane.gscam",
                "--target",
                "b/edge_halfplane_reference.ppm",
                "--gaussians",
                "60",
                "--iterations",
                "25",
                "--seed",
                "3",
                "--deterministic",
                "--checkpoint-every",
                "10",
                "--threads",
                threads,
                "--out-dir",
                out,
            ],
            dir.path(),
        );
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    };
    run("t1", "1");
    run("t2", "2");
    for f in ["log.csv", "best.gsscene", "final.gsscene", "checkpoints/full_10.gsscene", "checkpoints/full_25.gsscene"] {
        let a = std::fs::read(dir.path().join("t1").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("t2").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    let log = std::fs::read_to_string(dir.path().join("t1/log.csv")).unwrap();
    assert_eq!(log.lines().next().unwrap(), "iteration,weighted_l1,dssim,grad,composite,psnr,seconds");
}

#[test]
fn ablate_smoke_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = splat(&["ablate", "--bench", "smoke", "--iterations", "5", "--out", "a.csv"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("constraints_only"));
    let csv = std::fs::read_to_string(dir.path().join("a.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert_eq!(splat(&["ablate", "--bench", "nope"], dir.path()).status.code(), Some(2));
}
