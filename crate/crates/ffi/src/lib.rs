//! C interface to `splat-core`.
//!
//! Objects are opaque handles created by `*_load`/`*_new`/`splat_render`
//! and released with the matching `*_free`. Every fallible call returns a
//! `SPLAT_*` status code; on failure `splat_last_error_message` describes
//! the problem for the calling thread.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use splat_core::diagnostics::{psnr, ssim};
use splat_core::raster::{render, RenderConfig, SampleSpec};
use splat_core::scene::{load_camera, load_scene, CameraModel, Scene};
use splat_core::{Error, ImageBuffer};

pub const SPLAT_OK: i32 = 0;
pub const SPLAT_ERR_NULL: i32 = 1;
pub const SPLAT_ERR_UTF8: i32 = 2;
pub const SPLAT_ERR_IO: i32 = 3;
pub const SPLAT_ERR_PARSE: i32 = 4;
pub const SPLAT_ERR_INVALID: i32 = 5;
pub const SPLAT_ERR_SHAPE: i32 = 6;
pub const SPLAT_ERR_PANIC: i32 = 7;

/// Gaussian scene.
pub struct SplatScene(Scene);

/// Pinhole camera.
pub struct SplatCamera(CameraModel);

/// Row-major RGB image with `f64` channels in `[0, 1]`.
pub struct SplatImage(ImageBuffer);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn code_of(e: &Error) -> i32 {
    match e {
        Error::Io(_) => SPLAT_ERR_IO,
        Error::Parse { .. } => SPLAT_ERR_PARSE,
        Error::Shape(_) | Error::ImageTooSmall(_) | Error::Topology { .. } => SPLAT_ERR_SHAPE,
        _ => SPLAT_ERR_INVALID,
    }
}

struct Failure(i32, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(code_of(&e), e.to_string())
    }
}

/// Runs `f`, records any failure and converts it to a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SPLAT_OK
        }
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            SPLAT_ERR_PANIC
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(SPLAT_ERR_NULL, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(SPLAT_ERR_UTF8, "path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message for the last failed call on this thread; empty after success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn splat_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub unsafe extern "C" fn splat_scene_load(path: *const c_char, out: *mut *mut SplatScene) -> i32 {
    guard(|| {
        let scene = load_scene(path_arg(path)?)?;
        store(out, SplatScene(scene))
    })
}

/// Number of Gaussians, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn splat_scene_len(scene: *const SplatScene) -> usize {
    scene.as_ref().map_or(0, |s| s.0.len())
}

#[no_mangle]
pub unsafe extern "C" fn splat_scene_free(scene: *mut SplatScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

#[no_mangle]
pub unsafe extern "C" fn splat_camera_load(path: *const c_char, out: *mut *mut SplatCamera) -> i32 {
    guard(|| {
        let cam = load_camera(path_arg(path)?)?;
        store(out, SplatCamera(cam))
    })
}

/// Camera at the origin looking down +z with the principal point centered.
#[no_mangle]
pub unsafe extern "C" fn splat_camera_new_centered(
    width: usize,
    height: usize,
    focal: f64,
    out: *mut *mut SplatCamera,
) -> i32 {
    guard(|| {
        let cam = CameraModel::centered(width, height, focal);
        cam.validate()?;
        store(out, SplatCamera(cam))
    })
}

#[no_mangle]
pub unsafe extern "C" fn splat_camera_free(camera: *mut SplatCamera) {
    if !camera.is_null() {
        drop(Box::from_raw(camera));
    }
}

/// Renders with `samples` subsamples per pixel (1, 2, 4 or a perfect square).
#[no_mangle]
pub unsafe extern "C" fn splat_render(
    scene: *const SplatScene,
    camera: *const SplatCamera,
    samples: usize,
    out: *mut *mut SplatImage,
) -> i32 {
    guard(|| {
        let scene = deref(scene, "scene")?;
        let camera = deref(camera, "camera")?;
        let spec = SampleSpec::for_count(samples)?;
        let img = render(&scene.0, &camera.0, &RenderConfig::default(), &spec)?;
        store(out, SplatImage(img))
    })
}

#[no_mangle]
pub unsafe extern "C" fn splat_image_read_ppm(path: *const c_char, out: *mut *mut SplatImage) -> i32 {
    guard(|| {
        let img = ImageBuffer::read_ppm(path_arg(path)?)?;
        store(out, SplatImage(img))
    })
}

#[no_mangle]
pub unsafe extern "C" fn splat_image_write_ppm(image: *const SplatImage, path: *const c_char) -> i32 {
    guard(|| {
        let img = deref(image, "image")?;
        img.0.write_ppm(path_arg(path)?)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn splat_image_width(image: *const SplatImage) -> usize {
    image.as_ref().map_or(0, |i| i.0.width())
}

#[no_mangle]
pub unsafe extern "C" fn splat_image_height(image: *const SplatImage) -> usize {
    image.as_ref().map_or(0, |i| i.0.height())
}

/// Pointer to `height * width * 3` values, owned by the image.
#[no_mangle]
pub unsafe extern "C" fn splat_image_data(image: *const SplatImage) -> *const f64 {
    image.as_ref().map_or(ptr::null(), |i| i.0.data().as_ptr())
}

#[no_mangle]
pub unsafe extern "C" fn splat_image_free(image: *mut SplatImage) {
    if !image.is_null() {
        drop(Box::from_raw(image));
    }
}

/// PSNR in dB (99 for identical images).
#[no_mangle]
pub unsafe extern "C" fn splat_psnr(a: *const SplatImage, b: *const SplatImage, out: *mut f64) -> i32 {
    guard(|| {
        let v = psnr(&deref(a, "image a")?.0, &deref(b, "image b")?.0)?;
        *out.as_mut().ok_or_else(|| null("output pointer"))? = v;
        Ok(())
    })
}

/// Mean SSIM over channels.
#[no_mangle]
pub unsafe extern "C" fn splat_ssim(a: *const SplatImage, b: *const SplatImage, out: *mut f64) -> i32 {
    guard(|| {
        let v = ssim(&deref(a, "image a")?.0, &deref(b, "image b")?.0)?;
        *out.as_mut().ok_or_else(|| null("output pointer"))? = v;
        Ok(())
    })
}
