//! C ABI over the patch renderer, compositor and toy detector.
//!
//! Objects cross the boundary as opaque handles created by `tp_*_new` or
//! `tp_*_from_*` and released by the matching `tp_*_free`. Every fallible
//! call returns a [`TpStatus`]; on failure, [`tp_last_error`] describes the
//! most recent error on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use thermopatch::cli::render_on_white;
use thermopatch::imaging::{decode_pgm, encode_pgm, BBox, GrayImage};
use thermopatch::oracle::{Oracle, ToyOracle};
use thermopatch::patchgen::{compose_at, patch_side, rasterize_patch, validate_theta, PatchTheta};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TpStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Parse = 3,
    Infeasible = 4,
    Patch = 5,
    Oracle = 6,
    BufferTooSmall = 7,
    Panic = 99,
}

/// Patch parameters.
pub struct TpTheta(PatchTheta);

/// Grayscale image with intensities in `[0, 1]`.
pub struct TpImage(GrayImage);

/// In-process toy detector.
pub struct TpToyOracle(ToyOracle);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

type FfiResult = Result<(), (TpStatus, String)>;

fn fail<T>(status: TpStatus, msg: impl std::fmt::Display) -> Result<T, (TpStatus, String)> {
    Err((status, msg.to_string()))
}

fn guard(f: impl FnOnce() -> FfiResult) -> TpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            TpStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            TpStatus::Panic
        }
    }
}

unsafe fn arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, (TpStatus, String)> {
    // SAFETY: caller guarantees `p` is null or a live handle.
    unsafe { p.as_ref() }.ok_or((TpStatus::NullArgument, format!("{name} is null")))
}

unsafe fn out_ptr<T>(p: *mut *mut T, name: &str) -> Result<(), (TpStatus, String)> {
    if p.is_null() {
        return fail(TpStatus::NullArgument, format!("{name} is null"));
    }
    // SAFETY: non-null out pointer supplied by the caller.
    unsafe { *p = ptr::null_mut() };
    Ok(())
}

unsafe fn c_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, (TpStatus, String)> {
    if p.is_null() {
        return fail(TpStatus::NullArgument, format!("{name} is null"));
    }
    // SAFETY: non-null, NUL-terminated per the API contract.
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| (TpStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn tp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a patch document and checks feasibility.
///
/// # Safety
/// `json` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tp_theta_from_json(json: *const c_char, out: *mut *mut TpTheta) -> TpStatus {
    guard(|| {
        unsafe { out_ptr(out, "out")? };
        let text = unsafe { c_str(json, "json")? };
        let theta = PatchTheta::from_json(text).map_err(|e| (TpStatus::Parse, e.to_string()))?;
        let violations = validate_theta(&theta);
        if let Some(v) = violations.first() {
            return fail(TpStatus::Infeasible, format!("{} violation(s), first: {v}", violations.len()));
        }
        unsafe { *out = Box::into_raw(Box::new(TpTheta(theta))) };
        Ok(())
    })
}

/// Serializes `theta` into a newly allocated string; release it with
/// [`tp_string_free`].
///
/// # Safety
/// `theta` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tp_theta_to_json(theta: *const TpTheta, out: *mut *mut c_char) -> TpStatus {
    guard(|| {
        unsafe { out_ptr(out, "out")? };
        let theta = unsafe { arg(theta, "theta")? };
        let s = CString::new(theta.0.to_json()).map_err(|e| (TpStatus::Parse, e.to_string()))?;
        unsafe { *out = s.into_raw() };
        Ok(())
    })
}

/// # Safety
/// `theta` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tp_theta_free(theta: *mut TpTheta) {
    if !theta.is_null() {
        drop(unsafe { Box::from_raw(theta) });
    }
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn tp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Copies `width * height` row-major intensities; values are clamped to
/// `[0, 1]`.
///
/// # Safety
/// `pixels` must point at `width * height` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tp_image_new(width: usize, height: usize, pixels: *const f64, out: *mut *mut TpImage) -> TpStatus {
    guard(|| {
        unsafe { out_ptr(out, "out")? };
        if pixels.is_null() {
            return fail(TpStatus::NullArgument, "pixels is null");
        }
        let n = width
            .checked_mul(height)
            .ok_or((TpStatus::InvalidArgument, "image too large".to_string()))?;
        // SAFETY: caller supplies `n` readable doubles.
        let data = unsafe { std::slice::from_raw_parts(pixels, n) }.to_vec();
        let img = GrayImage::from_pixels(width, height, data).map_err(|e| (TpStatus::InvalidArgument, e.to_string()))?;
        unsafe { *out = Box::into_raw(Box::new(TpImage(img))) };
        Ok(())
    })
}

/// Decodes a binary or ASCII PGM held in memory.
///
/// # Safety
/// `data` must point at `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tp_image_from_pgm(data: *const u8, len: usize, out: *mut *mut TpImage) -> TpStatus {
    guard(|| {
        unsafe { out_ptr(out, "out")? };
        if data.is_null() {
            return fail(TpStatus::NullArgument, "data is null");
        }
        let bytes = unsafe { std::slice::from_raw_parts(data, len) };
        let img = decode_pgm(bytes).map_err(|e| (TpStatus::Parse, e.to_string()))?;
        unsafe { *out = Box::into_raw(Box::new(TpImage(img))) };
        Ok(())
    })
}

/// Width of `image`, 0 for null.
///
/// # Safety
/// `image` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tp_image_width(image: *const TpImage) -> usize {
    unsafe { image.as_ref() }.map_or(0, |i| i.0.width())
}

/// Height of `image`, 0 for null.
///
/// # Safety
/// `image` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tp_image_height(image: *const TpImage) -> usize {
    unsafe { image.as_ref() }.map_or(0, |i| i.0.height())
}

/// Copies the row-major intensities into `out`, which must hold at least
/// `width * height` doubles.
///
/// # Safety
/// `image` must be a live handle; `out` must point at `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn tp_image_pixels(image: *const TpImage, out: *mut f64, len: usize) -> TpStatus {
    guard(|| {
        let image = unsafe { arg(image, "image")? };
        if out.is_null() {
            return fail(TpStatus::NullArgument, "out is null");
        }
        let px = image.0.pixels();
        if len < px.len() {
            return fail(TpStatus::BufferTooSmall, format!("need {} doubles, got {len}", px.len()));
        }
        unsafe { std::slice::from_raw_parts_mut(out, px.len()) }.copy_from_slice(px);
        Ok(())
    })
}

/// Encodes `image` as binary PGM into `out`. `written` receives the encoded
/// size even when the buffer is too small, so a null `out` with `len` 0
/// queries the size.
///
/// # Safety
/// `image` must be a live handle; `out` must be null or point at `len`
/// writable bytes; `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tp_image_to_pgm(image: *const TpImage, out: *mut u8, len: usize, written: *mut usize) -> TpStatus {
    guard(|| {
        let image = unsafe { arg(image, "image")? };
        if written.is_null() {
            return fail(TpStatus::NullArgument, "written is null");
        }
        let bytes = encode_pgm(&image.0);
        unsafe { *written = bytes.len() };
        if out.is_null() || len < bytes.len() {
            return fail(TpStatus::BufferTooSmall, format!("need {} bytes, got {len}", bytes.len()));
        }
        unsafe { std::slice::from_raw_parts_mut(out, bytes.len()) }.copy_from_slice(&bytes);
        Ok(())
    })
}

/// # Safety
/// `image` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tp_image_free(image: *mut TpImage) {
    if !image.is_null() {
        drop(unsafe { Box::from_raw(image) });
    }
}

/// The patch alone on a white `size x size` canvas.
///
/// # Safety
/// `theta` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tp_render_patch(theta: *const TpTheta, size: usize, out: *mut *mut TpImage) -> TpStatus {
    guard(|| {
        unsafe { out_ptr(out, "out")? };
        let theta = unsafe { arg(theta, "theta")? };
        let img = render_on_white(&theta.0, size).map_err(|e| (TpStatus::Patch, e.to_string()))?;
        unsafe { *out = Box::into_raw(Box::new(TpImage(img))) };
        Ok(())
    })
}

/// Fuses the patch into `scene` on the target box `{x, y, w, h}`, centred
/// horizontally and at `anchor * h` below the box top.
///
/// # Safety
/// `scene` and `theta` must be live handles; `bbox` must point at four
/// doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tp_compose(
    scene: *const TpImage,
    bbox: *const f64,
    theta: *const TpTheta,
    anchor: f64,
    out: *mut *mut TpImage,
) -> TpStatus {
    guard(|| {
        unsafe { out_ptr(out, "out")? };
        let scene = unsafe { arg(scene, "scene")? };
        let theta = unsafe { arg(theta, "theta")? };
        if bbox.is_null() {
            return fail(TpStatus::NullArgument, "bbox is null");
        }
        let b = BBox::from_array(unsafe { *bbox.cast::<[f64; 4]>() });
        if !b.is_valid() || !(0.0..=1.0).contains(&anchor) {
            return fail(TpStatus::InvalidArgument, format!("bad box {b:?} or anchor {anchor}"));
        }
        let raster = rasterize_patch(&theta.0, patch_side(theta.0.width_frac, b.h)).map_err(|e| (TpStatus::Patch, e.to_string()))?;
        let img = compose_at(&scene.0, &b, &theta.0, &raster, anchor).map_err(|e| (TpStatus::Patch, e.to_string()))?;
        unsafe { *out = Box::into_raw(Box::new(TpImage(img))) };
        Ok(())
    })
}

/// Toy detector with the built-in template and default calibration.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tp_toy_oracle_new(out: *mut *mut TpToyOracle) -> TpStatus {
    guard(|| {
        unsafe { out_ptr(out, "out")? };
        unsafe { *out = Box::into_raw(Box::new(TpToyOracle(ToyOracle::default()))) };
        Ok(())
    })
}

/// # Safety
/// `oracle` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tp_toy_oracle_free(oracle: *mut TpToyOracle) {
    if !oracle.is_null() {
        drop(unsafe { Box::from_raw(oracle) });
    }
}

/// Scores `n_boxes` boxes given as consecutive `{x, y, w, h}` quadruples,
/// writing one objectness in `[0, 1]` per box.
///
/// # Safety
/// Handles must be live; `boxes` must hold `4 * n_boxes` doubles and
/// `scores` `n_boxes` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn tp_toy_score(
    oracle: *const TpToyOracle,
    image: *const TpImage,
    boxes: *const f64,
    n_boxes: usize,
    scores: *mut f64,
) -> TpStatus {
    guard(|| {
        let oracle = unsafe { arg(oracle, "oracle")? };
        let image = unsafe { arg(image, "image")? };
        if n_boxes == 0 {
            return Ok(());
        }
        if boxes.is_null() || scores.is_null() {
            return fail(TpStatus::NullArgument, "boxes or scores is null");
        }
        let flat = unsafe { std::slice::from_raw_parts(boxes, 4 * n_boxes) };
        let list: Vec<BBox> = flat.chunks_exact(4).map(|c| BBox::new(c[0], c[1], c[2], c[3])).collect();
        let s = oracle.0.score(&image.0, &list).map_err(|e| (TpStatus::Oracle, e.to_string()))?;
        unsafe { std::slice::from_raw_parts_mut(scores, n_boxes) }.copy_from_slice(&s);
        Ok(())
    })
}
