//! C ABI over `nightseg`.
//!
//! Images and masks are opaque heap handles that the caller releases with the
//! matching `*_free` function. Every fallible call returns an [`NsStatus`];
//! on failure, [`ns_last_error_message`] describes the most recent error on
//! the calling thread. No function unwinds across the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nightseg::evaluation::evaluate_masks;
use nightseg::{
    load_image, load_mask, save_mask, segment_fixed_gray, segment_otsu_rb, segment_weighted, ChannelId, CloudMask,
    Error, RgbImage, SlicParams, Weighting,
};

/// Opaque RGB image.
pub struct NsImage(RgbImage);

/// Opaque sky/cloud mask.
pub struct NsMask(CloudMask);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    FileNotFound = 3,
    UnsupportedFormat = 4,
    CorruptImage = 5,
    AmbiguousMask = 6,
    Io = 7,
    DimensionMismatch = 8,
    DegenerateInput = 9,
    EmptyInput = 10,
    InvalidModel = 11,
    ViewBelowHorizon = 12,
    BufferTooSmall = 13,
    Panic = 99,
}

impl From<&Error> for NsStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::FileNotFound(_) => NsStatus::FileNotFound,
            Error::UnsupportedFormat(_) => NsStatus::UnsupportedFormat,
            Error::CorruptImage { .. } => NsStatus::CorruptImage,
            Error::AmbiguousMask { .. } => NsStatus::AmbiguousMask,
            Error::Io { .. } => NsStatus::Io,
            Error::InvalidRaster(_) | Error::InvalidParams(_) => NsStatus::InvalidArgument,
            Error::DimensionMismatch { .. } => NsStatus::DimensionMismatch,
            Error::DegenerateInput(_) | Error::SingleClassGroundTruth => NsStatus::DegenerateInput,
            Error::EmptyMask | Error::NoValidImages | Error::MissingPair(_) | Error::EmptyDataset => {
                NsStatus::EmptyInput
            }
            Error::InvalidModel(_) => NsStatus::InvalidModel,
            Error::ViewBelowHorizon => NsStatus::ViewBelowHorizon,
        }
    }
}

/// Parameters of the superpixel pipeline.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct NsSegmentParams {
    pub superpixels: usize,
    pub compactness: f64,
    pub max_iterations: usize,
    /// Nonzero: cluster superpixel means with unit weights.
    pub unweighted: u8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct NsMetrics {
    pub true_pos: u64,
    pub true_neg: u64,
    pub false_pos: u64,
    pub false_neg: u64,
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
    pub error_rate: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn fail(status: NsStatus, msg: impl Into<String>) -> NsStatus {
    set_last_error(msg);
    status
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), NsStatus>) -> NsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NsStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(NsStatus::Panic, "internal panic"),
    }
}

fn lib_err(e: Error) -> NsStatus {
    fail(NsStatus::from(&e), e.to_string())
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, NsStatus> {
    if p.is_null() {
        return Err(fail(NsStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(NsStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, NsStatus> {
    p.as_ref()
        .ok_or_else(|| fail(NsStatus::NullPointer, format!("{what} is null")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), NsStatus> {
    if out.is_null() {
        return Err(fail(NsStatus::NullPointer, "output pointer is null"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message for the last failed call on this thread. Valid until the next
/// failing call on the same thread; empty if nothing has failed.
#[no_mangle]
pub extern "C" fn ns_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ns_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Reference defaults: 100 superpixels, compactness 10, 10 iterations,
/// pixel-count weighting.
#[no_mangle]
pub extern "C" fn ns_segment_params_default() -> NsSegmentParams {
    let d = SlicParams::default();
    NsSegmentParams {
        superpixels: d.target_count,
        compactness: d.compactness,
        max_iterations: d.max_iterations,
        unweighted: 0,
    }
}

/// Loads a PNG or JPEG file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ns_image_load(path: *const c_char, out: *mut *mut NsImage) -> NsStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let img = load_image(path).map_err(lib_err)?;
        put(out, NsImage(img))
    })
}

/// Builds an image from `width * height * 3` interleaved RGB bytes, row-major.
///
/// # Safety
/// `data` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ns_image_from_rgb(
    width: usize,
    height: usize,
    data: *const u8,
    len: usize,
    out: *mut *mut NsImage,
) -> NsStatus {
    guard(|| {
        if data.is_null() {
            return Err(fail(NsStatus::NullPointer, "data is null"));
        }
        let want = width.checked_mul(height).and_then(|n| n.checked_mul(3));
        if want != Some(len) {
            return Err(fail(
                NsStatus::InvalidArgument,
                format!("{len} bytes do not describe a {width}x{height} RGB image"),
            ));
        }
        let bytes = std::slice::from_raw_parts(data, len);
        let pixels = bytes.chunks_exact(3).map(|p| [p[0], p[1], p[2]]).collect();
        let img = RgbImage::new(width, height, pixels).map_err(lib_err)?;
        put(out, NsImage(img))
    })
}

/// # Safety
/// `img` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ns_image_width(img: *const NsImage) -> usize {
    img.as_ref().map_or(0, |i| i.0.width())
}

/// # Safety
/// `img` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ns_image_height(img: *const NsImage) -> usize {
    img.as_ref().map_or(0, |i| i.0.height())
}

/// # Safety
/// `img` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ns_image_free(img: *mut NsImage) {
    if !img.is_null() {
        drop(Box::from_raw(img));
    }
}

/// Superpixel segmentation on the named channel (`"r-minus-b"`, `"c14"`, ...).
/// `params` may be null for the defaults.
///
/// # Safety
/// Pointers must be valid; `channel` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ns_segment(
    img: *const NsImage,
    channel: *const c_char,
    params: *const NsSegmentParams,
    out: *mut *mut NsMask,
) -> NsStatus {
    guard(|| {
        let img = ref_arg(img, "image")?;
        let channel: ChannelId = str_arg(channel, "channel")?.parse().map_err(lib_err)?;
        let p = params.as_ref().copied().unwrap_or_else(|| ns_segment_params_default());
        let slic = SlicParams {
            target_count: p.superpixels,
            compactness: p.compactness,
            max_iterations: p.max_iterations,
            value_scale: None,
        };
        let weighting = if p.unweighted != 0 {
            Weighting::Uniform
        } else {
            Weighting::PixelCount
        };
        let mask = segment_weighted(&img.0, channel, &slic, weighting).map_err(lib_err)?;
        put(out, NsMask(mask))
    })
}

/// Otsu threshold on the red-blue difference.
///
/// # Safety
/// `img` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ns_segment_otsu_rb(img: *const NsImage, out: *mut *mut NsMask) -> NsStatus {
    guard(|| {
        let img = ref_arg(img, "image")?;
        let mask = segment_otsu_rb(&img.0).map_err(lib_err)?;
        put(out, NsMask(mask))
    })
}

/// Fixed luminance threshold in [0, 255]; `gray >= threshold` is cloud.
///
/// # Safety
/// `img` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ns_segment_fixed_gray(img: *const NsImage, threshold: f64, out: *mut *mut NsMask) -> NsStatus {
    guard(|| {
        let img = ref_arg(img, "image")?;
        let mask = segment_fixed_gray(&img.0, threshold).map_err(lib_err)?;
        put(out, NsMask(mask))
    })
}

/// Loads a binary mask image (luminance >= 128 is cloud).
///
/// # Safety
/// `path` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ns_mask_load(path: *const c_char, out: *mut *mut NsMask) -> NsStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let mask = load_mask(path).map_err(lib_err)?;
        put(out, NsMask(mask))
    })
}

/// Writes the mask as an 8-bit PNG with 0 for sky and 255 for cloud.
///
/// # Safety
/// `mask` must be a live handle; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ns_mask_save(mask: *const NsMask, path: *const c_char) -> NsStatus {
    guard(|| {
        let mask = ref_arg(mask, "mask")?;
        let path = str_arg(path, "path")?;
        save_mask(&mask.0, path).map_err(lib_err)
    })
}

/// # Safety
/// `mask` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ns_mask_width(mask: *const NsMask) -> usize {
    mask.as_ref().map_or(0, |m| m.0.width())
}

/// # Safety
/// `mask` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ns_mask_height(mask: *const NsMask) -> usize {
    mask.as_ref().map_or(0, |m| m.0.height())
}

/// # Safety
/// `mask` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ns_mask_cloud_count(mask: *const NsMask) -> usize {
    mask.as_ref().map_or(0, |m| m.0.cloud_count())
}

/// Copies the row-major labels (0 sky, 1 cloud) into `buf`, which must hold
/// at least width * height bytes.
///
/// # Safety
/// `mask` must be a live handle; `buf` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ns_mask_copy_labels(mask: *const NsMask, buf: *mut u8, len: usize) -> NsStatus {
    guard(|| {
        let mask = ref_arg(mask, "mask")?;
        if buf.is_null() {
            return Err(fail(NsStatus::NullPointer, "buffer is null"));
        }
        let labels = mask.0.labels();
        if len < labels.len() {
            return Err(fail(
                NsStatus::BufferTooSmall,
                format!("buffer holds {len} bytes, mask needs {}", labels.len()),
            ));
        }
        ptr::copy_nonoverlapping(labels.as_ptr(), buf, labels.len());
        Ok(())
    })
}

/// # Safety
/// `mask` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ns_mask_free(mask: *mut NsMask) {
    if !mask.is_null() {
        drop(Box::from_raw(mask));
    }
}

/// Confusion counts and scores of `pred` against `gt`.
///
/// # Safety
/// Both masks must be live handles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ns_evaluate(pred: *const NsMask, gt: *const NsMask, out: *mut NsMetrics) -> NsStatus {
    guard(|| {
        let (pred, gt) = (ref_arg(pred, "prediction")?, ref_arg(gt, "ground truth")?);
        if out.is_null() {
            return Err(fail(NsStatus::NullPointer, "output pointer is null"));
        }
        let m = evaluate_masks(&pred.0, &gt.0).map_err(lib_err)?;
        *out = NsMetrics {
            true_pos: m.confusion.tp,
            true_neg: m.confusion.tn,
            false_pos: m.confusion.fp,
            false_neg: m.confusion.fn_,
            precision: m.precision,
            recall: m.recall,
            fscore: m.fscore,
            error_rate: m.error_rate,
        };
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_error_has_a_nonzero_status() {
        let errors = [
            Error::FileNotFound("a".into()),
            Error::InvalidParams("x".into()),
            Error::EmptyMask,
            Error::ViewBelowHorizon,
            Error::SingleClassGroundTruth,
        ];
        for e in &errors {
            assert_ne!(NsStatus::from(e), NsStatus::Ok);
        }
    }

    #[test]
    fn guard_catches_panics() {
        assert_eq!(guard(|| panic!("boom")), NsStatus::Panic);
        assert_eq!(
            unsafe { CStr::from_ptr(ns_last_error_message()) }.to_str().unwrap(),
            "internal panic"
        );
    }

    #[test]
    fn version_is_nul_terminated() {
        let v = unsafe { CStr::from_ptr(ns_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }

    #[test]
    fn messages_with_nul_bytes_survive() {
        set_last_error("a\0b");
        assert_eq!(
            unsafe { CStr::from_ptr(ns_last_error_message()) }.to_str().unwrap(),
            "a b"
        );
    }
}
