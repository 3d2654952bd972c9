use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use nightseg_ffi::*;

fn half_rgb(w: usize, h: usize) -> Vec<u8> {
    (0..w * h)
        .flat_map(|i| if i % w < w / 2 { [10, 20, 220] } else { [220, 40, 30] })
        .collect()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(ns_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

#[test]
fn segment_roundtrip_through_handles() {
    let (w, h) = (40, 30);
    let rgb = half_rgb(w, h);
    unsafe {
        let mut img = ptr::null_mut();
        assert_eq!(ns_image_from_rgb(w, h, rgb.as_ptr(), rgb.len(), &mut img), NsStatus::Ok);
        assert_eq!((ns_image_width(img), ns_image_height(img)), (w, h));

        let mut params = ns_segment_params_default();
        params.superpixels = 4;
        let channel = CString::new("r-minus-b").unwrap();
        let mut mask = ptr::null_mut();
        assert_eq!(ns_segment(img, channel.as_ptr(), &params, &mut mask), NsStatus::Ok);
        assert_eq!(ns_mask_cloud_count(mask), w * h / 2);

        let mut labels = vec![9u8; w * h];
        assert_eq!(
            ns_mask_copy_labels(mask, labels.as_mut_ptr(), labels.len()),
            NsStatus::Ok
        );
        assert!(labels.iter().enumerate().all(|(i, &l)| l == u8::from(i % w >= w / 2)));
        assert_eq!(
            ns_mask_copy_labels(mask, labels.as_mut_ptr(), labels.len() - 1),
            NsStatus::BufferTooSmall
        );

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("m.png").to_str().unwrap()).unwrap();
        assert_eq!(ns_mask_save(mask, path.as_ptr()), NsStatus::Ok);
        let mut reloaded = ptr::null_mut();
        assert_eq!(ns_mask_load(path.as_ptr(), &mut reloaded), NsStatus::Ok);

        let mut m = NsMetrics::default();
        assert_eq!(ns_evaluate(reloaded, mask, &mut m), NsStatus::Ok);
        assert_eq!((m.true_pos, m.true_neg, m.false_pos, m.false_neg), (600, 600, 0, 0));
        assert_eq!(m.error_rate, 0.0);

        let mut otsu = ptr::null_mut();
        assert_eq!(ns_segment_otsu_rb(img, &mut otsu), NsStatus::Ok);
        assert_eq!(ns_mask_cloud_count(otsu), w * h / 2);
        let mut gray = ptr::null_mut();
        assert_eq!(ns_segment_fixed_gray(img, 300.0, &mut gray), NsStatus::InvalidArgument);
        assert!(gray.is_null());

        ns_mask_free(otsu);
        ns_mask_free(reloaded);
        ns_mask_free(mask);
        ns_image_free(img);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut img = ptr::null_mut();
        let missing = CString::new("/nonexistent/sky.png").unwrap();
        assert_eq!(ns_image_load(missing.as_ptr(), &mut img), NsStatus::FileNotFound);
        assert!(last_error().contains("/nonexistent/sky.png"));

        assert_eq!(ns_image_load(ptr::null(), &mut img), NsStatus::NullPointer);
        let rgb = [0u8; 12];
        assert_eq!(
            ns_image_from_rgb(2, 2, rgb.as_ptr(), 11, &mut img),
            NsStatus::InvalidArgument
        );
        assert_eq!(
            ns_image_from_rgb(2, 2, rgb.as_ptr(), 12, ptr::null_mut()),
            NsStatus::NullPointer
        );

        assert_eq!(ns_image_from_rgb(2, 2, rgb.as_ptr(), 12, &mut img), NsStatus::Ok);
        let mut mask = ptr::null_mut();
        assert_eq!(ns_segment_otsu_rb(img, &mut mask), NsStatus::DegenerateInput);
        let bad = CString::new("ultraviolet").unwrap();
        assert_eq!(
            ns_segment(img, bad.as_ptr(), ptr::null(), &mut mask),
            NsStatus::InvalidArgument
        );
        assert_eq!(
            ns_segment(ptr::null(), bad.as_ptr(), ptr::null(), &mut mask),
            NsStatus::NullPointer
        );
        ns_image_free(img);

        // null handles are tolerated by accessors and destructors
        assert_eq!(ns_mask_width(ptr::null()), 0);
        ns_mask_free(ptr::null_mut());
        ns_image_free(ptr::null_mut());
    }
}

#[test]
fn mismatched_masks() {
    unsafe {
        let (a, b) = ([0u8; 12], [0u8; 27]);
        let (mut ia, mut ib) = (ptr::null_mut(), ptr::null_mut());
        ns_image_from_rgb(2, 2, a.as_ptr(), a.len(), &mut ia);
        ns_image_from_rgb(3, 3, b.as_ptr(), b.len(), &mut ib);
        let (mut ma, mut mb) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(ns_segment_fixed_gray(ia, 10.0, &mut ma), NsStatus::Ok);
        assert_eq!(ns_segment_fixed_gray(ib, 10.0, &mut mb), NsStatus::Ok);
        let mut m = NsMetrics::default();
        assert_eq!(ns_evaluate(ma, mb, &mut m), NsStatus::DimensionMismatch);
        for m in [ma, mb] {
            ns_mask_free(m);
        }
        for i in [ia, ib] {
            ns_image_free(i);
        }
    }
}

/// Compiles `tests/c/smoke.c` against the generated header and the static
/// library, then runs it.
#[test]
fn c_program_links_and_runs() {
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // test binaries live in target/<profile>/deps next to the library artifacts
    let deps = std::env::current_exe().unwrap().parent().unwrap().to_path_buf();
    let lib = [
        deps.join("libnightseg_ffi.a"),
        deps.parent().unwrap().join("libnightseg_ffi.a"),
    ]
    .into_iter()
    .find(|p| p.exists())
    .expect("static library built alongside the tests");

    let work = tempfile::tempdir().unwrap();
    let exe = work.path().join("smoke");
    let status = Command::new(std::env::var("CC").unwrap_or_else(|_| "cc".into()))
        .arg(crate_dir.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler available");
    assert!(status.success());

    let mask_path = work.path().join("mask.png");
    let out = Command::new(&exe).arg(&mask_path).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
    assert!(mask_path.exists());
}
