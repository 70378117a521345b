use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use thermopatch::imaging::{BBox, GrayImage};
use thermopatch::oracle::{Oracle, ToyOracle};
use thermopatch::patchgen::{compose, patch_side, rasterize_patch, BoundaryKind, PatchTheta};
use thermopatch::scene::{dataset_scene, SceneConfig};
use thermopatch_ffi::*;

fn theta_handle(t: &PatchTheta) -> *mut TpTheta {
    let json = CString::new(t.to_json()).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { tp_theta_from_json(json.as_ptr(), &mut h) }, TpStatus::Ok);
    h
}

fn image_handle(img: &GrayImage) -> *mut TpImage {
    let mut h = ptr::null_mut();
    let st = unsafe { tp_image_new(img.width(), img.height(), img.pixels().as_ptr(), &mut h) };
    assert_eq!(st, TpStatus::Ok);
    h
}

fn pixels(h: *const TpImage) -> Vec<f64> {
    let n = unsafe { tp_image_width(h) * tp_image_height(h) };
    let mut v = vec![0.0; n];
    assert_eq!(unsafe { tp_image_pixels(h, v.as_mut_ptr(), n) }, TpStatus::Ok);
    v
}

fn last_error() -> String {
    let p = tp_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn theta_round_trips_through_json() {
    let mut t = PatchTheta::regular(6, 0.25, 0.1, BoundaryKind::Polyline);
    t.deltas[3] = 0.3;
    let h = theta_handle(&t);
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { tp_theta_to_json(h, &mut s) }, TpStatus::Ok);
    let back = PatchTheta::from_json(unsafe { CStr::from_ptr(s) }.to_str().unwrap()).unwrap();
    assert_eq!(back, t);
    unsafe {
        tp_string_free(s);
        tp_theta_free(h);
    }
}

#[test]
fn parse_and_feasibility_errors_are_reported() {
    let mut h = ptr::null_mut();
    let bad = CString::new("{\"dim\": 6").unwrap();
    assert_eq!(unsafe { tp_theta_from_json(bad.as_ptr(), &mut h) }, TpStatus::Parse);
    assert!(h.is_null());
    assert!(!last_error().is_empty());

    let mut t = PatchTheta::regular(6, 0.25, 0.0, BoundaryKind::Bezier);
    t.deltas[0] = 0.9;
    let json = CString::new(t.to_json()).unwrap();
    assert_eq!(unsafe { tp_theta_from_json(json.as_ptr(), &mut h) }, TpStatus::Infeasible);

    assert_eq!(unsafe { tp_theta_from_json(ptr::null(), &mut h) }, TpStatus::NullArgument);
    assert_eq!(unsafe { tp_theta_from_json(json.as_ptr(), ptr::null_mut()) }, TpStatus::NullArgument);
}

#[test]
fn render_matches_the_library() {
    let t = PatchTheta::regular(6, 0.25, 0.0, BoundaryKind::Bezier);
    let th = theta_handle(&t);
    let mut img = ptr::null_mut();
    assert_eq!(unsafe { tp_render_patch(th, 60, &mut img) }, TpStatus::Ok);
    let expect = thermopatch::cli::render_on_white(&t, 60).unwrap();
    assert_eq!(pixels(img), expect.pixels());

    let mut small = ptr::null_mut();
    assert_eq!(unsafe { tp_render_patch(th, 3, &mut small) }, TpStatus::Patch);
    assert!(small.is_null());
    unsafe {
        tp_image_free(img);
        tp_theta_free(th);
    }
}

#[test]
fn compose_and_score_match_the_library() {
    let s = dataset_scene(4, 0, &SceneConfig::default()).unwrap();
    let b = s.boxes[0];
    let t = PatchTheta::regular(6, 0.25, 0.0, BoundaryKind::Bezier);
    let (th, scene) = (theta_handle(&t), image_handle(&s.image));
    let mut out = ptr::null_mut();
    let arr = b.to_array();
    assert_eq!(unsafe { tp_compose(scene, arr.as_ptr(), th, 0.4, &mut out) }, TpStatus::Ok);
    let raster = rasterize_patch(&t, patch_side(t.width_frac, b.h)).unwrap();
    let expect = compose(&s.image, &b, &t, &raster).unwrap();
    assert_eq!(pixels(out), expect.pixels());

    let mut oracle = ptr::null_mut();
    assert_eq!(unsafe { tp_toy_oracle_new(&mut oracle) }, TpStatus::Ok);
    let boxes = [arr, BBox::new(0.0, 0.0, 40.0, 140.0).to_array()].concat();
    let mut scores = [0.0; 2];
    assert_eq!(unsafe { tp_toy_score(oracle, scene, boxes.as_ptr(), 2, scores.as_mut_ptr()) }, TpStatus::Ok);
    let lib = ToyOracle::default().score(&s.image, &[b, BBox::new(0.0, 0.0, 40.0, 140.0)]).unwrap();
    assert_eq!(scores.to_vec(), lib);

    let outside = [1e6, 0.0, 10.0, 10.0];
    assert_eq!(unsafe { tp_toy_score(oracle, scene, outside.as_ptr(), 1, scores.as_mut_ptr()) }, TpStatus::Oracle);
    unsafe {
        tp_toy_oracle_free(oracle);
        tp_image_free(out);
        tp_image_free(scene);
        tp_theta_free(th);
    }
}

#[test]
fn pgm_round_trip_and_buffer_sizes() {
    let img = GrayImage::from_fn(7, 5, |x, y| (x * 5 + y) as f64 / 34.0);
    let h = image_handle(&img);
    let mut need = 0usize;
    assert_eq!(unsafe { tp_image_to_pgm(h, ptr::null_mut(), 0, &mut need) }, TpStatus::BufferTooSmall);
    let mut buf = vec![0u8; need];
    assert_eq!(unsafe { tp_image_to_pgm(h, buf.as_mut_ptr(), buf.len(), &mut need) }, TpStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { tp_image_from_pgm(buf.as_ptr(), buf.len(), &mut back) }, TpStatus::Ok);
    assert_eq!(unsafe { (tp_image_width(back), tp_image_height(back)) }, (7, 5));
    let mut short = [0.0; 3];
    assert_eq!(unsafe { tp_image_pixels(back, short.as_mut_ptr(), 3) }, TpStatus::BufferTooSmall);
    unsafe {
        tp_image_free(back);
        tp_image_free(h);
        tp_image_free(ptr::null_mut());
    }
}

/// Compiles a C program against the generated header and static library.
#[test]
fn c_program_links_against_the_header() {
    let Ok(cc) = Command::new("cc").arg("--version").output() else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(cc.status.success());
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // target/<profile>/deps/ffi-<hash> -> target/<profile>
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libthermopatch_ffi.a");
    assert!(lib.exists(), "{} missing", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let build = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(crate_dir.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(build.status.success(), "{}", String::from_utf8_lossy(&build.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "exit {:?}: {}", run.status.code(), String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("ok "));
}
