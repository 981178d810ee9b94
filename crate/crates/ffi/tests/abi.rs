use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use coherence_mi::analog::{self, FeatureConfig, RealPairedSamples};
use coherence_mi::simulate::{self, GmmSpec};
use coherence_mi_ffi::*;

fn real(s: &RealPairedSamples) -> *mut CmiRealSamples {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { cmi_real_samples_new(s.x().as_ptr(), s.y().as_ptr(), s.len(), &mut h) }, CmiStatus::Ok);
    h
}

fn config(sigma2: f64) -> *mut CmiFeatureConfig {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { cmi_config_from_sigma2(sigma2, &mut h) }, CmiStatus::Ok);
    h
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(cmi_last_error_message()) }.to_string_lossy().into_owned()
}

#[test]
fn analog_entry_points_match_the_library() {
    let s = simulate::gmm_sample(&GmmSpec::x_shaped_with_smi(0.5).unwrap(), 2000, 3);
    let cfg = FeatureConfig::from_sigma2(0.3).unwrap();
    let (h, c) = (real(&s), config(0.3));
    let (mut v, mut w) = (0.0, u32::MAX);
    unsafe {
        assert_eq!(cmi_config_dim(c), cfg.dim);
        assert_eq!(cmi_smi_analog(h, c, &mut v, &mut w), CmiStatus::Ok);
        assert_eq!(v, analog::smi_analog(&s, &cfg).unwrap().value);
        assert_eq!(w, 0);
        assert_eq!(cmi_smi_analog_fast(h, c, &mut v, ptr::null_mut()), CmiStatus::Ok);
        assert_eq!(v, coherence_mi::szego::smi_analog_fast(&s, &cfg).unwrap().value);
        assert_eq!(cmi_smi_bias_reduced(h, c, 0, false, &mut v, ptr::null_mut()), CmiStatus::Ok);
        assert_eq!(v, analog::smi_bias_reduced(&s, &cfg, 1000).unwrap().value);
        cmi_config_free(c);
        cmi_real_samples_free(h);
    }
}

#[test]
fn discrete_entry_points() {
    let x = [0u32, 1, 2, 0, 1, 2];
    let mut h = ptr::null_mut();
    let (mut v, mut w) = (0.0, 0);
    unsafe {
        assert_eq!(cmi_symbol_samples_new(x.as_ptr(), x.as_ptr(), 6, 3, 4, &mut h), CmiStatus::Ok);
        assert_eq!(cmi_smi_discrete(h, &mut v, &mut w), CmiStatus::Ok);
        assert!((v - 2.0).abs() < 1e-9);
        assert_eq!(w & CMI_WARN_UNSEEN_SYMBOLS, CMI_WARN_UNSEEN_SYMBOLS);
        assert_eq!(cmi_hgr_discrete(h, &mut v, ptr::null_mut()), CmiStatus::Ok);
        assert!((v - 1.0).abs() < 1e-9);
        cmi_symbol_samples_free(h);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut h = ptr::null_mut();
    let x = [0.0, f64::NAN];
    unsafe {
        assert_eq!(cmi_real_samples_new(x.as_ptr(), x.as_ptr(), 2, &mut h), CmiStatus::NonFinite);
        assert!(h.is_null());
        assert!(last_error().contains("non-finite"));
        assert_eq!(cmi_real_samples_new(ptr::null(), x.as_ptr(), 2, &mut h), CmiStatus::NullPointer);
        let sym = [0u32, 5];
        assert_eq!(cmi_symbol_samples_new(sym.as_ptr(), sym.as_ptr(), 2, 2, 2, &mut ptr::null_mut()), CmiStatus::SymbolOutOfRange);
        let mut c = ptr::null_mut();
        assert_eq!(cmi_config_new(0.1, 0.3, 4, &mut c), CmiStatus::InvalidParameter);
        assert_eq!(cmi_config_silverman(-1.0, 100, &mut c), CmiStatus::InvalidParameter);
        let mut v = 0.0;
        assert_eq!(cmi_smi_analog(ptr::null(), ptr::null(), &mut v, ptr::null_mut()), CmiStatus::NullPointer);
        assert!(cmi_config_sigma2(ptr::null()).is_nan());
        cmi_real_samples_free(ptr::null_mut());
        cmi_config_free(ptr::null_mut());
    }
}

#[test]
fn shift_equal_to_length_is_rejected() {
    let s = simulate::gmm_sample(&GmmSpec::x_shaped(0.5).unwrap(), 100, 1);
    let (h, c) = (real(&s), config(0.4));
    let mut v = 0.0;
    unsafe {
        assert_eq!(cmi_smi_bias_reduced(h, c, 100, false, &mut v, ptr::null_mut()), CmiStatus::InvalidParameter);
        cmi_config_free(c);
        cmi_real_samples_free(h);
    }
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(cmi_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn c_program_links_against_the_header() {
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler; skipped");
        return;
    }
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("libcoherence_mi_ffi.a");
    if !lib.exists() {
        eprintln!("static library not built; skipped");
        return;
    }
    let out = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cmi_smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let run = Command::new(&out).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    let v: f64 = String::from_utf8_lossy(&run.stdout).trim().parse().unwrap();
    assert!(v > 0.0);
}
