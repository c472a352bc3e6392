use std::ffi::{CStr, CString};
use std::ptr;

use ttess_ffi::*;

fn last_error() -> String {
    let p = ttess_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

unsafe fn model(kind: &str, theta: &[f64]) -> *mut TtessModel {
    let k = CString::new(kind).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(ttess_model_new(k.as_ptr(), theta.as_ptr(), theta.len(), &mut m), TtessStatus::Ok);
    m
}

unsafe fn stats(t: *const TtessTessellation) -> TtessStats {
    let mut s = TtessStats::default();
    assert_eq!(ttess_tessellation_stats(t, &mut s), TtessStatus::Ok);
    s
}

#[test]
fn version_is_nul_terminated() {
    let v = unsafe { CStr::from_ptr(ttess_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn chain_round_trip() {
    unsafe {
        let mut t = ptr::null_mut();
        assert_eq!(ttess_tessellation_new_rectangle(1.0, 1.0, &mut t), TtessStatus::Ok);
        assert_eq!(stats(t).cells, 1);
        let m = model("crtt", &[0.64]);
        assert_eq!(ttess_model_dimension(m), 1);

        let mut c = ptr::null_mut();
        assert_eq!(ttess_chain_new(t, m, 7, &mut c), TtessStatus::Ok);
        assert_eq!(ttess_chain_run(c, 5000), TtessStatus::Ok);
        assert_eq!(ttess_chain_iteration(c), 5000);
        let mut s = ptr::null_mut();
        assert_eq!(ttess_chain_state(c, &mut s), TtessStatus::Ok);
        let st = stats(s);
        assert!(st.cells > 1);
        assert_eq!(st.nseint, st.nnbseint + st.nbseint);
        // The initial handle is copied, not consumed.
        assert_eq!(stats(t).cells, 1);

        let mut e = 0.0;
        assert_eq!(ttess_model_energy(m, s, &mut e), TtessStatus::Ok);
        assert!((e - 0.64 * st.nseint as f64).abs() < 1e-12);

        let mut mple = 0.0;
        assert_eq!(ttess_crtt_mple(s, &mut mple), TtessStatus::Ok);
        assert!((mple - (st.nnbseint as f64 * std::f64::consts::PI / st.u).ln()).abs() < 1e-12);

        let mut json = ptr::null_mut();
        assert_eq!(ttess_tessellation_to_json(s, &mut json), TtessStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(ttess_tessellation_from_json(json, &mut back), TtessStatus::Ok);
        let sb = stats(back);
        assert_eq!((sb.cells, sb.nseint, sb.nnbseint), (st.cells, st.nseint, st.nnbseint));
        assert!((sb.u - st.u).abs() < 1e-12 && (sb.a2 - st.a2).abs() < 1e-12);
        ttess_string_free(json);

        let mut theta = [0.0];
        let mut converged = false;
        let opts = ttess_nois_options_default();
        assert_eq!(ttess_nois(m, back, &opts, theta.as_mut_ptr(), 1, &mut converged), TtessStatus::Ok);
        assert!(converged);
        assert!((theta[0] - mple).abs() < 1e-3, "{} {mple}", theta[0]);

        for h in [t, s, back] {
            ttess_tessellation_free(h);
        }
        ttess_chain_free(c);
        ttess_model_free(m);
    }
}

#[test]
fn errors_set_status_and_message() {
    unsafe {
        let mut out = ptr::null_mut();
        assert_eq!(ttess_tessellation_new_rectangle(1.0, 1.0, ptr::null_mut()), TtessStatus::NullPointer);
        assert!(last_error().contains("out"));

        assert_eq!(ttess_tessellation_new_rectangle(-1.0, 1.0, &mut out), TtessStatus::InvalidTessellation);
        assert!(out.is_null());

        let k = CString::new("hexagon").unwrap();
        let mut m = ptr::null_mut();
        assert_eq!(ttess_model_new(k.as_ptr(), [1.0].as_ptr(), 1, &mut m), TtessStatus::InvalidModel);
        assert!(last_error().contains("hexagon"));
        let k = CString::new("area").unwrap();
        assert_eq!(ttess_model_new(k.as_ptr(), [1.0].as_ptr(), 1, &mut m), TtessStatus::InvalidModel);

        let bad = CString::new("{\"domain\": 3}").unwrap();
        assert_eq!(ttess_tessellation_from_json(bad.as_ptr(), &mut out), TtessStatus::InvalidArgument);
        let bytes = b"\xff\0";
        assert_eq!(ttess_tessellation_from_json(bytes.as_ptr().cast(), &mut out), TtessStatus::InvalidUtf8);

        // A successful call clears the message.
        let mut t = ptr::null_mut();
        assert_eq!(ttess_tessellation_new_rectangle(1.0, 1.0, &mut t), TtessStatus::Ok);
        assert!(ttess_last_error().is_null());

        let m = model("area", &[0.5, 100.0]);
        let mut theta = [0.0];
        assert_eq!(ttess_nois(m, t, ptr::null(), theta.as_mut_ptr(), 1, ptr::null_mut()), TtessStatus::InvalidArgument);
        let mut theta = [0.0; 2];
        assert_eq!(ttess_nois(m, t, ptr::null(), theta.as_mut_ptr(), 2, ptr::null_mut()), TtessStatus::Estimation);

        ttess_tessellation_free(t);
        ttess_model_free(m);
        ttess_tessellation_free(ptr::null_mut());
        ttess_string_free(ptr::null_mut());
    }
}

#[test]
fn extended_kl_through_the_abi() {
    let a = [1.0, 0.0, 2.0];
    let b = [0.5, 1.0, 2.0];
    let mut d = 0.0;
    unsafe {
        assert_eq!(ttess_extended_kl(a.as_ptr(), b.as_ptr(), 3, &mut d), TtessStatus::Ok);
        let expect = 1.0 * 2f64.ln() + 0.5 - 1.0 + 1.0;
        assert!((d - expect).abs() < 1e-15);
        assert_eq!(ttess_extended_kl(b.as_ptr(), a.as_ptr(), 3, &mut d), TtessStatus::Ok);
        assert_eq!(d, f64::INFINITY);
        assert_eq!(ttess_extended_kl(ptr::null(), ptr::null(), 0, &mut d), TtessStatus::Ok);
        assert_eq!(d, 0.0);
        let neg = [-1.0];
        assert_eq!(ttess_extended_kl(neg.as_ptr(), neg.as_ptr(), 1, &mut d), TtessStatus::InvalidArgument);
    }
}

#[test]
fn header_declares_the_abi() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/ttess.h")).unwrap();
    for name in [
        "TTESS_STATUS_OK",
        "typedef struct TtessTessellation TtessTessellation",
        "ttess_tessellation_new_rectangle",
        "ttess_chain_run",
        "ttess_nois",
        "ttess_extended_kl",
        "ttess_last_error",
    ] {
        assert!(h.contains(name), "{name} missing");
    }
}
