use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::ptr;

use mesa_ffi::*;

fn fixture(name: &str) -> CString {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name);
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(mesa_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn full_matrix_through_the_c_abi() {
    unsafe {
        let mut reg = ptr::null_mut();
        assert_eq!(mesa_registry_load(fixture("cards.json").as_ptr(), &mut reg), MesaStatus::Ok);
        assert_eq!(mesa_registry_len(reg), 50);

        let mut backend = ptr::null_mut();
        assert_eq!(mesa_backend_scripted(fixture("script.json").as_ptr(), &mut backend), MesaStatus::Ok);

        let mut report = ptr::null_mut();
        let st = mesa_eval(fixture("suite.json").as_ptr(), reg, backend, ptr::null(), 1, &mut report);
        assert_eq!(st, MesaStatus::Ok, "{}", last_error());

        let mut acc = 0.0;
        let probe = CString::new("NoProbe").unwrap();
        assert_eq!(mesa_report_accuracy(report, probe.as_ptr(), b'B' as _, &mut acc), MesaStatus::Ok);
        assert_eq!(acc, 0.8);
        let vig = CString::new("NoVigilance").unwrap();
        assert_eq!(mesa_report_accuracy(report, vig.as_ptr(), b'B' as _, &mut acc), MesaStatus::Ok);
        assert_eq!(acc, 0.5);
        assert_eq!(
            mesa_report_accuracy(report, vig.as_ptr(), b'X' as _, &mut acc),
            MesaStatus::InvalidArgument
        );

        let mut text = ptr::null_mut();
        assert_eq!(mesa_report_render(report, MesaFormat::Text, &mut text), MesaStatus::Ok);
        let rendered = CStr::from_ptr(text).to_str().unwrap().to_string();
        mesa_string_free(text);
        assert!(rendered.contains("MESA-S (w/o Probe)"));

        let mut json = ptr::null_mut();
        let item = CString::new("B-001").unwrap();
        let prompt = CString::new("How many days are between the date 2024-03-01 and 2024-04-15?").unwrap();
        let full = CString::new("Full").unwrap();
        let st = mesa_route(reg, backend, item.as_ptr(), prompt.as_ptr(), full.as_ptr(), &mut json);
        assert_eq!(st, MesaStatus::Ok, "{}", last_error());
        let rec: serde_json::Value = serde_json::from_str(CStr::from_ptr(json).to_str().unwrap()).unwrap();
        mesa_string_free(json);
        assert!(rec["decisions"][0]["gated_cards"]
            .as_array()
            .unwrap()
            .iter()
            .any(|c| c == "date_time"));

        mesa_report_free(report);
        mesa_backend_free(backend);
        mesa_registry_free(reg);
    }
}

#[test]
fn errors_are_codes_not_crashes() {
    unsafe {
        let mut reg = ptr::null_mut();
        assert_eq!(mesa_registry_load(ptr::null(), &mut reg), MesaStatus::NullArgument);
        assert!(last_error().contains("path"));
        let missing = CString::new("/nonexistent/cards.json").unwrap();
        assert_eq!(mesa_registry_load(missing.as_ptr(), &mut reg), MesaStatus::Io);
        assert!(reg.is_null());
        let bad = [0xffu8, 0xfe, 0];
        assert_eq!(mesa_registry_load(bad.as_ptr().cast(), &mut reg), MesaStatus::InvalidUtf8);
        assert_eq!(mesa_registry_len(ptr::null()), 0);

        let (mut z, mut p) = (0.0, 0.0);
        assert_eq!(mesa_two_prop_ztest(40, 50, 25, 50, &mut z, &mut p), MesaStatus::Ok);
        assert!((z - 3.1449).abs() < 1e-3);
        assert_eq!(mesa_two_prop_ztest(60, 50, 25, 50, &mut z, &mut p), MesaStatus::InvalidArgument);
        assert_eq!(mesa_two_prop_ztest(1, 2, 1, 2, ptr::null_mut(), &mut p), MesaStatus::NullArgument);

        // frees accept NULL
        mesa_registry_free(ptr::null_mut());
        mesa_backend_free(ptr::null_mut());
        mesa_report_free(ptr::null_mut());
        mesa_string_free(ptr::null_mut());
    }
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(mesa_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
