//! Exercises the C ABI the way a foreign binding would: through the extern
//! functions, raw pointers and status codes.

use std::ffi::{CStr, CString};

use csi_lab_ffi::*;

fn last_error() -> String {
    unsafe {
        let ptr = csi_last_error_message();
        if ptr.is_null() {
            return String::new();
        }
        let s = CStr::from_ptr(ptr).to_string_lossy().into_owned();
        csi_string_free(ptr);
        s
    }
}

#[test]
fn version_is_non_null() {
    let v = unsafe { CStr::from_ptr(csi_version()) };
    assert!(!v.to_bytes().is_empty());
}

#[test]
fn dataset_generate_sample_save_open_round_trip() {
    let cfg = CString::new(r#"{"n_paths":6,"n_train":5,"n_test":2,"master_seed":7}"#).unwrap();
    let mut ds: *mut CsiDataset = std::ptr::null_mut();
    let status = unsafe { csi_dataset_generate(cfg.as_ptr(), 0, &mut ds) };
    assert_eq!(status, CsiStatus::Ok, "{}", last_error());
    assert_eq!(unsafe { csi_dataset_len(ds) }, 5);

    let (mut p, mut t, mut r) = (0u32, 0u32, 0u32);
    assert_eq!(unsafe { csi_dataset_shape(ds, &mut p, &mut t, &mut r) }, CsiStatus::Ok);
    assert_eq!((p, t, r), (6, 4, 4));

    let n = (p * t * r) as usize;
    let mut buf = vec![0f32; 2 * n];
    let status = unsafe { csi_dataset_sample(ds, 0, buf.as_mut_ptr(), buf.len()) };
    assert_eq!(status, CsiStatus::Ok, "{}", last_error());
    assert!(buf.iter().any(|&x| x != 0.0));

    // identical sample compares at zero error against itself
    let mut err = f64::NAN;
    assert_eq!(
        unsafe { csi_nmse(buf.as_ptr(), buf.as_ptr(), n, &mut err) },
        CsiStatus::Ok
    );
    assert_eq!(err, 0.0);

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("d.bin").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { csi_dataset_save(ds, path.as_ptr()) }, CsiStatus::Ok);

    let mut back: *mut CsiDataset = std::ptr::null_mut();
    assert_eq!(unsafe { csi_dataset_open(path.as_ptr(), &mut back) }, CsiStatus::Ok);
    assert_eq!(unsafe { csi_dataset_len(back) }, 5);
    let mut buf2 = vec![0f32; 2 * n];
    assert_eq!(
        unsafe { csi_dataset_sample(back, 0, buf2.as_mut_ptr(), buf2.len()) },
        CsiStatus::Ok
    );
    assert_eq!(buf, buf2);

    unsafe {
        csi_dataset_free(ds);
        csi_dataset_free(back);
    }
}

#[test]
fn error_paths_set_messages() {
    let mut ds: *mut CsiDataset = std::ptr::null_mut();
    let bad = CString::new("{not json").unwrap();
    assert_eq!(
        unsafe { csi_dataset_generate(bad.as_ptr(), 0, &mut ds) },
        CsiStatus::Parse
    );
    assert!(!last_error().is_empty());

    let cfg = CString::new("{}").unwrap();
    assert_eq!(
        unsafe { csi_dataset_generate(cfg.as_ptr(), 9, &mut ds) },
        CsiStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { csi_dataset_generate(std::ptr::null(), 0, &mut ds) },
        CsiStatus::NullArgument
    );

    let missing = CString::new("/nonexistent/q.csiq").unwrap();
    let mut q: *mut CsiQuantizer = std::ptr::null_mut();
    assert_eq!(unsafe { csi_quantizer_open(missing.as_ptr(), &mut q) }, CsiStatus::Io);
}

#[test]
fn scalar_helpers_match_reference_values() {
    assert_eq!(csi_hard_quant(0.3, 3), 2);
    assert_eq!(csi_hard_dequant(2, 3), 0.3125);
    assert_eq!(csi_raw_sample_bits(24, 4, 4), 24576);

    let (mut v, mut d) = (0.0, 0.0);
    assert_eq!(unsafe { csi_soft_quant(0.5, 3, 500.0, &mut v, &mut d) }, CsiStatus::Ok);
    assert_eq!(v, 0.5);
    assert!(d >= 0.0);

    let mut y = 0.0;
    assert_eq!(unsafe { csi_compand(0.3, 0, 0, &mut y) }, CsiStatus::Ok);
    let mut back = 0.0;
    assert_eq!(unsafe { csi_compand(y, 0, 1, &mut back) }, CsiStatus::Ok);
    assert!((back - 0.3).abs() <= 1e-12);
    let mut out = 0.0;
    assert_eq!(unsafe { csi_compand(1.5, 0, 0, &mut out) }, CsiStatus::InvalidArgument);
}

#[test]
fn quantizer_fit_quantize_save_round_trip() {
    let samples: Vec<f64> = (0..5000).map(|i| ((i as f64) * 0.61803).fract()).collect();
    let mut q: *mut CsiQuantizer = std::ptr::null_mut();
    let status = unsafe { csi_quantizer_fit_adaptive(samples.as_ptr(), samples.len(), 3, &mut q) };
    assert_eq!(status, CsiStatus::Ok, "{}", last_error());

    let features = [0.04, 0.51, 0.97, 0.33];
    let mut indices = [0u32; 4];
    let mut written = 0usize;
    assert_eq!(
        unsafe {
            csi_quantizer_quantize(q, features.as_ptr(), 4, indices.as_mut_ptr(), 4, &mut written)
        },
        CsiStatus::Ok
    );
    assert_eq!(written, 4);

    let mut recon = [0f64; 4];
    assert_eq!(
        unsafe { csi_quantizer_dequantize(q, indices.as_ptr(), 4, recon.as_mut_ptr(), 4) },
        CsiStatus::Ok
    );
    for (x, r) in features.iter().zip(&recon) {
        assert!((x - r).abs() <= 0.2, "{x} vs {r}");
    }

    // buffer too small is reported, not UB
    let mut tiny = [0u32; 2];
    assert_eq!(
        unsafe {
            csi_quantizer_quantize(q, features.as_ptr(), 4, tiny.as_mut_ptr(), 2, &mut written)
        },
        CsiStatus::BufferTooSmall
    );

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("q.csiq").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { csi_quantizer_save(q, path.as_ptr()) }, CsiStatus::Ok);
    let mut q2: *mut CsiQuantizer = std::ptr::null_mut();
    assert_eq!(unsafe { csi_quantizer_open(path.as_ptr(), &mut q2) }, CsiStatus::Ok);
    let mut recon2 = [0f64; 4];
    assert_eq!(
        unsafe { csi_quantizer_dequantize(q2, indices.as_ptr(), 4, recon2.as_mut_ptr(), 4) },
        CsiStatus::Ok
    );
    assert_eq!(recon, recon2);

    unsafe {
        csi_quantizer_free(q);
        csi_quantizer_free(q2);
    }
}

#[test]
fn frame_encode_and_count_bits() {
    let mask = [1u8, 1, 1, 0, 0, 1, 0, 1, 1, 1, 0, 0, 1, 1, 1, 1, 0, 0, 0, 0, 1, 1, 1, 1];
    let indices = [5u32, 2, 9, 14];
    let widths = [4u8, 4, 4, 4];
    let mut frame = [0u8; 64];
    let mut len = 0usize;
    let status = unsafe {
        csi_frame_encode(
            2,
            mask.as_ptr(),
            mask.len(),
            indices.as_ptr(),
            widths.as_ptr(),
            4,
            frame.as_mut_ptr(),
            frame.len(),
            &mut len,
        )
    };
    assert_eq!(status, CsiStatus::Ok, "{}", last_error());
    let mut bits = 0u32;
    assert_eq!(
        unsafe { csi_frame_feedback_bits(frame.as_ptr(), len, mask.len(), &mut bits) },
        CsiStatus::Ok
    );
    assert_eq!(bits, 24 + 16);

    // corrupt magic
    let mut bad = frame;
    bad[0] = 0;
    assert_eq!(
        unsafe { csi_frame_feedback_bits(bad.as_ptr(), len, mask.len(), &mut bits) },
        CsiStatus::Corrupt
    );
}

#[test]
fn pipeline_run_identity_reports_json() {
    let cfg = CString::new(
        r#"{"channel":{"n_paths":8,"n_train":6,"n_test":3,"master_seed":5},"seeds":[1]}"#,
    )
    .unwrap();
    let mut report: *mut libc::c_char = std::ptr::null_mut();
    let status = unsafe { csi_pipeline_run(cfg.as_ptr(), &mut report) };
    assert_eq!(status, CsiStatus::Ok, "{}", last_error());
    let text = unsafe { CStr::from_ptr(report) }.to_string_lossy().into_owned();
    unsafe { csi_string_free(report) };
    assert!(text.contains("\"nmse_mean\""), "{text}");
    assert!(text.contains("\"pass\":true"), "{text}");
}
