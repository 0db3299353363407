use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use deepcnf::dcnn::{Activation, NetworkArch};
use deepcnf::model::Model;
use deepcnf::optimizer::{init_params, InitConfig};
use deepcnf::seqdata::{generate_synthetic, save_dataset, SyntheticSpec};
use deepcnf_ffi::*;

fn fixtures(dir: &Path) -> (PathBuf, PathBuf) {
    let data = generate_synthetic(&SyntheticSpec {
        num_sequences: 5,
        length_range: (10, 20),
        alphabet_size: 3,
        label_priors: vec![0.5, 0.3, 0.2],
        transition_stickiness: 0.6,
        feature_dim: 2,
        emission_separation: 1.0,
        seed: 1,
    })
    .unwrap();
    let arch = NetworkArch::uniform(2, 1, 4, 3, Activation::Sigmoid).unwrap();
    let params = init_params(&arch, &data.alphabet, InitConfig { seed: 2, scale: 0.5 }).unwrap();
    let model = Model::new(data.alphabet.clone(), params, None).unwrap();
    let (dp, mp) = (dir.join("d.tsv"), dir.join("m.json"));
    save_dataset(&data, &dp).unwrap();
    model.save(&mp).unwrap();
    (mp, dp)
}

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(dcnf_last_error_message()) }.to_str().unwrap().to_string()
}

#[test]
fn load_predict_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let (mp, dp) = fixtures(dir.path());
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(dcnf_model_load(cstr(&mp).as_ptr(), &mut model), DcnfStatus::Ok);
        let mut data = ptr::null_mut();
        assert_eq!(dcnf_dataset_load(cstr(&dp).as_ptr(), &mut data), DcnfStatus::Ok);
        assert_eq!(dcnf_dataset_num_sequences(data), 5);
        let mut len = 0;
        assert_eq!(dcnf_dataset_sequence_length(data, 0, &mut len), DcnfStatus::Ok);
        assert!((10..=20).contains(&len));
        assert_eq!(dcnf_dataset_sequence_length(data, 5, &mut len), DcnfStatus::InvalidArgument);
        assert!(last_error().contains("out of range"));

        assert_eq!(dcnf_model_num_labels(model), 3);
        assert_eq!(dcnf_model_feature_dim(model), 2);
        let mut name = ptr::null_mut();
        assert_eq!(dcnf_model_label_name(model, 2, &mut name), DcnfStatus::Ok);
        assert_eq!(CStr::from_ptr(name).to_str().unwrap(), "L2");
        dcnf_string_free(name);

        // marginals agree with the library
        let x = [0.3, -1.0, 1.2, 0.5, -0.7, 2.0];
        let mut out = [0.0; 9];
        assert_eq!(dcnf_model_predict_marginals(model, x.as_ptr(), 3, 2, out.as_mut_ptr(), out.len()), DcnfStatus::Ok);
        let m = Model::load(&mp).unwrap();
        let view = ndarray::ArrayView2::from_shape((3, 2), &x[..]).unwrap();
        let expected = deepcnf::objectives::predict_marginals(&m.params, view).unwrap().marginals;
        assert_eq!(out.to_vec(), expected.iter().copied().collect::<Vec<_>>());
        assert_eq!(
            dcnf_model_predict_marginals(model, x.as_ptr(), 3, 3, out.as_mut_ptr(), out.len()),
            DcnfStatus::InvalidArgument
        );

        let mut json = ptr::null_mut();
        assert_eq!(dcnf_model_evaluate_json(model, data, &mut json), DcnfStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(CStr::from_ptr(json).to_str().unwrap()).unwrap();
        assert_eq!(v["labels"].as_array().unwrap().len(), 3);
        dcnf_string_free(json);

        dcnf_dataset_free(data);
        dcnf_model_free(model);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut model = ptr::null_mut();
        let missing = CString::new("/nonexistent/m.json").unwrap();
        assert_eq!(dcnf_model_load(missing.as_ptr(), &mut model), DcnfStatus::Io);
        assert!(model.is_null());
        assert!(!last_error().is_empty());
        assert_eq!(dcnf_model_load(ptr::null(), &mut model), DcnfStatus::NullPointer);

        let mut data = ptr::null_mut();
        let bad = CString::new("#labels A,B\n> s\nA\t1.0\nZ\t2.0\n").unwrap();
        assert_eq!(dcnf_dataset_parse(bad.as_ptr(), &mut data), DcnfStatus::Parse);
        let good = CString::new("#labels A,B\n> s\nA\t1.0\nB\t2.0\n").unwrap();
        assert_eq!(dcnf_dataset_parse(good.as_ptr(), &mut data), DcnfStatus::Ok);
        assert!(last_error().is_empty());
        dcnf_dataset_free(data);

        // freeing NULL is a no-op
        dcnf_dataset_free(ptr::null_mut());
        dcnf_model_free(ptr::null_mut());
        dcnf_string_free(ptr::null_mut());
    }
}

#[test]
fn auc_and_version() {
    let scores = [0.1, 0.4, 0.35, 0.8];
    let pos = [0u8, 0, 1, 1];
    let mut auc = 0.0;
    unsafe {
        assert_eq!(dcnf_empirical_auc(scores.as_ptr(), pos.as_ptr(), 4, &mut auc), DcnfStatus::Ok);
        assert_eq!(auc, 0.75);
        let none = [1u8; 4];
        assert_eq!(dcnf_empirical_auc(scores.as_ptr(), none.as_ptr(), 4, &mut auc), DcnfStatus::Undefined);
        let v = CStr::from_ptr(dcnf_version()).to_str().unwrap();
        assert_eq!(v, env!("CARGO_PKG_VERSION"));
    }
}

#[test]
fn header_compiles_and_links() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = manifest.join("include").join("deepcnf.h");
    assert!(header.exists(), "build script writes the header");
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in ["dcnf_model_load", "dcnf_model_predict_marginals", "dcnf_empirical_auc", "DCNF_STATUS_OK"] {
        assert!(text.contains(sym), "{sym} missing from header");
    }

    // the shared library sits next to the deps directory holding this test
    let exe = std::env::current_exe().unwrap();
    let libdir = exe.parent().unwrap().parent().unwrap().to_path_buf();
    let so = ["libdeepcnf_ffi.so", "libdeepcnf_ffi.dylib"].iter().map(|n| libdir.join(n)).find(|p| p.exists());
    let (Some(_), true) = (so, Command::new("cc").arg("--version").output().is_ok()) else {
        eprintln!("skipping C link check: no shared library or C compiler");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg("-L")
        .arg(&libdir)
        .arg(format!("-Wl,-rpath,{}", libdir.display()))
        .args(["-ldeepcnf_ffi", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C smoke test failed to build");
    let (mp, dp) = fixtures(dir.path());
    let out = Command::new(&bin).arg(&mp).arg(&dp).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}
