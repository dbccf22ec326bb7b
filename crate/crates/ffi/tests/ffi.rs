use std::ffi::{CStr, CString};
use std::ptr;

use propcoloc::sim::{gen_dataset, replicate_rng, SimConfig};
use propcoloc::SummaryDataset;
use propcoloc_ffi::*;

fn simulated(seed: u64) -> SummaryDataset {
    let cfg = SimConfig::single(2000, 8, 1.0, 0.5);
    gen_dataset(&cfg, &mut replicate_rng(seed, 0, 0)).unwrap().0
}

fn from_arrays(ds: &SummaryDataset) -> *mut PcDataset {
    let j = ds.num_variants();
    let row = |k: usize, m: &propcoloc::nalgebra::DMatrix<f64>| -> Vec<f64> { m.row(k).iter().copied().collect() };
    let (b1, b2) = (row(0, ds.beta()), row(1, ds.beta()));
    let (s1, s2) = (row(0, ds.se()), row(1, ds.se()));
    let ld: Vec<f64> = (0..j * j).map(|i| ds.ld()[(i / j, i % j)]).collect();
    let mut out = ptr::null_mut();
    let st = unsafe {
        pc_dataset_from_arrays(
            j,
            ptr::null(),
            b1.as_ptr(),
            s1.as_ptr(),
            b2.as_ptr(),
            s2.as_ptr(),
            ld.as_ptr(),
            ds.trait_cor(),
            ds.n(),
            &mut out,
        )
    };
    assert_eq!(st, PcStatus::Ok);
    out
}

fn last_error() -> String {
    let p = pc_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn results_match_the_rust_api() {
    let ds = simulated(1);
    let je_rust = ds.to_joint_effects().unwrap();
    let h = from_arrays(&ds);
    unsafe {
        assert_eq!(pc_dataset_num_variants(h), 8);
        let mut je = ptr::null_mut();
        assert_eq!(pc_joint_effects_new(h, &mut je), PcStatus::Ok);
        assert_eq!(pc_joint_effects_num_variants(je), 8);

        let mut g = vec![0.0; 8];
        assert_eq!(pc_joint_effects_gamma(je, 1, g.as_mut_ptr(), g.len()), PcStatus::Ok);
        assert_eq!(g.as_slice(), je_rust.gamma2_hat().as_slice());

        let mut r = std::mem::zeroed::<PcTestResult>();
        assert_eq!(pc_test_full(je, 0.05, &mut r), PcStatus::Ok);
        let want = propcoloc::prop_coloc_full(&je_rust, 0.05).unwrap();
        assert_eq!(r.method, PcMethod::Full);
        assert_eq!(r.statistic, want.statistic);
        assert_eq!(r.p_value, want.p_value);
        assert!(r.has_eta_hat);

        let mut cond = std::mem::zeroed::<PcTestResult>();
        assert_eq!(pc_test_cond(je, 0.05, 2000, 7, &mut cond), PcStatus::Ok);
        let want = propcoloc::prop_coloc_cond(&je_rust, 0.05, 2000, 7).unwrap();
        assert_eq!(cond.df_or_critical, want.df_or_critical);
        assert!(cond.accepted_draws >= 500);

        let mut lm = std::mem::zeroed::<PcTestResult>();
        assert_eq!(pc_test_lm(je, 0.05, &mut lm), PcStatus::Ok);
        assert!(!lm.has_eta_hat);
        assert!(lm.eta_hat.is_nan());

        let mut naive = std::mem::zeroed::<PcTestResult>();
        assert_eq!(pc_test_naive(je, 0.05, &mut naive), PcStatus::Ok);
        assert_eq!(naive.statistic, cond.statistic);

        let mut v = PcVerdict::Retain;
        assert_eq!(pc_verdict(&cond, &lm, 0.05, &mut v), PcStatus::Ok);
        let expected = if lm.p_value >= 0.05 {
            PcVerdict::RejectNoTrait1Signal
        } else if cond.p_value < 0.05 {
            PcVerdict::RejectProportionality
        } else {
            PcVerdict::Retain
        };
        assert_eq!(v, expected);
        assert_eq!(pc_verdict(&lm, &cond, 0.05, &mut v), PcStatus::InvalidArgument);

        pc_joint_effects_free(je);
        pc_dataset_free(h);
    }
}

#[test]
fn preprocessing_handles() {
    let h = from_arrays(&simulated(2));
    unsafe {
        let mut pruned = ptr::null_mut();
        assert_eq!(pc_dataset_prune(h, 0.1, &mut pruned), PcStatus::Ok);
        assert!(pc_dataset_num_variants(pruned) <= 8);
        let mut top = ptr::null_mut();
        assert_eq!(pc_dataset_top_k(h, 2, &mut top), PcStatus::Ok);
        assert!(pc_dataset_num_variants(top) <= 4);
        let mut ordered = ptr::null_mut();
        let mut swapped = true;
        assert_eq!(pc_dataset_order_traits(h, &mut ordered, &mut swapped), PcStatus::Ok);
        assert_eq!(pc_dataset_num_variants(ordered), 8);

        let mut buf = [0 as std::ffi::c_char; 16];
        let len = pc_dataset_variant_id(h, 2, buf.as_mut_ptr(), buf.len());
        assert_eq!(len, 2);
        assert_eq!(CStr::from_ptr(buf.as_ptr()).to_str().unwrap(), "v3");
        assert_eq!(pc_dataset_variant_id(h, 99, buf.as_mut_ptr(), buf.len()), 0);

        assert_eq!(pc_dataset_prune(h, 0.0, &mut pruned), PcStatus::InvalidArgument);
        assert!(last_error().contains("pruning threshold"));

        for p in [pruned, top, ordered, h] {
            pc_dataset_free(p);
        }
        pc_dataset_free(ptr::null_mut());
        pc_joint_effects_free(ptr::null_mut());
    }
}

#[test]
fn errors_map_to_codes() {
    unsafe {
        let mut out = ptr::null_mut();
        assert_eq!(pc_joint_effects_new(ptr::null(), &mut out), PcStatus::NullPointer);
        assert_eq!(pc_dataset_num_variants(ptr::null()), 0);

        let missing = CString::new("/nonexistent/assoc.tsv").unwrap();
        let mut ds = ptr::null_mut();
        assert_eq!(
            pc_dataset_load(missing.as_ptr(), missing.as_ptr(), 0.1, 100, &mut ds),
            PcStatus::Io
        );
        assert!(ds.is_null());
        assert!(last_error().contains("/nonexistent/assoc.tsv"));

        // Negative standard error fails validation.
        let beta = [0.1, 0.2];
        let se = [0.01, -0.01];
        let ld = [1.0, 0.2, 0.2, 1.0];
        let st = pc_dataset_from_arrays(
            2, ptr::null(), beta.as_ptr(), se.as_ptr(), beta.as_ptr(), se.as_ptr(),
            ld.as_ptr(), 0.0, 100, &mut ds,
        );
        assert_eq!(st, PcStatus::Validation);

        // Singular LD surfaces as its own code.
        let se = [0.01, 0.01];
        let ld = [1.0, 0.999999999999, 0.999999999999, 1.0];
        let st = pc_dataset_from_arrays(
            2, ptr::null(), beta.as_ptr(), se.as_ptr(), beta.as_ptr(), se.as_ptr(),
            ld.as_ptr(), 0.0, 100, &mut ds,
        );
        assert_eq!(st, PcStatus::Ok);
        let mut je = ptr::null_mut();
        assert_eq!(pc_joint_effects_new(ds, &mut je), PcStatus::SingularLd);
        assert!(last_error().contains("prune"));
        pc_dataset_free(ds);

        let mut x = 0.0;
        assert_eq!(pc_chi_sq_quantile(1, 0.05, &mut x), PcStatus::Ok);
        assert!((x - 3.841458820694124).abs() < 1e-9);
        assert_eq!(pc_chi_sq_upper(2, 2.0, &mut x), PcStatus::Ok);
        assert!((x - (-1.0f64).exp()).abs() < 1e-12);
        assert_eq!(pc_chi_sq_upper(0, 2.0, &mut x), PcStatus::InvalidArgument);
    }
}

#[test]
fn load_from_files() {
    let ds = simulated(3);
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("assoc.tsv");
    let l = dir.path().join("ld.txt");
    ds.write(&a, &l).unwrap();
    let ca = CString::new(a.to_str().unwrap()).unwrap();
    let cl = CString::new(l.to_str().unwrap()).unwrap();
    unsafe {
        let mut h = ptr::null_mut();
        assert_eq!(pc_dataset_load(ca.as_ptr(), cl.as_ptr(), ds.trait_cor(), ds.n(), &mut h), PcStatus::Ok);
        assert_eq!(pc_dataset_num_variants(h), ds.num_variants());
        pc_dataset_free(h);
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(pc_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
