//! C ABI for the proportional colocalization tests.
//!
//! Datasets and joint effects are opaque handles created by `pc_*_new` /
//! `pc_dataset_*` functions and released with the matching `_free`. Every
//! fallible call returns a [`PcStatus`]; on failure the message is available
//! from [`pc_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use propcoloc::nalgebra::{DMatrix, DVector};
use propcoloc::{
    chisq, combined_verdict, lm_test, load_summary, prop_coloc_cond, prop_coloc_full,
    prop_coloc_naive, build_selection, Error, JointEffects, Method, SummaryDataset, TestResult,
    Verdict,
};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Validation = 5,
    SingularLd = 6,
    CriterionSingular = 7,
    DegenerateProjection = 8,
    LowAcceptance = 9,
    SingularSelection = 10,
    Panic = 11,
}

/// Test method tag.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcMethod {
    Full = 0,
    Naive = 1,
    Conditional = 2,
    Lm = 3,
}

/// Combined conditional + LM decision.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcVerdict {
    Retain = 0,
    RejectProportionality = 1,
    RejectNoTrait1Signal = 2,
}

/// Flat copy of a test result.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcTestResult {
    pub method: PcMethod,
    pub statistic: f64,
    /// Degrees of freedom, or the conditional critical value.
    pub df_or_critical: f64,
    pub p_value: f64,
    /// NaN when `has_eta_hat` is false.
    pub eta_hat: f64,
    pub has_eta_hat: bool,
    pub nu: f64,
    pub reject: bool,
    /// Conditional test only; 0 otherwise.
    pub accepted_draws: u64,
    /// Conditional test only; NaN otherwise.
    pub acceptance_rate: f64,
}

/// Opaque summary dataset.
pub struct PcDataset {
    inner: SummaryDataset,
}

/// Opaque multivariable effects with their covariance.
pub struct PcJointEffects {
    inner: JointEffects,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> PcStatus {
    match err {
        Error::Io { .. } => PcStatus::Io,
        Error::Parse { .. } | Error::Json(_) => PcStatus::Parse,
        Error::DimensionMismatch(_)
        | Error::NonFinite(_)
        | Error::NonPositiveSe { .. }
        | Error::LdOutOfRange { .. }
        | Error::LdAsymmetric { .. }
        | Error::LdDiagonal(_) => PcStatus::Validation,
        Error::SingularLd { .. } => PcStatus::SingularLd,
        Error::CriterionSingular { .. } => PcStatus::CriterionSingular,
        Error::DegenerateProjection => PcStatus::DegenerateProjection,
        Error::LowAcceptance { .. } => PcStatus::LowAcceptance,
        Error::SingularSelection => PcStatus::SingularSelection,
        Error::InvalidArgument(_) | Error::Config(_) | Error::Grid(_) => PcStatus::InvalidArgument,
    }
}

fn fail(status: PcStatus, msg: impl Into<String>) -> PcStatus {
    set_last_error(msg.into());
    status
}

/// Runs `f`, mapping errors and panics to status codes.
fn guard<F: FnOnce() -> Result<(), PcStatus>>(f: F) -> PcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PcStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(PcStatus::Panic, "internal panic"),
    }
}

fn lift<T>(r: propcoloc::Result<T>) -> Result<T, PcStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn deref<'a, T>(p: *const T) -> Result<&'a T, PcStatus> {
    p.as_ref()
        .ok_or_else(|| fail(PcStatus::NullPointer, "null handle"))
}

unsafe fn out_ptr<'a, T>(p: *mut T) -> Result<&'a mut T, PcStatus> {
    p.as_mut()
        .ok_or_else(|| fail(PcStatus::NullPointer, "null output pointer"))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, PcStatus> {
    if p.is_null() {
        return Err(fail(PcStatus::NullPointer, "null path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(PcStatus::InvalidArgument, "path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], PcStatus> {
    if p.is_null() {
        return Err(fail(PcStatus::NullPointer, format!("null {what}")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn method_tag(m: Method) -> PcMethod {
    match m {
        Method::Full => PcMethod::Full,
        Method::Naive => PcMethod::Naive,
        Method::Conditional => PcMethod::Conditional,
        Method::Lm => PcMethod::Lm,
    }
}

fn flatten(r: &TestResult) -> PcTestResult {
    PcTestResult {
        method: method_tag(r.method),
        statistic: r.statistic,
        df_or_critical: r.df_or_critical,
        p_value: r.p_value,
        eta_hat: r.eta_hat.unwrap_or(f64::NAN),
        has_eta_hat: r.eta_hat.is_some(),
        nu: r.nu,
        reject: r.reject,
        accepted_draws: r.diagnostics.get("accepted_draws").map_or(0, |v| *v as u64),
        acceptance_rate: r.diagnostics.get("acceptance_rate").copied().unwrap_or(f64::NAN),
    }
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads an association TSV and LD file.
///
/// # Safety
/// `assoc_path` and `ld_path` must be NUL-terminated strings; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn pc_dataset_load(
    assoc_path: *const c_char,
    ld_path: *const c_char,
    trait_cor: f64,
    n: usize,
    out: *mut *mut PcDataset,
) -> PcStatus {
    guard(|| {
        let out = out_ptr(out)?;
        let a = path_arg(assoc_path)?;
        let l = path_arg(ld_path)?;
        let ds = lift(load_summary(&a, &l, trait_cor, n))?;
        *out = boxed(PcDataset { inner: ds });
        Ok(())
    })
}

/// Builds a dataset from arrays of length `j` and a row-major `j` x `j` LD
/// matrix. `ids` may be NULL, in which case ids are "v1", "v2", ...
///
/// # Safety
/// All non-NULL pointers must reference arrays of the stated length.
#[no_mangle]
pub unsafe extern "C" fn pc_dataset_from_arrays(
    j: usize,
    ids: *const *const c_char,
    beta1: *const f64,
    se1: *const f64,
    beta2: *const f64,
    se2: *const f64,
    ld: *const f64,
    trait_cor: f64,
    n: usize,
    out: *mut *mut PcDataset,
) -> PcStatus {
    guard(|| {
        let out = out_ptr(out)?;
        let b1 = slice_arg(beta1, j, "beta1")?;
        let s1 = slice_arg(se1, j, "se1")?;
        let b2 = slice_arg(beta2, j, "beta2")?;
        let s2 = slice_arg(se2, j, "se2")?;
        let ldv = slice_arg(ld, j * j, "ld")?;
        let names: Vec<String> = if ids.is_null() {
            (1..=j).map(|i| format!("v{i}")).collect()
        } else {
            let raw = std::slice::from_raw_parts(ids, j);
            let mut v = Vec::with_capacity(j);
            for &p in raw {
                if p.is_null() {
                    return Err(fail(PcStatus::NullPointer, "null variant id"));
                }
                v.push(CStr::from_ptr(p).to_string_lossy().into_owned());
            }
            v
        };
        let beta = DMatrix::from_fn(2, j, |k, c| if k == 0 { b1[c] } else { b2[c] });
        let se = DMatrix::from_fn(2, j, |k, c| if k == 0 { s1[c] } else { s2[c] });
        let ldm = DMatrix::from_row_slice(j, j, ldv);
        let ds = lift(SummaryDataset::new(names, beta, se, ldm, trait_cor, n))?;
        *out = boxed(PcDataset { inner: ds });
        Ok(())
    })
}

/// Number of variants, or 0 for a NULL handle.
///
/// # Safety
/// `ds` must be NULL or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn pc_dataset_num_variants(ds: *const PcDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.num_variants())
}

/// Copies the id of variant `index` into `buf` (NUL-terminated, truncated
/// to `len`). Returns the full id length in bytes.
///
/// # Safety
/// `ds` must be a live handle; `buf` must hold `len` bytes or be NULL.
#[no_mangle]
pub unsafe extern "C" fn pc_dataset_variant_id(
    ds: *const PcDataset,
    index: usize,
    buf: *mut c_char,
    len: usize,
) -> usize {
    let Some(d) = ds.as_ref() else { return 0 };
    let Some(id) = d.inner.variant_ids().get(index) else { return 0 };
    if !buf.is_null() && len > 0 {
        let n = id.len().min(len - 1);
        ptr::copy_nonoverlapping(id.as_ptr().cast(), buf, n);
        *buf.add(n) = 0;
    }
    id.len()
}

/// Greedy LD pruning to r² <= `r2`; writes a new handle.
///
/// # Safety
/// `ds` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pc_dataset_prune(
    ds: *const PcDataset,
    r2: f64,
    out: *mut *mut PcDataset,
) -> PcStatus {
    guard(|| {
        let d = deref(ds)?;
        let out = out_ptr(out)?;
        let pruned = lift(d.inner.prune(r2))?;
        *out = boxed(PcDataset { inner: pruned });
        Ok(())
    })
}

/// Union of the `k` strongest variants per trait; writes a new handle.
///
/// # Safety
/// `ds` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pc_dataset_top_k(
    ds: *const PcDataset,
    k: usize,
    out: *mut *mut PcDataset,
) -> PcStatus {
    guard(|| {
        let d = deref(ds)?;
        let out = out_ptr(out)?;
        let top = lift(d.inner.select_top_k(k))?;
        *out = boxed(PcDataset { inner: top });
        Ok(())
    })
}

/// Makes the trait with the strongest association trait 2; writes a new
/// handle and whether the traits were swapped.
///
/// # Safety
/// `ds` must be a live handle; `out` and `swapped` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pc_dataset_order_traits(
    ds: *const PcDataset,
    out: *mut *mut PcDataset,
    swapped: *mut bool,
) -> PcStatus {
    guard(|| {
        let d = deref(ds)?;
        let out = out_ptr(out)?;
        let sw = out_ptr(swapped)?;
        let (ordered, did) = d.inner.order_traits();
        *sw = did;
        *out = boxed(PcDataset { inner: ordered });
        Ok(())
    })
}

/// Releases a dataset handle. NULL is ignored.
///
/// # Safety
/// `ds` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pc_dataset_free(ds: *mut PcDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Multivariable effects and covariance from a dataset.
///
/// # Safety
/// `ds` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pc_joint_effects_new(
    ds: *const PcDataset,
    out: *mut *mut PcJointEffects,
) -> PcStatus {
    guard(|| {
        let d = deref(ds)?;
        let out = out_ptr(out)?;
        let je = lift(d.inner.to_joint_effects())?;
        *out = boxed(PcJointEffects { inner: je });
        Ok(())
    })
}

/// Number of variants, or 0 for a NULL handle.
///
/// # Safety
/// `je` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pc_joint_effects_num_variants(je: *const PcJointEffects) -> usize {
    je.as_ref().map_or(0, |j| j.inner.num_variants())
}

/// Copies γ̂₁ (trait 0) or γ̂₂ (trait 1) into `buf` of length `len`, which
/// must be at least the variant count.
///
/// # Safety
/// `je` must be a live handle; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pc_joint_effects_gamma(
    je: *const PcJointEffects,
    trait_index: u32,
    buf: *mut f64,
    len: usize,
) -> PcStatus {
    guard(|| {
        let j = deref(je)?;
        let g: &DVector<f64> = match trait_index {
            0 => j.inner.gamma1_hat(),
            1 => j.inner.gamma2_hat(),
            _ => return Err(fail(PcStatus::InvalidArgument, "trait index must be 0 or 1")),
        };
        if buf.is_null() {
            return Err(fail(PcStatus::NullPointer, "null buffer"));
        }
        if len < g.len() {
            return Err(fail(PcStatus::InvalidArgument, "buffer too short"));
        }
        std::slice::from_raw_parts_mut(buf, g.len()).copy_from_slice(g.as_slice());
        Ok(())
    })
}

/// Releases a joint-effects handle. NULL is ignored.
///
/// # Safety
/// `je` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pc_joint_effects_free(je: *mut PcJointEffects) {
    if !je.is_null() {
        drop(Box::from_raw(je));
    }
}

unsafe fn run_test<F>(je: *const PcJointEffects, out: *mut PcTestResult, f: F) -> PcStatus
where
    F: FnOnce(&JointEffects) -> propcoloc::Result<TestResult>,
{
    guard(|| {
        let j = deref(je)?;
        let out = out_ptr(out)?;
        let r = lift(f(&j.inner))?;
        *out = flatten(&r);
        Ok(())
    })
}

/// Full-panel test referred to χ²_{J-1}.
///
/// # Safety
/// `je` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pc_test_full(
    je: *const PcJointEffects,
    nu: f64,
    out: *mut PcTestResult,
) -> PcStatus {
    run_test(je, out, |j| prop_coloc_full(j, nu))
}

/// Two-lead-variant test referred to χ²₁.
///
/// # Safety
/// `je` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pc_test_naive(
    je: *const PcJointEffects,
    nu: f64,
    out: *mut PcTestResult,
) -> PcStatus {
    run_test(je, out, |j| prop_coloc_naive(j, &build_selection(j)?, nu))
}

/// Conditional test with a Monte-Carlo critical value.
///
/// # Safety
/// `je` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pc_test_cond(
    je: *const PcJointEffects,
    nu: f64,
    draws: usize,
    seed: u64,
    out: *mut PcTestResult,
) -> PcStatus {
    run_test(je, out, |j| prop_coloc_cond(j, nu, draws, seed))
}

/// LM test of a zero proportionality constant.
///
/// # Safety
/// `je` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pc_test_lm(
    je: *const PcJointEffects,
    nu: f64,
    out: *mut PcTestResult,
) -> PcStatus {
    run_test(je, out, |j| lm_test(j, &build_selection(j)?, nu))
}

fn unflatten(r: &PcTestResult, method: Method) -> TestResult {
    TestResult {
        method,
        statistic: r.statistic,
        df_or_critical: r.df_or_critical,
        p_value: r.p_value,
        eta_hat: r.has_eta_hat.then_some(r.eta_hat),
        nu: r.nu,
        reject: r.reject,
        diagnostics: Default::default(),
    }
}

/// Combines a proportionality test result with an LM result.
///
/// # Safety
/// Pointers must reference valid results; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pc_verdict(
    proportionality: *const PcTestResult,
    lm: *const PcTestResult,
    nu: f64,
    out: *mut PcVerdict,
) -> PcStatus {
    guard(|| {
        let p = deref(proportionality)?;
        let l = deref(lm)?;
        let out = out_ptr(out)?;
        if l.method != PcMethod::Lm {
            return Err(fail(PcStatus::InvalidArgument, "second result must come from the LM test"));
        }
        let v = combined_verdict(&unflatten(p, Method::Conditional), &unflatten(l, Method::Lm), nu);
        *out = match v {
            Verdict::RetainProportionalColocalization => PcVerdict::Retain,
            Verdict::RejectProportionalColocalization => PcVerdict::RejectProportionality,
            Verdict::RejectNoTrait1Signal => PcVerdict::RejectNoTrait1Signal,
        };
        Ok(())
    })
}

/// Upper tail P(χ²_df > x).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pc_chi_sq_upper(df: u32, x: f64, out: *mut f64) -> PcStatus {
    guard(|| {
        let out = out_ptr(out)?;
        *out = lift(chisq::chi_sq_upper(df, x))?;
        Ok(())
    })
}

/// Upper-ν quantile of χ²_df.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pc_chi_sq_quantile(df: u32, nu: f64, out: *mut f64) -> PcStatus {
    guard(|| {
        let out = out_ptr(out)?;
        *out = lift(chisq::chi_sq_quantile(df, nu))?;
        Ok(())
    })
}
