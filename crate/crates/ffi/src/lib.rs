//! C interface to `splitval`.
//!
//! Conventions:
//!
//! * every fallible function returns an [`SvStatus`]; on failure a message is
//!   stored per thread and read with [`sv_last_error_message`];
//! * datasets and methodologies are opaque handles created by `*_new` /
//!   `*_parse` functions and released with the matching `*_free`;
//! * results are written through caller-provided out pointers and are only
//!   written on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use splitval::estimators::{compare, evaluate, EvalSettings, SamplerKind};
use splitval::oracle::{self, OracleInputs};
use splitval::{
    ComparisonReport, Error, MethodologySpec, PerformanceMeasure, PerformanceReport, SplitConfig,
    TestSummary,
};

/// Result of an FFI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    NonPositiveVariance = 5,
    DuplicateTestId = 6,
    AlphaOutOfRange = 7,
    IncompatibleMeasure = 8,
    InvalidParameter = 9,
    InvalidSize = 10,
    EmptySplit = 11,
    EmptyInput = 12,
    InsufficientTests = 13,
    InvalidLevel = 14,
    DegenerateBaseline = 15,
    PrecisionUnreachable = 16,
    Serialization = 17,
    Config = 18,
    Panic = 99,
}

impl From<&Error> for SvStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Io { .. } => SvStatus::Io,
            Error::Parse { .. } => SvStatus::Parse,
            Error::NonPositiveVariance { .. } | Error::RowNonPositiveVariance { .. } => {
                SvStatus::NonPositiveVariance
            }
            Error::DuplicateTestId { .. } => SvStatus::DuplicateTestId,
            Error::AlphaOutOfRange(_) => SvStatus::AlphaOutOfRange,
            Error::IncompatibleMeasure { .. } => SvStatus::IncompatibleMeasure,
            Error::InvalidParameter(_) => SvStatus::InvalidParameter,
            Error::InvalidSize(_) => SvStatus::InvalidSize,
            Error::EmptySplit { .. } => SvStatus::EmptySplit,
            Error::EmptyInput(_) => SvStatus::EmptyInput,
            Error::InsufficientTests(_) => SvStatus::InsufficientTests,
            Error::InvalidLevel(_) => SvStatus::InvalidLevel,
            Error::DegenerateBaseline { .. } => SvStatus::DegenerateBaseline,
            Error::PrecisionUnreachable { .. } => SvStatus::PrecisionUnreachable,
            Error::Serialization(_) => SvStatus::Serialization,
            Error::Config(_) => SvStatus::Config,
        }
    }
}

/// Performance measure used to score a methodology.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvMeasure {
    Bias = 0,
    SquaredError = 1,
    DecisionValue = 2,
    LaunchOnly = 3,
}

impl From<SvMeasure> for PerformanceMeasure {
    fn from(m: SvMeasure) -> Self {
        match m {
            SvMeasure::Bias => PerformanceMeasure::Bias,
            SvMeasure::SquaredError => PerformanceMeasure::SquaredError,
            SvMeasure::DecisionValue => PerformanceMeasure::DecisionValue,
            SvMeasure::LaunchOnly => PerformanceMeasure::LaunchOnlyDecisionValue,
        }
    }
}

/// Split settings. `unit_n_per_arm = 0` selects the plug-in sampler; any
/// other value repartitions a synthetic panel with that many units per arm.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvSplitConfig {
    pub alpha: f64,
    pub num_partitions: usize,
    pub master_seed: u64,
    pub level: f64,
    pub unit_n_per_arm: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SvReport {
    pub theta_hat: f64,
    pub zeta_sq_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
    pub num_tests: usize,
    pub alpha: f64,
    pub num_partitions: usize,
}

impl From<&PerformanceReport> for SvReport {
    fn from(r: &PerformanceReport) -> Self {
        SvReport {
            theta_hat: r.theta_hat,
            zeta_sq_hat: r.zeta_sq_hat,
            ci_low: r.ci_low,
            ci_high: r.ci_high,
            level: r.level,
            num_tests: r.num_tests,
            alpha: r.alpha,
            num_partitions: r.num_partitions,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SvComparison {
    pub theta_hat_1: f64,
    pub theta_hat_2: f64,
    pub relative_difference: f64,
    pub report_1: SvReport,
    pub report_2: SvReport,
}

impl From<&ComparisonReport> for SvComparison {
    fn from(r: &ComparisonReport) -> Self {
        SvComparison {
            theta_hat_1: r.theta_hat_1,
            theta_hat_2: r.theta_hat_2,
            relative_difference: r.relative_difference,
            report_1: (&r.report_1).into(),
            report_2: (&r.report_2).into(),
        }
    }
}

/// Opaque collection of test summaries.
pub struct SvDataset {
    tests: Vec<TestSummary>,
}

/// Opaque methodology.
pub struct SvMethodology {
    spec: MethodologySpec,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

enum Failure {
    Status(SvStatus, String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(SvStatus::NullPointer, format!("{what} is null"))
}

/// Runs `body`, converting errors and panics into a status code.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> SvStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => SvStatus::Ok,
        Ok(Err(Failure::Lib(e))) => {
            set_error(format!("{}: {e}", e.category()));
            SvStatus::from(&e)
        }
        Ok(Err(Failure::Status(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("Panic: internal error".into());
            SvStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        Failure::Status(SvStatus::InvalidUtf8, format!("{what} is not valid UTF-8"))
    })
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

fn settings(config: &SvSplitConfig) -> Result<EvalSettings, Failure> {
    let split = SplitConfig::new(config.alpha, config.num_partitions, config.master_seed)?;
    let sampler = match config.unit_n_per_arm {
        0 => SamplerKind::Plugin,
        n => SamplerKind::UnitLevel { n_per_arm: n },
    };
    Ok(EvalSettings::new(split)
        .with_sampler(sampler)
        .with_level(config.level))
}

/// Message describing the last failure on this thread, or NULL.
///
/// The pointer stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn sv_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sv_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates an empty dataset.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn sv_dataset_new(out: *mut *mut SvDataset) -> SvStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = Box::into_raw(Box::new(SvDataset { tests: Vec::new() }));
        Ok(())
    })
}

/// Appends one test summary. Duplicate ids are rejected.
///
/// # Safety
/// `dataset` must come from this library; `test_id` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sv_dataset_push(
    dataset: *mut SvDataset,
    test_id: *const c_char,
    delta_hat: f64,
    tau_sq: f64,
) -> SvStatus {
    guard(|| {
        let dataset = dataset.as_mut().ok_or_else(|| null("dataset"))?;
        let id = str_arg(test_id, "test_id")?;
        if dataset.tests.iter().any(|t| t.test_id == id) {
            return Err(Error::DuplicateTestId {
                test_id: id.to_string(),
                row: dataset.tests.len() + 1,
            }
            .into());
        }
        dataset.tests.push(TestSummary::new(id, delta_hat, tau_sq)?);
        Ok(())
    })
}

/// Reads a dataset from a CSV file with header `test_id,delta_hat,tau_sq`.
///
/// # Safety
/// `path` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sv_dataset_from_csv(
    path: *const c_char,
    out: *mut *mut SvDataset,
) -> SvStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let path = str_arg(path, "path")?;
        let tests = splitval::io::ingest_summaries(path)?;
        *out = Box::into_raw(Box::new(SvDataset { tests }));
        Ok(())
    })
}

/// Number of tests in the dataset (0 for NULL).
///
/// # Safety
/// `dataset` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn sv_dataset_len(dataset: *const SvDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.tests.len())
}

/// Releases a dataset. NULL is ignored.
///
/// # Safety
/// `dataset` must be NULL or an unreleased handle from this library.
#[no_mangle]
pub unsafe extern "C" fn sv_dataset_free(dataset: *mut SvDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Parses a methodology such as `identity`, `bayes:sigma_sq=1` or `threshold:c=1.96`.
///
/// # Safety
/// `spec` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sv_methodology_parse(
    spec: *const c_char,
    out: *mut *mut SvMethodology,
) -> SvStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let spec: MethodologySpec = str_arg(spec, "spec")?.parse()?;
        *out = Box::into_raw(Box::new(SvMethodology { spec }));
        Ok(())
    })
}

/// Releases a methodology. NULL is ignored.
///
/// # Safety
/// `methodology` must be NULL or an unreleased handle from this library.
#[no_mangle]
pub unsafe extern "C" fn sv_methodology_free(methodology: *mut SvMethodology) {
    if !methodology.is_null() {
        drop(Box::from_raw(methodology));
    }
}

/// Estimates the average performance of one methodology.
///
/// # Safety
/// Handles must come from this library; `config` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sv_evaluate(
    dataset: *const SvDataset,
    methodology: *const SvMethodology,
    measure: SvMeasure,
    config: *const SvSplitConfig,
    out: *mut SvReport,
) -> SvStatus {
    guard(|| {
        let dataset = ref_arg(dataset, "dataset")?;
        let methodology = ref_arg(methodology, "methodology")?;
        let config = ref_arg(config, "config")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let report = evaluate(
            &dataset.tests,
            &methodology.spec,
            measure.into(),
            &settings(config)?,
        )?;
        *out = (&report).into();
        Ok(())
    })
}

/// Compares two methodologies on shared split draws.
///
/// # Safety
/// Handles must come from this library; `config` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sv_compare(
    dataset: *const SvDataset,
    methodology_1: *const SvMethodology,
    methodology_2: *const SvMethodology,
    measure: SvMeasure,
    config: *const SvSplitConfig,
    out: *mut SvComparison,
) -> SvStatus {
    guard(|| {
        let dataset = ref_arg(dataset, "dataset")?;
        let m1 = ref_arg(methodology_1, "methodology_1")?;
        let m2 = ref_arg(methodology_2, "methodology_2")?;
        let config = ref_arg(config, "config")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let report = compare(
            &dataset.tests,
            &m1.spec,
            &m2.spec,
            measure.into(),
            &settings(config)?,
        )?;
        *out = (&report).into();
        Ok(())
    })
}

unsafe fn oracle_call(
    out: *mut f64,
    f: impl FnOnce() -> splitval::Result<f64>,
) -> SvStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = f()?;
        Ok(())
    })
}

/// Relative MSE of Bayes shrinkage vs the unbiased estimator on the full sample.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sv_oracle_ideal_mse_relative(
    sigma_sq: f64,
    tau_sq: f64,
    out: *mut f64,
) -> SvStatus {
    oracle_call(out, || {
        oracle::ideal_mse_relative(&OracleInputs::new(sigma_sq, tau_sq))
    })
}

/// Relative MSE of Bayes shrinkage vs the unbiased estimator with a training fraction.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sv_oracle_split_mse_relative(
    sigma_sq: f64,
    tau_sq: f64,
    alpha: f64,
    out: *mut f64,
) -> SvStatus {
    oracle_call(out, || {
        oracle::split_mse_relative(&OracleInputs::new(sigma_sq, tau_sq).with_alpha(alpha))
    })
}

/// Relative launch-only value of the Bayes sign rule vs the 5% threshold rule.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sv_oracle_ideal_launch_relative(
    sigma_sq: f64,
    tau_sq: f64,
    out: *mut f64,
) -> SvStatus {
    oracle_call(out, || {
        oracle::ideal_launch_relative(&OracleInputs::new(sigma_sq, tau_sq))
    })
}

/// As [`sv_oracle_ideal_launch_relative`], with a training fraction.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sv_oracle_split_launch_relative(
    sigma_sq: f64,
    tau_sq: f64,
    alpha: f64,
    out: *mut f64,
) -> SvStatus {
    oracle_call(out, || {
        oracle::split_launch_relative(&OracleInputs::new(sigma_sq, tau_sq).with_alpha(alpha))
    })
}
