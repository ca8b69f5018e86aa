/*
Copyright 2026 The proxmetric Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

//! C ABI over the proxmetric solvers.
//!
//! Problems and models are opaque heap handles created by `pm_problem_*` and
//! `pm_model_load` and released with the matching `_free`. Every fallible
//! call returns a [`PmStatus`]; the message of the last failure on the
//! calling thread is available from [`pm_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use proxmetric::net::{load_checkpoint, metric_forward, MetricHead, Mlp};
use proxmetric::problems::{
    portfolio_instance, quadcopter_instance, toy_instance, PortfolioFamily, QuadcopterModel,
};
use proxmetric::prox::{run, Algorithm, Metric, SolverConfig};
use proxmetric::qp::{active_set_oracle_solve, reformulate};
use proxmetric::{Error, QpProblem, SlackQp, Tensor};

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Numeric = 4,
    Io = 5,
    Checkpoint = 6,
    Panic = 7,
}

/// Solver selector.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PmAlgorithm {
    Dr = 0,
    Admm = 1,
}

/// A quadratic program and its slack reformulation.
pub struct PmProblem {
    qp: QpProblem,
    sq: SlackQp,
}

/// A trained network with optional metric head bounds.
pub struct PmModel {
    net: Mlp,
    head: Option<MetricHead>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> PmStatus {
    match e {
        Error::Shape { .. } => PmStatus::Shape,
        Error::InvalidArgument(_)
        | Error::Config(_)
        | Error::Parse(_)
        | Error::EnumerationLimit { .. } => PmStatus::InvalidArgument,
        Error::Io(_) | Error::MissingArtifact(_) => PmStatus::Io,
        Error::Checkpoint(_) | Error::CheckpointVersion { .. } => PmStatus::Checkpoint,
        _ => PmStatus::Numeric,
    }
}

/// Runs `f`, mapping errors and panics to status codes.
fn guard(f: impl FnOnce() -> Result<(), (PmStatus, String)>) -> PmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            PmStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside proxmetric".into());
            PmStatus::Panic
        }
    }
}

fn lift<T>(r: proxmetric::Result<T>) -> Result<T, (PmStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (PmStatus, String) {
    (PmStatus::NullPointer, format!("{what} is null"))
}

unsafe fn read<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], (PmStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn write<'a>(
    p: *mut f64,
    len: usize,
    what: &str,
) -> Result<&'a mut [f64], (PmStatus, String)> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), (PmStatus, String)> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn make_problem(qp: proxmetric::Result<QpProblem>) -> Result<PmProblem, (PmStatus, String)> {
    let qp = lift(qp)?;
    let sq = lift(reformulate(&qp))?;
    Ok(PmProblem { qp, sq })
}

/// Copies the last error message on this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length, 0 when none.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn pm_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Translated-box toy problem for parameters `(p1, p2)`.
///
/// # Safety
/// `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn pm_problem_toy(p1: f64, p2: f64, out: *mut *mut PmProblem) -> PmStatus {
    guard(|| emit(out, make_problem(toy_instance(p1, p2))?))
}

/// Mean-variance allocation over `n` assets with row-major covariance
/// `sigma` (n×n), expected returns `mu` (n) and the given budget.
///
/// # Safety
/// `sigma` must hold n·n values, `mu` n values, `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pm_problem_portfolio(
    n: usize,
    sigma: *const f64,
    mu: *const f64,
    budget: f64,
    out: *mut *mut PmProblem,
) -> PmStatus {
    guard(|| {
        let s = read(sigma, n * n, "sigma")?;
        let m = read(mu, n, "mu")?;
        let sigma = lift(Tensor::new(n, n, s.to_vec()))?;
        let fam = lift(PortfolioFamily::new(sigma, m.to_vec(), 0.0, budget))?;
        emit(out, make_problem(portfolio_instance(&fam, m))?)
    })
}

/// Benchmark quadcopter tracking problem with the given horizon and the
/// 12-dimensional initial state `x0`.
///
/// # Safety
/// `x0` must hold 12 values, `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pm_problem_quadcopter(
    horizon: usize,
    x0: *const f64,
    out: *mut *mut PmProblem,
) -> PmStatus {
    guard(|| {
        if horizon == 0 {
            return Err((PmStatus::InvalidArgument, "horizon must be positive".into()));
        }
        let model = QuadcopterModel::benchmark(horizon);
        let p = read(x0, model.nx(), "x0")?;
        emit(out, make_problem(quadcopter_instance(&model, p))?)
    })
}

/// Writes the original variable count `n`, equality and inequality counts,
/// and the reformulated dimension `d = n + k_in`. Any output may be null.
///
/// # Safety
/// `problem` must come from a `pm_problem_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn pm_problem_dims(
    problem: *const PmProblem,
    n: *mut usize,
    m_eq: *mut usize,
    k_in: *mut usize,
    d: *mut usize,
) -> PmStatus {
    guard(|| {
        let prob = problem.as_ref().ok_or_else(|| null("problem"))?;
        for (p, v) in [
            (n, prob.qp.n()),
            (m_eq, prob.qp.m_eq()),
            (k_in, prob.qp.k_in()),
            (d, prob.sq.dim()),
        ] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `problem` must be null or come from a `pm_problem_*` constructor, and not
/// be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pm_problem_free(problem: *mut PmProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Runs `iterations` steps of DR or ADMM and writes the final original-space
/// iterate to `x_out` (n values).
///
/// `metric_m` (d values) and `rho` give `M = diag(ρ·m)`; a null `metric_m`
/// selects the Euclidean metric. `x0` (n values) is the start for the
/// original variables; null starts from zero. Slacks always start at zero.
///
/// # Safety
/// Pointers must be null or valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn pm_solve(
    problem: *const PmProblem,
    algorithm: PmAlgorithm,
    iterations: usize,
    gamma: f64,
    metric_m: *const f64,
    rho: f64,
    x0: *const f64,
    x_out: *mut f64,
) -> PmStatus {
    guard(|| {
        let prob = problem.as_ref().ok_or_else(|| null("problem"))?;
        let d = prob.sq.dim();
        let n = prob.sq.n_orig();
        let metric = if metric_m.is_null() {
            Metric::euclidean(d)
        } else {
            lift(Metric::new(read(metric_m, d, "metric_m")?.to_vec(), rho))?
        };
        let mut z0 = vec![0.0; d];
        if !x0.is_null() {
            z0[..n].copy_from_slice(read(x0, n, "x0")?);
        }
        let alg = match algorithm {
            PmAlgorithm::Dr => Algorithm::Dr,
            PmAlgorithm::Admm => Algorithm::Admm,
        };
        let cfg = SolverConfig::new(alg, iterations).with_gamma(gamma);
        let trace = lift(run(&prob.sq, &metric, &cfg, &z0, None))?;
        write(x_out, n, "x_out")?.copy_from_slice(trace.final_iterate());
        Ok(())
    })
}

/// Exact solution by active-set enumeration (at most 25 inequalities);
/// writes n values to `x_out`.
///
/// # Safety
/// `x_out` must be valid for n values.
#[no_mangle]
pub unsafe extern "C" fn pm_oracle_solve(problem: *const PmProblem, x_out: *mut f64) -> PmStatus {
    guard(|| {
        let prob = problem.as_ref().ok_or_else(|| null("problem"))?;
        let rec = lift(active_set_oracle_solve(&prob.qp))?;
        write(x_out, prob.qp.n(), "x_out")?.copy_from_slice(&rec.x_star);
        Ok(())
    })
}

/// Loads a checkpoint written by the `proxmetric` tool.
///
/// # Safety
/// `path` must be a NUL-terminated string, `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pm_model_load(path: *const c_char, out: *mut *mut PmModel) -> PmStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| (PmStatus::InvalidArgument, "path is not UTF-8".to_string()))?;
        let ck = lift(load_checkpoint(path))?;
        emit(
            out,
            PmModel {
                net: ck.net,
                head: ck.head,
            },
        )
    })
}

/// Input and output widths of the network.
///
/// # Safety
/// `model` must come from `pm_model_load`; outputs may be null.
#[no_mangle]
pub unsafe extern "C" fn pm_model_dims(
    model: *const PmModel,
    input: *mut usize,
    output: *mut usize,
) -> PmStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if !input.is_null() {
            *input = m.net.input_dim();
        }
        if !output.is_null() {
            *output = m.net.output_dim();
        }
        Ok(())
    })
}

/// Raw network output for parameters `p` (`p_len` values) into `out`
/// (`out_len` values, must equal the output width).
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn pm_model_forward(
    model: *const PmModel,
    p: *const f64,
    p_len: usize,
    out: *mut f64,
    out_len: usize,
) -> PmStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let y = lift(m.net.forward(read(p, p_len, "p")?))?;
        if y.len() != out_len {
            return Err((
                PmStatus::Shape,
                format!("output has {} values, buffer {out_len}", y.len()),
            ));
        }
        write(out, out_len, "out")?.copy_from_slice(&y);
        Ok(())
    })
}

/// Predicts the metric for parameters `p`: `d` weights into `m_out` and the
/// scale into `rho_out`. Fails for models saved without head bounds.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn pm_model_predict_metric(
    model: *const PmModel,
    p: *const f64,
    p_len: usize,
    d: usize,
    m_out: *mut f64,
    rho_out: *mut f64,
) -> PmStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let head = m.head.as_ref().ok_or_else(|| {
            (
                PmStatus::InvalidArgument,
                "model has no metric head".to_string(),
            )
        })?;
        let metric = lift(metric_forward(&m.net, head, read(p, p_len, "p")?, d))?;
        if rho_out.is_null() {
            return Err(null("rho_out"));
        }
        write(m_out, d, "m_out")?.copy_from_slice(metric.m());
        *rho_out = metric.rho();
        Ok(())
    })
}

/// # Safety
/// `model` must be null or come from `pm_model_load`, and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn pm_model_free(model: *mut PmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
