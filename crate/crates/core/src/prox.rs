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

//! Metric proximal splitting on the slack reformulation.
//!
//! With `f(z) = ½zᵀHz + q̃ᵀz + i{Rz + r = 0}` and `g(z) = i{z_s ≥ 0}`, the
//! proximal step on `f` in the metric `M = diag(ρ·m)` is one saddle-point
//! solve and the step on `g` clamps the slack coordinates. The KKT matrix
//! depends only on the metric, so it is factorized once per run and reused
//! by every iteration.
//!
//! The plain solvers ([`run`], [`dr_step`], [`admm_step`]) and the
//! tape-recorded [`unrolled_solve`] perform the same floating-point
//! operations in the same order, so their forward values agree bit for bit.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::qp::SlackQp;
use crate::tensor::{dist2, norm2, Lu, Tensor};

/// Added as `-δI` on the constraint block when `R` is row-rank-deficient.
pub const KKT_REGULARIZATION: f64 = 1e-10;

/// Diagonal metric `M = diag(ρ·m)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Metric {
    m: Vec<f64>,
    rho: f64,
}

impl Metric {
    pub fn new(m: Vec<f64>, rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "metric scale must be positive, got {rho}"
            )));
        }
        if let Some(bad) = m.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "metric weights must be positive, got {bad}"
            )));
        }
        if m.iter().any(|v| !(v * rho > 0.0)) {
            return Err(Error::InvalidArgument(
                "metric diagonal underflows to zero".into(),
            ));
        }
        Ok(Metric { m, rho })
    }

    /// Identity metric on `d` coordinates.
    pub fn euclidean(d: usize) -> Self {
        Metric {
            m: vec![1.0; d],
            rho: 1.0,
        }
    }

    pub fn m(&self) -> &[f64] {
        &self.m
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    /// Effective diagonal `ρ·m_i`.
    pub fn diag(&self) -> Vec<f64> {
        self.m.iter().map(|m| m * self.rho).collect()
    }
}

/// Tape-connected metric.
#[derive(Clone, Copy, Debug)]
pub struct MetricVar<'t> {
    pub m: Var<'t>,
    pub rho: Var<'t>,
}

impl<'t> MetricVar<'t> {
    /// Records a fixed metric as tape parameters.
    pub fn from_metric(tape: &'t Tape, metric: &Metric) -> Self {
        MetricVar {
            m: tape.param(Tensor::column(metric.m.clone())),
            rho: tape.param(Tensor::scalar(metric.rho)),
        }
    }

    pub fn diag(&self) -> Result<Var<'t>> {
        self.m.scale_by(self.rho)
    }

    pub fn to_metric(&self) -> Result<Metric> {
        let rho = self
            .rho
            .scalar_value()
            .ok_or_else(|| Error::shape("metric", "rho must be 1x1"))?;
        Metric::new(self.m.value().data().to_vec(), rho)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Dr,
    Admm,
}

impl Algorithm {
    pub const ALL: [Algorithm; 2] = [Algorithm::Dr, Algorithm::Admm];

    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Dr => "dr",
            Algorithm::Admm => "admm",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dr" | "douglas-rachford" => Ok(Algorithm::Dr),
            "admm" => Ok(Algorithm::Admm),
            other => Err(Error::InvalidArgument(format!(
                "unknown algorithm {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub gamma: f64,
    pub iterations: usize,
    pub algorithm: Algorithm,
    /// Lower bound on `‖x*‖₂` in the relative-error denominator.
    pub error_floor: f64,
}

impl SolverConfig {
    pub fn new(algorithm: Algorithm, iterations: usize) -> Self {
        SolverConfig {
            gamma: 1.0,
            iterations,
            algorithm,
            error_floor: 1e-6,
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_error_floor(mut self, floor: f64) -> Self {
        self.error_floor = floor;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidArgument(
                "at least one iteration is required".into(),
            ));
        }
        if !(self.error_floor > 0.0) {
            return Err(Error::InvalidArgument(
                "error floor must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// `‖x − x*‖₂ / max(‖x*‖₂, floor)`.
pub fn relative_error(x: &[f64], reference: &[f64], floor: f64) -> f64 {
    dist2(x, reference) / norm2(reference).max(floor)
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterateTrace {
    /// Original-variable readout after each iteration.
    pub iterates: Vec<Vec<f64>>,
    pub errors: Option<Vec<f64>>,
}

impl IterateTrace {
    pub fn final_iterate(&self) -> &[f64] {
        self.iterates.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Clamps slack coordinates at zero. For a diagonal metric the M-norm
/// projection onto `{z_s ≥ 0}` is coordinate-wise, so no metric is needed.
pub fn prox_g(z: &[f64], sq: &SlackQp) -> Vec<f64> {
    let start = sq.n_orig();
    z.iter()
        .enumerate()
        .map(|(i, &v)| if i >= start && v <= 0.0 { 0.0 } else { v })
        .collect()
}

fn check_len(op: &'static str, v: &[f64], d: usize) -> Result<()> {
    if v.len() != d {
        return Err(Error::shape(
            op,
            format!("vector has {} entries, d = {d}", v.len()),
        ));
    }
    Ok(())
}

/// Factorizes `kkt_base + diag(shift)`, retrying with a regularized
/// constraint block when the plain system is singular.
pub(crate) fn factor_kkt(sq: &SlackQp, shift: &[f64]) -> Result<Lu> {
    let attempt = |reg: f64| {
        let mut k = sq.kkt_base(reg);
        for (i, s) in shift.iter().enumerate() {
            let kk = k.get(i, i) + s;
            k.set(i, i, kk);
        }
        Lu::factor(&k)
    };
    match attempt(0.0) {
        Err(Error::Singular { .. }) => attempt(KKT_REGULARIZATION),
        other => other,
    }
}

fn factor_kkt_var<'t>(tape: &'t Tape, sq: &SlackQp, shift: Var<'t>) -> Result<Var<'t>> {
    match tape.factor_shifted(&sq.kkt_base(0.0), shift) {
        Err(Error::Singular { .. }) => tape.factor_shifted(&sq.kkt_base(KKT_REGULARIZATION), shift),
        other => other,
    }
}

fn neg_r(sq: &SlackQp) -> Vec<f64> {
    sq.r_vec().iter().map(|r| -r).collect()
}

/// Factorized DR operator for a fixed metric.
struct DrKernel<'a> {
    sq: &'a SlackQp,
    lu: Lu,
    weight: Vec<f64>,
    neg_r: Vec<f64>,
}

impl<'a> DrKernel<'a> {
    fn new(sq: &'a SlackQp, metric: &Metric, gamma: f64) -> Result<Self> {
        check_len("dr", metric.m(), sq.dim())?;
        let c = 2.0 / gamma;
        let weight: Vec<f64> = metric.diag().iter().map(|v| v * c).collect();
        let lu = factor_kkt(sq, &weight)?;
        Ok(DrKernel {
            sq,
            lu,
            weight,
            neg_r: neg_r(sq),
        })
    }

    /// `argmin ½zᵀHz + q̃ᵀz + (1/γ)‖z − v‖²_M  s.t.  Rz + r = 0`.
    fn prox_f(&self, v: &[f64]) -> Vec<f64> {
        let d = self.sq.dim();
        let mut rhs = Vec::with_capacity(d + self.neg_r.len());
        rhs.extend((0..d).map(|i| self.weight[i] * v[i] - self.sq.qt()[i]));
        rhs.extend_from_slice(&self.neg_r);
        let mut sol = self.lu.solve(&rhs);
        sol.truncate(d);
        sol
    }

    /// Returns `(x_next, y)`.
    fn step(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let y = prox_g(x, self.sq);
        let v: Vec<f64> = y.iter().zip(x).map(|(y, x)| y * 2.0 - x).collect();
        let z = self.prox_f(&v);
        let next = x
            .iter()
            .zip(&z)
            .zip(&y)
            .map(|((x, z), y)| (x + z) - y)
            .collect();
        (next, y)
    }
}

/// Factorized ADMM operator for a fixed metric.
struct AdmmKernel<'a> {
    sq: &'a SlackQp,
    lu: Lu,
    diag: Vec<f64>,
    weight: Vec<f64>,
    gamma_diag: Vec<f64>,
    neg_r: Vec<f64>,
}

impl<'a> AdmmKernel<'a> {
    fn new(sq: &'a SlackQp, metric: &Metric, gamma: f64) -> Result<Self> {
        check_len("admm", metric.m(), sq.dim())?;
        let diag = metric.diag();
        let weight: Vec<f64> = diag.iter().map(|m| (m * m) * gamma).collect();
        let gamma_diag: Vec<f64> = diag.iter().map(|m| m * gamma).collect();
        let lu = factor_kkt(sq, &weight)?;
        Ok(AdmmKernel {
            sq,
            lu,
            diag,
            weight,
            gamma_diag,
            neg_r: neg_r(sq),
        })
    }

    /// Returns `(x', y', u')`.
    fn step(&self, y: &[f64], u: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let d = self.sq.dim();
        let mut rhs = Vec::with_capacity(d + self.neg_r.len());
        rhs.extend(
            (0..d).map(|i| (self.weight[i] * y[i] - self.gamma_diag[i] * u[i]) - self.sq.qt()[i]),
        );
        rhs.extend_from_slice(&self.neg_r);
        let mut x = self.lu.solve(&rhs);
        x.truncate(d);
        let v: Vec<f64> = (0..d).map(|i| x[i] + u[i] / self.diag[i]).collect();
        let y_next = prox_g(&v, self.sq);
        let u_next = (0..d)
            .map(|i| u[i] + self.diag[i] * (x[i] - y_next[i]))
            .collect();
        (x, y_next, u_next)
    }
}

pub fn prox_f(z: &[f64], metric: &Metric, gamma: f64, sq: &SlackQp) -> Result<Vec<f64>> {
    check_len("prox_f", z, sq.dim())?;
    Ok(DrKernel::new(sq, metric, gamma)?.prox_f(z))
}

/// One Douglas-Rachford iteration; returns `(x_next, y)` where `y` is the
/// shadow iterate `prox_g(x)`.
pub fn dr_step(
    x: &[f64],
    metric: &Metric,
    gamma: f64,
    sq: &SlackQp,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_len("dr_step", x, sq.dim())?;
    Ok(DrKernel::new(sq, metric, gamma)?.step(x))
}

/// One preconditioned ADMM iteration; `x` is accepted for symmetry with the
/// iterate triple but the update only reads `y` and `u`.
pub fn admm_step(
    x: &[f64],
    y: &[f64],
    u: &[f64],
    metric: &Metric,
    gamma: f64,
    sq: &SlackQp,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    for v in [x, y, u] {
        check_len("admm_step", v, sq.dim())?;
    }
    Ok(AdmmKernel::new(sq, metric, gamma)?.step(y, u))
}

fn check_start(sq: &SlackQp, z0: &[f64]) -> Result<()> {
    check_len("run", z0, sq.dim())?;
    if z0[sq.slack_idx()].iter().any(|s| *s != 0.0) {
        return Err(Error::InvalidArgument(
            "slack coordinates of the start point must be zero".into(),
        ));
    }
    Ok(())
}

/// Runs `cfg.iterations` steps from `z0` and records the readout of each:
/// the x-part of the shadow `y_k` for DR, of `x_{k+1}` for ADMM.
pub fn run(
    sq: &SlackQp,
    metric: &Metric,
    cfg: &SolverConfig,
    z0: &[f64],
    reference: Option<&[f64]>,
) -> Result<IterateTrace> {
    cfg.validate()?;
    check_start(sq, z0)?;
    let n = sq.n_orig();
    if let Some(r) = reference {
        if r.len() != n {
            return Err(Error::shape(
                "run",
                format!("reference has {} entries, n = {n}", r.len()),
            ));
        }
    }
    let mut iterates = Vec::with_capacity(cfg.iterations);
    match cfg.algorithm {
        Algorithm::Dr => {
            let kernel = DrKernel::new(sq, metric, cfg.gamma)?;
            let mut x = z0.to_vec();
            for _ in 0..cfg.iterations {
                let (next, y) = kernel.step(&x);
                iterates.push(y[..n].to_vec());
                x = next;
            }
        }
        Algorithm::Admm => {
            let kernel = AdmmKernel::new(sq, metric, cfg.gamma)?;
            let mut y = z0.to_vec();
            let mut u = vec![0.0; sq.dim()];
            for _ in 0..cfg.iterations {
                let (x, y_next, u_next) = kernel.step(&y, &u);
                iterates.push(x[..n].to_vec());
                y = y_next;
                u = u_next;
            }
        }
    }
    if iterates.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("solver run"));
    }
    let errors = reference.map(|r| {
        iterates
            .iter()
            .map(|x| relative_error(x, r, cfg.error_floor))
            .collect()
    });
    Ok(IterateTrace { iterates, errors })
}

/// Euclidean-style DR until the carried iterate moves less than `tol` in
/// the sup norm; returns the x-part of the final shadow iterate and the
/// iteration count.
pub fn dr_solve_to_tolerance(
    sq: &SlackQp,
    metric: &Metric,
    gamma: f64,
    z0: &[f64],
    tol: f64,
    max_iterations: usize,
) -> Result<(Vec<f64>, usize)> {
    check_start(sq, z0)?;
    let kernel = DrKernel::new(sq, metric, gamma)?;
    let mut x = z0.to_vec();
    let mut change = f64::INFINITY;
    for it in 1..=max_iterations {
        let (next, _) = kernel.step(&x);
        change = next
            .iter()
            .zip(&x)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        x = next;
        if !change.is_finite() {
            return Err(Error::NonFinite("dr_solve_to_tolerance"));
        }
        if change < tol {
            let y = prox_g(&x, sq);
            return Ok((y[..sq.n_orig()].to_vec(), it));
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iterations,
        last_change: change,
    })
}

/// Differentiable `k`-step solve: forward values match [`run`]; the result
/// (the x-part readout after the last iteration) depends on the tape through
/// `metric` and `z0`.
pub fn unrolled_solve<'t>(
    tape: &'t Tape,
    sq: &SlackQp,
    metric: MetricVar<'t>,
    cfg: &SolverConfig,
    z0: Var<'t>,
) -> Result<Var<'t>> {
    cfg.validate()?;
    let d = sq.dim();
    let n = sq.n_orig();
    if z0.value().shape() != (d, 1) || metric.m.value().shape() != (d, 1) {
        return Err(Error::shape(
            "unrolled_solve",
            format!(
                "z0 {:?}, m {:?}, d = {d}",
                z0.value().shape(),
                metric.m.value().shape()
            ),
        ));
    }
    let qt = tape.constant(Tensor::column(sq.qt().to_vec()));
    let neg_r = tape.constant(Tensor::column(neg_r(sq)));
    let diag = metric.diag()?;
    match cfg.algorithm {
        Algorithm::Dr => {
            let weight = diag.scale(2.0 / cfg.gamma)?;
            let factor = factor_kkt_var(tape, sq, weight)?;
            let mut x = z0;
            let mut readout = None;
            for _ in 0..cfg.iterations {
                let y = x.clamp_tail(n)?;
                let v = y.scale(2.0)?.sub(x)?;
                let rhs = weight.mul(v)?.sub(qt)?.concat(neg_r)?;
                let z = factor.solve(rhs)?.slice(0, d)?;
                x = x.add(z)?.sub(y)?;
                readout = Some(y);
            }
            readout.expect("iterations ≥ 1").slice(0, n)
        }
        Algorithm::Admm => {
            let weight = diag.mul(diag)?.scale(cfg.gamma)?;
            let gamma_diag = diag.scale(cfg.gamma)?;
            let factor = factor_kkt_var(tape, sq, weight)?;
            let mut y = z0;
            let mut u = tape.constant(Tensor::zeros(d, 1));
            let mut readout = None;
            for _ in 0..cfg.iterations {
                let rhs = weight
                    .mul(y)?
                    .sub(gamma_diag.mul(u)?)?
                    .sub(qt)?
                    .concat(neg_r)?;
                let x = factor.solve(rhs)?.slice(0, d)?;
                let v = x.add(u.div(diag)?)?;
                let y_next = v.clamp_tail(n)?;
                u = u.add(diag.mul(x.sub(y_next)?)?)?;
                y = y_next;
                readout = Some(x);
            }
            readout.expect("iterations ≥ 1").slice(0, n)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check;
    use crate::problems::toy_instance;
    use crate::qp::{reformulate, QpProblem};
    use proptest::prelude::*;

    fn free_qp(q: Tensor) -> SlackQp {
        let n = q.rows();
        let p = QpProblem::new(
            q,
            vec![0.0; n],
            Tensor::zeros(0, n),
            vec![],
            Tensor::zeros(0, n),
            vec![],
        )
        .unwrap();
        reformulate(&p).unwrap()
    }

    fn toy(p1: f64, p2: f64) -> SlackQp {
        reformulate(&toy_instance(p1, p2).unwrap()).unwrap()
    }

    #[test]
    fn prox_g_clamps_only_slacks() {
        let sq = toy(0.0, 0.0);
        let z = [-3.0, 2.0, 1.0, -2.0, 0.0, 5.0];
        assert_eq!(prox_g(&z, &sq), vec![-3.0, 2.0, 1.0, 0.0, 0.0, 5.0]);
        let feasible = [1.0, -1.0, 0.0, 3.0, 2.0, 1.0];
        assert_eq!(prox_g(&feasible, &sq), feasible.to_vec());
    }

    proptest! {
        #[test]
        fn prox_g_is_idempotent(z in proptest::collection::vec(-1e6f64..1e6, 6)) {
            let sq = toy(0.3, -0.7);
            let once = prox_g(&z, &sq);
            prop_assert_eq!(prox_g(&once, &sq), once.clone());
            for (a, b) in once.iter().zip(&z) {
                prop_assert!((a - b).abs() <= b.abs());
            }
        }
    }

    #[test]
    fn prox_f_closed_forms() {
        let zero = free_qp(Tensor::zeros(3, 3));
        let z = [1.5, -2.0, 0.25];
        let metric = Metric::new(vec![0.3, 2.0, 7.0], 0.4).unwrap();
        let out = prox_f(&z, &metric, 0.7, &zero).unwrap();
        for (a, b) in out.iter().zip(&z) {
            assert!((a - b).abs() < 1e-14);
        }

        let quad = free_qp(Tensor::diag(&[2.0, 2.0]));
        let out = prox_f(&[3.0, -1.0], &Metric::euclidean(2), 1.0, &quad).unwrap();
        assert!((out[0] - 1.5).abs() < 1e-14 && (out[1] + 0.5).abs() < 1e-14);

        let line = QpProblem::new(
            Tensor::zeros(2, 2),
            vec![0.0, 0.0],
            Tensor::from_rows(&[&[1.0, 1.0]]).unwrap(),
            vec![1.0],
            Tensor::zeros(0, 2),
            vec![],
        )
        .unwrap();
        let sq = reformulate(&line).unwrap();
        let out = prox_f(&[0.0, 0.0], &Metric::euclidean(2), 1.0, &sq).unwrap();
        assert!((out[0] - 0.5).abs() < 1e-14 && (out[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn prox_f_satisfies_equalities() {
        let sq = toy(0.4, 1.1);
        let metric = Metric::new(vec![0.2, 4.0, 1.0, 3.0, 0.5, 2.5], 0.3).unwrap();
        let out = prox_f(&[2.0, -1.0, 0.3, -0.4, 1.0, 0.0], &metric, 1.3, &sq).unwrap();
        let res = crate::qp::residuals(&sq, &out).unwrap();
        assert!(res.eq_norm <= 1e-8, "{}", res.eq_norm);
    }

    #[test]
    fn dr_step_fixed_point_and_first_step() {
        let sq = toy(0.0, 0.0);
        let e = Metric::euclidean(6);
        let (_, y) = dr_step(&[0.0; 6], &e, 1.0, &sq).unwrap();
        assert_eq!(&y[..2], &[0.0, 0.0]);

        let (x_star, _) =
            dr_solve_to_tolerance(&toy(0.7, 0.2), &e, 1.0, &[0.0; 6], 1e-14, 100_000).unwrap();
        let sq = toy(0.7, 0.2);
        let mut x = vec![0.0; 6];
        for _ in 0..5000 {
            x = dr_step(&x, &e, 1.0, &sq).unwrap().0;
        }
        let (next, y) = dr_step(&x, &e, 1.0, &sq).unwrap();
        for (a, b) in next.iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(dist2(&y[..2], &x_star) < 1e-12);
    }

    #[test]
    fn admm_one_dimensional_step() {
        let sq = free_qp(Tensor::from_rows(&[&[2.0]]).unwrap());
        let (x, y, u) = admm_step(&[1.0], &[1.0], &[0.0], &Metric::euclidean(1), 1.0, &sq).unwrap();
        assert!((x[0] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(y, x);
        assert_eq!(u, vec![0.0]);
    }

    #[test]
    fn admm_fixed_point_is_stationary() {
        let sq = toy(-0.5, 0.9);
        let e = Metric::euclidean(6);
        let (mut y, mut u) = (vec![0.0; 6], vec![0.0; 6]);
        for _ in 0..5000 {
            let (_, y2, u2) = admm_step(&y, &y, &u, &e, 1.0, &sq).unwrap();
            y = y2;
            u = u2;
        }
        let (x, y2, u2) = admm_step(&y, &y, &u, &e, 1.0, &sq).unwrap();
        assert!(dist2(&x, &y2) < 1e-12);
        assert!(dist2(&u, &u2) < 1e-12);
    }

    #[test]
    fn scalar_metric_matches_rescaled_penalty() {
        let sq = toy(0.3, 0.6);
        let (c, gamma) = (1.7, 0.8);
        let scaled = Metric::new(vec![c; 6], 1.0).unwrap();
        let a = run(
            &sq,
            &scaled,
            &SolverConfig::new(Algorithm::Admm, 60).with_gamma(gamma),
            &[0.0; 6],
            None,
        )
        .unwrap();
        let b = run(
            &sq,
            &Metric::euclidean(6),
            &SolverConfig::new(Algorithm::Admm, 60).with_gamma(gamma * c * c),
            &[0.0; 6],
            None,
        )
        .unwrap();
        for (xa, xb) in a.iterates.iter().zip(&b.iterates) {
            assert!(dist2(xa, xb) < 1e-10);
        }
    }

    #[test]
    fn run_records_every_iteration() {
        let sq = toy(0.0, 0.0);
        let cfg = SolverConfig::new(Algorithm::Dr, 500);
        let trace = run(
            &sq,
            &Metric::euclidean(6),
            &cfg,
            &[0.3, -0.2, 0.0, 0.0, 0.0, 0.0],
            Some(&[0.0, 0.0]),
        )
        .unwrap();
        assert_eq!(trace.iterates.len(), 500);
        assert_eq!(trace.errors.as_ref().unwrap().len(), 500);
        assert!(norm2(trace.final_iterate()) < 1e-6);

        assert!(run(
            &sq,
            &Metric::euclidean(6),
            &cfg,
            &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
            None
        )
        .is_err());
        assert!(run(
            &sq,
            &Metric::euclidean(6),
            &SolverConfig::new(Algorithm::Dr, 0),
            &[0.0; 6],
            None
        )
        .is_err());
    }

    #[test]
    fn unrolled_matches_run_bitwise() {
        let sq = toy(0.8, -0.4);
        let metric = Metric::new(vec![0.3, 1.9, 0.6, 4.1, 2.2, 0.9], 0.45).unwrap();
        let z0 = [0.2, -0.7, 0.0, 0.0, 0.0, 0.0];
        for alg in Algorithm::ALL {
            for k in [1, 7, 40] {
                let cfg = SolverConfig::new(alg, k).with_gamma(1.3);
                let plain = run(&sq, &metric, &cfg, &z0, None).unwrap();
                let tape = Tape::new();
                let mv = MetricVar::from_metric(&tape, &metric);
                let z = tape.constant(Tensor::column(z0.to_vec()));
                let out = unrolled_solve(&tape, &sq, mv, &cfg, z).unwrap();
                assert_eq!(out.value().data(), plain.final_iterate(), "{alg} k={k}");
            }
        }
        let tape = Tape::new();
        let mv = MetricVar::from_metric(&tape, &metric);
        let z = tape.constant(Tensor::column(z0.to_vec()));
        assert!(unrolled_solve(&tape, &sq, mv, &SolverConfig::new(Algorithm::Dr, 0), z).is_err());
    }

    #[test]
    fn unrolled_gradient_wrt_rho() {
        let sq = toy(0.6, 0.1);
        let target = Tensor::column(vec![0.3, 0.3]);
        let m = Tensor::column(vec![0.5, 1.5, 0.8, 2.0, 1.2, 0.7]);
        for alg in Algorithm::ALL {
            let cfg = SolverConfig::new(alg, 5);
            let err = grad_check(
                |tape, rho| {
                    let metric = MetricVar {
                        m: tape.constant(m.clone()),
                        rho,
                    };
                    let z0 = tape.constant(Tensor::column(vec![-0.4, 0.9, 0.0, 0.0, 0.0, 0.0]));
                    let x = unrolled_solve(tape, &sq, metric, &cfg, z0)?;
                    x.mse(tape.constant(target.clone()))
                },
                &Tensor::scalar(0.6),
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-4, "{alg}: {err}");
        }
    }

    #[test]
    fn algorithm_names_round_trip() {
        for alg in Algorithm::ALL {
            assert_eq!(alg.as_str().parse::<Algorithm>().unwrap(), alg);
        }
        assert!("pdhg".parse::<Algorithm>().is_err());
    }
}
