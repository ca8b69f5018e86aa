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

//! Parametric QP families: a translated-box toy problem, mean-variance
//! portfolio allocation, and quadcopter reference-tracking MPC.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::qp::QpProblem;
use crate::tensor::Tensor;

/// A distribution of parameter vectors `p` together with the map `p -> QP`.
pub trait ProblemFamily {
    fn name(&self) -> &str;
    /// Length of `p`.
    fn param_dim(&self) -> usize;
    /// Number of original decision variables.
    fn n(&self) -> usize;
    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64>;
    fn instance(&self, p: &[f64]) -> Result<QpProblem>;
}

fn check_param_len(name: &'static str, p: &[f64], expected: usize) -> Result<()> {
    if p.len() != expected {
        return Err(Error::shape(
            name,
            format!("parameter has {} entries, expected {expected}", p.len()),
        ));
    }
    Ok(())
}

/// `min x² + y²` over a unit box translated by `(p₁, p₂)`:
///
/// ```text
/// -x - y + p₁      ≤ 0
///  x + y - p₁ - 1  ≤ 0
///  x - y + p₂ - 1  ≤ 0
/// -x + y - p₂      ≤ 0
/// ```
pub fn toy_instance(p1: f64, p2: f64) -> Result<QpProblem> {
    QpProblem::new(
        Tensor::diag(&[2.0, 2.0]),
        vec![0.0, 0.0],
        Tensor::zeros(0, 2),
        vec![],
        Tensor::from_rows(&[&[-1.0, -1.0], &[1.0, 1.0], &[1.0, -1.0], &[-1.0, 1.0]])?,
        vec![p1, -p1 - 1.0, p2 - 1.0, -p2],
    )
}

/// Uniform parameters on `[lo, hi]²`.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyFamily {
    pub lo: f64,
    pub hi: f64,
}

impl Default for ToyFamily {
    fn default() -> Self {
        ToyFamily { lo: -2.0, hi: 2.0 }
    }
}

impl ProblemFamily for ToyFamily {
    fn name(&self) -> &str {
        "toy"
    }

    fn param_dim(&self) -> usize {
        2
    }

    fn n(&self) -> usize {
        2
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        vec![
            rng.random_range(self.lo..=self.hi),
            rng.random_range(self.lo..=self.hi),
        ]
    }

    fn instance(&self, p: &[f64]) -> Result<QpProblem> {
        check_param_len("toy_instance", p, 2)?;
        toy_instance(p[0], p[1])
    }
}

/// Mean-variance allocation `min xᵀΣx - pᵀx  s.t.  1ᵀx = budget, x ≥ 0`
/// with `p` drawn around `base_mu`.
#[derive(Clone, Debug, PartialEq)]
pub struct PortfolioFamily {
    pub sigma: Tensor,
    pub base_mu: Vec<f64>,
    pub noise_sigma: f64,
    pub budget: f64,
}

impl PortfolioFamily {
    pub fn new(sigma: Tensor, base_mu: Vec<f64>, noise_sigma: f64, budget: f64) -> Result<Self> {
        let n = base_mu.len();
        if sigma.shape() != (n, n) {
            return Err(Error::shape(
                "portfolio",
                format!("Σ is {:?} for {n} assets", sigma.shape()),
            ));
        }
        if !(budget > 0.0) || !(noise_sigma >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "budget must be positive and noise nonnegative (budget {budget}, noise {noise_sigma})"
            )));
        }
        Ok(PortfolioFamily {
            sigma,
            base_mu,
            noise_sigma,
            budget,
        })
    }
}

/// Synthetic factor-model market: `Σ = FFᵀ + diag(δ)` with `F` standard
/// normal scaled by `1/√n_factors` and `δ ~ U[0.05, 0.15]`; mean returns are
/// standard normal scaled by 0.1.
pub fn synth_portfolio_family(
    n: usize,
    n_factors: usize,
    noise_sigma: f64,
    budget: f64,
    seed: u64,
) -> Result<PortfolioFamily> {
    use rand::SeedableRng;
    if n < 2 || n_factors == 0 {
        return Err(Error::InvalidArgument(format!(
            "portfolio needs n ≥ 2 and at least one factor (n {n}, factors {n_factors})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (n_factors as f64).sqrt();
    let f_data: Vec<f64> = (0..n * n_factors)
        .map(|_| scale * Distribution::<f64>::sample(&StandardNormal, &mut rng))
        .collect();
    let f = Tensor::new(n, n_factors, f_data)?;
    let mut sigma = f.matmul(&f.transpose())?;
    for i in 0..n {
        let v = sigma.get(i, i) + rng.random_range(0.05..=0.15);
        sigma.set(i, i, v);
    }
    // exact symmetry
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (sigma.get(i, j) + sigma.get(j, i));
            sigma.set(i, j, avg);
            sigma.set(j, i, avg);
        }
    }
    let base_mu = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            0.1 * z
        })
        .collect();
    PortfolioFamily::new(sigma, base_mu, noise_sigma, budget)
}

/// `Q = 2Σ`, `q = -p`, one budget row and `-x ≤ 0` for every asset.
pub fn portfolio_instance(fam: &PortfolioFamily, p: &[f64]) -> Result<QpProblem> {
    let n = fam.base_mu.len();
    check_param_len("portfolio_instance", p, n)?;
    let mut q = fam.sigma.clone();
    for v in q.data_mut() {
        *v *= 2.0;
    }
    let mut neg_eye = Tensor::identity(n);
    for v in neg_eye.data_mut() {
        *v = -*v;
    }
    QpProblem::new(
        q,
        p.iter().map(|v| -v).collect(),
        Tensor::new(1, n, vec![1.0; n])?,
        vec![fam.budget],
        neg_eye,
        vec![0.0; n],
    )
}

impl ProblemFamily for PortfolioFamily {
    fn name(&self) -> &str {
        "portfolio"
    }

    fn param_dim(&self) -> usize {
        self.base_mu.len()
    }

    fn n(&self) -> usize {
        self.base_mu.len()
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.base_mu
            .iter()
            .map(|m| {
                let z: f64 = StandardNormal.sample(rng);
                m + self.noise_sigma * z
            })
            .collect()
    }

    fn instance(&self, p: &[f64]) -> Result<QpProblem> {
        portfolio_instance(self, p)
    }
}

/// Reads a price table (header of asset names, one row per period) and
/// returns the sample covariance and mean of per-period price differentials.
pub fn ingest_prices_csv(path: impl AsRef<Path>) -> Result<(Tensor, Vec<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())
        .map_err(|e| Error::Parse(e.to_string()))?;
    let n = reader
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .len();
    let mut prices: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(e.to_string()))?;
        if record.len() != n {
            return Err(Error::Parse(format!(
                "row {} has {} cells, expected {n}",
                line + 2,
                record.len()
            )));
        }
        let row = record
            .iter()
            .map(|cell| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        Error::Parse(format!("row {}: non-numeric cell {cell:?}", line + 2))
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        prices.push(row);
    }
    if n == 0 || prices.len() < 2 {
        return Err(Error::Parse(format!(
            "need at least two price rows and one asset, got {} rows",
            prices.len()
        )));
    }
    let diffs: Vec<Vec<f64>> = prices
        .windows(2)
        .map(|w| w[1].iter().zip(&w[0]).map(|(b, a)| b - a).collect())
        .collect();
    let t = diffs.len() as f64;
    let mean: Vec<f64> = (0..n)
        .map(|j| diffs.iter().map(|d| d[j]).sum::<f64>() / t)
        .collect();
    let denom = (t - 1.0).max(1.0);
    let mut sigma = Tensor::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let c: f64 = diffs
                .iter()
                .map(|d| (d[i] - mean[i]) * (d[j] - mean[j]))
                .sum::<f64>()
                / denom;
            sigma.set(i, j, c + if i == j { 1e-8 } else { 0.0 });
        }
    }
    Ok((sigma, mean))
}

pub const QUAD_STATES: usize = 12;
pub const QUAD_INPUTS: usize = 4;

/// Linear quadcopter dynamics with tracking cost and box bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadcopterModel {
    pub a: Tensor,
    pub b: Tensor,
    pub q_diag: Vec<f64>,
    pub r_diag: Vec<f64>,
    pub horizon: usize,
    pub reference: Vec<f64>,
    pub u_lo: Vec<f64>,
    pub u_hi: Vec<f64>,
    /// Infinite entries mark unbounded state coordinates.
    pub x_lo: Vec<f64>,
    pub x_hi: Vec<f64>,
}

#[rustfmt::skip]
const QUAD_A: [f64; 144] = [
    1.0,    0.0,    0.0, 0.0, 0.0, 0.0, 0.1,    0.0,    0.0, 0.0,    0.0,    0.0,
    0.0,    1.0,    0.0, 0.0, 0.0, 0.0, 0.0,    0.1,    0.0, 0.0,    0.0,    0.0,
    0.0,    0.0,    1.0, 0.0, 0.0, 0.0, 0.0,    0.0,    0.1, 0.0,    0.0,    0.0,
    0.0488, 0.0,    0.0, 1.0, 0.0, 0.0, 0.0016, 0.0,    0.0, 0.0992, 0.0,    0.0,
    0.0,   -0.0488, 0.0, 0.0, 1.0, 0.0, 0.0,   -0.0016, 0.0, 0.0,    0.0992, 0.0,
    0.0,    0.0,    0.0, 0.0, 0.0, 1.0, 0.0,    0.0,    0.0, 0.0,    0.0,    0.0992,
    0.0,    0.0,    0.0, 0.0, 0.0, 0.0, 1.0,    0.0,    0.0, 0.0,    0.0,    0.0,
    0.0,    0.0,    0.0, 0.0, 0.0, 0.0, 0.0,    1.0,    0.0, 0.0,    0.0,    0.0,
    0.0,    0.0,    0.0, 0.0, 0.0, 0.0, 0.0,    0.0,    1.0, 0.0,    0.0,    0.0,
    0.9734, 0.0,    0.0, 0.0, 0.0, 0.0, 0.0488, 0.0,    0.0, 0.9846, 0.0,    0.0,
    0.0,   -0.9734, 0.0, 0.0, 0.0, 0.0, 0.0,   -0.0488, 0.0, 0.0,    0.9846, 0.0,
    0.0,    0.0,    0.0, 0.0, 0.0, 0.0, 0.0,    0.0,    0.0, 0.0,    0.0,    0.9846,
];

#[rustfmt::skip]
const QUAD_B: [f64; 48] = [
     0.0,    -0.0726,  0.0,     0.0726,
    -0.0726,  0.0,     0.0726,  0.0,
    -0.0152,  0.0152, -0.0152,  0.0152,
     0.0,    -0.0006,  0.0,     0.0006,
     0.0006,  0.0,    -0.0006,  0.0,
     0.0106,  0.0106,  0.0106,  0.0106,
     0.0,    -1.4512,  0.0,     1.4512,
    -1.4512,  0.0,     1.4512,  0.0,
    -0.3049,  0.3049, -0.3049,  0.3049,
     0.0,    -0.0236,  0.0,     0.0236,
     0.0236,  0.0,    -0.0236,  0.0,
     0.2107,  0.2107,  0.2107,  0.2107,
];

const HOVER_THRUST: f64 = 10.5916;

impl QuadcopterModel {
    /// Benchmark quadcopter: tracking weights on attitude and rates, thrust
    /// bounds around hover, and the first two states within ±π/6.
    pub fn benchmark(horizon: usize) -> Self {
        let mut x_lo = vec![f64::NEG_INFINITY; QUAD_STATES];
        let mut x_hi = vec![f64::INFINITY; QUAD_STATES];
        for i in 0..2 {
            x_lo[i] = -PI / 6.0;
            x_hi[i] = PI / 6.0;
        }
        QuadcopterModel {
            a: Tensor::new(QUAD_STATES, QUAD_STATES, QUAD_A.to_vec()).expect("12x12"),
            b: Tensor::new(QUAD_STATES, QUAD_INPUTS, QUAD_B.to_vec()).expect("12x4"),
            q_diag: vec![
                0.0, 0.0, 10.0, 10.0, 10.0, 10.0, 0.0, 0.0, 0.0, 5.0, 5.0, 5.0,
            ],
            r_diag: vec![0.1; QUAD_INPUTS],
            horizon,
            reference: vec![0.0; QUAD_STATES],
            u_lo: vec![9.6 - HOVER_THRUST; QUAD_INPUTS],
            u_hi: vec![13.0 - HOVER_THRUST; QUAD_INPUTS],
            x_lo,
            x_hi,
        }
    }

    pub fn nx(&self) -> usize {
        self.a.rows()
    }

    pub fn nu(&self) -> usize {
        self.b.cols()
    }

    /// Stages `k = 0..=horizon`, each holding `(u_k, x_{k+1})`.
    pub fn stages(&self) -> usize {
        self.horizon + 1
    }

    pub fn n_vars(&self) -> usize {
        self.stages() * (self.nx() + self.nu())
    }

    pub fn n_eq(&self) -> usize {
        self.stages() * self.nx()
    }

    fn bounded_states(&self) -> Vec<usize> {
        (0..self.nx())
            .filter(|&i| self.x_lo[i].is_finite() || self.x_hi[i].is_finite())
            .collect()
    }

    pub fn n_ineq(&self) -> usize {
        let per_state: usize = (0..self.nx())
            .map(|i| self.x_lo[i].is_finite() as usize + self.x_hi[i].is_finite() as usize)
            .sum();
        let per_input: usize = (0..self.nu())
            .map(|i| self.u_lo[i].is_finite() as usize + self.u_hi[i].is_finite() as usize)
            .sum();
        self.stages() * (per_state + per_input)
    }

    /// Offset of `u_k` in the stacked decision vector.
    pub fn u_offset(&self, k: usize) -> usize {
        k * (self.nx() + self.nu())
    }

    /// Offset of `x_{k+1}` in the stacked decision vector.
    pub fn x_offset(&self, k: usize) -> usize {
        self.u_offset(k) + self.nu()
    }

    fn validate(&self) -> Result<()> {
        let nx = self.nx();
        let nu = self.nu();
        let ok = self.a.shape() == (nx, nx)
            && self.b.rows() == nx
            && self.q_diag.len() == nx
            && self.r_diag.len() == nu
            && self.reference.len() == nx
            && self.u_lo.len() == nu
            && self.u_hi.len() == nu
            && self.x_lo.len() == nx
            && self.x_hi.len() == nx
            && self.horizon >= 1;
        if !ok {
            return Err(Error::shape(
                "quadcopter_instance",
                "model dimensions are inconsistent",
            ));
        }
        if self.q_diag.iter().chain(&self.r_diag).any(|v| *v < 0.0) {
            return Err(Error::InvalidArgument(
                "Q and R diagonals must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Reference-tracking MPC from initial state `p`.
///
/// Decision vector: `(u_0, x_1, u_1, x_2, …, u_N, x_{N+1})`. Equalities
/// encode `x_1 = A p + B u_0` and `x_{k+1} = A x_k + B u_k`; inequalities are
/// per stage `u ≤ u_hi`, `-u ≤ -u_lo`, then the finite state bounds in the
/// same upper/lower order.
pub fn quadcopter_instance(model: &QuadcopterModel, p: &[f64]) -> Result<QpProblem> {
    model.validate()?;
    let nx = model.nx();
    let nu = model.nu();
    check_param_len("quadcopter_instance", p, nx)?;
    let n = model.n_vars();
    let stages = model.stages();

    let mut hess = Tensor::zeros(n, n);
    let mut lin = vec![0.0; n];
    for k in 0..stages {
        let uo = model.u_offset(k);
        let xo = model.x_offset(k);
        for i in 0..nu {
            hess.set(uo + i, uo + i, 2.0 * model.r_diag[i]);
        }
        for i in 0..nx {
            hess.set(xo + i, xo + i, 2.0 * model.q_diag[i]);
            lin[xo + i] = -2.0 * model.q_diag[i] * model.reference[i];
        }
    }

    let m = model.n_eq();
    let mut eq = Tensor::zeros(m, n);
    let mut eq_rhs = vec![0.0; m];
    let ap = model.a.mul_vec(p)?;
    for k in 0..stages {
        let row0 = k * nx;
        let xo = model.x_offset(k);
        let uo = model.u_offset(k);
        for i in 0..nx {
            eq.set(row0 + i, xo + i, 1.0);
            for j in 0..nu {
                eq.set(row0 + i, uo + j, -model.b.get(i, j));
            }
            if k == 0 {
                eq_rhs[row0 + i] = ap[i];
            } else {
                let prev = model.x_offset(k - 1);
                for j in 0..nx {
                    let a = model.a.get(i, j);
                    if a != 0.0 {
                        eq.set(row0 + i, prev + j, -a);
                    }
                }
            }
        }
    }

    let mut rows: Vec<(usize, f64, f64)> = Vec::with_capacity(model.n_ineq());
    let bounded = model.bounded_states();
    for k in 0..stages {
        let uo = model.u_offset(k);
        let xo = model.x_offset(k);
        for i in 0..nu {
            if model.u_hi[i].is_finite() {
                rows.push((uo + i, 1.0, -model.u_hi[i]));
            }
        }
        for i in 0..nu {
            if model.u_lo[i].is_finite() {
                rows.push((uo + i, -1.0, model.u_lo[i]));
            }
        }
        for &i in &bounded {
            if model.x_hi[i].is_finite() {
                rows.push((xo + i, 1.0, -model.x_hi[i]));
            }
        }
        for &i in &bounded {
            if model.x_lo[i].is_finite() {
                rows.push((xo + i, -1.0, model.x_lo[i]));
            }
        }
    }
    let mut w = Tensor::zeros(rows.len(), n);
    let mut c = Vec::with_capacity(rows.len());
    for (r, (col, sign, off)) in rows.into_iter().enumerate() {
        w.set(r, col, sign);
        c.push(off);
    }
    QpProblem::new(hess, lin, eq, eq_rhs, w, c)
}

/// Initial states drawn uniformly: the bounded attitude coordinates from
/// `±attitude_range`, everything else from `±other_range`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadcopterFamily {
    pub model: QuadcopterModel,
    pub attitude_range: f64,
    pub other_range: f64,
}

impl QuadcopterFamily {
    pub fn new(model: QuadcopterModel) -> Self {
        QuadcopterFamily {
            model,
            attitude_range: PI / 6.0,
            other_range: 0.8,
        }
    }
}

impl ProblemFamily for QuadcopterFamily {
    fn name(&self) -> &str {
        "quadcopter"
    }

    fn param_dim(&self) -> usize {
        self.model.nx()
    }

    fn n(&self) -> usize {
        self.model.n_vars()
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..self.model.nx())
            .map(|i| {
                let r = if i < 2 {
                    self.attitude_range
                } else {
                    self.other_range
                };
                rng.random_range(-r..=r)
            })
            .collect()
    }

    fn instance(&self, p: &[f64]) -> Result<QpProblem> {
        quadcopter_instance(&self.model, p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qp::{active_set_oracle_solve, reformulate};
    use rand::SeedableRng;
    use std::io::Write;

    #[test]
    fn toy_rows_match_definition() {
        let p = toy_instance(0.5, -0.25).unwrap();
        assert_eq!(p.n(), 2);
        assert_eq!(p.m_eq(), 0);
        assert_eq!(p.k_in(), 4);
        assert_eq!(p.ineq_offset(), &[0.5, -1.5, -1.25, 0.25]);
        assert_eq!(p.objective(&[1.0, 2.0]), 5.0);
    }

    #[test]
    fn toy_optimum_traces_constraints_along_diagonal_sweep() {
        for i in 0..=20 {
            let t = -1.25 + 2.5 * i as f64 / 20.0;
            let s = active_set_oracle_solve(&toy_instance(t, t).unwrap()).unwrap();
            let origin_feasible = (-1.0..=0.0).contains(&t) && (0.0..=1.0).contains(&t);
            if !origin_feasible {
                assert!(s.active_mask.iter().any(|a| *a), "t = {t}");
            }
        }
    }

    #[test]
    fn synthetic_portfolio_is_reproducible_and_well_conditioned() {
        let a = synth_portfolio_family(20, 3, 0.1, 1.0, 7).unwrap();
        let b = synth_portfolio_family(20, 3, 0.1, 1.0, 7).unwrap();
        assert_eq!(a, b);
        let n = 20;
        let dm = nalgebra::DMatrix::from_row_slice(n, n, a.sigma.data());
        let min_eig = dm.symmetric_eigenvalues().min();
        assert!(min_eig >= 0.05 - 1e-12, "{min_eig}");
        let mut r1 = ChaCha8Rng::seed_from_u64(1);
        let mut r2 = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(a.sample(&mut r1), b.sample(&mut r2));
    }

    #[test]
    fn portfolio_structure_and_symmetric_optimum() {
        for &budget in &[1.0, 10.0] {
            let n = 6;
            let fam = PortfolioFamily::new(Tensor::identity(n), vec![0.0; n], 0.1, budget).unwrap();
            let p = vec![2.0 * budget / n as f64; n];
            let qp = portfolio_instance(&fam, &p).unwrap();
            let sq = reformulate(&qp).unwrap();
            assert_eq!(sq.dim(), 2 * n);
            assert_eq!(sq.r_mat().rows(), n + 1);
            let s = active_set_oracle_solve(&qp).unwrap();
            for x in &s.x_star {
                assert!((x - budget / n as f64).abs() < 1e-10);
            }
            assert!((s.x_star.iter().sum::<f64>() - budget).abs() < 1e-10);
        }
        let fam = synth_portfolio_family(20, 3, 0.1, 1.0, 3).unwrap();
        let sq = reformulate(&portfolio_instance(&fam, &fam.base_mu).unwrap()).unwrap();
        assert_eq!(sq.dim(), 40);
        assert_eq!(sq.r_mat().shape(), (21, 40));
    }

    fn write_csv(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn price_ingestion() {
        let f = write_csv("a,b\n1,1\n2,3\n");
        let (sigma, mu) = ingest_prices_csv(f.path()).unwrap();
        assert_eq!(mu, vec![1.0, 2.0]);
        assert_eq!(sigma.data(), &[1e-8, 0.0, 0.0, 1e-8]);

        let f = write_csv("a,b,c\n5,5,5\n5,5,5\n5,5,5\n");
        let (_, mu) = ingest_prices_csv(f.path()).unwrap();
        assert_eq!(mu, vec![0.0; 3]);

        assert!(ingest_prices_csv(write_csv("a,b\n1,2\n3\n").path()).is_err());
        assert!(ingest_prices_csv(write_csv("a,b\n1,2\n").path()).is_err());
        assert!(ingest_prices_csv(write_csv("a,b\n1,2\nx,3\n").path()).is_err());
    }

    #[test]
    fn quadcopter_constants_and_counts() {
        let m = QuadcopterModel::benchmark(10);
        assert_eq!(
            m.q_diag,
            vec![0.0, 0.0, 10.0, 10.0, 10.0, 10.0, 0.0, 0.0, 0.0, 5.0, 5.0, 5.0]
        );
        assert_eq!(m.r_diag, vec![0.1; 4]);
        for i in 0..4 {
            assert!((m.u_lo[i] + 0.9916).abs() < 1e-12);
            assert!((m.u_hi[i] - 2.4084).abs() < 1e-12);
        }
        assert_eq!(m.n_vars(), 176);
        assert_eq!(m.n_eq(), 132);
        assert_eq!(m.n_ineq(), 132);
        let qp = quadcopter_instance(&m, &[0.0; 12]).unwrap();
        assert_eq!((qp.n(), qp.m_eq(), qp.k_in()), (176, 132, 132));

        let m5 = QuadcopterModel::benchmark(5);
        let qp = quadcopter_instance(&m5, &[0.1; 12]).unwrap();
        assert_eq!((qp.n(), qp.m_eq(), qp.k_in()), (96, 72, 72));
        assert!(quadcopter_instance(&m5, &[0.0; 11]).is_err());
    }

    #[test]
    fn quadcopter_equalities_reproduce_rollout() {
        let model = QuadcopterModel::benchmark(4);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let fam = QuadcopterFamily::new(model.clone());
        let p = fam.sample(&mut rng);
        let qp = quadcopter_instance(&model, &p).unwrap();
        let mut z = vec![0.0; model.n_vars()];
        let mut state = p.clone();
        for k in 0..model.stages() {
            let u: Vec<f64> = (0..4).map(|_| rng.random_range(-0.5..0.5)).collect();
            let ax = model.a.mul_vec(&state).unwrap();
            let bu = model.b.mul_vec(&u).unwrap();
            state = ax.iter().zip(&bu).map(|(a, b)| a + b).collect();
            z[model.u_offset(k)..model.u_offset(k) + 4].copy_from_slice(&u);
            z[model.x_offset(k)..model.x_offset(k) + 12].copy_from_slice(&state);
        }
        let resid = qp.eq_values(&z);
        assert!(resid.iter().all(|r| r.abs() < 1e-10));
    }
}
