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

//! Quadratic programs, the slack reformulation consumed by the splitting
//! solvers, and small-instance ground truth.
//!
//! A [`QpProblem`] is
//!
//! ```text
//! minimize    ½ xᵀQx + qᵀx
//! subject to  Lx = b
//!             Wx + c ≤ 0
//! ```
//!
//! [`reformulate`] introduces one slack per inequality, giving `z = (x, s)`
//! with `Rz + r = 0`, `s ≥ 0`, `R = [[L, 0], [W, I]]` and `r = [-b; c]`.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::tensor::{norm_inf, Lu, Tensor};

/// Symmetry and PSD slack accepted for the objective matrix.
pub const PSD_TOLERANCE: f64 = 1e-10;
/// `|Wx + c|_i` at or below this marks constraint `i` active.
pub const ACTIVE_TOLERANCE: f64 = 1e-8;
/// Largest inequality count the enumeration oracle accepts.
pub const ORACLE_MAX_INEQUALITIES: usize = 25;

const ORACLE_FEASIBILITY: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct QpProblem {
    hessian: Tensor,
    linear: Vec<f64>,
    eq_matrix: Tensor,
    eq_rhs: Vec<f64>,
    ineq_matrix: Tensor,
    ineq_offset: Vec<f64>,
}

impl QpProblem {
    /// Validates dimensions, symmetry and positive semidefiniteness of `hessian`.
    pub fn new(
        hessian: Tensor,
        linear: Vec<f64>,
        eq_matrix: Tensor,
        eq_rhs: Vec<f64>,
        ineq_matrix: Tensor,
        ineq_offset: Vec<f64>,
    ) -> Result<Self> {
        let n = linear.len();
        if hessian.shape() != (n, n) {
            return Err(Error::shape(
                "qp",
                format!("Q is {:?}, n = {n}", hessian.shape()),
            ));
        }
        if eq_matrix.cols() != n || eq_matrix.rows() != eq_rhs.len() {
            return Err(Error::shape(
                "qp",
                format!(
                    "L is {:?}, b has {} entries",
                    eq_matrix.shape(),
                    eq_rhs.len()
                ),
            ));
        }
        if ineq_matrix.cols() != n || ineq_matrix.rows() != ineq_offset.len() {
            return Err(Error::shape(
                "qp",
                format!(
                    "W is {:?}, c has {} entries",
                    ineq_matrix.shape(),
                    ineq_offset.len()
                ),
            ));
        }
        let problem = QpProblem {
            hessian,
            linear,
            eq_matrix,
            eq_rhs,
            ineq_matrix,
            ineq_offset,
        };
        let all_finite = problem.hessian.is_finite()
            && problem.eq_matrix.is_finite()
            && problem.ineq_matrix.is_finite()
            && [&problem.linear, &problem.eq_rhs, &problem.ineq_offset]
                .iter()
                .all(|v| v.iter().all(|x| x.is_finite()));
        if !all_finite {
            return Err(Error::InvalidArgument("problem data must be finite".into()));
        }
        let asym = problem.hessian.asymmetry().unwrap_or(0.0);
        if asym > PSD_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "Q is not symmetric (deviation {asym:e})"
            )));
        }
        if n > 0 {
            let min_eig = min_eigenvalue(&problem.hessian);
            if min_eig < -PSD_TOLERANCE {
                return Err(Error::InvalidArgument(format!(
                    "Q is not positive semidefinite (eigenvalue {min_eig:e})"
                )));
            }
        }
        Ok(problem)
    }

    pub fn n(&self) -> usize {
        self.linear.len()
    }

    pub fn m_eq(&self) -> usize {
        self.eq_rhs.len()
    }

    pub fn k_in(&self) -> usize {
        self.ineq_offset.len()
    }

    pub fn hessian(&self) -> &Tensor {
        &self.hessian
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    pub fn eq_matrix(&self) -> &Tensor {
        &self.eq_matrix
    }

    pub fn eq_rhs(&self) -> &[f64] {
        &self.eq_rhs
    }

    pub fn ineq_matrix(&self) -> &Tensor {
        &self.ineq_matrix
    }

    pub fn ineq_offset(&self) -> &[f64] {
        &self.ineq_offset
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let qx = self.hessian.mul_vec(x).expect("checked dimension");
        0.5 * dot(x, &qx) + dot(&self.linear, x)
    }

    /// `Wx + c`.
    pub fn ineq_values(&self, x: &[f64]) -> Vec<f64> {
        let mut v = self.ineq_matrix.mul_vec(x).expect("checked dimension");
        for (vi, ci) in v.iter_mut().zip(&self.ineq_offset) {
            *vi += ci;
        }
        v
    }

    /// `Lx - b`.
    pub fn eq_values(&self, x: &[f64]) -> Vec<f64> {
        let mut v = self.eq_matrix.mul_vec(x).expect("checked dimension");
        for (vi, bi) in v.iter_mut().zip(&self.eq_rhs) {
            *vi -= bi;
        }
        v
    }
}

fn min_eigenvalue(m: &Tensor) -> f64 {
    let n = m.rows();
    let dm = DMatrix::from_row_slice(n, n, m.data());
    dm.symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Slack reformulation: `min ½zᵀHz + q̃ᵀz  s.t.  Rz + r = 0, z_i ≥ 0 for i in slack_idx`.
#[derive(Clone, Debug, PartialEq)]
pub struct SlackQp {
    h: Tensor,
    qt: Vec<f64>,
    r_mat: Tensor,
    r_vec: Vec<f64>,
    n_orig: usize,
    m_eq: usize,
}

impl SlackQp {
    /// `d = n + k_in`.
    pub fn dim(&self) -> usize {
        self.qt.len()
    }

    pub fn n_orig(&self) -> usize {
        self.n_orig
    }

    pub fn m_eq(&self) -> usize {
        self.m_eq
    }

    pub fn k_in(&self) -> usize {
        self.dim() - self.n_orig
    }

    pub fn n_constraints(&self) -> usize {
        self.r_vec.len()
    }

    pub fn slack_idx(&self) -> Range<usize> {
        self.n_orig..self.dim()
    }

    pub fn h(&self) -> &Tensor {
        &self.h
    }

    pub fn qt(&self) -> &[f64] {
        &self.qt
    }

    pub fn r_mat(&self) -> &Tensor {
        &self.r_mat
    }

    pub fn r_vec(&self) -> &[f64] {
        &self.r_vec
    }

    /// `(x, -(Wx + c))` for an original-space point.
    pub fn lift(&self, problem: &QpProblem, x: &[f64]) -> Vec<f64> {
        let mut z = x.to_vec();
        z.extend(problem.ineq_values(x).into_iter().map(|v| -v));
        z
    }

    pub fn objective(&self, z: &[f64]) -> f64 {
        let hz = self.h.mul_vec(z).expect("checked dimension");
        0.5 * dot(z, &hz) + dot(&self.qt, z)
    }

    /// Saddle-point matrix `[[H, Rᵀ], [R, -δI]]`; the metric term is added
    /// on the leading diagonal by the solvers.
    pub fn kkt_base(&self, regularization: f64) -> Tensor {
        let d = self.dim();
        let m = self.n_constraints();
        let size = d + m;
        let mut k = Tensor::zeros(size, size);
        for i in 0..d {
            for j in 0..d {
                k.set(i, j, self.h.get(i, j));
            }
        }
        for i in 0..m {
            for j in 0..d {
                let v = self.r_mat.get(i, j);
                if v != 0.0 {
                    k.set(d + i, j, v);
                    k.set(j, d + i, v);
                }
            }
            k.set(d + i, d + i, -regularization);
        }
        k
    }
}

pub fn reformulate(p: &QpProblem) -> Result<SlackQp> {
    let n = p.n();
    let m = p.m_eq();
    let k = p.k_in();
    let d = n + k;
    let mut h = Tensor::zeros(d, d);
    for i in 0..n {
        for j in 0..n {
            h.set(i, j, p.hessian.get(i, j));
        }
    }
    let mut qt = p.linear.clone();
    qt.resize(d, 0.0);

    let mut r_mat = Tensor::zeros(m + k, d);
    for i in 0..m {
        for j in 0..n {
            r_mat.set(i, j, p.eq_matrix.get(i, j));
        }
    }
    for i in 0..k {
        for j in 0..n {
            r_mat.set(m + i, j, p.ineq_matrix.get(i, j));
        }
        r_mat.set(m + i, n + i, 1.0);
    }
    let r_vec: Vec<f64> = p
        .eq_rhs
        .iter()
        .map(|b| -b)
        .chain(p.ineq_offset.iter().copied())
        .collect();
    Ok(SlackQp {
        h,
        qt,
        r_mat,
        r_vec,
        n_orig: n,
        m_eq: m,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Residuals {
    /// `‖Rz + r‖∞`
    pub eq_norm: f64,
    /// Smallest slack coordinate (`+∞` without inequalities).
    pub slack_min: f64,
    pub objective: f64,
}

pub fn residuals(sq: &SlackQp, z: &[f64]) -> Result<Residuals> {
    if z.len() != sq.dim() {
        return Err(Error::shape(
            "residuals",
            format!("z has {} entries, d = {}", z.len(), sq.dim()),
        ));
    }
    let mut rz = sq.r_mat.mul_vec(z)?;
    for (a, b) in rz.iter_mut().zip(&sq.r_vec) {
        *a += b;
    }
    let slack_min = z[sq.slack_idx()]
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    Ok(Residuals {
        eq_norm: norm_inf(&rz),
        slack_min,
        objective: sq.objective(z),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolutionRecord {
    pub x_star: Vec<f64>,
    pub active_mask: Vec<bool>,
    pub objective: f64,
}

impl SolutionRecord {
    fn from_point(p: &QpProblem, x: Vec<f64>) -> Self {
        let active_mask = p
            .ineq_values(&x)
            .iter()
            .map(|v| v.abs() <= ACTIVE_TOLERANCE)
            .collect();
        let objective = p.objective(&x);
        SolutionRecord {
            x_star: x,
            active_mask,
            objective,
        }
    }
}

/// Ground truth by enumerating every candidate active set.
///
/// Each candidate solves the equality-constrained KKT system with the
/// selected inequalities held tight; candidates that are primal feasible with
/// nonnegative inequality multipliers compete on objective. Ties go to the
/// smaller active set, then to the lexicographically smaller one.
pub fn active_set_oracle_solve(p: &QpProblem) -> Result<SolutionRecord> {
    let k = p.k_in();
    if k > ORACLE_MAX_INEQUALITIES {
        return Err(Error::EnumerationLimit {
            k,
            max: ORACLE_MAX_INEQUALITIES,
        });
    }
    let scale = 1.0 + p.hessian.max_abs().max(norm_inf(&p.linear));
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut subset = Vec::with_capacity(k);
    for size in 0..=k {
        for_each_combination(k, size, &mut subset, &mut |active| {
            let Some(x) = solve_with_active(p, active) else {
                return;
            };
            let feasible_tol = ORACLE_FEASIBILITY * scale;
            if norm_inf(&p.eq_values(&x)) > feasible_tol
                || p.ineq_values(&x).iter().any(|v| *v > feasible_tol)
            {
                return;
            }
            let obj = p.objective(&x);
            let better = match &best {
                None => true,
                Some((b, _)) => obj < *b - 1e-12 * (1.0 + b.abs()),
            };
            if better {
                best = Some((obj, x));
            }
        });
    }
    match best {
        Some((_, x)) => Ok(SolutionRecord::from_point(p, x)),
        None => Err(Error::Infeasible(
            "no candidate active set is feasible".into(),
        )),
    }
}

/// Solves the KKT system with `active` inequalities as equalities and
/// returns `x` when the multipliers of those inequalities are nonnegative.
fn solve_with_active(p: &QpProblem, active: &[usize]) -> Option<Vec<f64>> {
    let n = p.n();
    let m = p.m_eq();
    let a = active.len();
    let size = n + m + a;
    let mut k = Tensor::zeros(size, size);
    let mut rhs = vec![0.0; size];
    for i in 0..n {
        for j in 0..n {
            k.set(i, j, p.hessian.get(i, j));
        }
        rhs[i] = -p.linear[i];
    }
    for r in 0..m {
        for j in 0..n {
            let v = p.eq_matrix.get(r, j);
            k.set(n + r, j, v);
            k.set(j, n + r, v);
        }
        rhs[n + r] = p.eq_rhs[r];
    }
    for (t, &i) in active.iter().enumerate() {
        for j in 0..n {
            let v = p.ineq_matrix.get(i, j);
            k.set(n + m + t, j, v);
            k.set(j, n + m + t, v);
        }
        rhs[n + m + t] = -p.ineq_offset[i];
    }
    let lu = Lu::factor(&k).ok()?;
    let sol = lu.solve(&rhs);
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mu = &sol[n + m..];
    let mu_scale = 1.0 + norm_inf(mu);
    if mu.iter().any(|v| *v < -ORACLE_FEASIBILITY * mu_scale) {
        return None;
    }
    Some(sol[..n].to_vec())
}

fn for_each_combination(k: usize, size: usize, buf: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    fn rec(
        start: usize,
        k: usize,
        size: usize,
        buf: &mut Vec<usize>,
        f: &mut impl FnMut(&[usize]),
    ) {
        if buf.len() == size {
            f(buf);
            return;
        }
        let remaining = size - buf.len();
        for i in start..=(k - remaining) {
            buf.push(i);
            rec(i + 1, k, size, buf, f);
            buf.pop();
        }
    }
    buf.clear();
    rec(0, k, size, buf, f);
}

/// First-order optimality test for `x`.
///
/// Inequalities with `Wx + c ≥ -tol` are treated as active; multipliers for
/// the equalities and active inequalities come from a least-squares fit of
/// the stationarity condition `Qx + q + Lᵀν + W_Aᵀμ = 0`.
pub fn kkt_check(p: &QpProblem, x: &[f64], tol: f64) -> bool {
    let n = p.n();
    if x.len() != n || x.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let eq = p.eq_values(x);
    let ineq = p.ineq_values(x);
    if norm_inf(&eq) > tol || ineq.iter().any(|v| *v > tol) {
        return false;
    }
    let active: Vec<usize> = (0..p.k_in()).filter(|&i| ineq[i] >= -tol).collect();
    let mut grad = p.hessian.mul_vec(x).expect("checked dimension");
    for (g, q) in grad.iter_mut().zip(&p.linear) {
        *g += q;
    }
    let cols = p.m_eq() + active.len();
    if cols == 0 {
        return norm_inf(&grad) <= tol;
    }
    let mut gt = DMatrix::<f64>::zeros(n, cols);
    for r in 0..p.m_eq() {
        for j in 0..n {
            gt[(j, r)] = p.eq_matrix.get(r, j);
        }
    }
    for (t, &i) in active.iter().enumerate() {
        for j in 0..n {
            gt[(j, p.m_eq() + t)] = p.ineq_matrix.get(i, j);
        }
    }
    let target = DVector::from_iterator(n, grad.iter().map(|g| -g));
    let svd = gt.clone().svd(true, true);
    let Ok(lambda) = svd.solve(&target, 1e-12) else {
        return false;
    };
    let stationarity = &gt * &lambda - &target;
    if stationarity.amax() > tol {
        return false;
    }
    active.iter().enumerate().all(|(t, &i)| {
        let mu = lambda[p.m_eq() + t];
        mu >= -tol && (mu * ineq[i]).abs() <= tol
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::toy_instance;

    fn equality_only() -> QpProblem {
        QpProblem::new(
            Tensor::diag(&[2.0, 2.0]),
            vec![0.0, 0.0],
            Tensor::from_rows(&[&[1.0, 1.0]]).unwrap(),
            vec![1.0],
            Tensor::zeros(0, 2),
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn rejects_bad_dimensions_and_indefinite() {
        assert!(QpProblem::new(
            Tensor::identity(2),
            vec![0.0; 3],
            Tensor::zeros(0, 3),
            vec![],
            Tensor::zeros(0, 3),
            vec![]
        )
        .is_err());
        assert!(QpProblem::new(
            Tensor::diag(&[1.0, -1.0]),
            vec![0.0; 2],
            Tensor::zeros(0, 2),
            vec![],
            Tensor::zeros(0, 2),
            vec![]
        )
        .is_err());
    }

    #[test]
    fn toy_reformulation_structure() {
        let p = toy_instance(0.3, -0.4).unwrap();
        let sq = reformulate(&p).unwrap();
        assert_eq!(sq.dim(), 6);
        assert_eq!(sq.r_mat().shape(), (4, 6));
        assert_eq!(sq.slack_idx(), 2..6);
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_eq!(sq.r_mat().get(i, 2 + j), expect);
            }
        }
        for i in sq.slack_idx() {
            for j in 0..6 {
                assert_eq!(sq.h().get(i, j), 0.0);
                assert_eq!(sq.h().get(j, i), 0.0);
            }
        }
        assert_eq!(sq.r_vec(), p.ineq_offset());
    }

    #[test]
    fn no_inequalities_means_no_slack() {
        let p = equality_only();
        let sq = reformulate(&p).unwrap();
        assert_eq!(sq.dim(), 2);
        assert_eq!(sq.slack_idx(), 2..2);
        assert_eq!(sq.r_vec(), &[-1.0]);
        assert_eq!(sq.h(), p.hessian());
    }

    #[test]
    fn residuals_at_origin_of_toy() {
        let sq = reformulate(&toy_instance(0.0, 0.0).unwrap()).unwrap();
        let r = residuals(&sq, &[0.0; 6]).unwrap();
        assert_eq!(r.eq_norm, 1.0);
        assert_eq!(r.slack_min, 0.0);
        let a = residuals(&sq, &[0.5, 0.1, 1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = residuals(&sq, &[0.5, 0.1, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(a.objective, b.objective);
    }

    #[test]
    fn oracle_on_toy_and_equality_problem() {
        let s = active_set_oracle_solve(&toy_instance(0.0, 0.0).unwrap()).unwrap();
        assert!(s.x_star.iter().all(|v| v.abs() < 1e-12));
        assert_eq!(s.active_mask, vec![true, false, false, true]);

        let s = active_set_oracle_solve(&toy_instance(1.0, 1.0).unwrap()).unwrap();
        assert!((s.x_star[0] - 0.5).abs() < 1e-12 && (s.x_star[1] - 0.5).abs() < 1e-12);

        let s = active_set_oracle_solve(&equality_only()).unwrap();
        assert!((s.x_star[0] - 0.5).abs() < 1e-12 && (s.x_star[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn oracle_reports_infeasible_and_limit() {
        // x ≤ -1 and -x ≤ -1 cannot both hold.
        let p = QpProblem::new(
            Tensor::identity(1),
            vec![0.0],
            Tensor::zeros(0, 1),
            vec![],
            Tensor::from_rows(&[&[1.0], &[-1.0]]).unwrap(),
            vec![1.0, 1.0],
        )
        .unwrap();
        assert!(matches!(
            active_set_oracle_solve(&p),
            Err(Error::Infeasible(_))
        ));

        let k = ORACLE_MAX_INEQUALITIES + 1;
        let p = QpProblem::new(
            Tensor::identity(1),
            vec![0.0],
            Tensor::zeros(0, 1),
            vec![],
            Tensor::new(k, 1, vec![1.0; k]).unwrap(),
            vec![-1.0; k],
        )
        .unwrap();
        assert!(matches!(
            active_set_oracle_solve(&p),
            Err(Error::EnumerationLimit { .. })
        ));
    }

    #[test]
    fn kkt_check_cases() {
        let p = toy_instance(0.0, 0.0).unwrap();
        let s = active_set_oracle_solve(&p).unwrap();
        assert!(kkt_check(&p, &s.x_star, 1e-8));
        let moved: Vec<f64> = s.x_star.iter().map(|v| v + 0.1).collect();
        assert!(!kkt_check(&p, &moved, 1e-6));

        let q = Tensor::from_rows(&[&[3.0, 1.0], &[1.0, 2.0]]).unwrap();
        let lin = vec![1.0, -1.0];
        let unconstrained = QpProblem::new(
            q.clone(),
            lin.clone(),
            Tensor::zeros(0, 2),
            vec![],
            Tensor::zeros(0, 2),
            vec![],
        )
        .unwrap();
        let x = Lu::factor(&q).unwrap().solve(&[-1.0, 1.0]);
        assert!(kkt_check(&unconstrained, &x, 1e-10));
    }

    #[test]
    fn lift_satisfies_equalities() {
        let p = toy_instance(0.7, -1.1).unwrap();
        let sq = reformulate(&p).unwrap();
        let x = active_set_oracle_solve(&p).unwrap().x_star;
        let z = sq.lift(&p, &x);
        let r = residuals(&sq, &z).unwrap();
        assert!(r.eq_norm <= 1e-12);
        assert!(r.slack_min >= -1e-12);
    }
}
