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

//! Non-learned metrics: the identity and the square root of the
//! regularized objective Hessian.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prox::{
    prox_g, relative_error, run, Algorithm, IterateTrace, Metric, SolverConfig, KKT_REGULARIZATION,
};
use crate::qp::SlackQp;
use crate::tensor::{Lu, Tensor};

/// Iterations of projected gradient for the metric projection when the
/// slack block of a dense metric is coupled.
const PROJECTION_ITERATIONS: usize = 500;

pub fn euclidean_metric(d: usize) -> Metric {
    Metric::euclidean(d)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeuristicConfig {
    pub epsilon: f64,
    pub diagonalize: bool,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        HeuristicConfig {
            epsilon: 1e-6,
            diagonalize: false,
        }
    }
}

/// Either the diagonal of the heuristic metric or the full matrix.
#[derive(Clone, Debug, PartialEq)]
pub enum BaselineMetric {
    Diagonal(Metric),
    Dense(Tensor),
}

/// `(H + εI)^{1/2}` by symmetric eigendecomposition.
pub fn hessian_sqrt(sq: &SlackQp, epsilon: f64) -> Result<Tensor> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let d = sq.dim();
    let mut h = DMatrix::from_row_slice(d, d, sq.h().data());
    for i in 0..d {
        h[(i, i)] += epsilon;
    }
    let eig = SymmetricEigen::try_new(h, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Eigen("symmetric eigendecomposition did not converge".into()))?;
    if let Some(bad) = eig
        .eigenvalues
        .iter()
        .find(|l| **l < -crate::qp::PSD_TOLERANCE)
    {
        return Err(Error::Eigen(format!(
            "objective Hessian has eigenvalue {bad}"
        )));
    }
    let roots = eig.eigenvalues.map(|l| l.max(epsilon).sqrt());
    let v = &eig.eigenvectors;
    let s = v * DMatrix::from_diagonal(&roots) * v.transpose();
    let mut out = Tensor::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            out.set(i, j, 0.5 * (s[(i, j)] + s[(j, i)]));
        }
    }
    Ok(out)
}

pub fn heuristic_metric(sq: &SlackQp, cfg: &HeuristicConfig) -> Result<BaselineMetric> {
    let root = hessian_sqrt(sq, cfg.epsilon)?;
    if cfg.diagonalize {
        let m = (0..sq.dim()).map(|i| root.get(i, i)).collect();
        Ok(BaselineMetric::Diagonal(Metric::new(m, 1.0)?))
    } else {
        Ok(BaselineMetric::Dense(root))
    }
}

/// Runs a baseline metric; dense metrics are supported for ADMM only.
pub fn run_baseline(
    sq: &SlackQp,
    metric: &BaselineMetric,
    cfg: &SolverConfig,
    z0: &[f64],
    reference: Option<&[f64]>,
) -> Result<IterateTrace> {
    match metric {
        BaselineMetric::Diagonal(m) => run(sq, m, cfg, z0, reference),
        BaselineMetric::Dense(m) => match cfg.algorithm {
            Algorithm::Admm => run_dense_admm(sq, m, cfg, z0, reference),
            Algorithm::Dr => Err(Error::InvalidArgument(
                "dense metrics are only supported by ADMM".into(),
            )),
        },
    }
}

struct DenseProjection {
    /// Slack block of `M` is diagonal and uncoupled from the rest.
    separable: bool,
    m2: DMatrix<f64>,
    step: f64,
}

impl DenseProjection {
    fn new(sq: &SlackQp, m: &Tensor) -> Self {
        let d = sq.dim();
        let slack = sq.slack_idx();
        let separable = (0..d).all(|i| {
            (0..d).all(|j| {
                let coupled = i != j && (slack.contains(&i) || slack.contains(&j));
                !coupled || m.get(i, j) == 0.0
            })
        });
        let mm = DMatrix::from_row_slice(d, d, m.data());
        let m2 = &mm * &mm;
        let step = 1.0 / m2.symmetric_eigenvalues().max().max(f64::MIN_POSITIVE);
        DenseProjection {
            separable,
            m2,
            step,
        }
    }

    /// `argmin ‖M(y − v)‖²  s.t.  y_s ≥ 0`.
    fn project(&self, v: &[f64], sq: &SlackQp) -> Vec<f64> {
        let mut y = prox_g(v, sq);
        if self.separable {
            return y;
        }
        let vv = DMatrix::from_column_slice(v.len(), 1, v);
        for _ in 0..PROJECTION_ITERATIONS {
            let yy = DMatrix::from_column_slice(y.len(), 1, &y);
            let g = &self.m2 * (yy - &vv);
            let trial: Vec<f64> = y
                .iter()
                .zip(g.iter())
                .map(|(a, b)| a - self.step * b)
                .collect();
            y = prox_g(&trial, sq);
        }
        y
    }
}

fn run_dense_admm(
    sq: &SlackQp,
    m: &Tensor,
    cfg: &SolverConfig,
    z0: &[f64],
    reference: Option<&[f64]>,
) -> Result<IterateTrace> {
    cfg.validate()?;
    let d = sq.dim();
    let n = sq.n_orig();
    if m.shape() != (d, d) || z0.len() != d {
        return Err(Error::shape(
            "run_dense_admm",
            format!("metric {:?}, start {}, d = {d}", m.shape(), z0.len()),
        ));
    }
    let m2 = m.matmul(m)?;
    let factor = |reg: f64| {
        let mut k = sq.kkt_base(reg);
        for i in 0..d {
            for j in 0..d {
                let v = k.get(i, j) + cfg.gamma * m2.get(i, j);
                k.set(i, j, v);
            }
        }
        Lu::factor(&k)
    };
    let lu = match factor(0.0) {
        Err(Error::Singular { .. }) => factor(KKT_REGULARIZATION)?,
        other => other?,
    };
    let m_lu = Lu::factor(m)?;
    let projection = DenseProjection::new(sq, m);
    let neg_r: Vec<f64> = sq.r_vec().iter().map(|r| -r).collect();

    let mut y = z0.to_vec();
    let mut u = vec![0.0; d];
    let mut iterates = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        let m2y = m2.mul_vec(&y)?;
        let mu = m.mul_vec(&u)?;
        let mut rhs: Vec<f64> = (0..d)
            .map(|i| cfg.gamma * m2y[i] - cfg.gamma * mu[i] - sq.qt()[i])
            .collect();
        rhs.extend_from_slice(&neg_r);
        let mut x = lu.solve(&rhs);
        x.truncate(d);
        let minv_u = m_lu.solve(&u);
        let v: Vec<f64> = x.iter().zip(&minv_u).map(|(a, b)| a + b).collect();
        let y_next = projection.project(&v, sq);
        let diff: Vec<f64> = x.iter().zip(&y_next).map(|(a, b)| a - b).collect();
        let step = m.mul_vec(&diff)?;
        for (ui, si) in u.iter_mut().zip(step) {
            *ui += si;
        }
        iterates.push(x[..n].to_vec());
        y = y_next;
    }
    if iterates.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("dense admm"));
    }
    let errors = reference.map(|r| {
        iterates
            .iter()
            .map(|x| relative_error(x, r, cfg.error_floor))
            .collect()
    });
    Ok(IterateTrace { iterates, errors })
}
