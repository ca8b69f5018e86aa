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

//! Dataset generation, warm-start and metric training, convergence
//! evaluation, and the slack-weight/active-set analysis.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use log::{debug, info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::baselines::{heuristic_metric, run_baseline, BaselineMetric, HeuristicConfig};
use crate::error::{Error, Result};
use crate::net::{
    estimator_forward, metric_forward, metric_forward_tape, MetricHead, Mlp, Optimizer,
    OptimizerKind,
};
use crate::problems::ProblemFamily;
use crate::prox::{dr_solve_to_tolerance, unrolled_solve, Algorithm, Metric, SolverConfig};
use crate::qp::{active_set_oracle_solve, kkt_check, reformulate, SlackQp};
use crate::tensor::{dist2, norm2, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Parse(format!("unknown split {other:?}"))),
        }
    }
}

/// Parameters `p_i` and their optimal primal solutions `x*(p_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamDataset {
    pub family: String,
    pub n: usize,
    pub v: usize,
    pub seed: u64,
    pub split: Split,
    pub params: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

impl ParamDataset {
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }
}

/// How targets are computed and validated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetConfig {
    /// Stop when the DR iterate moves less than this in the sup norm.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub gamma: f64,
    /// Cross-check against the enumeration oracle up to this many inequalities.
    pub oracle_max_inequalities: usize,
    pub oracle_agreement: f64,
    pub kkt_tolerance: f64,
}

impl Default for TargetConfig {
    fn default() -> Self {
        TargetConfig {
            tolerance: 1e-10,
            max_iterations: 50_000,
            gamma: 1.0,
            oracle_max_inequalities: 12,
            oracle_agreement: 1e-6,
            kkt_tolerance: 1e-6,
        }
    }
}

/// Solves one instance with Euclidean DR and validates the result.
pub fn solve_target(family: &dyn ProblemFamily, p: &[f64], cfg: &TargetConfig) -> Result<Vec<f64>> {
    let qp = family.instance(p)?;
    let sq = reformulate(&qp)?;
    let z0 = vec![0.0; sq.dim()];
    let (x, iterations) = dr_solve_to_tolerance(
        &sq,
        &Metric::euclidean(sq.dim()),
        cfg.gamma,
        &z0,
        cfg.tolerance,
        cfg.max_iterations,
    )?;
    debug!("target solved in {iterations} iterations");
    if qp.k_in() <= cfg.oracle_max_inequalities {
        let oracle = active_set_oracle_solve(&qp)?;
        let gap = dist2(&x, &oracle.x_star);
        if gap > cfg.oracle_agreement * norm2(&oracle.x_star).max(1.0) {
            return Err(Error::OracleMismatch(format!(
                "DR target differs from the active-set oracle by {gap:e} at p = {p:?}"
            )));
        }
    }
    if !kkt_check(&qp, &x, cfg.kkt_tolerance) {
        return Err(Error::OracleMismatch(format!(
            "DR target fails the KKT check at p = {p:?}"
        )));
    }
    Ok(x)
}

fn param_key(p: &[f64]) -> Vec<u64> {
    p.iter().map(|v| v.to_bits()).collect()
}

/// Samples `count` fresh parameters (skipping any in `seen`) and solves them.
pub fn generate_targets(
    family: &dyn ProblemFamily,
    count: usize,
    rng: &mut ChaCha8Rng,
    seen: &mut HashSet<Vec<u64>>,
    split: Split,
    seed: u64,
    cfg: &TargetConfig,
) -> Result<ParamDataset> {
    let mut params = Vec::with_capacity(count);
    let mut targets = Vec::with_capacity(count);
    while params.len() < count {
        let p = family.sample(rng);
        if !seen.insert(param_key(&p)) {
            continue;
        }
        targets.push(solve_target(family, &p, cfg)?);
        params.push(p);
    }
    info!("{} {split}: {count} targets", family.name());
    Ok(ParamDataset {
        family: family.name().to_string(),
        n: family.n(),
        v: family.param_dim(),
        seed,
        split,
        params,
        targets,
    })
}

/// Train, validation and test sets drawn from one seeded stream in that
/// order, with no parameter vector repeated across them.
pub fn generate_splits(
    family: &dyn ProblemFamily,
    counts: [usize; 3],
    seed: u64,
    cfg: &TargetConfig,
) -> Result<Vec<ParamDataset>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    Split::ALL
        .iter()
        .zip(counts)
        .map(|(&split, count)| {
            generate_targets(family, count, &mut rng, &mut seen, split, seed, cfg)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Unrolled solver iterations for the metric loss.
    pub k: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.k == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "training settings must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

fn check_finite_loss(loss: f64, epoch: usize) -> Result<()> {
    if !loss.is_finite() {
        return Err(Error::Divergence(format!(
            "loss is {loss} in epoch {epoch}"
        )));
    }
    Ok(())
}

/// Regression of the warm-start network onto the targets; returns the mean
/// per-instance squared error of each epoch.
pub fn train_estimator(net: &mut Mlp, data: &ParamDataset, cfg: &TrainConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument(
            "estimator training set is empty".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, net.num_params());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grad = vec![0.0; net.num_params()];
            for &i in batch {
                let tape = Tape::new();
                let input = tape.constant(Tensor::column(data.params[i].clone()));
                let (out, params) = net.forward_tape(&tape, input)?;
                let diff = out.sub(tape.constant(Tensor::column(data.targets[i].clone())))?;
                let loss = diff.mul(diff)?.sum()?;
                total += loss.scalar_value().unwrap_or(f64::NAN);
                let g = params.flat_grad(&tape.backward(loss)?);
                for (a, b) in grad.iter_mut().zip(g) {
                    *a += b;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            opt.step(net, &grad)?;
        }
        let mean = total / data.len() as f64;
        check_finite_loss(mean, epoch)?;
        debug!("estimator epoch {epoch}: {mean:e}");
        history.push(mean);
    }
    Ok(history)
}

/// One test or training instance with everything the solvers need.
#[derive(Clone, Debug)]
pub struct PreparedInstance {
    pub p: Vec<f64>,
    pub sq: SlackQp,
    pub x_star: Vec<f64>,
    /// Start point: estimator output for the original variables, zero slacks.
    pub z0: Vec<f64>,
}

/// Builds the reformulated instances; `estimator` of `None` starts from zero.
pub fn prepare_instances(
    family: &dyn ProblemFamily,
    data: &ParamDataset,
    estimator: Option<&Mlp>,
) -> Result<Vec<PreparedInstance>> {
    data.params
        .iter()
        .zip(&data.targets)
        .map(|(p, x_star)| {
            let sq = reformulate(&family.instance(p)?)?;
            let z0 = match estimator {
                Some(net) => estimator_forward(net, p, &sq)?,
                None => vec![0.0; sq.dim()],
            };
            Ok(PreparedInstance {
                p: p.clone(),
                sq,
                x_star: x_star.clone(),
                z0,
            })
        })
        .collect()
}

/// Squared error of the `k`-step unrolled solve, with gradient wrt the
/// metric network parameters.
pub fn metric_loss_and_grad(
    net: &Mlp,
    head: &MetricHead,
    inst: &PreparedInstance,
    solver: &SolverConfig,
) -> Result<(f64, Vec<f64>)> {
    let tape = Tape::new();
    let (metric, params) = metric_forward_tape(net, head, &tape, &inst.p, inst.sq.dim())?;
    let z0 = tape.constant(Tensor::column(inst.z0.clone()));
    let x = unrolled_solve(&tape, &inst.sq, metric, solver, z0)?;
    let diff = x.sub(tape.constant(Tensor::column(inst.x_star.clone())))?;
    let loss = diff.mul(diff)?.sum()?;
    let value = loss.scalar_value().unwrap_or(f64::NAN);
    let grad = params.flat_grad(&tape.backward(loss)?);
    Ok((value, grad))
}

/// Trains the metric network through `cfg.k` unrolled iterations with the
/// warm starts already fixed in `instances`. Instances whose KKT system is
/// singular are skipped; more than 1% of a batch aborts.
pub fn train_metric(
    net: &mut Mlp,
    head: &MetricHead,
    instances: &[PreparedInstance],
    cfg: &TrainConfig,
    algorithm: Algorithm,
    gamma: f64,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    head.validate()?;
    if instances.is_empty() {
        return Err(Error::InvalidArgument(
            "metric training set is empty".into(),
        ));
    }
    let solver = SolverConfig::new(algorithm, cfg.k).with_gamma(gamma);
    solver.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, net.num_params());
    let mut order: Vec<usize> = (0..instances.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut used = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let mut grad = vec![0.0; net.num_params()];
            let mut count = 0usize;
            let mut skipped = 0usize;
            for &i in batch {
                match metric_loss_and_grad(net, head, &instances[i], &solver) {
                    Ok((loss, g)) => {
                        total += loss;
                        count += 1;
                        for (a, b) in grad.iter_mut().zip(g) {
                            *a += b;
                        }
                    }
                    Err(Error::Singular { column, pivot }) => {
                        warn!("skipping instance {i}: singular KKT (column {column}, pivot {pivot:e})");
                        skipped += 1;
                        if skipped as f64 > 0.01 * batch.len() as f64 {
                            return Err(Error::Divergence(format!(
                                "{skipped} of {} instances in a batch had singular KKT systems",
                                batch.len()
                            )));
                        }
                    }
                    Err(e) => return Err(e),
                }
            }
            if count == 0 {
                continue;
            }
            let scale = 1.0 / count as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            opt.step(net, &grad)?;
            used += count;
        }
        let mean = total / used.max(1) as f64;
        check_finite_loss(mean, epoch)?;
        debug!("metric epoch {epoch}: {mean:e}");
        history.push(mean);
    }
    Ok(history)
}

/// A metric under evaluation.
#[derive(Clone, Debug)]
pub enum EvalModel {
    Learned {
        id: String,
        net: Mlp,
        head: MetricHead,
    },
    Euclidean,
    Heuristic(HeuristicConfig),
}

impl EvalModel {
    pub fn id(&self) -> &str {
        match self {
            EvalModel::Learned { id, .. } => id,
            EvalModel::Euclidean => "euclidean",
            EvalModel::Heuristic(_) => "heuristic",
        }
    }

    fn metric_for(&self, inst: &PreparedInstance) -> Result<BaselineMetric> {
        match self {
            EvalModel::Learned { net, head, .. } => Ok(BaselineMetric::Diagonal(metric_forward(
                net,
                head,
                &inst.p,
                inst.sq.dim(),
            )?)),
            EvalModel::Euclidean => Ok(BaselineMetric::Diagonal(Metric::euclidean(inst.sq.dim()))),
            EvalModel::Heuristic(cfg) => heuristic_metric(&inst.sq, cfg),
        }
    }
}

/// Relative errors of every instance at every iteration for one model.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceCurve {
    pub model_id: String,
    pub algorithm: Algorithm,
    /// `errors[instance][iteration]`
    pub errors: Vec<Vec<f64>>,
    pub mean_error: Vec<f64>,
}

impl ConvergenceCurve {
    /// First iteration (1-based) at which each instance's error is below `tol`.
    pub fn iterations_to(&self, tol: f64) -> Vec<Option<usize>> {
        self.errors
            .iter()
            .map(|e| e.iter().position(|v| *v < tol).map(|i| i + 1))
            .collect()
    }

    /// Mean error after `iteration` steps (1-based).
    pub fn at(&self, iteration: usize) -> f64 {
        self.mean_error[iteration - 1]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub budget: usize,
    pub curves: Vec<ConvergenceCurve>,
}

impl ConvergenceReport {
    pub fn curve(&self, model_id: &str, algorithm: Algorithm) -> Option<&ConvergenceCurve> {
        self.curves
            .iter()
            .find(|c| c.model_id == model_id && c.algorithm == algorithm)
    }
}

pub fn evaluate_model(
    model: &EvalModel,
    instances: &[PreparedInstance],
    solver: &SolverConfig,
) -> Result<ConvergenceCurve> {
    let mut errors = Vec::with_capacity(instances.len());
    for inst in instances {
        let metric = model.metric_for(inst)?;
        let trace = run_baseline(&inst.sq, &metric, solver, &inst.z0, Some(&inst.x_star))?;
        errors.push(trace.errors.expect("reference supplied"));
    }
    let mut mean_error = vec![0.0; solver.iterations];
    for e in &errors {
        for (m, v) in mean_error.iter_mut().zip(e) {
            *m += v;
        }
    }
    let count = instances.len().max(1) as f64;
    mean_error.iter_mut().for_each(|m| *m /= count);
    Ok(ConvergenceCurve {
        model_id: model.id().to_string(),
        algorithm: solver.algorithm,
        errors,
        mean_error,
    })
}

/// Runs every model for `solver.iterations` steps on every instance.
pub fn evaluate_convergence(
    models: &[EvalModel],
    instances: &[PreparedInstance],
    solver: &SolverConfig,
) -> Result<ConvergenceReport> {
    solver.validate()?;
    if instances.is_empty() {
        return Err(Error::InvalidArgument("evaluation set is empty".into()));
    }
    let curves = models
        .iter()
        .map(|m| evaluate_model(m, instances, solver))
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceReport {
        budget: solver.iterations,
        curves,
    })
}

/// Constraints with `|Wx* + c|` at most this are counted as active.
pub const CORRELATION_ACTIVE_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct ScatterRecord {
    pub instance: usize,
    pub constraint: usize,
    /// `|Wx* + c|` for this inequality.
    pub residual: f64,
    /// Learned weight `m_i` of the constraint's slack.
    pub slack_weight: f64,
    /// `ρ·m_i`.
    pub effective_weight: f64,
    pub active: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationReport {
    pub records: Vec<ScatterRecord>,
    pub mean_active_weight: f64,
    pub mean_inactive_weight: f64,
    /// Spearman correlation between residual and slack weight.
    pub rank_correlation: f64,
}

pub fn active_set_correlation(
    net: &Mlp,
    head: &MetricHead,
    family: &dyn ProblemFamily,
    data: &ParamDataset,
) -> Result<CorrelationReport> {
    if data.is_empty() {
        return Err(Error::InvalidArgument(
            "correlation needs a nonempty dataset".into(),
        ));
    }
    let mut records = Vec::new();
    for (idx, (p, x_star)) in data.params.iter().zip(&data.targets).enumerate() {
        let qp = family.instance(p)?;
        let d = qp.n() + qp.k_in();
        let metric = metric_forward(net, head, p, d)?;
        for (c, v) in qp.ineq_values(x_star).into_iter().enumerate() {
            let w = metric.m()[qp.n() + c];
            records.push(ScatterRecord {
                instance: idx,
                constraint: c,
                residual: v.abs(),
                slack_weight: w,
                effective_weight: w * metric.rho(),
                active: v.abs() <= CORRELATION_ACTIVE_TOLERANCE,
            });
        }
    }
    let mean = |active: bool| {
        let (s, n) = records
            .iter()
            .filter(|r| r.active == active)
            .fold((0.0, 0usize), |(s, n), r| (s + r.slack_weight, n + 1));
        if n == 0 {
            f64::NAN
        } else {
            s / n as f64
        }
    };
    let residuals: Vec<f64> = records.iter().map(|r| r.residual).collect();
    let weights: Vec<f64> = records.iter().map(|r| r.slack_weight).collect();
    Ok(CorrelationReport {
        mean_active_weight: mean(true),
        mean_inactive_weight: mean(false),
        rank_correlation: spearman(&residuals, &weights),
        records,
    })
}

/// Average ranks (1-based), ties sharing the mean of their positions.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation; zero when either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    if n < 2.0 {
        return 0.0;
    }
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let (mut va, mut vb) = (0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}
