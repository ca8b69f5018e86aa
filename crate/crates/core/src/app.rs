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

//! Command implementations behind the `proxmetric` binary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};

use crate::baselines::HeuristicConfig;
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::io::{
    read_dataset, write_convergence, write_dataset, write_losses, write_scatter, LossRow,
};
use crate::net::{load_checkpoint, save_checkpoint, Checkpoint, MetricHead, Mlp};
use crate::problems::ProblemFamily;
use crate::prox::{Algorithm, SolverConfig};
use crate::training::{
    active_set_correlation, evaluate_convergence, evaluate_model, generate_splits,
    prepare_instances, train_estimator, train_metric, ConvergenceReport, CorrelationReport,
    EvalModel, ParamDataset, PreparedInstance, Split,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    GenData,
    Train,
    Eval,
    Correlate,
}

/// Artifact locations under the output directory.
#[derive(Clone, Debug)]
pub struct Paths {
    root: PathBuf,
}

impl Paths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Paths { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn dataset(&self, split: Split) -> PathBuf {
        self.root.join("data").join(format!("{split}.csv"))
    }

    pub fn estimator(&self) -> PathBuf {
        self.root.join("estimator.ckpt")
    }

    pub fn metric(&self, algorithm: Algorithm, k: usize) -> PathBuf {
        self.root
            .join(format!("metric_{}.ckpt", model_id(algorithm, k)))
    }

    pub fn losses(&self) -> PathBuf {
        self.root.join("losses.csv")
    }

    pub fn selection(&self) -> PathBuf {
        self.root.join("selection.csv")
    }

    pub fn convergence(&self) -> PathBuf {
        self.root.join("convergence.csv")
    }

    pub fn scatter(&self) -> PathBuf {
        self.root.join("scatter.csv")
    }
}

pub fn model_id(algorithm: Algorithm, k: usize) -> String {
    format!("{algorithm}_k{k}")
}

fn split_count(cfg: &ExperimentConfig, split: Split) -> usize {
    match split {
        Split::Train => cfg.data.train,
        Split::Val => cfg.data.val,
        Split::Test => cfg.data.test,
    }
}

/// Loads one split; a split configured with zero rows is empty, not missing.
pub fn load_split(cfg: &ExperimentConfig, split: Split) -> Result<ParamDataset> {
    let path = Paths::new(&cfg.out_dir).dataset(split);
    if split_count(cfg, split) == 0 && !path.exists() {
        let family = cfg.problem.build(cfg.seed)?;
        return Ok(ParamDataset {
            family: family.name().to_string(),
            n: family.n(),
            v: family.param_dim(),
            seed: cfg.seed,
            split,
            params: vec![],
            targets: vec![],
        });
    }
    let data = read_dataset(&path)?;
    if data.family != cfg.problem.name() {
        return Err(Error::Config(format!(
            "{} holds {} data but the config describes {}",
            path.display(),
            data.family,
            cfg.problem.name()
        )));
    }
    Ok(data)
}

pub fn gen_data(cfg: &ExperimentConfig) -> Result<String> {
    let family = cfg.problem.build(cfg.seed)?;
    let paths = Paths::new(&cfg.out_dir);
    let sets = generate_splits(
        family.as_ref(),
        [cfg.data.train, cfg.data.val, cfg.data.test],
        cfg.seed,
        &cfg.data.targets,
    )?;
    let hash = cfg.hash();
    let mut summary = String::new();
    for set in &sets {
        if set.is_empty() {
            continue;
        }
        write_dataset(paths.dataset(set.split), set, &hash)?;
        writeln!(summary, "{}: {} instances", set.split, set.len()).ok();
    }
    writeln!(
        summary,
        "targets: Euclidean DR to {:e}, KKT-checked at {:e}, oracle cross-check up to {} inequalities",
        cfg.data.targets.tolerance, cfg.data.targets.kkt_tolerance, cfg.data.targets.oracle_max_inequalities
    )
    .ok();
    Ok(summary)
}

fn estimator_layers(cfg: &ExperimentConfig, family: &dyn ProblemFamily) -> Vec<usize> {
    ExperimentConfig::layers(
        family.param_dim(),
        &cfg.network.estimator_hidden,
        family.n(),
    )
}

fn metric_layers(cfg: &ExperimentConfig, v: usize, d: usize) -> Vec<usize> {
    ExperimentConfig::layers(v, &cfg.network.metric_hidden, d + 1)
}

fn load_estimator(paths: &Paths) -> Result<Mlp> {
    Ok(load_checkpoint(paths.estimator())?.net)
}

/// Seed for the metric network of `(algorithm, k, candidate)`.
fn metric_seed(cfg: &ExperimentConfig, algorithm: Algorithm, k: usize, candidate: usize) -> u64 {
    let a = match algorithm {
        Algorithm::Dr => 0,
        Algorithm::Admm => 1,
    };
    cfg.seed
        .wrapping_mul(1_000_003)
        .wrapping_add(1 + a * 100_000 + k as u64 * 100 + candidate as u64)
}

/// One trained metric network.
#[derive(Clone, Debug)]
pub struct TrainedMetric {
    pub algorithm: Algorithm,
    pub k: usize,
    pub rho_max: f64,
    pub net: Mlp,
    pub head: MetricHead,
    pub history: Vec<f64>,
    /// Validation error at iteration `k` when a sweep was run.
    pub val_error: Option<f64>,
}

/// Trains (or reloads) the estimator and every metric network; writes
/// checkpoints, `losses.csv` and, for sweeps, `selection.csv`.
pub fn train(cfg: &ExperimentConfig) -> Result<String> {
    let family = cfg.problem.build(cfg.seed)?;
    let paths = Paths::new(&cfg.out_dir);
    let hash = cfg.hash();
    let train_set = load_split(cfg, Split::Train)?;
    if train_set.is_empty() {
        return Err(Error::Config(
            "training needs a nonempty train split".into(),
        ));
    }
    let mut losses = Vec::new();
    let mut summary = String::new();

    let estimator = if paths.estimator().exists() {
        writeln!(
            summary,
            "estimator: resumed from {}",
            paths.estimator().display()
        )
        .ok();
        load_estimator(&paths)?
    } else {
        let mut net = Mlp::new(&estimator_layers(cfg, family.as_ref()))?.init_weights(cfg.seed);
        let history = train_estimator(&mut net, &train_set, &cfg.estimator_train_config())?;
        save_checkpoint(paths.estimator(), &net, None, cfg.seed)?;
        writeln!(
            summary,
            "estimator: final loss {:e}",
            history.last().copied().unwrap_or(f64::NAN)
        )
        .ok();
        losses.extend(history.iter().enumerate().map(|(epoch, &loss)| LossRow {
            model_id: "estimator".into(),
            epoch,
            loss,
        }));
        net
    };

    let train_inst = prepare_instances(family.as_ref(), &train_set, Some(&estimator))?;
    let sweep = cfg.head.candidates().len() > 1;
    let val_inst = if sweep {
        let val = load_split(cfg, Split::Val)?;
        if val.is_empty() {
            return Err(Error::Config(
                "a rho_max sweep needs a nonempty validation split".into(),
            ));
        }
        prepare_instances(family.as_ref(), &val, Some(&estimator))?
    } else {
        vec![]
    };

    let mut selection = Vec::new();
    for &algorithm in &cfg.solver.algorithms {
        for &k in &cfg.solver.k {
            let chosen =
                train_metric_candidates(cfg, algorithm, k, &train_inst, &val_inst, &mut losses)?;
            save_checkpoint(
                paths.metric(algorithm, k),
                &chosen.net,
                Some(&chosen.head),
                cfg.seed,
            )?;
            if let Some(v) = chosen.val_error {
                selection.push(LossRow {
                    model_id: format!("{}_rho{}", model_id(algorithm, k), chosen.rho_max),
                    epoch: k - 1,
                    loss: v,
                });
            }
            writeln!(
                summary,
                "{}: rho_max {} final loss {:e}",
                model_id(algorithm, k),
                chosen.rho_max,
                chosen.history.last().copied().unwrap_or(f64::NAN)
            )
            .ok();
        }
    }
    write_losses(paths.losses(), &losses, &hash)?;
    if sweep {
        write_losses(paths.selection(), &selection, &hash)?;
    }
    Ok(summary)
}

/// Trains one network per `ρ_max` candidate and keeps the one with the
/// lowest validation error at iteration `k` (first wins ties).
pub fn train_metric_candidates(
    cfg: &ExperimentConfig,
    algorithm: Algorithm,
    k: usize,
    train_inst: &[PreparedInstance],
    val_inst: &[PreparedInstance],
    losses: &mut Vec<LossRow>,
) -> Result<TrainedMetric> {
    let candidates = cfg.head.candidates();
    let sweep = candidates.len() > 1;
    let d = train_inst[0].sq.dim();
    let v = train_inst[0].p.len();
    let mut best: Option<TrainedMetric> = None;
    for (c, &rho_max) in candidates.iter().enumerate() {
        let head = cfg.head.head(rho_max)?;
        let mut net =
            Mlp::new(&metric_layers(cfg, v, d))?.init_weights(metric_seed(cfg, algorithm, k, c));
        let history = train_metric(
            &mut net,
            &head,
            train_inst,
            &cfg.metric_train_config(k),
            algorithm,
            cfg.solver.gamma,
        )?;
        let id = if sweep {
            format!("{}_rho{rho_max}", model_id(algorithm, k))
        } else {
            model_id(algorithm, k)
        };
        info!(
            "{id}: final loss {:e}",
            history.last().copied().unwrap_or(f64::NAN)
        );
        losses.extend(history.iter().enumerate().map(|(epoch, &loss)| LossRow {
            model_id: id.clone(),
            epoch,
            loss,
        }));
        let val_error = if sweep {
            let model = EvalModel::Learned {
                id: id.clone(),
                net: net.clone(),
                head,
            };
            let solver = SolverConfig::new(algorithm, k)
                .with_gamma(cfg.solver.gamma)
                .with_error_floor(cfg.solver.error_floor);
            Some(evaluate_model(&model, val_inst, &solver)?.at(k))
        } else {
            None
        };
        let candidate = TrainedMetric {
            algorithm,
            k,
            rho_max,
            net,
            head,
            history,
            val_error,
        };
        let better = match &best {
            None => true,
            Some(b) => {
                candidate.val_error.unwrap_or(f64::INFINITY) < b.val_error.unwrap_or(f64::INFINITY)
            }
        };
        if better {
            best = Some(candidate);
        }
    }
    Ok(best.expect("at least one candidate"))
}

fn heuristic_for(cfg: &ExperimentConfig, algorithm: Algorithm) -> HeuristicConfig {
    let mut h = cfg.heuristic;
    if algorithm == Algorithm::Dr && !h.diagonalize {
        warn!("dense heuristic metrics run under ADMM only; using the diagonal for DR");
        h.diagonalize = true;
    }
    h
}

/// Baselines first, then one learned model per configured `k`.
pub fn eval_models(
    cfg: &ExperimentConfig,
    algorithm: Algorithm,
    learned: impl IntoIterator<Item = (usize, Checkpoint)>,
) -> Result<Vec<EvalModel>> {
    let mut models = vec![
        EvalModel::Euclidean,
        EvalModel::Heuristic(heuristic_for(cfg, algorithm)),
    ];
    for (k, ck) in learned {
        let head = ck.head.ok_or_else(|| {
            Error::Checkpoint(format!("metric checkpoint for k = {k} has no head bounds"))
        })?;
        models.push(EvalModel::Learned {
            id: model_id(algorithm, k),
            net: ck.net,
            head,
        });
    }
    Ok(models)
}

/// Evaluates the given models on the test split for every algorithm.
pub fn evaluate_with(
    cfg: &ExperimentConfig,
    estimator: &Mlp,
    models_for: impl Fn(Algorithm) -> Result<Vec<EvalModel>>,
) -> Result<Vec<ConvergenceReport>> {
    let family = cfg.problem.build(cfg.seed)?;
    let test = load_split(cfg, Split::Test)?;
    if test.is_empty() {
        return Err(Error::Config(
            "evaluation needs a nonempty test split".into(),
        ));
    }
    let instances = prepare_instances(family.as_ref(), &test, Some(estimator))?;
    cfg.solver
        .algorithms
        .iter()
        .map(|&algorithm| {
            let solver = SolverConfig::new(algorithm, cfg.solver.budget(algorithm))
                .with_gamma(cfg.solver.gamma)
                .with_error_floor(cfg.solver.error_floor);
            evaluate_convergence(&models_for(algorithm)?, &instances, &solver)
        })
        .collect()
}

pub fn eval(cfg: &ExperimentConfig) -> Result<(Vec<ConvergenceReport>, String)> {
    let paths = Paths::new(&cfg.out_dir);
    let estimator = load_estimator(&paths)?;
    let reports = evaluate_with(cfg, &estimator, |algorithm| {
        let learned = cfg
            .solver
            .k
            .iter()
            .map(|&k| Ok((k, load_checkpoint(paths.metric(algorithm, k))?)))
            .collect::<Result<Vec<_>>>()?;
        eval_models(cfg, algorithm, learned)
    })?;
    write_convergence(paths.convergence(), &reports, &cfg.hash())?;
    let mut summary = String::new();
    for rep in &reports {
        for c in &rep.curves {
            let probe = cfg
                .solver
                .k
                .iter()
                .copied()
                .filter(|k| *k <= rep.budget)
                .max()
                .unwrap_or(rep.budget);
            writeln!(
                summary,
                "{} {}: error {:e} at iteration {probe}, {:e} at iteration {}",
                c.algorithm,
                c.model_id,
                c.at(probe),
                c.at(rep.budget),
                rep.budget
            )
            .ok();
        }
    }
    Ok((reports, summary))
}

/// Scatter of slack weights against residuals for the first configured
/// algorithm and unroll length.
pub fn correlate(cfg: &ExperimentConfig) -> Result<(CorrelationReport, String)> {
    let paths = Paths::new(&cfg.out_dir);
    let family = cfg.problem.build(cfg.seed)?;
    let algorithm = cfg.solver.algorithms[0];
    let k = cfg.solver.k[0];
    let ck = load_checkpoint(paths.metric(algorithm, k))?;
    let head = ck
        .head
        .ok_or_else(|| Error::Checkpoint("metric checkpoint has no head bounds".into()))?;
    let test = load_split(cfg, Split::Test)?;
    if test.is_empty() {
        return Err(Error::Config(
            "correlation needs a nonempty test split".into(),
        ));
    }
    let report = active_set_correlation(&ck.net, &head, family.as_ref(), &test)?;
    write_scatter(paths.scatter(), &report, &cfg.hash())?;
    let summary = format!(
        "{}: {} records, mean slack weight active {:.4} inactive {:.4}, rank correlation {:.4}\n",
        model_id(algorithm, k),
        report.records.len(),
        report.mean_active_weight,
        report.mean_inactive_weight,
        report.rank_correlation
    );
    Ok((report, summary))
}

pub fn run_command(command: Command, cfg: &ExperimentConfig) -> Result<String> {
    match command {
        Command::GenData => gen_data(cfg),
        Command::Train => train(cfg),
        Command::Eval => eval(cfg).map(|(_, s)| s),
        Command::Correlate => correlate(cfg).map(|(_, s)| s),
    }
}
