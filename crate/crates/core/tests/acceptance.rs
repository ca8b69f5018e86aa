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

//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! fails if any criterion fails.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use proxmetric::app::{self, Paths};
use proxmetric::autodiff::grad_check;
use proxmetric::config::{ExperimentConfig, ProblemConfig};
use proxmetric::net::{save_checkpoint, Mlp};
use proxmetric::problems::ProblemFamily;
use proxmetric::prox::{
    prox_f, prox_g, relative_error, run, unrolled_solve, Algorithm, Metric, MetricVar, SolverConfig,
};
use proxmetric::qp::{active_set_oracle_solve, reformulate, residuals};
use proxmetric::training::{
    prepare_instances, train_estimator, ConvergenceReport, EvalModel, Split,
};
use proxmetric::{Result, Tensor};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn toy_family() -> Box<dyn ProblemFamily> {
    ExperimentConfig::preset("toy")
        .unwrap()
        .problem
        .build(1)
        .unwrap()
}

fn mean_at(
    report: &[ConvergenceReport],
    model: &str,
    algorithm: Algorithm,
    iteration: usize,
) -> f64 {
    report
        .iter()
        .find_map(|r| r.curve(model, algorithm))
        .unwrap_or_else(|| panic!("no curve {model}/{algorithm}"))
        .at(iteration)
}

fn gradients() -> Result<Outcome> {
    let family = toy_family();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = SolverConfig::new(Algorithm::Dr, 5);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let p = family.sample(&mut rng);
        let qp = family.instance(&p)?;
        let sq = reformulate(&qp)?;
        let target = Tensor::column(active_set_oracle_solve(&qp)?.x_star);
        let d = sq.dim();
        let mut z0 = vec![0.0; d];
        for v in z0.iter_mut().take(sq.n_orig()) {
            *v = rng.random_range(-1.0..1.0);
        }
        let z0 = Tensor::column(z0);
        let logits = Tensor::column((0..=d).map(|_| rng.random_range(-2.0..2.0)).collect());
        let err = grad_check(
            |tape, logits| {
                let metric = MetricVar {
                    m: logits.slice(0, d)?.sigmoid_scale(0.2, 5.0)?,
                    rho: logits.slice(d, 1)?.sigmoid_scale(0.05, 1.0)?,
                };
                let x = unrolled_solve(tape, &sq, metric, &cfg, tape.constant(z0.clone()))?;
                x.mse(tape.constant(target.clone()))
            },
            &logits,
            1e-5,
        )?;
        worst = worst.max(err);
    }
    outcome(
        worst < 1e-4,
        format!("max relative gradient error {worst:.2e} over 20 instances"),
    )
}

fn solver_vs_oracle() -> Result<Outcome> {
    let family = toy_family();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (mut worst_dr, mut worst_admm, mut worst_gap): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..100 {
        let p = family.sample(&mut rng);
        let qp = family.instance(&p)?;
        let sq = reformulate(&qp)?;
        let x_star = active_set_oracle_solve(&qp)?.x_star;
        let metric = Metric::euclidean(sq.dim());
        let z0 = vec![0.0; sq.dim()];
        let mut finals = Vec::new();
        for alg in Algorithm::ALL {
            let trace = run(&sq, &metric, &SolverConfig::new(alg, 2000), &z0, None)?;
            finals.push(trace.final_iterate().to_vec());
        }
        worst_dr = worst_dr.max(relative_error(&finals[0], &x_star, 1e-6));
        worst_admm = worst_admm.max(relative_error(&finals[1], &x_star, 1e-6));
        worst_gap = worst_gap.max(
            finals[0]
                .iter()
                .zip(&finals[1])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        );
    }
    outcome(
        worst_dr < 1e-6 && worst_admm < 1e-6 && worst_gap <= 1e-6,
        format!("max relative error DR {worst_dr:.2e}, ADMM {worst_admm:.2e}; max DR/ADMM gap {worst_gap:.2e}"),
    )
}

fn prox_invariants() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut families: Vec<Box<dyn ProblemFamily>> = Vec::new();
    for name in ["toy", "portfolio", "quadcopter"] {
        let mut cfg = ExperimentConfig::preset(name)?;
        if let ProblemConfig::Quadcopter { horizon, .. } = &mut cfg.problem {
            *horizon = 5;
        }
        families.push(cfg.problem.build(3)?);
    }
    let mut worst: f64 = 0.0;
    let mut idempotent = true;
    for call in 0..1000 {
        let family = &families[call % 3];
        let p = family.sample(&mut rng);
        let sq = reformulate(&family.instance(&p)?)?;
        let d = sq.dim();
        let m: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..10.0)).collect();
        let metric = Metric::new(m, rng.random_range(0.05..5.0))?;
        let gamma = rng.random_range(0.1..10.0);
        let z: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
        let out = prox_f(&z, &metric, gamma, &sq)?;
        worst = worst.max(residuals(&sq, &out)?.eq_norm);
        let g = prox_g(&z, &sq);
        idempotent &= prox_g(&g, &sq) == g;
    }
    outcome(
        worst <= 1e-8 && idempotent,
        format!("max prox_f equality residual {worst:.2e} over 1000 calls; prox_g idempotent: {idempotent}"),
    )
}

fn run_pipeline(cfg: &ExperimentConfig) -> Result<Vec<ConvergenceReport>> {
    app::gen_data(cfg)?;
    app::train(cfg)?;
    Ok(app::eval(cfg)?.0)
}

struct ToyResults {
    reports: Vec<ConvergenceReport>,
    cfg: ExperimentConfig,
}

fn toy_pipeline(root: &Path) -> Result<ToyResults> {
    let mut cfg = ExperimentConfig::preset("toy")?;
    cfg.out_dir = root.join("toy");
    cfg.solver.k = vec![10, 5];
    let reports = run_pipeline(&cfg)?;
    Ok(ToyResults { reports, cfg })
}

fn toy_learning(toy: &ToyResults) -> Result<Outcome> {
    let r = &toy.reports;
    let learned_dr = mean_at(r, "dr_k10", Algorithm::Dr, 10);
    let euclid_dr = mean_at(r, "euclidean", Algorithm::Dr, 10);
    let learned_admm = mean_at(r, "admm_k10", Algorithm::Admm, 10);
    let heur_admm = mean_at(r, "heuristic", Algorithm::Admm, 10);
    outcome(
        learned_dr <= 0.5 * euclid_dr && heur_admm > learned_admm,
        format!(
            "iteration 10: DR learned {learned_dr:.3e} vs Euclidean {euclid_dr:.3e}; ADMM heuristic {heur_admm:.3e} vs learned {learned_admm:.3e}"
        ),
    )
}

fn toy_correlation(toy: &ToyResults) -> Result<Outcome> {
    let (report, _) = app::correlate(&toy.cfg)?;
    let ratio = report.mean_active_weight / report.mean_inactive_weight;
    outcome(
        ratio >= 2.0 && report.rank_correlation < 0.0,
        format!(
            "mean slack weight active {:.4} / inactive {:.4} = {ratio:.2}; rank correlation {:.3}",
            report.mean_active_weight, report.mean_inactive_weight, report.rank_correlation
        ),
    )
}

fn trained_at_k(toy: &ToyResults) -> Result<Outcome> {
    let r = &toy.reports;
    let alg = Algorithm::Dr;
    let k5_at5 = mean_at(r, "dr_k5", alg, 5);
    let k10_at5 = mean_at(r, "dr_k10", alg, 5);
    let k10_at10 = mean_at(r, "dr_k10", alg, 10);
    let eu5 = mean_at(r, "euclidean", alg, 5);
    let eu10 = mean_at(r, "euclidean", alg, 10);
    outcome(
        k5_at5 < eu5 && k10_at10 < eu10 && k5_at5 <= k10_at5,
        format!(
            "DR: k5 model {k5_at5:.3e} vs Euclidean {eu5:.3e} at 5; k10 model {k10_at10:.3e} vs Euclidean {eu10:.3e} at 10; k10 model at 5 {k10_at5:.3e}"
        ),
    )
}

fn portfolio_config(root: &Path, seed: u64, budget: f64) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::preset("portfolio")?;
    cfg.seed = seed;
    cfg.out_dir = root.join(format!("portfolio_s{seed}_b{budget}"));
    if let ProblemConfig::Portfolio { budget: b, .. } = &mut cfg.problem {
        *b = budget;
    }
    cfg.data.train = 300;
    cfg.data.val = 0;
    cfg.data.test = 100;
    cfg.solver.k = vec![10];
    cfg.solver.algorithms = vec![Algorithm::Admm];
    cfg.solver.budget_admm = 50;
    cfg.head.rho_max_sweep = vec![];
    cfg.train.estimator_epochs = 50;
    cfg.train.epochs = 30;
    cfg.train.batch_size = 16;
    Ok(cfg)
}

fn budget_effect(root: &Path) -> Result<Outcome> {
    let mut wins = 0;
    let mut lines = Vec::new();
    for seed in 1..=3 {
        let r10 = run_pipeline(&portfolio_config(root, seed, 10.0)?)?;
        let h10 = mean_at(&r10, "heuristic", Algorithm::Admm, 50);
        let e10 = mean_at(&r10, "euclidean", Algorithm::Admm, 50);
        let r1 = run_pipeline(&portfolio_config(root, seed, 1.0)?)?;
        let h1 = mean_at(&r1, "heuristic", Algorithm::Admm, 50);
        let l1 = mean_at(&r1, "admm_k10", Algorithm::Admm, 50);
        let ok = h10 < e10 && h1 > l1;
        wins += ok as usize;
        lines.push(format!(
            "seed {seed}: budget 10 heuristic {h10:.3e} vs Euclidean {e10:.3e}; budget 1 heuristic {h1:.3e} vs learned {l1:.3e}"
        ));
    }
    outcome(
        wins >= 2,
        format!("{wins}/3 seeds hold [{}]", lines.join("; ")),
    )
}

fn median_hits(hits: &[Option<usize>], budget: usize) -> f64 {
    let mut v: Vec<usize> = hits.iter().map(|h| h.unwrap_or(budget + 1)).collect();
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
    }
}

fn quadcopter(root: &Path) -> Result<Outcome> {
    let mut cfg = ExperimentConfig::preset("quadcopter")?;
    cfg.out_dir = root.join("quadcopter");
    if let ProblemConfig::Quadcopter { horizon, .. } = &mut cfg.problem {
        *horizon = 5;
    }
    cfg.data.train = 300;
    cfg.data.val = 0;
    cfg.data.test = 50;
    cfg.solver.k = vec![10];
    cfg.solver.algorithms = vec![Algorithm::Dr];
    cfg.solver.budget_dr = 800;
    cfg.head.rho_max_sweep = vec![];
    cfg.head.rho_max = 1.0;
    cfg.train.estimator_epochs = 50;
    cfg.train.epochs = 30;
    cfg.train.batch_size = 16;
    let reports = run_pipeline(&cfg)?;
    let rep = &reports[0];
    let curve = |id: &str| rep.curve(id, Algorithm::Dr).expect("curve");
    let learned = median_hits(&curve("dr_k10").iterations_to(1e-2), rep.budget);
    let euclid = median_hits(&curve("euclidean").iterations_to(1e-2), rep.budget);
    outcome(
        learned < euclid,
        format!("median DR iterations to 1e-2: learned {learned} vs Euclidean {euclid} (horizon 5, budget 800)"),
    )
}

fn small_toy(root: &Path, name: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::preset("toy")?;
    cfg.out_dir = root.join(name);
    cfg.data.train = 200;
    cfg.data.test = 100;
    cfg.solver.k = vec![5];
    cfg.train.estimator_epochs = 10;
    cfg.train.epochs = 5;
    Ok(cfg)
}

fn artifacts(cfg: &ExperimentConfig) -> Result<Vec<(String, Vec<u8>)>> {
    let paths = Paths::new(&cfg.out_dir);
    let mut files = vec![paths.losses(), paths.convergence(), paths.scatter()];
    for split in Split::ALL {
        let p = paths.dataset(split);
        if p.exists() {
            files.push(p);
        }
    }
    files
        .into_iter()
        .map(|p| {
            Ok((
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p)?,
            ))
        })
        .collect()
}

fn determinism(root: &Path) -> Result<Outcome> {
    let mut runs = Vec::new();
    for name in ["det_a", "det_b"] {
        let cfg = small_toy(root, name)?;
        run_pipeline(&cfg)?;
        app::correlate(&cfg)?;
        runs.push(artifacts(&cfg)?);
    }
    let differing: Vec<&str> = runs[0]
        .iter()
        .zip(&runs[1])
        .filter(|(a, b)| a != b)
        .map(|(a, _)| a.0.as_str())
        .collect();
    outcome(
        differing.is_empty() && runs[0].len() == runs[1].len(),
        format!(
            "{} artifacts compared, differing: {differing:?}",
            runs[0].len()
        ),
    )
}

fn checkpoint_round_trip(root: &Path) -> Result<Outcome> {
    let cfg = small_toy(root, "ckpt")?;
    app::gen_data(&cfg)?;
    let family = cfg.problem.build(cfg.seed)?;
    let train_set = app::load_split(&cfg, Split::Train)?;
    let layers = ExperimentConfig::layers(
        family.param_dim(),
        &cfg.network.estimator_hidden,
        family.n(),
    );
    let mut estimator = Mlp::new(&layers)?.init_weights(cfg.seed);
    train_estimator(&mut estimator, &train_set, &cfg.estimator_train_config())?;
    let instances = prepare_instances(family.as_ref(), &train_set, Some(&estimator))?;
    let mut trained = Vec::new();
    for &alg in &cfg.solver.algorithms {
        for &k in &cfg.solver.k {
            trained.push(app::train_metric_candidates(
                &cfg,
                alg,
                k,
                &instances,
                &[],
                &mut Vec::new(),
            )?);
        }
    }
    let in_memory =
        app::evaluate_with(&cfg, &estimator, |alg| {
            let mut models = app::eval_models(&cfg, alg, [])?;
            models.extend(trained.iter().filter(|t| t.algorithm == alg).map(|t| {
                EvalModel::Learned {
                    id: app::model_id(alg, t.k),
                    net: t.net.clone(),
                    head: t.head,
                }
            }));
            Ok(models)
        })?;
    let direct = root.join("ckpt_direct.csv");
    proxmetric::io::write_convergence(&direct, &in_memory, &cfg.hash())?;

    let paths = Paths::new(&cfg.out_dir);
    save_checkpoint(paths.estimator(), &estimator, None, cfg.seed)?;
    for t in &trained {
        save_checkpoint(
            paths.metric(t.algorithm, t.k),
            &t.net,
            Some(&t.head),
            cfg.seed,
        )?;
    }
    app::eval(&cfg)?;
    let a = fs::read(direct)?;
    let b = fs::read(paths.convergence())?;
    outcome(
        a == b,
        format!(
            "in-memory vs reloaded convergence CSV ({} bytes): identical = {}",
            a.len(),
            a == b
        ),
    )
}

#[test]
fn acceptance() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let mut lines = Vec::new();
    let mut failed = Vec::new();
    let mut record = |id: usize, name: &str, start: Instant, r: Result<Outcome>| {
        let secs = start.elapsed().as_secs_f64();
        let (pass, detail) = match r {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        let line = format!(
            "criterion {id} [{name}]: {} ({detail}; {secs:.1}s)",
            if pass { "PASS" } else { "FAIL" }
        );
        println!("{line}");
        if !pass {
            failed.push(id);
        }
        lines.push(line);
    };

    let t = Instant::now();
    record(1, "gradient correctness", t, gradients());
    let t = Instant::now();
    record(2, "solver vs oracle", t, solver_vs_oracle());
    let t = Instant::now();
    record(3, "prox invariants", t, prox_invariants());

    let t = Instant::now();
    match toy_pipeline(root) {
        Ok(toy) => {
            record(4, "toy learning effect", t, toy_learning(&toy));
            let t = Instant::now();
            record(5, "active-set correlation", t, toy_correlation(&toy));
            let t = Instant::now();
            record(6, "trained-at-k", t, trained_at_k(&toy));
        }
        Err(e) => {
            let msg = e.to_string();
            for (id, name) in [
                (4, "toy learning effect"),
                (5, "active-set correlation"),
                (6, "trained-at-k"),
            ] {
                record(
                    id,
                    name,
                    t,
                    Err(proxmetric::Error::InvalidArgument(format!(
                        "toy pipeline: {msg}"
                    ))),
                );
            }
        }
    }
    let t = Instant::now();
    record(7, "portfolio budget effect", t, budget_effect(root));
    let t = Instant::now();
    record(8, "quadcopter iterations to 1e-2", t, quadcopter(root));
    let t = Instant::now();
    record(9, "determinism", t, determinism(root));
    let t = Instant::now();
    record(10, "checkpoint round-trip", t, checkpoint_round_trip(root));

    println!("\nacceptance summary:");
    for l in &lines {
        println!("  {l}");
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
