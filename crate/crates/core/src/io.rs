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

//! File formats: dataset files, loss histories, convergence curves and
//! scatter records. Every CSV starts with a `# config_hash=` comment line.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::training::{ConvergenceReport, CorrelationReport, ParamDataset};

fn csv_error(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

fn write_with_hash(path: &Path, config_hash: &str, extra: &[String], body: Vec<u8>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut out = Vec::with_capacity(body.len() + 128);
    writeln!(out, "# config_hash={config_hash}")?;
    for line in extra {
        writeln!(out, "# {line}")?;
    }
    out.extend_from_slice(&body);
    fs::write(path, out)?;
    Ok(())
}

fn csv_body(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_error)?;
    for row in rows {
        w.write_record(&row).map_err(csv_error)?;
    }
    w.into_inner().map_err(|e| Error::Parse(e.to_string()))
}

/// `# family=… n=… v=… seed=… split=…` followed by rows `p₁,…,p_v,x*₁,…,x*_n`.
pub fn write_dataset(path: impl AsRef<Path>, data: &ParamDataset, config_hash: &str) -> Result<()> {
    let meta = format!(
        "family={} n={} v={} seed={} split={}",
        data.family, data.n, data.v, data.seed, data.split
    );
    let header: Vec<String> = (1..=data.v)
        .map(|i| format!("p{i}"))
        .chain((1..=data.n).map(|i| format!("x{i}")))
        .collect();
    let rows = data
        .params
        .iter()
        .zip(&data.targets)
        .map(|(p, x)| p.iter().chain(x).map(|v| v.to_string()).collect());
    write_with_hash(
        path.as_ref(),
        config_hash,
        &[meta],
        csv_body(&header, rows)?,
    )
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<ParamDataset> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)?;
    let bad = |msg: &str| Error::Parse(format!("{}: {msg}", path.display()));
    let meta_line = text
        .lines()
        .filter_map(|l| l.strip_prefix("# "))
        .find(|l| l.starts_with("family="))
        .ok_or_else(|| bad("missing dataset header"))?;
    let mut family = None;
    let (mut n, mut v, mut seed, mut split) = (None, None, None, None);
    for field in meta_line.split_whitespace() {
        let (k, val) = field
            .split_once('=')
            .ok_or_else(|| bad("malformed header field"))?;
        match k {
            "family" => family = Some(val.to_string()),
            "n" => n = val.parse().ok(),
            "v" => v = val.parse().ok(),
            "seed" => seed = val.parse().ok(),
            "split" => split = Some(val.parse()?),
            _ => return Err(bad(&format!("unknown header field {k}"))),
        }
    }
    let (Some(family), Some(n), Some(v), Some(seed), Some(split)) = (family, n, v, seed, split)
    else {
        return Err(bad("incomplete dataset header"));
    };
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut params = Vec::new();
    let mut targets = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        if record.len() != n + v {
            return Err(bad(&format!(
                "row has {} fields, expected {}",
                record.len(),
                n + v
            )));
        }
        let values = record
            .iter()
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| bad(&e.to_string()))?;
        params.push(values[..v].to_vec());
        targets.push(values[v..].to_vec());
    }
    Ok(ParamDataset {
        family,
        n,
        v,
        seed,
        split,
        params,
        targets,
    })
}

/// Columns `model_id,algorithm,iteration,mean_relative_error`.
pub fn convergence_csv(reports: &[ConvergenceReport]) -> Result<Vec<u8>> {
    let header = ["model_id", "algorithm", "iteration", "mean_relative_error"].map(String::from);
    let rows = reports.iter().flat_map(|r| r.curves.iter()).flat_map(|c| {
        c.mean_error.iter().enumerate().map(move |(i, e)| {
            vec![
                c.model_id.clone(),
                c.algorithm.to_string(),
                (i + 1).to_string(),
                e.to_string(),
            ]
        })
    });
    csv_body(&header, rows)
}

pub fn write_convergence(
    path: impl AsRef<Path>,
    reports: &[ConvergenceReport],
    config_hash: &str,
) -> Result<()> {
    write_with_hash(path.as_ref(), config_hash, &[], convergence_csv(reports)?)
}

/// Columns `instance,constraint,residual,slack_weight,effective_weight,active`
/// and a closing `# summary …` comment.
pub fn write_scatter(
    path: impl AsRef<Path>,
    report: &CorrelationReport,
    config_hash: &str,
) -> Result<()> {
    let header = [
        "instance",
        "constraint",
        "residual",
        "slack_weight",
        "effective_weight",
        "active",
    ]
    .map(String::from);
    let rows = report.records.iter().map(|r| {
        vec![
            r.instance.to_string(),
            r.constraint.to_string(),
            r.residual.to_string(),
            r.slack_weight.to_string(),
            r.effective_weight.to_string(),
            u8::from(r.active).to_string(),
        ]
    });
    let mut body = csv_body(&header, rows)?;
    writeln!(
        body,
        "# summary mean_active_weight={} mean_inactive_weight={} rank_correlation={}",
        report.mean_active_weight, report.mean_inactive_weight, report.rank_correlation
    )?;
    write_with_hash(path.as_ref(), config_hash, &[], body)
}

/// One row of a loss history.
#[derive(Clone, Debug, PartialEq)]
pub struct LossRow {
    /// `estimator` or the metric model id.
    pub model_id: String,
    pub epoch: usize,
    pub loss: f64,
}

/// Columns `model_id,epoch,loss`.
pub fn write_losses(path: impl AsRef<Path>, rows: &[LossRow], config_hash: &str) -> Result<()> {
    let header = ["model_id", "epoch", "loss"].map(String::from);
    let body = csv_body(
        &header,
        rows.iter().map(|r| {
            vec![
                r.model_id.clone(),
                (r.epoch + 1).to_string(),
                r.loss.to_string(),
            ]
        }),
    )?;
    write_with_hash(path.as_ref(), config_hash, &[], body)
}

/// Reads `model_id,epoch,loss` rows back.
pub fn read_losses(path: impl AsRef<Path>) -> Result<Vec<LossRow>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(csv_error)?;
    let mut out = Vec::new();
    for record in reader.records() {
        let r = record.map_err(csv_error)?;
        let bad = || Error::Parse(format!("{}: malformed loss row", path.display()));
        if r.len() != 3 {
            return Err(bad());
        }
        let epoch: usize = r[1].parse().map_err(|_| bad())?;
        out.push(LossRow {
            model_id: r[0].to_string(),
            epoch: epoch.checked_sub(1).ok_or_else(bad)?,
            loss: r[2].parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}
