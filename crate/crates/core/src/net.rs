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

//! Fully connected ReLU networks, the bounded metric head, the warm-start
//! estimator, first-order optimizers, and the checkpoint format.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{sigmoid_scale_value, Gradients, Tape, Var};
use crate::error::{Error, Result};
use crate::prox::{Metric, MetricVar};
use crate::qp::SlackQp;
use crate::tensor::Tensor;

/// Affine layers with ReLU between them and a linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    weights: Vec<Arc<Tensor>>,
    biases: Vec<Arc<Tensor>>,
}

/// Tape handles for every parameter of an [`Mlp`], in declaration order.
#[derive(Clone, Debug)]
pub struct MlpParams<'t> {
    pub weights: Vec<Var<'t>>,
    pub biases: Vec<Var<'t>>,
}

impl MlpParams<'_> {
    /// Gradient flattened in declaration order (`W₀, b₀, W₁, b₁, …`).
    pub fn flat_grad(&self, grads: &Gradients) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(grads.wrt(*w).data());
            out.extend_from_slice(grads.wrt(*b).data());
        }
        out
    }
}

impl Mlp {
    /// All-zero network with the given layer sizes (input first).
    pub fn new(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "network needs at least two positive layer sizes, got {sizes:?}"
            )));
        }
        let weights = sizes
            .windows(2)
            .map(|w| Arc::new(Tensor::zeros(w[1], w[0])))
            .collect();
        let biases = sizes[1..]
            .iter()
            .map(|&s| Arc::new(Tensor::zeros(s, 1)))
            .collect();
        Ok(Mlp {
            sizes: sizes.to_vec(),
            weights,
            biases,
        })
    }

    /// He initialization: weights `N(0, 2/fan_in)` from a seeded generator,
    /// biases zero.
    pub fn init_weights(mut self, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let fan_in = w.cols();
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            let wm = Arc::make_mut(w);
            for v in wm.data_mut() {
                *v = normal.sample(&mut rng);
            }
            Arc::make_mut(b).data_mut().fill(0.0);
        }
        self
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("at least two sizes")
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn layer(&self, i: usize) -> (&Tensor, &Tensor) {
        (&self.weights[i], &self.biases[i])
    }

    pub fn num_params(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.len() + b.len())
            .sum()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.data());
            out.extend_from_slice(b.data());
        }
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::shape(
                "set_params_flat",
                format!("{} values for {} parameters", flat.len(), self.num_params()),
            ));
        }
        let mut offset = 0;
        self.for_each_param_mut(|_, v| {
            *v = flat[offset];
            offset += 1;
        });
        Ok(())
    }

    /// Visits parameters in declaration order with their flat index.
    pub fn for_each_param_mut(&mut self, mut f: impl FnMut(usize, &mut f64)) {
        let mut idx = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            for t in [w, b] {
                for v in Arc::make_mut(t).data_mut() {
                    f(idx, v);
                    idx += 1;
                }
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(&self.biases)
            .all(|t| t.is_finite())
    }

    /// SHA-256 of the little-endian parameter bytes.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for v in self.params_flat() {
            hasher.update(v.to_le_bytes());
        }
        hex(&hasher.finalize())
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.input_dim() {
            return Err(Error::shape(
                "mlp_forward",
                format!(
                    "input has {len} entries, network expects {}",
                    self.input_dim()
                ),
            ));
        }
        Ok(())
    }

    pub fn forward(&self, p: &[f64]) -> Result<Vec<f64>> {
        self.check_input(p.len())?;
        let last = self.num_layers() - 1;
        let mut h = Tensor::column(p.to_vec());
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut a = w.matmul(&h)?;
            for (x, bias) in a.data_mut().iter_mut().zip(b.data()) {
                *x += bias;
                if i < last && *x <= 0.0 {
                    *x = 0.0;
                }
            }
            h = a;
        }
        Ok(h.into_data())
    }

    /// Records the forward pass on `tape`; returns the output and parameter handles.
    pub fn forward_tape<'t>(
        &self,
        tape: &'t Tape,
        input: Var<'t>,
    ) -> Result<(Var<'t>, MlpParams<'t>)> {
        self.check_input(input.value().rows())?;
        let last = self.num_layers() - 1;
        let mut params = MlpParams {
            weights: Vec::with_capacity(self.num_layers()),
            biases: Vec::with_capacity(self.num_layers()),
        };
        let mut h = input;
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let wv = tape.param_arc(Arc::clone(w));
            let bv = tape.param_arc(Arc::clone(b));
            params.weights.push(wv);
            params.biases.push(bv);
            h = wv.matmul(h)?.add(bv)?;
            if i < last {
                h = h.relu()?;
            }
        }
        Ok((h, params))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Bounds for the sigmoid-scaled metric weights and scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricHead {
    pub m_min: f64,
    pub m_max: f64,
    pub rho_min: f64,
    pub rho_max: f64,
}

impl MetricHead {
    pub fn new(m_min: f64, m_max: f64, rho_min: f64, rho_max: f64) -> Result<Self> {
        let head = MetricHead {
            m_min,
            m_max,
            rho_min,
            rho_max,
        };
        head.validate()?;
        Ok(head)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.m_min > 0.0
            && self.m_min < self.m_max
            && self.rho_min > 0.0
            && self.rho_min < self.rho_max
            && self.m_max.is_finite()
            && self.rho_max.is_finite();
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "invalid metric head bounds {self:?}"
            )));
        }
        Ok(())
    }
}

fn check_metric_output(net: &Mlp, d: usize) -> Result<()> {
    if net.output_dim() != d + 1 {
        return Err(Error::shape(
            "metric_forward",
            format!(
                "network emits {} values, metric needs d + 1 = {}",
                net.output_dim(),
                d + 1
            ),
        ));
    }
    Ok(())
}

/// Predicts `M = diag(ρ·m)` for a problem with `d` reformulated variables:
/// the first `d` outputs become `m` and the last becomes `ρ`.
pub fn metric_forward(net: &Mlp, head: &MetricHead, p: &[f64], d: usize) -> Result<Metric> {
    check_metric_output(net, d)?;
    let out = net.forward(p)?;
    let m = out[..d]
        .iter()
        .map(|&v| sigmoid_scale_value(v, head.m_min, head.m_max))
        .collect();
    let rho = sigmoid_scale_value(out[d], head.rho_min, head.rho_max);
    Metric::new(m, rho)
}

pub fn metric_forward_tape<'t>(
    net: &Mlp,
    head: &MetricHead,
    tape: &'t Tape,
    p: &[f64],
    d: usize,
) -> Result<(MetricVar<'t>, MlpParams<'t>)> {
    check_metric_output(net, d)?;
    let input = tape.constant(Tensor::column(p.to_vec()));
    let (out, params) = net.forward_tape(tape, input)?;
    let m = out.slice(0, d)?.sigmoid_scale(head.m_min, head.m_max)?;
    let rho = out.slice(d, 1)?.sigmoid_scale(head.rho_min, head.rho_max)?;
    Ok((MetricVar { m, rho }, params))
}

/// Warm start `z₀ = (ℰ(p), 0)`: network output for the original variables,
/// zero slacks.
pub fn estimator_forward(net: &Mlp, p: &[f64], sq: &SlackQp) -> Result<Vec<f64>> {
    if net.output_dim() != sq.n_orig() {
        return Err(Error::shape(
            "estimator_forward",
            format!(
                "network emits {} values, problem has n = {}",
                net.output_dim(),
                sq.n_orig()
            ),
        ));
    }
    let mut z = net.forward(p)?;
    z.resize(sq.dim(), 0.0);
    Ok(z)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Plain SGD or Adam (β₁ = 0.9, β₂ = 0.999, ε = 1e-8) over a flat parameter vector.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, num_params: usize) -> Self {
        Optimizer {
            kind,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }

    pub fn step(&mut self, net: &mut Mlp, grad: &[f64]) -> Result<()> {
        if grad.len() != self.m.len() || grad.len() != net.num_params() {
            return Err(Error::shape(
                "optimizer",
                format!(
                    "{} gradients for {} parameters",
                    grad.len(),
                    net.num_params()
                ),
            ));
        }
        match self.kind {
            OptimizerKind::Sgd => {
                let lr = self.lr;
                net.for_each_param_mut(|i, p| *p -= lr * grad[i]);
            }
            OptimizerKind::Adam => {
                self.t += 1;
                let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.eps, self.lr);
                let c1 = 1.0 - b1.powi(self.t);
                let c2 = 1.0 - b2.powi(self.t);
                let (m, v) = (&mut self.m, &mut self.v);
                net.for_each_param_mut(|i, p| {
                    let g = grad[i];
                    m[i] = b1 * m[i] + (1.0 - b1) * g;
                    v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                    let mh = m[i] / c1;
                    let vh = v[i] / c2;
                    *p -= lr * mh / (vh.sqrt() + eps);
                });
            }
        }
        if !net.is_finite() {
            return Err(Error::Divergence(
                "non-finite parameters after update".into(),
            ));
        }
        Ok(())
    }
}

const CHECKPOINT_MAGIC: &str = "PROXMETRIC1";
const CHECKPOINT_VERSION: &str = "1";
const HEADER_END: &str = "end_header";

/// Network parameters plus the head bounds they were trained with.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub net: Mlp,
    pub head: Option<MetricHead>,
    pub seed: u64,
}

/// Writes the magic line, a `key = value` header, then the raw
/// little-endian f64 parameters in declaration order.
pub fn save_checkpoint(
    path: impl AsRef<Path>,
    net: &Mlp,
    head: Option<&MetricHead>,
    seed: u64,
) -> Result<()> {
    let mut payload = Vec::with_capacity(net.num_params() * 8);
    for v in net.params_flat() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    let sizes: Vec<String> = net.sizes().iter().map(|s| s.to_string()).collect();
    let head_line = match head {
        Some(h) => format!("{},{},{},{}", h.m_min, h.m_max, h.rho_min, h.rho_max),
        None => "none".to_string(),
    };
    let mut out = Vec::with_capacity(payload.len() + 256);
    writeln!(out, "{CHECKPOINT_MAGIC}")?;
    writeln!(out, "format_version = {CHECKPOINT_VERSION}")?;
    writeln!(out, "layers = {}", sizes.join(","))?;
    writeln!(out, "head = {head_line}")?;
    writeln!(out, "seed = {seed}")?;
    writeln!(out, "param_count = {}", net.num_params())?;
    writeln!(out, "checksum = {}", hex(&Sha256::digest(&payload)))?;
    writeln!(out, "{HEADER_END}")?;
    out.extend_from_slice(&payload);
    fs::write(path, out)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let bytes = fs::read(path)?;
    let corrupt = |msg: &str| Error::Checkpoint(format!("{}: {msg}", path.display()));

    let mut cursor = 0usize;
    let next_line = |cursor: &mut usize| -> Option<String> {
        let rest = &bytes[*cursor..];
        let end = rest.iter().position(|b| *b == b'\n')?;
        let line = String::from_utf8(rest[..end].to_vec()).ok()?;
        *cursor += end + 1;
        Some(line)
    };

    if next_line(&mut cursor).as_deref() != Some(CHECKPOINT_MAGIC) {
        return Err(corrupt("bad magic"));
    }
    let mut fields = std::collections::BTreeMap::new();
    loop {
        let line = next_line(&mut cursor).ok_or_else(|| corrupt("truncated header"))?;
        if line == HEADER_END {
            break;
        }
        let (k, v) = line
            .split_once(" = ")
            .ok_or_else(|| corrupt("malformed header line"))?;
        fields.insert(k.to_string(), v.to_string());
    }
    let field = |k: &str| {
        fields
            .get(k)
            .ok_or_else(|| corrupt(&format!("missing {k}")))
    };

    let version = field("format_version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion {
            found: version.clone(),
            expected: CHECKPOINT_VERSION.to_string(),
        });
    }
    let sizes = field("layers")?
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| corrupt("bad layers"))?;
    let head = match field("head")?.as_str() {
        "none" => None,
        s => {
            let v = s
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| corrupt("bad head"))?;
            if v.len() != 4 {
                return Err(corrupt("head needs four bounds"));
            }
            Some(
                MetricHead::new(v[0], v[1], v[2], v[3])
                    .map_err(|_| corrupt("invalid head bounds"))?,
            )
        }
    };
    let seed = field("seed")?
        .parse::<u64>()
        .map_err(|_| corrupt("bad seed"))?;
    let count = field("param_count")?
        .parse::<usize>()
        .map_err(|_| corrupt("bad param_count"))?;
    let checksum = field("checksum")?;

    let mut net = Mlp::new(&sizes).map_err(|_| corrupt("bad layers"))?;
    if net.num_params() != count {
        return Err(corrupt("param_count does not match layers"));
    }
    let payload = &bytes[cursor..];
    if payload.len() != count * 8 {
        return Err(corrupt("payload length does not match param_count"));
    }
    if &hex(&Sha256::digest(payload)) != checksum {
        return Err(corrupt("checksum mismatch"));
    }
    let flat: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    net.set_params_flat(&flat)?;
    Ok(Checkpoint { net, head, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check;
    use crate::problems::toy_instance;
    use crate::qp::reformulate;
    use rand::Rng;

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::new(&[3, 5, 2]).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
        assert!(net.forward(&[1.0]).is_err());
        assert!(Mlp::new(&[3]).is_err());
    }

    #[test]
    fn single_layer_is_affine() {
        let mut net = Mlp::new(&[2, 2]).unwrap();
        net.set_params_flat(&[1.0, 2.0, 3.0, 4.0, 0.5, -0.5])
            .unwrap();
        assert_eq!(net.forward(&[1.0, 1.0]).unwrap(), vec![3.5, 6.5]);
    }

    #[test]
    fn tape_forward_matches_plain_and_finite_differences() {
        let net = Mlp::new(&[3, 6, 5, 2]).unwrap().init_weights(4);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let tape = Tape::new();
        let input = tape.constant(Tensor::column(p.clone()));
        let (out, _) = net.forward_tape(&tape, input).unwrap();
        assert_eq!(out.value().data(), net.forward(&p).unwrap().as_slice());

        // gradient with respect to the input
        let err = grad_check(
            |tape, x| {
                let (y, _) = net.forward_tape(tape, x)?;
                y.mul(y)?.sum()
            },
            &Tensor::column(p.clone()),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");

        // gradient with respect to the flat parameters
        let tape = Tape::new();
        let input = tape.constant(Tensor::column(p.clone()));
        let (y, params) = net.forward_tape(&tape, input).unwrap();
        let loss = y.mul(y).unwrap().sum().unwrap();
        let g = params.flat_grad(&tape.backward(loss).unwrap());
        let flat = net.params_flat();
        let eval = |theta: &[f64]| {
            let mut n2 = net.clone();
            n2.set_params_flat(theta).unwrap();
            n2.forward(&p).unwrap().iter().map(|v| v * v).sum::<f64>()
        };
        let eps = 1e-5;
        for i in 0..flat.len() {
            let mut a = flat.clone();
            a[i] += eps;
            let mut b = flat.clone();
            b[i] -= eps;
            let fd = (eval(&a) - eval(&b)) / (2.0 * eps);
            assert!((g[i] - fd).abs() / (fd.abs() + 1e-12) < 1e-6 || (g[i] - fd).abs() < 1e-10);
        }
    }

    #[test]
    fn init_is_seeded_he_scaled() {
        let a = Mlp::new(&[200, 150, 3]).unwrap().init_weights(11);
        let b = Mlp::new(&[200, 150, 3]).unwrap().init_weights(11);
        assert_eq!(a, b);
        let (w, bias) = a.layer(0);
        assert!(bias.data().iter().all(|v| *v == 0.0));
        let n = w.len() as f64;
        let mean = w.data().iter().sum::<f64>() / n;
        let var = w
            .data()
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / n;
        let target = 2.0 / 200.0;
        assert!((var - target).abs() < 0.2 * target, "{var} vs {target}");
    }

    #[test]
    fn metric_head_bounds() {
        let head = MetricHead::new(0.2, 5.0, 0.05, 1.0).unwrap();
        let zero = Mlp::new(&[2, 4, 7]).unwrap();
        let m = metric_forward(&zero, &head, &[0.3, 0.4], 6).unwrap();
        assert!(m.m().iter().all(|v| (v - 2.6).abs() < 1e-15));
        assert!((m.rho() - 0.525).abs() < 1e-15);
        assert!(metric_forward(&zero, &head, &[0.3, 0.4], 5).is_err());

        let net = Mlp::new(&[2, 8, 7]).unwrap().init_weights(2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            let scale = 10f64.powi(rng.random_range(-2..6));
            let p = [
                scale * rng.random_range(-1.0..1.0),
                scale * rng.random_range(-1.0..1.0),
            ];
            let m = metric_forward(&net, &head, &p, 6).unwrap();
            assert!(m.rho() > 0.05 && m.rho() < 1.0);
            for &w in m.m() {
                assert!(w > 0.2 && w < 5.0);
                let eff = w * m.rho();
                assert!(eff > 0.01 && eff < 5.0);
            }
        }
        assert!(MetricHead::new(1.0, 1.0, 0.1, 1.0).is_err());
    }

    #[test]
    fn estimator_pads_zero_slacks() {
        let sq = reformulate(&toy_instance(0.1, 0.2).unwrap()).unwrap();
        let zero = Mlp::new(&[2, 8, 2]).unwrap();
        assert_eq!(
            estimator_forward(&zero, &[0.1, 0.2], &sq).unwrap(),
            vec![0.0; 6]
        );
        let net = Mlp::new(&[2, 8, 2]).unwrap().init_weights(1);
        let z = estimator_forward(&net, &[0.1, 0.2], &sq).unwrap();
        assert_eq!(z.len(), 6);
        assert!(z[2..].iter().all(|v| *v == 0.0));
        let wrong = Mlp::new(&[2, 8, 3]).unwrap();
        assert!(estimator_forward(&wrong, &[0.1, 0.2], &sq).is_err());
    }

    #[test]
    fn adam_and_sgd_reduce_a_quadratic() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::Adam] {
            let mut net = Mlp::new(&[1, 1]).unwrap();
            net.set_params_flat(&[3.0, -2.0]).unwrap();
            let mut opt = Optimizer::new(kind, 0.05, 2);
            for _ in 0..500 {
                let g: Vec<f64> = net.params_flat().iter().map(|v| 2.0 * v).collect();
                opt.step(&mut net, &g).unwrap();
            }
            assert!(net.params_flat().iter().all(|v| v.abs() < 1e-2), "{kind:?}");
        }
    }

    #[test]
    fn checkpoint_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let net = Mlp::new(&[2, 5, 7]).unwrap().init_weights(3);
        let head = MetricHead::new(0.2, 5.0, 0.05, 1.0).unwrap();
        save_checkpoint(&path, &net, Some(&head), 99).unwrap();
        let ck = load_checkpoint(&path).unwrap();
        assert_eq!(ck.net, net);
        assert_eq!(ck.head, Some(head));
        assert_eq!(ck.seed, 99);

        let mut bytes = fs::read(&path).unwrap();
        let last = bytes.len() - 3;
        bytes[last] ^= 0x5a;
        let bad = dir.path().join("bad.ckpt");
        fs::write(&bad, &bytes).unwrap();
        assert!(matches!(load_checkpoint(&bad), Err(Error::Checkpoint(_))));

        let text = fs::read(&path).unwrap();
        let swapped = String::from_utf8_lossy(&text[..40])
            .replace("format_version = 1", "format_version = 2");
        let mut v2 = swapped.into_bytes();
        v2.extend_from_slice(&text[40..]);
        let vpath = dir.path().join("v2.ckpt");
        fs::write(&vpath, &v2).unwrap();
        assert!(matches!(
            load_checkpoint(&vpath),
            Err(Error::CheckpointVersion { .. })
        ));

        assert!(matches!(
            load_checkpoint(dir.path().join("absent.ckpt")),
            Err(Error::MissingArtifact(_))
        ));
        fs::write(dir.path().join("junk.ckpt"), b"hello").unwrap();
        assert!(load_checkpoint(dir.path().join("junk.ckpt")).is_err());
    }
}
