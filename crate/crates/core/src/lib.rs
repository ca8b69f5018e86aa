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

//! Learned diagonal proximal metrics for Douglas-Rachford splitting and
//! ADMM on parametric quadratic programs.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`] / [`autodiff`]: dense arithmetic and a reverse-mode tape
//!   that differentiates through linear solves.
//! - [`qp`]: problem data, the slack reformulation, and ground truth.
//! - [`prox`]: metric prox operators, DR and ADMM, and the differentiable
//!   unrolled solve.
//! - [`net`]: ReLU networks for the metric predictor and warm-start
//!   estimator, plus checkpoints.
//! - [`problems`]: toy, portfolio and quadcopter families.
//! - [`baselines`]: Euclidean and objective-reconditioning metrics.
//! - [`training`]: datasets, training loops, and evaluation.
//! - [`config`] / [`app`]: experiment configuration and the command layer
//!   behind the `proxmetric` binary.

pub mod app;
pub mod autodiff;
pub mod baselines;
pub mod config;
pub mod error;
pub mod io;
pub mod net;
pub mod problems;
pub mod prox;
pub mod qp;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use prox::{Algorithm, Metric, SolverConfig};
pub use qp::{QpProblem, SlackQp};
pub use tensor::Tensor;
