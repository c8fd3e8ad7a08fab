//! Linear soft-margin SVM: minimizes `½‖w‖² + C·Σ max(0, 1 − y(w·x + b))`
//! through its dual with sequential minimal optimization. Each step updates
//! the maximal-violating pair chosen with second-order information; ties
//! pick the lowest row index, so the iteration path is fully determined by
//! the canonical row order.

use serde::{Deserialize, Serialize};

use super::{dot, Hyperparams, ModelParams, TrainError, TrainedModel, TrainingData};
use crate::corpus::Dataset;
use crate::features::FEATURE_COUNT;

/// KKT violation at which optimization stops.
const KKT_TOL: f64 = 1e-10;
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub weights: [f64; FEATURE_COUNT],
    pub bias: f64,
}

impl SvmParams {
    pub fn decision(&self, x: &[f64; FEATURE_COUNT]) -> f64 {
        dot(&self.weights, x) + self.bias
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmTrace {
    /// Dual objective `½αᵀQα − Σα` after each pair update (index 0: α = 0).
    pub dual_objective: Vec<f64>,
    /// Primal objective at the returned (w, b).
    pub primal_objective: f64,
    pub converged: bool,
    pub iterations: usize,
}

pub fn train_svm_traced(
    d: &Dataset,
    c: f64,
    epochs: usize,
    seed: u64,
) -> Result<(TrainedModel, SvmTrace), TrainError> {
    let data = TrainingData::new(d)?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(TrainError::InvalidHyperparameter(format!("C must be positive, got {c}")));
    }
    let n = data.len();
    let y: Vec<f64> = data.haram.iter().map(|&h| if h { 1.0 } else { -1.0 }).collect();
    let k: Vec<Vec<f64>> = data
        .x
        .iter()
        .map(|a| data.x.iter().map(|b| dot(a, b)).collect())
        .collect();
    let q = |i: usize, j: usize| y[i] * y[j] * k[i][j];

    let mut alpha = vec![0.0; n];
    // gradient of the dual objective: Qα − e
    let mut grad = vec![-1.0; n];
    let dual = |alpha: &[f64], grad: &[f64]| -> f64 {
        0.5 * alpha.iter().zip(grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>()
    };
    let mut trace = vec![0.0];
    let max_iter = epochs.saturating_mul(n).max(1);
    let mut converged = false;
    let mut iterations = 0;

    let in_up = |t: usize, a: &[f64]| (y[t] > 0.0 && a[t] < c) || (y[t] < 0.0 && a[t] > 0.0);
    let in_low = |t: usize, a: &[f64]| (y[t] > 0.0 && a[t] > 0.0) || (y[t] < 0.0 && a[t] < c);

    while iterations < max_iter {
        let mut i = usize::MAX;
        let mut gmax = f64::NEG_INFINITY;
        for t in 0..n {
            if in_up(t, &alpha) && -y[t] * grad[t] > gmax {
                gmax = -y[t] * grad[t];
                i = t;
            }
        }
        let mut gmin = f64::INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !in_low(t, &alpha) {
                continue;
            }
            let v = -y[t] * grad[t];
            gmin = gmin.min(v);
            if i != usize::MAX && v < gmax {
                let b = gmax - v;
                let mut a = k[i][i] + k[t][t] - 2.0 * k[i][t];
                if a <= 0.0 {
                    a = TAU;
                }
                let obj = -(b * b) / a;
                if obj < best {
                    best = obj;
                    j = t;
                }
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin < KKT_TOL {
            converged = true;
            break;
        }

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let mut quad = k[i][i] + k[j][j] - 2.0 * k[i][j];
        if quad <= 0.0 {
            quad = TAU;
        }
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q(t, i) * di + q(t, j) * dj;
        }
        iterations += 1;
        trace.push(dual(&alpha, &grad));
    }

    // bias: average over free vectors, else midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (ub + lb) / 2.0
    };

    let mut weights = [0.0; FEATURE_COUNT];
    for t in 0..n {
        if alpha[t] != 0.0 {
            for (w, &v) in weights.iter_mut().zip(&data.x[t]) {
                *w += alpha[t] * y[t] * v;
            }
        }
    }
    let params = SvmParams {
        weights,
        bias: -rho,
    };
    let primal_objective = 0.5 * dot(&weights, &weights)
        + c * data
            .x
            .iter()
            .zip(&y)
            .map(|(x, &yi)| (1.0 - yi * params.decision(x)).max(0.0))
            .sum::<f64>();

    let model = TrainedModel {
        params: ModelParams::Svm(params),
        meta: data.meta(Hyperparams::Svm { c, epochs, seed }, converged, iterations),
    };
    Ok((
        model,
        SvmTrace {
            dual_objective: trace,
            primal_objective,
            converged,
            iterations,
        },
    ))
}
