use serde::{Deserialize, Serialize};

use super::{dot, Hyperparams, ModelParams, TrainError, TrainedModel, TrainingData};
use crate::corpus::Dataset;
use crate::features::FEATURE_COUNT;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrParams {
    pub weights: [f64; FEATURE_COUNT],
    pub intercept: f64,
}

impl LrParams {
    pub fn probability(&self, x: &[f64; FEATURE_COUNT]) -> f64 {
        sigmoid(dot(&self.weights, x) + self.intercept)
    }
}

/// Loss after each accepted step (index 0 is the loss at the zero start).
#[derive(Debug, Clone, PartialEq)]
pub struct LrTrace {
    pub losses: Vec<f64>,
    pub converged: bool,
    pub final_gradient_max: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Mean negative log-likelihood plus `(lambda/2)·‖w‖²`, intercept unpenalized.
/// `labels` are 1.0 for Haram and 0.0 for Halal.
pub fn lr_loss(
    x: &[[f64; FEATURE_COUNT]],
    labels: &[f64],
    weights: &[f64; FEATURE_COUNT],
    intercept: f64,
    lambda: f64,
) -> f64 {
    let n = x.len() as f64;
    let nll: f64 = x
        .iter()
        .zip(labels)
        .map(|(xi, &y)| {
            let z = dot(weights, xi) + intercept;
            softplus(z) - y * z
        })
        .sum();
    nll / n + 0.5 * lambda * dot(weights, weights)
}

/// Analytic gradient of [`lr_loss`]: (d/dw, d/db).
pub fn lr_gradient(
    x: &[[f64; FEATURE_COUNT]],
    labels: &[f64],
    weights: &[f64; FEATURE_COUNT],
    intercept: f64,
    lambda: f64,
) -> ([f64; FEATURE_COUNT], f64) {
    let n = x.len() as f64;
    let mut gw = [0.0; FEATURE_COUNT];
    let mut gb = 0.0;
    for (xi, &y) in x.iter().zip(labels) {
        let r = sigmoid(dot(weights, xi) + intercept) - y;
        for (g, &v) in gw.iter_mut().zip(xi) {
            *g += r * v;
        }
        gb += r;
    }
    for (g, &w) in gw.iter_mut().zip(weights) {
        *g = *g / n + lambda * w;
    }
    (gw, gb / n)
}

const ARMIJO_C: f64 = 1e-4;
const SHRINK: f64 = 0.5;
const MIN_STEP: f64 = 1e-16;

/// Full-batch gradient descent from zero with backtracking (Armijo) line
/// search. Stops once the gradient's max-norm drops below `tol`, after
/// `max_iter` steps, or when no step length decreases the loss.
pub fn train_lr_traced(
    d: &Dataset,
    lambda: f64,
    max_iter: usize,
    tol: f64,
) -> Result<(TrainedModel, LrTrace), TrainError> {
    let data = TrainingData::new(d)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(TrainError::InvalidHyperparameter(format!(
            "lambda must be non-negative, got {lambda}"
        )));
    }
    if !(tol > 0.0) {
        return Err(TrainError::InvalidHyperparameter(format!("tol must be positive, got {tol}")));
    }
    let labels: Vec<f64> = data.haram.iter().map(|&h| if h { 1.0 } else { 0.0 }).collect();
    let x = &data.x;

    let mut w = [0.0; FEATURE_COUNT];
    let mut b = 0.0;
    let mut loss = lr_loss(x, &labels, &w, b, lambda);
    let mut losses = vec![loss];
    let mut step: f64 = 1.0;
    let mut converged = false;
    let mut iterations = 0;
    let mut gmax;

    loop {
        let (gw, gb) = lr_gradient(x, &labels, &w, b, lambda);
        gmax = gw.iter().fold(gb.abs(), |m, g| m.max(g.abs()));
        if gmax < tol {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        let gnorm2 = dot(&gw, &gw) + gb * gb;
        // try a slightly longer step than last time, then backtrack
        let mut t = (step * 2.0).min(1e6);
        let accepted = loop {
            let mut nw = w;
            for (v, g) in nw.iter_mut().zip(&gw) {
                *v -= t * g;
            }
            let nb = b - t * gb;
            let nl = lr_loss(x, &labels, &nw, nb, lambda);
            if nl <= loss - ARMIJO_C * t * gnorm2 && nl < loss {
                break Some((nw, nb, nl));
            }
            t *= SHRINK;
            if t < MIN_STEP {
                break None;
            }
        };
        let Some((nw, nb, nl)) = accepted else {
            break;
        };
        w = nw;
        b = nb;
        loss = nl;
        step = t;
        losses.push(loss);
        iterations += 1;
    }

    let model = TrainedModel {
        params: ModelParams::Lr(LrParams {
            weights: w,
            intercept: b,
        }),
        meta: data.meta(
            Hyperparams::Lr {
                lambda,
                max_iter,
                tol,
            },
            converged,
            iterations,
        ),
    };
    Ok((
        model,
        LrTrace {
            losses,
            converged,
            final_gradient_max: gmax,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synthesize_fixture, CoinRecord, Ticker};
    use crate::features::{FeatureId, FeatureVector, Label};
    use crate::learners::train_lr;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_tie_to_haram() {
        let p = LrParams {
            weights: [0.0; FEATURE_COUNT],
            intercept: 0.0,
        };
        assert_eq!(p.probability(&[1.0; FEATURE_COUNT]), 0.5);
        let d = synthesize_fixture(3, 3, 0).unwrap();
        let (mut m, _) = train_lr_traced(&d, 1e-8, 1, 1e-6).unwrap();
        m.params = ModelParams::Lr(p);
        let pred = m.predict(&FeatureVector::zeros());
        assert_eq!(pred.score, 0.5);
        assert_eq!(pred.label, Label::Haram);
    }

    #[test]
    fn loss_strictly_decreases_on_separable_data() {
        let mk = |t: &str, set: &[FeatureId], ruling| CoinRecord {
            ticker: Ticker::new(t).unwrap(),
            name: None,
            features: FeatureVector::from_set(set),
            ruling,
        };
        let d = Dataset::new(vec![
            mk("A", &[FeatureId::Margin], Label::Haram),
            mk("B", &[FeatureId::Margin, FeatureId::DeFi], Label::Haram),
            mk("C", &[], Label::Halal),
            mk("D", &[FeatureId::DeFi], Label::Halal),
        ])
        .unwrap();
        let (m, trace) = train_lr_traced(&d, 1e-8, 500, 1e-6).unwrap();
        assert!(trace.losses.len() > 10);
        for w in trace.losses.windows(2) {
            assert!(w[1] < w[0], "{} !< {}", w[1], w[0]);
        }
        for r in d.records() {
            assert_eq!(m.predict(&r.features).label, r.ruling);
        }
    }

    #[test]
    fn converges_with_strong_ridge() {
        let d = synthesize_fixture(30, 30, 9).unwrap();
        let m = train_lr(&d, 0.1, 10_000, 1e-6).unwrap();
        assert!(m.meta.converged);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = synthesize_fixture(15, 15, 4).unwrap();
        let data = TrainingData::new(&d).unwrap();
        let labels: Vec<f64> = data.haram.iter().map(|&h| f64::from(u8::from(h))).collect();
        let lambda = 0.05;
        for _ in 0..20 {
            let mut w = [0.0; FEATURE_COUNT];
            for v in w.iter_mut() {
                *v = rng.gen_range(-2.0..2.0);
            }
            let b = rng.gen_range(-2.0..2.0);
            let (gw, gb) = lr_gradient(&data.x, &labels, &w, b, lambda);
            let h = 1e-5;
            let fd = |k: usize| {
                let (mut wp, mut wm) = (w, w);
                let (mut bp, mut bm) = (b, b);
                if k < FEATURE_COUNT {
                    wp[k] += h;
                    wm[k] -= h;
                } else {
                    bp += h;
                    bm -= h;
                }
                (lr_loss(&data.x, &labels, &wp, bp, lambda) - lr_loss(&data.x, &labels, &wm, bm, lambda))
                    / (2.0 * h)
            };
            for k in 0..=FEATURE_COUNT {
                let analytic = if k < FEATURE_COUNT { gw[k] } else { gb };
                let numeric = fd(k);
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
                assert!(rel < 1e-5 || (analytic - numeric).abs() < 1e-10, "k={k} {analytic} vs {numeric}");
            }
        }
    }
}
