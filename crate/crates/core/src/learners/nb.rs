use serde::{Deserialize, Serialize};

use super::TrainingData;
use crate::features::FEATURE_COUNT;

/// Bernoulli naive Bayes in log space. Index 0 is Halal, 1 is Haram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbParams {
    pub log_prior: [f64; 2],
    /// log P(f = 1 | class)
    pub log_present: [[f64; FEATURE_COUNT]; 2],
    /// log P(f = 0 | class)
    pub log_absent: [[f64; FEATURE_COUNT]; 2],
}

impl NbParams {
    /// log P(x, class) up to the shared evidence term.
    pub fn log_joint(&self, class: usize, x: &[f64; FEATURE_COUNT]) -> f64 {
        let mut s = self.log_prior[class];
        for (f, &v) in x.iter().enumerate() {
            s += if v > 0.5 {
                self.log_present[class][f]
            } else {
                self.log_absent[class][f]
            };
        }
        s
    }

    /// log P(Haram | x) - log P(Halal | x).
    pub fn log_margin(&self, x: &[f64; FEATURE_COUNT]) -> f64 {
        self.log_joint(1, x) - self.log_joint(0, x)
    }
}

/// P(f=1|c) = (count(f=1, c) + alpha) / (n_c + 2 alpha); P(c) = n_c / N.
pub(super) fn fit(data: &TrainingData, alpha: f64) -> NbParams {
    let mut n = [0usize; 2];
    let mut present = [[0usize; FEATURE_COUNT]; 2];
    for (x, &y) in data.x.iter().zip(&data.haram) {
        let c = usize::from(y);
        n[c] += 1;
        for (f, &v) in x.iter().enumerate() {
            if v > 0.5 {
                present[c][f] += 1;
            }
        }
    }
    let total = (n[0] + n[1]) as f64;
    let mut p = NbParams {
        log_prior: [(n[0] as f64 / total).ln(), (n[1] as f64 / total).ln()],
        log_present: [[0.0; FEATURE_COUNT]; 2],
        log_absent: [[0.0; FEATURE_COUNT]; 2],
    };
    for c in 0..2 {
        let denom = n[c] as f64 + 2.0 * alpha;
        for f in 0..FEATURE_COUNT {
            let on = present[c][f] as f64;
            p.log_present[c][f] = ((on + alpha) / denom).ln();
            p.log_absent[c][f] = ((n[c] as f64 - on + alpha) / denom).ln();
        }
    }
    p
}
