//! Monte-Carlo falsification of a privacy claim on one pair of inputs.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{run_source, IResult, InterpError, Memory, RngDraws, STEP_LIMIT};
use crate::ast::Program;

/// Label of runs that ended in an error.
pub const ERROR_OUTCOME: &str = "⊥";

/// Overall family-wise error rate of the test.
pub const SIGNIFICANCE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PrivacyVerdict {
    Consistent,
    Falsified,
}

impl std::fmt::Display for PrivacyVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PrivacyVerdict::Consistent => "CONSISTENT",
            PrivacyVerdict::Falsified => "FALSIFIED",
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OutcomeStat {
    pub outcome: String,
    pub count1: usize,
    pub count2: usize,
    /// Smoothed estimate of `P[M(m1) = o] / P[M(m2) = o]`.
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PrivacyReport {
    pub verdict: PrivacyVerdict,
    pub epsilon: f64,
    pub trials: usize,
    /// Half-width of the simultaneous confidence interval on each frequency.
    pub radius: f64,
    /// Largest smoothed log-ratio in either direction.
    pub max_log_ratio: f64,
    /// Outcome that witnesses the violation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
    pub outcomes: Vec<OutcomeStat>,
}

/// Hoeffding radius for `n` samples at confidence `1 - alpha`.
pub fn hoeffding_radius(n: usize, alpha: f64) -> f64 {
    ((1.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

fn sample(
    p: &Program,
    m: &Memory,
    trials: usize,
    seed: u64,
    side: u64,
) -> IResult<BTreeMap<String, usize>> {
    let outcomes: Vec<IResult<String>> = (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(2 * k as u64 + side);
            match run_source(p, m, &mut RngDraws(rng), None, STEP_LIMIT) {
                Ok(r) if r.output.is_discrete() => Ok(r.output.to_string()),
                Ok(r) => Err(InterpError::Type(format!(
                    "output {} is not discrete; the estimator needs boolean outputs",
                    r.output
                ))),
                Err(_) => Ok(ERROR_OUTCOME.to_string()),
            }
        })
        .collect();
    let mut counts = BTreeMap::new();
    for o in outcomes {
        *counts.entry(o?).or_insert(0) += 1;
    }
    Ok(counts)
}

/// Run `p` `trials` times on each input and test every observed outcome
/// `o` against `P[o | m1] <= e^eps P[o | m2]` and its mirror. The claim is
/// falsified only when a violation survives simultaneous Hoeffding
/// intervals at family-wise level [`SIGNIFICANCE`].
pub fn estimate_privacy(
    p: &Program,
    m1: &Memory,
    m2: &Memory,
    epsilon: f64,
    trials: usize,
    seed: u64,
) -> IResult<PrivacyReport> {
    if trials == 0 {
        return Err(InterpError::Type("at least one trial is required".into()));
    }
    let c1 = sample(p, m1, trials, seed, 0)?;
    let c2 = sample(p, m2, trials, seed, 1)?;
    let mut keys: Vec<&String> = c1.keys().chain(c2.keys()).collect();
    keys.sort();
    keys.dedup();
    let k = keys.len();
    let radius = hoeffding_radius(trials, SIGNIFICANCE / (2 * k) as f64);
    let n = trials as f64;
    let bound = epsilon.exp();

    let mut report = PrivacyReport {
        verdict: PrivacyVerdict::Consistent,
        epsilon,
        trials,
        radius,
        max_log_ratio: 0.0,
        witness: None,
        outcomes: Vec::new(),
    };
    for o in keys {
        let a = c1.get(o).copied().unwrap_or(0);
        let b = c2.get(o).copied().unwrap_or(0);
        let (p1, p2) = (a as f64 / n, b as f64 / n);
        let smooth = |c: usize| (c as f64 + 1.0) / (n + k as f64);
        let ratio = smooth(a) / smooth(b);
        report.max_log_ratio = report.max_log_ratio.max(ratio.ln().abs());
        let violated = p1 - radius > bound * (p2 + radius) || p2 - radius > bound * (p1 + radius);
        if violated && report.witness.is_none() {
            report.verdict = PrivacyVerdict::Falsified;
            report.witness = Some(o.clone());
        }
        report.outcomes.push(OutcomeStat {
            outcome: o.clone(),
            count1: a,
            count2: b,
            ratio,
        });
    }
    Ok(report)
}
