//! Linear fusion of two systems' trial scores:
//! `fused = lambda * s1 + (1 - lambda) * s2`, with optional per-system
//! normalization applied first.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::ScoreSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    None,
    /// `(s - mean) / std`, population standard deviation.
    ZNorm,
    /// `(s - min) / (max - min)`.
    MinMax,
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "z" | "z_norm" | "znorm" => Ok(Self::ZNorm),
            "minmax" | "min_max" => Ok(Self::MinMax),
            other => Err(Error::InvalidParam(format!(
                "unknown normalization {other:?} (expected none, z or minmax)"
            ))),
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::ZNorm => "z",
            Self::MinMax => "minmax",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionParams {
    pub lambda: f64,
    pub normalization: Normalization,
}

impl FusionParams {
    pub fn new(lambda: f64, normalization: Normalization) -> Self {
        Self {
            lambda,
            normalization,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidParam(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

pub fn normalize_scores(scores: &ScoreSet, mode: Normalization) -> Result<ScoreSet> {
    let s = scores.scores();
    let distinct = s.first().is_some_and(|f| s.iter().any(|x| x != f));
    let out = match mode {
        Normalization::None => return Ok(scores.clone()),
        Normalization::ZNorm => {
            let n = s.len() as f64;
            let mean = s.iter().sum::<f64>() / n;
            let var = s.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            let std = var.sqrt();
            if !distinct || std <= 0.0 {
                return Err(Error::DegenerateDistribution {
                    mode: "z",
                    reason: "scores have zero standard deviation".into(),
                });
            }
            s.iter().map(|x| (x - mean) / std).collect()
        }
        Normalization::MinMax => {
            let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !distinct || hi <= lo {
                return Err(Error::DegenerateDistribution {
                    mode: "minmax",
                    reason: "scores have zero range".into(),
                });
            }
            s.iter().map(|x| (x - lo) / (hi - lo)).collect()
        }
    };
    scores.with_scores(scores.system.clone(), out)
}

/// Checks that two score sets cover the same trials in the same order.
pub fn check_aligned(a: &ScoreSet, b: &ScoreSet) -> Result<()> {
    for (k, (ta, tb)) in a.trials().iter().zip(b.trials()).enumerate() {
        if ta.enroll_id != tb.enroll_id || ta.test_id != tb.test_id {
            return Err(Error::TrialMismatch {
                index: k + 1,
                detail: format!(
                    "({}, {}) vs ({}, {})",
                    ta.enroll_id, ta.test_id, tb.enroll_id, tb.test_id
                ),
            });
        }
    }
    if a.len() != b.len() {
        return Err(Error::TrialMismatch {
            index: a.len().min(b.len()) + 1,
            detail: format!("{} trials vs {} trials", a.len(), b.len()),
        });
    }
    Ok(())
}

/// Fuses `s1` (weight `lambda`) with `s2` (weight `1 - lambda`). Labels are
/// taken from `s1` unless it is unlabeled for a trial.
pub fn fuse(s1: &ScoreSet, s2: &ScoreSet, params: &FusionParams) -> Result<ScoreSet> {
    params.validate()?;
    check_aligned(s1, s2)?;
    let a = normalize_scores(s1, params.normalization)?;
    let b = normalize_scores(s2, params.normalization)?;
    let lambda = params.lambda;
    let fused = a
        .scores()
        .iter()
        .zip(b.scores())
        .map(|(x, y)| lambda * x + (1.0 - lambda) * y)
        .collect();
    let trials = s1
        .trials()
        .iter()
        .zip(s2.trials())
        .map(|(t1, t2)| {
            let mut t = t1.clone();
            if t.label == crate::scoring::Label::Unknown {
                t.label = t2.label;
            }
            t
        })
        .collect();
    ScoreSet::new(
        format!(
            "fuse({},{},lambda={},norm={})",
            s1.system, s2.system, lambda, params.normalization
        ),
        trials,
        fused,
    )
}
