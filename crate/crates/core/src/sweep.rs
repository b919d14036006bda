//! Parameter sweeps over QE weights, feedback depth and fusion weight,
//! producing one evaluated row per grid point.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::csv_io;
use crate::error::{Error, Result};
use crate::expansion::{qe_score_with_cache, QeParams, RankingCache};
use crate::fusion::{fuse, FusionParams, Normalization};
use crate::metrics::{evaluate, DcfParams, EvalResult};
use crate::numfmt::sig6;
use crate::scoring::{resolve_trials, PairScores, ScoreSet, TrialPair};

/// Axes of a sweep. An absent axis contributes its default single value
/// (`alpha = 1`, `beta = 0`, `gamma = 0`, `top_n = 0`, no fusion).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub alphas: Option<Vec<f64>>,
    pub betas: Option<Vec<f64>>,
    pub gammas: Option<Vec<f64>>,
    pub top_ns: Option<Vec<usize>>,
    pub lambdas: Option<Vec<f64>>,
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("alphas", &self.alphas),
            ("betas", &self.betas),
            ("gammas", &self.gammas),
        ];
        for (name, axis) in weights {
            if let Some(vs) = axis {
                if let Some(v) = vs.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                    return Err(Error::InvalidParam(format!(
                        "{name}: {v} is not a finite non-negative weight"
                    )));
                }
            }
        }
        if let Some(ls) = &self.lambdas {
            if let Some(l) = ls.iter().find(|l| !(0.0..=1.0).contains(*l)) {
                return Err(Error::InvalidParam(format!(
                    "lambdas: {l} is outside [0, 1]"
                )));
            }
        }
        for (name, len) in [
            ("alphas", self.alphas.as_ref().map(Vec::len)),
            ("betas", self.betas.as_ref().map(Vec::len)),
            ("gammas", self.gammas.as_ref().map(Vec::len)),
            ("top_ns", self.top_ns.as_ref().map(Vec::len)),
            ("lambdas", self.lambdas.as_ref().map(Vec::len)),
        ] {
            if len == Some(0) {
                return Err(Error::InvalidParam(format!("{name} is empty")));
            }
        }
        Ok(())
    }

    pub fn has_qe_axes(&self) -> bool {
        self.alphas.is_some()
            || self.betas.is_some()
            || self.gammas.is_some()
            || self.top_ns.is_some()
    }

    /// QE points in declared order: alpha outermost, then beta, gamma, top_n.
    pub fn qe_points(&self) -> Vec<QeParams> {
        let axis = |a: &Option<Vec<f64>>, d: f64| a.clone().unwrap_or_else(|| vec![d]);
        let alphas = axis(&self.alphas, 1.0);
        let betas = axis(&self.betas, 0.0);
        let gammas = axis(&self.gammas, 0.0);
        let top_ns = self.top_ns.clone().unwrap_or_else(|| vec![0]);
        let mut out = Vec::new();
        for &a in &alphas {
            for &b in &betas {
                for &g in &gammas {
                    for &n in &top_ns {
                        out.push(QeParams::new(a, b, g, n));
                    }
                }
            }
        }
        out
    }

    fn lambda_axis(&self) -> Vec<Option<f64>> {
        match &self.lambdas {
            Some(ls) => ls.iter().map(|&l| Some(l)).collect(),
            None => vec![None],
        }
    }

    /// Cartesian product size.
    pub fn size(&self) -> usize {
        self.qe_points().len() * self.lambda_axis().len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub top_n: Option<usize>,
    pub lambda: Option<f64>,
    pub eer_percent: Option<f64>,
    pub min_dcf: Option<f64>,
    pub status: RowStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    Ok,
    Failed,
}

impl SweepRow {
    fn new(
        qe: Option<&QeParams>,
        lambda: Option<f64>,
        result: std::result::Result<EvalResult, String>,
    ) -> Self {
        let (eer_percent, min_dcf, status, error) = match result {
            Ok(r) => (Some(r.eer * 100.0), Some(r.min_dcf), RowStatus::Ok, None),
            Err(e) => (None, None, RowStatus::Failed, Some(e)),
        };
        Self {
            alpha: qe.map(|p| p.alpha),
            beta: qe.map(|p| p.beta),
            gamma: qe.map(|p| p.gamma),
            top_n: qe.map(|p| p.top_n),
            lambda,
            eer_percent,
            min_dcf,
            status,
            error,
        }
    }
}

/// Settings shared by every point of a QE sweep.
#[derive(Debug, Clone, Copy, Default)]
pub struct QeSweepOptions<'a> {
    /// Direction, bidirectional rule and partner exclusion are copied from here.
    pub template: QeParams,
    /// Second system to fuse with at every lambda.
    pub fuse_with: Option<&'a ScoreSet>,
    pub normalization: Normalization,
    pub dcf: DcfParams,
}

/// Runs the QE grid (optionally fused with a second system over the lambda
/// axis). Rows follow declared grid order; a failing point is recorded in
/// its row and does not stop the sweep.
pub fn run_qe_sweep<P: PairScores + ?Sized>(
    pairs: &P,
    trials: &[TrialPair],
    grid: &SweepGrid,
    opts: &QeSweepOptions<'_>,
) -> Result<Vec<SweepRow>> {
    grid.validate()?;
    if grid.lambdas.is_some() && opts.fuse_with.is_none() {
        return Err(Error::InvalidParam(
            "a lambda axis needs a second score set to fuse with".into(),
        ));
    }
    let points: Vec<QeParams> = grid
        .qe_points()
        .into_iter()
        .map(|p| QeParams {
            direction: opts.template.direction,
            bidi_rule: opts.template.bidi_rule,
            exclude_trial_partner: opts.template.exclude_trial_partner,
            ..p
        })
        .collect();
    let depth = points
        .iter()
        .map(QeParams::ranking_depth)
        .max()
        .unwrap_or(0);
    let idx = resolve_trials(pairs.set(), trials)?;
    let cache = RankingCache::build(pairs, idx.iter().flat_map(|&(e, t)| [e, t]), depth);
    let lambdas = grid.lambda_axis();

    let rows: Vec<Vec<SweepRow>> = points
        .par_iter()
        .map(|p| {
            let scored = qe_score_with_cache(&cache, trials, p);
            lambdas
                .iter()
                .map(|&lambda| {
                    let result = match &scored {
                        Err(e) => Err(e.to_string()),
                        Ok(s) => match lambda {
                            None => evaluate(s, &opts.dcf),
                            Some(l) => {
                                let other = opts.fuse_with.expect("checked above");
                                fuse(s, other, &FusionParams::new(l, opts.normalization))
                                    .and_then(|f| evaluate(&f, &opts.dcf))
                            }
                        }
                        .map_err(|e| e.to_string()),
                    };
                    SweepRow::new(Some(p), lambda, result)
                })
                .collect()
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

/// Sweeps the fusion weight over two fixed score sets.
pub fn run_fusion_sweep(
    a: &ScoreSet,
    b: &ScoreSet,
    lambdas: &[f64],
    normalization: Normalization,
    dcf: &DcfParams,
) -> Result<Vec<SweepRow>> {
    SweepGrid {
        lambdas: Some(lambdas.to_vec()),
        ..Default::default()
    }
    .validate()?;
    Ok(lambdas
        .par_iter()
        .map(|&l| {
            let result = fuse(a, b, &FusionParams::new(l, normalization))
                .and_then(|f| evaluate(&f, dcf))
                .map_err(|e| e.to_string());
            SweepRow::new(None, Some(l), result)
        })
        .collect())
}

pub const SWEEP_COLUMNS: [&str; 9] = [
    "alpha",
    "beta",
    "gamma",
    "top_n",
    "lambda",
    "eer_percent",
    "min_dcf",
    "status",
    "error",
];

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SWEEP_COLUMNS).map_err(csv_io)?;
    let f = |x: Option<f64>| x.map(sig6).unwrap_or_default();
    for r in rows {
        w.write_record([
            f(r.alpha),
            f(r.beta),
            f(r.gamma),
            r.top_n.map(|n| n.to_string()).unwrap_or_default(),
            f(r.lambda),
            f(r.eer_percent),
            f(r.min_dcf),
            match r.status {
                RowStatus::Ok => "ok".into(),
                RowStatus::Failed => "failed".into(),
            },
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub grid_size: usize,
    pub dcf_params: DcfParams,
    pub rows: Vec<SweepRow>,
}
