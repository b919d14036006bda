//! DET sweep, equal error rate and minimum normalized detection cost.
//!
//! Decision rule: a trial is accepted iff `score >= threshold`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::embedding::csv_io;
use crate::error::{Error, Result};
use crate::numfmt::sig6;
use crate::scoring::{Label, ScoreSet};

/// Detection cost parameters. Defaults: `c_miss = 1`, `c_fa = 1`,
/// `p_target = 0.05`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DcfParams {
    pub c_miss: f64,
    pub c_fa: f64,
    pub p_target: f64,
}

impl Default for DcfParams {
    fn default() -> Self {
        Self {
            c_miss: 1.0,
            c_fa: 1.0,
            p_target: 0.05,
        }
    }
}

impl DcfParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_miss > 0.0 && self.c_miss.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "c_miss must be > 0, got {}",
                self.c_miss
            )));
        }
        if !(self.c_fa > 0.0 && self.c_fa.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "c_fa must be > 0, got {}",
                self.c_fa
            )));
        }
        if !(self.p_target > 0.0 && self.p_target < 1.0) {
            return Err(Error::InvalidParam(format!(
                "p_target must lie in (0, 1), got {}",
                self.p_target
            )));
        }
        Ok(())
    }

    /// Cost of the better of the two constant decisions.
    pub fn normalizer(&self) -> f64 {
        (self.c_miss * self.p_target).min(self.c_fa * (1.0 - self.p_target))
    }

    pub fn cost(&self, p_miss: f64, p_fa: f64) -> f64 {
        self.c_miss * self.p_target * p_miss + self.c_fa * (1.0 - self.p_target) * p_fa
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetPoint {
    pub threshold: f64,
    pub p_miss: f64,
    pub p_fa: f64,
}

/// Error rates at every distinct score plus the `-inf` / `+inf` sentinels,
/// in ascending threshold order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetCurve {
    pub points: Vec<DetPoint>,
    pub n_target: usize,
    pub n_nontarget: usize,
}

/// Splits a labeled score set into target and nontarget scores.
pub fn split_by_label(scores: &ScoreSet) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut tar = Vec::new();
    let mut non = Vec::new();
    let mut unknown = 0;
    for (t, s) in scores.iter() {
        match t.label {
            Label::Target => tar.push(s),
            Label::Nontarget => non.push(s),
            Label::Unknown => unknown += 1,
        }
    }
    if unknown > 0 {
        return Err(Error::UnknownLabels(unknown));
    }
    Ok((tar, non))
}

pub fn det_curve(scores: &ScoreSet) -> Result<DetCurve> {
    let (tar, non) = split_by_label(scores)?;
    det_curve_from(&tar, &non)
}

pub fn det_curve_from(targets: &[f64], nontargets: &[f64]) -> Result<DetCurve> {
    if targets.is_empty() {
        return Err(Error::MissingClass("target"));
    }
    if nontargets.is_empty() {
        return Err(Error::MissingClass("nontarget"));
    }
    if let Some(i) = targets
        .iter()
        .chain(nontargets)
        .position(|s| !s.is_finite())
    {
        return Err(Error::NonFiniteScore { index: i + 1 });
    }
    let mut tar = targets.to_vec();
    let mut non = nontargets.to_vec();
    tar.sort_unstable_by(f64::total_cmp);
    non.sort_unstable_by(f64::total_cmp);
    let (nt, nn) = (tar.len(), non.len());
    let rate = |count: usize, total: usize| count as f64 / total as f64;

    let mut points = Vec::with_capacity(nt + nn + 2);
    points.push(DetPoint {
        threshold: f64::NEG_INFINITY,
        p_miss: 0.0,
        p_fa: 1.0,
    });
    // `ti` / `ni`: number of target / nontarget scores strictly below the
    // current threshold.
    let (mut ti, mut ni) = (0, 0);
    while ti < nt || ni < nn {
        let next = match (tar.get(ti), non.get(ni)) {
            (Some(&a), Some(&b)) => a.min(b),
            (Some(&a), None) => a,
            (None, Some(&b)) => b,
            (None, None) => unreachable!(),
        };
        points.push(DetPoint {
            threshold: next,
            p_miss: rate(ti, nt),
            p_fa: rate(nn - ni, nn),
        });
        while ti < nt && tar[ti] <= next {
            ti += 1;
        }
        while ni < nn && non[ni] <= next {
            ni += 1;
        }
    }
    points.push(DetPoint {
        threshold: f64::INFINITY,
        p_miss: 1.0,
        p_fa: 0.0,
    });
    Ok(DetCurve {
        points,
        n_target: nt,
        n_nontarget: nn,
    })
}

/// Miss and false-alarm rates at an arbitrary threshold.
pub fn rates_at(targets: &[f64], nontargets: &[f64], threshold: f64) -> (f64, f64) {
    let miss = targets.iter().filter(|&&s| s < threshold).count();
    let fa = nontargets.iter().filter(|&&s| s >= threshold).count();
    (
        miss as f64 / targets.len() as f64,
        fa as f64 / nontargets.len() as f64,
    )
}

/// Equal error rate and its threshold.
///
/// `p_miss - p_fa` rises from -1 to +1 along the curve. If it hits zero at a
/// curve point, that point is returned; otherwise both rates are linearly
/// interpolated between the two points that bracket the sign change. The
/// threshold is interpolated the same way (or the finite end when one side is
/// a sentinel).
pub fn eer(curve: &DetCurve) -> (f64, f64) {
    let pts = &curve.points;
    for k in 0..pts.len() {
        let a = pts[k];
        let da = a.p_miss - a.p_fa;
        if da == 0.0 {
            return (a.p_miss, a.threshold);
        }
        if da > 0.0 {
            // Sentinels guarantee k >= 1 here.
            let b = pts[k - 1];
            let db = b.p_miss - b.p_fa;
            let f = -db / (da - db);
            let rate = b.p_miss + f * (a.p_miss - b.p_miss);
            let threshold = match (b.threshold.is_finite(), a.threshold.is_finite()) {
                (true, true) => b.threshold + f * (a.threshold - b.threshold),
                (true, false) => b.threshold,
                _ => a.threshold,
            };
            return (rate, threshold);
        }
    }
    unreachable!("curve ends at p_miss = 1, p_fa = 0")
}

/// Minimum detection cost over all curve points, normalized by
/// [`DcfParams::normalizer`]. Returns `(normalized, unnormalized, threshold)`;
/// the smallest threshold wins ties.
pub fn min_dcf(curve: &DetCurve, params: &DcfParams) -> (f64, f64, f64) {
    let mut best = f64::INFINITY;
    let mut at = f64::NAN;
    for p in &curve.points {
        let c = params.cost(p.p_miss, p.p_fa);
        if c < best {
            best = c;
            at = p.threshold;
        }
    }
    (best / params.normalizer(), best, at)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// Fraction in [0, 1].
    pub eer: f64,
    pub eer_threshold: f64,
    pub min_dcf: f64,
    pub min_dcf_unnormalized: f64,
    pub min_dcf_threshold: f64,
    pub n_target: usize,
    pub n_nontarget: usize,
}

pub fn evaluate(scores: &ScoreSet, params: &DcfParams) -> Result<EvalResult> {
    params.validate()?;
    let curve = det_curve(scores)?;
    Ok(evaluate_curve(&curve, params))
}

pub fn evaluate_curve(curve: &DetCurve, params: &DcfParams) -> EvalResult {
    let (eer, eer_threshold) = eer(curve);
    let (min_dcf, min_dcf_unnormalized, min_dcf_threshold) = min_dcf(curve, params);
    EvalResult {
        eer,
        eer_threshold,
        min_dcf,
        min_dcf_unnormalized,
        min_dcf_threshold,
        n_target: curve.n_target,
        n_nontarget: curve.n_nontarget,
    }
}

/// JSON evaluation report. Sentinel (infinite) thresholds serialize as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub system: String,
    pub n_target: usize,
    pub n_nontarget: usize,
    pub eer_percent: f64,
    pub eer_threshold: Option<f64>,
    pub min_dcf_normalized: f64,
    pub min_dcf_unnormalized: f64,
    pub min_dcf_threshold: Option<f64>,
    pub dcf_params: DcfParams,
}

impl EvalReport {
    pub fn new(system: impl Into<String>, r: &EvalResult, params: &DcfParams) -> Self {
        let finite = |x: f64| x.is_finite().then_some(x);
        Self {
            system: system.into(),
            n_target: r.n_target,
            n_nontarget: r.n_nontarget,
            eer_percent: r.eer * 100.0,
            eer_threshold: finite(r.eer_threshold),
            min_dcf_normalized: r.min_dcf,
            min_dcf_unnormalized: r.min_dcf_unnormalized,
            min_dcf_threshold: finite(r.min_dcf_threshold),
            dcf_params: *params,
        }
    }
}

/// `threshold,p_miss,p_fa` rows for external plotting.
pub fn write_det_csv<W: Write>(curve: &DetCurve, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["threshold", "p_miss", "p_fa"])
        .map_err(csv_io)?;
    for p in &curve.points {
        w.write_record([sig6(p.threshold), sig6(p.p_miss), sig6(p.p_fa)])
            .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}
