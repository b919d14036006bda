//! Cosine scoring: single pairs, the all-pairs structure, per-utterance
//! neighbor rankings, and baseline trial scores.

use std::cmp::Ordering;
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{csv_io, EmbeddingSet};
use crate::error::{Error, Result};
use crate::numfmt::sig6;

const LANES: usize = 8;

/// Dot product with a fixed eight-lane accumulation order.
///
/// The summation order depends only on the vector length, so the result is
/// identical no matter which thread or call site computes it, and
/// `dot(a, b) == dot(b, a)` bit for bit.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..LANES {
            acc[k] += x[k] * y[k];
        }
    }
    for k in 0..ra.len() {
        acc[k] += ra[k] * rb[k];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]))
}

/// Cosine from a dot product and the two squared norms, clamped to [-1, 1].
#[inline]
pub(crate) fn cosine_from_parts(ab: f64, aa: f64, bb: f64) -> f64 {
    (ab / (aa * bb).sqrt()).clamp(-1.0, 1.0)
}

/// Cosine similarity `a·b / (‖a‖‖b‖)`, clamped to [-1, 1].
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::VectorDimension {
            left: a.len(),
            right: b.len(),
        });
    }
    let aa = dot(a, a);
    let bb = dot(b, b);
    if aa == 0.0 || bb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(cosine_from_parts(dot(a, b), aa, bb))
}

/// Position of every id in ascending lexicographic order, used to break
/// score ties without string comparisons in the hot loop.
fn lexicographic_ranks(set: &EmbeddingSet) -> Vec<u32> {
    let mut order: Vec<u32> = (0..set.len() as u32).collect();
    order.sort_unstable_by(|&a, &b| set.id(a as usize).cmp(set.id(b as usize)));
    let mut rank = vec![0u32; set.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i as usize] = r as u32;
    }
    rank
}

/// Source of baseline pair scores over an [`EmbeddingSet`].
///
/// Implementations must return `score(i, j) == score(j, i)` bit for bit.
pub trait PairScores: Sync {
    fn set(&self) -> &EmbeddingSet;

    /// Lexicographic rank of each id, indexed by set position.
    fn lex_ranks(&self) -> &[u32];

    /// Score of the unordered pair `{i, j}`, `i != j`.
    fn score(&self, i: usize, j: usize) -> f64;

    /// Writes `score(i, j)` for every `j` into `out`; `out[i]` is unspecified.
    fn fill_row(&self, i: usize, out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            if j != i {
                *o = self.score(i, j);
            }
        }
    }

    fn len(&self) -> usize {
        self.set().len()
    }

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn squared_norms(set: &EmbeddingSet) -> Vec<f64> {
    (0..set.len())
        .map(|i| {
            let v = set.vector(i);
            dot(v, v)
        })
        .collect()
}

#[inline]
fn pair_score(set: &EmbeddingSet, norms: &[f64], i: usize, j: usize) -> f64 {
    let (lo, hi) = if i < j { (i, j) } else { (j, i) };
    cosine_from_parts(dot(set.vector(lo), set.vector(hi)), norms[lo], norms[hi])
}

/// Every unordered pair score, stored once in a packed upper triangle.
#[derive(Debug, Clone)]
pub struct AllPairs<'a> {
    set: &'a EmbeddingSet,
    lex: Vec<u32>,
    upper: Vec<f64>,
}

impl<'a> AllPairs<'a> {
    /// Sequential computation.
    pub fn compute(set: &'a EmbeddingSet) -> Result<Self> {
        set.ensure_scorable()?;
        let n = set.len();
        let norms = squared_norms(set);
        let mut upper = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                upper.push(pair_score(set, &norms, i, j));
            }
        }
        Ok(Self {
            set,
            lex: lexicographic_ranks(set),
            upper,
        })
    }

    /// Row-partitioned parallel computation on the current rayon pool.
    /// Each pair is computed exactly once by the same kernel, so the result is
    /// bit-identical to [`AllPairs::compute`].
    pub fn compute_parallel(set: &'a EmbeddingSet) -> Result<Self> {
        set.ensure_scorable()?;
        let n = set.len();
        let norms = squared_norms(set);
        let mut upper = vec![0.0; n * (n - 1) / 2];
        let mut rows: Vec<(usize, &mut [f64])> = Vec::with_capacity(n);
        let mut rest = upper.as_mut_slice();
        for i in 0..n {
            let (row, tail) = rest.split_at_mut(n - i - 1);
            rows.push((i, row));
            rest = tail;
        }
        rows.into_par_iter().for_each(|(i, row)| {
            for (k, out) in row.iter_mut().enumerate() {
                *out = pair_score(set, &norms, i, i + 1 + k);
            }
        });
        Ok(Self {
            set,
            lex: lexicographic_ranks(set),
            upper,
        })
    }

    /// Number of stored scores, `N(N-1)/2`.
    pub fn stored(&self) -> usize {
        self.upper.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.upper
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        let n = self.set.len();
        i * (2 * n - i - 1) / 2 + (j - i - 1)
    }

    pub fn score_by_id(&self, a: &str, b: &str) -> Result<f64> {
        let i = self
            .set
            .position(a)
            .ok_or_else(|| Error::UnknownId(a.into()))?;
        let j = self
            .set
            .position(b)
            .ok_or_else(|| Error::UnknownId(b.into()))?;
        if i == j {
            return Err(Error::InvalidParam(format!(
                "self pair {a:?} is not stored"
            )));
        }
        Ok(self.score(i, j))
    }
}

impl PairScores for AllPairs<'_> {
    fn set(&self) -> &EmbeddingSet {
        self.set
    }

    fn lex_ranks(&self) -> &[u32] {
        &self.lex
    }

    #[inline]
    fn score(&self, i: usize, j: usize) -> f64 {
        debug_assert_ne!(i, j);
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        self.upper[self.offset(lo, hi)]
    }

    fn fill_row(&self, i: usize, out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate().take(i) {
            *o = self.upper[self.offset(j, i)];
        }
        let n = self.set.len();
        if i + 1 < n {
            let start = self.offset(i, i + 1);
            out[i + 1..].copy_from_slice(&self.upper[start..start + n - i - 1]);
        }
    }
}

/// Recomputes scores on demand instead of storing them; same values as
/// [`AllPairs`], O(N) memory.
#[derive(Debug, Clone)]
pub struct LazyPairs<'a> {
    set: &'a EmbeddingSet,
    lex: Vec<u32>,
    norms: Vec<f64>,
}

impl<'a> LazyPairs<'a> {
    pub fn new(set: &'a EmbeddingSet) -> Result<Self> {
        set.ensure_scorable()?;
        Ok(Self {
            set,
            lex: lexicographic_ranks(set),
            norms: squared_norms(set),
        })
    }
}

impl PairScores for LazyPairs<'_> {
    fn set(&self) -> &EmbeddingSet {
        self.set
    }

    fn lex_ranks(&self) -> &[u32] {
        &self.lex
    }

    #[inline]
    fn score(&self, i: usize, j: usize) -> f64 {
        pair_score(self.set, &self.norms, i, j)
    }
}

/// A neighbor by set position with its score against the query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: u32,
    pub score: f64,
}

/// Descending score, then ascending lexicographic id.
#[inline]
fn neighbor_order(lex: &[u32]) -> impl Fn(&Neighbor, &Neighbor) -> Ordering + '_ {
    move |a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| lex[a.index as usize].cmp(&lex[b.index as usize]))
    }
}

/// The first `depth` neighbors of `query` in ranking order, skipping the
/// query itself and `exclude` when given. `depth` is clamped to the number of
/// candidates.
pub fn top_neighbors<P: PairScores + ?Sized>(
    pairs: &P,
    query: usize,
    depth: usize,
    exclude: Option<usize>,
) -> Vec<Neighbor> {
    let n = pairs.len();
    let mut row = vec![0.0; n];
    pairs.fill_row(query, &mut row);
    let mut cands: Vec<Neighbor> = row
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != query && Some(j) != exclude)
        .map(|(j, &score)| Neighbor {
            index: j as u32,
            score,
        })
        .collect();
    let cmp = neighbor_order(pairs.lex_ranks());
    let depth = depth.min(cands.len());
    if depth == 0 {
        return Vec::new();
    }
    if depth < cands.len() {
        cands.select_nth_unstable_by(depth - 1, &cmp);
        cands.truncate(depth);
    }
    cands.sort_unstable_by(&cmp);
    cands
}

/// All non-self neighbors of one utterance, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborRanking {
    pub query_id: String,
    pub neighbors: Vec<(String, f64)>,
}

impl NeighborRanking {
    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }
}

/// Sorts every non-self score of `query_id`, descending, ties by id.
pub fn rank_neighbors<P: PairScores + ?Sized>(
    pairs: &P,
    query_id: &str,
) -> Result<NeighborRanking> {
    let set = pairs.set();
    let q = set
        .position(query_id)
        .ok_or_else(|| Error::UnknownId(query_id.into()))?;
    let neighbors = top_neighbors(pairs, q, usize::MAX, None)
        .into_iter()
        .map(|nb| (set.id(nb.index as usize).to_string(), nb.score))
        .collect();
    Ok(NeighborRanking {
        query_id: query_id.to_string(),
        neighbors,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Target,
    Nontarget,
    Unknown,
}

impl Label {
    fn from_token(tok: &str) -> Option<Self> {
        match tok {
            "1" => Some(Self::Target),
            "0" => Some(Self::Nontarget),
            _ => None,
        }
    }

    fn token(self) -> &'static str {
        match self {
            Self::Target => "1",
            Self::Nontarget => "0",
            Self::Unknown => "",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrialPair {
    pub enroll_id: String,
    pub test_id: String,
    pub label: Label,
}

impl TrialPair {
    pub fn new(enroll_id: impl Into<String>, test_id: impl Into<String>, label: Label) -> Self {
        Self {
            enroll_id: enroll_id.into(),
            test_id: test_id.into(),
            label,
        }
    }

    pub fn unlabeled(enroll_id: impl Into<String>, test_id: impl Into<String>) -> Self {
        Self::new(enroll_id, test_id, Label::Unknown)
    }

    pub fn is_self_trial(&self) -> bool {
        self.enroll_id == self.test_id
    }

    pub fn swapped(&self) -> Self {
        Self::new(self.test_id.clone(), self.enroll_id.clone(), self.label)
    }
}

/// One system's scores, aligned to a trial list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub system: String,
    trials: Vec<TrialPair>,
    scores: Vec<f64>,
}

impl ScoreSet {
    pub fn new(
        system: impl Into<String>,
        trials: Vec<TrialPair>,
        scores: Vec<f64>,
    ) -> Result<Self> {
        if trials.len() != scores.len() {
            return Err(Error::InvalidParam(format!(
                "{} trials but {} scores",
                trials.len(),
                scores.len()
            )));
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFiniteScore { index: i + 1 });
        }
        Ok(Self {
            system: system.into(),
            trials,
            scores,
        })
    }

    pub fn empty(system: impl Into<String>) -> Self {
        Self {
            system: system.into(),
            trials: Vec::new(),
            scores: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn trials(&self) -> &[TrialPair] {
        &self.trials
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TrialPair, f64)> {
        self.trials.iter().zip(self.scores.iter().copied())
    }

    /// Same trials and labels with new scores.
    pub fn with_scores(&self, system: impl Into<String>, scores: Vec<f64>) -> Result<Self> {
        Self::new(system, self.trials.clone(), scores)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrialWarning {
    /// Enrollment and test utterance are the same (1-based trial index).
    SelfTrial { index: usize, id: String },
}

impl fmt::Display for TrialWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::SelfTrial { index, id } => {
                write!(f, "trial {index}: degenerate self-trial on {id:?}")
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScoredTrials {
    pub scores: ScoreSet,
    pub warnings: Vec<TrialWarning>,
}

/// Resolves every trial to set positions; errors name the first unknown id.
pub fn resolve_trials(set: &EmbeddingSet, trials: &[TrialPair]) -> Result<Vec<(usize, usize)>> {
    trials
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let find = |id: &str| {
                set.position(id).ok_or_else(|| Error::UnresolvedTrial {
                    index: k + 1,
                    id: id.to_string(),
                })
            };
            Ok((find(&t.enroll_id)?, find(&t.test_id)?))
        })
        .collect()
}

pub fn self_trial_warnings(trials: &[TrialPair]) -> Vec<TrialWarning> {
    trials
        .iter()
        .enumerate()
        .filter(|(_, t)| t.is_self_trial())
        .map(|(k, t)| TrialWarning::SelfTrial {
            index: k + 1,
            id: t.enroll_id.clone(),
        })
        .collect()
}

pub const BASELINE_SYSTEM: &str = "baseline";

/// Baseline cosine score for every trial.
pub fn score_trials(set: &EmbeddingSet, trials: &[TrialPair]) -> Result<ScoredTrials> {
    let idx = resolve_trials(set, trials)?;
    let scores = idx
        .iter()
        .map(|&(e, t)| cosine(set.vector(e), set.vector(t)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoredTrials {
        scores: ScoreSet::new(BASELINE_SYSTEM, trials.to_vec(), scores)?,
        warnings: self_trial_warnings(trials),
    })
}

/// Parses a whitespace-separated trial list: `label enroll test` with label
/// in {1, 0}, or `enroll test` (label unknown). Blank lines and lines
/// starting with `#` are skipped.
pub fn read_trials<R: Read>(reader: R) -> Result<Vec<TrialPair>> {
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = trimmed.split_whitespace().collect();
        let trial = match toks.as_slice() {
            [label, e, t] => {
                let label = Label::from_token(label).ok_or_else(|| Error::Malformed {
                    record: lineno + 1,
                    message: format!("label must be 1 or 0, got {label:?}"),
                })?;
                TrialPair::new(*e, *t, label)
            }
            [e, t] => TrialPair::unlabeled(*e, *t),
            _ => {
                return Err(Error::Malformed {
                    record: lineno + 1,
                    message: format!("expected 2 or 3 fields, got {}", toks.len()),
                })
            }
        };
        out.push(trial);
    }
    Ok(out)
}

/// Writes trials as `label enroll test`, or `enroll test` when every label is
/// unknown.
pub fn write_trials<W: Write>(trials: &[TrialPair], mut w: W) -> Result<()> {
    let labeled = trials.iter().any(|t| t.label != Label::Unknown);
    for (k, t) in trials.iter().enumerate() {
        if labeled {
            if t.label == Label::Unknown {
                return Err(Error::InvalidParam(format!(
                    "trial {} has no label in a labeled list",
                    k + 1
                )));
            }
            writeln!(w, "{} {} {}", t.label.token(), t.enroll_id, t.test_id)?;
        } else {
            writeln!(w, "{} {}", t.enroll_id, t.test_id)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub const SCORE_HEADER: [&str; 4] = ["enroll_id", "test_id", "score", "label"];

/// Parses a score file `enroll_id,test_id,score[,label]`. A leading header
/// row is optional.
pub fn read_scores<R: Read>(reader: R, system: impl Into<String>) -> Result<ScoreSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut trials = Vec::new();
    let mut scores = Vec::new();
    let mut data_row = 0;
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Malformed {
            record: k + 1,
            message: e.to_string(),
        })?;
        if k == 0 && rec.get(0) == Some(SCORE_HEADER[0]) {
            continue;
        }
        data_row += 1;
        let bad = |message: String| Error::Malformed {
            record: data_row,
            message,
        };
        if !(3..=4).contains(&rec.len()) {
            return Err(bad(format!("expected 3 or 4 fields, got {}", rec.len())));
        }
        let score: f64 = rec[2]
            .parse()
            .map_err(|_| bad(format!("cannot parse score {:?}", &rec[2])))?;
        if !score.is_finite() {
            return Err(Error::NonFiniteScore { index: data_row });
        }
        let label = match rec.get(3) {
            None | Some("") => Label::Unknown,
            Some(tok) => Label::from_token(tok)
                .ok_or_else(|| bad(format!("label must be 1 or 0, got {tok:?}")))?,
        };
        trials.push(TrialPair::new(&rec[0], &rec[1], label));
        scores.push(score);
    }
    ScoreSet::new(system, trials, scores)
}

/// Writes a score file with a header row; scores carry 6 significant digits.
/// The label column is present when any trial is labeled.
pub fn write_scores<W: Write>(scores: &ScoreSet, writer: W) -> Result<()> {
    let labeled = scores.trials.iter().any(|t| t.label != Label::Unknown);
    let mut w = csv::Writer::from_writer(writer);
    let cols = if labeled { 4 } else { 3 };
    w.write_record(&SCORE_HEADER[..cols]).map_err(csv_io)?;
    for (t, s) in scores.iter() {
        let s = sig6(s);
        let mut row = vec![t.enroll_id.as_str(), t.test_id.as_str(), s.as_str()];
        if labeled {
            row.push(t.label.token());
        }
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" | "target" => Ok(Self::Target),
            "0" | "nontarget" => Ok(Self::Nontarget),
            "" | "unknown" => Ok(Self::Unknown),
            other => Err(Error::InvalidParam(format!("unknown label {other:?}"))),
        }
    }
}
