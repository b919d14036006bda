//! Rocchio query expansion over baseline neighbor rankings.
//!
//! For an utterance `q` with ranking `r`, the `top_n` best neighbors form the
//! relevant set `D_r` and every other non-self utterance forms `D_n`. The
//! expanded query is
//!
//! ```text
//! q~ = alpha * q + (beta / |D_r|) * sum(D_r) - (gamma / |D_n|) * sum(D_n)
//! ```
//!
//! where an empty set contributes the zero vector. Trials are rescored with the
//! cosine between the expanded enrollment vector and the test vector
//! (one-sided), or symmetrically over both sides (bidirectional).
//!
//! Rankings always come from baseline scores; expansion is a single pass.

use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::{
    cosine, resolve_trials, top_neighbors, Neighbor, NeighborRanking, PairScores, ScoreSet,
    TrialPair,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    OneSided,
    Bidirectional,
}

/// How the two directions of a bidirectional trial are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BidiRule {
    /// Mean of the enroll-expanded and test-expanded one-sided scores.
    #[default]
    MeanOfDirections,
    /// Cosine between the two expanded vectors.
    ExpandedVsExpanded,
}

impl FromStr for BidiRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean_of_directions" | "mean" => Ok(Self::MeanOfDirections),
            "expanded_vs_expanded" | "expanded" => Ok(Self::ExpandedVsExpanded),
            other => Err(Error::InvalidParam(format!(
                "unknown bidirectional rule {other:?} (expected mean_of_directions or expanded_vs_expanded)"
            ))),
        }
    }
}

impl fmt::Display for BidiRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::MeanOfDirections => "mean_of_directions",
            Self::ExpandedVsExpanded => "expanded_vs_expanded",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QeParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub top_n: usize,
    pub direction: Direction,
    pub bidi_rule: BidiRule,
    /// Drop the other side of the trial from each utterance's ranking before
    /// selecting feedback sets.
    pub exclude_trial_partner: bool,
}

impl Default for QeParams {
    fn default() -> Self {
        Self::identity()
    }
}

impl QeParams {
    /// `alpha = 1, beta = 0, gamma = 0`: scores equal the baseline.
    pub fn identity() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.0,
            gamma: 0.0,
            top_n: 0,
            direction: Direction::OneSided,
            bidi_rule: BidiRule::MeanOfDirections,
            exclude_trial_partner: false,
        }
    }

    pub fn new(alpha: f64, beta: f64, gamma: f64, top_n: usize) -> Self {
        Self {
            alpha,
            beta,
            gamma,
            top_n,
            ..Self::identity()
        }
    }

    pub fn bidirectional(mut self, rule: BidiRule) -> Self {
        self.direction = Direction::Bidirectional;
        self.bidi_rule = rule;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
        ] {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidParam(format!(
                    "{name} must be finite and >= 0, got {w}"
                )));
            }
        }
        Ok(())
    }

    /// System label recorded in emitted score sets.
    pub fn system_label(&self) -> String {
        let mut s = format!(
            "qe(alpha={},beta={},gamma={},top_n={}",
            self.alpha, self.beta, self.gamma, self.top_n
        );
        if self.direction == Direction::Bidirectional {
            s.push_str(&format!(",bidirectional={}", self.bidi_rule));
        }
        if self.exclude_trial_partner {
            s.push_str(",exclude_trial_partner");
        }
        s.push(')');
        s
    }

    /// Ranking depth needed to serve these parameters.
    pub fn ranking_depth(&self) -> usize {
        self.top_n + usize::from(self.exclude_trial_partner)
    }
}

/// Pseudo-relevant (`D_r`) and pseudo-non-relevant (`D_n`) utterances.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackSets {
    pub relevant: Vec<String>,
    pub nonrelevant: Vec<String>,
}

/// Splits a ranking after its first `top_n` entries.
pub fn select_feedback_sets(ranking: &NeighborRanking, top_n: usize) -> Result<FeedbackSets> {
    if top_n > ranking.len() {
        return Err(Error::TopNOutOfRange {
            top_n,
            available: ranking.len(),
        });
    }
    let ids = ranking.neighbors.iter().map(|(id, _)| id.clone());
    Ok(FeedbackSets {
        relevant: ids.clone().take(top_n).collect(),
        nonrelevant: ids.skip(top_n).collect(),
    })
}

fn sum_vectors<'a>(dim: usize, vs: impl IntoIterator<Item = &'a [f64]>) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; dim];
    for v in vs {
        if v.len() != dim {
            return Err(Error::VectorDimension {
                left: dim,
                right: v.len(),
            });
        }
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
    }
    Ok(acc)
}

/// Term sums of one expansion; `None` marks an empty feedback set.
struct Feedback<'a> {
    relevant: Option<(Cow<'a, [f64]>, usize)>,
    nonrelevant: Option<(Cow<'a, [f64]>, usize)>,
}

fn combine(query: &[f64], fb: &Feedback<'_>, params: &QeParams) -> Result<Vec<f64>> {
    let mut out: Vec<f64> = query.iter().map(|x| params.alpha * x).collect();
    if params.beta != 0.0 {
        if let Some((sum, n)) = &fb.relevant {
            let c = params.beta / *n as f64;
            for (o, s) in out.iter_mut().zip(sum.iter()) {
                *o += c * s;
            }
        }
    }
    if params.gamma != 0.0 {
        if let Some((sum, n)) = &fb.nonrelevant {
            let c = params.gamma / *n as f64;
            for (o, s) in out.iter_mut().zip(sum.iter()) {
                *o -= c * s;
            }
        }
    }
    if out.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteExpansion);
    }
    Ok(out)
}

/// Applies the Rocchio update to `query` given explicit feedback vectors.
pub fn rocchio_expand(
    query: &[f64],
    relevant: &[&[f64]],
    nonrelevant: &[&[f64]],
    params: &QeParams,
) -> Result<Vec<f64>> {
    params.validate()?;
    let d = query.len();
    let relevant = if relevant.is_empty() {
        None
    } else {
        Some((
            Cow::Owned(sum_vectors(d, relevant.iter().copied())?),
            relevant.len(),
        ))
    };
    let nonrelevant = if nonrelevant.is_empty() {
        None
    } else {
        Some((
            Cow::Owned(sum_vectors(d, nonrelevant.iter().copied())?),
            nonrelevant.len(),
        ))
    };
    combine(
        query,
        &Feedback {
            relevant,
            nonrelevant,
        },
        params,
    )
}

/// Baseline ranking prefixes for the utterances a trial list touches, plus
/// the sum of all vectors (so `sum(D_n)` is a subtraction, not an O(N) scan).
pub struct RankingCache<'p, P: PairScores + ?Sized> {
    pairs: &'p P,
    depth: usize,
    prefixes: Vec<Option<Vec<Neighbor>>>,
    total: Vec<f64>,
}

impl<'p, P: PairScores + ?Sized> RankingCache<'p, P> {
    /// Precomputes rankings of length `depth` for `queries` (in parallel).
    /// Other utterances are ranked on demand.
    pub fn build(pairs: &'p P, queries: impl IntoIterator<Item = usize>, depth: usize) -> Self {
        let set = pairs.set();
        let n = set.len();
        let mut wanted = vec![false; n];
        for q in queries {
            wanted[q] = true;
        }
        let prefixes: Vec<Option<Vec<Neighbor>>> = (0..n)
            .into_par_iter()
            .map(|q| wanted[q].then(|| top_neighbors(pairs, q, depth, None)))
            .collect();
        let total = sum_vectors(set.dimension(), (0..n).map(|i| set.vector(i)))
            .expect("set vectors share the set dimension");
        Self {
            pairs,
            depth,
            prefixes,
            total,
        }
    }

    /// Cache covering every utterance in `trials` at the depth `params` needs.
    pub fn for_trials(pairs: &'p P, trials: &[TrialPair], params: &QeParams) -> Result<Self> {
        let idx = resolve_trials(pairs.set(), trials)?;
        Ok(Self::build(
            pairs,
            idx.iter().flat_map(|&(e, t)| [e, t]),
            params.ranking_depth(),
        ))
    }

    pub fn pairs(&self) -> &'p P {
        self.pairs
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    fn prefix(&self, q: usize, depth: usize) -> Cow<'_, [Neighbor]> {
        match &self.prefixes[q] {
            Some(p) if depth <= self.depth => Cow::Borrowed(p.as_slice()),
            _ => Cow::Owned(top_neighbors(self.pairs, q, depth, None)),
        }
    }

    /// Expands utterance `q`. `partner` is the other side of the trial, only
    /// consulted when `params.exclude_trial_partner` is set.
    pub fn expand(&self, q: usize, partner: usize, params: &QeParams) -> Result<Vec<f64>> {
        params.validate()?;
        let set = self.pairs.set();
        let n = set.len();
        let excluded = (params.exclude_trial_partner && partner != q).then_some(partner);
        let available = n - 1 - usize::from(excluded.is_some());
        if params.top_n > available {
            return Err(Error::TopNOutOfRange {
                top_n: params.top_n,
                available,
            });
        }
        let depth = params.top_n + usize::from(excluded.is_some());
        let prefix = self.prefix(q, depth);
        let relevant: Vec<usize> = prefix
            .iter()
            .map(|nb| nb.index as usize)
            .filter(|&j| Some(j) != excluded)
            .take(params.top_n)
            .collect();
        debug_assert_eq!(relevant.len(), params.top_n);

        let d = set.dimension();
        let query = set.vector(q);
        let rel_sum = if relevant.is_empty() || params.beta == 0.0 && params.gamma == 0.0 {
            None
        } else {
            Some(sum_vectors(d, relevant.iter().map(|&j| set.vector(j)))?)
        };
        let n_nonrel = available - relevant.len();
        let nonrelevant = if n_nonrel > 0 && params.gamma != 0.0 {
            let mut s = self.total.clone();
            let mut sub = |v: &[f64]| s.iter_mut().zip(v).for_each(|(a, x)| *a -= x);
            sub(query);
            if let Some(p) = excluded {
                sub(set.vector(p));
            }
            if let Some(r) = &rel_sum {
                sub(r);
            }
            Some((Cow::Owned(s), n_nonrel))
        } else {
            None
        };
        let fb = Feedback {
            relevant: rel_sum.map(|s| (Cow::Owned(s), relevant.len())),
            nonrelevant,
        };
        let out = combine(query, &fb, params)?;
        if out.iter().all(|&x| x == 0.0) {
            return Err(Error::DegenerateExpansion {
                id: set.id(q).to_string(),
            });
        }
        Ok(out)
    }

    fn resolve(&self, trial: &TrialPair) -> Result<(usize, usize)> {
        Ok(resolve_trials(self.pairs.set(), std::slice::from_ref(trial))?[0])
    }
}

/// Expands the enrollment side and scores it against the raw test vector.
pub fn qe_score_trial<P: PairScores + ?Sized>(
    cache: &RankingCache<'_, P>,
    trial: &TrialPair,
    params: &QeParams,
) -> Result<f64> {
    let (e, t) = cache.resolve(trial)?;
    one_sided(cache, e, t, params)
}

fn one_sided<P: PairScores + ?Sized>(
    cache: &RankingCache<'_, P>,
    e: usize,
    t: usize,
    params: &QeParams,
) -> Result<f64> {
    let q = cache.expand(e, t, params)?;
    cosine(&q, cache.pairs.set().vector(t))
}

/// Applies expansion to both sides of the trial and combines them with
/// `params.bidi_rule`.
pub fn bidirectional_qe_score<P: PairScores + ?Sized>(
    cache: &RankingCache<'_, P>,
    trial: &TrialPair,
    params: &QeParams,
) -> Result<f64> {
    let (e, t) = cache.resolve(trial)?;
    bidirectional(cache, e, t, params)
}

fn bidirectional<P: PairScores + ?Sized>(
    cache: &RankingCache<'_, P>,
    e: usize,
    t: usize,
    params: &QeParams,
) -> Result<f64> {
    match params.bidi_rule {
        BidiRule::MeanOfDirections => {
            let forward = one_sided(cache, e, t, params)?;
            let backward = one_sided(cache, t, e, params)?;
            Ok((forward + backward) / 2.0)
        }
        BidiRule::ExpandedVsExpanded => {
            let qe = cache.expand(e, t, params)?;
            let qt = cache.expand(t, e, params)?;
            cosine(&qe, &qt)
        }
    }
}

/// Rescores every trial with one cached set of baseline rankings.
pub fn qe_score_with_cache<P: PairScores + ?Sized>(
    cache: &RankingCache<'_, P>,
    trials: &[TrialPair],
    params: &QeParams,
) -> Result<ScoreSet> {
    params.validate()?;
    let idx = resolve_trials(cache.pairs.set(), trials)?;
    let scores = idx
        .par_iter()
        .map(|&(e, t)| match params.direction {
            Direction::OneSided => one_sided(cache, e, t, params),
            Direction::Bidirectional => bidirectional(cache, e, t, params),
        })
        .collect::<Result<Vec<f64>>>()?;
    ScoreSet::new(params.system_label(), trials.to_vec(), scores)
}

/// Builds the ranking cache for `trials` and rescores them.
pub fn qe_score_all<P: PairScores + ?Sized>(
    pairs: &P,
    trials: &[TrialPair],
    params: &QeParams,
) -> Result<ScoreSet> {
    params.validate()?;
    let cache = RankingCache::for_trials(pairs, trials, params)?;
    qe_score_with_cache(&cache, trials, params)
}
