//! Seeded synthetic speaker populations and trial lists.
//!
//! Random stream: ChaCha8 (`rand_chacha`), seeded with
//! `SeedableRng::seed_from_u64`. ChaCha output is specified independently of
//! platform and word size.
//!
//! - Uniform doubles: `(next_u64 >> 11) * 2^-53`, in `[0, 1)`.
//! - Gaussians: Box-Muller over two uniforms `u1 = 1 - U`, `u2 = U'`, using
//!   `libm` for `ln`, `sqrt`, `cos`, `sin`; both outputs are consumed in
//!   order (cosine branch first).
//! - Bounded integers: Lemire's multiply-shift with rejection.
//!
//! Draw order for [`generate`]: for each speaker, `dimension` draws for the
//! mean, then `dimension` draws per utterance.

use std::collections::{BTreeMap, HashSet};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::embedding::{Embedding, EmbeddingSet};
use crate::error::{Error, Result};
use crate::scoring::{Label, TrialPair};

/// Identifies the pseudo-random construction in output metadata.
pub const GENERATOR: &str =
    "chacha8(seed_from_u64)+box-muller(libm); uniform=(u64>>11)*2^-53; ints=lemire";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub n_speakers: usize,
    pub utts_per_speaker: usize,
    pub dimension: usize,
    /// Standard deviation of speaker means around the origin.
    pub between_std: f64,
    /// Standard deviation of utterance noise around the speaker mean.
    pub within_std: f64,
    pub seed: u64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        Self {
            n_speakers: 40,
            utts_per_speaker: 10,
            dimension: 64,
            between_std: 1.0,
            within_std: 0.5,
            seed: 1,
        }
    }
}

impl CohortSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_speakers == 0 || self.utts_per_speaker == 0 || self.dimension == 0 {
            return Err(Error::InvalidParam(
                "n_speakers, utts_per_speaker and dimension must be positive".into(),
            ));
        }
        for (name, v) in [
            ("between_std", self.between_std),
            ("within_std", self.within_std),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParam(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.n_speakers * self.utts_per_speaker < 2 {
            return Err(Error::InvalidParam(
                "cohort must contain at least two utterances".into(),
            ));
        }
        Ok(())
    }
}

/// Deterministic sampler over a ChaCha8 stream.
pub struct Sampler {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = libm::sqrt(-2.0 * libm::log(u1));
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * libm::sin(theta));
        r * libm::cos(theta)
    }

    /// Uniform integer in `[0, n)`, `n > 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = (self.rng.next_u64() as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    /// Fisher-Yates shuffle of the first `k` positions (the whole slice when
    /// `k >= len`).
    pub fn partial_shuffle<T>(&mut self, items: &mut [T], k: usize) {
        let n = items.len();
        for i in 0..k.min(n.saturating_sub(1)) {
            let j = i + self.below((n - i) as u64) as usize;
            items.swap(i, j);
        }
    }
}

pub fn utterance_id(speaker: usize, utt: usize) -> String {
    format!("spk{speaker}_utt{utt}")
}

pub fn speaker_id(speaker: usize) -> String {
    format!("spk{speaker}")
}

/// Draws a cohort: speaker means ~ N(0, between_std^2 I), utterances ~
/// mean + N(0, within_std^2 I). Ids are `spk{i}_utt{j}`, zero-based.
pub fn generate(spec: &CohortSpec) -> Result<EmbeddingSet> {
    spec.validate()?;
    let mut s = Sampler::new(spec.seed);
    let d = spec.dimension;
    let mut entries = Vec::with_capacity(spec.n_speakers * spec.utts_per_speaker);
    for i in 0..spec.n_speakers {
        let mean: Vec<f64> = (0..d)
            .map(|_| spec.between_std * s.standard_normal())
            .collect();
        for j in 0..spec.utts_per_speaker {
            let vector = mean
                .iter()
                .map(|m| m + spec.within_std * s.standard_normal())
                .collect();
            entries.push(Embedding::new(utterance_id(i, j), vector).with_speaker(speaker_id(i)));
        }
    }
    EmbeddingSet::new(d, entries)
}

fn choose2(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Samples labeled trials without replacement: `n_target` same-speaker pairs
/// and `n_nontarget` cross-speaker pairs, shuffled together. Never emits a
/// self-pair or the same unordered pair twice.
pub fn make_trials(
    set: &EmbeddingSet,
    n_target: usize,
    n_nontarget: usize,
    seed: u64,
) -> Result<Vec<TrialPair>> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for i in 0..set.len() {
        let spk = set.speaker(i).ok_or_else(|| {
            Error::InvalidParam(format!("utterance {:?} has no speaker label", set.id(i)))
        })?;
        groups.entry(spk).or_default().push(i);
    }
    let n = set.len();
    let target_total: usize = groups.values().map(|g| choose2(g.len())).sum();
    let nontarget_total = choose2(n) - target_total;
    if n_target > target_total {
        return Err(Error::NotEnoughPairs {
            kind: "target",
            requested: n_target,
            available: target_total,
        });
    }
    if n_nontarget > nontarget_total {
        return Err(Error::NotEnoughPairs {
            kind: "nontarget",
            requested: n_nontarget,
            available: nontarget_total,
        });
    }

    let mut s = Sampler::new(seed);
    let mut out: Vec<(usize, usize, Label)> = Vec::with_capacity(n_target + n_nontarget);

    let mut same: Vec<(usize, usize)> = Vec::with_capacity(target_total);
    for g in groups.values() {
        for (a, &i) in g.iter().enumerate() {
            for &j in &g[a + 1..] {
                same.push((i, j));
            }
        }
    }
    s.partial_shuffle(&mut same, n_target);
    out.extend(same[..n_target].iter().map(|&(i, j)| (i, j, Label::Target)));

    let spk = |i: usize| set.speaker(i);
    if n_nontarget * 2 <= nontarget_total {
        // Sparse request: rejection sampling over ordered index pairs is
        // uniform over unordered cross-speaker pairs.
        let mut seen = HashSet::with_capacity(n_nontarget);
        while seen.len() < n_nontarget {
            let i = s.below(n as u64) as usize;
            let j = s.below(n as u64) as usize;
            if i == j || spk(i) == spk(j) || !seen.insert((i.min(j), i.max(j))) {
                continue;
            }
            out.push((i, j, Label::Nontarget));
        }
    } else {
        let mut cross = Vec::with_capacity(nontarget_total);
        for i in 0..n {
            for j in i + 1..n {
                if spk(i) != spk(j) {
                    cross.push((i, j));
                }
            }
        }
        s.partial_shuffle(&mut cross, n_nontarget);
        out.extend(
            cross[..n_nontarget]
                .iter()
                .map(|&(i, j)| (i, j, Label::Nontarget)),
        );
    }

    let len = out.len();
    s.partial_shuffle(&mut out, len);
    Ok(out
        .into_iter()
        .map(|(i, j, label)| TrialPair::new(set.id(i), set.id(j), label))
        .collect())
}
