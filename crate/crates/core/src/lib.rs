//! Rescoring of embedding-based verification trials with Rocchio query
//! expansion, linear fusion of two scoring systems, and EER / minDCF
//! evaluation.
//!
//! Pipeline:
//!
//! ```text
//! embeddings ─▶ all-pairs cosine ─▶ neighbor rankings ─▶ Rocchio expansion ─▶ trial scores
//!                                                                    │
//!                       external scores (e.g. PLDA) ─▶ fusion ◀──────┘
//!                                                        │
//!                                                        ▼
//!                                              DET / EER / minDCF
//! ```
//!
//! - [`embedding`] loads and validates vectors (CSV, JSONL, binary).
//! - [`scoring`] computes cosine scores, the all-pairs structure and rankings.
//! - [`expansion`] implements query expansion over those rankings.
//! - [`fusion`] combines two score sets.
//! - [`metrics`] evaluates labeled score sets.
//! - [`synth`] generates seeded synthetic cohorts and trial lists.
//! - [`sweep`] runs parameter grids end to end.

pub mod embedding;
pub mod error;
pub mod expansion;
pub mod fusion;
pub mod metrics;
pub mod numfmt;
pub mod scoring;
pub mod sweep;
pub mod synth;

pub use embedding::{
    l2_normalize, load_embeddings, read_embeddings, save_embeddings, validate_entries,
    write_embeddings, Embedding, EmbeddingFormat, EmbeddingSet, Violation,
};
pub use error::{Error, Result};
pub use expansion::{
    bidirectional_qe_score, qe_score_all, qe_score_trial, qe_score_with_cache, rocchio_expand,
    select_feedback_sets, BidiRule, Direction, FeedbackSets, QeParams, RankingCache,
};
pub use fusion::{fuse, normalize_scores, FusionParams, Normalization};
pub use metrics::{
    det_curve, eer, evaluate, min_dcf, DcfParams, DetCurve, DetPoint, EvalReport, EvalResult,
};
pub use scoring::{
    cosine, rank_neighbors, read_scores, read_trials, score_trials, write_scores, write_trials,
    AllPairs, Label, LazyPairs, NeighborRanking, PairScores, ScoreSet, TrialPair,
};
pub use sweep::{run_fusion_sweep, run_qe_sweep, SweepGrid, SweepRow};
pub use synth::{generate, make_trials, CohortSpec};
