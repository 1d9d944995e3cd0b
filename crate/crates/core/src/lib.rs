//! Preference-calibration pipeline for frozen vision-language models.
//!
//! The crate ingests crowdsourced pairwise comparisons, converts them to
//! continuous per-image ratings, mines named scoring dimensions through a
//! pluggable VLM client, extracts per-dimension score vectors via a
//! three-agent deliberation chain, and calibrates those scores against human
//! labels with locally-weighted ridge regression on a hybrid visual-semantic
//! differential manifold. A search loop optimizes the dimension set
//! end to end.
//!
//! Modules mirror the pipeline stages:
//!
//! * [`dataio`] -- vote-table ingestion, consensus filtering, splits,
//!   embedding sidecar files.
//! * [`ratings`] -- pairwise TrueSkill-style ratings.
//! * [`mining`] -- consensus exemplar sampling, PCA compression, dimension
//!   extraction.
//! * [`scoring`] -- VLM clients (HTTP and mock), the four scoring modes,
//!   the score cache, and cost accounting.
//! * [`calibration`] -- the hybrid differential manifold and locally
//!   weighted ridge regression with statistical re-inference.
//! * [`evaluation`] -- accuracy, Cohen's kappa, macro-F1, and per-dimension
//!   discriminative power.
//! * [`search`] -- the two-phase dimension-set optimization loop.
//!
//! [`pipeline`] orchestrates the stages over in-memory data, [`config`] and
//! [`rundir`] back the CLI, and [`synth`] generates the deterministic
//! fixture worlds used by the mock backend.

pub mod calibration;
pub mod config;
pub mod dataio;
pub mod evaluation;
pub mod linalg;
pub mod mining;
pub mod pipeline;
pub mod prompts;
pub mod ratings;
pub mod rundir;
pub mod scoring;
pub mod search;
pub mod seed;
pub mod synth;
