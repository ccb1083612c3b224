//! Edge sign prediction for signed social networks.
//!
//! Each source node `x` gets its own predictor: a small set of trusted peers,
//! each tagged with a positive or negative influence. The sign of a link
//! `x -> y` is predicted from the peers' own links to `y`:
//!
//! ```text
//! F_x(y) = sum over trusted (z, r) of r * s'(z, y)      S(x, y) = +1 if F >= 0 else -1
//! ```
//!
//! where `s'(z, y)` is the sign of `z -> y` or zero when no such edge exists.
//! Trusted sets are learned per node by minimising an L0-penalised squared
//! loss, which is a QUBO. The full QUBO is split into small subproblems over
//! rank-ordered candidate slices that are solved exactly or by tabu search
//! and merged greedily against a validation set.
//!
//! Modules, bottom up:
//!
//! * [`graph`]: loading, the signed graph, splits and balancing
//! * [`opinion`]: peer sets, scores and gated predictions
//! * [`qubo`]: subproblem construction and the exact/tabu solvers
//! * [`trainer`]: per-slice fitting with a lambda sweep and the greedy merge
//! * [`eval`]: evaluation regimes, threshold counts and a planted-model generator
//! * [`config`] / [`cli`]: experiment manifests and the command front end

pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod graph;
pub mod opinion;
pub mod qubo;
pub mod trainer;

pub use error::{Error, Result};
pub use eval::{EvaluationReport, PlantedModel, PlantedParams, Regime};
pub use graph::{DatasetSplit, EdgeRecord, NodeId, Sign, SignedEdge, SignedGraph};
pub use opinion::{Influence, NodePredictor, OpinionVariant, PeerPolicy, Prediction};
pub use qubo::{Assignment, QuboInstance, TabuParams};
pub use trainer::{FitResult, SolverChoice, TrainConfig};

/// Derives an independent 64-bit seed from a base seed and a stream index
/// (splitmix64 finaliser).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
