//! droidfm: Android malware detection with a factorization machine over
//! long, sparse, one-hot static features.
//!
//! The pipeline mirrors a static-analysis detector: decompiled app bundles
//! are parsed into seven categories of string features ([`extract`]),
//! one-hot encoded against a deterministic vocabulary ([`vocab`]), and
//! scored by a factorization machine whose pairwise feature interactions are
//! inner products of learned latent vectors ([`fm`]). First-order baselines
//! ([`baselines`]), the evaluation protocol ([`eval`]), and a synthetic
//! corpus generator with planted interaction rules ([`corpus`]) round out
//! the toolkit. See the `examples/` directory for one runnable program per
//! capability; the `droidfm` binary exposes the same pipeline as
//! subcommands.

pub mod baselines;
pub mod cli;
pub mod corpus;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod extract;
pub mod fm;
pub mod model_io;
pub mod optim;
pub mod token;
pub mod vocab;

pub use dataset::{Label, LabeledDataset, SparseVector};
pub use error::{Error, Result};
pub use fm::{FmModel, InteractionMask};
pub use optim::TrainConfig;
pub use token::{FeatureCategory, FeatureToken};
pub use vocab::{build_vocabulary, Vocabulary};
