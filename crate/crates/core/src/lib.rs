//! Small-data training toolkit.
//!
//! Implements a desk-scale CNN with reverse-mode autodiff, one-cycle and
//! plateau-decay learning-rate policies, an LR range test, three-group
//! discriminative learning rates with gradual unfreezing, the classic
//! transfer-learning modes, GLCM radiomics with penalized logistic regression
//! and random-forest baselines, and a learning-curve benchmark harness scored
//! by ROC AUC and paired t-tests.

pub mod augment;
pub mod baseline;
pub mod bench;
pub mod error;
pub mod metrics;
pub mod ndtensor;
pub mod radiomics;
pub mod sched;
pub mod tinycnn;
pub mod trainer;

pub use error::{Error, Result};
