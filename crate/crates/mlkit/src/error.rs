// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MlError {
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("singular system while fitting {0}")]
    Singular(&'static str),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("no two-mode structure: {0}")]
    SingleMode(String),
    #[error("every stacking member failed: {0}")]
    NoMembers(String),
    #[error("model container: {0}")]
    Container(String),
}

pub type Result<T> = std::result::Result<T, MlError>;
