//! Frequency-aware convolution for spectrogram CNNs.

pub mod accounting;
pub mod checks;
pub mod error;
pub mod experiments;
pub mod freq;
pub mod gradcheck;
pub mod layers;
pub mod model;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use gradcheck::{grad_check, GradCheckReport};
pub use layers::{Layer, Param};
pub use rng::Rng;
pub use tensor::{Shape, Tensor};
