//! Patient-independent epileptic seizure detection from raw EEG.
//!
//! The crate decomposes each EEG window into a seizure-related and a
//! patient-related component with an encoder/decoder pair per branch, feeds
//! the seizure latent to an attention-based binary classifier and the
//! patient latent to a multi-class identity classifier, and trains all
//! branches jointly so the seizure representation sheds inter-patient
//! structure. Everything runs on a self-contained reverse-mode autodiff
//! core in 64-bit floats.
//!
//! Module map:
//! - [`tensor`], [`graph`], [`optim`], [`gradcheck`]: the numeric core.
//! - [`nn`]: SAME-padded convolution, transposed convolution, pooling,
//!   dense layers, dropout and the loss kernels.
//! - [`model`]: the three-branch network and its checkpoint format.
//! - [`trainer`]: initialization and the dual-step training schedule.
//! - [`dataset`]: recordings, windowing, labeling, subject selection,
//!   leave-one-subject-out splits and a synthetic generator.
//! - [`metrics`]: confusion rates, ROC/AUC and attention topographies.

pub mod dataset;
pub mod gradcheck;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod montage;
pub mod nn;
pub mod optim;
pub mod tensor;
pub mod trainer;

pub use dataset::{EegWindow, Recording};
pub use graph::{GradientMap, Graph, NodeId, Primitive};
pub use model::{ModelConfig, ModelParameters};
pub use optim::AdamState;
pub use tensor::{Tensor, TensorError};
pub use trainer::{TrainConfig, TrainLog};
