//! Identity-aware sports video captioning at desk scale.
//!
//! The crate covers the full pipeline: a small reverse-mode autodiff engine
//! and attention blocks ([`graph`], [`nn`]), the player identification and
//! bidirectional interaction stages ([`identity`]), learnable context
//! queries ([`vclm`]), multimodal prompt assembly and decoding
//! ([`captioner`]), the caption metric suite ([`metrics`]) and the data
//! layer ([`data`]). [`model`] and [`train`] tie them together.

pub mod captioner;
pub mod config;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod identity;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod params;
pub mod tensor;
pub mod train;
pub mod vclm;

pub use config::HyperConfig;
pub use error::{Error, Result};
pub use graph::{Graph, Mode, Var};
pub use model::{run_ablation_variant, AblationFlags, BsimOutputSel, IavcModel};
pub use params::ParameterStore;
pub use tensor::Tensor;
