//! Shapley attribution of the actor's yaw decision.
//!
//! [`exact_shapley`] enumerates coalitions and serves as the oracle;
//! [`deep_attribution`] propagates DeepLIFT multipliers against each point of
//! a background set and averages, which is exact for linear models and
//! complete for every model. Two explained views of the actor exist: the
//! full image stack ([`ActorExplainer`]) and the 48 GRU outputs feeding the
//! second half of a [`SplitModel`] ([`gru_explainer`]).

mod deep;
mod image;
mod shapley;
mod split;
mod trace;

pub use deep::{deep_attribution, ActorExplainer, AttributionFrame, Background, Explainable, SequentialExplainer};
pub use image::shap_image;
pub use shapley::{exact_shapley, spearman, MAX_EXACT_FEATURES};
pub use split::{gru_explainer, gru_layer_shap, GruBackground, SplitModel};
pub use trace::{episode_shap_trace, TraceRow};

/// Output index of the yaw rate in the actor head.
pub const YAW: usize = 1;
