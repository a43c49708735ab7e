//! The memory-network model: forward pass, exact analytic gradients,
//! parameter storage with weight tying, and the model-family variants.

pub mod backward;
pub mod config;
pub mod forward;
pub mod gradcheck;
pub mod params;

pub use backward::backward;
pub use config::{ModelConfig, Variant};
pub use forward::{forward, moving_average_renorm, predict_heads, prior_attention, ForwardTrace};
pub use forward::{TD_ABSENT, TD_PRESENT};
pub use gradcheck::{gradient_check, FamilyCheck, GradCheckReport};
pub use params::{build_model, init_params, GradientSet, Model, ParamStore};
