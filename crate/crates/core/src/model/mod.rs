//! Network definition: configuration, parameters, layers, and the forward pass.

mod config;
mod forward;
pub mod layers;
mod weights;

pub use config::{
    activation_plan, ConvTSpec, HeadFusion, ModelConfig, StagePlan, CONFIG_SCHEMA_VERSION,
    SE_BLOCK_SITES,
};
pub use forward::{
    collapse_time, convt_block, convt_block_traced, forward, forward_traced, gru_weights,
    se_weights, standardize_input, BlockTrace, ForwardTrace,
};
pub use weights::{
    init_weights, parameter_specs, validate_weights, zeros_like, InitKind, ParamSpec, WeightStore,
};
