//! Segmentation network, layer summary and checkpoints.

mod checkpoint;
mod network;
mod summary;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, MAGIC, VERSION};
pub use network::{
    class_probability, AttentionBlock, AttentionVariant, ForwardTrace, Hyperparams, NetworkModel, ATTENTION_CHANNELS,
    ATTENTION_GRID, CLASSES, LAYER_UNITS, PATCH, STAGE1_CHANNELS, STAGE_CHANNELS, UP1_CHANNELS, UP2_CHANNELS,
};
pub use summary::{count_params_flops, summarize, LayerSummary, ModelSummary, PAPER_KILOFLOPS, PAPER_PARAMETER_COUNT};
