//! Attention blocks: squeeze-and-excitation with spatial gating, and
//! attention-augmented convolution with 2D relative self-attention.

mod relative;
mod se;

pub use relative::{
    attention_augmented_conv, multi_head_attention, relative_logits, self_attention_head,
    AttentionCache, AttentionDims, AugmentedAttentionConv, AugmentedCache, RelativeSelfAttention2d,
};
pub use se::{
    apply_channel_gate, apply_spatial_gate, se_excite_apply, se_squeeze, spatial_attention_apply,
    BlockGrads, SeBlock, SeSpatialBlock, SeSpatialCache, SpatialAttention,
};
