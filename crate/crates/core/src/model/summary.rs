use serde::Serialize;

use crate::layers::Parameterized;
use crate::numcore::Scalar;

use super::network::{AttentionBlock, NetworkModel, ATTENTION_GRID, LAYER_UNITS, PATCH};

/// Parameter count published for the original network, shown for comparison.
pub const PAPER_PARAMETER_COUNT: usize = 92_827;
/// Forward cost published for the original network, in kiloFLOPs.
pub const PAPER_KILOFLOPS: f64 = 791.356;

/// One row of the layer table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LayerSummary {
    pub name: String,
    pub output_shape: [usize; 3],
    pub parameters: usize,
    pub flops: u64,
}

/// Totals for one 44x44 forward pass.
///
/// FLOPs count two per multiply-accumulate in convolutions, dense layers and
/// attention matrix products. Bias adds, activations, pooling, softmax and
/// gating multiplies are not counted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ModelSummary {
    pub variant: String,
    pub parameters: usize,
    pub flops: u64,
    pub layers: Vec<LayerSummary>,
}

fn conv_flops(out_ch: usize, in_ch: usize, k: usize, out_hw: usize) -> u64 {
    2 * (out_ch * in_ch * k * k * out_hw * out_hw) as u64
}

pub fn count_params_flops<T: Scalar>(model: &NetworkModel<T>) -> (usize, u64) {
    let s = summarize(model);
    (s.parameters, s.flops)
}

pub fn summarize<T: Scalar>(model: &NetworkModel<T>) -> ModelSummary {
    let mut layers = Vec::new();
    let mut side = PATCH;
    for (i, conv) in model.convs.iter().enumerate() {
        if i == 2 || i == 4 {
            side /= 2;
        }
        layers.push(LayerSummary {
            name: LAYER_UNITS[i].to_string(),
            output_shape: [conv.out_channels(), side, side],
            parameters: conv.parameter_count(),
            flops: conv_flops(conv.out_channels(), conv.in_channels(), conv.kernel(), side),
        });
    }

    let grid = ATTENTION_GRID;
    let n = grid * grid;
    let (attn_out, attn_flops) = match &model.attention {
        AttentionBlock::Se(b) => {
            let ch = b.se.channels();
            let hidden = ch / model.hyperparams().se_ratio;
            (ch, 2 * (2 * ch * hidden + ch * n) as u64)
        }
        AttentionBlock::SelfAttention(b) => {
            let hp = model.hyperparams();
            let in_ch = b.conv.in_channels();
            let conv = conv_flops(b.conv.out_channels(), in_ch, b.conv.kernel(), grid);
            let projections = (n * in_ch * (2 * hp.key_depth + hp.value_depth) + n * hp.value_depth * hp.value_depth) as u64;
            let dkh = hp.key_depth / hp.heads;
            let dvh = hp.value_depth / hp.heads;
            let per_head = n * n * dkh + n * (4 * grid - 2) * dkh + n * n * dvh;
            (b.out_channels(), conv + 2 * projections + 2 * (hp.heads * per_head) as u64)
        }
    };
    layers.push(LayerSummary {
        name: "attention".into(),
        output_shape: [attn_out, grid, grid],
        parameters: model.attention.parameter_count(),
        flops: attn_flops,
    });

    for (name, layer, side) in [("up1", &model.up1, 2 * grid), ("up2", &model.up2, 4 * grid)] {
        let in_side = side / 2;
        layers.push(LayerSummary {
            name: name.into(),
            output_shape: [layer.out_channels(), side, side],
            parameters: layer.parameter_count(),
            flops: conv_flops(layer.out_channels(), layer.in_channels(), layer.kernel(), in_side),
        });
    }
    let head = &model.head;
    layers.push(LayerSummary {
        name: "head".into(),
        output_shape: [head.out_channels(), PATCH, PATCH],
        parameters: head.parameter_count(),
        flops: conv_flops(head.out_channels(), head.in_channels(), 1, PATCH),
    });

    ModelSummary {
        variant: model.variant().tag().to_string(),
        parameters: layers.iter().map(|l| l.parameters).sum(),
        flops: layers.iter().map(|l| l.flops).sum(),
        layers,
    }
}

impl ModelSummary {
    pub fn table(&self) -> String {
        let mut out = format!("variant {}\n{:<14} {:>16} {:>10} {:>14}\n", self.variant, "layer", "output", "params", "flops");
        for l in &self.layers {
            let shape = format!("{}x{}x{}", l.output_shape[0], l.output_shape[1], l.output_shape[2]);
            out.push_str(&format!("{:<14} {:>16} {:>10} {:>14}\n", l.name, shape, l.parameters, l.flops));
        }
        out.push_str(&format!("{:<14} {:>16} {:>10} {:>14}\n", "total", "", self.parameters, self.flops));
        out.push_str(&format!(
            "reference      {:>16} {:>10} {:>14}\n",
            "(published)", PAPER_PARAMETER_COUNT, format!("{PAPER_KILOFLOPS} kFLOP")
        ));
        out
    }
}
