//! Densely connected encoder.
//!
//! Stage outputs, shallow to deep, at strides 2/4/8/16/32 relative to the
//! input:
//!   1. stem conv (stride 2) + BN + ReLU
//!   2. max pool + first dense block
//!   3..n. transition (1x1 conv halving channels + 2x2 average pool) + block
//!   last stage additionally passes through a final BN + ReLU.
//!
//! Dense layers are the bottleneck variant: BN-ReLU-1x1 conv to 4x growth,
//! BN-ReLU-3x3 conv to growth channels, concatenated onto their input.

use super::layers::{BnLayer, ConvLayer};
use super::EncoderSpec;
use crate::nn::{ParameterStore, Scalar, Tape, Var};

#[derive(Debug, Clone)]
struct DenseLayer {
    bn1: BnLayer,
    conv1: ConvLayer,
    bn2: BnLayer,
    conv2: ConvLayer,
}

impl DenseLayer {
    fn new(prefix: &str, in_ch: usize, growth: usize) -> Self {
        let mid = 4 * growth;
        Self {
            bn1: BnLayer::new(format!("{prefix}.bn1"), in_ch),
            conv1: ConvLayer::new(format!("{prefix}.conv1"), in_ch, mid, 1),
            bn2: BnLayer::new(format!("{prefix}.bn2"), mid),
            conv2: ConvLayer::new(format!("{prefix}.conv2"), mid, growth, 3),
        }
    }

    fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Var {
        let h = self.bn1.forward(tape, x);
        let h = tape.relu(h);
        let h = self.conv1.forward(tape, h);
        let h = self.bn2.forward(tape, h);
        let h = tape.relu(h);
        let h = self.conv2.forward(tape, h);
        tape.concat_channels(&[x, h])
    }
}

#[derive(Debug, Clone)]
struct Transition {
    bn: BnLayer,
    conv: ConvLayer,
}

impl Transition {
    fn new(prefix: &str, in_ch: usize) -> Self {
        Self {
            bn: BnLayer::new(format!("{prefix}.bn"), in_ch),
            conv: ConvLayer::new(format!("{prefix}.conv"), in_ch, in_ch / 2, 1),
        }
    }

    fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Var {
        let h = self.bn.forward(tape, x);
        let h = tape.relu(h);
        let h = self.conv.forward(tape, h);
        tape.avg_pool(h, 2)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct EncoderGraph {
    stem_conv: ConvLayer,
    stem_bn: BnLayer,
    blocks: Vec<Vec<DenseLayer>>,
    transitions: Vec<Transition>,
    final_bn: BnLayer,
    /// Output channels of each emitted stage, shallow to deep.
    pub stage_channels: Vec<usize>,
}

impl EncoderGraph {
    pub fn new(spec: &EncoderSpec) -> Self {
        let stem_ch = spec.stem_channels();
        let stem_k = spec.stem_kernel();
        let stem_conv =
            ConvLayer::new("encoder.stem.conv", spec.input_channels, stem_ch, stem_k).stride(2);
        let stem_bn = BnLayer::new("encoder.stem.bn", stem_ch);

        let mut blocks = Vec::new();
        let mut transitions = Vec::new();
        let mut stage_channels = vec![stem_ch];
        let mut ch = stem_ch;
        for (bi, &depth) in spec.block_layout.iter().enumerate() {
            if bi > 0 {
                transitions.push(Transition::new(&format!("encoder.transition{bi}"), ch));
                ch /= 2;
            }
            let mut layers = Vec::with_capacity(depth);
            for li in 0..depth {
                layers.push(DenseLayer::new(
                    &format!("encoder.block{}.layer{}", bi + 1, li + 1),
                    ch,
                    spec.growth_rate,
                ));
                ch += spec.growth_rate;
            }
            blocks.push(layers);
            stage_channels.push(ch);
        }
        let final_bn = BnLayer::new("encoder.final_bn", ch);
        Self {
            stem_conv,
            stem_bn,
            blocks,
            transitions,
            final_bn,
            stage_channels,
        }
    }

    pub fn init<T: Scalar>(&self, store: &mut ParameterStore<T>, seed: u64) {
        self.stem_conv.init(store, seed);
        self.stem_bn.init(store, seed);
        for block in &self.blocks {
            for layer in block {
                layer.bn1.init(store, seed);
                layer.conv1.init(store, seed);
                layer.bn2.init(store, seed);
                layer.conv2.init(store, seed);
            }
        }
        for t in &self.transitions {
            t.bn.init(store, seed);
            t.conv.init(store, seed);
        }
        self.final_bn.init(store, seed);
    }

    /// Returns one Var per stage, shallow to deep.
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Vec<Var> {
        let mut stages = Vec::with_capacity(self.stage_channels.len());
        let s = self.stem_conv.forward(tape, x);
        let s = self.stem_bn.forward(tape, s);
        let stage1 = tape.relu(s);
        stages.push(stage1);

        let mut h = tape.max_pool(stage1, 3, 2, 1);
        let last = self.blocks.len() - 1;
        for (bi, block) in self.blocks.iter().enumerate() {
            if bi > 0 {
                h = self.transitions[bi - 1].forward(tape, h);
            }
            for layer in block {
                h = layer.forward(tape, h);
            }
            if bi == last {
                let b = self.final_bn.forward(tape, h);
                h = tape.relu(b);
            }
            stages.push(h);
        }
        stages
    }
}
