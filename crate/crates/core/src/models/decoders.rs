//! Segmentation decoders over the five encoder stages.
//!
//! All three heads end in a 3x3 convolution with bias producing one logit
//! channel at input resolution; the sigmoid lives with the caller so training
//! can feed logits to the stable BCE.

use super::layers::{ConvBnRelu, ConvLayer};
use super::{Architecture, WidthScale};
use crate::error::{Error, Result};
use crate::nn::{ParameterStore, Scalar, Tape, Var};

pub(crate) enum DecoderGraph {
    Unet(UnetDecoder),
    Fpn(FpnDecoder),
    Linknet(LinknetDecoder),
}

impl DecoderGraph {
    pub fn new(arch: Architecture, stage_channels: &[usize], scale: WidthScale) -> Result<Self> {
        if stage_channels.len() != 5 {
            return Err(Error::Model(format!(
                "segmentation decoders expect a 4-block encoder (5 stages), got {} stages",
                stage_channels.len()
            )));
        }
        Ok(match arch {
            Architecture::Unet => DecoderGraph::Unet(UnetDecoder::new(stage_channels, scale)),
            Architecture::Fpn => DecoderGraph::Fpn(FpnDecoder::new(stage_channels, scale)),
            Architecture::Linknet => DecoderGraph::Linknet(LinknetDecoder::new(stage_channels)),
            Architecture::Classifier => {
                return Err(Error::Model(
                    "classifier is not a segmentation architecture".into(),
                ))
            }
        })
    }

    pub fn init<T: Scalar>(&self, store: &mut ParameterStore<T>, seed: u64) {
        match self {
            DecoderGraph::Unet(d) => d.init(store, seed),
            DecoderGraph::Fpn(d) => d.init(store, seed),
            DecoderGraph::Linknet(d) => d.init(store, seed),
        }
    }

    /// Logits at input resolution, shape (N, 1, H, W).
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, stages: &[Var]) -> Var {
        match self {
            DecoderGraph::Unet(d) => d.forward(tape, stages),
            DecoderGraph::Fpn(d) => d.forward(tape, stages),
            DecoderGraph::Linknet(d) => d.forward(tape, stages),
        }
    }
}

/// Expansive path: upsample, concatenate the matching encoder stage, and run
/// two 3x3 conv+BN+ReLU units. The deepest step consumes stage 5; the last
/// step has no skip (the input itself is not a feature map).
pub(crate) struct UnetDecoder {
    steps: Vec<(ConvBnRelu, ConvBnRelu)>,
    head: ConvLayer,
}

impl UnetDecoder {
    fn widths(scale: WidthScale) -> [usize; 5] {
        match scale {
            WidthScale::Full => [256, 128, 64, 32, 16],
            WidthScale::Tiny => [32, 16, 16, 8, 8],
        }
    }

    fn new(stage_channels: &[usize], scale: WidthScale) -> Self {
        let widths = Self::widths(scale);
        // Skip sources for steps 1..=4 are stages 4,3,2,1; step 5 runs bare.
        let mut steps = Vec::with_capacity(5);
        let mut prev = stage_channels[4];
        for (i, &out) in widths.iter().enumerate() {
            let skip = if i < 4 { stage_channels[3 - i] } else { 0 };
            let prefix = format!("decoder.up{}", i + 1);
            steps.push((
                ConvBnRelu::new(&prefix, "conv1", "bn1", prev + skip, out, 3),
                ConvBnRelu::new(&prefix, "conv2", "bn2", out, out, 3),
            ));
            prev = out;
        }
        let head = ConvLayer::new("head.conv", prev, 1, 3).with_bias();
        Self { steps, head }
    }

    fn init<T: Scalar>(&self, store: &mut ParameterStore<T>, seed: u64) {
        for (a, b) in &self.steps {
            a.init(store, seed);
            b.init(store, seed);
        }
        self.head.init(store, seed);
    }

    fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, stages: &[Var]) -> Var {
        let mut x = stages[4];
        for (i, (a, b)) in self.steps.iter().enumerate() {
            x = tape.upsample2(x);
            if i < 4 {
                x = tape.concat_channels(&[x, stages[3 - i]]);
            }
            x = a.forward(tape, x);
            x = b.forward(tape, x);
        }
        self.head.forward(tape, x)
    }
}

/// Feature pyramid: 1x1 laterals onto stages 2..5, top-down nearest-neighbour
/// merge by addition, per-level segmentation blocks that land every level at
/// stride 4, summed and projected to one channel, then upsampled to stride 1.
pub(crate) struct FpnDecoder {
    laterals: Vec<ConvLayer>,
    seg_blocks: Vec<Vec<ConvBnRelu>>,
    head: ConvLayer,
}

impl FpnDecoder {
    fn widths(scale: WidthScale) -> (usize, usize) {
        match scale {
            WidthScale::Full => (256, 128),
            WidthScale::Tiny => (32, 16),
        }
    }

    fn new(stage_channels: &[usize], scale: WidthScale) -> Self {
        let (pyramid, seg) = Self::widths(scale);
        let laterals = (2..=5)
            .map(|s| {
                ConvLayer::new(
                    format!("decoder.lateral{s}"),
                    stage_channels[s - 1],
                    pyramid,
                    1,
                )
                .with_bias()
            })
            .collect();
        // Stage s sits at stride 2^s; it needs s-2 doublings to reach stride 4.
        let seg_blocks = (2..=5)
            .map(|s| {
                let ups = s - 2;
                let units = ups.max(1);
                (0..units)
                    .map(|u| {
                        let in_ch = if u == 0 { pyramid } else { seg };
                        ConvBnRelu::new(
                            &format!("decoder.seg{s}"),
                            &format!("conv{}", u + 1),
                            &format!("bn{}", u + 1),
                            in_ch,
                            seg,
                            3,
                        )
                    })
                    .collect()
            })
            .collect();
        let head = ConvLayer::new("head.conv", seg, 1, 3).with_bias();
        Self {
            laterals,
            seg_blocks,
            head,
        }
    }

    fn init<T: Scalar>(&self, store: &mut ParameterStore<T>, seed: u64) {
        for l in &self.laterals {
            l.init(store, seed);
        }
        for block in &self.seg_blocks {
            for unit in block {
                unit.init(store, seed);
            }
        }
        self.head.init(store, seed);
    }

    fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, stages: &[Var]) -> Var {
        // Laterals for stages 2..5 (indices 1..4), then top-down accumulation.
        let lats: Vec<Var> = self
            .laterals
            .iter()
            .enumerate()
            .map(|(i, l)| l.forward(tape, stages[i + 1]))
            .collect();
        let mut pyramid = vec![lats[3]];
        for i in (0..3).rev() {
            let up = tape.upsample2(*pyramid.last().unwrap());
            pyramid.push(tape.add(lats[i], up));
        }
        pyramid.reverse(); // now p2, p3, p4, p5

        let mut merged: Option<Var> = None;
        for (level, block) in self.seg_blocks.iter().enumerate() {
            let ups = level; // level 0 is stage 2 at stride 4 already
            let mut x = pyramid[level];
            for (u, unit) in block.iter().enumerate() {
                x = unit.forward(tape, x);
                if ups > 0 && u < ups {
                    x = tape.upsample2(x);
                }
            }
            merged = Some(match merged {
                None => x,
                Some(m) => tape.add(m, x),
            });
        }
        let logits4 = self.head.forward(tape, merged.expect("four pyramid levels"));
        let up = tape.upsample2(logits4);
        tape.upsample2(up)
    }
}

/// Encoder-decoder with additive links: each block bottlenecks to a quarter
/// of its input channels, upsamples, and expands to the next stage's width,
/// which is then added onto that encoder stage.
pub(crate) struct LinknetDecoder {
    blocks: Vec<LinkBlock>,
    head: ConvLayer,
}

struct LinkBlock {
    conv1: ConvBnRelu,
    conv2: ConvBnRelu,
    conv3: ConvBnRelu,
}

impl LinkBlock {
    fn new(prefix: &str, in_ch: usize, out_ch: usize) -> Self {
        let mid = (in_ch / 4).max(1);
        Self {
            conv1: ConvBnRelu::new(prefix, "conv1", "bn1", in_ch, mid, 1),
            conv2: ConvBnRelu::new(prefix, "conv2", "bn2", mid, mid, 3),
            conv3: ConvBnRelu::new(prefix, "conv3", "bn3", mid, out_ch, 1),
        }
    }

    fn init<T: Scalar>(&self, store: &mut ParameterStore<T>, seed: u64) {
        self.conv1.init(store, seed);
        self.conv2.init(store, seed);
        self.conv3.init(store, seed);
    }

    fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Var {
        let h = self.conv1.forward(tape, x);
        let h = tape.upsample2(h);
        let h = self.conv2.forward(tape, h);
        self.conv3.forward(tape, h)
    }
}

impl LinknetDecoder {
    fn new(stage_channels: &[usize]) -> Self {
        // Block n consumes the current map and emits the width of the stage it
        // will be added to; the final block keeps stage-1 width at stride 1.
        let outs = [
            stage_channels[3],
            stage_channels[2],
            stage_channels[1],
            stage_channels[0],
            stage_channels[0],
        ];
        let mut blocks = Vec::with_capacity(5);
        let mut prev = stage_channels[4];
        for (i, &out) in outs.iter().enumerate() {
            blocks.push(LinkBlock::new(
                &format!("decoder.block{}", i + 1),
                prev,
                out,
            ));
            prev = out;
        }
        let head = ConvLayer::new("head.conv", prev, 1, 3).with_bias();
        Self { blocks, head }
    }

    fn init<T: Scalar>(&self, store: &mut ParameterStore<T>, seed: u64) {
        for b in &self.blocks {
            b.init(store, seed);
        }
        self.head.init(store, seed);
    }

    fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, stages: &[Var]) -> Var {
        let mut x = stages[4];
        for (i, block) in self.blocks.iter().enumerate() {
            x = block.forward(tape, x);
            if i < 4 {
                x = tape.add(x, stages[3 - i]);
            }
        }
        self.head.forward(tape, x)
    }
}
