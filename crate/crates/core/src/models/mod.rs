//! Network architectures: a DenseNet-style encoder, a classification head
//! used for cluster pre-training, and three segmentation heads (U-Net, FPN,
//! LinkNet) that all consume the same five encoder stages.
//!
//! Every parameter has a dotted name; encoder parameters live under the
//! `encoder.` prefix in both the classifier and the segmenters, which is what
//! makes [`transfer_encoder`] a plain keyed copy.

mod checkpoint;
mod decoders;
mod encoder;
mod layers;

pub use checkpoint::{load_checkpoint, save_checkpoint, spec_fingerprint, Checkpoint, Provenance};

use ndarray::{Array2, Array4, ArrayD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Mode, ParameterStore, Scalar, Tape, Var};
use decoders::DecoderGraph;
use encoder::EncoderGraph;

/// Downsampling stages an encoder emits; input extents must divide this.
pub const ENCODER_STRIDE: usize = 32;

/// Encoder size preset. `Full` mirrors the canonical 121-layer configuration;
/// `Tiny` keeps the same topology at a fraction of the width and depth so CPU
/// training finishes in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WidthScale {
    Full,
    Tiny,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub growth_rate: usize,
    pub block_layout: Vec<usize>,
    pub input_channels: usize,
    /// Number of dense stages; always equals `block_layout.len()`. The
    /// encoder additionally emits the stem feature map, so forward passes
    /// produce `stage_count + 1` maps.
    pub stage_count: usize,
    pub width_scale: WidthScale,
}

impl EncoderSpec {
    pub fn new(
        growth_rate: usize,
        block_layout: Vec<usize>,
        input_channels: usize,
        width_scale: WidthScale,
    ) -> Result<Self> {
        if block_layout.is_empty() {
            return Err(Error::Model("block layout must not be empty".into()));
        }
        if block_layout.iter().any(|&d| d == 0) {
            return Err(Error::Model("dense block depths must be positive".into()));
        }
        if growth_rate == 0 || input_channels == 0 {
            return Err(Error::Model(
                "growth rate and input channels must be positive".into(),
            ));
        }
        Ok(Self {
            stage_count: block_layout.len(),
            growth_rate,
            block_layout,
            input_channels,
            width_scale,
        })
    }

    /// The 121-layer configuration: growth 32, blocks (6, 12, 24, 16).
    pub fn full(input_channels: usize) -> Self {
        Self::new(32, vec![6, 12, 24, 16], input_channels, WidthScale::Full)
            .expect("preset is valid")
    }

    /// Desk-scale preset: growth 8, blocks (2, 2, 2, 2), 3x3 stem.
    pub fn tiny(input_channels: usize) -> Self {
        Self::new(8, vec![2, 2, 2, 2], input_channels, WidthScale::Tiny)
            .expect("preset is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.stage_count != self.block_layout.len() {
            return Err(Error::Model(format!(
                "stage_count {} does not match block layout length {}",
                self.stage_count,
                self.block_layout.len()
            )));
        }
        let _ = Self::new(
            self.growth_rate,
            self.block_layout.clone(),
            self.input_channels,
            self.width_scale,
        )?;
        Ok(())
    }

    /// Stem width; twice the growth rate, as in the reference configuration.
    pub fn stem_channels(&self) -> usize {
        2 * self.growth_rate
    }

    /// Stem kernel extent: 7 for the full preset, 3 for tiny.
    pub fn stem_kernel(&self) -> usize {
        match self.width_scale {
            WidthScale::Full => 7,
            WidthScale::Tiny => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Fpn,
    Linknet,
    Unet,
    Classifier,
}

impl Architecture {
    pub const SEGMENTATION: [Architecture; 3] =
        [Architecture::Fpn, Architecture::Linknet, Architecture::Unet];

    pub fn as_str(&self) -> &'static str {
        match self {
            Architecture::Fpn => "fpn",
            Architecture::Linknet => "linknet",
            Architecture::Unet => "unet",
            Architecture::Classifier => "classifier",
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fpn" => Ok(Architecture::Fpn),
            "linknet" => Ok(Architecture::Linknet),
            "unet" => Ok(Architecture::Unet),
            "classifier" => Ok(Architecture::Classifier),
            other => Err(Error::Model(format!("unknown architecture `{other}`"))),
        }
    }
}

/// Training regime: `Standard` starts the encoder from random init,
/// `Proposed` transfers a cluster-pretrained encoder first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Framework {
    Standard,
    Proposed,
}

impl Framework {
    pub fn as_str(&self) -> &'static str {
        match self {
            Framework::Standard => "standard",
            Framework::Proposed => "proposed",
        }
    }
}

impl std::fmt::Display for Framework {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Framework {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Framework::Standard),
            "proposed" => Ok(Framework::Proposed),
            other => Err(Error::Model(format!("unknown framework `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub architecture: Architecture,
    pub encoder: EncoderSpec,
    /// 1 for segmentation, the class count for the pre-training classifier.
    pub output_classes: usize,
}

impl ModelSpec {
    pub fn segmentation(architecture: Architecture, encoder: EncoderSpec) -> Result<Self> {
        if architecture == Architecture::Classifier {
            return Err(Error::Model(
                "segmentation spec cannot use the classifier architecture".into(),
            ));
        }
        Ok(Self {
            architecture,
            encoder,
            output_classes: 1,
        })
    }

    pub fn classifier(encoder: EncoderSpec, num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Model(format!(
                "classifier needs at least 2 classes, got {num_classes}"
            )));
        }
        Ok(Self {
            architecture: Architecture::Classifier,
            encoder,
            output_classes: num_classes,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        match self.architecture {
            Architecture::Classifier if self.output_classes < 2 => Err(Error::Model(
                "classifier needs at least 2 classes".into(),
            )),
            Architecture::Classifier => Ok(()),
            _ if self.output_classes != 1 => Err(Error::Model(
                "segmentation outputs exactly one channel".into(),
            )),
            _ => Ok(()),
        }
    }
}

pub(crate) enum Head {
    Seg(DecoderGraph),
    Cls { linear: layers::LinearLayer },
}

/// A buildable, runnable network: spec, parameters, and the wiring graph.
pub struct Network<T: Scalar> {
    pub spec: ModelSpec,
    pub store: ParameterStore<T>,
    encoder: EncoderGraph,
    head: Head,
}

impl<T: Scalar> Network<T> {
    /// Build any architecture named by the spec with seeded initialization.
    pub fn build(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let encoder = EncoderGraph::new(&spec.encoder);
        let head = match spec.architecture {
            Architecture::Classifier => Head::Cls {
                linear: layers::LinearLayer {
                    name: "head.linear".into(),
                    in_features: *encoder.stage_channels.last().unwrap(),
                    out_features: spec.output_classes,
                },
            },
            arch => Head::Seg(DecoderGraph::new(
                arch,
                &encoder.stage_channels,
                spec.encoder.width_scale,
            )?),
        };
        let mut store = ParameterStore::new();
        encoder.init(&mut store, seed);
        match &head {
            Head::Cls { linear } => linear.init(&mut store, seed),
            Head::Seg(d) => d.init(&mut store, seed),
        }
        Ok(Self {
            spec,
            store,
            encoder,
            head,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.store.element_count()
    }

    /// Per-stage encoder output channels, shallow to deep.
    pub fn stage_channels(&self) -> &[usize] {
        &self.encoder.stage_channels
    }

    fn check_input(&self, x: &Array4<T>) -> Result<()> {
        let (_, c, h, w) = x.dim();
        if c != self.spec.encoder.input_channels {
            return Err(Error::Model(format!(
                "input has {c} channels, spec expects {}",
                self.spec.encoder.input_channels
            )));
        }
        if h % ENCODER_STRIDE != 0 || w % ENCODER_STRIDE != 0 {
            return Err(Error::Model(format!(
                "input extent {h}x{w} must be divisible by {ENCODER_STRIDE}"
            )));
        }
        Ok(())
    }

    /// Run the encoder alone and return the five stage outputs.
    pub fn encoder_features(&mut self, x: &Array4<T>, mode: Mode) -> Result<Vec<ArrayD<T>>> {
        self.check_input(x)?;
        let Network { store, encoder, .. } = self;
        let mut tape = Tape::new(store, mode);
        let xv = tape.input4(x.clone());
        let stages = encoder.forward(&mut tape, xv);
        Ok(stages
            .iter()
            .map(|&s| tape.value4(s).clone().into_dyn())
            .collect())
    }

    fn forward_logits(tape: &mut Tape<'_, T>, encoder: &EncoderGraph, head: &Head, x: Var) -> Var {
        let stages = encoder.forward(tape, x);
        match head {
            Head::Seg(d) => d.forward(tape, &stages),
            Head::Cls { linear } => {
                let pooled = tape.global_avg_pool(*stages.last().unwrap());
                linear.forward(tape, pooled)
            }
        }
    }

    /// Segmentation probabilities in [0,1], shape (N, 1, H, W). Eval mode.
    pub fn predict_seg(&mut self, x: &Array4<T>) -> Result<Array4<T>> {
        self.check_input(x)?;
        match self.head {
            Head::Seg(_) => {}
            Head::Cls { .. } => {
                return Err(Error::Model(
                    "classifier network cannot produce segmentation maps".into(),
                ))
            }
        }
        let Network {
            store,
            encoder,
            head,
            ..
        } = self;
        let mut tape = Tape::new(store, Mode::Eval);
        let xv = tape.input4(x.clone());
        let logits = Self::forward_logits(&mut tape, encoder, head, xv);
        let probs = tape.sigmoid(logits);
        Ok(tape.value4(probs).clone())
    }

    /// Class probabilities (softmax over logits), shape (N, K). Eval mode.
    pub fn predict_cls(&mut self, x: &Array4<T>) -> Result<Array2<T>> {
        self.check_input(x)?;
        match self.head {
            Head::Cls { .. } => {}
            Head::Seg(_) => {
                return Err(Error::Model(
                    "segmentation network cannot produce class probabilities".into(),
                ))
            }
        }
        let Network {
            store,
            encoder,
            head,
            ..
        } = self;
        let mut tape = Tape::new(store, Mode::Eval);
        let xv = tape.input4(x.clone());
        let logits = Self::forward_logits(&mut tape, encoder, head, xv);
        let z = tape.value2(logits);
        let mut probs = Array2::zeros(z.dim());
        for (mut orow, zrow) in probs.outer_iter_mut().zip(z.outer_iter()) {
            let max = zrow.iter().copied().fold(T::neg_infinity(), T::max);
            let mut denom = T::zero();
            for &v in zrow.iter() {
                denom = denom + (v - max).exp();
            }
            for (o, &v) in orow.iter_mut().zip(zrow.iter()) {
                *o = (v - max).exp() / denom;
            }
        }
        Ok(probs)
    }

    /// One supervised segmentation pass: mean pixel BCE, gradients, and the
    /// raw logits (for metrics without a second forward).
    pub fn seg_loss_and_grads(
        &mut self,
        x: &Array4<T>,
        target: &Array4<T>,
        mode: Mode,
    ) -> Result<(T, std::collections::BTreeMap<String, ArrayD<T>>, Array4<T>)> {
        self.check_input(x)?;
        let Network {
            store,
            encoder,
            head,
            ..
        } = self;
        let mut tape = Tape::new(store, mode);
        let xv = tape.input4(x.clone());
        let logits = Self::forward_logits(&mut tape, encoder, head, xv);
        let loss = tape.bce_with_logits(logits, target.clone());
        let z = tape.value4(logits).clone();
        let grads = tape.backward(loss);
        Ok((tape.scalar(loss), grads, z))
    }

    /// One supervised classification pass: mean CE, gradients, logits.
    pub fn cls_loss_and_grads(
        &mut self,
        x: &Array4<T>,
        labels: &[usize],
        mode: Mode,
    ) -> Result<(T, std::collections::BTreeMap<String, ArrayD<T>>, Array2<T>)> {
        self.check_input(x)?;
        let Network {
            store,
            encoder,
            head,
            ..
        } = self;
        let mut tape = Tape::new(store, mode);
        let xv = tape.input4(x.clone());
        let logits = Self::forward_logits(&mut tape, encoder, head, xv);
        let loss = tape.softmax_cross_entropy(logits, labels);
        let z = tape.value2(logits).clone();
        let grads = tape.backward(loss);
        Ok((tape.scalar(loss), grads, z))
    }
}

/// Copy every `encoder.`-prefixed tensor from `source` into `target`,
/// bit for bit, running statistics included. Decoder and head parameters are
/// left untouched. Any key-set or shape difference is an error naming the
/// first offending key in sorted order.
pub fn transfer_encoder<T: Scalar>(
    source: &ParameterStore<T>,
    target: &mut Network<T>,
) -> Result<()> {
    const PREFIX: &str = "encoder.";
    let src: Vec<&String> = source.keys_with_prefix(PREFIX).collect();
    let tgt: Vec<&String> = target.store.keys_with_prefix(PREFIX).collect();

    let mut si = src.iter().peekable();
    let mut ti = tgt.iter().peekable();
    loop {
        match (si.peek(), ti.peek()) {
            (None, None) => break,
            (Some(s), None) => {
                return Err(Error::Transfer {
                    key: s.to_string(),
                    reason: "present in source but missing in target".into(),
                })
            }
            (None, Some(t)) => {
                return Err(Error::Transfer {
                    key: t.to_string(),
                    reason: "present in target but missing in source".into(),
                })
            }
            (Some(s), Some(t)) => {
                use std::cmp::Ordering;
                match s.cmp(t) {
                    Ordering::Less => {
                        return Err(Error::Transfer {
                            key: s.to_string(),
                            reason: "present in source but missing in target".into(),
                        })
                    }
                    Ordering::Greater => {
                        return Err(Error::Transfer {
                            key: t.to_string(),
                            reason: "present in target but missing in source".into(),
                        })
                    }
                    Ordering::Equal => {
                        let sp = source.get(s);
                        let tp = target.store.get(t);
                        if sp.data.shape() != tp.data.shape() {
                            return Err(Error::Transfer {
                                key: s.to_string(),
                                reason: format!(
                                    "shape mismatch: source {:?}, target {:?}",
                                    sp.data.shape(),
                                    tp.data.shape()
                                ),
                            });
                        }
                        si.next();
                        ti.next();
                    }
                }
            }
        }
    }
    for key in src {
        let data = source.get(key).data.clone();
        target.store.get_mut(key).data = data;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array4;

    fn tiny_seg(arch: Architecture) -> Network<f32> {
        let spec =
            ModelSpec::segmentation(arch, EncoderSpec::tiny(4)).expect("valid segmentation spec");
        Network::build(spec, 11).expect("network builds")
    }

    #[test]
    fn encoder_emits_five_stages_at_halving_resolutions() {
        let mut net = tiny_seg(Architecture::Unet);
        let x = Array4::<f32>::zeros((1, 4, 32, 32));
        let stages = net.encoder_features(&x, Mode::Eval).unwrap();
        let sizes: Vec<usize> = stages.iter().map(|s| s.shape()[2]).collect();
        assert_eq!(sizes, vec![16, 8, 4, 2, 1]);
        let chans: Vec<usize> = stages.iter().map(|s| s.shape()[1]).collect();
        assert_eq!(chans, vec![16, 32, 32, 32, 32]);
    }

    #[test]
    fn full_preset_mirrors_the_121_layer_configuration() {
        let spec = EncoderSpec::full(4);
        assert_eq!(spec.block_layout, vec![6, 12, 24, 16]);
        assert_eq!(spec.stem_channels(), 64);
        let encoder = EncoderGraph::new(&spec);
        assert_eq!(encoder.stage_channels, vec![64, 256, 512, 1024, 1024]);
    }

    #[test]
    fn all_segmentation_archs_preserve_shape_and_range() {
        for arch in Architecture::SEGMENTATION {
            let mut net = tiny_seg(arch);
            let x = Array4::<f32>::zeros((2, 4, 32, 32));
            let y = net.predict_seg(&x).unwrap();
            assert_eq!(y.dim(), (2, 1, 32, 32), "{arch}");
            assert!(
                y.iter().all(|&p| (0.0..=1.0).contains(&p) && p.is_finite()),
                "{arch} probabilities out of range"
            );
            let x = Array4::<f32>::ones((1, 4, 64, 64));
            let y = net.predict_seg(&x).unwrap();
            assert_eq!(y.dim(), (1, 1, 64, 64), "{arch} at 64x64");
        }
    }

    #[test]
    fn identical_seeds_give_identical_checksums() {
        let a = tiny_seg(Architecture::Fpn);
        let b = tiny_seg(Architecture::Fpn);
        let a32: ParameterStore<f32> = a.store;
        let b32: ParameterStore<f32> = b.store;
        assert_eq!(a32.checksum(), b32.checksum());
    }

    #[test]
    fn classifier_probabilities_normalize() {
        let spec = ModelSpec::classifier(EncoderSpec::tiny(4), 6).unwrap();
        let mut net: Network<f32> = Network::build(spec, 3).unwrap();
        let x = Array4::from_elem((3, 4, 32, 32), 0.25f32);
        let p = net.predict_cls(&x).unwrap();
        assert_eq!(p.dim(), (3, 6));
        for row in p.outer_iter() {
            let s: f32 = row.sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
        assert!(ModelSpec::classifier(EncoderSpec::tiny(4), 1).is_err());
    }

    #[test]
    fn classifier_and_segmenter_share_encoder_shapes() {
        let cls = Network::<f32>::build(
            ModelSpec::classifier(EncoderSpec::tiny(4), 4).unwrap(),
            5,
        )
        .unwrap();
        for arch in Architecture::SEGMENTATION {
            let seg = tiny_seg(arch);
            let ck: Vec<_> = cls.store.keys_with_prefix("encoder.").collect();
            let sk: Vec<_> = seg.store.keys_with_prefix("encoder.").collect();
            assert_eq!(ck, sk, "{arch} encoder key sets differ");
            for key in ck {
                assert_eq!(
                    cls.store.get(key).data.shape(),
                    seg.store.get(key).data.shape(),
                    "{arch}: shape of {key} differs"
                );
            }
        }
    }

    #[test]
    fn transfer_copies_bits_and_rejects_mismatches() {
        let mut cls = Network::<f32>::build(
            ModelSpec::classifier(EncoderSpec::tiny(4), 4).unwrap(),
            5,
        )
        .unwrap();
        // Nudge a weight and a running stat so the copy is observable.
        cls.store.get_mut("encoder.stem.conv.weight").data[[0, 0, 0, 0]] = 7.5;
        cls.store.get_mut("encoder.stem.bn.running_mean").data[[0]] = -2.0;

        let mut seg = tiny_seg(Architecture::Unet);
        transfer_encoder(&cls.store, &mut seg).unwrap();
        assert_eq!(
            seg.store.get("encoder.stem.conv.weight").data[[0, 0, 0, 0]],
            7.5
        );
        assert_eq!(seg.store.get("encoder.stem.bn.running_mean").data[[0]], -2.0);

        // A tiny-spec source cannot land in a full-spec target.
        let mut full = Network::<f32>::build(
            ModelSpec::segmentation(Architecture::Unet, EncoderSpec::full(4)).unwrap(),
            5,
        )
        .unwrap();
        let err = transfer_encoder(&cls.store, &mut full).unwrap_err();
        match err {
            Error::Transfer { key, .. } => {
                assert!(key.starts_with("encoder."), "offending key: {key}")
            }
            other => panic!("expected transfer error, got {other}"),
        }
    }

    #[test]
    fn transferred_encoder_reproduces_classifier_features() {
        let mut cls = Network::<f32>::build(
            ModelSpec::classifier(EncoderSpec::tiny(4), 4).unwrap(),
            21,
        )
        .unwrap();
        let mut seg = tiny_seg(Architecture::Linknet);
        transfer_encoder(&cls.store, &mut seg).unwrap();

        let mut rng = crate::util::seeded_rng(3, "transfer-features");
        use rand::Rng;
        let x = Array4::from_shape_fn((1, 4, 32, 32), |_| rng.gen_range(-1.0f32..1.0));
        let fc = cls.encoder_features(&x, Mode::Eval).unwrap();
        let fs = seg.encoder_features(&x, Mode::Eval).unwrap();
        assert_eq!(fc.len(), fs.len());
        for (a, b) in fc.iter().zip(&fs) {
            assert_eq!(a, b, "feature maps must match exactly");
        }
    }
}
