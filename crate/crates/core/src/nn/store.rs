//! Named parameter storage shared by every network.
//!
//! Keys are dotted paths such as `encoder.block1.layer2.conv1.weight`. The
//! map is ordered, so iteration, serialization and checksums are stable. The
//! `encoder.` prefix is the transfer boundary: pre-training and segmentation
//! models name their encoder parameters identically so the tensors can be
//! copied across by key.

use std::collections::BTreeMap;

use ndarray::ArrayD;

use super::Scalar;
use crate::util;

/// One tensor plus whether the optimizer may touch it. Batch-norm running
/// statistics live here with `trainable: false`.
#[derive(Debug, Clone)]
pub struct Parameter<T> {
    pub data: ArrayD<T>,
    pub trainable: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ParameterStore<T> {
    map: BTreeMap<String, Parameter<T>>,
}

impl<T: Scalar> ParameterStore<T> {
    pub fn new() -> Self {
        Self {
            map: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, data: ArrayD<T>, trainable: bool) {
        let name = name.into();
        let prev = self.map.insert(name.clone(), Parameter { data, trainable });
        assert!(prev.is_none(), "duplicate parameter `{name}`");
    }

    pub fn get(&self, name: &str) -> &Parameter<T> {
        self.map
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Parameter<T> {
        self.map
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Total element count across all tensors.
    pub fn element_count(&self) -> usize {
        self.map.values().map(|p| p.data.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Parameter<T>)> {
        self.map.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Parameter<T>)> {
        self.map.iter_mut()
    }

    pub fn keys(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    /// Keys under a dotted prefix, e.g. `encoder.`.
    pub fn keys_with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = &'a String> {
        self.map.keys().filter(move |k| k.starts_with(prefix))
    }
}

impl ParameterStore<f32> {
    /// SHA-256 over names, flags, shapes and little-endian tensor bytes, in
    /// key order. Equal checksums mean bit-identical stores.
    pub fn checksum(&self) -> String {
        self.checksum_of(|_| true)
    }

    /// Checksum restricted to keys under a dotted prefix, e.g. `encoder.`.
    /// Equal prefix checksums mean the covered tensors are bit-identical.
    pub fn checksum_prefix(&self, prefix: &str) -> String {
        self.checksum_of(|k| k.starts_with(prefix))
    }

    fn checksum_of(&self, keep: impl Fn(&str) -> bool) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for (name, p) in self.map.iter().filter(|(k, _)| keep(k)) {
            h.update(name.as_bytes());
            h.update([0u8, p.trainable as u8]);
            h.update((p.data.ndim() as u32).to_le_bytes());
            for d in p.data.shape() {
                h.update((*d as u64).to_le_bytes());
            }
            for v in p.data.iter() {
                h.update(v.to_le_bytes());
            }
        }
        util::to_hex(&h.finalize())
    }
}

/// He-normal initialization: zero-mean Gaussian with `sqrt(2 / fan_in)`
/// standard deviation, drawn from an RNG derived from the seed and the
/// parameter name so each tensor has its own stream.
pub fn he_normal<T: Scalar>(shape: &[usize], fan_in: usize, seed: u64, name: &str) -> ArrayD<T> {
    let mut rng = util::seeded_rng(seed, name);
    let std = T::from_f64((2.0 / fan_in as f64).sqrt());
    ArrayD::from_shape_simple_fn(shape.to_vec(), || T::standard_normal(&mut rng) * std)
}
