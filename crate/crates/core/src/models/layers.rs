//! Layer descriptors: hyperparameters plus the names their tensors use in the
//! parameter store. Layers own no data; `init` writes seeded tensors into a
//! store and `forward` records tape ops that read them back by name.

use ndarray::{Array1, ArrayD};

use crate::nn::store::he_normal;
use crate::nn::{ParameterStore, Scalar, Tape, Var};

#[derive(Debug, Clone)]
pub(crate) struct ConvLayer {
    pub name: String,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub bias: bool,
}

impl ConvLayer {
    pub fn new(name: impl Into<String>, in_ch: usize, out_ch: usize, kernel: usize) -> Self {
        Self {
            name: name.into(),
            in_ch,
            out_ch,
            kernel,
            stride: 1,
            pad: kernel / 2,
            bias: false,
        }
    }

    pub fn stride(mut self, s: usize) -> Self {
        self.stride = s;
        self
    }

    pub fn with_bias(mut self) -> Self {
        self.bias = true;
        self
    }

    pub fn init<T: Scalar>(&self, store: &mut ParameterStore<T>, seed: u64) {
        let wname = format!("{}.weight", self.name);
        let fan_in = self.in_ch * self.kernel * self.kernel;
        let shape = [self.out_ch, self.in_ch, self.kernel, self.kernel];
        store.insert(&wname, he_normal(&shape, fan_in, seed, &wname), true);
        if self.bias {
            store.insert(
                format!("{}.bias", self.name),
                Array1::<T>::zeros(self.out_ch).into_dyn(),
                true,
            );
        }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Var {
        let wname = format!("{}.weight", self.name);
        let bname = format!("{}.bias", self.name);
        tape.conv2d(
            x,
            &wname,
            self.bias.then_some(bname.as_str()),
            self.stride,
            self.pad,
        )
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BnLayer {
    pub name: String,
    pub ch: usize,
}

impl BnLayer {
    pub fn new(name: impl Into<String>, ch: usize) -> Self {
        Self {
            name: name.into(),
            ch,
        }
    }

    pub fn init<T: Scalar>(&self, store: &mut ParameterStore<T>, _seed: u64) {
        let c = self.ch;
        store.insert(
            format!("{}.gamma", self.name),
            ArrayD::ones(vec![c]),
            true,
        );
        store.insert(
            format!("{}.beta", self.name),
            ArrayD::zeros(vec![c]),
            true,
        );
        store.insert(
            format!("{}.running_mean", self.name),
            ArrayD::zeros(vec![c]),
            false,
        );
        store.insert(
            format!("{}.running_var", self.name),
            ArrayD::ones(vec![c]),
            false,
        );
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Var {
        tape.batch_norm(x, &self.name)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LinearLayer {
    pub name: String,
    pub in_features: usize,
    pub out_features: usize,
}

impl LinearLayer {
    pub fn init<T: Scalar>(&self, store: &mut ParameterStore<T>, seed: u64) {
        let wname = format!("{}.weight", self.name);
        store.insert(
            &wname,
            he_normal(
                &[self.out_features, self.in_features],
                self.in_features,
                seed,
                &wname,
            ),
            true,
        );
        store.insert(
            format!("{}.bias", self.name),
            Array1::<T>::zeros(self.out_features).into_dyn(),
            true,
        );
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Var {
        tape.linear(
            x,
            &format!("{}.weight", self.name),
            &format!("{}.bias", self.name),
        )
    }
}

/// Conv + batch norm + ReLU, the composite both encoder and decoders use.
#[derive(Debug, Clone)]
pub(crate) struct ConvBnRelu {
    pub conv: ConvLayer,
    pub bn: BnLayer,
}

impl ConvBnRelu {
    pub fn new(prefix: &str, conv_name: &str, bn_name: &str, in_ch: usize, out_ch: usize, kernel: usize) -> Self {
        Self {
            conv: ConvLayer::new(format!("{prefix}.{conv_name}"), in_ch, out_ch, kernel),
            bn: BnLayer::new(format!("{prefix}.{bn_name}"), out_ch),
        }
    }

    pub fn init<T: Scalar>(&self, store: &mut ParameterStore<T>, seed: u64) {
        self.conv.init(store, seed);
        self.bn.init(store, seed);
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Var {
        let c = self.conv.forward(tape, x);
        let b = self.bn.forward(tape, c);
        tape.relu(b)
    }
}
