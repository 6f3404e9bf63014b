//! Reverse-mode autodiff over a linear tape of ops.
//!
//! A [`Tape`] borrows the parameter store for one forward/backward round.
//! Graph values are tape-owned; parameters are referenced by name and read
//! straight out of the store, so the only store mutation during a forward
//! pass is the batch-norm running-statistics update in training mode.
//! `backward` walks the tape once in reverse and returns parameter gradients
//! keyed by name.

use std::collections::BTreeMap;

use ndarray::{s, Array1, Array2, Array4, ArrayD, ArrayView1, ArrayView2, ArrayView4, Ix1, Ix2};

use super::kernels as k;
use super::{ParameterStore, Scalar, BN_EPS, BN_MOMENTUM};

/// Whether batch norm uses batch statistics (and updates its running
/// estimates) or the stored running estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Handle to a value on the tape.
#[derive(Debug, Clone, Copy)]
pub struct Var(usize);

enum Val<T> {
    A4(Array4<T>),
    A2(Array2<T>),
    Scalar(T),
}

enum Op<T: Scalar> {
    Input,
    Conv {
        x: Var,
        w: String,
        b: Option<String>,
        stride: usize,
        pad: usize,
    },
    Bn {
        x: Var,
        gamma: String,
        beta: String,
        xhat: Array4<T>,
        invstd: Array1<T>,
        batch_stats: bool,
    },
    Relu {
        x: Var,
    },
    Sigmoid {
        x: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Concat {
        xs: Vec<Var>,
        splits: Vec<usize>,
    },
    MaxPool {
        x: Var,
        arg: Array4<u32>,
    },
    AvgPool {
        x: Var,
        k: usize,
    },
    Gap {
        x: Var,
    },
    Up2 {
        x: Var,
    },
    Linear {
        x: Var,
        w: String,
        b: String,
    },
    Bce {
        z: Var,
        target: Array4<T>,
    },
    SoftmaxCe {
        z: Var,
        labels: Vec<usize>,
    },
}

struct Node<T: Scalar> {
    value: Val<T>,
    op: Op<T>,
}

pub struct Tape<'s, T: Scalar> {
    nodes: Vec<Node<T>>,
    store: &'s mut ParameterStore<T>,
    mode: Mode,
}

impl<'s, T: Scalar> Tape<'s, T> {
    pub fn new(store: &'s mut ParameterStore<T>, mode: Mode) -> Self {
        Self {
            nodes: Vec::new(),
            store,
            mode,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    fn push(&mut self, value: Val<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value4(&self, v: Var) -> &Array4<T> {
        match &self.nodes[v.0].value {
            Val::A4(a) => a,
            _ => panic!("expected a 4-d value"),
        }
    }

    pub fn value2(&self, v: Var) -> &Array2<T> {
        match &self.nodes[v.0].value {
            Val::A2(a) => a,
            _ => panic!("expected a 2-d value"),
        }
    }

    pub fn scalar(&self, v: Var) -> T {
        match &self.nodes[v.0].value {
            Val::Scalar(s) => *s,
            _ => panic!("expected a scalar value"),
        }
    }

    fn p4(&self, name: &str) -> ArrayView4<'_, T> {
        self.store
            .get(name)
            .data
            .view()
            .into_dimensionality()
            .unwrap_or_else(|_| panic!("parameter `{name}` is not 4-d"))
    }

    fn p2(&self, name: &str) -> ArrayView2<'_, T> {
        self.store
            .get(name)
            .data
            .view()
            .into_dimensionality::<Ix2>()
            .unwrap_or_else(|_| panic!("parameter `{name}` is not 2-d"))
    }

    fn p1(&self, name: &str) -> ArrayView1<'_, T> {
        self.store
            .get(name)
            .data
            .view()
            .into_dimensionality::<Ix1>()
            .unwrap_or_else(|_| panic!("parameter `{name}` is not 1-d"))
    }

    pub fn input4(&mut self, x: Array4<T>) -> Var {
        self.push(Val::A4(x), Op::Input)
    }

    pub fn input2(&mut self, x: Array2<T>) -> Var {
        self.push(Val::A2(x), Op::Input)
    }

    pub fn conv2d(
        &mut self,
        x: Var,
        weight: &str,
        bias: Option<&str>,
        stride: usize,
        pad: usize,
    ) -> Var {
        let y = k::conv2d(
            self.value4(x).view(),
            self.p4(weight),
            bias.map(|b| self.p1(b)),
            stride,
            pad,
        );
        self.push(
            Val::A4(y),
            Op::Conv {
                x,
                w: weight.to_string(),
                b: bias.map(str::to_string),
                stride,
                pad,
            },
        )
    }

    /// Batch norm over `prefix.{gamma,beta,running_mean,running_var}`.
    pub fn batch_norm(&mut self, x: Var, prefix: &str) -> Var {
        let eps = T::from_f64(BN_EPS);
        let gamma = format!("{prefix}.gamma");
        let beta = format!("{prefix}.beta");
        let rmean = format!("{prefix}.running_mean");
        let rvar = format!("{prefix}.running_var");

        let batch_stats = self.mode == Mode::Train;
        let stats = if batch_stats {
            let stats = k::bn_batch_stats(self.value4(x).view(), eps);
            let m = T::from_f64(BN_MOMENTUM);
            let keep = T::one() - m;
            for (slot, fresh) in [(&rmean, &stats.mean), (&rvar, &stats.var)] {
                let run = &mut self.store.get_mut(slot).data;
                for (r, &v) in run.iter_mut().zip(fresh.iter()) {
                    *r = *r * keep + v * m;
                }
            }
            stats
        } else {
            k::bn_running_stats(self.p1(&rmean), self.p1(&rvar), eps)
        };

        let (y, xhat) = k::bn_apply(self.value4(x).view(), &stats, self.p1(&gamma), self.p1(&beta));
        self.push(
            Val::A4(y),
            Op::Bn {
                x,
                gamma,
                beta,
                xhat,
                invstd: stats.invstd,
                batch_stats,
            },
        )
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = self.value4(x).mapv(|v| if v > T::zero() { v } else { T::zero() });
        self.push(Val::A4(y), Op::Relu { x })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let y = self.value4(x).mapv(k::sigmoid_scalar);
        self.push(Val::A4(y), Op::Sigmoid { x })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value4(a), self.value4(b));
        assert_eq!(va.dim(), vb.dim(), "add operands must agree in shape");
        let y = va + vb;
        self.push(Val::A4(y), Op::Add { a, b })
    }

    pub fn concat_channels(&mut self, xs: &[Var]) -> Var {
        assert!(!xs.is_empty());
        let (y, splits) = {
            let views: Vec<ArrayView4<'_, T>> = xs.iter().map(|v| self.value4(*v).view()).collect();
            let splits = views.iter().map(|v| v.dim().1).collect::<Vec<_>>();
            (k::concat_channels(&views), splits)
        };
        self.push(
            Val::A4(y),
            Op::Concat {
                xs: xs.to_vec(),
                splits,
            },
        )
    }

    pub fn max_pool(&mut self, x: Var, win: usize, stride: usize, pad: usize) -> Var {
        let (y, arg) = k::max_pool(self.value4(x).view(), win, stride, pad);
        self.push(Val::A4(y), Op::MaxPool { x, arg })
    }

    pub fn avg_pool(&mut self, x: Var, win: usize) -> Var {
        let y = k::avg_pool(self.value4(x).view(), win);
        self.push(Val::A4(y), Op::AvgPool { x, k: win })
    }

    pub fn global_avg_pool(&mut self, x: Var) -> Var {
        let y = k::global_avg_pool(self.value4(x).view());
        self.push(Val::A2(y), Op::Gap { x })
    }

    pub fn upsample2(&mut self, x: Var) -> Var {
        let y = k::upsample2(self.value4(x).view());
        self.push(Val::A4(y), Op::Up2 { x })
    }

    pub fn linear(&mut self, x: Var, weight: &str, bias: &str) -> Var {
        let y = k::linear(self.value2(x).view(), self.p2(weight), self.p1(bias));
        self.push(
            Val::A2(y),
            Op::Linear {
                x,
                w: weight.to_string(),
                b: bias.to_string(),
            },
        )
    }

    pub fn bce_with_logits(&mut self, z: Var, target: Array4<T>) -> Var {
        let loss = k::bce_with_logits(self.value4(z).view(), target.view());
        self.push(Val::Scalar(loss), Op::Bce { z, target })
    }

    pub fn softmax_cross_entropy(&mut self, z: Var, labels: &[usize]) -> Var {
        let loss = k::softmax_cross_entropy(self.value2(z).view(), labels);
        self.push(
            Val::Scalar(loss),
            Op::SoftmaxCe {
                z,
                labels: labels.to_vec(),
            },
        )
    }

    /// Reverse pass from a scalar loss. Returns gradients for every parameter
    /// the graph touched, keyed by parameter name.
    pub fn backward(&mut self, loss: Var) -> BTreeMap<String, ArrayD<T>> {
        match &self.nodes[loss.0].value {
            Val::Scalar(_) => {}
            _ => panic!("backward target must be a scalar loss"),
        }
        let mut grads: Vec<Option<Val<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Val::Scalar(T::one()));
        let mut pgrads: BTreeMap<String, ArrayD<T>> = BTreeMap::new();

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Input => {}
                Op::Conv { x, w, b, stride, pad } => {
                    let g = as4(&g);
                    let (dx, dw, db) = k::conv2d_backward(
                        self.value4(*x).view(),
                        self.p4(w),
                        g.view(),
                        b.is_some(),
                        *stride,
                        *pad,
                    );
                    acc4(&mut grads, *x, dx);
                    acc_param(&mut pgrads, w, dw.into_dyn());
                    if let (Some(bn), Some(db)) = (b, db) {
                        acc_param(&mut pgrads, bn, db.into_dyn());
                    }
                }
                Op::Bn {
                    x,
                    gamma,
                    beta,
                    xhat,
                    invstd,
                    batch_stats,
                } => {
                    let g = as4(&g);
                    let (dx, dgamma, dbeta) = if *batch_stats {
                        k::bn_backward_train(xhat, invstd, self.p1(gamma), g.view())
                    } else {
                        k::bn_backward_eval(xhat, invstd, self.p1(gamma), g.view())
                    };
                    acc4(&mut grads, *x, dx);
                    acc_param(&mut pgrads, gamma, dgamma.into_dyn());
                    acc_param(&mut pgrads, beta, dbeta.into_dyn());
                }
                Op::Relu { x } => {
                    let g = as4(&g);
                    let y = match &self.nodes[i].value {
                        Val::A4(y) => y,
                        _ => unreachable!(),
                    };
                    let mut dx = g.clone();
                    dx.zip_mut_with(y, |d, &yv| {
                        if yv <= T::zero() {
                            *d = T::zero();
                        }
                    });
                    acc4(&mut grads, *x, dx);
                }
                Op::Sigmoid { x } => {
                    let g = as4(&g);
                    let y = match &self.nodes[i].value {
                        Val::A4(y) => y,
                        _ => unreachable!(),
                    };
                    let mut dx = g.clone();
                    dx.zip_mut_with(y, |d, &yv| *d = *d * yv * (T::one() - yv));
                    acc4(&mut grads, *x, dx);
                }
                Op::Add { a, b } => {
                    let g = as4(&g);
                    acc4(&mut grads, *a, g.clone());
                    acc4(&mut grads, *b, g.clone());
                }
                Op::Concat { xs, splits } => {
                    let g = as4(&g);
                    let mut lo = 0;
                    for (x, ch) in xs.iter().zip(splits) {
                        let dx = g.slice(s![.., lo..lo + ch, .., ..]).to_owned();
                        acc4(&mut grads, *x, dx);
                        lo += ch;
                    }
                }
                Op::MaxPool { x, arg } => {
                    let g = as4(&g);
                    let (_, _, h, w) = self.value4(*x).dim();
                    acc4(&mut grads, *x, k::max_pool_backward(arg, g.view(), h, w));
                }
                Op::AvgPool { x, k: win } => {
                    let g = as4(&g);
                    acc4(&mut grads, *x, k::avg_pool_backward(g.view(), *win));
                }
                Op::Gap { x } => {
                    let g = as2(&g);
                    let (_, _, h, w) = self.value4(*x).dim();
                    acc4(
                        &mut grads,
                        *x,
                        k::global_avg_pool_backward(g.view(), h, w),
                    );
                }
                Op::Up2 { x } => {
                    let g = as4(&g);
                    acc4(&mut grads, *x, k::upsample2_backward(g.view()));
                }
                Op::Linear { x, w, b } => {
                    let g = as2(&g);
                    let (dx, dw, db) =
                        k::linear_backward(self.value2(*x).view(), self.p2(w), g.view());
                    acc2(&mut grads, *x, dx);
                    acc_param(&mut pgrads, w, dw.into_dyn());
                    acc_param(&mut pgrads, b, db.into_dyn());
                }
                Op::Bce { z, target } => {
                    let up = as_scalar(&g);
                    let dz =
                        k::bce_with_logits_backward(self.value4(*z).view(), target.view(), up);
                    acc4(&mut grads, *z, dz);
                }
                Op::SoftmaxCe { z, labels } => {
                    let up = as_scalar(&g);
                    let dz =
                        k::softmax_cross_entropy_backward(self.value2(*z).view(), labels, up);
                    acc2(&mut grads, *z, dz);
                }
            }
        }
        pgrads
    }
}

fn as4<'a, T: Scalar>(v: &'a Val<T>) -> &'a Array4<T> {
    match v {
        Val::A4(a) => a,
        _ => panic!("expected a 4-d gradient"),
    }
}

fn as2<'a, T: Scalar>(v: &'a Val<T>) -> &'a Array2<T> {
    match v {
        Val::A2(a) => a,
        _ => panic!("expected a 2-d gradient"),
    }
}

fn as_scalar<T: Scalar>(v: &Val<T>) -> T {
    match v {
        Val::Scalar(s) => *s,
        _ => panic!("expected a scalar gradient"),
    }
}

fn acc4<T: Scalar>(grads: &mut [Option<Val<T>>], v: Var, g: Array4<T>) {
    match &mut grads[v.0] {
        None => grads[v.0] = Some(Val::A4(g)),
        Some(Val::A4(a)) => *a += &g,
        _ => panic!("gradient rank mismatch"),
    }
}

fn acc2<T: Scalar>(grads: &mut [Option<Val<T>>], v: Var, g: Array2<T>) {
    match &mut grads[v.0] {
        None => grads[v.0] = Some(Val::A2(g)),
        Some(Val::A2(a)) => *a += &g,
        _ => panic!("gradient rank mismatch"),
    }
}

fn acc_param<T: Scalar>(pgrads: &mut BTreeMap<String, ArrayD<T>>, name: &str, g: ArrayD<T>) {
    match pgrads.get_mut(name) {
        None => {
            pgrads.insert(name.to_string(), g);
        }
        Some(a) => *a += &g,
    }
}
