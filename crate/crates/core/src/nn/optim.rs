//! Gradient-descent optimizers over named parameter stores.

use std::collections::BTreeMap;

use ndarray::ArrayD;

use super::{ParameterStore, Scalar};

pub trait Optimizer<T: Scalar> {
    /// Apply one update. Gradients are keyed by parameter name; parameters
    /// without a gradient entry and non-trainable parameters are untouched.
    fn step(&mut self, store: &mut ParameterStore<T>, grads: &BTreeMap<String, ArrayD<T>>);
}

/// Plain stochastic gradient descent.
pub struct Sgd<T> {
    pub lr: T,
}

impl<T: Scalar> Optimizer<T> for Sgd<T> {
    fn step(&mut self, store: &mut ParameterStore<T>, grads: &BTreeMap<String, ArrayD<T>>) {
        for (name, g) in grads {
            let p = store.get_mut(name);
            if !p.trainable {
                continue;
            }
            p.data.zip_mut_with(g, |w, &gv| *w = *w - self.lr * gv);
        }
    }
}

/// Adam with bias correction.
pub struct Adam<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    t: u64,
    m: BTreeMap<String, ArrayD<T>>,
    v: BTreeMap<String, ArrayD<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: T) -> Self {
        Self {
            lr,
            beta1: T::from_f64(0.9),
            beta2: T::from_f64(0.999),
            eps: T::from_f64(1e-8),
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }
}

impl<T: Scalar> Optimizer<T> for Adam<T> {
    fn step(&mut self, store: &mut ParameterStore<T>, grads: &BTreeMap<String, ArrayD<T>>) {
        self.t += 1;
        let b1t = T::one() - self.beta1.powi(self.t as i32);
        let b2t = T::one() - self.beta2.powi(self.t as i32);
        for (name, g) in grads {
            let p = store.get_mut(name);
            if !p.trainable {
                continue;
            }
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| ArrayD::zeros(g.raw_dim()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| ArrayD::zeros(g.raw_dim()));
            m.zip_mut_with(g, |mi, &gi| {
                *mi = self.beta1 * *mi + (T::one() - self.beta1) * gi
            });
            v.zip_mut_with(g, |vi, &gi| {
                *vi = self.beta2 * *vi + (T::one() - self.beta2) * gi * gi
            });
            ndarray::Zip::from(&mut p.data)
                .and(&*m)
                .and(&*v)
                .for_each(|w, &mi, &vi| {
                    let mhat = mi / b1t;
                    let vhat = vi / b2t;
                    *w = *w - self.lr * mhat / (vhat.sqrt() + self.eps);
                });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::IxDyn;

    /// Minimize (w - 3)^2 elementwise; both optimizers should close in on 3.
    fn quadratic_grads(store: &ParameterStore<f64>) -> BTreeMap<String, ArrayD<f64>> {
        let w = &store.get("w").data;
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), w.mapv(|v| 2.0 * (v - 3.0)));
        grads
    }

    #[test]
    fn sgd_and_adam_descend_a_quadratic() {
        for adam in [false, true] {
            let mut store = ParameterStore::new();
            store.insert("w", ArrayD::zeros(IxDyn(&[4])), true);
            store.insert("frozen", ArrayD::zeros(IxDyn(&[1])), false);
            let mut sgd = Sgd { lr: 0.1 };
            let mut ad = Adam::new(0.2);
            for _ in 0..200 {
                let mut grads = quadratic_grads(&store);
                grads.insert("frozen".to_string(), ArrayD::ones(IxDyn(&[1])));
                if adam {
                    ad.step(&mut store, &grads);
                } else {
                    sgd.step(&mut store, &grads);
                }
            }
            for &v in store.get("w").data.iter() {
                assert!((v - 3.0).abs() < 1e-3, "w={v} after descent (adam={adam})");
            }
            assert_eq!(store.get("frozen").data[[0]], 0.0);
        }
    }
}
