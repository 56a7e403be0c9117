use std::collections::HashMap;

use super::graph::{Gradients, Network};
use super::{NnError, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    /// `v <- momentum * v + g; w <- w - lr * v`
    SgdMomentum { lr: f64, momentum: f64 },
    /// Bias-corrected Adam.
    Adam { lr: f64, beta1: f64, beta2: f64, epsilon: f64 },
}

impl OptimizerKind {
    pub fn sgd(lr: f64, momentum: f64) -> Self {
        Self::SgdMomentum { lr, momentum }
    }

    pub fn adam(lr: f64) -> Self {
        Self::Adam { lr, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }

    pub fn learning_rate(&self) -> f64 {
        match *self {
            Self::SgdMomentum { lr, .. } | Self::Adam { lr, .. } => lr,
        }
    }
}

/// Optimizer accumulators keyed by parameter slot, created on first use.
#[derive(Debug, Clone)]
pub struct OptimizerState<T> {
    kind: OptimizerKind,
    step: u64,
    slots: HashMap<usize, (Vec<T>, Vec<T>)>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(kind: OptimizerKind) -> Self {
        Self { kind, step: 0, slots: HashMap::new() }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update of every `(slot, weights, grads)` triple.
    pub fn apply<'a, I>(&mut self, updates: I) -> Result<(), NnError>
    where
        I: IntoIterator<Item = (usize, &'a mut [T], &'a [T])>,
    {
        self.step += 1;
        let t = self.step as i32;
        for (key, w, g) in updates {
            if w.len() != g.len() {
                return Err(NnError::Shape(format!("parameter of {} elements got {} gradients", w.len(), g.len())));
            }
            let (m, v) = self.slots.entry(key).or_insert_with(|| (vec![T::zero(); w.len()], vec![T::zero(); w.len()]));
            if m.len() != w.len() {
                return Err(NnError::Shape(format!("accumulator slot {key} has {} elements, parameter {}", m.len(), w.len())));
            }
            match self.kind {
                OptimizerKind::SgdMomentum { lr, momentum } => {
                    let (lr, mu) = (T::of(lr), T::of(momentum));
                    for ((wi, &gi), vi) in w.iter_mut().zip(g).zip(m.iter_mut()) {
                        *vi = mu * *vi + gi;
                        *wi -= lr * *vi;
                    }
                }
                OptimizerKind::Adam { lr, beta1, beta2, epsilon } => {
                    let c1 = T::of(1.0 - beta1.powi(t));
                    let c2 = T::of(1.0 - beta2.powi(t));
                    let (b1, b2, lr, eps) = (T::of(beta1), T::of(beta2), T::of(lr), T::of(epsilon));
                    for (((wi, &gi), mi), vi) in w.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *mi = b1 * *mi + (T::one() - b1) * gi;
                        *vi = b2 * *vi + (T::one() - b2) * gi * gi;
                        let mhat = *mi / c1;
                        let vhat = *vi / c2;
                        *wi -= lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }

    /// Updates every trainable parameter of `net`. Frozen nodes are left untouched.
    pub fn step(&mut self, net: &mut Network<T>, grads: &Gradients<T>) -> Result<(), NnError> {
        let mut updates = Vec::new();
        for (i, slot, p) in net.trainable_params_mut() {
            let g = grads
                .params
                .get(i)
                .and_then(|g| g.get(slot))
                .ok_or_else(|| NnError::Graph(format!("node {i} slot {slot} has no gradient")))?;
            if p.shape() != g.shape() {
                return Err(NnError::Shape(format!("node {i} slot {slot}: {:?} vs {:?}", p.shape(), g.shape())));
            }
            updates.push((i * 8 + slot, p.data_mut(), g.data()));
        }
        self.apply(updates)
    }
}
