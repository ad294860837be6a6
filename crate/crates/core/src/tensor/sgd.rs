use crate::error::{Error, Result};
use std::collections::BTreeMap;

/// Stable identity of one parameter buffer within a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

/// Momentum SGD: `v <- momentum * v - lr * g; w <- w + v`.
#[derive(Clone, Debug)]
pub struct SgdState {
    learning_rate: f32,
    momentum: f32,
    velocity: BTreeMap<ParamId, Vec<f32>>,
}

impl SgdState {
    pub fn new(learning_rate: f32, momentum: f32) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::invalid("sgd", format!("learning rate {learning_rate}")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::invalid("sgd", format!("momentum {momentum} outside [0,1)")));
        }
        Ok(SgdState {
            learning_rate,
            momentum,
            velocity: BTreeMap::new(),
        })
    }

    pub fn learning_rate(&self) -> f32 {
        self.learning_rate
    }

    pub fn set_learning_rate(&mut self, lr: f32) {
        self.learning_rate = lr;
    }

    pub fn momentum(&self) -> f32 {
        self.momentum
    }

    pub fn velocity(&self, id: ParamId) -> Option<&[f32]> {
        self.velocity.get(&id).map(Vec::as_slice)
    }

    pub fn step(&mut self, id: ParamId, param: &mut [f32], grad: &[f32]) -> Result<()> {
        if param.len() != grad.len() {
            return Err(Error::shape(
                "sgd_step",
                format!("parameter {:?} has {} values, gradient {}", id, param.len(), grad.len()),
            ));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite { op: "sgd_step" });
        }
        let v = self
            .velocity
            .entry(id)
            .or_insert_with(|| vec![0.0; param.len()]);
        if v.len() != param.len() {
            return Err(Error::shape(
                "sgd_step",
                format!("velocity for {:?} has {} values, parameter {}", id, v.len(), param.len()),
            ));
        }
        for ((w, vel), &g) in param.iter_mut().zip(v.iter_mut()).zip(grad) {
            *vel = self.momentum * *vel - self.learning_rate * g;
            *w += *vel;
        }
        Ok(())
    }
}
