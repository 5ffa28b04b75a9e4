//! Layers and training machinery: linear maps, shared pointwise MLPs,
//! dropout, loss, feature propagation, Adam with a step-decay schedule and
//! the checkpoint format.

pub mod checkpoint;
pub mod dropout;
pub mod linear;
pub mod loss;
pub mod mlp;
pub mod ops;
pub mod optim;
pub mod propagation;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use dropout::{dropout, dropout_backward, DropoutMask, Mode};
pub use linear::Linear;
pub use loss::softmax_cross_entropy;
pub use mlp::SharedMlp;
pub use optim::{Adam, LrSchedule};
pub use propagation::{feature_propagation, Interpolation};

use crate::error::{Error, Result};
use crate::tensor::{Parameter, Tensor};

/// Multiply-accumulate counter threaded through instrumented forwards.
///
/// Conventions: a linear layer on `r` rows costs `r·in·out`; a pointwise or
/// reduction op costs one unit per input element it touches. Bias adds and
/// concatenations are free.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct Flops {
    macs: u64,
}

impl Flops {
    pub fn linear(&mut self, rows: usize, fan_in: usize, fan_out: usize) {
        self.macs += (rows * fan_in * fan_out) as u64;
    }

    pub fn elementwise(&mut self, n: usize) {
        self.macs += n as u64;
    }

    pub fn macs(&self) -> u64 {
        self.macs
    }
}

/// Structured access to the trainable tensors of a layer or model.
///
/// Gradients are stored in a value of the same type (see `zeros_like`
/// constructors), so visiting params and grads yields matching sequences.
pub trait Params {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor));

    fn count_params(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, t| n += t.len());
        n
    }

    /// Named snapshot of every tensor, in visiting order.
    fn parameters(&self) -> Vec<Parameter> {
        let mut v = Vec::new();
        self.visit("", &mut |name, t| v.push(Parameter::new(name.trim_start_matches('.'), t.clone())));
        v
    }

    /// Overwrite values from a snapshot with identical names and shapes.
    fn load_parameters(&mut self, params: &[Parameter]) -> Result<()> {
        let mut i = 0;
        let mut err = None;
        self.visit_mut("", &mut |name, t| {
            if err.is_some() {
                return;
            }
            let name = name.trim_start_matches('.');
            match params.get(i) {
                Some(p) if p.name == name && p.value.shape() == t.shape() => *t = p.value.clone(),
                Some(p) => {
                    err = Some(Error::config(format!(
                        "parameter mismatch at {i}: expected {name} {:?}, found {} {:?}",
                        t.shape(),
                        p.name,
                        p.value.shape()
                    )))
                }
                None => err = Some(Error::config(format!("missing parameter {name}"))),
            }
            i += 1;
        });
        if let Some(e) = err {
            return Err(e);
        }
        if i != params.len() {
            return Err(Error::config(format!("expected {i} parameters, found {}", params.len())));
        }
        Ok(())
    }

    /// `self += other` element-wise; both must have the same structure.
    fn accumulate(&mut self, other: &Self)
    where
        Self: Sized,
    {
        let mut src = Vec::new();
        other.visit("", &mut |_, t| src.push(t.clone()));
        let mut it = src.into_iter();
        self.visit_mut("", &mut |_, t| t.add_assign(&it.next().expect("same structure")));
    }

    fn scale_all(&mut self, s: f64) {
        self.visit_mut("", &mut |_, t| t.scale_assign(s));
    }

    fn fill_all(&mut self, v: f64) {
        self.visit_mut("", &mut |_, t| t.fill(v));
    }
}

impl<T: Params> Params for Option<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        if let Some(p) = self {
            p.visit(prefix, f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        if let Some(p) = self {
            p.visit_mut(prefix, f);
        }
    }
}

impl<T: Params> Params for Vec<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        for (i, p) in self.iter().enumerate() {
            p.visit(&format!("{prefix}.{i}"), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        for (i, p) in self.iter_mut().enumerate() {
            p.visit_mut(&format!("{prefix}.{i}"), f);
        }
    }
}
