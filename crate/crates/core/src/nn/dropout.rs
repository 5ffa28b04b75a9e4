use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-element multipliers drawn in train mode (`0` or `1/(1-ratio)`).
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask(pub Vec<f64>);

/// Inverted dropout. Eval mode, or a ratio of zero, is the identity and
/// returns no mask.
pub fn dropout(x: &Tensor, ratio: f64, mode: Mode, rng: &mut Rng) -> Result<(Tensor, Option<DropoutMask>)> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::config(format!("dropout ratio must be in [0, 1), got {ratio}")));
    }
    if mode == Mode::Eval || ratio == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep = 1.0 / (1.0 - ratio);
    let mask: Vec<f64> = (0..x.len()).map(|_| if rng.random::<f64>() < ratio { 0.0 } else { keep }).collect();
    let y = Tensor::from_parts(x.shape().to_vec(), x.data().iter().zip(&mask).map(|(a, m)| a * m).collect());
    Ok((y, Some(DropoutMask(mask))))
}

pub fn dropout_backward(dy: &Tensor, mask: Option<&DropoutMask>) -> Tensor {
    match mask {
        None => dy.clone(),
        Some(m) => Tensor::from_parts(dy.shape().to_vec(), dy.data().iter().zip(&m.0).map(|(a, m)| a * m).collect()),
    }
}
