//! Central finite-difference certification of hand-written backward passes.
//!
//! The checker contracts the op's output with a fixed random projection `g`,
//! asks the op for `∂(g·y)/∂inputs`, and compares every coordinate against
//! `(g·y(x+h) − g·y(x−h)) / 2h`. Piecewise-linear ops (relu, max) expose a
//! kink signature; a perturbation that flips it is skipped, and
//! [`certify`] resamples inputs until no coordinate has to be skipped.

use rand::Rng as _;

use super::ops::{self, Elementwise, ReduceKind, Reduced};
use super::{Indices, Tensor};
use crate::error::{Error, Result};
use crate::par;
use crate::rng::{stream, Rng};

pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_TOL: f64 = 1e-4;
/// Denominator floor for the relative error; keeps exactly-zero gradients
/// from dividing round-off by round-off.
const REL_FLOOR: f64 = 1e-6;
const MAX_RESAMPLES: usize = 16;

/// A differentiable operation with an explicit backward.
pub trait DiffOp: Sync {
    fn name(&self) -> String;
    fn forward(&self, inputs: &[Tensor]) -> Result<Tensor>;
    /// Gradients for every input given `∂L/∂output`.
    fn backward(&self, inputs: &[Tensor], grad_out: &Tensor) -> Result<Vec<Tensor>>;
    fn sample_inputs(&self, rng: &mut Rng) -> Vec<Tensor>;
    /// Discrete state that, when it changes, makes the op non-smooth
    /// between two evaluation points (relu masks, argmax positions).
    fn kink_signature(&self, _inputs: &[Tensor]) -> Vec<u64> {
        Vec::new()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub op: String,
    pub max_rel_error: f64,
    pub pass: bool,
    pub checked: usize,
    pub skipped: usize,
    /// `(input index, flat coordinate)` of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    pub failure: Option<String>,
}

fn uniform(rng: &mut Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_parts(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect())
}

/// Uniform `[-1, 1)` tensor; handy for sampling inputs.
pub fn random_tensor(rng: &mut Rng, shape: &[usize]) -> Tensor {
    uniform(rng, shape, -1.0, 1.0)
}

/// Run one finite-difference comparison. Never returns `Err`: forward or
/// backward failures are reported as a failed check with the location.
pub fn gradient_check(op: &dyn DiffOp, inputs: &[Tensor], step: f64, tol: f64) -> GradReport {
    let mut report = GradReport {
        op: op.name(),
        max_rel_error: 0.0,
        pass: false,
        checked: 0,
        skipped: 0,
        worst: None,
        failure: None,
    };
    let y = match op.forward(inputs) {
        Ok(y) => y,
        Err(e) => {
            report.failure = Some(format!("forward: {e}"));
            return report;
        }
    };
    if let Some(p) = y.data().iter().position(|v| !v.is_finite()) {
        report.failure = Some(format!("non-finite forward output at flat index {p}"));
        return report;
    }
    let proj = random_tensor(&mut stream(0, "gradcheck-projection").rng(), y.shape());
    let analytic = match op.backward(inputs, &proj) {
        Ok(g) if g.len() == inputs.len() => g,
        Ok(g) => {
            report.failure = Some(format!("backward returned {} gradients for {} inputs", g.len(), inputs.len()));
            return report;
        }
        Err(e) => {
            report.failure = Some(format!("backward: {e}"));
            return report;
        }
    };
    for (k, (g, x)) in analytic.iter().zip(inputs).enumerate() {
        if g.shape() != x.shape() {
            report.failure = Some(format!("gradient {k} has shape {:?}, input {:?}", g.shape(), x.shape()));
            return report;
        }
    }
    let base_sig = op.kink_signature(inputs);

    let coords: Vec<(usize, usize)> = inputs
        .iter()
        .enumerate()
        .flat_map(|(k, t)| (0..t.len()).map(move |c| (k, c)))
        .collect();

    // Each coordinate yields Some(rel_err), None when skipped, or Err(msg).
    let per_coord = par::map_range(coords.len(), |n| -> std::result::Result<Option<f64>, String> {
        let (k, c) = coords[n];
        let eval = |delta: f64| -> std::result::Result<(f64, Vec<u64>), String> {
            let mut xs = inputs.to_vec();
            xs[k].data_mut()[c] += delta;
            let y = op.forward(&xs).map_err(|e| format!("forward at input {k} coord {c}: {e}"))?;
            if !y.all_finite() {
                return Err(format!("non-finite output at input {k} coord {c}"));
            }
            Ok((y.dot(&proj), op.kink_signature(&xs)))
        };
        let (lp, sp) = eval(step)?;
        let (lm, sm) = eval(-step)?;
        if sp != base_sig || sm != base_sig {
            return Ok(None);
        }
        let numeric = (lp - lm) / (2.0 * step);
        let a = analytic[k].data()[c];
        let denom = a.abs().max(numeric.abs()).max(REL_FLOOR);
        Ok(Some((a - numeric).abs() / denom))
    });

    for (n, r) in per_coord.into_iter().enumerate() {
        match r {
            Err(msg) => {
                report.failure = Some(msg);
                return report;
            }
            Ok(None) => report.skipped += 1,
            Ok(Some(e)) => {
                report.checked += 1;
                if !(e <= report.max_rel_error) {
                    report.max_rel_error = e;
                    report.worst = Some(coords[n]);
                }
            }
        }
    }
    report.pass = coords.is_empty() || (report.checked > 0 && report.max_rel_error <= tol);
    report
}

/// Check `op` on freshly sampled inputs for each seed, resampling (up to a
/// bound) whenever a perturbation would cross a kink.
pub fn certify(op: &dyn DiffOp, seeds: &[u64], step: f64, tol: f64) -> Vec<GradReport> {
    seeds
        .iter()
        .map(|&seed| {
            let key = stream(seed, "gradcheck-inputs").named(&op.name());
            let mut last = None;
            for attempt in 0..MAX_RESAMPLES {
                let inputs = op.sample_inputs(&mut key.child(attempt as u64).rng());
                let r = gradient_check(op, &inputs, step, tol);
                let clean = r.skipped == 0 || r.failure.is_some();
                last = Some(r);
                if clean {
                    break;
                }
            }
            last.expect("at least one attempt")
        })
        .collect()
}

fn relu_signature(data: &[f64]) -> Vec<u64> {
    data.iter().map(|&v| (v > 0.0) as u64).collect()
}

pub struct MatmulOp {
    pub m: usize,
    pub k: usize,
    pub n: usize,
}

impl DiffOp for MatmulOp {
    fn name(&self) -> String {
        format!("matmul[{}x{}x{}]", self.m, self.k, self.n)
    }
    fn forward(&self, x: &[Tensor]) -> Result<Tensor> {
        ops::matmul(&x[0], &x[1])
    }
    fn backward(&self, x: &[Tensor], dy: &Tensor) -> Result<Vec<Tensor>> {
        let (a, b) = ops::matmul_backward(&x[0], &x[1], dy)?;
        Ok(vec![a, b])
    }
    fn sample_inputs(&self, rng: &mut Rng) -> Vec<Tensor> {
        vec![random_tensor(rng, &[self.m, self.k]), random_tensor(rng, &[self.k, self.n])]
    }
}

pub struct ElementwiseOp {
    pub kind: Elementwise,
    pub shape: Vec<usize>,
}

impl DiffOp for ElementwiseOp {
    fn name(&self) -> String {
        self.kind.name().to_string()
    }
    fn forward(&self, x: &[Tensor]) -> Result<Tensor> {
        let refs: Vec<&Tensor> = x.iter().collect();
        ops::elementwise(self.kind, &refs)
    }
    fn backward(&self, x: &[Tensor], dy: &Tensor) -> Result<Vec<Tensor>> {
        let refs: Vec<&Tensor> = x.iter().collect();
        ops::elementwise_backward(self.kind, &refs, dy)
    }
    fn sample_inputs(&self, rng: &mut Rng) -> Vec<Tensor> {
        (0..self.kind.arity()).map(|_| random_tensor(rng, &self.shape)).collect()
    }
    fn kink_signature(&self, x: &[Tensor]) -> Vec<u64> {
        match self.kind {
            Elementwise::Relu => relu_signature(x[0].data()),
            _ => Vec::new(),
        }
    }
}

pub struct ReduceOp {
    pub kind: ReduceKind,
    pub shape: Vec<usize>,
    pub axis: usize,
}

impl DiffOp for ReduceOp {
    fn name(&self) -> String {
        format!("reduce_{}[axis {}]", self.kind.name(), self.axis)
    }
    fn forward(&self, x: &[Tensor]) -> Result<Tensor> {
        Ok(ops::reduce(self.kind, &x[0], self.axis)?.value)
    }
    fn backward(&self, x: &[Tensor], dy: &Tensor) -> Result<Vec<Tensor>> {
        let r = ops::reduce(self.kind, &x[0], self.axis)?;
        Ok(vec![ops::reduce_backward(self.kind, x[0].shape(), self.axis, r.argmax.as_deref(), dy)?])
    }
    fn sample_inputs(&self, rng: &mut Rng) -> Vec<Tensor> {
        vec![random_tensor(rng, &self.shape)]
    }
    fn kink_signature(&self, x: &[Tensor]) -> Vec<u64> {
        match ops::reduce(self.kind, &x[0], self.axis) {
            Ok(Reduced { argmax: Some(a), .. }) => a.into_iter().map(|i| i as u64).collect(),
            _ => Vec::new(),
        }
    }
}


pub struct GatherOp {
    pub n: usize,
    pub c: usize,
    pub idx: Indices,
}

impl DiffOp for GatherOp {
    fn name(&self) -> String {
        "gather".into()
    }
    fn forward(&self, x: &[Tensor]) -> Result<Tensor> {
        ops::gather(&x[0], &self.idx)
    }
    fn backward(&self, _x: &[Tensor], dy: &Tensor) -> Result<Vec<Tensor>> {
        Ok(vec![ops::scatter_add(dy, &self.idx, self.n)?])
    }
    fn sample_inputs(&self, rng: &mut Rng) -> Vec<Tensor> {
        vec![random_tensor(rng, &[self.n, self.c])]
    }
}

/// Every primitive op in this module, at small fixed shapes.
pub fn primitive_registry() -> Vec<Box<dyn DiffOp>> {
    let mut v: Vec<Box<dyn DiffOp>> = vec![Box::new(MatmulOp { m: 3, k: 4, n: 5 })];
    for kind in [
        Elementwise::Add,
        Elementwise::Sub,
        Elementwise::Mul,
        Elementwise::Relu,
        Elementwise::Scale(-2.5),
    ] {
        v.push(Box::new(ElementwiseOp { kind, shape: vec![4, 3] }));
    }
    for kind in ReduceKind::ALL {
        for axis in 0..3 {
            v.push(Box::new(ReduceOp { kind, shape: vec![3, 4, 2], axis }));
        }
    }
    v.push(Box::new(GatherOp {
        n: 5,
        c: 3,
        idx: Indices::new(3, 4, vec![0, 1, 1, 4, 2, 2, 2, 0, 4, 3, 1, 0]).expect("static shape"),
    }));
    v
}

/// Convenience for reporting: first failing report, if any.
pub fn first_failure(reports: &[GradReport]) -> Option<&GradReport> {
    reports.iter().find(|r| !r.pass)
}

impl GradReport {
    pub fn into_result(self) -> Result<Self> {
        if self.pass {
            Ok(self)
        } else {
            Err(Error::NonFinite(format!(
                "{} failed gradient check: max rel err {:.3e} at {:?} {}",
                self.op,
                self.max_rel_error,
                self.worst,
                self.failure.clone().unwrap_or_default()
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Constant;
    impl DiffOp for Constant {
        fn name(&self) -> String {
            "constant".into()
        }
        fn forward(&self, _x: &[Tensor]) -> Result<Tensor> {
            Ok(Tensor::full([3], 2.0))
        }
        fn backward(&self, x: &[Tensor], _dy: &Tensor) -> Result<Vec<Tensor>> {
            Ok(vec![x[0].zeros_like()])
        }
        fn sample_inputs(&self, rng: &mut Rng) -> Vec<Tensor> {
            vec![random_tensor(rng, &[4])]
        }
    }

    /// Relu whose backward forgets the mask: a negative control.
    struct BrokenRelu;
    impl DiffOp for BrokenRelu {
        fn name(&self) -> String {
            "broken_relu".into()
        }
        fn forward(&self, x: &[Tensor]) -> Result<Tensor> {
            Ok(ops::relu(&x[0]))
        }
        fn backward(&self, _x: &[Tensor], dy: &Tensor) -> Result<Vec<Tensor>> {
            Ok(vec![dy.clone()])
        }
        fn sample_inputs(&self, rng: &mut Rng) -> Vec<Tensor> {
            vec![random_tensor(rng, &[16])]
        }
        fn kink_signature(&self, x: &[Tensor]) -> Vec<u64> {
            relu_signature(x[0].data())
        }
    }

    #[test]
    fn linear_map_is_near_exact() {
        // y = W x with W as a fixed input to matmul
        let op = MatmulOp { m: 4, k: 3, n: 1 };
        let inputs = op.sample_inputs(&mut stream(1, "t").rng());
        let r = gradient_check(&op, &inputs, DEFAULT_STEP, DEFAULT_TOL);
        assert!(r.pass);
        assert!(r.max_rel_error < 1e-10, "{}", r.max_rel_error);
    }

    #[test]
    fn constant_function_passes() {
        let r = certify(&Constant, &[0, 1], DEFAULT_STEP, DEFAULT_TOL);
        assert!(r.iter().all(|r| r.pass && r.max_rel_error == 0.0));
    }

    #[test]
    fn all_primitives_pass_on_five_seeds() {
        for op in primitive_registry() {
            for r in certify(op.as_ref(), &[0, 1, 2, 3, 4], DEFAULT_STEP, DEFAULT_TOL) {
                assert!(r.pass, "{r:?}");
                assert_eq!(r.skipped, 0, "{r:?}");
            }
        }
    }

    #[test]
    fn corrupted_backward_is_caught() {
        let r = certify(&BrokenRelu, &[0], DEFAULT_STEP, DEFAULT_TOL);
        assert!(!r[0].pass);
    }

    #[test]
    fn non_finite_forward_is_reported() {
        struct Nan;
        impl DiffOp for Nan {
            fn name(&self) -> String {
                "nan".into()
            }
            fn forward(&self, _x: &[Tensor]) -> Result<Tensor> {
                Ok(Tensor::full([1], f64::NAN))
            }
            fn backward(&self, x: &[Tensor], _dy: &Tensor) -> Result<Vec<Tensor>> {
                Ok(vec![x[0].zeros_like()])
            }
            fn sample_inputs(&self, _rng: &mut Rng) -> Vec<Tensor> {
                vec![Tensor::zeros([1])]
            }
        }
        let r = gradient_check(&Nan, &[Tensor::zeros([1])], DEFAULT_STEP, DEFAULT_TOL);
        assert!(!r.pass);
        assert!(r.failure.unwrap().contains("flat index 0"));
    }
}
