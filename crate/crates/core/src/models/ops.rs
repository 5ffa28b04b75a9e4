//! Whole-network gradient checking.

use super::net::{RpNet, RpNetParams};
use super::spec::{GraTemplate, HeadSpec, InputFeatures, ModelSpec, Operator, StageSpec};
use crate::data::Task;
use rand::Rng as _;

use crate::error::Result;
use crate::geometry::PointCloud;
use crate::nn::dropout::Mode;
use crate::nn::Params;
use crate::rng::{stream, Rng};
use crate::tensor::gradcheck::{random_tensor, DiffOp};
use crate::tensor::Tensor;

/// A network as a [`DiffOp`] whose inputs are all of its parameters, in
/// visiting order; the point cloud and FPS seed are fixed.
pub struct ModelOp {
    label: String,
    model: RpNet,
    cloud: PointCloud,
}

impl ModelOp {
    pub fn new(label: &str, spec: ModelSpec, seed: u64) -> Result<Self> {
        let model = RpNet::new(spec.clone(), seed)?;
        let mut rng = stream(seed, "model-op-cloud").rng();
        let coords = random_tensor(&mut rng, &[spec.num_points, 3]);
        Ok(ModelOp { label: label.into(), model, cloud: PointCloud::new(coords, None, None)? })
    }

    fn with_params(&self, inputs: &[Tensor]) -> RpNet {
        let mut m = self.model.clone();
        let mut it = inputs.iter();
        m.params.visit_mut("", &mut |_, t| *t = it.next().expect("parameter count").clone());
        m
    }

    fn run(&self, inputs: &[Tensor]) -> Result<(RpNet, Tensor, super::net::ForwardCache)> {
        let m = self.with_params(inputs);
        let mut rng = stream(0, "unused").rng();
        let (y, cache) = m.forward_cached(&self.cloud, 0, Mode::Eval, &mut rng)?;
        Ok((m, y, cache))
    }
}

impl DiffOp for ModelOp {
    fn name(&self) -> String {
        format!("model[{}]", self.label)
    }

    fn forward(&self, inputs: &[Tensor]) -> Result<Tensor> {
        Ok(self.run(inputs)?.1)
    }

    fn backward(&self, inputs: &[Tensor], grad_out: &Tensor) -> Result<Vec<Tensor>> {
        let (m, _, cache) = self.run(inputs)?;
        let g: RpNetParams = m.backward(&cache, grad_out)?;
        let mut out = Vec::new();
        g.visit("", &mut |_, t| out.push(t.clone()));
        Ok(out)
    }

    /// Fresh weights from the model's own initializer; uniform `[-1, 1]`
    /// weights blow activations up through the stacked layers and leave the
    /// finite differences dominated by round-off.
    fn sample_inputs(&self, rng: &mut Rng) -> Vec<Tensor> {
        let m = RpNet::new(self.model.spec().clone(), rng.random()).expect("spec validated at construction");
        let mut out = Vec::new();
        m.params.visit("", &mut |_, t| out.push(t.clone()));
        out
    }

    fn kink_signature(&self, inputs: &[Tensor]) -> Vec<u64> {
        self.run(inputs).map(|(_, _, c)| c.kink_signature()).unwrap_or_default()
    }
}

fn tiny(task: Task) -> ModelSpec {
    let gra = GraTemplate { m_hidden: Some(6), ..GraTemplate::default() };
    match task {
        Task::Classify => ModelSpec {
            name: "tiny-classify".into(),
            task,
            num_points: 24,
            num_classes: 3,
            input: InputFeatures::Xyz,
            stem_channels: 16,
            stages: vec![StageSpec::skip(8, &[4, 6], 16), StageSpec::group_all(16)],
            decoder: Vec::new(),
            head: HeadSpec { hidden: vec![16, 8], dropout: 0.5 },
            gra,
            operator: Operator::Gra,
        },
        Task::Segment => ModelSpec {
            name: "tiny-segment".into(),
            task,
            num_points: 24,
            num_classes: 2,
            input: InputFeatures::Xyz,
            stem_channels: 16,
            stages: vec![StageSpec::skip(8, &[4], 16), StageSpec::residual(8, 4, 16), StageSpec::skip(4, &[4], 32)],
            decoder: vec![16, 16],
            head: HeadSpec { hidden: Vec::new(), dropout: 0.5 },
            gra,
            operator: Operator::Gra,
        },
    }
}

/// Small classification and segmentation networks (multi-scale, residual,
/// group-all and decoder paths all present).
pub fn model_registry() -> Vec<Box<dyn DiffOp>> {
    [Task::Classify, Task::Segment]
        .into_iter()
        .map(|t| {
            let spec = tiny(t);
            Box::new(ModelOp::new(&spec.name.clone(), spec, 7).expect("static spec")) as Box<dyn DiffOp>
        })
        .collect()
}
