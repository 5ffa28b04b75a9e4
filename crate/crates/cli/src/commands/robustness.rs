use rpnet_core::data::{add_noise, apply_rigid, Dataset, Perturbation};
use rpnet_core::geometry::PointCloud;
use rpnet_core::models::{evaluate, RpNet};
use rpnet_core::rng::StreamKey;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::setup::{csv_writer, flush, load_datasets, load_model};

pub const ROBUSTNESS_HEADER: [&str; 4] = ["perturbation", "magnitude", "accuracy", "miou"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessRow {
    pub perturbation: String,
    pub magnitude: f64,
    pub accuracy: f64,
    pub miou: f64,
}

fn perturbed(data: &Dataset, mut f: impl FnMut(usize, &PointCloud) -> rpnet_core::Result<PointCloud>) -> CliResult<Dataset> {
    let clouds = data.clouds.iter().enumerate().map(|(i, c)| f(i, c)).collect::<rpnet_core::Result<_>>()?;
    Ok(Dataset { clouds, labels: data.labels.clone() })
}

/// Score `model` on `test` under each perturbation. Rows come in a fixed
/// order: original, perm, translate (+, −), each rotation, each noise level.
pub fn robustness_rows(model: &RpNet, test: &Dataset, cfg: &RunConfig) -> CliResult<Vec<RobustnessRow>> {
    let rc = &cfg.robustness;
    let mut rows = Vec::new();
    let mut push = |name: &str, magnitude: f64, data: &Dataset| -> CliResult<()> {
        let r = evaluate(model, data, cfg.votes, cfg.seed)?;
        rows.push(RobustnessRow { perturbation: name.into(), magnitude, accuracy: r.accuracy, miou: r.miou });
        Ok(())
    };
    push("original", 0.0, test)?;
    let key = StreamKey::root(cfg.seed);
    let perm_seed = |i: usize| cfg.seed.wrapping_mul(0x9E37_79B9).wrapping_add(i as u64);
    push("perm", 0.0, &perturbed(test, |i, c| apply_rigid(c, &Perturbation::Permute { seed: perm_seed(i) }))?)?;
    for sign in [1.0, -1.0] {
        let offset = [sign * rc.translate; 3];
        push("translate", sign * rc.translate, &perturbed(test, |_, c| apply_rigid(c, &Perturbation::Translate { offset }))?)?;
    }
    for &degrees in &rc.rotations_deg {
        push("rotate_y", degrees, &perturbed(test, |_, c| apply_rigid(c, &Perturbation::RotateY { degrees }))?)?;
    }
    for (s, &sigma) in rc.noise_sigmas.iter().enumerate() {
        let k = key.named("noise").child(s as u64);
        let data = perturbed(test, |i, c| add_noise(c, sigma, rc.noise_fraction, &mut k.child(i as u64).rng()))?;
        push("noise", sigma, &data)?;
    }
    Ok(rows)
}

pub fn cmd_robustness(cfg: &RunConfig) -> CliResult<Vec<RobustnessRow>> {
    let checkpoint = cfg.checkpoint_path();
    cfg.save()?;
    let model = load_model(cfg, &checkpoint)?;
    let (_, test) = load_datasets(cfg, model.spec().num_points)?;
    let rows = robustness_rows(&model, &test, cfg)?;

    let path = cfg.out_dir.join("robustness.csv");
    let mut w = csv_writer(&path, &ROBUSTNESS_HEADER)?;
    for r in &rows {
        w.serialize(r)?;
    }
    flush(w, &path)?;

    println!("{:<12} {:>9} {:>9} {:>9}", "perturbation", "magnitude", "accuracy", "miou");
    for r in &rows {
        println!("{:<12} {:>9.3} {:>9.4} {:>9.4}", r.perturbation, r.magnitude, r.accuracy, r.miou);
    }
    if rows[1].accuracy != rows[0].accuracy || rows[1].miou != rows[0].miou {
        return Err(CliError::Check("permuted input scored differently from the original".into()));
    }
    Ok(rows)
}
