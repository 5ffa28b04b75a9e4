use std::path::PathBuf;

use log::info;
use rpnet_core::data::{Dataset, Task};
use rpnet_core::models::{evaluate, train_epoch, EvalResult, NearestCentroid, RpNet, TrainConfig};
use rpnet_core::nn::{write_checkpoint, Adam, Params};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::setup::{csv_writer, flush, load_datasets, model_spec};

pub const METRICS_HEADER: [&str; 5] = ["epoch", "learning_rate", "train_loss", "test_accuracy", "test_miou"];
pub const BASELINE_HEADER: [&str; 2] = ["method", "test_accuracy"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub test_accuracy: f64,
    pub test_miou: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub metrics: Vec<EpochMetrics>,
    /// Initial weights' scores when `epochs` is zero.
    pub final_eval: EvalResult,
    pub baseline_accuracy: Option<f64>,
    pub checkpoint: PathBuf,
    pub metrics_csv: PathBuf,
}

pub fn train_config(cfg: &RunConfig) -> TrainConfig {
    TrainConfig { epochs: cfg.epochs, batch_size: cfg.batch_size, lr: cfg.lr, augment: cfg.augment, seed: cfg.seed }
}

/// Train `model` in place, calling `on_epoch` after each epoch's evaluation.
pub fn fit(
    model: &mut RpNet,
    train: &Dataset,
    test: &Dataset,
    cfg: &RunConfig,
    mut on_epoch: impl FnMut(&EpochMetrics) -> CliResult<()>,
) -> CliResult<(Vec<EpochMetrics>, EvalResult)> {
    let tc = train_config(cfg);
    let mut opt = Adam::new();
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut last = None;
    for epoch in 0..cfg.epochs {
        let train_loss = train_epoch(model, &mut opt, train, epoch, &tc)?;
        let r = evaluate(model, test, 1, cfg.seed)?;
        let m = EpochMetrics {
            epoch,
            learning_rate: tc.lr.at_epoch(epoch),
            train_loss,
            test_accuracy: r.accuracy,
            test_miou: r.miou,
        };
        info!(
            "epoch {epoch}: lr {:.3e} loss {train_loss:.4} acc {:.4} miou {:.4}",
            m.learning_rate, r.accuracy, r.miou
        );
        on_epoch(&m)?;
        metrics.push(m);
        last = Some(r);
    }
    let final_eval = match last {
        Some(r) => r,
        None => evaluate(model, test, 1, cfg.seed)?,
    };
    Ok((metrics, final_eval))
}

pub fn cmd_train(cfg: &RunConfig) -> CliResult<TrainOutcome> {
    if cfg.batch_size == 0 {
        return Err(CliError::Config("batch_size must be positive".into()));
    }
    cfg.save()?;
    let spec = model_spec(cfg)?;
    let (train, test) = load_datasets(cfg, spec.num_points)?;
    let task = spec.task;
    let classes = spec.num_classes;
    let mut model = RpNet::new(spec, cfg.seed)?;
    info!("{} with {} parameters, {} train / {} test clouds", cfg.preset, model.count_params(), train.len(), test.len());

    let metrics_csv = cfg.out_dir.join("metrics.csv");
    let mut w = csv_writer(&metrics_csv, &METRICS_HEADER)?;
    let (metrics, final_eval) = fit(&mut model, &train, &test, cfg, |m| {
        w.serialize(m)?;
        w.flush().map_err(|e| CliError::io(&metrics_csv, e))
    })?;
    flush(w, &metrics_csv)?;

    let checkpoint = cfg.out_dir.join("checkpoint.rpnt");
    write_checkpoint(&checkpoint, &model.params.parameters())?;

    let baseline_accuracy = if task == Task::Classify {
        let nc = NearestCentroid::fit(&train, classes)?;
        let acc = nc.accuracy(&test);
        let path = cfg.out_dir.join("baseline.csv");
        let mut w = csv_writer(&path, &BASELINE_HEADER)?;
        w.write_record(["nearest_centroid".to_string(), acc.to_string()])?;
        w.write_record([cfg.preset.clone(), final_eval.accuracy.to_string()])?;
        flush(w, &path)?;
        Some(acc)
    } else {
        None
    };

    println!("{:<18} {:>10}", "metric", "value");
    println!("{:<18} {:>10.4}", "test_accuracy", final_eval.accuracy);
    if task == Task::Segment {
        println!("{:<18} {:>10.4}", "test_miou", final_eval.miou);
    }
    if let Some(b) = baseline_accuracy {
        println!("{:<18} {:>10.4}", "nearest_centroid", b);
    }
    Ok(TrainOutcome { metrics, final_eval, baseline_accuracy, checkpoint, metrics_csv })
}
