//! Datasets and models from a [`RunConfig`].

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rpnet_core::data::io::{io_read, Format};
use rpnet_core::data::{generate_toy, resample, Dataset, Task};
use rpnet_core::models::{build_preset, ModelSpec, RpNet};
use rpnet_core::nn::{read_checkpoint, Params};

use crate::config::{DatasetConfig, FileDataset, FileEntry, RunConfig};
use crate::error::{CliError, CliResult};

pub fn model_spec(cfg: &RunConfig) -> CliResult<ModelSpec> {
    let spec = build_preset(&cfg.preset, cfg.dataset.num_classes(), &cfg.model_overrides()?)?;
    if spec.task != cfg.dataset.task() {
        return Err(CliError::Config(format!(
            "preset {} is a {:?} model but the dataset is {:?}",
            cfg.preset,
            spec.task,
            cfg.dataset.task()
        )));
    }
    if let DatasetConfig::Toy(t) = &cfg.dataset {
        if t.points_per_cloud != spec.num_points {
            return Err(CliError::Config(format!(
                "toy clouds have {} points but the model expects {}",
                t.points_per_cloud, spec.num_points
            )));
        }
    }
    Ok(spec)
}

/// `(train, test)`. File clouds are resampled to `num_points`.
pub fn load_datasets(cfg: &RunConfig, num_points: usize) -> CliResult<(Dataset, Dataset)> {
    let (train, test) = match &cfg.dataset {
        DatasetConfig::Toy(t) => generate_toy(t)?,
        DatasetConfig::Files(f) => {
            // Per-file resampling seeds: train files count up from the run
            // seed, test files from the run seed plus 2^32.
            (
                load_split(f, &f.train, num_points, cfg.seed)?,
                load_split(f, &f.test, num_points, cfg.seed.wrapping_add(1 << 32))?,
            )
        }
    };
    if train.is_empty() || test.is_empty() {
        return Err(CliError::Config(format!("dataset split is empty: {} train / {} test clouds", train.len(), test.len())));
    }
    Ok((train, test))
}

fn load_split(f: &FileDataset, entries: &[FileEntry], num_points: usize, seed: u64) -> CliResult<Dataset> {
    let segment = f.task == Task::Segment;
    let mut data = Dataset { clouds: Vec::new(), labels: Vec::new() };
    for (i, e) in entries.iter().enumerate() {
        let format = f.format.unwrap_or_else(|| Format::from_path(&e.path));
        let cloud = io_read(&e.path, format, segment)?;
        if segment {
            if let Some(&bad) = cloud.labels().unwrap_or_default().iter().find(|&&l| l >= f.num_classes) {
                return Err(CliError::Config(format!("{}: label {bad} >= {} classes", e.path.display(), f.num_classes)));
            }
        } else {
            match e.label {
                Some(l) if l < f.num_classes => data.labels.push(l),
                Some(l) => return Err(CliError::Config(format!("{}: label {l} >= {} classes", e.path.display(), f.num_classes))),
                None => return Err(CliError::Config(format!("{}: classification entry needs a label", e.path.display()))),
            }
        }
        data.clouds.push(resample(&cloud, num_points, seed.wrapping_add(i as u64))?);
    }
    Ok(data)
}

/// Rebuild the configured model and load weights from `path`. A checkpoint
/// written for a different architecture is a config error.
pub fn load_model(cfg: &RunConfig, path: &Path) -> CliResult<RpNet> {
    let mut model = RpNet::new(model_spec(cfg)?, cfg.seed)?;
    let params = read_checkpoint(path)?;
    model
        .params
        .load_parameters(&params)
        .map_err(|e| CliError::Config(format!("checkpoint {} does not fit preset {}: {e}", path.display(), cfg.preset)))?;
    Ok(model)
}

/// CSV writer with a fixed header, written even when no rows follow.
pub fn csv_writer(path: &Path, header: &[&str]) -> CliResult<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(BufWriter::new(file));
    w.write_record(header)?;
    Ok(w)
}

pub fn flush<W: std::io::Write>(mut w: csv::Writer<W>, path: &Path) -> CliResult<()> {
    w.flush().map_err(|e| CliError::io(path, e))
}
