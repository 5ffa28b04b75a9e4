use log::info;
use rpnet_core::data::Task;
use rpnet_core::models::RpNet;
use rpnet_core::relation::{GeometricRelationSpec, SemanticCombinator};
use rpnet_core::tensor::ReduceKind;
use serde::Serialize;

use crate::commands::train::fit;
use crate::config::{AblationAxis, RunConfig};
use crate::error::{CliError, CliResult};
use crate::setup::{flush, load_datasets, model_spec};

/// First line of `ablation.csv`; the header row follows it.
pub const ABLATION_NOTE: &str = "# toy-scale values; not comparable to published magnitudes";
pub const ABLATION_HEADER: [&str; 12] = [
    "axis",
    "model",
    "l2",
    "l1",
    "diff",
    "abs",
    "semantic",
    "aggregation",
    "k",
    "params",
    "test_accuracy",
    "test_miou",
];

/// One row of the sweep: which relation terms, combinator, pooling and
/// number of attention maps the blocks use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Variant {
    pub axis: &'static str,
    pub model: &'static str,
    pub geo: GeometricRelationSpec,
    pub sem: SemanticCombinator,
    pub agg: ReduceKind,
    pub k: usize,
}

const L2: GeometricRelationSpec = GeometricRelationSpec::l2_only();
const L2_L1: GeometricRelationSpec = GeometricRelationSpec { use_l2: true, use_l1: true, use_diff: false, use_abs: false };
const ALL: GeometricRelationSpec = GeometricRelationSpec::all();

fn v(axis: &'static str, model: &'static str, geo: GeometricRelationSpec, sem: SemanticCombinator, agg: ReduceKind, k: usize) -> Variant {
    Variant { axis, model, geo, sem, agg, k }
}

/// Relation, combinator and pooling rows use a single attention map, so
/// that the cross-channel rows are the only ones that change `K`.
pub fn variants(axis: AblationAxis) -> Vec<Variant> {
    use ReduceKind::{Max, Mean, Sum};
    use SemanticCombinator as S;
    match axis {
        AblationAxis::Geometric => vec![
            v("geometric", "A", L2, S::None, Max, 1),
            v("geometric", "B", L2_L1, S::None, Max, 1),
            v("geometric", "C", ALL, S::None, Max, 1),
        ],
        AblationAxis::Semantic => vec![
            v("semantic", "D", ALL, S::Summation, Max, 1),
            v("semantic", "E", ALL, S::Subtraction, Max, 1),
            v("semantic", "F", ALL, S::Concatenation, Max, 1),
            v("semantic", "G", ALL, S::Hadamard, Max, 1),
        ],
        AblationAxis::Aggregation => vec![
            v("aggregation", "max", ALL, S::Summation, Max, 1),
            v("aggregation", "mean", ALL, S::Summation, Mean, 1),
            v("aggregation", "sum", ALL, S::Summation, Sum, 1),
        ],
        AblationAxis::CrossChannel => vec![
            v("cross_channel", "K1", ALL, S::Summation, Max, 1),
            v("cross_channel", "K4", ALL, S::Summation, Max, 4),
        ],
        AblationAxis::All => [AblationAxis::Geometric, AblationAxis::Semantic, AblationAxis::Aggregation, AblationAxis::CrossChannel]
            .into_iter()
            .flat_map(variants)
            .collect(),
    }
}

/// The variants the reference ablation found best on each axis (summation
/// and subtraction tie there).
pub fn reference_best(axis: &str) -> &'static [&'static str] {
    match axis {
        "geometric" => &["C"],
        "semantic" => &["D", "E"],
        "aggregation" => &["max"],
        _ => &["K4"],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub axis: String,
    pub model: String,
    pub l2: bool,
    pub l1: bool,
    pub diff: bool,
    pub abs: bool,
    pub semantic: String,
    pub aggregation: String,
    pub k: usize,
    pub params: usize,
    pub test_accuracy: f64,
    pub test_miou: f64,
}

pub fn cmd_ablate(cfg: &RunConfig) -> CliResult<Vec<AblationRow>> {
    if cfg.dataset.task() != Task::Segment {
        return Err(CliError::Config("ablation trains a segmentation model on a segmentation dataset".into()));
    }
    cfg.save()?;
    let base = model_spec(cfg)?;
    let (train, test) = load_datasets(cfg, base.num_points)?;

    let path = cfg.out_dir.join("ablation.csv");
    let file = std::fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
    let mut raw = std::io::BufWriter::new(file);
    std::io::Write::write_all(&mut raw, format!("{ABLATION_NOTE}\n").as_bytes()).map_err(|e| CliError::io(&path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(raw);
    w.write_record(ABLATION_HEADER)?;

    let mut rows = Vec::new();
    for var in variants(cfg.ablate.axis) {
        let mut spec = base.clone();
        spec.gra.geo = var.geo;
        spec.gra.sem = var.sem;
        spec.gra.agg = var.agg;
        spec.gra.k = var.k;
        let mut model = RpNet::new(spec, cfg.seed)?;
        info!("ablation {} {}: {} parameters", var.axis, var.model, model.count_params());
        let (_, r) = fit(&mut model, &train, &test, cfg, |_| Ok(()))?;
        let row = AblationRow {
            axis: var.axis.into(),
            model: var.model.into(),
            l2: var.geo.use_l2,
            l1: var.geo.use_l1,
            diff: var.geo.use_diff,
            abs: var.geo.use_abs,
            semantic: var.sem.short_name().into(),
            aggregation: var.agg.name().into(),
            k: var.k,
            params: model.count_params(),
            test_accuracy: r.accuracy,
            test_miou: r.miou,
        };
        w.serialize(&row)?;
        w.flush().map_err(|e| CliError::io(&path, e))?;
        rows.push(row);
    }
    flush(w, &path)?;

    println!("{ABLATION_NOTE}");
    println!("{:<14} {:<6} {:<24} {:<5} {:<5} {:>2} {:>9} {:>9}", "axis", "model", "geometric", "sem", "agg", "K", "accuracy", "miou");
    for r in &rows {
        let geo: Vec<&str> = [(r.l2, "l2"), (r.l1, "l1"), (r.diff, "diff"), (r.abs, "abs")]
            .iter()
            .filter(|(on, _)| *on)
            .map(|&(_, n)| n)
            .collect();
        println!(
            "{:<14} {:<6} {:<24} {:<5} {:<5} {:>2} {:>9.4} {:>9.4}",
            r.axis,
            r.model,
            geo.join("+"),
            r.semantic,
            r.aggregation,
            r.k,
            r.test_accuracy,
            r.test_miou
        );
    }
    let mut axes: Vec<&str> = rows.iter().map(|r| r.axis.as_str()).collect();
    axes.dedup();
    for axis in axes {
        let best = rows
            .iter()
            .filter(|r| r.axis == axis)
            .fold(None::<&AblationRow>, |b, r| match b {
                Some(b) if b.test_miou >= r.test_miou => Some(b),
                _ => Some(r),
            })
            .expect("axis has rows");
        let reference = reference_best(axis);
        let agree = if reference.contains(&best.model.as_str()) { "same" } else { "different" };
        println!(
            "{axis}: best on toy data {} (mIoU {:.4}); reference best {}; direction {agree}",
            best.model,
            best.test_miou,
            reference.join("/")
        );
    }
    Ok(rows)
}
