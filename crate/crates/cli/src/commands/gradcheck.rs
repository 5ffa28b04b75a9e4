use rpnet_core::models::ops::model_registry;
use rpnet_core::nn::ops::nn_registry;
use rpnet_core::relation::ops::gra_registry;
use rpnet_core::tensor::gradcheck::{certify, primitive_registry, DiffOp};
use serde::Serialize;

use crate::config::{GradcheckConfig, GradcheckScope, RunConfig};
use crate::error::{CliError, CliResult};
use crate::setup::{csv_writer, flush};

pub const GRADCHECK_HEADER: [&str; 8] = ["scope", "op", "seed", "checked", "skipped", "max_rel_error", "pass", "failure"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckRow {
    pub scope: String,
    pub op: String,
    pub seed: u64,
    pub checked: usize,
    pub skipped: usize,
    pub max_rel_error: f64,
    pub pass: bool,
    pub failure: String,
}

/// Every registered op for `scope`, grouped by scope name.
pub fn registry(scope: GradcheckScope) -> Vec<(&'static str, Vec<Box<dyn DiffOp>>)> {
    let mut v = Vec::new();
    if matches!(scope, GradcheckScope::Primitives | GradcheckScope::All) {
        let mut ops = primitive_registry();
        ops.extend(nn_registry());
        v.push(("primitives", ops));
    }
    if matches!(scope, GradcheckScope::Gra | GradcheckScope::All) {
        v.push(("gra", gra_registry()));
    }
    if matches!(scope, GradcheckScope::Model | GradcheckScope::All) {
        v.push(("model", model_registry()));
    }
    v
}

pub fn check_ops(scope: &str, ops: &[Box<dyn DiffOp>], gc: &GradcheckConfig) -> Vec<GradcheckRow> {
    let mut rows = Vec::new();
    for op in ops {
        for (r, &seed) in certify(op.as_ref(), &gc.seeds, gc.step, gc.tol).into_iter().zip(&gc.seeds) {
            rows.push(GradcheckRow {
                scope: scope.to_string(),
                op: r.op,
                seed,
                checked: r.checked,
                skipped: r.skipped,
                max_rel_error: r.max_rel_error,
                pass: r.pass,
                failure: r.failure.unwrap_or_default(),
            });
        }
    }
    rows
}

/// Writes `gradcheck.csv` and returns the rows; any failing row turns into
/// [`CliError::Check`] after the file is written.
pub fn write_gradcheck(cfg: &RunConfig, rows: &[GradcheckRow]) -> CliResult<()> {
    let path = cfg.out_dir.join("gradcheck.csv");
    let mut w = csv_writer(&path, &GRADCHECK_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    flush(w, &path)?;

    println!("{:<11} {:<44} {:>5} {:>12} {:>6}", "scope", "op", "seed", "max_rel_err", "result");
    for r in rows {
        let status = if r.pass { "ok" } else { "FAIL" };
        println!("{:<11} {:<44} {:>5} {:>12.3e} {:>6}", r.scope, r.op, r.seed, r.max_rel_error, status);
    }
    let failed: Vec<&GradcheckRow> = rows.iter().filter(|r| !r.pass).collect();
    if let Some(first) = failed.first() {
        return Err(CliError::Check(format!(
            "{} of {} gradient checks failed, first: {} seed {} ({:.3e}) {}",
            failed.len(),
            rows.len(),
            first.op,
            first.seed,
            first.max_rel_error,
            first.failure
        )));
    }
    Ok(())
}

pub fn cmd_gradcheck(cfg: &RunConfig) -> CliResult<Vec<GradcheckRow>> {
    if cfg.gradcheck.seeds.is_empty() {
        return Err(CliError::Config("gradcheck needs at least one seed".into()));
    }
    cfg.save()?;
    let mut rows = Vec::new();
    for (scope, ops) in registry(cfg.gradcheck.scope) {
        rows.extend(check_ops(scope, &ops, &cfg.gradcheck));
    }
    write_gradcheck(cfg, &rows)?;
    Ok(rows)
}
