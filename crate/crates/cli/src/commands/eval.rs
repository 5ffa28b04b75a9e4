use rpnet_core::data::Task;
use rpnet_core::models::{evaluate, EvalResult};

use crate::config::RunConfig;
use crate::error::CliResult;
use crate::setup::{csv_writer, flush, load_datasets, load_model};

pub const EVAL_HEADER: [&str; 4] = ["split", "votes", "accuracy", "miou"];

pub fn cmd_eval(cfg: &RunConfig) -> CliResult<EvalResult> {
    let checkpoint = cfg.checkpoint_path();
    cfg.save()?;
    let model = load_model(cfg, &checkpoint)?;
    let (_, test) = load_datasets(cfg, model.spec().num_points)?;
    let r = evaluate(&model, &test, cfg.votes, cfg.seed)?;

    let path = cfg.out_dir.join("eval.csv");
    let mut w = csv_writer(&path, &EVAL_HEADER)?;
    w.write_record(["test".to_string(), cfg.votes.to_string(), r.accuracy.to_string(), r.miou.to_string()])?;
    flush(w, &path)?;

    println!("checkpoint {} ({} votes)", checkpoint.display(), cfg.votes);
    println!("{:<10} {:>10.4}", "accuracy", r.accuracy);
    if model.task() == Task::Segment {
        println!("{:<10} {:>10.4}", "miou", r.miou);
    }
    Ok(r)
}
