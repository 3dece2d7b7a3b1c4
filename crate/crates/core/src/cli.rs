//! The commands behind the `fewshot` binary.
//!
//! Every artifact a command writes carries the resolved configuration, so a
//! result file is enough to reproduce itself.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::config::{ConfigMap, RunConfig};
use crate::data::write_csv;
use crate::engine::{self, DataSource, ResultRecord};
use crate::error::{Error, Result};
use crate::model::{load_checkpoint, save_checkpoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Synth,
    Train,
    Eval,
    Sweep,
    Gradcheck,
}

#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: Command,
    pub config: Option<PathBuf>,
    pub overrides: Vec<String>,
    pub out: PathBuf,
}

/// What a command produced. `success` is false when the command ran to the
/// end but its postcondition does not hold (failed gradient check, failed
/// sweep cells).
#[derive(Debug, Clone)]
pub struct Outcome {
    pub success: bool,
    pub artifacts: Vec<PathBuf>,
    pub summary: String,
}

pub fn run(inv: &Invocation) -> Result<Outcome> {
    let map = ConfigMap::resolve(inv.config.as_deref(), &inv.overrides)?;
    let cfg = RunConfig::from_map(&map)?;
    fs::create_dir_all(&inv.out)?;
    match inv.command {
        Command::Synth => synth(&map, &cfg, &inv.out),
        Command::Train => train(&map, &cfg, &inv.out),
        Command::Eval => eval(&map, &cfg, &inv.out),
        Command::Sweep => sweep(&map, &cfg, &inv.out),
        Command::Gradcheck => gradcheck(&map, &cfg, &inv.out),
    }
}

fn resolve(out: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        out.join(p)
    }
}

fn config_json(map: &ConfigMap) -> serde_json::Value {
    json!({ "config": map.as_map() })
}

fn write_lines(path: &Path, lines: &[serde_json::Value]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    for l in lines {
        writeln!(f, "{l}")?;
    }
    Ok(())
}

fn write_table(path: &Path, records: &[ResultRecord]) -> Result<String> {
    let mut table = String::from(ResultRecord::TSV_HEADER);
    table.push('\n');
    for r in records {
        table.push_str(&r.to_tsv());
        table.push('\n');
    }
    fs::write(path, &table)?;
    Ok(table)
}

fn synth(map: &ConfigMap, cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    if !matches!(cfg.data, DataSource::Synthetic(_)) {
        return Err(Error::Config("`synth` needs data.kind = synthetic".into()));
    }
    let d = cfg.load_dataset()?;
    let path = out.join("dataset.csv");
    write_csv(&d, &path, Some(&map.to_text()))?;
    Ok(Outcome {
        success: true,
        summary: format!("wrote {} samples in {} classes to {}", d.num_samples(), d.num_classes(), path.display()),
        artifacts: vec![path],
    })
}

fn train(map: &ConfigMap, cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let (train_set, val_set, _) = cfg.load_splits()?;
    let outcome = engine::train(&cfg.train, &train_set, &val_set)?;
    let ckpt = resolve(out, &cfg.checkpoint);
    save_checkpoint(&ckpt, &outcome.params, &map.to_text())?;

    let history_path = out.join("history.jsonl");
    let mut lines = vec![config_json(map)];
    for p in &outcome.history.points {
        lines.push(json!({ "validation": p }));
    }
    lines.push(json!({ "best_val_episode": outcome.history.best_val_episode }));
    write_lines(&history_path, &lines)?;

    let best = outcome
        .history
        .points
        .iter()
        .find(|p| Some(p.episode) == outcome.history.best_val_episode);
    let summary = match best {
        Some(p) => format!(
            "best validation accuracy {:.4} ± {:.4} at episode {}",
            p.val.accuracy.mean, p.val.accuracy.ci95, p.episode
        ),
        None => "no training episodes; saved the initial model".into(),
    };
    Ok(Outcome { success: true, artifacts: vec![ckpt, history_path], summary })
}

fn eval(map: &ConfigMap, cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let ckpt = load_checkpoint(resolve(out, &cfg.checkpoint))?;
    let (_, _, test_set) = cfg.load_splits()?;
    if ckpt.params.input_dim() != test_set.dim {
        return Err(Error::DimensionMismatch { expected: ckpt.params.input_dim(), found: test_set.dim });
    }
    let metrics = engine::evaluate(&ckpt.params, &test_set, &cfg.train.episode, cfg.eval_episodes, cfg.eval_seed)?;
    let record = ResultRecord::new(cfg.train.loss.kind, &cfg.train.episode, &metrics, cfg.eval_seed);

    let results = resolve(out, &cfg.results);
    let mut cfg_line = config_json(map);
    cfg_line["checkpoint_config"] = json!(ckpt.config);
    write_lines(&results, &[cfg_line, json!({ "record": record })])?;
    let table_path = results.with_extension("tsv");
    let table = write_table(&table_path, std::slice::from_ref(&record))?;
    Ok(Outcome { success: true, artifacts: vec![results, table_path], summary: table })
}

fn sweep(map: &ConfigMap, cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let (train_set, val_set, test_set) = cfg.load_splits()?;
    let cells = engine::sweep(
        &cfg.train,
        &cfg.sweep_ways,
        &cfg.sweep_shots,
        &train_set,
        &val_set,
        &test_set,
        cfg.eval_episodes,
        cfg.eval_seed,
    );
    let mut lines = vec![config_json(map)];
    let mut records = Vec::new();
    let mut failed = 0;
    for cell in &cells {
        match cell.record(cfg.eval_seed, cfg.train.episode.query) {
            Some(r) => {
                lines.push(json!({ "record": r }));
                records.push(r);
            }
            None => {
                failed += 1;
                lines.push(json!({
                    "failed": { "loss": cell.loss, "way": cell.way, "shot": cell.shot,
                                "error": cell.outcome.as_ref().err() }
                }));
            }
        }
    }
    let results = resolve(out, &cfg.results);
    write_lines(&results, &lines)?;
    let table_path = results.with_extension("tsv");
    let mut summary = write_table(&table_path, &records)?;
    if failed > 0 {
        summary.push_str(&format!("{failed} of {} cells failed; see {}\n", cells.len(), results.display()));
    }
    Ok(Outcome { success: failed == 0, artifacts: vec![results, table_path], summary })
}

fn gradcheck(map: &ConfigMap, cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let report = engine::grad_check(cfg.train.loss.kind, cfg.gradcheck_trials, cfg.gradcheck_seed)?;
    let path = out.join("gradcheck.json");
    let body = json!({ "config": map.as_map(), "report": report });
    fs::write(&path, serde_json::to_string_pretty(&body).expect("serializable") + "\n")?;
    let summary = format!(
        "{}: similarity max rel err {:.3e} (< {:.0e}), parameter max rel err {:.3e} (< {:.0e}): {}",
        report.loss,
        report.sim_max_rel_error,
        report.sim_threshold,
        report.param_max_rel_error,
        report.param_threshold,
        if report.passed { "PASS" } else { "FAIL" }
    );
    Ok(Outcome { success: report.passed, artifacts: vec![path], summary })
}
