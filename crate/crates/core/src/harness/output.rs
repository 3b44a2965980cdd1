use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::runner::ExperimentOutcome;
use super::summary::ExperimentSummary;
use super::HarnessError;
use crate::rl::EpisodeRecord;

pub const RECORD_COLUMNS: [&str; 7] =
    ["realization", "episode", "token_id", "travel_time_s", "travel_distance_m", "completed", "route"];

#[derive(Debug, Clone, PartialEq)]
pub struct OutputPaths {
    pub dir: PathBuf,
    pub records: Vec<PathBuf>,
    pub ledger_logs: Vec<PathBuf>,
    pub summary: PathBuf,
    pub config_echo: PathBuf,
}

fn route_field(route: &[usize]) -> String {
    route.iter().map(|s| s.to_string()).collect::<Vec<_>>().join("-")
}

pub fn write_records_csv<'a, W: Write>(out: W, records: impl IntoIterator<Item = &'a EpisodeRecord>) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RECORD_COLUMNS)?;
    for r in records {
        w.write_record([
            r.realization.to_string(),
            r.episode.to_string(),
            r.token_id.to_string(),
            r.travel_time_s.to_string(),
            r.travel_distance_m.to_string(),
            r.completed.to_string(),
            route_field(&r.route),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Write `records.csv`, `summary.json` and `config.echo.json` under
/// `<base>/<exp>/<stamp>/`. Experiments with several runs get one
/// subdirectory per run; runs with a test vehicle also get `test_records.csv`,
/// runs with the ledger on get realization 0's `ledger.log`.
pub fn write_outputs(
    base: &Path,
    stamp: &str,
    outcome: &ExperimentOutcome,
    summary: &ExperimentSummary,
) -> Result<OutputPaths, HarnessError> {
    let cfg = &outcome.scenario.config;
    let dir = base.join(cfg.experiment.name()).join(stamp);
    fs::create_dir_all(&dir)?;
    let single = outcome.runs.len() == 1;
    let mut records = Vec::new();
    let mut ledger_logs = Vec::new();
    for run in &outcome.runs {
        let run_dir = if single { dir.clone() } else { dir.join(&run.spec.label) };
        fs::create_dir_all(&run_dir)?;
        let path = run_dir.join("records.csv");
        let file = fs::File::create(&path)?;
        write_records_csv(std::io::BufWriter::new(file), run.realizations.iter().flat_map(|r| r.records.iter()))?;
        records.push(path);
        if run.spec.test_vehicle {
            let path = run_dir.join("test_records.csv");
            let file = fs::File::create(&path)?;
            write_records_csv(
                std::io::BufWriter::new(file),
                run.realizations.iter().flat_map(|r| r.test_records.iter().map(|t| &t.record)),
            )?;
            records.push(path);
        }
        if let Some(log) = run.realizations.first().and_then(|r| r.ledger_log.as_ref()) {
            let path = run_dir.join("ledger.log");
            fs::write(&path, log)?;
            ledger_logs.push(path);
        }
    }
    let summary_path = dir.join("summary.json");
    write_json(&summary_path, summary)?;
    let echo = dir.join("config.echo.json");
    write_json(&echo, cfg)?;
    Ok(OutputPaths { dir, records, ledger_logs, summary: summary_path, config_echo: echo })
}
