use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use sptoken_core::apow::{run_round, ApowRound, DataPoint, Norm};
use sptoken_core::ledger::{Ledger, LedgerLog};
use sptoken_core::network::{generate_grid, merge_states, GridSpec, RoadNetwork, TurnThresholds};

use crate::ConfigError;

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 12)]
    rows: u32,
    #[arg(long, default_value_t = 12)]
    cols: u32,
    /// Junction spacing, meters.
    #[arg(long, default_value_t = 100.0)]
    spacing: f64,
    /// m/s.
    #[arg(long, default_value_t = 13.9)]
    free_speed: f64,
    #[arg(long, default_value_t = 0.2)]
    tls_fraction: f64,
    #[arg(long, default_value_t = 1)]
    segments: u32,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MergeArgs {
    /// Network JSON as written by `net gen`.
    #[arg(long)]
    network: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 30.0)]
    straight: f64,
    #[arg(long, default_value_t = 75.0)]
    partial: f64,
    #[arg(long, default_value_t = 150.0)]
    sharp: f64,
}

#[derive(Debug, Args)]
pub struct RoundArgs {
    /// JSON with participants, data, d0, alpha and norm.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DumpArgs {
    /// Binary ledger log.
    #[arg(long)]
    log: PathBuf,
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn pretty<T: serde::Serialize>(value: &T) -> anyhow::Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

pub fn net_gen(a: GenArgs) -> anyhow::Result<()> {
    if a.rows < 2 || a.cols < 2 {
        return Err(ConfigError("grid needs at least 2 rows and 2 columns".into()).into());
    }
    if !(a.spacing > 0.0 && a.free_speed > 0.0) {
        return Err(ConfigError("spacing and free speed must be positive".into()).into());
    }
    if !(0.0..=1.0).contains(&a.tls_fraction) || a.segments == 0 {
        return Err(ConfigError("tls fraction must lie in [0, 1] and segments be at least 1".into()).into());
    }
    let spec = GridSpec {
        rows: a.rows,
        cols: a.cols,
        spacing: a.spacing,
        free_speed: a.free_speed,
        tls_fraction: a.tls_fraction,
        segments: a.segments,
        seed: a.seed,
        ..GridSpec::default()
    };
    emit(a.out.as_deref(), &pretty(&generate_grid(&spec))?)
}

pub fn net_merge(a: MergeArgs) -> anyhow::Result<()> {
    let network = RoadNetwork::load(&a.network)
        .map_err(|e| ConfigError(format!("network {}: {e}", a.network.display())))?;
    let thresholds = TurnThresholds { straight: a.straight, partial: a.partial, sharp: a.sharp };
    if !(0.0 < thresholds.straight && thresholds.straight < thresholds.partial && thresholds.partial < thresholds.sharp)
        || thresholds.sharp > 180.0
    {
        return Err(ConfigError("thresholds must satisfy 0 < straight < partial < sharp <= 180".into()).into());
    }
    let (graph, report) = merge_states(&network, &thresholds);
    match a.out {
        Some(path) => {
            fs::write(&path, pretty(&graph)?).with_context(|| format!("writing {}", path.display()))?;
            emit(None, &pretty(&report)?)
        }
        None => emit(None, &pretty(&serde_json::json!({ "report": report, "graph": graph }))?),
    }
}

/// Round description with real-valued data.
#[derive(Debug, Deserialize)]
struct RoundInput {
    participants: Vec<String>,
    data: BTreeMap<String, Vec<f64>>,
    d0: f64,
    alpha: f64,
    #[serde(default)]
    norm: Norm,
}

pub fn apow_round(a: RoundArgs) -> anyhow::Result<()> {
    let text = fs::read_to_string(&a.input).map_err(|e| ConfigError(format!("{}: {e}", a.input.display())))?;
    let input: RoundInput =
        serde_json::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", a.input.display())))?;
    if let Some((who, _)) = input.data.iter().find(|(_, x)| x.iter().any(|v| !v.is_finite())) {
        return Err(ConfigError(format!("data.{who}: values must be finite")).into());
    }
    let round = ApowRound {
        participants: input.participants,
        data: input.data.iter().map(|(k, x)| (k.clone(), DataPoint::from_real(x))).collect(),
        d0: input.d0,
        alpha_pow: input.alpha,
        norm: input.norm,
    };
    round.validate().map_err(|e| ConfigError(format!("round: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let result = run_round(&round, &mut rng)?;
    emit(a.out.as_deref(), &pretty(&result)?)
}

pub fn ledger_dump(a: DumpArgs) -> anyhow::Result<()> {
    let sites = LedgerLog::read(&a.log).with_context(|| format!("reading {}", a.log.display()))?;
    let ledger = Ledger::from_sites(sites).with_context(|| format!("replaying {}", a.log.display()))?;
    let stdout = io::stdout();
    let mut w = BufWriter::new(stdout.lock());
    for rec in ledger.dump_records() {
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
