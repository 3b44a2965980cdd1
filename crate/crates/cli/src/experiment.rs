use std::path::Path;

use anyhow::Context;
use sptoken_core::harness::{run_experiment, summarize, write_outputs, ExperimentConfig, ExperimentKind};

use crate::ExpArgs;

fn build_config(kind: ExperimentKind, args: &ExpArgs) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load_for(kind, path)?,
        None => ExperimentConfig::preset(kind),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(tokens) = &args.tokens {
        cfg.tokens = tokens.clone();
    }
    if let Some(k) = args.episodes {
        cfg.episodes = k;
    }
    if let Some(r) = args.realizations {
        cfg.realizations = r;
    }
    if let Some(a) = args.algorithm {
        cfg.algorithm = a;
    }
    if args.no_ledger {
        cfg.ledger.enabled = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn fresh_stamp(base: &Path, kind: ExperimentKind) -> String {
    let now = chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string();
    let dir = base.join(kind.name());
    let mut stamp = now.clone();
    let mut n = 1;
    while dir.join(&stamp).exists() {
        stamp = format!("{now}-{n}");
        n += 1;
    }
    stamp
}

pub fn run(kind: ExperimentKind, args: ExpArgs) -> anyhow::Result<()> {
    let cfg = build_config(kind, &args)?;
    let outcome = run_experiment(cfg)?;
    let summary = summarize(&outcome);
    let stamp = args.stamp.clone().unwrap_or_else(|| fresh_stamp(&args.out, kind));
    let paths = write_outputs(&args.out, &stamp, &outcome, &summary)
        .with_context(|| format!("writing results under {}", args.out.display()))?;
    println!("{}", paths.dir.display());
    for (name, ok) in &summary.criteria {
        println!("{name}: {}", if *ok { "pass" } else { "fail" });
    }
    Ok(())
}
