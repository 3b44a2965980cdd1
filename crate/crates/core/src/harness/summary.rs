use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::config::{Algorithm, ExperimentKind};
use super::runner::{ExperimentOutcome, ExperimentRun};
use super::scenario::Scenario;
use super::stats::{episodes_to_learn, exponential_fit, linear_fit, mean_ci, median_ci, spearman, ExpFit, LinearFit, MeanCi, MedianCi};
use crate::rl::EpisodeRecord;
use crate::traffic::CongestionSchedule;

const LEVEL: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStat {
    pub episode: usize,
    pub completed: usize,
    pub incomplete: usize,
    /// Over completed trips.
    pub travel_time: Option<MedianCi>,
    pub travel_distance: Option<MedianCi>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnKind {
    /// Completed route free of every active jam.
    Avoid,
    /// Route identical to the original shortest path.
    Return,
    /// Test-vehicle trip within tolerance of the best expected travel time.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnStat {
    pub change: usize,
    pub kind: LearnKind,
    /// Per realization; `None` when the criterion was never met.
    pub offsets: Vec<Option<usize>>,
    pub within_budget: usize,
    pub rate: f64,
    pub not_learned: usize,
    pub mean: Option<MeanCi>,
    pub median: Option<MedianCi>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerTotals {
    pub sites: usize,
    pub deposits: usize,
    pub audited_sites: usize,
    pub mismatches: usize,
    pub relay_expiries: usize,
    pub mean_difficulty_bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub algorithm: Algorithm,
    pub tokens: usize,
    pub episodes: Vec<EpisodeStat>,
    pub test_vehicle: Option<Vec<EpisodeStat>>,
    pub learning: Vec<LearnStat>,
    /// All change points pooled.
    pub episodes_to_learn: Option<MeanCi>,
    pub not_learned: usize,
    pub incomplete_first: usize,
    pub incomplete_last: usize,
    pub ledger: Option<LedgerTotals>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingSummary {
    pub algorithm: Algorithm,
    pub tokens: Vec<usize>,
    pub mean_episodes: Vec<f64>,
    pub spearman: Option<f64>,
    pub exponential: Option<ExpFit>,
    pub linear: Option<LinearFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub realizations: usize,
    pub episodes: usize,
    pub n_states: usize,
    pub origin: usize,
    pub destination: usize,
    pub shortest_route: Vec<usize>,
    pub runs: Vec<RunSummary>,
    pub scaling: Vec<ScalingSummary>,
    pub criteria: BTreeMap<String, bool>,
}

fn episode_stats<'a>(records: impl Iterator<Item = &'a EpisodeRecord>, episodes: usize) -> Vec<EpisodeStat> {
    let mut tt: Vec<Vec<f64>> = vec![Vec::new(); episodes];
    let mut dist: Vec<Vec<f64>> = vec![Vec::new(); episodes];
    let mut incomplete = vec![0usize; episodes];
    for r in records {
        if r.completed {
            tt[r.episode].push(r.travel_time_s);
            dist[r.episode].push(r.travel_distance_m);
        } else {
            incomplete[r.episode] += 1;
        }
    }
    (0..episodes)
        .map(|e| EpisodeStat {
            episode: e,
            completed: tt[e].len(),
            incomplete: incomplete[e],
            travel_time: median_ci(&tt[e], LEVEL),
            travel_distance: median_ci(&dist[e], LEVEL),
        })
        .collect()
}

fn learn_stat(change: usize, kind: LearnKind, offsets: Vec<Option<usize>>, budget: usize) -> LearnStat {
    let learned: Vec<f64> = offsets.iter().flatten().map(|&o| o as f64).collect();
    let within_budget = offsets.iter().filter(|o| o.is_some_and(|v| v <= budget)).count();
    LearnStat {
        change,
        kind,
        rate: if offsets.is_empty() { 0.0 } else { within_budget as f64 / offsets.len() as f64 },
        within_budget,
        not_learned: offsets.len() - learned.len(),
        mean: mean_ci(&learned, LEVEL),
        median: median_ci(&learned, LEVEL),
        offsets,
    }
}

fn route_learning(scn: &Scenario, run: &ExperimentRun) -> Vec<LearnStat> {
    let cfg = &scn.config;
    let mut by_change: BTreeMap<(usize, LearnKind), Vec<Option<usize>>> = BTreeMap::new();
    for real in &run.realizations {
        let sched = CongestionSchedule::new(real.windows.clone());
        let routes: Vec<&EpisodeRecord> = real.records.iter().filter(|r| r.token_id == 0).collect();
        for (change, end) in Scenario::change_points(&real.windows, cfg.episodes) {
            let jammed_now = sched.congested_at(change);
            let kind = if jammed_now.is_empty() { LearnKind::Return } else { LearnKind::Avoid };
            let ok: Vec<bool> = (change..end)
                .map(|e| {
                    let rec = routes[e];
                    match kind {
                        LearnKind::Return => rec.completed && rec.route == scn.sp_route,
                        _ => {
                            let j = sched.congested_at(e);
                            rec.completed && rec.route.iter().all(|s| !j.contains(s))
                        }
                    }
                })
                .collect();
            by_change.entry((change, kind)).or_default().push(episodes_to_learn(&ok, cfg.learn.persistence));
        }
    }
    by_change
        .into_iter()
        .map(|((change, kind), offs)| learn_stat(change, kind, offs, cfg.learn.budget))
        .collect()
}

fn oracle_learning(scn: &Scenario, run: &ExperimentRun) -> Vec<LearnStat> {
    let cfg = &scn.config;
    let mut by_change: BTreeMap<usize, Vec<Option<usize>>> = BTreeMap::new();
    for real in &run.realizations {
        let sched = CongestionSchedule::new(real.windows.clone());
        let mut oracle_cache: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
        for (change, end) in Scenario::change_points(&real.windows, cfg.episodes) {
            let ok: Vec<bool> = (change..end)
                .map(|e| {
                    let j: BTreeSet<usize> = sched.congested_at(e);
                    let key: Vec<usize> = j.iter().copied().collect();
                    let best = *oracle_cache.entry(key).or_insert_with(|| scn.oracle_travel_time(&j));
                    let rec = &real.test_records[e].record;
                    rec.completed && rec.travel_time_s <= (1.0 + cfg.learn.tolerance) * best
                })
                .collect();
            by_change.entry(change).or_default().push(episodes_to_learn(&ok, cfg.learn.persistence));
        }
    }
    by_change
        .into_iter()
        .map(|(change, offs)| learn_stat(change, LearnKind::Oracle, offs, cfg.learn.budget))
        .collect()
}

fn summarize_run(scn: &Scenario, run: &ExperimentRun) -> RunSummary {
    let cfg = &scn.config;
    let episodes = cfg.episodes;
    let all = run.realizations.iter().flat_map(|r| r.records.iter());
    let stats = episode_stats(all, episodes);
    let test_vehicle = run
        .spec
        .test_vehicle
        .then(|| episode_stats(run.realizations.iter().flat_map(|r| r.test_records.iter().map(|t| &t.record)), episodes));
    let learning = if run.spec.test_vehicle { oracle_learning(scn, run) } else { route_learning(scn, run) };
    let pooled: Vec<f64> = learning.iter().flat_map(|l| l.offsets.iter().flatten().map(|&o| o as f64)).collect();
    let not_learned = learning.iter().map(|l| l.not_learned).sum();
    let w = cfg.learn.edge_window.min(episodes);
    let incomplete_first = stats[..w].iter().map(|s| s.incomplete).sum();
    let incomplete_last = stats[episodes - w..].iter().map(|s| s.incomplete).sum();
    let ledger = run.realizations[0].ledger.as_ref().map(|_| {
        let mut t = LedgerTotals {
            sites: 0,
            deposits: 0,
            audited_sites: 0,
            mismatches: 0,
            relay_expiries: 0,
            mean_difficulty_bits: 0.0,
        };
        let mut bits = 0u64;
        for r in &run.realizations {
            if let Some(l) = &r.ledger {
                t.sites += l.sites;
                t.deposits += l.deposits;
                t.relay_expiries += l.relay_expiries;
                bits += l.difficulty_bits_total;
            }
            t.audited_sites += r.audited_sites.unwrap_or(0);
            t.mismatches += r.ledger_mismatches;
        }
        t.mean_difficulty_bits = if t.deposits > 0 { bits as f64 / t.deposits as f64 } else { 0.0 };
        t
    });
    RunSummary {
        label: run.spec.label.clone(),
        algorithm: run.spec.algorithm,
        tokens: run.spec.tokens,
        episodes: stats,
        test_vehicle,
        learning,
        episodes_to_learn: mean_ci(&pooled, LEVEL),
        not_learned,
        incomplete_first,
        incomplete_last,
        ledger,
    }
}

fn scaling(runs: &[RunSummary], algorithm: Algorithm) -> Option<ScalingSummary> {
    let mut pts: Vec<(usize, f64)> = runs
        .iter()
        .filter(|r| r.algorithm == algorithm && r.test_vehicle.is_some())
        .filter_map(|r| r.episodes_to_learn.map(|m| (r.tokens, m.mean)))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    pts.sort_by_key(|a| a.0);
    let x: Vec<f64> = pts.iter().map(|p| p.0 as f64).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
    Some(ScalingSummary {
        algorithm,
        tokens: pts.iter().map(|p| p.0).collect(),
        spearman: spearman(&x, &y),
        exponential: exponential_fit(&x, &y),
        linear: linear_fit(&x, &y),
        mean_episodes: y,
    })
}

fn rate_ok(run: &RunSummary, kind: LearnKind) -> bool {
    let rel: Vec<&LearnStat> = run.learning.iter().filter(|l| l.kind == kind).collect();
    !rel.is_empty() && rel.iter().all(|l| l.rate >= 0.9)
}

fn mean_of(run: &RunSummary) -> Option<f64> {
    run.episodes_to_learn.map(|m| m.mean)
}

pub fn summarize(outcome: &ExperimentOutcome) -> ExperimentSummary {
    let scn = &outcome.scenario;
    let cfg = &scn.config;
    let runs: Vec<RunSummary> = outcome.runs.iter().map(|r| summarize_run(scn, r)).collect();
    let scaling: Vec<ScalingSummary> =
        [Algorithm::Mubev, Algorithm::Ucbq].into_iter().filter_map(|a| scaling(&runs, a)).collect();

    let mut criteria = BTreeMap::new();
    match cfg.experiment {
        ExperimentKind::Exp1 | ExperimentKind::Exp2 => {
            let r = &runs[0];
            let tag = if cfg.experiment == ExperimentKind::Exp1 { "6" } else { "7" };
            criteria.insert(format!("{tag}a_avoid"), rate_ok(r, LearnKind::Avoid));
            criteria.insert(format!("{tag}b_return"), rate_ok(r, LearnKind::Return));
            criteria.insert(format!("{tag}c_incomplete_decline"), r.incomplete_last < r.incomplete_first);
            if cfg.experiment == ExperimentKind::Exp2 {
                let placed = outcome.runs[0].realizations.iter().filter(|x| x.detour_state.is_some()).count();
                criteria.insert("7_second_jam_placed".into(), placed * 10 >= 9 * cfg.realizations);
            }
        }
        ExperimentKind::Exp3 => {
            let ok = scaling.iter().find(|s| s.algorithm == cfg.algorithm).is_some_and(|s| {
                s.spearman.is_some_and(|rho| rho <= -0.9)
                    && matches!((&s.exponential, &s.linear), (Some(e), Some(l)) if e.rss < l.rss)
            });
            criteria.insert("8_scaling".into(), ok);
        }
        ExperimentKind::Exp4 => {
            let find = |label: &str| runs.iter().find(|r| r.label == label);
            if let Some(u) = find("route-ucbq") {
                criteria.insert("9_ucbq_avoids".into(), rate_ok(u, LearnKind::Avoid));
            }
            if let (Some(m), Some(u)) = (find("route-mubev"), find("route-ucbq")) {
                let avoid_mean = |r: &RunSummary| {
                    r.learning.iter().find(|l| l.kind == LearnKind::Avoid).and_then(|l| l.mean).map(|m| m.mean)
                };
                criteria.insert(
                    "9_route_ucbq_not_faster".into(),
                    match (avoid_mean(m), avoid_mean(u)) {
                        (Some(a), Some(b)) => b >= a,
                        (Some(_), None) => true,
                        _ => false,
                    },
                );
            }
            for &k in &cfg.tokens {
                let m = find(&format!("fleet-mubev-tokens-{k}"));
                let u = find(&format!("fleet-ucbq-tokens-{k}"));
                if let (Some(m), Some(u)) = (m, u) {
                    let ok = match (mean_of(m), mean_of(u)) {
                        (Some(a), Some(b)) => b >= a || u.not_learned > m.not_learned,
                        (Some(_), None) => true,
                        _ => false,
                    };
                    criteria.insert(format!("9_fleet_ucbq_not_faster_m{k}"), ok);
                }
            }
        }
    }

    ExperimentSummary {
        experiment: cfg.experiment,
        seed: cfg.seed,
        realizations: cfg.realizations,
        episodes: cfg.episodes,
        n_states: scn.graph.len(),
        origin: scn.origin,
        destination: scn.destination,
        shortest_route: scn.sp_route.clone(),
        runs,
        scaling,
        criteria,
    }
}
