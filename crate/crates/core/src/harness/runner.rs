use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Algorithm, ExperimentKind};
use super::scenario::Scenario;
use super::world::{choose_observed, LedgerStats, LedgerWorld};
use super::{stream_seed, ExperimentConfig, HarnessError};
use crate::ledger::write_log_record;
use crate::network::StateId;
use crate::rl::{run_episode, EpisodeRecord, Learner, MubevLearner, RlError, TrafficWorld, UcbQLearner};
use crate::traffic::{CongestionWindow, Environment, EnvironmentSnapshot};

const ENV_STREAM: u64 = 1;
const ORIGIN_STREAM: u64 = 2;
const LEDGER_STREAM: u64 = 3;
const RELAY_STREAM: u64 = 4;
const OBSERVER_STREAM: u64 = 5;

/// Draw indices used by the test vehicle, disjoint from token draws.
pub const TEST_DRAW_BASE: u64 = 1 << 32;

/// One learner configuration run over every realization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSpec {
    pub label: String,
    pub algorithm: Algorithm,
    pub tokens: usize,
    pub fixed_origin: bool,
    pub test_vehicle: bool,
}

/// The non-learning vehicle's trip, plus whether the current policy gave a
/// complete route or the previous one was reused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRecord {
    pub record: EpisodeRecord,
    pub fresh: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationRun {
    pub realization: usize,
    pub records: Vec<EpisodeRecord>,
    pub test_records: Vec<TestRecord>,
    /// Jam windows in force, including any placed during the run.
    pub windows: Vec<CongestionWindow>,
    pub detour_state: Option<StateId>,
    pub ledger: Option<LedgerStats>,
    /// Sites that passed the collect/deposit audit.
    pub audited_sites: Option<usize>,
    /// Token traversals without a matching deposit, or the reverse.
    pub ledger_mismatches: usize,
    pub environment: Vec<EnvironmentSnapshot>,
    /// Append-only log of the ledger, kept for realization 0 only.
    #[serde(skip)]
    pub ledger_log: Option<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRun {
    pub spec: RunSpec,
    pub realizations: Vec<RealizationRun>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub scenario: Scenario,
    pub runs: Vec<ExperimentRun>,
}

fn run_err(realization: usize) -> impl Fn(RlError) -> HarnessError {
    move |e| HarnessError::Run { realization, message: e.to_string() }
}

enum World {
    Plain(Environment),
    Ledger(Box<LedgerWorld>),
}

impl World {
    fn env(&self) -> &Environment {
        match self {
            World::Plain(e) => e,
            World::Ledger(w) => w.env(),
        }
    }

    fn env_mut(&mut self) -> &mut Environment {
        match self {
            World::Plain(e) => e,
            World::Ledger(w) => w.env_mut(),
        }
    }
}

/// The first state of `route` off the shortest-path route.
fn first_detour_state(route: &[StateId], sp: &[StateId]) -> Option<StateId> {
    let on: BTreeSet<StateId> = sp.iter().copied().collect();
    route.iter().copied().find(|s| !on.contains(s))
}

pub fn run_realization(scn: &Scenario, spec: &RunSpec, r: usize) -> Result<RealizationRun, HarnessError> {
    let cfg = &scn.config;
    let err = run_err(r);
    let model = &scn.model;
    let env = Environment::new(&scn.graph, cfg.traffic.clone(), scn.schedule(), stream_seed(cfg.seed, r, ENV_STREAM))
        .map_err(|e| HarnessError::Run { realization: r, message: e.to_string() })?
        .with_snapshots(cfg.record_environment);
    let mut learner: Box<dyn Learner> = match spec.algorithm {
        Algorithm::Mubev => Box::new(MubevLearner::new(model, cfg.delta, cfg.reward.r_max).map_err(&err)?),
        Algorithm::Ucbq => Box::new(UcbQLearner::new(model, cfg.ucbq.clone()).map_err(&err)?),
    };
    let shortest = scn.shortest.actions();
    learner.prepare(model, shortest);

    let mut origin_rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, r, ORIGIN_STREAM));
    let full_coverage = cfg.ledger.observer_coverage >= 1.0;
    let mut world = if cfg.ledger.enabled {
        let mut obs_rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, r, OBSERVER_STREAM));
        let mut observed = choose_observed(&mut obs_rng, scn.graph.len(), cfg.ledger.observer_coverage);
        observed.push(scn.origin);
        observed.sort_unstable();
        observed.dedup();
        World::Ledger(Box::new(
            LedgerWorld::new(
                env,
                cfg.ledger.clone(),
                scn.destination,
                observed,
                ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, r, LEDGER_STREAM)),
                ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, r, RELAY_STREAM)),
            )
            .keep_marks(full_coverage),
        ))
    } else {
        World::Plain(env)
    };

    let fixed = [scn.origin];
    let fixed_origins = spec.fixed_origin.then_some(&fixed[..]);
    let reward = |s: StateId, n: StateId, tau: f64| scn.reward.reward(s, n, tau);
    let mut windows = scn.windows.clone();
    let mut detour_state = None;
    let mut records = Vec::with_capacity(cfg.episodes * spec.tokens);
    let mut test_records = Vec::new();
    let mut last_valid = scn.sp_route.clone();
    let mut mismatches = 0usize;

    for e in 0..cfg.episodes {
        if let Some(dj) = cfg.detour_jam {
            if e == dj.start {
                let prev = records.iter().rev().find(|rec: &&EpisodeRecord| rec.token_id == 0);
                if let Some(s) = prev.and_then(|rec| first_detour_state(&rec.route, &scn.sp_route)) {
                    if s != scn.destination {
                        let w = CongestionWindow { state: s, start: dj.start, end: dj.end };
                        world.env_mut().add_window(w).map_err(|e| HarnessError::Run { realization: r, message: e.to_string() })?;
                        windows.push(w);
                        detour_state = Some(s);
                    }
                }
            }
        }
        world.env_mut().step_schedule(e);
        let out = match &mut world {
            World::Plain(env) => {
                let mut w = TrafficWorld::new(env);
                run_episode(
                    learner.as_mut(),
                    model,
                    &mut w,
                    reward,
                    scn.destination,
                    &scn.lengths,
                    e,
                    spec.tokens,
                    fixed_origins,
                    &mut origin_rng,
                )
            }
            World::Ledger(w) => run_episode(
                learner.as_mut(),
                model,
                w.as_mut(),
                reward,
                scn.destination,
                &scn.lengths,
                e,
                spec.tokens,
                fixed_origins,
                &mut origin_rng,
            ),
        }
        .map_err(&err)?;

        if let World::Ledger(w) = &mut world {
            if full_coverage {
                let mut moved: Vec<(usize, usize, StateId)> =
                    out.transitions.iter().filter(|t| t.next != t.state).map(|t| (t.token, t.t, t.next)).collect();
                let mut marked: Vec<(usize, usize, StateId)> = w.marks.iter().map(|m| (m.token, m.t, m.state)).collect();
                moved.sort_unstable();
                marked.sort_unstable();
                if moved != marked {
                    let a: BTreeSet<_> = moved.into_iter().collect();
                    let b: BTreeSet<_> = marked.into_iter().collect();
                    mismatches += a.symmetric_difference(&b).count();
                }
                w.marks.clear();
            }
        }
        records.extend(out.records.into_iter().map(|mut rec| {
            rec.realization = r;
            rec
        }));

        learner.prepare(model, shortest);
        if spec.test_vehicle {
            let fresh = match learner.policy().rollout(model, scn.origin, scn.destination) {
                Some(route) => {
                    last_valid = route;
                    true
                }
                None => false,
            };
            let env = world.env();
            let (mut tt, mut dist) = (0.0, 0.0);
            for (i, &s) in last_valid.iter().skip(1).enumerate() {
                tt += env.traverse(s, TEST_DRAW_BASE + i as u64).travel_time;
                dist += scn.lengths[s];
            }
            test_records.push(TestRecord {
                record: EpisodeRecord {
                    realization: r,
                    episode: e,
                    token_id: 0,
                    travel_time_s: tt,
                    travel_distance_m: dist,
                    completed: true,
                    route: last_valid.clone(),
                },
                fresh,
            });
        }
    }

    let (ledger, audited_sites, environment, ledger_log) = match world {
        World::Ledger(w) => {
            let audited = w.audit().map_err(&err)?;
            let stats = w.stats.clone();
            let log = if r == 0 {
                let mut buf = Vec::new();
                for site in w.ledger.iter() {
                    write_log_record(&mut buf, site)?;
                }
                Some(buf)
            } else {
                None
            };
            (Some(stats), Some(audited), w.into_env().take_snapshots(), log)
        }
        World::Plain(mut env) => (None, None, env.take_snapshots(), None),
    };
    Ok(RealizationRun {
        realization: r,
        records,
        test_records,
        windows,
        detour_state,
        ledger,
        audited_sites,
        ledger_mismatches: mismatches,
        environment,
        ledger_log,
    })
}

pub fn run_spec(scn: &Scenario, spec: &RunSpec) -> Result<ExperimentRun, HarnessError> {
    let realizations = (0..scn.config.realizations)
        .into_par_iter()
        .map(|r| run_realization(scn, spec, r))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExperimentRun { spec: spec.clone(), realizations })
}

/// The learner configurations an experiment consists of.
pub fn plan_runs(cfg: &ExperimentConfig) -> Vec<RunSpec> {
    let algo_name = |a: Algorithm| match a {
        Algorithm::Mubev => "mubev",
        Algorithm::Ucbq => "ucbq",
    };
    match cfg.experiment {
        ExperimentKind::Exp4 => {
            let mut runs = Vec::new();
            for a in [Algorithm::Mubev, Algorithm::Ucbq] {
                runs.push(RunSpec {
                    label: format!("route-{}", algo_name(a)),
                    algorithm: a,
                    tokens: 1,
                    fixed_origin: true,
                    test_vehicle: false,
                });
            }
            for &m in &cfg.tokens {
                for a in [Algorithm::Mubev, Algorithm::Ucbq] {
                    runs.push(RunSpec {
                        label: format!("fleet-{}-tokens-{m}", algo_name(a)),
                        algorithm: a,
                        tokens: m,
                        fixed_origin: false,
                        test_vehicle: true,
                    });
                }
            }
            runs
        }
        _ => cfg
            .tokens
            .iter()
            .map(|&m| RunSpec {
                label: format!("tokens-{m}"),
                algorithm: cfg.algorithm,
                tokens: m,
                fixed_origin: cfg.fixed_origin,
                test_vehicle: cfg.test_vehicle,
            })
            .collect(),
    }
}

pub fn run_experiment(cfg: ExperimentConfig) -> Result<ExperimentOutcome, HarnessError> {
    let mut cfg = cfg;
    if cfg.experiment == ExperimentKind::Exp4 {
        // the fleet runs draw origins; the route runs pin them per run
        cfg.fixed_origin = false;
    }
    let scenario = Scenario::build(cfg)?;
    let runs = plan_runs(&scenario.config)
        .iter()
        .map(|spec| run_spec(&scenario, spec))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExperimentOutcome { scenario, runs })
}
