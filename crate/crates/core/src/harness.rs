//! Experiment orchestration: seeded evaluation, discounted metrics, beta1
//! sweeps, convergence studies and per-slot traces.
//!
//! Seeding: the master seed is split into a training key, an evaluation key
//! and a probe key. Evaluation run `k` always uses substream `k` of the
//! evaluation key, so every policy and every sweep cell sees the same request
//! and channel realisations (common random numbers), and a run's result does
//! not depend on how many other runs are executed.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use crate::config::{Scenario, TrainingMode};
use crate::environment::{Action, Environment, RequestProfile, SlotOutcome, SlotState};
use crate::error::{Error, Result};
use crate::learner::{self, Trainer};
use crate::policies::{Policy, PolicySpec};
use crate::qtable::QTable;
use crate::streams::{self, EnvStreams, Role};

const TRAIN_KEY: u64 = 0x7452_4149_4e00_0001;
const EVAL_KEY: u64 = 0x4556_414c_0000_0002;
const PROBE_KEY: u64 = 0x5052_4f42_4500_0003;

/// Seeds derived from one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub master: u64,
}

impl Seeds {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    /// Training seed for a sweep cell / grid point / retrain index.
    pub fn training(&self, cell: u64) -> u64 {
        streams::derive_seed(streams::derive_seed(self.master, TRAIN_KEY), cell)
    }

    pub fn evaluation(&self) -> u64 {
        streams::derive_seed(self.master, EVAL_KEY)
    }

    pub fn probe(&self) -> u64 {
        streams::derive_seed(self.master, PROBE_KEY)
    }
}

/// Discounted totals over one evaluation episode, weights `discount^(t-1)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunMetrics {
    pub discounted_return: f64,
    pub discounted_cost: f64,
    /// `sum_t discount^(t-1) sum_n w_n aoi_n(t)`, seconds.
    pub discounted_avg_aoi_s: f64,
    /// `sum_t discount^(t-1) A(t) E`, mJ.
    pub discounted_energy_mj: f64,
}

/// `sum_{t=1..horizon} discount^(t-1)`, accumulated the same way as the metrics.
pub fn discount_mass(discount: f64, horizon: u64) -> f64 {
    let mut w = 1.0;
    let mut total = 0.0;
    for _ in 0..horizon {
        total += w;
        w *= discount;
    }
    total
}

/// Simulates `horizon` slots from the all-ones state, asking `decide` for each
/// action. `on_slot` sees every transition.
pub fn simulate<D, O>(
    env: &Environment,
    horizon: u64,
    discount: f64,
    env_streams: &mut EnvStreams,
    mut decide: D,
    mut on_slot: O,
) -> RunMetrics
where
    D: FnMut(&SlotState, u64) -> Action,
    O: FnMut(u64, &SlotState, Action, &crate::environment::Transition, &RequestProfile, &SlotState),
{
    let mut state = env.initial_state();
    let mut before = state.clone();
    let mut requests = RequestProfile::none(env.users());
    let mut m = RunMetrics::default();
    let mut weight = 1.0;
    for slot in 0..horizon {
        let action = decide(&state, slot);
        before.clone_from(&state);
        let t = env.advance(&mut state, action, env_streams, &mut requests);
        on_slot(slot, &before, action, &t, &requests, &state);
        m.discounted_return += weight * t.reward;
        m.discounted_cost += weight * t.cost;
        m.discounted_avg_aoi_s += weight * t.weighted_aoi_s;
        m.discounted_energy_mj += weight * t.energy_mj;
        weight *= discount;
    }
    m
}

/// Evaluation context shared by every run of a scenario.
#[derive(Debug, Clone)]
pub struct Evaluator {
    env: Environment,
    horizon: u64,
    discount: f64,
    seed: u64,
}

impl Evaluator {
    pub fn new(env: Environment, horizon: u64, discount: f64, eval_seed: u64) -> Self {
        Self {
            env,
            horizon,
            discount,
            seed: eval_seed,
        }
    }

    pub fn for_scenario(scenario: &Scenario, seeds: Seeds) -> Result<Self> {
        Ok(Self::new(
            scenario.environment()?,
            scenario.evaluation.horizon,
            scenario.learner.discount,
            seeds.evaluation(),
        ))
    }

    pub fn environment(&self) -> &Environment {
        &self.env
    }

    /// One evaluation episode; deterministic in `(eval seed, run)`.
    pub fn evaluate(&self, policy: &Policy, run: u64) -> RunMetrics {
        let mut env_streams = EnvStreams::new(self.seed, run);
        let mut policy_rng = streams::substream(self.seed, run, Role::Policy);
        simulate(
            &self.env,
            self.horizon,
            self.discount,
            &mut env_streams,
            |s, t| policy.decide(s, t, &mut policy_rng),
            |_, _, _, _, _, _| {},
        )
    }

    /// Runs `0..runs` in parallel; results are in run order.
    pub fn evaluate_runs(&self, policy: &Policy, runs: u64) -> Vec<RunMetrics> {
        (0..runs)
            .into_par_iter()
            .map(|k| self.evaluate(policy, k))
            .collect()
    }

    /// Per-slot trace of one run.
    pub fn replay(&self, policy: &Policy, run: u64) -> (Vec<SlotOutcome>, RunMetrics) {
        let mut env_streams = EnvStreams::new(self.seed, run);
        let mut policy_rng = streams::substream(self.seed, run, Role::Policy);
        let mut trace = Vec::with_capacity(self.horizon as usize);
        let metrics = simulate(
            &self.env,
            self.horizon,
            self.discount,
            &mut env_streams,
            |s, t| policy.decide(s, t, &mut policy_rng),
            |_, before, action, t, requests, after| {
                trace.push(SlotOutcome {
                    state_before: before.clone(),
                    requests: requests.clone(),
                    action,
                    update_success: t.update_success,
                    cost: t.cost,
                    reward: t.reward,
                    state_after: after.clone(),
                })
            },
        );
        (trace, metrics)
    }
}

/// Sample mean and standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for a single sample.
    pub std: f64,
    pub n: u64,
}

impl Summary {
    pub fn of(xs: impl IntoIterator<Item = f64>) -> Self {
        let xs: Vec<f64> = xs.into_iter().collect();
        let n = xs.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
                n: 0,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            std,
            n: n as u64,
        }
    }

    pub fn std_error(&self) -> f64 {
        self.std / (self.n as f64).sqrt()
    }

    /// Half-width of the normal-approximation 95% interval of the mean.
    pub fn ci95(&self) -> f64 {
        1.96 * self.std_error()
    }

    pub fn ci95_bounds(&self) -> (f64, f64) {
        (self.mean - self.ci95(), self.mean + self.ci95())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsSummary {
    pub reward: Summary,
    pub cost: Summary,
    pub aoi_s: Summary,
    pub energy_mj: Summary,
}

impl MetricsSummary {
    pub fn of(runs: &[RunMetrics]) -> Self {
        Self {
            reward: Summary::of(runs.iter().map(|m| m.discounted_return)),
            cost: Summary::of(runs.iter().map(|m| m.discounted_cost)),
            aoi_s: Summary::of(runs.iter().map(|m| m.discounted_avg_aoi_s)),
            energy_mj: Summary::of(runs.iter().map(|m| m.discounted_energy_mj)),
        }
    }
}

/// Trains a table for `scenario` with the given seed.
pub fn train_table(scenario: &Scenario, seed: u64) -> Result<QTable> {
    learner::train(
        scenario.environment()?,
        scenario.learner_params(),
        scenario.fingerprint(),
        seed,
    )
}

/// One row of a training progress stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProgressRow {
    pub iteration: u64,
    pub epsilon: f64,
    /// Mean training reward over the iterations since the previous row.
    pub mean_reward: f64,
    /// Discounted return of the current greedy policy on the probe episode.
    pub greedy_probe: f64,
}

/// Discounted return of the greedy policy of `table` on the probe episode.
pub fn greedy_probe(
    table: &QTable,
    env: &Environment,
    horizon: u64,
    discount: f64,
    seeds: Seeds,
) -> f64 {
    let mut env_streams = EnvStreams::new(seeds.probe(), 0);
    simulate(
        env,
        horizon,
        discount,
        &mut env_streams,
        |s, _| table.greedy_at(table.index_of(s)),
        |_, _, _, _, _, _| {},
    )
    .discounted_return
}

/// Drives a trainer to completion, emitting a progress row every
/// `progress_every` iterations and a checkpoint every `checkpoint_every`.
pub fn run_training<P, C>(
    trainer: &mut Trainer,
    scenario: &Scenario,
    seeds: Seeds,
    mut on_progress: P,
    mut on_checkpoint: C,
) -> Result<()>
where
    P: FnMut(ProgressRow) -> Result<()>,
    C: FnMut(&QTable) -> Result<()>,
{
    let progress_every = scenario.learner.progress_every;
    let checkpoint_every = scenario.learner.checkpoint_every;
    let mut window_reward = 0.0;
    let mut window_len = 0u64;
    while !trainer.is_done() {
        let it = trainer.iteration();
        let to_progress = progress_every - it % progress_every;
        let to_checkpoint = checkpoint_every - it % checkpoint_every;
        let w = trainer.run(to_progress.min(to_checkpoint));
        window_reward += w.reward_sum;
        window_len += w.iterations;
        let it = trainer.iteration();
        if it.is_multiple_of(progress_every) || trainer.is_done() {
            let probe = greedy_probe(
                trainer.table(),
                trainer.environment(),
                scenario.evaluation.horizon,
                scenario.learner.discount,
                seeds,
            );
            on_progress(ProgressRow {
                iteration: it,
                epsilon: trainer.epsilon(),
                mean_reward: window_reward / window_len.max(1) as f64,
                greedy_probe: probe,
            })?;
            window_reward = 0.0;
            window_len = 0;
        }
        if it.is_multiple_of(checkpoint_every) && !trainer.is_done() {
            on_checkpoint(trainer.table())?;
        }
    }
    Ok(())
}

/// Builds the runtime policy for `spec`; learned policies get `table`.
pub fn instantiate(
    spec: PolicySpec,
    table: Option<&Arc<QTable>>,
    scenario: &Scenario,
) -> Result<Policy> {
    match spec {
        PolicySpec::Eau => {
            let table =
                table.ok_or_else(|| Error::Config("eau policy requires a trained table".into()))?;
            Policy::greedy(table.clone(), scenario.fingerprint())
        }
        other => Policy::baseline(other),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub beta1: f64,
    pub policy: String,
    pub training: &'static str,
    pub metrics: MetricsSummary,
}

/// Evaluates every policy at every beta1. Learned policies are trained per
/// cell according to the scenario's training mode. Cells run in parallel;
/// rows come back in (beta1, policy) order.
pub fn sweep_beta1(
    scenario: &Scenario,
    beta1_grid: &[f64],
    policies: &[PolicySpec],
    seeds: Seeds,
) -> Result<Vec<SweepRow>> {
    let cells: Vec<Result<Vec<SweepRow>>> = beta1_grid
        .par_iter()
        .enumerate()
        .map(|(i, &beta1)| {
            let cell = scenario.with_beta1(beta1);
            cell.validate()?;
            let evaluator = Evaluator::for_scenario(&cell, seeds)?;
            let runs = cell.evaluation.runs;
            let mut rows = Vec::with_capacity(policies.len());
            let mut shared_table: Option<Arc<QTable>> = None;
            for &spec in policies {
                let (training, results) = if spec.is_learned() {
                    match cell.evaluation.training_mode {
                        TrainingMode::SingleTable => {
                            if shared_table.is_none() {
                                shared_table =
                                    Some(Arc::new(train_table(&cell, seeds.training(i as u64))?));
                            }
                            let policy = instantiate(spec, shared_table.as_ref(), &cell)?;
                            (
                                TrainingMode::SingleTable.label(),
                                evaluator.evaluate_runs(&policy, runs),
                            )
                        }
                        TrainingMode::RetrainPerRun => {
                            let per_run: Result<Vec<RunMetrics>> = (0..runs)
                                .into_par_iter()
                                .map(|k| {
                                    let seed = streams::derive_seed(seeds.training(i as u64), k);
                                    let table = Arc::new(train_table(&cell, seed)?);
                                    let policy = instantiate(spec, Some(&table), &cell)?;
                                    Ok(evaluator.evaluate(&policy, k))
                                })
                                .collect();
                            (TrainingMode::RetrainPerRun.label(), per_run?)
                        }
                    }
                } else {
                    let policy = Policy::baseline(spec)?;
                    ("none", evaluator.evaluate_runs(&policy, runs))
                };
                rows.push(SweepRow {
                    beta1,
                    policy: spec.to_string(),
                    training,
                    metrics: MetricsSummary::of(&results),
                });
            }
            Ok(rows)
        })
        .collect();
    let mut out = Vec::new();
    for cell in cells {
        out.extend(cell?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub iterations: u64,
    pub metrics: MetricsSummary,
}

/// Trains at each horizon in `grid` (each from scratch, with its own
/// exploration schedule) and evaluates the greedy policy.
pub fn convergence_study(
    scenario: &Scenario,
    grid: &[u64],
    seeds: Seeds,
) -> Result<Vec<ConvergenceRow>> {
    grid.par_iter()
        .map(|&iterations| {
            let point = scenario.with_iterations(iterations);
            let table = Arc::new(train_table(&point, seeds.training(0))?);
            let policy = Policy::greedy(table, point.fingerprint())?;
            let evaluator = Evaluator::for_scenario(&point, seeds)?;
            let runs = evaluator.evaluate_runs(&policy, point.evaluation.runs);
            Ok(ConvergenceRow {
                iterations,
                metrics: MetricsSummary::of(&runs),
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// CSV output
// ---------------------------------------------------------------------------

fn fmt(v: f64) -> String {
    format!("{v:?}")
}

fn summary_fields(m: &MetricsSummary) -> Vec<String> {
    vec![
        fmt(m.reward.mean),
        fmt(m.reward.std),
        fmt(m.reward.ci95()),
        fmt(m.cost.mean),
        fmt(m.cost.std),
        fmt(m.aoi_s.mean),
        fmt(m.aoi_s.std),
        fmt(m.energy_mj.mean),
        fmt(m.energy_mj.std),
    ]
}

const SUMMARY_HEADER: [&str; 9] = [
    "mean_discounted_reward",
    "std_discounted_reward",
    "ci95_discounted_reward",
    "mean_discounted_cost",
    "std_discounted_cost",
    "mean_discounted_aoi_s",
    "std_discounted_aoi_s",
    "mean_discounted_energy_mJ",
    "std_discounted_energy_mJ",
];

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["beta1", "policy", "training", "runs"];
    header.extend(SUMMARY_HEADER);
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            fmt(r.beta1),
            r.policy.clone(),
            r.training.to_string(),
            r.metrics.reward.n.to_string(),
        ];
        rec.extend(summary_fields(&r.metrics));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn write_convergence_csv<W: Write>(rows: &[ConvergenceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t_max", "runs"];
    header.extend(SUMMARY_HEADER);
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.iterations.to_string(), r.metrics.reward.n.to_string()];
        rec.extend(summary_fields(&r.metrics));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Per-run metrics, one row per (policy, run).
pub fn write_runs_csv<W: Write>(rows: &[(String, Vec<RunMetrics>)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "policy",
        "run",
        "discounted_reward",
        "discounted_cost",
        "discounted_aoi_s",
        "discounted_energy_mJ",
    ])?;
    for (policy, runs) in rows {
        for (k, m) in runs.iter().enumerate() {
            w.write_record([
                policy.clone(),
                k.to_string(),
                fmt(m.discounted_return),
                fmt(m.discounted_cost),
                fmt(m.discounted_avg_aoi_s),
                fmt(m.discounted_energy_mj),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(rows: &[(String, MetricsSummary)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["policy", "runs"];
    header.extend(SUMMARY_HEADER);
    w.write_record(&header)?;
    for (policy, m) in rows {
        let mut rec = vec![policy.clone(), m.reward.n.to_string()];
        rec.extend(summary_fields(m));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub struct ProgressWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> ProgressWriter<W> {
    pub fn new(out: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record([
            "iteration",
            "epsilon",
            "mean_reward",
            "greedy_probe_discounted_reward",
        ])?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, row: &ProgressRow) -> Result<()> {
        self.inner.write_record([
            row.iteration.to_string(),
            fmt(row.epsilon),
            fmt(row.mean_reward),
            fmt(row.greedy_probe),
        ])?;
        self.inner.flush().map_err(|e| Error::io("<csv>", e))
    }
}

/// `slot, aoi_ecn, aoi_user_1..N, r_1..N, action, success, cost, reward`.
/// AoI columns are the ages after the slot, in slot units.
pub fn write_trace_csv<W: Write>(trace: &[SlotOutcome], users: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["slot".to_string(), "aoi_ecn".to_string()];
    header.extend((1..=users).map(|n| format!("aoi_user_{n}")));
    header.extend((1..=users).map(|n| format!("r_{n}")));
    header.extend(["action", "success", "cost", "reward"].map(String::from));
    w.write_record(&header)?;
    for (t, o) in trace.iter().enumerate() {
        let mut rec = vec![(t + 1).to_string()];
        rec.extend(o.state_after.as_slice().iter().map(|a| a.to_string()));
        rec.extend(o.requests.0.iter().map(|&r| (r as u8).to_string()));
        rec.push(o.action.index().to_string());
        rec.push((o.update_success as u8).to_string());
        rec.push(fmt(o.cost));
        rec.push(fmt(o.reward));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn write_file(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}
