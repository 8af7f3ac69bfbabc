//! EAU: tabular expected Sarsa with annealed exploration.
//!
//! Exploration here follows the convention where `epsilon` is the probability
//! of taking the *greedy* action and `1 - epsilon` the probability of the
//! other one. Epsilon grows linearly from `epsilon_start` to `epsilon_end`
//! over the training horizon, so exploration fades as training proceeds.
//!
//! Training is one continuing trajectory from the all-ones state with a zero
//! table. Each iteration touches exactly one table entry.

use rand::Rng;

use crate::environment::{Action, Environment, RequestProfile, SlotState};
use crate::error::{Error, Result};
use crate::qtable::{QTable, StateIndex, StateSpace};
use crate::streams::{self, EnvStreams, Role, Stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerParams {
    pub step_size: f64,
    pub discount: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Total training iterations `T_max`.
    pub iterations: u64,
}

impl LearnerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size <= 1.0) {
            return Err(Error::param(
                "step_size",
                format!("{} not in (0, 1]", self.step_size),
            ));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(Error::param(
                "discount",
                format!("{} not in (0, 1)", self.discount),
            ));
        }
        if !(self.epsilon_start > 0.0
            && self.epsilon_start <= self.epsilon_end
            && self.epsilon_end < 1.0)
        {
            return Err(Error::param(
                "epsilon",
                format!(
                    "need 0 < start <= end < 1, got {} .. {}",
                    self.epsilon_start, self.epsilon_end
                ),
            ));
        }
        Ok(())
    }

    pub fn schedule(&self) -> EpsilonSchedule {
        EpsilonSchedule::new(self.epsilon_start, self.epsilon_end, self.iterations)
    }
}

/// Linear ramp `start + t * (end - start) / T_max`, evaluated from `t`
/// directly so it never accumulates rounding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    start: f64,
    increment: f64,
}

impl EpsilonSchedule {
    pub fn new(start: f64, end: f64, iterations: u64) -> Self {
        let increment = if iterations == 0 {
            0.0
        } else {
            (end - start) / iterations as f64
        };
        Self { start, increment }
    }

    pub fn increment(&self) -> f64 {
        self.increment
    }

    #[inline]
    pub fn at(&self, iteration: u64) -> f64 {
        self.start + iteration as f64 * self.increment
    }
}

/// Action probabilities of the exploring policy at one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExplorationPolicy {
    pub epsilon: f64,
}

impl ExplorationPolicy {
    /// `[P(Wait), P(Update)]` at state `s`.
    pub fn probabilities(&self, q: &QTable, s: StateIndex) -> [f64; 2] {
        let mut p = [1.0 - self.epsilon; 2];
        p[q.greedy_at(s).index()] = self.epsilon;
        p
    }
}

/// Greedy action with probability `epsilon`, the other with `1 - epsilon`.
/// Draws exactly one `f64`.
#[inline]
pub fn select_action<R: Rng + ?Sized>(
    q: &QTable,
    s: StateIndex,
    epsilon: f64,
    rng: &mut R,
) -> Action {
    let greedy = q.greedy_at(s);
    if rng.gen::<f64>() < epsilon {
        greedy
    } else {
        greedy.other()
    }
}

/// Policy-weighted value of the successor state.
#[inline]
pub fn expected_next_value(q: &QTable, next: StateIndex, epsilon: f64) -> f64 {
    let (wait, update) = q.pair(next);
    let (best, rest) = if update > wait {
        (update, wait)
    } else {
        (wait, update)
    };
    epsilon * best + (1.0 - epsilon) * rest
}

/// Moves `Q(s, a)` by `step_size` times the TD error and returns that error.
#[inline]
pub fn td_update(
    q: &mut QTable,
    s: StateIndex,
    a: Action,
    reward: f64,
    next: StateIndex,
    params: &LearnerParams,
    epsilon: f64,
) -> f64 {
    let current = q.get(s, a);
    let td_error = reward + params.discount * expected_next_value(q, next, epsilon) - current;
    q.set(s, a, current + params.step_size * td_error);
    td_error
}

/// Reward statistics over a batch of training iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardWindow {
    pub iterations: u64,
    pub reward_sum: f64,
    pub min_reward: f64,
    pub updates: u64,
}

impl RewardWindow {
    pub fn mean_reward(&self) -> f64 {
        if self.iterations == 0 {
            0.0
        } else {
            self.reward_sum / self.iterations as f64
        }
    }
}

/// Resumable training loop.
pub struct Trainer {
    env: Environment,
    params: LearnerParams,
    schedule: EpsilonSchedule,
    table: QTable,
    state: SlotState,
    seed: u64,
    iteration: u64,
    env_streams: EnvStreams,
    exploration: Stream,
    requests: RequestProfile,
}

impl Trainer {
    pub fn new(
        env: Environment,
        params: LearnerParams,
        fingerprint: u64,
        seed: u64,
    ) -> Result<Self> {
        params.validate()?;
        let space = StateSpace::new(env.users(), env.max_age())?;
        let mut table = QTable::zeros(space, fingerprint);
        table.set_progress(0, seed, env.initial_state());
        Self::resume(env, params, table)
    }

    /// Continues from a table saved mid-training. Streams are repositioned so
    /// the continuation is identical to an uninterrupted run.
    pub fn resume(env: Environment, params: LearnerParams, table: QTable) -> Result<Self> {
        params.validate()?;
        let space = table.space();
        if space.users() != env.users() || space.max_age() != env.max_age() {
            return Err(Error::Config(format!(
                "table shape N={}, M={} does not match environment N={}, M={}",
                space.users(),
                space.max_age(),
                env.users(),
                env.max_age()
            )));
        }
        let seed = table.seed();
        let iteration = table.iterations();
        let mut env_streams = EnvStreams::new(seed, 0);
        env_streams.seek(iteration, env.users());
        let mut exploration = streams::substream(seed, 0, Role::Exploration);
        streams::seek_slots(&mut exploration, iteration, 1);
        let state = table.cursor().clone();
        let users = env.users();
        Ok(Self {
            schedule: params.schedule(),
            env,
            params,
            table,
            state,
            seed,
            iteration,
            env_streams,
            exploration,
            requests: RequestProfile::none(users),
        })
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn remaining(&self) -> u64 {
        self.params.iterations.saturating_sub(self.iteration)
    }

    pub fn is_done(&self) -> bool {
        self.remaining() == 0
    }

    /// Epsilon the next iteration will use.
    pub fn epsilon(&self) -> f64 {
        self.schedule.at(self.iteration)
    }

    pub fn state(&self) -> &SlotState {
        &self.state
    }

    pub fn environment(&self) -> &Environment {
        &self.env
    }

    pub fn table(&self) -> &QTable {
        &self.table
    }

    /// Runs up to `n` iterations, stopping at `T_max`.
    pub fn run(&mut self, n: u64) -> RewardWindow {
        let n = n.min(self.remaining());
        let mut window = RewardWindow {
            iterations: n,
            reward_sum: 0.0,
            min_reward: f64::INFINITY,
            updates: 0,
        };
        let space = *self.table.space();
        let mut s = space.encode_unchecked(&self.state);
        for _ in 0..n {
            let epsilon = self.schedule.at(self.iteration);
            let a = select_action(&self.table, s, epsilon, &mut self.exploration);
            let t = self.env.advance(
                &mut self.state,
                a,
                &mut self.env_streams,
                &mut self.requests,
            );
            let next = space.encode_unchecked(&self.state);
            td_update(&mut self.table, s, a, t.reward, next, &self.params, epsilon);
            window.reward_sum += t.reward;
            window.min_reward = window.min_reward.min(t.reward);
            window.updates += a.is_update() as u64;
            s = next;
            self.iteration += 1;
        }
        self.table
            .set_progress(self.iteration, self.seed, self.state.clone());
        window
    }

    pub fn run_to_end(&mut self) -> RewardWindow {
        self.run(self.remaining())
    }

    pub fn into_table(self) -> QTable {
        self.table
    }
}

/// Trains for the full horizon from scratch.
pub fn train(
    env: Environment,
    params: LearnerParams,
    fingerprint: u64,
    seed: u64,
) -> Result<QTable> {
    let mut trainer = Trainer::new(env, params, fingerprint, seed)?;
    trainer.run_to_end();
    Ok(trainer.into_table())
}
