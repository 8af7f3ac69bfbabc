//! The time-slotted status-update MDP.
//!
//! Per slot: the ECN has served this slot's requests and sits at the decision
//! point just before the update phase. It chooses an [`Action`]; if it asks
//! for an update, one channel draw decides whether the fresh packet arrives.
//! The next slot's requests are then drawn and every AoI advances by one slot
//! (or resets). Cost and reward are charged on the AoI seen at that next
//! decision point.
//!
//! AoI values are integer slot counts in `1..=max_age`; index 0 of a
//! [`SlotState`] is the ECN, `1..=N` are the users.

use rand::Rng;

use crate::channel;
use crate::error::{Error, Result};
use crate::streams::EnvStreams;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SlotState {
    aoi: Vec<u32>,
}

impl SlotState {
    pub fn new(aoi: Vec<u32>, max_age: u32) -> Result<Self> {
        if aoi.len() < 2 {
            return Err(Error::InvalidState(format!(
                "need the ECN and at least one user, got {} entries",
                aoi.len()
            )));
        }
        if let Some(bad) = aoi.iter().find(|&&a| a == 0 || a > max_age) {
            return Err(Error::InvalidState(format!(
                "age {bad} outside 1..={max_age}"
            )));
        }
        Ok(Self { aoi })
    }

    /// Every age at one slot.
    pub fn initial(users: usize) -> Self {
        Self {
            aoi: vec![1; users + 1],
        }
    }

    pub fn users(&self) -> usize {
        self.aoi.len() - 1
    }

    pub fn ecn(&self) -> u32 {
        self.aoi[0]
    }

    /// AoI of user `n`, 1-based.
    pub fn user(&self, n: usize) -> u32 {
        self.aoi[n]
    }

    pub fn user_ages(&self) -> &[u32] {
        &self.aoi[1..]
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.aoi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Wait = 0,
    Update = 1,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::Wait, Action::Update];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Action::Wait
        } else {
            Action::Update
        }
    }

    pub fn other(self) -> Self {
        match self {
            Action::Wait => Action::Update,
            Action::Update => Action::Wait,
        }
    }

    pub fn is_update(self) -> bool {
        self == Action::Update
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RequestProfile(pub Vec<bool>);

impl RequestProfile {
    pub fn none(users: usize) -> Self {
        Self(vec![false; users])
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&r| r).count()
    }
}

/// Draws one Bernoulli request per user. Consumes exactly one `f64` per user.
pub fn sample_requests_into<R: Rng + ?Sized>(probs: &[f64], rng: &mut R, out: &mut RequestProfile) {
    out.0.clear();
    out.0.extend(probs.iter().map(|&p| rng.gen::<f64>() < p));
}

pub fn sample_requests<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> RequestProfile {
    let mut out = RequestProfile::none(probs.len());
    sample_requests_into(probs, rng, &mut out);
    out
}

/// Applies one slot of AoI evolution in place.
pub fn evolve_aoi_in_place(
    aoi: &mut SlotState,
    requests: &RequestProfile,
    prev_update_success: bool,
    max_age: u32,
) {
    debug_assert_eq!(requests.0.len(), aoi.users());
    let ages = &mut aoi.aoi;
    ages[0] = if prev_update_success {
        1
    } else {
        (ages[0] + 1).min(max_age)
    };
    let ecn = ages[0];
    for (age, &requested) in ages[1..].iter_mut().zip(&requests.0) {
        *age = if requested {
            ecn
        } else {
            (*age + 1).min(max_age)
        };
    }
}

pub fn evolve_aoi(
    state: &SlotState,
    requests: &RequestProfile,
    prev_update_success: bool,
    max_age: u32,
) -> SlotState {
    let mut next = state.clone();
    evolve_aoi_in_place(&mut next, requests, prev_update_success, max_age);
    next
}

/// Weights of the per-slot cost. Energy is in mJ, AoI in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct CostParams {
    pub beta1: f64,
    pub beta2: f64,
    pub weights: Vec<f64>,
    pub energy_mj: f64,
}

impl CostParams {
    pub fn new(beta1: f64, beta2: f64, weights: Vec<f64>, energy_mj: f64) -> Result<Self> {
        if !(beta1.is_finite() && beta1 >= 0.0) {
            return Err(Error::param("beta1", format!("must be >= 0, got {beta1}")));
        }
        if !(beta2.is_finite() && beta2 >= 0.0) {
            return Err(Error::param("beta2", format!("must be >= 0, got {beta2}")));
        }
        if !(energy_mj.is_finite() && energy_mj > 0.0) {
            return Err(Error::param(
                "energy",
                format!("must be > 0, got {energy_mj}"),
            ));
        }
        if weights.is_empty() {
            return Err(Error::param("user_weights", "need at least one user"));
        }
        // a single user carries the whole weight
        if weights.len() > 1 && weights.iter().any(|&w| !(w > 0.0 && w < 1.0)) {
            return Err(Error::param(
                "user_weights",
                "each weight must lie in (0, 1)",
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::param(
                "user_weights",
                format!("must sum to 1, got {sum}"),
            ));
        }
        Ok(Self {
            beta1,
            beta2,
            weights,
            energy_mj,
        })
    }

    pub fn uniform_weights(users: usize) -> Vec<f64> {
        vec![1.0 / users as f64; users]
    }

    /// `sum_n w_n * aoi_n` in seconds.
    #[inline]
    pub fn weighted_aoi_s(&self, state: &SlotState, slot_s: f64) -> f64 {
        self.weights
            .iter()
            .zip(state.user_ages())
            .map(|(&w, &a)| w * f64::from(a) * slot_s)
            .sum()
    }

    /// Constant that makes the reward non-negative in every reachable slot:
    /// the cost of all users at the age cap plus one update.
    pub fn base_reward_constant(&self, max_age: u32, slot_s: f64) -> f64 {
        let w: f64 = self.weights.iter().sum();
        self.beta1 * w * f64::from(max_age) * slot_s + self.beta2 * self.energy_mj
    }

    /// [`Self::base_reward_constant`] plus one more update's energy, so the
    /// worst reachable slot still earns a strictly positive reward.
    pub fn padded_reward_constant(&self, max_age: u32, slot_s: f64) -> f64 {
        self.base_reward_constant(max_age, slot_s) + self.beta2 * self.energy_mj
    }
}

/// `beta1 * sum_n w_n * aoi_n[s] + beta2 * action * E`.
#[inline]
pub fn slot_cost(state_after: &SlotState, action: Action, params: &CostParams, slot_s: f64) -> f64 {
    let energy = if action.is_update() {
        params.energy_mj
    } else {
        0.0
    };
    params.beta1 * params.weighted_aoi_s(state_after, slot_s) + params.beta2 * energy
}

#[inline]
pub fn slot_reward(cost: f64, reward_constant: f64) -> f64 {
    reward_constant - cost
}

/// Full record of one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotOutcome {
    pub state_before: SlotState,
    /// Requests observed at the start of the next slot.
    pub requests: RequestProfile,
    pub action: Action,
    pub update_success: bool,
    pub cost: f64,
    pub reward: f64,
    pub state_after: SlotState,
}

/// Compact per-slot result used on hot paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub update_success: bool,
    pub cost: f64,
    pub reward: f64,
    /// `sum_n w_n * aoi_n` in seconds, after the transition.
    pub weighted_aoi_s: f64,
    /// Energy spent this slot in mJ.
    pub energy_mj: f64,
}

#[derive(Debug, Clone)]
pub struct Environment {
    request_probs: Vec<f64>,
    failure_prob: f64,
    max_age: u32,
    slot_s: f64,
    cost: CostParams,
    reward_constant: f64,
}

impl Environment {
    pub fn new(
        request_probs: Vec<f64>,
        failure_prob: f64,
        max_age: u32,
        slot_s: f64,
        cost: CostParams,
    ) -> Result<Self> {
        if request_probs.is_empty() {
            return Err(Error::param("request_probs", "need at least one user"));
        }
        if request_probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::param(
                "request_probs",
                "each probability must lie in [0, 1]",
            ));
        }
        if cost.weights.len() != request_probs.len() {
            return Err(Error::param(
                "user_weights",
                format!(
                    "{} weights for {} users",
                    cost.weights.len(),
                    request_probs.len()
                ),
            ));
        }
        if !(0.0..=1.0).contains(&failure_prob) {
            return Err(Error::param(
                "failure_prob",
                format!("{failure_prob} not in [0, 1]"),
            ));
        }
        if max_age < 1 {
            return Err(Error::param("max_age", "must be >= 1"));
        }
        if !(slot_s.is_finite() && slot_s > 0.0) {
            return Err(Error::param("slot duration", "must be > 0"));
        }
        let reward_constant = cost.padded_reward_constant(max_age, slot_s);
        Ok(Self {
            request_probs,
            failure_prob,
            max_age,
            slot_s,
            cost,
            reward_constant,
        })
    }

    pub fn users(&self) -> usize {
        self.request_probs.len()
    }

    pub fn max_age(&self) -> u32 {
        self.max_age
    }

    pub fn slot_seconds(&self) -> f64 {
        self.slot_s
    }

    pub fn failure_prob(&self) -> f64 {
        self.failure_prob
    }

    pub fn request_probs(&self) -> &[f64] {
        &self.request_probs
    }

    pub fn cost_params(&self) -> &CostParams {
        &self.cost
    }

    pub fn reward_constant(&self) -> f64 {
        self.reward_constant
    }

    pub fn initial_state(&self) -> SlotState {
        SlotState::initial(self.users())
    }

    /// Resolves a slot from already-sampled randomness. An update can only
    /// succeed when one was requested.
    pub fn apply(
        &self,
        state: &mut SlotState,
        action: Action,
        channel_ok: bool,
        requests: &RequestProfile,
    ) -> Transition {
        let update_success = action.is_update() && channel_ok;
        evolve_aoi_in_place(state, requests, update_success, self.max_age);
        let weighted_aoi_s = self.cost.weighted_aoi_s(state, self.slot_s);
        let energy_mj = if action.is_update() {
            self.cost.energy_mj
        } else {
            0.0
        };
        let cost = self.cost.beta1 * weighted_aoi_s + self.cost.beta2 * energy_mj;
        Transition {
            update_success,
            cost,
            reward: slot_reward(cost, self.reward_constant),
            weighted_aoi_s,
            energy_mj,
        }
    }

    /// Samples one slot and advances `state` in place. The channel is drawn
    /// every slot (and ignored when idle) so stream positions depend only on
    /// the slot count.
    #[inline]
    pub fn advance(
        &self,
        state: &mut SlotState,
        action: Action,
        streams: &mut EnvStreams,
        requests: &mut RequestProfile,
    ) -> Transition {
        let channel_ok = channel::sample_update_success(self.failure_prob, &mut streams.channel);
        sample_requests_into(&self.request_probs, &mut streams.requests, requests);
        self.apply(state, action, channel_ok, requests)
    }

    pub fn step(&self, state: &SlotState, action: Action, streams: &mut EnvStreams) -> SlotOutcome {
        let mut next = state.clone();
        let mut requests = RequestProfile::none(self.users());
        let t = self.advance(&mut next, action, streams, &mut requests);
        SlotOutcome {
            state_before: state.clone(),
            requests,
            action,
            update_success: t.update_success,
            cost: t.cost,
            reward: t.reward,
            state_after: next,
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn st(v: &[u32]) -> SlotState {
        SlotState::new(v.to_vec(), 20).unwrap()
    }

    fn req(v: &[u8]) -> RequestProfile {
        RequestProfile(v.iter().map(|&r| r == 1).collect())
    }

    fn paper_cost(beta1: f64) -> CostParams {
        CostParams::new(beta1, 1.0, CostParams::uniform_weights(3), 15.0).unwrap()
    }

    #[test]
    fn evolve_hand_cases() {
        assert_eq!(
            evolve_aoi(&st(&[1, 1, 1, 1]), &req(&[1, 0, 0]), true, 20),
            st(&[1, 1, 2, 2])
        );
        assert_eq!(
            evolve_aoi(&st(&[5, 3, 3, 3]), &req(&[1, 1, 1]), false, 20),
            st(&[6, 6, 6, 6])
        );
        let top = st(&[20, 20, 20, 20]);
        assert_eq!(evolve_aoi(&top, &req(&[0, 0, 0]), false, 20), top);
    }

    #[test]
    fn state_validation() {
        assert!(SlotState::new(vec![0, 1], 5).is_err());
        assert!(SlotState::new(vec![1, 6], 5).is_err());
        assert!(SlotState::new(vec![1], 5).is_err());
        assert!(SlotState::new(vec![5, 5], 5).is_ok());
    }

    #[test]
    fn request_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(sample_requests(&[1.0; 3], &mut rng), req(&[1, 1, 1]));
        assert_eq!(sample_requests(&[0.0; 3], &mut rng), req(&[0, 0, 0]));
        let n = 1_000_000;
        let mut counts = [0usize; 3];
        let mut buf = RequestProfile::default();
        for _ in 0..n {
            sample_requests_into(&[0.6; 3], &mut rng, &mut buf);
            for (c, &r) in counts.iter_mut().zip(&buf.0) {
                *c += r as usize;
            }
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.6).abs() < 0.002);
        }
    }

    #[test]
    fn cost_hand_values() {
        let s = st(&[1, 1, 1, 1]);
        assert!((slot_cost(&s, Action::Update, &paper_cost(1.0), 2.0) - 17.0).abs() < 1e-12);
        let no_aoi = CostParams::new(0.0, 1.0, CostParams::uniform_weights(3), 15.0).unwrap();
        assert_eq!(slot_cost(&s, Action::Wait, &no_aoi, 2.0), 0.0);
        assert!((slot_cost(&s, Action::Wait, &paper_cost(7.0), 2.0) - 14.0).abs() < 1e-12);
    }

    #[test]
    fn reward_constants() {
        let c = paper_cost(1.0);
        assert!((c.base_reward_constant(20, 2.0) - 55.0).abs() < 1e-12);
        assert!((slot_reward(17.0, 55.0) - 38.0).abs() < 1e-12);
        assert_eq!(slot_reward(55.0, 55.0), 0.0);
        let c7 = paper_cost(7.0);
        assert!((c7.base_reward_constant(20, 2.0) - 295.0).abs() < 1e-9);
        assert!((slot_reward(14.0, 295.0) - 281.0).abs() < 1e-12);
        assert!((c.padded_reward_constant(20, 2.0) - 70.0).abs() < 1e-12);
    }

    #[test]
    fn weights_validated() {
        assert!(CostParams::new(1.0, 1.0, vec![0.5, 0.6], 15.0).is_err());
        assert!(CostParams::new(1.0, 1.0, vec![0.0, 1.0], 15.0).is_err());
        assert!(CostParams::new(-1.0, 1.0, vec![0.5, 0.5], 15.0).is_err());
        assert!(CostParams::new(1.0, 1.0, vec![1.0], 15.0).is_ok());
    }

    fn env(p_f: f64) -> Environment {
        Environment::new(vec![0.6; 3], p_f, 20, 2.0, paper_cost(1.0)).unwrap()
    }

    #[test]
    fn idle_never_succeeds_or_spends() {
        let e = env(0.0);
        let mut streams = EnvStreams::new(1, 0);
        let mut s = e.initial_state();
        for _ in 0..1000 {
            let o = e.step(&s, Action::Wait, &mut streams);
            assert!(!o.update_success);
            assert!((o.cost - e.cost_params().weighted_aoi_s(&o.state_after, 2.0)).abs() < 1e-12);
            s = o.state_after;
        }
    }

    #[test]
    fn certain_update_resets_ecn() {
        let e = env(0.0);
        let mut streams = EnvStreams::new(1, 0);
        let s = st(&[7, 9, 9, 12]);
        let o = e.step(&s, Action::Update, &mut streams);
        assert!(o.update_success);
        assert_eq!(o.state_after.ecn(), 1);
        assert!((o.reward - (e.reward_constant() - o.cost)).abs() < 1e-12);
    }

    #[test]
    fn scripted_five_slot_trace() {
        // D = 2 s, E = 15 mJ, beta1 = beta2 = 1, w = 1/3, C1 = 70.
        let e = env(0.1125);
        let script: [(Action, bool, [u8; 3]); 5] = [
            (Action::Update, true, [1, 0, 0]),
            (Action::Wait, true, [0, 1, 0]),
            (Action::Update, false, [0, 0, 1]),
            (Action::Wait, false, [1, 1, 1]),
            (Action::Update, true, [0, 0, 0]),
        ];
        // Hand simulation:
        // t1 (1,1,1,1) U ok  r=(1,0,0) -> (1,1,2,2) aoi_w = 2*(5/3) = 10/3, cost 10/3+15
        // t2 (1,1,2,2) W     r=(0,1,0) -> (2,2,2,3) aoi_w = 2*(7/3) = 14/3, cost 14/3
        // t3 (2,2,2,3) U bad r=(0,0,1) -> (3,3,3,3) aoi_w = 6,            cost 6+15
        // t4 (3,3,3,3) W     r=(1,1,1) -> (4,4,4,4) aoi_w = 8,            cost 8
        // t5 (4,4,4,4) U ok  r=(0,0,0) -> (1,5,5,5) aoi_w = 10,           cost 10+15
        let expected: [([u32; 4], f64); 5] = [
            ([1, 1, 2, 2], 10.0 / 3.0 + 15.0),
            ([2, 2, 2, 3], 14.0 / 3.0),
            ([3, 3, 3, 3], 21.0),
            ([4, 4, 4, 4], 8.0),
            ([1, 5, 5, 5], 25.0),
        ];
        let mut s = e.initial_state();
        for ((action, ok, r), (ages, cost)) in script.iter().zip(expected) {
            let t = e.apply(&mut s, *action, *ok, &req(r));
            assert_eq!(s.as_slice(), &ages);
            assert!((t.cost - cost).abs() < 1e-12, "{} vs {cost}", t.cost);
            assert!((t.reward - (70.0 - cost)).abs() < 1e-12);
            assert_eq!(t.update_success, action.is_update() && *ok);
        }
    }

    proptest::proptest! {
        #[test]
        fn users_never_fresher_than_ecn(seed in 0u64..1000, max_age in 1u32..8, p_f in 0.0f64..1.0) {
            let e = Environment::new(vec![0.3, 0.7], p_f, max_age, 2.0,
                CostParams::new(1.0, 1.0, vec![0.5, 0.5], 15.0).unwrap()).unwrap();
            let mut streams = EnvStreams::new(seed, 0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = e.initial_state();
            for _ in 0..200 {
                let a = if rng.gen::<bool>() { Action::Update } else { Action::Wait };
                let o = e.step(&s, a, &mut streams);
                proptest::prop_assert!(!o.update_success || a.is_update());
                for n in 1..=2 {
                    let age = o.state_after.user(n);
                    proptest::prop_assert!(age >= o.state_after.ecn());
                    proptest::prop_assert!(age <= max_age);
                    if o.requests.0[n - 1] {
                        proptest::prop_assert_eq!(age, o.state_after.ecn());
                    } else {
                        proptest::prop_assert_eq!(age, (s.user(n) + 1).min(max_age));
                    }
                }
                s = o.state_after;
            }
        }
    }
}
