//! Test-only oracles, written independently of the crate's simulation path.
#![allow(dead_code)]

/// Exact value iteration for the single-user instance, built from the
/// closed-form transition probabilities. Ages are in slots, `1..=max_age`.
pub struct TinyModel {
    pub max_age: u32,
    pub request_prob: f64,
    pub failure_prob: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub energy_mj: f64,
    pub slot_s: f64,
    pub reward_constant: f64,
    pub discount: f64,
}

pub struct Solution {
    /// `q[ecn - 1][user - 1][action]`
    pub q: Vec<Vec<[f64; 2]>>,
    pub sweeps: usize,
}

impl TinyModel {
    /// Successor distribution of `(ecn, user)` under `action` as
    /// `(probability, next_ecn, next_user)`.
    pub fn successors(&self, ecn: u32, user: u32, action: usize) -> Vec<(f64, u32, u32)> {
        let cap = self.max_age;
        let p_ok = if action == 1 {
            1.0 - self.failure_prob
        } else {
            0.0
        };
        let mut out = Vec::new();
        for (p_z, delivered) in [(p_ok, true), (1.0 - p_ok, false)] {
            if p_z == 0.0 {
                continue;
            }
            let next_ecn = if delivered { 1 } else { (ecn + 1).min(cap) };
            for (p_r, requested) in [(self.request_prob, true), (1.0 - self.request_prob, false)] {
                if p_r == 0.0 {
                    continue;
                }
                let next_user = if requested {
                    next_ecn
                } else {
                    (user + 1).min(cap)
                };
                out.push((p_z * p_r, next_ecn, next_user));
            }
        }
        out
    }

    pub fn reward(&self, next_user: u32, action: usize) -> f64 {
        let cost = self.beta1 * f64::from(next_user) * self.slot_s
            + self.beta2 * action as f64 * self.energy_mj;
        self.reward_constant - cost
    }

    pub fn solve(&self) -> Solution {
        let m = self.max_age as usize;
        let mut q = vec![vec![[0.0f64; 2]; m]; m];
        let mut sweeps = 0;
        loop {
            sweeps += 1;
            let mut next = q.clone();
            let mut delta = 0.0f64;
            for e in 1..=self.max_age {
                for u in 1..=self.max_age {
                    for a in 0..2 {
                        let v: f64 = self
                            .successors(e, u, a)
                            .into_iter()
                            .map(|(p, e2, u2)| {
                                let best = q[e2 as usize - 1][u2 as usize - 1];
                                p * (self.reward(u2, a) + self.discount * best[0].max(best[1]))
                            })
                            .sum();
                        delta = delta.max((v - q[e as usize - 1][u as usize - 1][a]).abs());
                        next[e as usize - 1][u as usize - 1][a] = v;
                    }
                }
            }
            q = next;
            if delta < 1e-10 {
                break;
            }
        }
        Solution { q, sweeps }
    }
}

/// Straight-line AoI recursion using the three-case per-user form, with the
/// age cap applied as a separate step.
pub struct AoiOracle {
    pub ecn: u32,
    pub users: Vec<u32>,
    pub cap: u32,
}

impl AoiOracle {
    pub fn new(users: usize, cap: u32) -> Self {
        Self {
            ecn: 1,
            users: vec![1; users],
            cap,
        }
    }

    pub fn step(&mut self, prev_delivered: bool, requests: &[bool]) {
        let prev_ecn = self.ecn;
        let mut ecn = if prev_delivered { 1 } else { prev_ecn + 1 };
        if ecn > self.cap {
            ecn = self.cap;
        }
        for (n, &r) in requests.iter().enumerate() {
            let mut age = if r && prev_delivered {
                1
            } else if r {
                prev_ecn + 1
            } else {
                self.users[n] + 1
            };
            if age > self.cap {
                age = self.cap;
            }
            self.users[n] = age;
        }
        self.ecn = ecn;
    }

    pub fn ages(&self) -> Vec<u32> {
        let mut v = vec![self.ecn];
        v.extend(&self.users);
        v
    }
}
