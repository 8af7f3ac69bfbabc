//! Decision rules behind one interface. `zero_wait` is the reference baseline;
//! `never`, `periodic` and `random` bracket the learned policy in reports.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;

use crate::environment::{Action, SlotState};
use crate::error::{Error, Result};
use crate::qtable::QTable;

/// A policy as named in configs and on the command line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicySpec {
    ZeroWait,
    NeverUpdate,
    Periodic(u64),
    Random(f64),
    /// Greedy lookup in a trained table.
    Eau,
}

impl PolicySpec {
    pub fn is_learned(&self) -> bool {
        matches!(self, PolicySpec::Eau)
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::ZeroWait => f.write_str("zero_wait"),
            PolicySpec::NeverUpdate => f.write_str("never_update"),
            PolicySpec::Periodic(k) => write!(f, "periodic:{k}"),
            PolicySpec::Random(q) => write!(f, "random:{q}"),
            PolicySpec::Eau => f.write_str("eau"),
        }
    }
}

impl FromStr for PolicySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let unknown = || Error::UnknownPolicy(s.to_string());
        match (name.trim(), arg) {
            ("zero_wait", None) => Ok(PolicySpec::ZeroWait),
            ("never_update" | "never", None) => Ok(PolicySpec::NeverUpdate),
            ("eau" | "greedy_q", None) => Ok(PolicySpec::Eau),
            ("periodic", Some(k)) => {
                let k: u64 = k.trim().parse().map_err(|_| unknown())?;
                if k == 0 {
                    return Err(Error::param("periodic", "period must be >= 1"));
                }
                Ok(PolicySpec::Periodic(k))
            }
            ("random", Some(q)) => {
                let q: f64 = q.trim().parse().map_err(|_| unknown())?;
                if !(0.0..=1.0).contains(&q) {
                    return Err(Error::param(
                        "random",
                        format!("probability {q} not in [0, 1]"),
                    ));
                }
                Ok(PolicySpec::Random(q))
            }
            _ => Err(unknown()),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Policy {
    ZeroWait,
    NeverUpdate,
    Periodic(u64),
    Random(f64),
    GreedyQ(Arc<QTable>),
}

impl Policy {
    /// Builds a table-free policy. Learned policies go through [`Policy::greedy`].
    pub fn baseline(spec: PolicySpec) -> Result<Self> {
        match spec {
            PolicySpec::ZeroWait => Ok(Policy::ZeroWait),
            PolicySpec::NeverUpdate => Ok(Policy::NeverUpdate),
            PolicySpec::Periodic(0) => Err(Error::param("periodic", "period must be >= 1")),
            PolicySpec::Periodic(k) => Ok(Policy::Periodic(k)),
            PolicySpec::Random(q) if (0.0..=1.0).contains(&q) => Ok(Policy::Random(q)),
            PolicySpec::Random(q) => Err(Error::param("random", format!("{q} not in [0, 1]"))),
            PolicySpec::Eau => Err(Error::Config(
                "the learned policy needs a trained table".into(),
            )),
        }
    }

    /// Greedy lookup policy; the table must belong to the active scenario.
    pub fn greedy(table: Arc<QTable>, scenario_fingerprint: u64) -> Result<Self> {
        table.ensure_fingerprint(scenario_fingerprint)?;
        Ok(Policy::GreedyQ(table))
    }

    pub fn name(&self) -> String {
        match self {
            Policy::GreedyQ(_) => "eau".to_string(),
            Policy::ZeroWait => PolicySpec::ZeroWait.to_string(),
            Policy::NeverUpdate => PolicySpec::NeverUpdate.to_string(),
            Policy::Periodic(k) => PolicySpec::Periodic(*k).to_string(),
            Policy::Random(q) => PolicySpec::Random(*q).to_string(),
        }
    }

    /// `slot_index` counts from 0. Only `Random` touches the stream.
    #[inline]
    pub fn decide<R: Rng + ?Sized>(
        &self,
        state: &SlotState,
        slot_index: u64,
        rng: &mut R,
    ) -> Action {
        match self {
            Policy::ZeroWait => Action::Update,
            Policy::NeverUpdate => Action::Wait,
            Policy::Periodic(k) => {
                if slot_index.is_multiple_of(*k) {
                    Action::Update
                } else {
                    Action::Wait
                }
            }
            Policy::Random(q) => {
                if rng.gen::<f64>() < *q {
                    Action::Update
                } else {
                    Action::Wait
                }
            }
            Policy::GreedyQ(table) => table.greedy_at(table.index_of(state)),
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::qtable::StateSpace;

    #[test]
    fn fixed_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = SlotState::new(vec![4, 6, 9], 10).unwrap();
        for t in 0..20 {
            assert_eq!(Policy::ZeroWait.decide(&s, t, &mut rng), Action::Update);
            assert_eq!(Policy::NeverUpdate.decide(&s, t, &mut rng), Action::Wait);
        }
        let periodic: Vec<u8> = (0..6)
            .map(|t| Policy::Periodic(2).decide(&s, t, &mut rng) as u8)
            .collect();
        assert_eq!(periodic, [1, 0, 1, 0, 1, 0]);
    }

    #[test]
    fn random_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = SlotState::initial(2);
        let n = 100_000;
        let ups = (0..n)
            .filter(|&t| Policy::Random(0.3).decide(&s, t, &mut rng).is_update())
            .count();
        assert!((ups as f64 / n as f64 - 0.3).abs() < 0.005);
    }

    #[test]
    fn parse_specs() {
        assert_eq!(
            "zero_wait".parse::<PolicySpec>().unwrap(),
            PolicySpec::ZeroWait
        );
        assert_eq!(
            "periodic:3".parse::<PolicySpec>().unwrap(),
            PolicySpec::Periodic(3)
        );
        assert_eq!(
            "random:0.25".parse::<PolicySpec>().unwrap(),
            PolicySpec::Random(0.25)
        );
        assert_eq!("eau".parse::<PolicySpec>().unwrap(), PolicySpec::Eau);
        assert!("periodic:0".parse::<PolicySpec>().is_err());
        assert!("random:2".parse::<PolicySpec>().is_err());
        assert!("sometimes".parse::<PolicySpec>().is_err());
        for spec in [
            PolicySpec::ZeroWait,
            PolicySpec::Periodic(4),
            PolicySpec::Random(0.5),
        ] {
            assert_eq!(spec.to_string().parse::<PolicySpec>().unwrap(), spec);
        }
    }

    #[test]
    fn greedy_checks_fingerprint() {
        let table = Arc::new(QTable::zeros(StateSpace::new(2, 4).unwrap(), 42));
        assert!(matches!(
            Policy::greedy(table.clone(), 43),
            Err(Error::FingerprintMismatch { .. })
        ));
        let p = Policy::greedy(table, 42).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // zero table: tie rule says wait
        assert_eq!(p.decide(&SlotState::initial(2), 0, &mut rng), Action::Wait);
    }
}
