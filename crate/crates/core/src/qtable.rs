//! Dense action-value table over the product space of ages.
//!
//! A state with ages `a_0..a_N` maps to `sum_m (a_m - 1) * M^m`, `M` being
//! the age cap. Entry `(s, a)` lives at `2 * index(s) + a`.
//!
//! # File format
//!
//! All integers little-endian.
//!
//! | offset | size | field |
//! |---|---|---|
//! | 0 | 8 | magic `b"EAUQTBL\0"` |
//! | 8 | 4 | format version, currently 1 |
//! | 12 | 4 | number of users `N` |
//! | 16 | 4 | age cap `M` |
//! | 20 | 4 | reserved, zero |
//! | 24 | 8 | scenario fingerprint |
//! | 32 | 8 | training iterations completed |
//! | 40 | 8 | training seed |
//! | 48 | 8 | entry count, `2 * M^(N+1)` |
//! | 56 | 4 * (N+1) | training cursor: ages of the state the next iteration starts from |
//! | ... | 8 * count | `f64` entries, state-major, action-minor |
//!
//! The seed and cursor let an interrupted training run continue exactly where
//! it stopped.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::environment::{Action, SlotState};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 8] = *b"EAUQTBL\0";
pub const FORMAT_VERSION: u32 = 1;
const FIXED_HEADER: usize = 56;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateIndex(pub usize);

/// Shape of the state space: `N` users plus the ECN, ages in `1..=M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateSpace {
    users: usize,
    max_age: u32,
}

impl StateSpace {
    pub fn new(users: usize, max_age: u32) -> Result<Self> {
        if users == 0 {
            return Err(Error::param("users", "must be >= 1"));
        }
        if max_age == 0 {
            return Err(Error::param("max_age", "must be >= 1"));
        }
        (max_age as usize)
            .checked_pow(users as u32 + 1)
            .and_then(|s| s.checked_mul(2))
            .ok_or_else(|| Error::param("max_age", "state space does not fit in memory indices"))?;
        Ok(Self { users, max_age })
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn max_age(&self) -> u32 {
        self.max_age
    }

    pub fn num_states(&self) -> usize {
        (self.max_age as usize).pow(self.users as u32 + 1)
    }

    pub fn num_entries(&self) -> usize {
        self.num_states() * Action::ALL.len()
    }

    pub fn encode(&self, state: &SlotState) -> Result<StateIndex> {
        let ages = state.as_slice();
        if ages.len() != self.users + 1 {
            return Err(Error::InvalidState(format!(
                "state has {} entries, space expects {}",
                ages.len(),
                self.users + 1
            )));
        }
        if let Some(&bad) = ages.iter().find(|&&a| a == 0 || a > self.max_age) {
            return Err(Error::InvalidState(format!(
                "age {bad} outside 1..={}",
                self.max_age
            )));
        }
        Ok(self.encode_unchecked(state))
    }

    /// Caller guarantees the state belongs to this space.
    #[inline]
    pub fn encode_unchecked(&self, state: &SlotState) -> StateIndex {
        let radix = self.max_age as usize;
        let idx = state
            .as_slice()
            .iter()
            .rev()
            .fold(0usize, |acc, &a| acc * radix + (a as usize - 1));
        StateIndex(idx)
    }

    pub fn decode(&self, index: StateIndex) -> Result<SlotState> {
        if index.0 >= self.num_states() {
            return Err(Error::InvalidState(format!(
                "index {} out of range for {} states",
                index.0,
                self.num_states()
            )));
        }
        let radix = self.max_age as usize;
        let mut rest = index.0;
        let ages = (0..=self.users)
            .map(|_| {
                let a = (rest % radix) as u32 + 1;
                rest /= radix;
                a
            })
            .collect();
        SlotState::new(ages, self.max_age)
    }

    pub fn states(&self) -> impl Iterator<Item = SlotState> + '_ {
        (0..self.num_states()).map(move |i| self.decode(StateIndex(i)).expect("index in range"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    space: StateSpace,
    values: Vec<f64>,
    fingerprint: u64,
    iterations: u64,
    seed: u64,
    cursor: SlotState,
}

impl QTable {
    /// All-zero table.
    pub fn zeros(space: StateSpace, fingerprint: u64) -> Self {
        Self {
            space,
            values: vec![0.0; space.num_entries()],
            fingerprint,
            iterations: 0,
            seed: 0,
            cursor: SlotState::initial(space.users()),
        }
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn iterations(&self) -> u64 {
        self.iterations
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn cursor(&self) -> &SlotState {
        &self.cursor
    }

    pub(crate) fn set_progress(&mut self, iterations: u64, seed: u64, cursor: SlotState) {
        self.iterations = iterations;
        self.seed = seed;
        self.cursor = cursor;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn ensure_fingerprint(&self, expected: u64) -> Result<()> {
        if self.fingerprint == expected {
            Ok(())
        } else {
            Err(Error::FingerprintMismatch {
                expected,
                found: self.fingerprint,
            })
        }
    }

    #[inline]
    pub fn index_of(&self, state: &SlotState) -> StateIndex {
        self.space.encode_unchecked(state)
    }

    #[inline]
    pub fn get(&self, s: StateIndex, a: Action) -> f64 {
        self.values[2 * s.0 + a.index()]
    }

    #[inline]
    pub fn set(&mut self, s: StateIndex, a: Action, v: f64) {
        self.values[2 * s.0 + a.index()] = v;
    }

    #[inline]
    pub fn pair(&self, s: StateIndex) -> (f64, f64) {
        (self.values[2 * s.0], self.values[2 * s.0 + 1])
    }

    /// Argmax over actions; ties go to [`Action::Wait`].
    #[inline]
    pub fn greedy_at(&self, s: StateIndex) -> Action {
        let (wait, update) = self.pair(s);
        if update > wait {
            Action::Update
        } else {
            Action::Wait
        }
    }

    pub fn greedy_action(&self, state: &SlotState) -> Result<Action> {
        Ok(self.greedy_at(self.space.encode(state)?))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(&MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.space.users as u32).to_le_bytes())?;
        w.write_all(&self.space.max_age.to_le_bytes())?;
        w.write_all(&0u32.to_le_bytes())?;
        w.write_all(&self.fingerprint.to_le_bytes())?;
        w.write_all(&self.iterations.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&(self.values.len() as u64).to_le_bytes())?;
        for &a in self.cursor.as_slice() {
            w.write_all(&a.to_le_bytes())?;
        }
        for &v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Loads a table and checks it belongs to the scenario with `expected_fingerprint`.
    pub fn load(path: &Path, expected_fingerprint: u64) -> Result<Self> {
        let table = Self::load_unchecked(path)?;
        table.ensure_fingerprint(expected_fingerprint)?;
        Ok(table)
    }

    pub fn load_unchecked(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut bytes = Vec::new();
        BufReader::new(file)
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |msg: &str| Error::CorruptTable(msg.to_string());
        if bytes.len() < FIXED_HEADER {
            return Err(corrupt("file shorter than header"));
        }
        if bytes[..8] != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(8);
        if version != FORMAT_VERSION {
            return Err(Error::CorruptTable(format!(
                "unsupported version {version}"
            )));
        }
        let users = u32_at(12) as usize;
        let max_age = u32_at(16);
        let space = StateSpace::new(users, max_age)
            .map_err(|e| Error::CorruptTable(format!("bad dimensions: {e}")))?;
        let fingerprint = u64_at(24);
        let iterations = u64_at(32);
        let seed = u64_at(40);
        let count = u64_at(48);
        if count != space.num_entries() as u64 {
            return Err(Error::CorruptTable(format!(
                "entry count {count} does not match N={users}, M={max_age}"
            )));
        }
        let cursor_len = 4 * (users + 1);
        let expected_len = FIXED_HEADER + cursor_len + 8 * space.num_entries();
        if bytes.len() != expected_len {
            return Err(Error::CorruptTable(format!(
                "expected {expected_len} bytes, found {}",
                bytes.len()
            )));
        }
        let cursor_ages = (0..=users).map(|m| u32_at(FIXED_HEADER + 4 * m)).collect();
        let cursor = SlotState::new(cursor_ages, max_age)
            .map_err(|e| Error::CorruptTable(format!("bad cursor: {e}")))?;
        let values: Vec<f64> = bytes[FIXED_HEADER + cursor_len..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(corrupt("non-finite entry"));
        }
        Ok(Self {
            space,
            values,
            fingerprint,
            iterations,
            seed,
            cursor,
        })
    }
}
