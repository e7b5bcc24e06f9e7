//! Bounded exhaustive exploration of the persistent TM implementations,
//! with crash injection, checked against DDTMS and dynamic durable opacity.

use std::fmt;

use pmdk_core::{Layout, Mutation};
use pmem_sim::Model;
use stm_concurrent::Algo;

mod bfs;
mod histories;
mod intro;
mod language;
mod lower;
mod trace;
mod upper;
pub mod world;

pub use histories::{enumerate_histories, HistorySet};
pub use intro::{intro_case, intro_scenarios, CrashPoint, IntroCase, IntroOutcome};
pub use language::{compare_histories, count_histories, LanguageReport};
pub use lower::{check_lower, LowerReport};
pub use trace::{find_run, replay_moves, Trace};
pub use upper::{check_upper, UpperReport};
pub use world::{Move, Op, World};

pub use opacity::Action;

/// Exploration bounds and the implementation under test.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Config {
    pub algo: Algo,
    pub model: Model,
    /// Transactions, one per thread. Unless `per_era` is set this bounds the
    /// whole run: a thread whose transaction began is finished for good.
    pub txns: usize,
    /// Every era gets `txns` fresh transactions.
    pub per_era: bool,
    pub locs: usize,
    /// Written values are `0..vals`.
    pub vals: usize,
    /// Capacity of every store and persistence buffer.
    pub buf: usize,
    pub crashes: usize,
    /// Reads, writes and allocations per transaction.
    pub ops: usize,
    pub retry_bound: Option<u16>,
    /// Let allocation return any free location rather than the lowest.
    pub branch_alloc: bool,
    pub mutation: Option<Mutation>,
    /// Give up after this many distinct states.
    pub max_states: usize,
}

impl Config {
    pub fn new(algo: Algo, model: Model) -> Self {
        Config {
            algo,
            model,
            txns: 2,
            per_era: true,
            locs: 2,
            vals: 2,
            buf: 2,
            crashes: 1,
            ops: 2,
            retry_bound: None,
            branch_alloc: false,
            mutation: None,
            max_states: 50_000_000,
        }
    }

    pub fn layout(&self) -> Layout {
        world::layout(self)
    }

    pub fn stm(&self) -> stm_concurrent::Cfg {
        stm_concurrent::Cfg {
            algo: self.algo,
            layout: self.layout(),
            mutation: self.mutation,
            retry_bound: self.retry_bound,
        }
    }
}

impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} txns={} locs={} vals={} buf={} crashes={} ops={}",
            self.algo, self.model, self.txns, self.locs, self.vals, self.buf, self.crashes, self.ops
        )?;
        if let Some(m) = self.mutation {
            write!(f, " mutation={m}")?;
        }
        if self.per_era {
            write!(f, " per-era")?;
        }
        if self.branch_alloc {
            write!(f, " branch-alloc")?;
        }
        Ok(())
    }
}

/// The state cap was reached before the search finished.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BudgetExceeded {
    pub states: usize,
}

impl fmt::Display for BudgetExceeded {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "state budget exceeded after {} states", self.states)
    }
}

impl std::error::Error for BudgetExceeded {}
