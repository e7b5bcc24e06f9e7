//! Upper bound: every history of the implementation is a DDTMS history.

use std::collections::{BTreeSet, HashMap};
use std::time::{Duration, Instant};

use ddtms::Tracker;
use indexmap::IndexSet;
use opacity::Action;
use rustc_hash::FxBuildHasher;

use crate::bfs::{Dfs, Next};
use crate::trace::{find_run, Trace};
use crate::{BudgetExceeded, Config};

#[derive(Clone, Debug)]
pub struct UpperReport {
    pub config: Config,
    pub states: usize,
    pub transitions: usize,
    /// Distinct sets of DDTMS states met.
    pub trackers: usize,
    /// Transitions into a history DDTMS rejects.
    pub violations: usize,
    /// Every distinct rejected history. Each is accepted without its last
    /// action.
    pub rejected: BTreeSet<Vec<Action>>,
    /// Shortest runs producing the first few rejected histories.
    pub counterexamples: Vec<Trace>,
    /// Runs ending in a fault of the implementation.
    pub faults: usize,
    /// Faults where DDTMS could not have faulted.
    pub unjustified_faults: usize,
    pub elapsed: Duration,
}

impl UpperReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Interned trackers with a memoised transition function.
pub(crate) struct Trackers {
    pub set: IndexSet<Tracker, FxBuildHasher>,
    cache: HashMap<(u32, Action), u32, FxBuildHasher>,
}

impl Trackers {
    pub fn new() -> Self {
        let mut set = IndexSet::default();
        set.insert(Tracker::new());
        Trackers { set, cache: HashMap::default() }
    }

    pub fn get(&self, id: u32) -> &Tracker {
        &self.set[id as usize]
    }

    pub fn advance(&mut self, id: u32, a: Action) -> u32 {
        if let Some(&n) = self.cache.get(&(id, a)) {
            return n;
        }
        let t = self.set[id as usize].advance(a).forget_finished();
        let n = self.set.insert_full(t).0 as u32;
        self.cache.insert((id, a), n);
        n
    }
}

const MAX_COUNTEREXAMPLES: usize = 4;

/// Explore every run within the bounds of `cfg`, tracking the DDTMS states
/// consistent with its history. A run stops being explored once DDTMS could
/// have faulted, since every extension is then accepted.
pub fn check_upper(cfg: &Config) -> Result<UpperReport, BudgetExceeded> {
    let start = Instant::now();
    let mut tr = Trackers::new();
    let mut faults = 0;
    let mut unjustified = 0;
    let client = |w: &crate::World, slot| w.client_ops(cfg, slot);
    let dfs = Dfs::run(cfg, 0u32, &client, |_, &k, s| {
        let mut k = k;
        for &a in &s.acts {
            k = tr.advance(k, a);
        }
        let t = tr.get(k);
        if s.fault {
            faults += 1;
            if !t.faulted {
                unjustified += 1;
            }
        }
        if !t.accepted() {
            Next::Flag
        } else if s.fault || t.faulted {
            Next::Leaf
        } else {
            Next::Visit(k)
        }
    })?;
    let mut shortest: Vec<&Vec<Action>> = dfs.flagged_histories.iter().collect();
    shortest.sort_by_key(|h| h.len());
    let counterexamples = shortest
        .into_iter()
        .take(MAX_COUNTEREXAMPLES)
        .map(|h| find_run(cfg, h).expect("a rejected history has a run"))
        .collect();
    Ok(UpperReport {
        config: *cfg,
        states: dfs.states,
        transitions: dfs.transitions,
        trackers: tr.set.len(),
        violations: dfs.flagged,
        rejected: dfs.flagged_histories,
        counterexamples,
        faults,
        unjustified_faults: unjustified,
        elapsed: start.elapsed(),
    })
}
