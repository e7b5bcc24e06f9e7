//! Lower bound: every DDTMS-Seq history is produced by the implementation.

use std::collections::{BTreeSet, HashMap};
use std::time::{Duration, Instant};

use ddtms::{ddtms_seq_generate, SeqBounds};
use opacity::Action;

use crate::bfs::{Bfs, Next};
use crate::{BudgetExceeded, Config};

#[derive(Clone, Debug)]
pub struct LowerReport {
    pub config: Config,
    /// Size of the sequential history set.
    pub histories: usize,
    pub unproducible: Vec<Vec<Action>>,
    pub states: usize,
    pub elapsed: Duration,
}

impl LowerReport {
    pub fn passed(&self) -> bool {
        self.unproducible.is_empty()
    }
}

/// Explore the implementation without crashes, restricted to runs whose
/// history stays a prefix of some DDTMS-Seq history, and report the
/// sequential histories never reached. Allocation always branches over every
/// free location, as DDTMS-Seq does.
pub fn check_lower(cfg: &Config) -> Result<LowerReport, BudgetExceeded> {
    let start = Instant::now();
    let cfg = Config { crashes: 0, branch_alloc: true, ..*cfg };
    let target = ddtms_seq_generate(SeqBounds { txns: cfg.txns, locs: cfg.locs, vals: cfg.vals, ops: cfg.ops });
    let mut trie: HashMap<(u32, Action), u32> = HashMap::new();
    let mut ends: Vec<Option<usize>> = vec![None];
    for (i, h) in target.iter().enumerate() {
        let mut n = 0;
        for &a in h {
            n = *trie.entry((n, a)).or_insert_with(|| {
                ends.push(None);
                ends.len() as u32 - 1
            });
        }
        ends[n as usize] = Some(i);
    }
    let mut reached = vec![false; ends.len()];
    reached[0] = true;
    let client = |w: &crate::World, slot| w.client_ops(&cfg, slot);
    let bfs = Bfs::run(&cfg, 0u32, &client, |_, &k, s| {
        let mut k = k;
        for a in &s.acts {
            match trie.get(&(k, *a)) {
                Some(&n) => k = n,
                None => return Next::Leaf,
            }
        }
        reached[k as usize] = true;
        if s.fault {
            Next::Leaf
        } else {
            Next::Visit(k)
        }
    })?;
    let hit: BTreeSet<usize> = ends.iter().zip(&reached).filter_map(|(e, &r)| e.filter(|_| r)).collect();
    let unproducible = target.iter().enumerate().filter(|(i, _)| !hit.contains(i)).map(|(_, h)| h.clone()).collect();
    Ok(LowerReport { config: cfg, histories: target.len(), unproducible, states: bfs.states.len(), elapsed: start.elapsed() })
}
