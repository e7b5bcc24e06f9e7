//! Equality of the history sets of two configurations, by exploring the
//! subset construction of both at once.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use opacity::Action;
use rustc_hash::{FxHashMap, FxHashSet};

use crate::bfs::fingerprint;
use crate::world::World;
use crate::{BudgetExceeded, Config};

/// A world with the external actions of its last move still to be emitted.
/// A run that faulted has no future.
pub(crate) type Item = (World, Vec<Action>, bool);

/// The items reachable by one history, keyed by fingerprint.
pub(crate) type Macro = FxHashMap<u128, Item>;

#[derive(Clone, Debug)]
pub struct LanguageReport {
    pub left: Config,
    pub right: Config,
    /// A shortest history produced by exactly one side, if any.
    pub difference: Option<Vec<Action>>,
    /// Distinct pairs of macro states explored.
    pub pairs: usize,
    pub elapsed: Duration,
}

impl LanguageReport {
    pub fn equal(&self) -> bool {
        self.difference.is_none()
    }
}

pub(crate) fn closure(cfg: &Config, seed: Vec<Item>) -> Macro {
    let mut m = Macro::default();
    let mut todo = seed;
    while let Some(it) = todo.pop() {
        let fp = fingerprint(&it);
        if m.contains_key(&fp) {
            continue;
        }
        if it.1.is_empty() && !it.2 {
            for s in it.0.successors(cfg) {
                if s.acts.is_empty() {
                    todo.push((s.world, vec![], s.fault));
                }
            }
        }
        m.insert(fp, it);
    }
    m
}

/// One external action from every item, grouped by action.
pub(crate) fn letters(cfg: &Config, m: &Macro) -> BTreeMap<Action, Vec<Item>> {
    let mut out: BTreeMap<Action, Vec<Item>> = BTreeMap::new();
    for (w, pending, dead) in m.values() {
        if let Some((&a, rest)) = pending.split_first() {
            out.entry(a).or_default().push((w.clone(), rest.to_vec(), *dead));
            continue;
        }
        if *dead {
            continue;
        }
        for s in w.successors(cfg) {
            if let Some((&a, rest)) = s.acts.split_first() {
                out.entry(a).or_default().push((s.world, rest.to_vec(), s.fault));
            }
        }
    }
    out
}

fn key(m: &Macro) -> Vec<u128> {
    let mut k: Vec<u128> = m.keys().copied().collect();
    k.sort_unstable();
    k
}

/// Do `a` and `b` produce the same histories? `max_states` of `a` bounds
/// the number of pairs explored.
pub fn compare_histories(a: &Config, b: &Config) -> Result<LanguageReport, BudgetExceeded> {
    let start = Instant::now();
    let m0 = (closure(a, vec![(World::initial(a), vec![], false)]), closure(b, vec![(World::initial(b), vec![], false)]));
    let mut seen: FxHashSet<u128> = FxHashSet::default();
    seen.insert(fingerprint(&(key(&m0.0), key(&m0.1))));
    // breadth first, so a difference found is a shortest one
    let mut frontier = vec![(m0, vec![])];
    let mut difference = None;
    'outer: while !frontier.is_empty() {
        let mut next = vec![];
        for ((ma, mb), h) in frontier {
            let (la, mut lb) = (letters(a, &ma), letters(b, &mb));
            for (act, ia) in la {
                let mut h2: Vec<Action> = h.clone();
                h2.push(act);
                let Some(ib) = lb.remove(&act) else {
                    difference = Some(h2);
                    break 'outer;
                };
                let pair = (closure(a, ia), closure(b, ib));
                if seen.insert(fingerprint(&(key(&pair.0), key(&pair.1)))) {
                    if seen.len() > a.max_states {
                        return Err(BudgetExceeded { states: seen.len() });
                    }
                    next.push((pair, h2));
                }
            }
            if let Some((&act, _)) = lb.iter().next() {
                let mut h2 = h.clone();
                h2.push(act);
                difference = Some(h2);
                break 'outer;
            }
        }
        frontier = next;
    }
    Ok(LanguageReport { left: *a, right: *b, difference, pairs: seen.len(), elapsed: start.elapsed() })
}

/// Number of distinct histories, the empty one included.
pub fn count_histories(cfg: &Config) -> Result<(u128, usize), BudgetExceeded> {
    fn go(cfg: &Config, m: Macro, memo: &mut FxHashMap<u128, u128>) -> Result<u128, BudgetExceeded> {
        let k = fingerprint(&key(&m));
        if let Some(&n) = memo.get(&k) {
            return Ok(n);
        }
        let mut n = 1;
        for (_, items) in letters(cfg, &m) {
            n += go(cfg, closure(cfg, items), memo)?;
        }
        memo.insert(k, n);
        if memo.len() > cfg.max_states {
            return Err(BudgetExceeded { states: memo.len() });
        }
        Ok(n)
    }
    let mut memo = FxHashMap::default();
    let n = go(cfg, closure(cfg, vec![(World::initial(cfg), vec![], false)]), &mut memo)?;
    Ok((n, memo.len()))
}
