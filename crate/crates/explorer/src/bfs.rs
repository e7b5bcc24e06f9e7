//! Breadth-first search over worlds paired with an observer state.

use std::collections::BTreeSet;
use std::hash::Hash;

use indexmap::IndexSet;
use rustc_hash::FxBuildHasher;

use opacity::Action;

use crate::world::{Move, Op, Succ, World};
use crate::{BudgetExceeded, Config};

/// What to do with a successor.
pub(crate) enum Next<K> {
    /// Explore it with this observer state.
    Visit(K),
    /// Do not explore further.
    Leaf,
    /// Do not explore further, and remember how it was reached.
    Flag,
}

pub(crate) struct Bfs<K> {
    pub states: IndexSet<(World, K), FxBuildHasher>,
    /// Parent index and move for every state but the first.
    parents: Vec<(u32, Move)>,
    pub transitions: usize,
    /// Flagged successors: parent index and move.
    pub flagged: Vec<(u32, Move)>,
}

impl<K: Clone + Eq + Hash> Bfs<K> {
    /// Explore from the initial world. `client` picks the operations a ready
    /// thread may invoke; `observe` sees the parent world, its observer state
    /// and each successor.
    pub fn run(
        cfg: &Config,
        k0: K,
        client: &dyn Fn(&World, usize) -> Vec<Op>,
        mut observe: impl FnMut(&World, &K, &Succ) -> Next<K>,
    ) -> Result<Self, BudgetExceeded> {
        let mut b = Bfs { states: IndexSet::default(), parents: vec![], transitions: 0, flagged: vec![] };
        b.states.insert((World::initial(cfg), k0));
        let mut i = 0;
        while i < b.states.len() {
            let (w, k) = b.states.get_index(i).expect("in range").clone();
            for s in w.successors_with(cfg, client) {
                b.transitions += 1;
                match observe(&w, &k, &s) {
                    Next::Visit(k2) => {
                        let mv = s.mv;
                        if b.states.insert((s.world, k2)) {
                            b.parents.push((i as u32, mv));
                            if b.states.len() > cfg.max_states {
                                return Err(BudgetExceeded { states: b.states.len() });
                            }
                        }
                    }
                    Next::Leaf => {}
                    Next::Flag => b.flagged.push((i as u32, s.mv)),
                }
            }
            i += 1;
        }
        Ok(b)
    }

    /// Moves from the initial world to state `idx`.
    pub fn moves_to(&self, mut idx: u32) -> Vec<Move> {
        let mut out = vec![];
        while idx > 0 {
            let (p, mv) = self.parents[idx as usize - 1];
            out.push(mv);
            idx = p;
        }
        out.reverse();
        out
    }
}

/// Depth-first search remembering only 128-bit fingerprints of visited states.
pub(crate) struct Dfs {
    pub states: usize,
    pub transitions: usize,
    pub flagged: usize,
    /// Distinct histories of flagged successors.
    pub flagged_histories: BTreeSet<Vec<Action>>,
}

pub(crate) fn fingerprint<T: Hash>(x: &T) -> u128 {
    use std::hash::{BuildHasher, DefaultHasher, Hasher};
    let mut a = DefaultHasher::new();
    x.hash(&mut a);
    let b = FxBuildHasher.hash_one(x);
    ((a.finish() as u128) << 64) | b as u128
}

struct Frame<K> {
    world: World,
    k: K,
    /// Successors not yet taken, in reverse order.
    todo: Vec<Succ>,
    /// History length on entry.
    hlen: usize,
}

impl Dfs {
    pub fn run<K: Clone + Eq + Hash>(
        cfg: &Config,
        k0: K,
        client: &dyn Fn(&World, usize) -> Vec<Op>,
        mut observe: impl FnMut(&World, &K, &Succ) -> Next<K>,
    ) -> Result<Self, BudgetExceeded> {
        let mut d = Dfs { states: 1, transitions: 0, flagged: 0, flagged_histories: BTreeSet::new() };
        let mut seen: rustc_hash::FxHashSet<u128> = Default::default();
        let w0 = World::initial(cfg);
        seen.insert(fingerprint(&(&w0, &k0)));
        let mut hist: Vec<Action> = vec![];
        let todo = rev(w0.successors_with(cfg, client));
        let mut stack = vec![Frame { world: w0, k: k0, todo, hlen: 0 }];
        while let Some(f) = stack.last_mut() {
            let Some(s) = f.todo.pop() else {
                hist.truncate(f.hlen);
                stack.pop();
                continue;
            };
            hist.truncate(f.hlen);
            d.transitions += 1;
            match observe(&f.world, &f.k, &s) {
                Next::Visit(k2) => {
                    if seen.insert(fingerprint(&(&s.world, &k2))) {
                        d.states += 1;
                        if d.states > cfg.max_states {
                            return Err(BudgetExceeded { states: d.states });
                        }
                        let hlen = hist.len();
                        hist.extend(&s.acts);
                        let todo = rev(s.world.successors_with(cfg, client));
                        stack.push(Frame { world: s.world, k: k2, todo, hlen: hlen + s.acts.len() });
                    }
                }
                Next::Leaf => {}
                Next::Flag => {
                    d.flagged += 1;
                    let mut h = hist.clone();
                    h.extend(&s.acts);
                    d.flagged_histories.insert(h);
                }
            }
        }
        Ok(d)
    }
}

fn rev(mut v: Vec<Succ>) -> Vec<Succ> {
    v.reverse();
    v
}

/// A shortest run producing exactly `h`, by breadth-first search over the
/// runs whose history stays a prefix of `h`.
pub(crate) fn shortest_run(cfg: &Config, h: &[Action]) -> Option<Vec<Move>> {
    let client = |w: &World, slot| w.client_ops(cfg, slot);
    let bfs = Bfs::run(cfg, 0usize, &client, |_, &pos, s| {
        if h.get(pos..pos + s.acts.len()) != Some(&s.acts[..]) {
            return Next::Leaf;
        }
        let pos = pos + s.acts.len();
        if pos == h.len() {
            Next::Flag
        } else if s.fault {
            Next::Leaf
        } else {
            Next::Visit(pos)
        }
    })
    .ok()?;
    let &(p, mv) = bfs.flagged.first()?;
    let mut moves = bfs.moves_to(p);
    moves.push(mv);
    Some(moves)
}
