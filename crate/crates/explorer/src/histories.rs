//! The set of histories an implementation produces, as a trie, with DDTMS
//! membership and dynamic durable opacity decided for every node.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use opacity::{check_history_ddo_any_pending, check_wellformed, ordered_history, witness, Action, Inv};

use crate::language::{closure, letters};
use crate::upper::Trackers;
use crate::world::World;
use crate::{BudgetExceeded, Config};

#[derive(Clone, Debug)]
pub struct Node {
    pub parent: u32,
    /// `None` only at the root.
    pub act: Option<Action>,
    pub depth: u32,
    /// Accepted by DDTMS, possibly through a hidden fault.
    pub accepted: bool,
    /// Accepted by a fault-free DDTMS run.
    pub strict: bool,
    /// This and every shorter prefix are well-formed.
    pub wellformed: bool,
    /// This and every shorter prefix have a dynamically opaque witness.
    pub ddo: bool,
    /// Some run ends here in a fault of the implementation.
    pub fault: bool,
}

#[derive(Clone, Debug)]
pub struct HistorySet {
    pub config: Config,
    pub nodes: Vec<Node>,
    /// Sets of worlds reached by some history, counted once per history.
    pub states: usize,
    pub elapsed: Duration,
}

impl HistorySet {
    /// Number of distinct histories, the empty one included.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn history(&self, mut n: u32) -> Vec<Action> {
        let mut out = vec![];
        while let Some(a) = self.nodes[n as usize].act {
            out.push(a);
            n = self.nodes[n as usize].parent;
        }
        out.reverse();
        out
    }

    /// Histories DDTMS accepts without faults but that are not dynamically
    /// durably opaque.
    pub fn ddo_disagreements(&self) -> Vec<Vec<Action>> {
        self.select(|n| n.strict && !n.ddo)
    }

    /// Disagreements that remain when any commit-pending transaction may be
    /// visible, not only those read from.
    pub fn unexplained_disagreements(&self) -> Vec<Vec<Action>> {
        self.ddo_disagreements()
            .into_iter()
            .filter(|h| !check_history_ddo_any_pending(&ordered_history(h)).ok())
            .collect()
    }

    pub fn rejected(&self) -> Vec<Vec<Action>> {
        self.select(|n| !n.accepted)
    }

    pub fn ill_formed(&self) -> Vec<Vec<Action>> {
        self.select(|n| !n.wellformed)
    }

    fn select(&self, p: impl Fn(&Node) -> bool) -> Vec<Vec<Action>> {
        (0..self.nodes.len() as u32).filter(|&i| p(&self.nodes[i as usize])).map(|i| self.history(i)).collect()
    }

    pub fn all(&self) -> BTreeSet<Vec<Action>> {
        (0..self.nodes.len() as u32).map(|i| self.history(i)).collect()
    }
}

struct Builder {
    trackers: Trackers,
    nodes: Vec<(Node, u32)>,
}

impl Builder {
    fn history(&self, mut n: u32) -> Vec<Action> {
        let mut out = vec![];
        while let Some(a) = self.nodes[n as usize].0.act {
            out.push(a);
            n = self.nodes[n as usize].0.parent;
        }
        out.reverse();
        out
    }

    fn child(&mut self, p: u32, a: Action) -> u32 {
        let (pn, pt) = self.nodes[p as usize].clone();
        let t = self.trackers.advance(pt, a);
        let tk = self.trackers.get(t);
        let mut n = Node {
            parent: p,
            act: Some(a),
            depth: pn.depth + 1,
            accepted: tk.accepted(),
            strict: tk.strict(),
            wellformed: pn.wellformed,
            ddo: pn.ddo,
            fault: false,
        };
        let event = !matches!(a, Action::Inv(_, i) if i != Inv::Commit);
        if event {
            let mut h = self.history(p);
            h.push(a);
            let oh = ordered_history(&h);
            n.wellformed &= check_wellformed(&oh).is_empty();
            if n.ddo && !matches!(a, Action::Crash) {
                n.ddo = n.wellformed && witness(&oh, true).is_ok();
            }
        }
        let id = self.nodes.len() as u32;
        self.nodes.push((n, t));
        id
    }
}

/// Every history the implementation produces within the bounds of `cfg`.
/// A history DDTMS rejects and a fault of the implementation end a branch.
pub fn enumerate_histories(cfg: &Config) -> Result<HistorySet, BudgetExceeded> {
    let start = Instant::now();
    let root = Node {
        parent: 0,
        act: None,
        depth: 0,
        accepted: true,
        strict: true,
        wellformed: true,
        ddo: true,
        fault: false,
    };
    let mut b = Builder { trackers: Trackers::new(), nodes: vec![(root, 0)] };
    let mut states = 1;
    let m0 = closure(cfg, vec![(World::initial(cfg), vec![], false)]);
    let mut stack = vec![(m0, 0u32)];
    while let Some((m, n)) = stack.pop() {
        for (a, items) in letters(cfg, &m).into_iter().rev() {
            let c = b.child(n, a);
            if b.nodes.len() > cfg.max_states {
                return Err(BudgetExceeded { states: b.nodes.len() });
            }
            let node = &mut b.nodes[c as usize].0;
            node.fault = items.iter().any(|it| it.2);
            if node.accepted {
                states += 1;
                stack.push((closure(cfg, items), c));
            }
        }
    }
    Ok(HistorySet {
        config: *cfg,
        nodes: b.nodes.into_iter().map(|(n, _)| n).collect(),
        states,
        elapsed: start.elapsed(),
    })
}
