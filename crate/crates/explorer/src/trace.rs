//! Concrete runs.

use std::fmt;

use opacity::Action;

use crate::world::{Move, World};
use crate::Config;

/// A run of the system and the history it produces.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    pub moves: Vec<Move>,
    pub actions: Vec<Action>,
    /// The last move faulted: a read or write of unallocated memory.
    pub fault: bool,
}

impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, m) in self.moves.iter().enumerate() {
            writeln!(f, "{i:4}  {m}")?;
        }
        write!(f, "history:")?;
        for a in &self.actions {
            write!(f, " {a}")?;
        }
        if self.fault {
            write!(f, " <fault>")?;
        }
        Ok(())
    }
}

/// Re-execute `moves` from the initial world with the most general client.
/// `None` if some move is not enabled.
pub fn replay_moves(cfg: &Config, moves: &[Move]) -> Option<Trace> {
    let mut w = World::initial(cfg);
    let mut t = Trace { moves: moves.to_vec(), actions: vec![], fault: false };
    for &mv in moves {
        if t.fault {
            return None;
        }
        let s = w.successors(cfg).into_iter().find(|s| s.mv == mv)?;
        t.actions.extend(s.acts);
        t.fault = s.fault;
        w = s.world;
    }
    Some(t)
}

/// A shortest run of the most general client producing exactly `h`.
pub fn find_run(cfg: &Config, h: &[Action]) -> Option<Trace> {
    let moves = crate::bfs::shortest_run(cfg, h)?;
    replay_moves(cfg, &moves)
}
