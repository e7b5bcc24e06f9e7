//! The motivating crash scenarios: a transaction allocates `x`, writes 42 to
//! it and commits; after a crash and recovery a second transaction reads `x`.

use std::collections::BTreeSet;
use std::fmt;

use opacity::{Action, Res};
use pmdk_core::alloc_choices;
use pmem_sim::Model;
use stm_concurrent::Algo;

use crate::bfs::{Bfs, Next};
use crate::world::{Op, TState, World};
use crate::{BudgetExceeded, Config};

/// Where the crash may happen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CrashPoint {
    /// Any time before commit is invoked.
    BeforeCommit,
    /// After commit has responded.
    AfterCommit,
    /// While commit is running.
    DuringCommit,
}

impl CrashPoint {
    pub const ALL: [CrashPoint; 3] = [CrashPoint::BeforeCommit, CrashPoint::AfterCommit, CrashPoint::DuringCommit];

    fn allows(self, t: &TState) -> bool {
        match (self, t) {
            (CrashPoint::BeforeCommit, TState::Running(op, _)) => *op != Op::Commit,
            (CrashPoint::BeforeCommit, s) => matches!(s, TState::Idle | TState::Ready),
            (CrashPoint::AfterCommit, s) => *s == TState::Done,
            (CrashPoint::DuringCommit, TState::Running(op, _)) => *op == Op::Commit,
            (CrashPoint::DuringCommit, _) => false,
        }
    }

    /// The outcomes every implementation must show, exactly.
    pub fn expected(self) -> BTreeSet<IntroOutcome> {
        match self {
            CrashPoint::BeforeCommit => BTreeSet::from([IntroOutcome::Fault]),
            CrashPoint::AfterCommit => BTreeSet::from([IntroOutcome::Read(42)]),
            CrashPoint::DuringCommit => BTreeSet::from([IntroOutcome::Fault, IntroOutcome::Read(42)]),
        }
    }
}

/// What the post-crash read does.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IntroOutcome {
    /// The location is no longer allocated.
    Fault,
    Read(u32),
    Abort,
}

impl fmt::Display for IntroOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IntroOutcome::Fault => f.write_str("fault"),
            IntroOutcome::Read(v) => write!(f, "read {v}"),
            IntroOutcome::Abort => f.write_str("abort"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct IntroCase {
    pub algo: Algo,
    pub model: Model,
    pub point: CrashPoint,
    pub outcomes: BTreeSet<IntroOutcome>,
    pub states: usize,
}

impl IntroCase {
    pub fn ok(&self) -> bool {
        self.outcomes == self.point.expected()
    }
}

fn intro_config(algo: Algo, model: Model) -> Config {
    Config { txns: 1, locs: 1, vals: 1, buf: 2, crashes: 1, ops: 2, ..Config::new(algo, model) }
}

/// Every outcome of the post-crash read over all schedules, persistence
/// orders and crash points allowed by `point`.
pub fn intro_case(algo: Algo, model: Model, point: CrashPoint) -> Result<IntroCase, BudgetExceeded> {
    let cfg = intro_config(algo, model);
    let client = |w: &World, slot: usize| -> Vec<Op> {
        let n = w.threads[slot].ops;
        match (w.era, n) {
            (0, 0) => alloc_choices(w.sys.free, false).into_iter().take(1).map(Op::Alloc).collect(),
            (0, 1) => vec![Op::Write(0, 42)],
            (1, 0) => vec![Op::Read(0)],
            _ => vec![Op::Commit],
        }
    };
    let mut outcomes = BTreeSet::new();
    let bfs = Bfs::run(&cfg, (), &client, |w, _, s| {
        if matches!(s.acts.first(), Some(Action::Crash)) && !point.allows(&w.threads[0].state) {
            return Next::Leaf;
        }
        if w.era == 1 {
            if s.fault {
                outcomes.insert(IntroOutcome::Fault);
                return Next::Leaf;
            }
            for a in &s.acts {
                match a {
                    Action::Res(_, Res::Read(_, v)) => {
                        outcomes.insert(IntroOutcome::Read(*v));
                        return Next::Leaf;
                    }
                    Action::Res(_, Res::Abort) => {
                        outcomes.insert(IntroOutcome::Abort);
                        return Next::Leaf;
                    }
                    _ => {}
                }
            }
        } else if s.fault {
            return Next::Leaf;
        }
        Next::Visit(())
    })?;
    Ok(IntroCase { algo, model, point, outcomes, states: bfs.states.len() })
}

/// All three crash points for every implementation and memory model.
pub fn intro_scenarios() -> Result<Vec<IntroCase>, BudgetExceeded> {
    let mut out = vec![];
    for algo in Algo::ALL {
        for model in [Model::Psc, Model::PtsoSyn] {
            for point in CrashPoint::ALL {
                out.push(intro_case(algo, model, point)?);
            }
        }
    }
    Ok(out)
}
