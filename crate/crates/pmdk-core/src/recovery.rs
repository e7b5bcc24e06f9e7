//! `PRecovery` over every transaction identifier used so far.

use pmem_sim::Blocked;

use crate::{act, apply_redo, calc_checksum, roll_back, ApplyPc, Cx, Flow, Loc, Mutation, RollBackPc, StepResult, TxId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RecPc {
    Check,
    Apply(ApplyPc),
    CheckUndo,
    RollBack(RollBackPc),
    Rebuild,
}

/// Recovery in progress: transactions `0..upto` are visited in ascending
/// order, then the free list is rebuilt from the allocation flags.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Recovery {
    pub upto: TxId,
    pub cur: TxId,
    pub pc: RecPc,
}

impl Recovery {
    pub fn new(upto: TxId) -> Self {
        Recovery { upto, cur: 0, pc: if upto == 0 { RecPc::Rebuild } else { RecPc::Check } }
    }

    fn next_tx(&mut self) {
        self.cur += 1;
        self.pc = if self.cur < self.upto { RecPc::Check } else { RecPc::Rebuild };
    }

    /// Run up to one memory action. Finishes by overwriting `cx.free`.
    pub fn step(&mut self, cx: &mut Cx) -> StepResult<()> {
        let acted = &mut false;
        let l = *cx.layout;
        loop {
            let t = self.cur;
            match &mut self.pc {
                RecPc::Check => {
                    let allocs = cx.load(l.redo_allocs(t)) as u32;
                    let uv = cx.load(l.redo_undo_valid(t)) != 0;
                    let ck = cx.load(l.redo_checksum(t));
                    self.pc =
                        if calc_checksum(uv, allocs) == ck { RecPc::Apply(ApplyPc::Scan(0)) } else { RecPc::CheckUndo };
                }
                RecPc::Apply(apc) => {
                    if let Flow::Yield = apply_redo(apc, cx, t, acted)? {
                        return Ok(Flow::Yield);
                    }
                    self.pc = RecPc::CheckUndo;
                }
                RecPc::CheckUndo => {
                    if cx.has(Mutation::NoRecoveryRollback) || cx.load(l.undo_valid(t)) == 0 {
                        self.next_tx();
                    } else {
                        self.pc = RecPc::RollBack(RollBackPc::Restore(0));
                    }
                }
                RecPc::RollBack(rpc) => {
                    if let Flow::Yield = roll_back(rpc, cx, t, acted)? {
                        return Ok(Flow::Yield);
                    }
                    self.next_tx();
                }
                RecPc::Rebuild => {
                    // each metadata read is a load; fold them into one step
                    act!(acted, Ok::<(), Blocked>(()));
                    *cx.free = (0..l.locs as Loc)
                        .filter(|&x| cx.load(l.meta(x)) == 0)
                        .fold(0, |m, x| m | 1 << x);
                    return Ok(Flow::Done(()));
                }
            }
        }
    }
}

/// Run recovery to completion, taking the lowest enabled system step whenever
/// it is blocked.
pub fn recover(cx: &mut Cx, upto: TxId) {
    let mut r = Recovery::new(upto);
    loop {
        let saved = (r, cx.mem.clone());
        match r.step(cx) {
            Ok(Flow::Done(())) => return,
            Ok(Flow::Yield) => {}
            Err(Blocked) => {
                r = saved.0;
                *cx.mem = saved.1;
                let s = *cx.mem.sys_steps().first().expect("recovery blocked with empty buffers");
                cx.mem.sys_step(s).unwrap();
            }
        }
    }
}
