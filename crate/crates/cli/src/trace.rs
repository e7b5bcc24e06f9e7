//! The JSON-lines trace format: one record per external action.
//!
//! ```text
//! {"kind":"inv","era":0,"seq":0,"tid":0,"txid":0,"op":"begin"}
//! {"kind":"res","era":0,"seq":1,"tid":0,"txid":0,"op":"begin"}
//! {"kind":"inv","era":0,"seq":2,"tid":0,"txid":0,"op":"write","loc":0,"val":1}
//! {"kind":"fault-hidden-note","era":0,"seq":3,"tid":0,"txid":0,"op":"write","loc":0,"val":1}
//! {"kind":"crash","era":0,"seq":4}
//! ```
//!
//! A record's era is the number of crashes before it. A fault note follows
//! the invocation that touched unallocated memory and repeats it; it is not
//! part of the history.

use std::fmt;

use opacity::{Action, Event, History, Inv, Item, Label, Loc, Res, ThreadId, TxId, Val};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Inv,
    Res,
    Crash,
    FaultHiddenNote,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpName {
    Begin,
    Read,
    Write,
    Alloc,
    Commit,
    Abort,
}

/// One line of a trace file, fields in canonical order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    pub kind: Kind,
    pub era: u32,
    pub seq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tid: Option<ThreadId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub txid: Option<TxId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub op: Option<OpName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loc: Option<Loc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val: Option<Val>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    /// 1-based.
    pub line: usize,
    pub msg: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.msg)
    }
}

impl std::error::Error for ParseError {}

/// A parsed trace: per action, its record, with fault notes kept apart.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    /// The external actions, fault notes dropped.
    pub fn actions(&self) -> Vec<Action> {
        self.records.iter().filter_map(to_action).collect()
    }

    /// Did some invocation fault?
    pub fn faulted(&self) -> bool {
        self.records.iter().any(|r| r.kind == Kind::FaultHiddenNote)
    }

    /// The history: responses, commit invocations and crashes, identified
    /// by their sequence number, on the recorded threads.
    pub fn history(&self) -> History {
        let mut items = vec![];
        for r in &self.records {
            let id = r.seq as u32;
            let ev = |label| Item::Ev(Event { id, tid: r.tid.unwrap(), txid: r.txid.unwrap(), label });
            match to_action(r) {
                Some(Action::Crash) => items.push(Item::Crash(id)),
                Some(Action::Inv(_, Inv::Commit)) => items.push(ev(Label::Commit)),
                Some(Action::Res(_, res)) => items.push(ev(match res {
                    Res::Begin => Label::Begin,
                    Res::Read(x, v) => Label::Read(x, v),
                    Res::Write(x, v) => Label::Write(x, v),
                    Res::Alloc(x) => Label::Alloc(x),
                    Res::Commit => Label::Success,
                    Res::Abort => Label::Abort,
                })),
                _ => {}
            }
        }
        History { items }
    }
}

fn to_action(r: &TraceRecord) -> Option<Action> {
    let t = r.txid.unwrap_or(0);
    let (x, v) = (r.loc.unwrap_or(0), r.val.unwrap_or(0));
    Some(match (r.kind, r.op) {
        (Kind::Crash, _) => Action::Crash,
        (Kind::FaultHiddenNote, _) => return None,
        (Kind::Inv, Some(op)) => Action::Inv(
            t,
            match op {
                OpName::Begin => Inv::Begin,
                OpName::Read => Inv::Read(x),
                OpName::Write => Inv::Write(x, v),
                OpName::Alloc => Inv::Alloc,
                OpName::Commit => Inv::Commit,
                OpName::Abort => unreachable!("rejected by validation"),
            },
        ),
        (Kind::Res, Some(op)) => Action::Res(
            t,
            match op {
                OpName::Begin => Res::Begin,
                OpName::Read => Res::Read(x, v),
                OpName::Write => Res::Write(x, v),
                OpName::Alloc => Res::Alloc(x),
                OpName::Commit => Res::Commit,
                OpName::Abort => Res::Abort,
            },
        ),
        _ => unreachable!("rejected by validation"),
    })
}

/// Which of `loc`/`val` an operation carries.
fn shape(kind: Kind, op: OpName) -> Result<(bool, bool), String> {
    let inv = kind != Kind::Res;
    Ok(match op {
        OpName::Begin | OpName::Commit => (false, false),
        OpName::Read => (true, !inv),
        OpName::Write => (true, true),
        OpName::Alloc => (!inv, false),
        OpName::Abort if inv => return Err("abort is a response only".into()),
        OpName::Abort => (false, false),
    })
}

fn check_fields(r: &TraceRecord) -> Result<(), String> {
    if r.kind == Kind::Crash {
        if r.tid.is_some() || r.txid.is_some() || r.op.is_some() || r.loc.is_some() || r.val.is_some() {
            return Err("a crash record carries only era and seq".into());
        }
        return Ok(());
    }
    if r.tid.is_none() || r.txid.is_none() {
        return Err("missing tid or txid".into());
    }
    let op = r.op.ok_or("missing op")?;
    let (need_loc, need_val) = shape(r.kind, op)?;
    let name = serde_json::to_string(&op).expect("serialisable");
    match (need_loc, r.loc.is_some()) {
        (true, false) => return Err(format!("{name} needs loc")),
        (false, true) => return Err(format!("{name} takes no loc")),
        _ => {}
    }
    match (need_val, r.val.is_some()) {
        (true, false) => Err(format!("{name} needs val")),
        (false, true) => Err(format!("{name} takes no val")),
        _ => Ok(()),
    }
}

/// Parse and validate a trace. Blank lines are skipped.
pub fn parse_trace(text: &str) -> Result<Trace, ParseError> {
    let mut records: Vec<TraceRecord> = vec![];
    let mut crashes = 0;
    let mut last_inv: Option<TraceRecord> = None;
    for (i, line) in text.lines().enumerate() {
        let err = |msg: String| ParseError { line: i + 1, msg };
        if line.trim().is_empty() {
            continue;
        }
        let r: TraceRecord = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        check_fields(&r).map_err(err)?;
        if let Some(p) = records.last() {
            if r.seq <= p.seq {
                return Err(err(format!("seq {} does not increase past {}", r.seq, p.seq)));
            }
        }
        if r.era != crashes {
            return Err(err(format!("era {} after {crashes} crash(es)", r.era)));
        }
        match r.kind {
            Kind::Crash => crashes += 1,
            Kind::FaultHiddenNote => {
                let same = last_inv.is_some_and(|p| (p.tid, p.txid, p.op, p.loc, p.val) == (r.tid, r.txid, r.op, r.loc, r.val));
                if !same || records.last().map(|p| p.kind) != Some(Kind::Inv) {
                    return Err(err("a fault note must repeat the invocation just before it".into()));
                }
            }
            Kind::Inv => last_inv = Some(r),
            Kind::Res => {}
        }
        records.push(r);
    }
    Ok(Trace { records })
}

/// Records for a run's actions; thread and transaction coincide.
pub fn records_from_actions(actions: &[Action], faulted: bool) -> Vec<TraceRecord> {
    let mut out = vec![];
    let mut era = 0;
    let rec = |kind, era, seq, t: TxId, op, loc, val| TraceRecord { kind, era, seq, tid: Some(t), txid: Some(t), op: Some(op), loc, val };
    for (i, a) in actions.iter().enumerate() {
        let seq = out.len() as u64;
        out.push(match *a {
            Action::Crash => {
                era += 1;
                TraceRecord { kind: Kind::Crash, era: era - 1, seq, tid: None, txid: None, op: None, loc: None, val: None }
            }
            Action::Inv(t, inv) => {
                let (op, loc, val) = match inv {
                    Inv::Begin => (OpName::Begin, None, None),
                    Inv::Read(x) => (OpName::Read, Some(x), None),
                    Inv::Write(x, v) => (OpName::Write, Some(x), Some(v)),
                    Inv::Alloc => (OpName::Alloc, None, None),
                    Inv::Commit => (OpName::Commit, None, None),
                };
                rec(Kind::Inv, era, seq, t, op, loc, val)
            }
            Action::Res(t, res) => {
                let (op, loc, val) = match res {
                    Res::Begin => (OpName::Begin, None, None),
                    Res::Read(x, v) => (OpName::Read, Some(x), Some(v)),
                    Res::Write(x, v) => (OpName::Write, Some(x), Some(v)),
                    Res::Alloc(x) => (OpName::Alloc, Some(x), None),
                    Res::Commit => (OpName::Commit, None, None),
                    Res::Abort => (OpName::Abort, None, None),
                };
                rec(Kind::Res, era, seq, t, op, loc, val)
            }
        });
        if faulted && i + 1 == actions.len() {
            let last = *out.last().expect("just pushed");
            out.push(TraceRecord { kind: Kind::FaultHiddenNote, seq: seq + 1, ..last });
        }
    }
    out
}

/// One compact JSON object per line, each line newline-terminated.
pub fn emit_trace(records: &[TraceRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r).expect("serialisable"));
        s.push('\n');
    }
    s
}
