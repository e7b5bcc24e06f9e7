#![allow(dead_code)]

use opacity::*;
use proptest::prelude::*;

pub fn h(evs: &[(TxId, Label)]) -> History {
    History::new(
        evs.iter().enumerate().map(|(i, &(t, label))| Item::Ev(Event { id: i as u32, tid: t, txid: t, label })).collect(),
    )
}

/// A history with crash markers: `None` entries are crashes.
pub fn hc(evs: &[Option<(TxId, Label)>]) -> History {
    History::new(
        evs.iter()
            .enumerate()
            .map(|(i, e)| match *e {
                Some((t, label)) => Item::Ev(Event { id: i as u32, tid: t, txid: t, label }),
                None => Item::Crash(i as u32),
            })
            .collect(),
    )
}

fn all_perms(v: &[usize]) -> Vec<Vec<usize>> {
    if v.len() <= 1 {
        return vec![v.to_vec()];
    }
    let mut out = vec![];
    for i in 0..v.len() {
        let mut rest = v.to_vec();
        let x = rest.remove(i);
        for mut p in all_perms(&rest) {
            p.insert(0, x);
            out.push(p);
        }
    }
    out
}

/// Every well-typed graph over the events of `h`.
pub fn all_graphs(h: &History) -> Vec<Graph> {
    let h = h.without_crashes();
    let events: Vec<Event> = h.events().copied().collect();
    let clo = client_order(&h);
    let reads: Vec<(usize, Loc, Val)> = events
        .iter()
        .enumerate()
        .filter_map(|(i, e)| match e.label {
            Label::Read(x, v) => Some((i, x, v)),
            _ => None,
        })
        .collect();
    let mut rfs: Vec<Vec<(usize, usize)>> = vec![vec![]];
    for &(r, x, v) in &reads {
        let srcs: Vec<usize> = (0..events.len())
            .filter(|&w| events[w].label.loc() == Some(x) && events[w].label.wval() == Some(v))
            .collect();
        rfs = rfs
            .into_iter()
            .flat_map(|p| {
                srcs.iter().map(move |&w| {
                    let mut p = p.clone();
                    p.push((r, w));
                    p
                })
            })
            .collect();
    }
    let mut locs: Vec<Loc> = events.iter().filter(|e| e.label.is_update()).filter_map(|e| e.label.loc()).collect();
    locs.sort();
    locs.dedup();
    let mut mos: Vec<Vec<(Loc, Vec<usize>)>> = vec![vec![]];
    for &x in &locs {
        let ups: Vec<usize> =
            (0..events.len()).filter(|&i| events[i].label.is_update() && events[i].label.loc() == Some(x)).collect();
        let perms = all_perms(&ups);
        mos = mos
            .into_iter()
            .flat_map(|m| {
                perms.iter().map(move |p| {
                    let mut m = m.clone();
                    m.push((x, p.clone()));
                    m
                })
            })
            .collect();
    }
    let mut out = vec![];
    for rf in &rfs {
        for mo in &mos {
            out.push(Graph {
                events: events.clone(),
                clo: clo.clone(),
                rf: rf.iter().copied().collect(),
                mo: mo.iter().cloned().collect(),
            });
        }
    }
    out
}

pub fn brute(h: &History, dynamic: bool) -> bool {
    all_graphs(h).iter().any(|g| {
        if dynamic {
            check_dynamic_opacity_execution(g).is_ok()
        } else {
            check_opacity_execution(g).is_ok()
        }
    })
}

fn op() -> impl Strategy<Value = Label> {
    prop_oneof![
        (0u8..2).prop_map(Label::Alloc),
        (0u8..2, 0u32..3).prop_map(|(x, v)| Label::Read(x, v)),
        (0u8..2, 1u32..3).prop_map(|(x, v)| Label::Write(x, v)),
    ]
}

fn ending() -> impl Strategy<Value = Vec<Label>> {
    prop_oneof![
        Just(vec![]),
        Just(vec![Label::Commit]),
        Just(vec![Label::Commit, Label::Success]),
        Just(vec![Label::Commit, Label::Success]),
        Just(vec![Label::Abort]),
        Just(vec![Label::Commit, Label::Abort]),
    ]
}

/// Well-formed histories of up to `txns` single-transaction threads.
pub fn history(txns: usize, ops: usize) -> impl Strategy<Value = History> {
    let body = (prop::collection::vec(op(), 0..=ops), ending()).prop_map(|(mut b, e)| {
        b.insert(0, Label::Begin);
        b.extend(e);
        b
    });
    (prop::collection::vec(body, 1..=txns), prop::collection::vec(any::<u8>(), 64)).prop_map(|(bodies, pick)| {
        let mut cur = vec![0usize; bodies.len()];
        let mut evs = vec![];
        let mut k = 0;
        loop {
            let live: Vec<usize> = (0..bodies.len()).filter(|&t| cur[t] < bodies[t].len()).collect();
            if live.is_empty() {
                break;
            }
            let t = live[pick[k % pick.len()] as usize % live.len()];
            k += 1;
            // keep success adjacent to its commit
            loop {
                evs.push((t as TxId + 1, bodies[t][cur[t]]));
                cur[t] += 1;
                if cur[t] < bodies[t].len() && bodies[t][cur[t]] == Label::Success {
                    continue;
                }
                break;
            }
        }
        h(&evs)
    })
}
