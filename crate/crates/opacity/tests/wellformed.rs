mod common;

use common::{h, hc};
use opacity::Label::*;
use opacity::*;
use proptest::prelude::*;

fn clauses(hist: &History) -> Vec<Clause> {
    let mut c: Vec<Clause> = check_wellformed(hist).into_iter().map(|v| v.clause).collect();
    c.dedup();
    c
}

#[test]
fn well_formed_history_has_no_violations() {
    let hist = hc(&[
        Some((1, Begin)),
        Some((1, Alloc(0))),
        Some((2, Begin)),
        Some((1, Commit)),
        Some((1, Success)),
        Some((2, Read(0, 0))),
        None,
        Some((3, Begin)),
    ]);
    assert!(check_wellformed(&hist).is_empty());
}

fn on(tid: ThreadId, txid: TxId, label: Label) -> Item {
    Item::Ev(Event { id: 0, tid, txid, label })
}

#[test]
fn transaction_on_two_threads() {
    let hist = History::new(vec![on(0, 1, Begin), on(1, 1, Abort)]);
    assert_eq!(clauses(&hist), [Clause::SameThread]);
}

#[test]
fn interleaved_transactions_on_one_thread() {
    let hist = History::new(vec![on(0, 1, Begin), on(0, 2, Begin), on(0, 1, Abort), on(0, 2, Abort)]);
    assert!(clauses(&hist).contains(&Clause::SameThread));
}

#[test]
fn missing_or_late_begin() {
    assert_eq!(clauses(&h(&[(1, Read(0, 0))])), [Clause::Begin]);
    assert_eq!(clauses(&h(&[(1, Begin), (1, Begin)])), [Clause::Begin]);
}

#[test]
fn two_commits_or_events_after_abort() {
    assert!(clauses(&h(&[(1, Begin), (1, Commit), (1, Commit)])).contains(&Clause::SingleTerminal));
    assert_eq!(clauses(&h(&[(1, Begin), (1, Abort), (1, Alloc(0))])), [Clause::SingleTerminal]);
}

#[test]
fn operation_after_commit() {
    assert_eq!(clauses(&h(&[(1, Begin), (1, Commit), (1, Read(0, 0))])), [Clause::AfterCommit]);
}

#[test]
fn success_without_commit() {
    assert_eq!(clauses(&h(&[(1, Begin), (1, Success)])), [Clause::AfterCommit]);
}

#[test]
fn live_transaction_followed_by_another() {
    let hist = History::new(vec![on(0, 1, Begin), on(0, 1, Commit), on(0, 2, Begin)]);
    assert_eq!(clauses(&hist), [Clause::OneLive]);
}

#[test]
fn double_allocation_by_successful_transactions() {
    let hist = h(&[
        (1, Begin),
        (1, Alloc(0)),
        (1, Commit),
        (1, Success),
        (2, Begin),
        (2, Alloc(0)),
        (2, Commit),
        (2, Success),
    ]);
    assert_eq!(clauses(&hist), [Clause::SingleAlloc]);
    // an aborted allocation does not count
    let hist = h(&[(1, Begin), (1, Alloc(0)), (1, Abort), (2, Begin), (2, Alloc(0)), (2, Commit), (2, Success)]);
    assert!(check_wellformed(&hist).is_empty());
}

#[test]
fn thread_reused_after_crash() {
    let hist = History::new(vec![on(0, 1, Begin), on(0, 1, Abort), Item::Crash(2), on(0, 2, Begin)]);
    assert_eq!(clauses(&hist), [Clause::DistinctThreads]);
}

#[test]
fn every_clause_has_a_negative_fixture() {
    let negatives = [
        History::new(vec![on(0, 1, Begin), on(1, 1, Abort)]),
        h(&[(1, Begin), (1, Begin)]),
        h(&[(1, Begin), (1, Abort), (1, Alloc(0))]),
        h(&[(1, Begin), (1, Commit), (1, Read(0, 0))]),
        History::new(vec![on(0, 1, Begin), on(0, 1, Commit), on(0, 2, Begin)]),
        h(&[(1, Begin), (1, Alloc(0)), (1, Commit), (1, Success), (2, Begin), (2, Alloc(0)), (2, Commit), (2, Success)]),
        History::new(vec![on(0, 1, Begin), on(0, 1, Abort), Item::Crash(2), on(0, 2, Begin)]),
    ];
    let hit: std::collections::BTreeSet<Clause> = negatives.iter().flat_map(clauses).collect();
    assert_eq!(hit.into_iter().collect::<Vec<_>>(), Clause::ALL);
}

#[test]
fn clause_names_are_distinct() {
    let mut names: Vec<_> = Clause::ALL.iter().map(|c| c.name()).collect();
    names.sort();
    names.dedup();
    assert_eq!(names.len(), Clause::ALL.len());
}

proptest! {
    #[test]
    fn generated_histories_are_well_formed_up_to_allocation(hist in common::history(4, 4)) {
        let v: Vec<_> = check_wellformed(&hist).into_iter().filter(|v| v.clause != Clause::SingleAlloc).collect();
        prop_assert!(v.is_empty(), "{:?}", v);
    }

    #[test]
    fn ordered_histories_of_prefixes_are_prefixes(hist in common::history(3, 3)) {
        for n in 0..hist.items.len() {
            let p = hist.prefix(n);
            prop_assert_eq!(&p.items[..], &hist.items[..n]);
        }
    }
}
