mod common;

use common::{h, hc};
use opacity::Label::*;
use opacity::*;

#[test]
fn fig4_litmus_verdicts() {
    for l in fig4() {
        assert_eq!(check_opacity_execution(&l.graph), l.expect, "{}", l.name);
    }
}

#[test]
fn fig4_histories_agree_with_their_graphs() {
    for l in fig4() {
        let hist = History::new(l.graph.events.iter().copied().map(Item::Ev).collect());
        let v = check_history_durable_opacity(&hist);
        assert_eq!(v.ok(), l.expect.is_ok(), "{}", l.name);
    }
}

#[test]
fn reading_an_aborted_write_violates_vis_rf() {
    let l = &fig4()[0];
    assert_eq!(check_opacity_execution(&l.graph), Err(Axiom::VisRf));
}

#[test]
fn committed_write_persists_across_crash() {
    let hist = hc(&[
        Some((1, Begin)),
        Some((1, Alloc(0))),
        Some((1, Write(0, 42))),
        Some((1, Commit)),
        Some((1, Success)),
        None,
        Some((2, Begin)),
        Some((2, Read(0, 42))),
    ]);
    assert!(check_history_ddo(&hist).ok());
}

#[test]
fn pending_write_is_not_visible_after_crash() {
    let hist = hc(&[
        Some((1, Begin)),
        Some((1, Alloc(0))),
        Some((1, Write(0, 42))),
        None,
        Some((2, Begin)),
        Some((2, Read(0, 42))),
    ]);
    let v = check_history_ddo(&hist);
    assert_eq!(v.failing_prefix, Some(5));
}

#[test]
fn commit_pending_write_may_be_observed() {
    let hist = hc(&[
        Some((1, Begin)),
        Some((1, Alloc(0))),
        Some((1, Write(0, 42))),
        Some((1, Commit)),
        None,
        Some((2, Begin)),
        Some((2, Read(0, 42))),
        Some((2, Commit)),
        Some((2, Success)),
    ]);
    let v = check_history_ddo(&hist);
    assert!(v.ok());
    assert_eq!(check_dynamic_opacity_execution(v.witness.as_ref().unwrap()), Ok(()));
}

#[test]
fn visible_write_without_allocation_is_opaque_but_not_dynamically() {
    let hist = h(&[(1, Begin), (1, Write(0, 1)), (1, Commit), (1, Success)]);
    assert!(check_history_durable_opacity(&hist).ok());
    assert_eq!(check_history_ddo(&hist).failing_prefix, Some(4));
}

#[test]
fn aborted_write_needs_no_allocation() {
    let hist = h(&[(1, Begin), (1, Write(0, 1)), (1, Abort)]);
    assert!(check_history_ddo(&hist).ok());
}

#[test]
fn read_of_never_written_location_has_no_witness() {
    let hist = h(&[(1, Begin), (1, Read(0, 0))]);
    assert_eq!(check_history_ddo(&hist).failing_prefix, Some(2));
}

#[test]
fn read_of_fresh_allocation_returns_zero() {
    let hist = h(&[
        (1, Begin),
        (1, Alloc(3)),
        (1, Commit),
        (1, Success),
        (2, Begin),
        (2, Read(3, 0)),
    ]);
    assert!(check_history_ddo(&hist).ok());
}

#[test]
fn internal_read_must_see_latest_own_write() {
    let hist = h(&[(1, Begin), (1, Alloc(0)), (1, Write(0, 1)), (1, Write(0, 2)), (1, Read(0, 1))]);
    assert_eq!(witness(&hist, true).unwrap_err(), NoWitness::Internal(4));
}

#[test]
fn real_time_order_is_respected() {
    // T2 starts after T1 finished, so it cannot read the old value
    let hist = h(&[
        (1, Begin),
        (1, Alloc(0)),
        (1, Write(0, 5)),
        (1, Commit),
        (1, Success),
        (2, Begin),
        (2, Write(0, 7)),
        (2, Commit),
        (2, Success),
        (3, Begin),
        (3, Read(0, 5)),
    ]);
    assert_eq!(check_history_ddo(&hist).failing_prefix, Some(11));
}

#[test]
fn overlapping_transactions_may_serialise_either_way() {
    let hist = h(&[
        (1, Begin),
        (1, Alloc(0)),
        (1, Commit),
        (1, Success),
        (2, Begin),
        (3, Begin),
        (2, Write(0, 7)),
        (2, Commit),
        (2, Success),
        (3, Read(0, 0)),
        (3, Commit),
        (3, Success),
    ]);
    assert!(check_history_ddo(&hist).ok());
    let co = client_order(&hist);
    assert!(co.contains(&(1, 2)) && co.contains(&(1, 3)));
    assert!(!co.contains(&(2, 3)) && !co.contains(&(3, 2)));
}

#[test]
fn write_skew_is_opaque_shape_but_not_serialisable() {
    // T1 reads y=0 writes x=1; T2 reads x=0 writes y=1; both commit
    let events = vec![
        Event { id: 0, tid: 0, txid: 0, label: Begin },
        Event { id: 1, tid: 0, txid: 0, label: Alloc(0) },
        Event { id: 2, tid: 0, txid: 0, label: Alloc(1) },
        Event { id: 3, tid: 0, txid: 0, label: Commit },
        Event { id: 4, tid: 0, txid: 0, label: Success },
        Event { id: 5, tid: 1, txid: 1, label: Begin },
        Event { id: 6, tid: 2, txid: 2, label: Begin },
        Event { id: 7, tid: 1, txid: 1, label: Read(1, 0) },
        Event { id: 8, tid: 2, txid: 2, label: Read(0, 0) },
        Event { id: 9, tid: 1, txid: 1, label: Write(0, 1) },
        Event { id: 10, tid: 2, txid: 2, label: Write(1, 1) },
        Event { id: 11, tid: 1, txid: 1, label: Commit },
        Event { id: 12, tid: 2, txid: 2, label: Commit },
        Event { id: 13, tid: 1, txid: 1, label: Success },
        Event { id: 14, tid: 2, txid: 2, label: Success },
    ];
    let g = Graph {
        events,
        clo: [(0, 1), (0, 2)].into(),
        rf: [(7, 2), (8, 1)].into(),
        mo: [(0, vec![1, 9]), (1, vec![2, 10])].into(),
    };
    assert_eq!(check_serializability_execution(&g), Err(Axiom::Ext));
    assert_eq!(check_opacity_execution(&g), Err(Axiom::Ext));
    let hist = History::new(g.events.iter().copied().map(Item::Ev).collect());
    assert!(!check_history_ddo(&hist).ok());
}

#[test]
fn serialisability_rejects_incomplete_graphs() {
    let l = &fig4()[2];
    assert_eq!(check_serializability_execution(&l.graph), Err(Axiom::Incomplete));
}

#[test]
fn int_rejects_reading_a_later_own_write() {
    let events = vec![
        Event { id: 0, tid: 0, txid: 0, label: Begin },
        Event { id: 1, tid: 0, txid: 0, label: Read(0, 1) },
        Event { id: 2, tid: 0, txid: 0, label: Write(0, 1) },
    ];
    let g = Graph { events, clo: Default::default(), rf: [(1, 2)].into(), mo: [(0, vec![2])].into() };
    assert_eq!(check_opacity_execution(&g), Err(Axiom::Int));
}

#[test]
fn ill_typed_rf_is_reported() {
    let events = vec![
        Event { id: 0, tid: 0, txid: 0, label: Begin },
        Event { id: 1, tid: 0, txid: 0, label: Write(0, 2) },
        Event { id: 2, tid: 0, txid: 0, label: Read(0, 1) },
    ];
    let g = Graph { events, clo: Default::default(), rf: [(2, 1)].into(), mo: [(0, vec![1])].into() };
    assert!(matches!(check_opacity_execution(&g), Err(Axiom::Typing(_))));
}

#[test]
fn ordered_history_keeps_commit_invocations_only() {
    use opacity::{Action::*, Inv, Res};
    let acts = [
        Inv(1, Inv::Begin),
        Res(1, Res::Begin),
        Inv(1, Inv::Alloc),
        Res(1, Res::Alloc(2)),
        Inv(1, Inv::Write(2, 9)),
        Res(1, Res::Write(2, 9)),
        Inv(1, Inv::Commit),
        Crash,
        Inv(2, Inv::Begin),
        Res(2, Res::Abort),
    ];
    let hist = ordered_history(&acts);
    let labels: Vec<String> = hist
        .items
        .iter()
        .map(|i| match i {
            Item::Ev(e) => format!("{}:{}@{}", e.txid, e.label, e.id),
            Item::Crash(id) => format!("X@{id}"),
        })
        .collect();
    assert_eq!(labels, ["1:B@1", "1:M2@3", "1:W2=9@5", "1:C@6", "X@7", "2:A@9"]);
}
