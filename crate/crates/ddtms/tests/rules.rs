use ddtms::*;
use opacity::{Action::*, Inv as I, Res as R};

fn run(h: &[Action]) -> Acceptance {
    let a = accepts_history(h);
    if let Some(w) = &a.witness {
        assert!(replay(h, w), "witness does not replay: {w:?}");
    }
    a
}

fn states_after(h: &[Action]) -> Vec<DState> {
    let mut t = Tracker::new();
    for &a in h {
        t = t.advance(a);
    }
    t.states.into_iter().collect()
}

#[test]
fn empty_history_is_accepted() {
    let a = run(&[]);
    assert!(a.accepted && a.strict);
}

#[test]
fn committed_allocation_survives_a_crash() {
    let h = [
        Inv(1, I::Begin),
        Res(1, R::Begin),
        Inv(1, I::Alloc),
        Res(1, R::Alloc(0)),
        Inv(1, I::Write(0, 1)),
        Res(1, R::Write(0, 1)),
        Inv(1, I::Commit),
        Res(1, R::Commit),
        Crash,
        Inv(2, I::Begin),
        Res(2, R::Begin),
        Inv(2, I::Read(0)),
        Res(2, R::Read(0, 1)),
    ];
    let a = run(&h);
    assert!(a.accepted && a.strict);
}

#[test]
fn write_to_unallocated_location_cannot_succeed() {
    let h = [
        Inv(1, I::Begin),
        Res(1, R::Begin),
        Inv(1, I::Write(0, 1)),
        Res(1, R::Write(0, 1)),
        Inv(1, I::Commit),
        Res(1, R::Commit),
    ];
    // the write may fault instead, after which anything goes
    let a = run(&h);
    assert!(!a.strict);
    assert!(a.accepted);
    assert_eq!(a.witness.unwrap().last(), Some(&Step::Fault(1)));
    let mut t = Tracker::new();
    for &x in &h[..4] {
        t = t.advance(x);
    }
    assert!(t.states.is_empty() && t.faulted);
}

#[test]
fn read_of_own_write() {
    let h = [
        Inv(1, I::Begin),
        Res(1, R::Begin),
        Inv(1, I::Alloc),
        Res(1, R::Alloc(0)),
        Inv(1, I::Write(0, 4)),
        Res(1, R::Write(0, 4)),
        Inv(1, I::Read(0)),
    ];
    let st = states_after(&h);
    assert_eq!(st.len(), 1);
    assert_eq!(st[0].step(Step::Ext(Res(1, R::Read(0, 4)))).len(), 1);
    assert!(st[0].step(Step::Ext(Res(1, R::Read(0, 3)))).is_empty());
}

#[test]
fn read_of_own_allocation_is_zero() {
    let h = [Inv(1, I::Begin), Res(1, R::Begin), Inv(1, I::Alloc), Res(1, R::Alloc(2)), Inv(1, I::Read(2))];
    let st = states_after(&h);
    assert_eq!(st[0].step(Step::Ext(Res(1, R::Read(2, 0)))).len(), 1);
    assert!(st[0].step(Step::Ext(Res(1, R::Read(2, 1)))).is_empty());
    assert!(st[0].faulting().is_empty());
}

#[test]
fn crash_keeps_only_the_last_memory_and_aborts_live_transactions() {
    let h = [
        Inv(1, I::Begin),
        Res(1, R::Begin),
        Inv(2, I::Begin),
        Res(2, R::Begin),
        Inv(2, I::Alloc),
        Res(2, R::Alloc(0)),
        Inv(2, I::Commit),
        Res(2, R::Commit),
    ];
    let st = states_after(&h);
    assert!(st.iter().all(|d| d.mems.len() == 2));
    for d in st {
        let c = d.step(Step::Ext(Crash));
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].mems, vec![*d.last()]);
        assert_eq!(c[0].pc(1), Pc::Aborted);
        assert_eq!(c[0].pc(2), Pc::Committed);
    }
}

#[test]
fn stale_reader_can_still_read_its_snapshot() {
    // T1 begins, T2 allocates and writes x=1, T1 reads x as unallocated
    // (fault) or may not read 1 and then 0 inconsistently
    let h = [
        Inv(0, I::Begin),
        Res(0, R::Begin),
        Inv(0, I::Alloc),
        Res(0, R::Alloc(0)),
        Inv(0, I::Commit),
        Res(0, R::Commit),
        Inv(1, I::Begin),
        Res(1, R::Begin),
        Inv(2, I::Begin),
        Res(2, R::Begin),
        Inv(2, I::Write(0, 1)),
        Res(2, R::Write(0, 1)),
        Inv(2, I::Commit),
        Res(2, R::Commit),
        Inv(1, I::Read(0)),
        Res(1, R::Read(0, 0)),
        Inv(1, I::Read(0)),
    ];
    let st = states_after(&h);
    assert!(!st.is_empty());
    for d in &st {
        assert!(d.step(Step::Ext(Res(1, R::Read(0, 1)))).is_empty());
    }
    assert!(st.iter().any(|d| !d.step(Step::Ext(Res(1, R::Read(0, 0)))).is_empty()));
}

#[test]
fn invalid_reader_can_only_abort() {
    let mut h = vec![
        Inv(0, I::Begin),
        Res(0, R::Begin),
        Inv(0, I::Alloc),
        Res(0, R::Alloc(0)),
        Inv(0, I::Alloc),
        Res(0, R::Alloc(1)),
        Inv(0, I::Commit),
        Res(0, R::Commit),
        Inv(1, I::Begin),
        Res(1, R::Begin),
        Inv(1, I::Read(0)),
        Res(1, R::Read(0, 0)),
        Inv(2, I::Begin),
        Res(2, R::Begin),
        Inv(2, I::Write(0, 1)),
        Res(2, R::Write(0, 1)),
        Inv(2, I::Write(1, 1)),
        Res(2, R::Write(1, 1)),
        Inv(2, I::Commit),
        Res(2, R::Commit),
        Inv(1, I::Write(1, 1)),
        Res(1, R::Write(1, 1)),
        Inv(1, I::Commit),
    ];
    // T1's read set no longer matches the last memory: no commit
    let mut t = Tracker::new();
    for &a in &h {
        t = t.advance(a);
    }
    assert!(t.states.iter().all(|d| d.pc(1) == Pc::Delta(I::Commit)));
    assert!(t.advance(Res(1, R::Commit)).states.is_empty());
    assert!(!t.advance(Res(1, R::Abort)).states.is_empty());
    h.push(Res(1, R::Commit));
    assert!(!run(&h).accepted);
}

#[test]
fn pending_commit_may_take_effect_before_crash() {
    let h = [
        Inv(0, I::Begin),
        Res(0, R::Begin),
        Inv(0, I::Alloc),
        Res(0, R::Alloc(0)),
        Inv(0, I::Write(0, 42)),
        Res(0, R::Write(0, 42)),
        Inv(0, I::Commit),
        Crash,
        Inv(1, I::Begin),
        Res(1, R::Begin),
        Inv(1, I::Read(0)),
    ];
    let st = states_after(&h);
    assert!(st.iter().any(|d| !d.step(Step::Ext(Res(1, R::Read(0, 42)))).is_empty()));
    // or not, in which case the read may fault
    assert!(st.iter().any(|d| d.faulting() == vec![1]));
}

#[test]
fn abort_is_not_allowed_once_commit_took_effect() {
    let h = [Inv(0, I::Begin), Res(0, R::Begin), Inv(0, I::Alloc), Res(0, R::Alloc(0)), Inv(0, I::Commit)];
    let st = states_after(&h);
    let pi: Vec<_> = st.iter().filter(|d| d.pc(0) == Pc::Pi).collect();
    assert!(!pi.is_empty());
    for d in pi {
        assert!(d.step(Step::Ext(Res(0, R::Abort))).is_empty());
    }
}

#[test]
fn double_allocation_forces_abort() {
    let h = [
        Inv(0, I::Begin),
        Res(0, R::Begin),
        Inv(0, I::Alloc),
        Res(0, R::Alloc(0)),
        Inv(0, I::Commit),
        Res(0, R::Commit),
        Inv(1, I::Begin),
        Res(1, R::Begin),
        Inv(1, I::Alloc),
        Res(1, R::Alloc(0)),
        Inv(1, I::Commit),
    ];
    let t = h.iter().fold(Tracker::new(), |t, &a| t.advance(a));
    assert!(t.advance(Res(1, R::Commit)).states.is_empty());
    assert!(t.advance(Res(1, R::Abort)).strict());
}

#[test]
fn chaos_accepts_everything() {
    let h = [Inv(0, I::Begin), Res(0, R::Begin), Inv(0, I::Read(3))];
    let t = h.iter().fold(Tracker::new(), |t, &a| t.advance(a));
    assert!(t.faulted);
    let d = &t.states.iter().next().unwrap().step(Step::Fault(0))[0];
    assert!(d.chaos);
    assert_eq!(d.step(Step::Ext(Res(5, R::Read(1, 7)))), vec![d.clone()]);
}

#[test]
fn seq_bound_one_contains_the_trivial_history() {
    let b = SeqBounds { txns: 1, locs: 1, vals: 1, ops: 2 };
    let hs = ddtms_seq_generate(b);
    let want = vec![
        Inv(0, I::Begin),
        Res(0, R::Begin),
        Inv(0, I::Alloc),
        Res(0, R::Alloc(0)),
        Inv(0, I::Write(0, 0)),
        Res(0, R::Write(0, 0)),
        Inv(0, I::Commit),
        Res(0, R::Commit),
    ];
    assert!(hs.contains(&want));
}

#[test]
fn seq_histories_never_interleave() {
    let b = SeqBounds { txns: 2, locs: 2, vals: 2, ops: 2 };
    for h in ddtms_seq_generate(b) {
        let mut done = std::collections::BTreeSet::new();
        let mut cur = None;
        for a in &h {
            let t = match a {
                Inv(t, _) | Res(t, _) => *t,
                Crash => panic!("crash in a sequential history"),
            };
            if cur != Some(t) {
                assert!(!done.contains(&t));
                if let Some(c) = cur {
                    done.insert(c);
                }
                cur = Some(t);
            }
        }
    }
}

#[test]
fn seq_generator_matches_naive_enumeration() {
    for (txns, locs, vals, ops) in [(1, 1, 1, 2), (2, 2, 2, 2), (2, 2, 2, 3), (3, 1, 2, 2)] {
        let b = SeqBounds { txns, locs, vals, ops };
        let a = ddtms_seq_generate(b);
        let n = naive_seq_generate(b);
        assert_eq!(a.len(), n.len(), "{b:?}");
        assert_eq!(a, n, "{b:?}");
    }
}

#[test]
fn seq_histories_are_strictly_accepted() {
    for h in ddtms_seq_generate(SeqBounds { txns: 2, locs: 2, vals: 2, ops: 2 }) {
        assert!(h.iter().fold(Tracker::new(), |t, &a| t.advance(a)).strict());
    }
}
