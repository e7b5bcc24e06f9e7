use ddtms::*;
use opacity::{check_history_ddo, check_wellformed, ordered_history, Action::*, Inv as I, Res as R};
use proptest::prelude::*;

const TXNS: u32 = 3;
const LOCS: u8 = 2;
const VALS: u32 = 2;

fn candidates(d: &DState, fresh: u32) -> Vec<Step> {
    let mut out = vec![];
    for t in 0..fresh + 1 {
        let mut invs = vec![I::Begin, I::Alloc, I::Commit];
        let mut ress = vec![R::Begin, R::Commit, R::Abort];
        for l in 0..LOCS {
            invs.push(I::Read(l));
            ress.push(R::Alloc(l));
            for v in 0..VALS {
                invs.push(I::Write(l, v));
                ress.push(R::Read(l, v));
                ress.push(R::Write(l, v));
            }
        }
        out.extend(invs.into_iter().map(|i| Step::Ext(Inv(t, i))));
        out.extend(ress.into_iter().map(|r| Step::Ext(Res(t, r))));
        out.push(Step::Commit(t));
    }
    out.push(Step::Ext(Crash));
    out.retain(|s| !d.step(*s).is_empty());
    // an aborted begin has no begin event in the ordered history
    out.retain(|s| !matches!(s, Step::Ext(Res(t, R::Abort)) if d.pc(*t) == Pc::Delta(I::Begin)));
    out
}

/// A random fault-free DDTMS run, returned as its external actions.
fn walk(choices: &[u16], crashes: usize) -> Vec<Action> {
    let mut d = DState::initial();
    let mut h = vec![];
    let mut crashed = 0;
    let mut next_tx = TXNS;
    for &c in choices {
        let mut cs = candidates(&d, next_tx);
        if crashed == crashes {
            cs.retain(|s| *s != Step::Ext(Crash));
        }
        if cs.is_empty() {
            break;
        }
        let s = cs[c as usize % cs.len()];
        let ns = d.step(s);
        d = ns[(c as usize / cs.len()) % ns.len()].clone();
        if let Step::Ext(a) = s {
            if a == Crash {
                crashed += 1;
                next_tx += TXNS;
            }
            h.push(a);
        }
    }
    h
}

fn perturb(h: &mut [Action], at: usize, v: u32) {
    if h.is_empty() {
        return;
    }
    let i = at % h.len();
    h[i] = match h[i] {
        Res(t, R::Read(l, _)) => Res(t, R::Read(l, v % (VALS + 1))),
        Res(t, R::Alloc(_)) => Res(t, R::Alloc((v % LOCS as u32) as u8)),
        Inv(t, I::Begin) => Inv(t + 1, I::Begin),
        Res(t, R::Commit) => Res(t, R::Abort),
        Res(t, R::Abort) => Res(t, R::Commit),
        other => other,
    };
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn random_runs_are_accepted(ch in prop::collection::vec(any::<u16>(), 0..40)) {
        let h = walk(&ch, 1);
        let a = accepts_history(&h);
        prop_assert!(a.accepted && a.strict);
        prop_assert!(replay(&h, a.witness.as_ref().unwrap()));
    }

    #[test]
    fn tracker_agrees_with_search(ch in prop::collection::vec(any::<u16>(), 0..40), at in any::<usize>(), v in any::<u32>()) {
        let mut h = walk(&ch, 1);
        perturb(&mut h, at, v);
        let a = accepts_history(&h);
        let t = h.iter().fold(Tracker::new(), |t, &x| t.advance(x));
        prop_assert_eq!(a.accepted, t.accepted());
        prop_assert_eq!(a.strict, t.strict());
        if let Some(w) = &a.witness {
            prop_assert!(replay(&h, w));
        }
    }

    #[test]
    fn accepted_histories_are_dynamically_durably_opaque(ch in prop::collection::vec(any::<u16>(), 0..48)) {
        let h = walk(&ch, 1);
        let oh = ordered_history(&h);
        prop_assert!(check_wellformed(&oh).is_empty(), "{:?}", check_wellformed(&oh));
        let v = check_history_ddo(&oh);
        prop_assert!(v.ok(), "{:?} fails at {:?}", h, v.failing_prefix);
    }

    #[test]
    fn faulted_histories_accept_every_extension(ch in prop::collection::vec(any::<u16>(), 0..30), ext in prop::collection::vec(any::<u16>(), 0..10)) {
        let h = walk(&ch, 0);
        let t = h.iter().fold(Tracker::new(), |t, &x| t.advance(x));
        if t.faulted {
            let mut h2 = h.clone();
            h2.extend(walk(&ext, 1));
            prop_assert!(accepts_history(&h2).accepted);
        }
    }
}

#[test]
fn read_invocations_of_unallocated_locations_fault() {
    let h = [Inv(0, I::Begin), Res(0, R::Begin), Inv(0, I::Read(1))];
    let t = h.iter().fold(Tracker::new(), |t, &x| t.advance(x));
    assert!(t.faulted);
    // anything after is accepted
    let mut h2 = h.to_vec();
    h2.push(Res(0, R::Read(1, 7)));
    h2.push(Res(9, R::Commit));
    assert!(accepts_history(&h2).accepted);
    assert!(!accepts_history(&h2).strict);
}
