use proptest::prelude::*;
use semistab::data::DataSet;
use semistab::exclusion::{
    candidate_orders, nilpotent_gate, run_odd, run_two, single_bad_prime, Engine, GateConclusion, Premise,
    ProofTrace, Rule, Verdict,
};

fn ledger_premises(t: &ProofTrace) -> Vec<&Premise> {
    t.steps.iter().flat_map(|s| &s.premises).filter(|p| matches!(p, Premise::Ledger { .. })).collect()
}

#[test]
fn theorem_traces_cite_only_listed_anchors() {
    let data = DataSet::bundled();
    for (p, ell) in [(2, 3), (3, 2), (5, 3), (7, 2)] {
        let t = single_bad_prime(p).unwrap();
        assert!(t.contains_conclusion(&format!("L = Q(A[{ell}])")), "p = {p}");
        for s in &t.steps {
            assert!(data.citations.mentions(&s.anchor), "{}", s.anchor);
        }
    }
    assert!(single_bad_prime(11).is_err());
}

#[test]
fn ledger_citations_surface_in_text() {
    let engine = Engine::bundled();
    for t in [run_odd(3, 5).unwrap().1, run_two(7).unwrap().1, single_bad_prime(2).unwrap()] {
        let text = t.to_text();
        let ledger = ledger_premises(&t);
        assert!(!ledger.is_empty());
        for p in ledger {
            let Premise::Ledger { field, invariant, citation, .. } = p else { unreachable!() };
            let entry = engine.data().ledger.lookup(field, invariant).unwrap();
            assert_eq!(&entry.citation, citation);
            assert!(text.contains(citation.as_str()));
        }
    }
}

#[test]
fn text_lines_have_fixed_shape() {
    let (_, t) = run_odd(5, 2).unwrap();
    for (i, line) in t.to_text().lines().enumerate() {
        assert!(line.starts_with(&format!("STEP {} RULE ", i + 1)), "{line}");
        assert!(line.contains(" PREMISES ") && line.contains(" CONCLUSION ") && line.contains(" CITE "));
    }
}

#[test]
fn json_round_trip_replays() {
    let engine = Engine::bundled();
    for p in [2, 3, 5, 7] {
        let t = single_bad_prime(p).unwrap();
        let back = ProofTrace::from_json(&t.to_json()).unwrap();
        assert_eq!(back, t);
        engine.replay(&back).unwrap();
    }
}

#[test]
fn gate_examples() {
    let (c, t) = nilpotent_gate(7).unwrap();
    assert_eq!(c, GateConclusion::Nonexistent);
    assert!(t.steps.iter().any(|s| s.rule == Rule::InertInGaussian && s.conclusion.contains("inert")));
    assert_eq!(nilpotent_gate(11).unwrap().0, GateConclusion::Nonexistent);
    assert_eq!(nilpotent_gate(17).unwrap().0, GateConclusion::NoObstruction);
    assert_eq!(nilpotent_gate(13).unwrap().0, GateConclusion::NoObstruction);
    assert!(nilpotent_gate(4).is_err());
}

#[test]
fn verdict_display() {
    assert_eq!(run_odd(3, 2).unwrap().0.to_string(), "CONTAINED Q(mu_3, 2^(1/3))");
    assert_eq!(run_two(7).unwrap().0.to_string(), "CONTAINED Q(mu_4, sqrt(7))");
    assert_eq!(Verdict::Stuck(vec!["|H| = 30".into()]).to_string(), "STUCK |H| = 30");
}

proptest! {
    #[test]
    fn candidate_orders_grow_with_bound(ell in prop::sample::select(vec![3u64, 5, 7]), b in 1u64..120, extra in 0u64..80) {
        let small = candidate_orders(ell, b);
        let large = candidate_orders(ell, b + extra);
        prop_assert!(small.is_subset(&large));
        for m in &small {
            prop_assert!(*m <= b);
            prop_assert!((1..=m / ell).any(|c| m % (ell * (1 + c * ell)) == 0));
        }
    }
}
