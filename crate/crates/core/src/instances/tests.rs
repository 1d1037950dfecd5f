use super::*;
use crate::auction::{optimal_effective_welfare, optimal_welfare};
use crate::verifier::{
    check_no_last_round_overbid, continuation_values, dual_run, play, verify_one_shot, Verdict,
    VerifyConfig, VerifyMode,
};

fn m(s: &str) -> Money {
    money(s)
}

#[test]
fn params_guard_the_chain_inequality() {
    let ok = Thm1Params::standard(3);
    assert!(ok.validate().is_ok());
    let mut bad = ok.clone();
    bad.deltas[1] = bad.deltas[0];
    assert!(matches!(bad.validate(), Err(Error::Parameter(_))));
    let mut bad = ok.clone();
    bad.deltas[0] = bad.epsilon;
    assert!(matches!(bad.validate(), Err(Error::Parameter(_))));
    assert!(matches!(Thm1Params::standard(2).validate_budgeted(), Err(Error::Parameter(_))));
    assert!(Thm1Params::standard_budgeted(2).validate_budgeted().is_ok());
    assert!(Thm1Params::new(0, m("0.01"), vec![], m("0.01")).is_err());
}

#[test]
fn thm1_values_match_the_tables() {
    let p = Thm1Params::standard(3);
    let inst = thm1_instance(&p).unwrap();
    let l = Thm1Layout { k: 3 };
    let a = &inst.valuations[Thm1Layout::A];
    assert_eq!(a.value(ItemSet::from_items([l.item(1), l.item(2)])).unwrap(), m("2.02"));
    let p0 = &inst.valuations[Thm1Layout::P0];
    assert_eq!(p0.value(ItemSet::from_items([l.y(), l.z1()])).unwrap(), m("9.99"));
    let p1 = &inst.valuations[l.p(1)];
    assert_eq!(p1.marginal_value(ItemSet::singleton(l.item(1)), l.y()).unwrap(), m("9.98"));
    assert_eq!(p1.marginal_value(ItemSet::EMPTY, l.y()).unwrap(), m("10"));
    for v in &inst.valuations {
        assert!(v.is_monotone(ItemSet::full(inst.num_items())).unwrap());
    }
}

#[test]
fn thm1_welfare_identities() {
    for k in 1..=4 {
        let p = Thm1Params::standard(k);
        let inst = thm1_instance(&p).unwrap();
        let opt = optimal_welfare(&inst).unwrap().welfare;
        let expect = (Money::from_int(1) + p.epsilon).times(k as i64) + Money::from_int(30);
        assert_eq!(opt, expect, "k = {k}");
        let prof = Thm1Profile::new(&inst, &p).unwrap();
        let out = play(&inst, &prof).unwrap();
        let eq = Money::from_int(30) - p.epsilon + p.deltas.iter().copied().sum::<Money>();
        assert_eq!(out.welfare, eq, "k = {k}");
    }
}

#[test]
fn thm1_on_path_allocation() {
    let p = Thm1Params::standard(3);
    let inst = thm1_instance(&p).unwrap();
    let l = Thm1Layout { k: 3 };
    let prof = Thm1Profile::new(&inst, &p).unwrap();
    let out = play(&inst, &prof).unwrap();
    for i in 1..=3 {
        assert_eq!(out.allocation[l.item(i)], l.p(i));
    }
    assert_eq!(out.allocation[l.y()], Thm1Layout::P0);
    assert_eq!(out.prices[l.y()], m("9.98"));
    assert_eq!(out.allocation[l.z1()], Thm1Layout::A);
    assert_eq!(out.allocation[l.z2()], Thm1Layout::B);
}

#[test]
fn thm1_profile_is_an_equilibrium_for_small_k() {
    let cfg = VerifyConfig::default();
    for k in 1..=2 {
        let p = Thm1Params::standard(k);
        let inst = thm1_instance(&p).unwrap();
        let prof = Thm1Profile::new(&inst, &p).unwrap();
        let run = dual_run(&inst, &prof, &cfg).unwrap();
        assert_eq!(run.concrete.verdict, Verdict::Spe, "{:?}", run.concrete.witnesses);
        assert!(run.agree(), "{:?}", run.ill_formed);
        assert!(check_no_last_round_overbid(&inst, &prof, VerifyMode::Concrete, &cfg).unwrap());
    }
}

#[test]
fn thm1_case_values_after_first_chain_item() {
    let p = Thm1Params::standard(2);
    let inst = thm1_instance(&p).unwrap();
    let l = Thm1Layout { k: 2 };
    let prof = Thm1Profile::new(&inst, &p).unwrap();
    let s0 = inst.initial_state();
    let s1 = inst.advance(&s0, l.p(2), m("0.01"));
    let won = inst.advance(&s1, l.p(1), m("0.01"));
    let v = continuation_values(&inst, &prof, &won).unwrap();
    assert_eq!(v[Thm1Layout::A], m("10"));
    assert_eq!(v[Thm1Layout::B], m("9.99"));
    assert_eq!(v[Thm1Layout::P0], p.delta(1) - p.epsilon);
    assert_eq!(v[l.p(1)], Money::ZERO);
    let lost = inst.advance(&s1, Thm1Layout::A, m("1"));
    let v = continuation_values(&inst, &prof, &lost).unwrap();
    assert_eq!(v[Thm1Layout::A], p.epsilon);
    assert_eq!(v[Thm1Layout::B], p.epsilon);
    assert_eq!(v[Thm1Layout::P0], Money::ZERO);
    assert_eq!(v[l.p(1)], p.epsilon);
}

#[test]
fn budget_additive_matches_unit_demand_encoding() {
    let p = Thm1Params::standard(2);
    let ud = thm1_instance(&p).unwrap();
    let ba = thm1_budget_additive(&p).unwrap();
    for (x, y) in ud.valuations.iter().zip(&ba.valuations) {
        for s in ItemSet::full(ud.num_items()).subsets() {
            assert_eq!(x.value(s).unwrap(), y.value(s).unwrap());
        }
    }
    let l = Thm1Layout { k: 2 };
    let all = ItemSet::from_items([l.y(), l.z1(), l.z2()]);
    assert_eq!(ba.valuations[Thm1Layout::P0].value(all).unwrap(), m("9.99"));
}

#[test]
fn budgeted_play_charges_p1_above_epsilon() {
    for p in (1..=4).flat_map(|k| [Thm1Params::standard_budgeted(k), Thm1Params::coarse_budgeted(k)]) {
        let k = p.k;
        let (inst, prof) = thm1_budgeted(&p).unwrap();
        let l = Thm1Layout { k };
        let out = play(&inst, &prof).unwrap();
        let t = out.prices[l.item(1)];
        assert_eq!(out.allocation[l.item(1)], l.p(1));
        assert!(t > p.epsilon && t <= p.delta(1), "k = {k}: p1 paid {t}");
        assert_eq!(out.allocation[l.y()], Thm1Layout::P0);
        for i in 1..=k {
            assert_eq!(out.allocation[l.item(i)], l.p(i));
        }
        let opt = optimal_effective_welfare(&inst).unwrap().welfare;
        assert!(opt > out.welfare);
    }
}

#[test]
fn budgeted_profile_passes_abstract_verification() {
    for k in 1..=2 {
        let p = Thm1Params::coarse_budgeted(k);
        let (inst, prof) = thm1_budgeted(&p).unwrap();
        let rep = verify_one_shot(&inst, &prof, VerifyMode::Abstract, &VerifyConfig::default())
            .unwrap();
        assert_eq!(rep.verdict, Verdict::Spe, "k = {k}: {:?}", rep.witnesses);
    }
}

#[test]
fn appendix_examples() {
    let a = appendix_a_instance(m("0.05")).unwrap();
    assert_eq!(optimal_welfare(&a).unwrap().welfare, m("2.95"));
    let b = appendix_b_instance().unwrap();
    let res = crate::vcg::vcg(&b).unwrap();
    assert_eq!(res.prices, vec![m("0"), m("1"), m("1"), m("1")]);
    assert!(appendix_a_instance(m("0.25")).is_err());
}

#[test]
fn identical_items_are_flagged_and_round_trip() {
    let inst = identical_items_instance(3).unwrap();
    assert_eq!(inst.metadata["reconstructed"], serde_json::json!(true));
    for v in &inst.valuations {
        let vals = v.item_values();
        assert!(vals.iter().all(|x| *x == vals[0]));
    }
    let back = from_json(&to_json(&inst)).unwrap();
    assert_eq!(back, inst);
    assert!(identical_items_instance(1).is_err());
}

#[test]
fn json_round_trip_and_schema_errors() {
    let inst = thm1_instance(&Thm1Params::standard(2)).unwrap();
    let text = serde_json::to_string(&to_json(&inst)).unwrap();
    assert_eq!(parse(&text).unwrap(), inst);
    let (budgeted, _) = thm1_budgeted(&Thm1Params::standard_budgeted(2)).unwrap();
    let text = serde_json::to_string(&to_json(&budgeted)).unwrap();
    assert_eq!(parse(&text).unwrap(), budgeted);

    let mut doc: serde_json::Value = serde_json::to_value(to_json(&inst)).unwrap();
    doc.as_object_mut().unwrap().remove("items");
    match parse(&doc.to_string()) {
        Err(Error::Schema { path, .. }) => assert_eq!(path, "items"),
        other => panic!("expected a schema error, got {other:?}"),
    }
    assert!(matches!(parse("{not json"), Err(Error::Parse(_))));
}

#[test]
fn budgets_with_non_additive_valuations_are_accepted() {
    let mut doc = to_json(&appendix_a_instance(m("0.05")).unwrap());
    doc.budgets = Some(doc.players.iter().map(|p| (p.clone(), m("0.5"))).collect());
    let inst = from_json(&doc).unwrap();
    assert!(inst.has_budgets());
}
