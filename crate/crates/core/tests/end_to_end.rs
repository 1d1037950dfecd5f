use seqauction::instances::{
    appendix_a_instance, identical_items_instance, load, save, thm1_instance, Thm1Params,
    Thm1Profile,
};
use seqauction::solver::{solve, SolverConfig};
use seqauction::verifier::{play, verify_one_shot, SolverProfile, Verdict, VerifyConfig, VerifyMode};
use seqauction::{money, Money};

#[test]
fn saved_instances_load_back_identically() {
    let dir = std::env::temp_dir().join(format!("seqauction-e2e-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("thm1.json");
    let inst = thm1_instance(&Thm1Params::standard(3)).unwrap();
    save(&inst, &path).unwrap();
    let back = load(&path).unwrap();
    assert_eq!(back, inst);
    let p = Thm1Params::from_instance(&back).unwrap();
    assert_eq!(p, Thm1Params::standard(3));
    let a = play(&inst, &Thm1Profile::new(&inst, &p).unwrap()).unwrap();
    let b = play(&back, &Thm1Profile::new(&back, &p).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn solver_equilibrium_on_identical_items_verifies() {
    let inst = identical_items_instance(3).unwrap();
    let solved = solve(&inst, &SolverConfig::default()).unwrap();
    let prof = SolverProfile { solved: &solved };
    let r = verify_one_shot(&inst, &prof, VerifyMode::Concrete, &VerifyConfig::default()).unwrap();
    assert_eq!(r.verdict, Verdict::Spe);
    assert_eq!(play(&inst, &prof).unwrap().allocation, solved.outcome.allocation);
}

#[test]
fn three_item_example_in_sale_order_is_inefficient() {
    let inst = appendix_a_instance(money("0.05")).unwrap();
    let solved = solve(&inst, &SolverConfig::default()).unwrap();
    assert!(solved.outcome.welfare < money("2.95"));
    assert!(solved.outcome.welfare > Money::from_int(1));
}
