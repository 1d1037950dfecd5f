use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;

use seqauction::auction::{optimal_welfare, poa as poa_ratio};
use seqauction::instances::{
    self, appendix_a_instance, appendix_a_instance_with_step, appendix_b_instance,
    identical_items_instance, poa_sweep, thm1_budget_additive, thm1_budgeted, thm1_instance,
    Thm1BudgetedProfile, Thm1Params, Thm1Profile, VcgMimicProfile,
};
use seqauction::ordering::{
    build_ap_forest, compare_with_vcg, enumerate_orderings, sample_orderings, test_conjecture,
    ConjectureConfig, OrderingVerdict,
};
use seqauction::solver::{solve as solve_game, SelectionRule, SolvedGame, SolverConfig};
use seqauction::vcg::vcg as vcg_outcome;
use seqauction::verifier::{
    dual_run, verify_one_shot, SolverProfile, StrategyProfile, Verdict, VerifyConfig, VerifyMode,
};
use seqauction::{money, Error, Instance, Money, Result};

use crate::report::RunReport;
use crate::{
    exit, ConjectureArgs, Family, GenArgs, InstanceArg, Mode, OrderingArgs, PoaArgs, ProfileKind,
    Rule, SolveArgs, VerifyArgs,
};

pub struct Context {
    pub timing: bool,
    pub output: Option<PathBuf>,
}

impl Context {
    fn emit(&self, text: &str) -> Result<()> {
        match &self.output {
            Some(p) => fs::write(p, text)?,
            None => std::io::stdout().write_all(text.as_bytes())?,
        }
        Ok(())
    }

    fn emit_report(&self, r: &RunReport) -> Result<()> {
        let text = serde_json::to_string_pretty(r).expect("reports serialize");
        self.emit(&(text + "\n"))
    }
}

fn parse_money(s: &str, what: &str) -> Result<Money> {
    s.parse().map_err(|_| Error::Parameter(format!("{what}: {s:?} is not a decimal amount")))
}

fn load(path: &Path) -> Result<(Instance, Vec<u8>)> {
    let bytes = fs::read(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| Error::Parse(e.to_string()))?;
    Ok((instances::parse(text)?, bytes))
}

fn thm1_params(a: &GenArgs, budgeted: bool) -> Result<Thm1Params> {
    let base = match (budgeted, a.coarse) {
        (true, true) => Thm1Params::coarse_budgeted(a.k),
        (true, false) => Thm1Params::standard_budgeted(a.k),
        (false, _) => Thm1Params::standard(a.k),
    };
    let epsilon = match &a.epsilon {
        Some(s) => parse_money(s, "epsilon")?,
        None => base.epsilon,
    };
    let deltas = match &a.deltas {
        Some(v) => v.iter().map(|s| parse_money(s, "deltas")).collect::<Result<Vec<_>>>()?,
        None => base.deltas.clone(),
    };
    let grid_step = match &a.grid_step {
        Some(s) => parse_money(s, "grid-step")?,
        None => base.grid_step,
    };
    Thm1Params::new(a.k, epsilon, deltas, grid_step)
}

fn family_id(f: Family) -> &'static str {
    match f {
        Family::Thm1 => "thm1",
        Family::Thm1Budgeted => "thm1-budgeted",
        Family::Thm1BudgetAdditive => "thm1-budget-additive",
        Family::AppendixA => "appendix-a",
        Family::AppendixB => "appendix-b",
        Family::Identical => "identical",
    }
}

pub fn gen(ctx: &Context, a: &GenArgs) -> Result<u8> {
    let (inst, profile) = match a.family {
        Family::Thm1 => {
            let p = thm1_params(a, false)?;
            (thm1_instance(&p)?, Some(("thm1", p.to_json())))
        }
        Family::Thm1Budgeted => {
            let p = thm1_params(a, true)?;
            (thm1_budgeted(&p)?.0, Some(("thm1-budgeted", p.to_json())))
        }
        Family::Thm1BudgetAdditive => {
            let p = thm1_params(a, false)?;
            (thm1_budget_additive(&p)?, Some(("thm1", p.to_json())))
        }
        Family::AppendixA => {
            let eps = match &a.epsilon {
                Some(s) => parse_money(s, "epsilon")?,
                None => money("0.05"),
            };
            let inst = match &a.grid_step {
                Some(s) => appendix_a_instance_with_step(eps, parse_money(s, "grid-step")?)?,
                None => appendix_a_instance(eps)?,
            };
            (inst, None)
        }
        Family::AppendixB => (appendix_b_instance()?, Some(("vcg-mimic", json!({})))),
        Family::Identical => (identical_items_instance(a.m)?, None),
    };
    let text = serde_json::to_string_pretty(&instances::to_json(&inst)).expect("instances serialize");
    ctx.emit(&(text + "\n"))?;
    if a.with_profile {
        let out = ctx.output.as_ref().expect("clap requires --output");
        let (name, params) = profile.unwrap_or(("solver", json!({})));
        let desc = json!({ "family": family_id(a.family), "profile": name, "params": params });
        let mut path = out.clone().into_os_string();
        path.push(".profile.json");
        fs::write(path, serde_json::to_string_pretty(&desc).expect("json") + "\n")?;
    }
    Ok(exit::OK)
}

fn item_order(inst: &Instance, names: &[String]) -> Result<Vec<usize>> {
    names.iter().map(|n| inst.item_id(n)).collect()
}

fn solver_config(rule: Rule, enumerate: bool, max_states: usize) -> SolverConfig {
    SolverConfig {
        rule: match rule {
            Rule::MaxTotalUtility => SelectionRule::MaxTotalUtility,
            Rule::MinPrice => SelectionRule::MinPrice,
        },
        max_states,
        enumerate,
    }
}

fn path_json(inst: &Instance, solved: &SolvedGame) -> serde_json::Value {
    let player = |i: usize| inst.players[i].clone();
    solved
        .path
        .iter()
        .map(|s| {
            json!({
                "item": inst.items[s.item],
                "winner": player(s.winner),
                "price": s.price,
                "bids": inst.players.iter().cloned().zip(s.bids.iter().map(|b| json!(b))).collect::<serde_json::Map<_, _>>(),
                "equilibria": s.equilibria,
                "candidates": s.candidates.as_ref().map(|c| c.iter().map(|&(w, p)| json!({"winner": player(w), "price": p})).collect::<Vec<_>>()),
            })
        })
        .collect()
}

pub fn solve(ctx: &Context, a: &SolveArgs) -> Result<u8> {
    let start = Instant::now();
    let (inst, bytes) = load(&a.instance)?;
    let order = match &a.order {
        Some(names) => item_order(&inst, names)?,
        None => (0..inst.num_items()).collect(),
    };
    let sold = inst.reordered(&order)?;
    let cfg = solver_config(a.rule, a.enumerate, a.max_states);
    let solved = solve_game(&sold, &cfg)?;
    let opt = optimal_welfare(&inst)?.welfare;
    let mut results = json!({
        "order": order.iter().map(|&j| inst.items[j].clone()).collect::<Vec<_>>(),
        "rule": solved.rule.id(),
        "path": path_json(&sold, &solved),
        "root_values": sold.players.iter().cloned().zip(solved.root_values(&sold).iter().map(|v| json!(v))).collect::<serde_json::Map<_, _>>(),
        "outcome": solved.outcome.to_json(&sold),
        "opt_welfare": opt,
        "poa": poa_ratio(opt, solved.outcome.welfare),
    });
    if inst.valuations.iter().all(|v| v.is_unit_demand()) {
        let res = vcg_outcome(&inst)?;
        let verdict = compare_with_vcg(&inst, &res, &order, &solved.outcome, inst.grid_step.times(2));
        results["vcg_replicated"] = json!(verdict == OrderingVerdict::VcgReplicated);
        if let OrderingVerdict::NotVcg { reason } = verdict {
            results["vcg_difference"] = json!(reason);
        }
    }
    let mut r = RunReport::new("solve", &bytes);
    r.parameters = json!({ "order": a.order, "rule": solved.rule.id(), "enumerate": a.enumerate, "max_states": a.max_states });
    r.results = results;
    r.stats = json!({ "states": solved.states });
    ctx.emit_report(&r.timed(ctx.timing, start.elapsed()))?;
    Ok(exit::OK)
}

fn default_profile(inst: &Instance) -> ProfileKind {
    match inst.metadata.get("family").and_then(|v| v.as_str()) {
        Some("thm1") | Some("thm1-budget-additive") => ProfileKind::Thm1,
        Some("thm1-budgeted") => ProfileKind::Thm1Budgeted,
        _ => ProfileKind::Solver,
    }
}

fn profile_id(p: ProfileKind) -> &'static str {
    match p {
        ProfileKind::Thm1 => "thm1",
        ProfileKind::Thm1Budgeted => "thm1-budgeted",
        ProfileKind::VcgMimic => "vcg-mimic",
        ProfileKind::Solver => "solver",
    }
}

pub fn verify(ctx: &Context, a: &VerifyArgs) -> Result<u8> {
    let start = Instant::now();
    let (inst, bytes) = load(&a.instance)?;
    let kind = a.profile.unwrap_or_else(|| default_profile(&inst));
    let solved;
    let prof: Box<dyn StrategyProfile + '_> = match kind {
        ProfileKind::Thm1 => Box::new(Thm1Profile::new(&inst, &Thm1Params::from_instance(&inst)?)?),
        ProfileKind::Thm1Budgeted => {
            Box::new(Thm1BudgetedProfile::new(&inst, &Thm1Params::from_instance(&inst)?)?)
        }
        ProfileKind::VcgMimic => Box::new(VcgMimicProfile::new(&inst)?),
        ProfileKind::Solver => {
            solved = solve_game(&inst, &SolverConfig::default())?;
            Box::new(SolverProfile { solved: &solved })
        }
    };
    let cfg = VerifyConfig { max_states: a.max_states };
    let trim = |mut rep: seqauction::verifier::DeviationReport| {
        let total = rep.witnesses.len();
        rep.witnesses.truncate(a.max_witnesses);
        (rep, total)
    };
    let (results, ok) = match a.mode {
        Mode::Concrete | Mode::Abstract => {
            let mode = if a.mode == Mode::Concrete { VerifyMode::Concrete } else { VerifyMode::Abstract };
            let (rep, total) = trim(verify_one_shot(&inst, prof.as_ref(), mode, &cfg)?);
            let ok = rep.verdict == Verdict::Spe;
            (json!({ "report": rep, "witness_count": total }), ok)
        }
        Mode::Dual => {
            let run = dual_run(&inst, prof.as_ref(), &cfg)?;
            let agree = run.agree();
            let ok = agree && run.concrete.verdict == Verdict::Spe;
            let (c, ct) = trim(run.concrete);
            let (ab, at) = trim(run.abstract_report);
            (
                json!({
                    "concrete": c, "concrete_witness_count": ct,
                    "abstract": ab, "abstract_witness_count": at,
                    "ill_formed": run.ill_formed, "agree": agree,
                }),
                ok,
            )
        }
    };
    let mut r = RunReport::new("verify", &bytes);
    r.parameters = json!({ "profile": profile_id(kind), "mode": format!("{:?}", a.mode).to_lowercase(), "max_states": a.max_states });
    r.results = results;
    ctx.emit_report(&r.timed(ctx.timing, start.elapsed()))?;
    Ok(if ok { exit::OK } else { exit::NEGATIVE })
}

pub fn vcg(ctx: &Context, a: &InstanceArg) -> Result<u8> {
    let start = Instant::now();
    let (inst, bytes) = load(&a.instance)?;
    let res = vcg_outcome(&inst)?;
    let mut r = RunReport::new("vcg", &bytes);
    r.results = res.to_json(&inst);
    ctx.emit_report(&r.timed(ctx.timing, start.elapsed()))?;
    Ok(exit::OK)
}

pub fn orderings(ctx: &Context, a: &OrderingArgs) -> Result<u8> {
    let start = Instant::now();
    let (inst, bytes) = load(&a.instance)?;
    let forest = build_ap_forest(&vcg_outcome(&inst)?);
    let mut o = enumerate_orderings(&forest, a.cap)?;
    if !o.exhaustive() && a.sample > 0 {
        o = sample_orderings(&forest, a.sample, a.seed);
    }
    let names: Vec<Vec<String>> =
        o.orderings.iter().map(|ord| ord.iter().map(|&j| inst.items[j].clone()).collect()).collect();
    let mut r = RunReport::new("orderings", &bytes);
    r.parameters = json!({ "cap": a.cap, "sample": a.sample, "seed": a.seed });
    r.results = json!({ "forest": forest.to_json(&inst), "orderings": names, "mode": o.mode });
    ctx.emit_report(&r.timed(ctx.timing, start.elapsed()))?;
    Ok(exit::OK)
}

pub fn conjecture(ctx: &Context, a: &ConjectureArgs) -> Result<u8> {
    let start = Instant::now();
    let o = &a.orderings;
    let (inst, bytes) = load(&o.instance)?;
    let cfg = ConjectureConfig {
        cap: o.cap,
        sample: o.sample,
        seed: o.seed,
        solver: SolverConfig { max_states: a.max_states, ..SolverConfig::default() },
        test_all: a.all,
    };
    let rep = test_conjecture(&inst, &cfg)?;
    let ok = if a.expect_none {
        rep.witness.is_none() && rep.enumeration == seqauction::ordering::EnumerationMode::Exhaustive
    } else {
        rep.witness.is_some()
    };
    let mut r = RunReport::new("conjecture", &bytes);
    r.parameters = json!({ "cap": o.cap, "sample": o.sample, "seed": o.seed, "all": a.all, "expect_none": a.expect_none });
    r.results = serde_json::to_value(&rep).expect("json");
    ctx.emit_report(&r.timed(ctx.timing, start.elapsed()))?;
    Ok(if ok { exit::OK } else { exit::NEGATIVE })
}

pub fn poa(ctx: &Context, a: &PoaArgs) -> Result<u8> {
    if a.k_from == 0 || a.k_from > a.k_to {
        return Err(Error::Parameter("need 1 <= k-from <= k-to".into()));
    }
    let rows = match a.family {
        Family::Thm1 => poa_sweep(false, a.k_from..=a.k_to, Thm1Params::standard)?,
        Family::Thm1Budgeted if a.coarse => {
            poa_sweep(true, a.k_from..=a.k_to, Thm1Params::coarse_budgeted)?
        }
        Family::Thm1Budgeted => poa_sweep(true, a.k_from..=a.k_to, Thm1Params::standard_budgeted)?,
        other => {
            return Err(Error::Parameter(format!(
                "poa sweeps the thm1 and thm1-budgeted families, not {}",
                family_id(other)
            )))
        }
    };
    let mut csv = String::from("k,opt,eq,ratio,ratio_exact,bound\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{:.6},{},{:.6}\n",
            r.k,
            r.opt,
            r.eq,
            r.ratio.to_f64(),
            r.ratio,
            r.bound.to_f64()
        ));
    }
    ctx.emit(&csv)?;
    if let Some(script) = &a.gnuplot_script {
        let data = ctx
            .output
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_else(|| "poa.csv".into());
        let text = format!(
            "set datafile separator ','\n\
             set key left top\n\
             set xlabel 'k'\n\
             set ylabel 'price of anarchy'\n\
             plot '{data}' using 1:4 skip 1 with linespoints title 'equilibrium', \\\n\
             \x20    '{data}' using 1:6 skip 1 with lines title 'lower bound'\n"
        );
        fs::write(script, text)?;
    }
    Ok(if rows.iter().all(|r| r.meets_bound()) { exit::OK } else { exit::NEGATIVE })
}
