//! One-shot deviation checks for scripted strategy profiles.
//!
//! The game has a finite horizon and observed actions, so a profile is a
//! subgame perfect equilibrium exactly when no player gains from changing a
//! single bid at a single state while following the profile afterwards.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::Serialize;

use crate::auction::{GameState, Instance, Outcome, PlayerId, StateKey};
use crate::error::{Error, Result};
use crate::money::{Money, Utility};
use crate::solver::{reachable_layers, SolvedGame};

/// Payoff-relevant summary of a state as seen by a profile.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct AbstractState {
    pub round: usize,
    pub key: Vec<i64>,
}

pub trait StrategyProfile: Sync {
    fn name(&self) -> String;

    fn project(&self, inst: &Instance, state: &GameState) -> AbstractState;

    /// Prescribed bid, or `None` where the profile is undefined.
    fn bid(&self, inst: &Instance, player: PlayerId, at: &AbstractState) -> Option<Money>;

    /// All abstract states of a round, when the profile declares them.
    fn domain(&self, _inst: &Instance, _round: usize) -> Option<Vec<AbstractState>> {
        None
    }

    fn describe(&self, _inst: &Instance, at: &AbstractState) -> String {
        format!("round {} {:?}", at.round, at.key)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VerifyMode {
    /// Every reachable state, abstraction ignored except for bids.
    Concrete,
    /// One representative concrete state per declared abstract state.
    Abstract,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Spe,
    NotSpe,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    pub state: String,
    pub round: usize,
    pub player: String,
    pub prescribed_bid: Money,
    pub bid: Money,
    pub gain: Money,
    /// Utility-to-go after the deviation.
    pub value_to_go: Money,
    /// Realized utility so far plus `value_to_go`.
    pub resulting_utility: Money,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeviationReport {
    pub profile: String,
    pub mode: VerifyMode,
    pub verdict: Verdict,
    pub witnesses: Vec<Witness>,
    pub states_checked: usize,
}

#[derive(Clone, Debug)]
pub struct VerifyConfig {
    pub max_states: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { max_states: 4_000_000 }
    }
}

fn prescribed(
    inst: &Instance,
    prof: &dyn StrategyProfile,
    state: &GameState,
) -> Result<(AbstractState, Vec<Money>)> {
    let at = prof.project(inst, state);
    let mut bids = Vec::with_capacity(inst.num_players());
    for i in 0..inst.num_players() {
        let b = prof.bid(inst, i, &at).ok_or_else(|| Error::ProfileIncomplete {
            player: inst.players[i].clone(),
            state: inst.describe_state(state),
        })?;
        bids.push(b);
    }
    Ok((at, bids))
}

/// Plays the profile from the initial state.
pub fn play(inst: &Instance, prof: &dyn StrategyProfile) -> Result<Outcome> {
    let mut state = inst.initial_state();
    let mut prices = Vec::with_capacity(inst.num_items());
    for _ in 0..inst.num_items() {
        let (_, bids) = prescribed(inst, prof, &state)?;
        let (_, price, next) = crate::auction::resolve_round(inst, &state, &bids)?;
        prices.push(price);
        state = next;
    }
    Outcome::from_terminal(inst, &state, prices)
}

/// Stage result of `player` bidding `bid` while the others follow `bids`.
fn deviate(
    inst: &Instance,
    state: &GameState,
    bids: &[Money],
    player: PlayerId,
    bid: Money,
) -> (PlayerId, Money, GameState) {
    let mut dev = bids.to_vec();
    dev[player] = bid;
    let w = inst.winner_of(&dev);
    (w, dev[w], inst.advance(state, w, dev[w]))
}

/// Value of every player at `state` given continuation values of successors.
fn stage_value(
    inst: &Instance,
    state: &GameState,
    winner: PlayerId,
    price: Money,
    next_value: &[Money],
) -> Vec<Money> {
    let mut v = next_value.to_vec();
    v[winner] += inst.marginal_now(state, winner) - price;
    v
}

/// Best deviation of `player` at `state`, if any strictly improves.
fn best_deviation(
    inst: &Instance,
    state: &GameState,
    bids: &[Money],
    player: PlayerId,
    current: Money,
    value_of: &dyn Fn(&GameState) -> Result<Vec<Money>>,
) -> Result<Option<(Money, Money)>> {
    let others: Vec<Money> = bids
        .iter()
        .enumerate()
        .map(|(j, b)| if j == player { Money::from_nanos(-1) } else { *b })
        .collect();
    let top = if inst.num_players() > 1 { Some(inst.winner_of(&others)) } else { None };
    let marginal = inst.marginal_now(state, player);
    let mut best: Option<(Money, Money)> = None;
    let mut consider = |bid: Money, value: Money| {
        if value > current && best.is_none_or(|(_, v)| value > v) {
            best = Some((bid, value));
        }
    };
    let mut losing_value: Option<Money> = None;
    let mut win_value_no_budget: Option<Money> = None;
    for &b in inst.feasible_bids(state, player) {
        if b == bids[player] {
            continue;
        }
        let wins = match top {
            None => true,
            Some(w) => b > others[w] || (b == others[w] && inst.wins_tie(player, w)),
        };
        if !wins {
            if losing_value.is_none() {
                let (w, p, next) = deviate(inst, state, bids, player, b);
                let v = stage_value(inst, state, w, p, &value_of(&next)?)[player];
                losing_value = Some(v);
            }
            consider(b, losing_value.expect("set above"));
            continue;
        }
        let v = if state.remaining.is_none() {
            // the continuation ignores the price without budgets
            let base = match win_value_no_budget {
                Some(x) => x,
                None => {
                    let next = inst.advance(state, player, Money::ZERO);
                    let x = marginal + value_of(&next)?[player];
                    win_value_no_budget = Some(x);
                    x
                }
            };
            base - b
        } else {
            let next = inst.advance(state, player, b);
            marginal - b + value_of(&next)?[player]
        };
        consider(b, v);
    }
    Ok(best)
}

fn realized(inst: &Instance, state: &GameState, player: PlayerId) -> Money {
    inst.valuations[player].value_unchecked(state.holdings[player]) - state.payments[player]
}

fn witness(
    inst: &Instance,
    state: &GameState,
    player: PlayerId,
    prescribed_bid: Money,
    bid: Money,
    value: Money,
    current: Money,
    label: String,
) -> Witness {
    Witness {
        state: label,
        round: state.round(),
        player: inst.players[player].clone(),
        prescribed_bid,
        bid,
        gain: value - current,
        value_to_go: value,
        resulting_utility: realized(inst, state, player) + value,
    }
}

/// Values of the profile at every reachable concrete state.
pub struct ConcreteValues {
    pub layers: Vec<Vec<GameState>>,
    pub values: HashMap<StateKey, Vec<Money>>,
}

pub fn concrete_values(
    inst: &Instance,
    prof: &dyn StrategyProfile,
    cfg: &VerifyConfig,
) -> Result<ConcreteValues> {
    let layers = reachable_layers(inst, cfg.max_states)?;
    let m = inst.num_items();
    let n = inst.num_players();
    let mut values: HashMap<StateKey, Vec<Money>> = HashMap::new();
    for s in &layers[m] {
        values.insert(inst.state_key(s), vec![Money::ZERO; n]);
    }
    for t in (0..m).rev() {
        let computed: Vec<Result<(StateKey, Vec<Money>)>> = layers[t]
            .par_iter()
            .map(|s| {
                let (_, bids) = prescribed(inst, prof, s)?;
                let (w, p, next) = crate::auction::resolve_round(inst, s, &bids)?;
                let v = stage_value(inst, s, w, p, &values[&inst.state_key(&next)]);
                Ok((inst.state_key(s), v))
            })
            .collect();
        for r in computed {
            let (k, v) = r?;
            values.insert(k, v);
        }
    }
    Ok(ConcreteValues { layers, values })
}

fn verify_concrete(
    inst: &Instance,
    prof: &dyn StrategyProfile,
    cfg: &VerifyConfig,
) -> Result<DeviationReport> {
    let cv = concrete_values(inst, prof, cfg)?;
    let value_of = |s: &GameState| -> Result<Vec<Money>> {
        cv.values.get(&inst.state_key(s)).cloned().ok_or_else(|| {
            Error::Consistency(format!("unvisited state {}", inst.describe_state(s)))
        })
    };
    let states: Vec<&GameState> = cv.layers[..inst.num_items()].iter().flatten().collect();
    let found: Vec<Result<Vec<Witness>>> = states
        .par_iter()
        .map(|s| {
            let (_, bids) = prescribed(inst, prof, s)?;
            let current = &cv.values[&inst.state_key(s)];
            let mut out = Vec::new();
            for i in 0..inst.num_players() {
                if let Some((b, v)) = best_deviation(inst, s, &bids, i, current[i], &value_of)? {
                    out.push(witness(inst, s, i, bids[i], b, v, current[i], inst.describe_state(s)));
                }
            }
            Ok(out)
        })
        .collect();
    let mut witnesses = Vec::new();
    for r in found {
        witnesses.extend(r?);
    }
    Ok(report(prof, VerifyMode::Concrete, witnesses, states.len()))
}

fn report(
    prof: &dyn StrategyProfile,
    mode: VerifyMode,
    witnesses: Vec<Witness>,
    states_checked: usize,
) -> DeviationReport {
    DeviationReport {
        profile: prof.name(),
        mode,
        verdict: if witnesses.is_empty() { Verdict::Spe } else { Verdict::NotSpe },
        witnesses,
        states_checked,
    }
}

/// Representative concrete state per abstract state, found breadth-first.
pub struct AbstractGraph {
    pub layers: Vec<BTreeMap<AbstractState, GameState>>,
    pub values: HashMap<AbstractState, Vec<Money>>,
}

pub fn abstract_values(inst: &Instance, prof: &dyn StrategyProfile) -> Result<AbstractGraph> {
    let m = inst.num_items();
    let n = inst.num_players();
    let mut domains: Vec<Option<Vec<AbstractState>>> =
        (0..=m).map(|t| prof.domain(inst, t)).collect();
    for d in domains.iter_mut().flatten() {
        d.sort();
    }
    let in_domain = |at: &AbstractState| -> bool {
        match &domains[at.round] {
            Some(d) => d.binary_search(at).is_ok(),
            None => true,
        }
    };
    let mut layers: Vec<BTreeMap<AbstractState, GameState>> = Vec::with_capacity(m + 1);
    let root = inst.initial_state();
    let mut first = BTreeMap::new();
    let root_at = prof.project(inst, &root);
    if !in_domain(&root_at) {
        return Err(Error::DomainClosure { state: prof.describe(inst, &root_at) });
    }
    first.insert(root_at, root);
    layers.push(first);
    for t in 0..m {
        let mut next_layer: BTreeMap<AbstractState, GameState> = BTreeMap::new();
        for s in layers[t].values() {
            for w in 0..n {
                let prices: &[Money] =
                    if s.remaining.is_some() { inst.feasible_bids(s, w) } else { &[Money::ZERO] };
                for &p in prices {
                    let next = inst.advance(s, w, p);
                    let at = prof.project(inst, &next);
                    if !in_domain(&at) {
                        return Err(Error::DomainClosure { state: prof.describe(inst, &at) });
                    }
                    next_layer.entry(at).or_insert(next);
                }
            }
        }
        layers.push(next_layer);
    }
    let mut values: HashMap<AbstractState, Vec<Money>> = HashMap::new();
    for at in layers[m].keys() {
        values.insert(at.clone(), vec![Money::ZERO; n]);
    }
    for t in (0..m).rev() {
        for (at, s) in &layers[t] {
            let (_, bids) = prescribed(inst, prof, s)?;
            let (w, p, next) = crate::auction::resolve_round(inst, s, &bids)?;
            let nv = &values[&prof.project(inst, &next)];
            let v = stage_value(inst, s, w, p, nv);
            values.insert(at.clone(), v);
        }
    }
    Ok(AbstractGraph { layers, values })
}

fn verify_abstract(inst: &Instance, prof: &dyn StrategyProfile) -> Result<DeviationReport> {
    let g = abstract_values(inst, prof)?;
    let value_of = |s: &GameState| -> Result<Vec<Money>> {
        let at = prof.project(inst, s);
        g.values
            .get(&at)
            .cloned()
            .ok_or_else(|| Error::DomainClosure { state: prof.describe(inst, &at) })
    };
    let states: Vec<(&AbstractState, &GameState)> =
        g.layers[..inst.num_items()].iter().flat_map(|l| l.iter()).collect();
    let found: Vec<Result<Vec<Witness>>> = states
        .par_iter()
        .map(|(at, s)| {
            let (_, bids) = prescribed(inst, prof, s)?;
            let current = &g.values[*at];
            let mut out = Vec::new();
            for i in 0..inst.num_players() {
                if let Some((b, v)) = best_deviation(inst, s, &bids, i, current[i], &value_of)? {
                    out.push(witness(inst, s, i, bids[i], b, v, current[i], prof.describe(inst, at)));
                }
            }
            Ok(out)
        })
        .collect();
    let mut witnesses = Vec::new();
    for r in found {
        witnesses.extend(r?);
    }
    Ok(report(prof, VerifyMode::Abstract, witnesses, states.len()))
}

/// Checks every single-round deviation over the full feasible grid.
pub fn verify_one_shot(
    inst: &Instance,
    prof: &dyn StrategyProfile,
    mode: VerifyMode,
    cfg: &VerifyConfig,
) -> Result<DeviationReport> {
    match mode {
        VerifyMode::Concrete => verify_concrete(inst, prof, cfg),
        VerifyMode::Abstract => verify_abstract(inst, prof),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DualRun {
    pub concrete: DeviationReport,
    pub abstract_report: DeviationReport,
    /// Concrete states whose value differs from their abstract class value.
    pub ill_formed: Vec<String>,
}

impl DualRun {
    pub fn agree(&self) -> bool {
        self.concrete.verdict == self.abstract_report.verdict && self.ill_formed.is_empty()
    }
}

/// Runs both modes and checks that values are constant on every projection class.
pub fn dual_run(
    inst: &Instance,
    prof: &dyn StrategyProfile,
    cfg: &VerifyConfig,
) -> Result<DualRun> {
    let concrete = verify_concrete(inst, prof, cfg)?;
    let abstract_report = verify_abstract(inst, prof)?;
    let cv = concrete_values(inst, prof, cfg)?;
    let ag = abstract_values(inst, prof)?;
    let mut ill_formed = Vec::new();
    for s in cv.layers.iter().flatten() {
        let at = prof.project(inst, s);
        let class = ag.values.get(&at);
        if class != cv.values.get(&inst.state_key(s)) {
            ill_formed.push(inst.describe_state(s));
        }
    }
    ill_formed.sort();
    Ok(DualRun { concrete, abstract_report, ill_formed })
}

/// True iff no prescribed last-round bid exceeds the bidder's marginal value.
pub fn check_no_last_round_overbid(
    inst: &Instance,
    prof: &dyn StrategyProfile,
    mode: VerifyMode,
    cfg: &VerifyConfig,
) -> Result<bool> {
    let last = inst.num_items() - 1;
    let states: Vec<GameState> = match mode {
        VerifyMode::Concrete => reachable_layers(inst, cfg.max_states)?.swap_remove(last),
        VerifyMode::Abstract => abstract_values(inst, prof)?.layers[last].values().cloned().collect(),
    };
    for s in &states {
        let (_, bids) = prescribed(inst, prof, s)?;
        for (i, b) in bids.iter().enumerate() {
            if *b > inst.marginal_now(s, i) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Utility-to-go of every player at `state` when the profile is followed.
pub fn continuation_values(
    inst: &Instance,
    prof: &dyn StrategyProfile,
    state: &GameState,
) -> Result<Vec<Money>> {
    let mut s = state.clone();
    let start: Vec<Money> = (0..inst.num_players()).map(|i| realized(inst, &s, i)).collect();
    while s.round() < inst.num_items() {
        let (_, bids) = prescribed(inst, prof, &s)?;
        s = crate::auction::resolve_round(inst, &s, &bids)?.2;
    }
    Ok((0..inst.num_players()).map(|i| realized(inst, &s, i) - start[i]).collect())
}

/// Final utilities reached from `state` under the profile.
pub fn final_utilities(
    inst: &Instance,
    prof: &dyn StrategyProfile,
    state: &GameState,
) -> Result<Vec<Utility>> {
    let mut s = state.clone();
    while s.round() < inst.num_items() {
        let (_, bids) = prescribed(inst, prof, &s)?;
        s = crate::auction::resolve_round(inst, &s, &bids)?.2;
    }
    (0..inst.num_players())
        .map(|i| crate::auction::utility(inst, i, s.holdings[i], s.payments[i]))
        .collect()
}

/// The solver's policy as a profile over concrete states.
pub struct SolverProfile<'a> {
    pub solved: &'a SolvedGame,
}

impl StrategyProfile for SolverProfile<'_> {
    fn name(&self) -> String {
        format!("solver-policy/{}", self.solved.rule.id())
    }

    fn project(&self, inst: &Instance, state: &GameState) -> AbstractState {
        let key = inst.state_key(state);
        let mut out: Vec<i64> = key.winners.iter().map(|&w| i64::from(w)).collect();
        out.extend(key.remaining.iter().map(|r| r.nanos()));
        AbstractState { round: state.round(), key: out }
    }

    fn bid(&self, _inst: &Instance, player: PlayerId, at: &AbstractState) -> Option<Money> {
        let key = StateKey {
            winners: at.key[..at.round].iter().map(|&w| w as u8).collect(),
            remaining: at.key[at.round..].iter().map(|&r| Money::from_nanos(r)).collect(),
        };
        self.solved.policy.get(&key).map(|p| p.bids[player])
    }
}
