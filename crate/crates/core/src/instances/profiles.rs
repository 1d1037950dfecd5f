//! Scripted strategy profiles for the generated instances.

use std::collections::HashMap;
use std::sync::RwLock;

use crate::auction::{GameState, Instance, PlayerId};
use crate::error::{Error, Result};
use crate::instances::{Thm1Layout, Thm1Params};
use crate::money::Money;
use crate::solver::{solve, SolvedGame, SolverConfig};
use crate::valuation::ItemSet;
use crate::vcg::vcg;
use crate::verifier::{AbstractState, SolverProfile, StrategyProfile};

/// Largest grid level not above `v`.
fn floor_grid(inst: &Instance, v: Money) -> Money {
    let g = &inst.bid_grid;
    let idx = g.partition_point(|x| *x <= v);
    if idx == 0 {
        Money::ZERO
    } else {
        g[idx - 1]
    }
}

/// Largest grid level strictly below `v` (zero if none).
fn pred_grid(inst: &Instance, v: Money) -> Money {
    let g = &inst.bid_grid;
    let idx = g.partition_point(|x| *x < v);
    if idx == 0 {
        Money::ZERO
    } else {
        g[idx - 1]
    }
}

fn on_grid(inst: &Instance, v: Money, what: &str) -> Result<Money> {
    inst.grid_index(v)
        .map(|_| v)
        .ok_or_else(|| Error::domain(format!("{what} = {v} is not on the bid grid")))
}

fn plus(inst: &Instance, v: Money) -> Result<Money> {
    inst.bid_plus(v).ok_or_else(|| Error::domain(format!("no grid level above {v}")))
}

/// The equilibrium of the unit-demand chain construction.
///
/// Abstract state: one flag per round. On `I_i` the flag says whether `p_(i+1)`
/// already holds `I_(i+1)` (always set on `I_k`); on `Y` whether `p_1` holds
/// `I_1`; on `Z1` whether `p_0` holds `Y`; on `Z2` whether `p_0` holds `Y` or
/// `Z1`.
pub struct Thm1Profile {
    layout: Thm1Layout,
    zero_plus: Money,
    one: Money,
    ten_minus_eps: Money,
    below_ten_minus_eps: Money,
    ten_minus_d1: Money,
    d1_minus_eps: Money,
    d2: Option<Money>,
}

impl Thm1Profile {
    pub fn new(inst: &Instance, p: &Thm1Params) -> Result<Self> {
        let ten = Money::from_int(10);
        let ten_minus_eps = on_grid(inst, ten - p.epsilon, "10 - epsilon")?;
        Ok(Thm1Profile {
            layout: Thm1Layout { k: p.k },
            zero_plus: plus(inst, Money::ZERO)?,
            one: on_grid(inst, Money::from_int(1), "1")?,
            ten_minus_eps,
            below_ten_minus_eps: pred_grid(inst, ten_minus_eps),
            ten_minus_d1: on_grid(inst, ten - p.delta(1), "10 - delta_1")?,
            d1_minus_eps: on_grid(inst, p.delta(1) - p.epsilon, "delta_1 - epsilon")?,
            d2: if p.k >= 2 { Some(on_grid(inst, p.delta(2), "delta_2")?) } else { None },
        })
    }

    fn flag(&self, state: &GameState) -> bool {
        let l = self.layout;
        let t = state.round();
        let holds = |player: PlayerId, item: usize| state.holdings[player].contains(item);
        if let Some(i) = l.chain_index(t) {
            i == l.k || holds(l.p(i + 1), l.item(i + 1))
        } else if t == l.y() {
            holds(l.p(1), l.item(1))
        } else if t == l.z1() {
            holds(Thm1Layout::P0, l.y())
        } else if t == l.z2() {
            holds(Thm1Layout::P0, l.y()) || holds(Thm1Layout::P0, l.z1())
        } else {
            false
        }
    }
}

impl StrategyProfile for Thm1Profile {
    fn name(&self) -> String {
        format!("thm1(k={})", self.layout.k)
    }

    fn project(&self, _inst: &Instance, state: &GameState) -> AbstractState {
        let t = state.round();
        let key = if t < self.layout.num_items() { vec![i64::from(self.flag(state))] } else { vec![] };
        AbstractState { round: t, key }
    }

    fn bid(&self, _inst: &Instance, player: PlayerId, at: &AbstractState) -> Option<Money> {
        let l = self.layout;
        let t = at.round;
        let flag = *at.key.first()? == 1;
        let (a, b, p0) = (Thm1Layout::A, Thm1Layout::B, Thm1Layout::P0);
        let zero = Money::ZERO;
        let bid = if let Some(i) = l.chain_index(t) {
            if flag {
                if player == l.p(i) {
                    self.zero_plus
                } else {
                    zero
                }
            } else if player == a || player == b {
                self.one
            } else if i == 1 && player == l.p(1) {
                self.d1_minus_eps
            } else if i == 1 && l.k >= 2 && player == l.p(2) {
                self.d2?
            } else {
                zero
            }
        } else if t == l.y() {
            match (flag, player) {
                (true, x) if x == p0 || x == l.p(1) => self.ten_minus_d1,
                (false, x) if x == p0 => self.below_ten_minus_eps,
                (false, x) if x == l.p(1) => self.ten_minus_eps,
                _ => zero,
            }
        } else if t == l.z1() {
            match (flag, player) {
                (false, x) if x == a || x == p0 => self.ten_minus_eps,
                _ => zero,
            }
        } else if t == l.z2() {
            match (flag, player) {
                (true, x) if x == b => self.zero_plus,
                (false, x) if x == b || x == p0 => self.ten_minus_eps,
                _ => zero,
            }
        } else {
            return None;
        };
        Some(bid)
    }

    fn domain(&self, _inst: &Instance, round: usize) -> Option<Vec<AbstractState>> {
        let m = self.layout.num_items();
        let keys: Vec<Vec<i64>> = if round == m {
            vec![vec![]]
        } else if round == 0 {
            vec![vec![1]]
        } else {
            vec![vec![0], vec![1]]
        };
        Some(keys.into_iter().map(|key| AbstractState { round, key }).collect())
    }

    fn describe(&self, _inst: &Instance, at: &AbstractState) -> String {
        let l = self.layout;
        let t = at.round;
        let on = at.key.first() == Some(&1);
        if let Some(i) = l.chain_index(t) {
            let what = if i == l.k {
                "first item".to_string()
            } else {
                format!("p{} holds I{}: {on}", i + 1, i + 1)
            };
            format!("auction I{i}, {what}")
        } else if t == l.y() {
            format!("auction Y, p1 holds I1: {on}")
        } else if t == l.z1() {
            format!("auction Z1, p0 holds Y: {on}")
        } else if t == l.z2() {
            format!("auction Z2, p0 satisfied: {on}")
        } else {
            "end".into()
        }
    }
}

type BudgetKey = (usize, Vec<Money>);

/// The equilibrium of the payment-budget variant.
///
/// All valuations are additive, so the remaining budgets are the whole
/// payoff-relevant state; the abstract state is the canonical budget vector.
/// On each chain item the additive bidders let `p_i` win but push its price
/// as high as `p_i` accepts, so that it cannot compete for the next item
/// (or, for `p_1`, for `Y`). Where no such price keeps the chain alive, `a`
/// takes the item at price 1.
pub struct Thm1BudgetedProfile {
    inst: Instance,
    p: Thm1Params,
    layout: Thm1Layout,
    zero_plus: Money,
    one: Money,
    bids: RwLock<HashMap<BudgetKey, Vec<Money>>>,
    values: RwLock<HashMap<BudgetKey, Vec<Money>>>,
}

impl Thm1BudgetedProfile {
    pub fn new(inst: &Instance, p: &Thm1Params) -> Result<Self> {
        Ok(Thm1BudgetedProfile {
            inst: inst.clone(),
            p: p.clone(),
            layout: Thm1Layout { k: p.k },
            zero_plus: plus(inst, Money::ZERO)?,
            one: on_grid(inst, Money::from_int(1), "1")?,
            bids: RwLock::new(HashMap::new()),
            values: RwLock::new(HashMap::new()),
        })
    }

    /// Highest bid `player` can afford and would place on `item` as a last chance.
    fn cap(&self, r: &[Money], player: PlayerId, item: usize) -> Money {
        let v = self.inst.valuations[player].marginal_unchecked(ItemSet::EMPTY, item);
        floor_grid(&self.inst, v.min(r[player]))
    }

    fn pay(&self, round: usize, r: &[Money], player: PlayerId, price: Money) -> Vec<Money> {
        let mut out = r.to_vec();
        out[player] = self.inst.canonical_budget(r[player] - price, self.inst.num_items() - round - 1);
        out
    }

    /// Utility-to-go of every player from `(round, r)` under the profile.
    fn values_at(&self, round: usize, r: &[Money]) -> Vec<Money> {
        let key = (round, r.to_vec());
        if let Some(v) = self.values.read().expect("lock").get(&key) {
            return v.clone();
        }
        let n = self.inst.num_players();
        let v = if round == self.inst.num_items() {
            vec![Money::ZERO; n]
        } else {
            let bids = self.bids_at(round, r);
            let w = self.inst.winner_of(&bids);
            let mut v = self.values_at(round + 1, &self.pay(round, r, w, bids[w]));
            v[w] += self.inst.valuations[w].marginal_unchecked(ItemSet::EMPTY, round) - bids[w];
            v
        };
        self.values.write().expect("lock").insert(key, v.clone());
        v
    }

    fn bids_at(&self, round: usize, r: &[Money]) -> Vec<Money> {
        let key = (round, r.to_vec());
        if let Some(b) = self.bids.read().expect("lock").get(&key) {
            return b.clone();
        }
        let b = self.compute_bids(round, r);
        self.bids.write().expect("lock").insert(key, b.clone());
        b
    }

    fn compute_bids(&self, round: usize, r: &[Money]) -> Vec<Money> {
        let l = self.layout;
        let inst = &self.inst;
        let (a, b, p0) = (Thm1Layout::A, Thm1Layout::B, Thm1Layout::P0);
        let mut bids = vec![Money::ZERO; inst.num_players()];
        if round == l.z2() {
            let q0 = self.cap(r, p0, round);
            bids[p0] = q0;
            bids[b] = if q0.is_zero() { self.zero_plus } else { q0 };
        } else if round == l.z1() {
            let q0 = self.cap(r, p0, round);
            bids[p0] = q0;
            bids[a] = q0;
        } else if round == l.y() {
            let p1 = l.p(1);
            let (c0, c1) = (self.cap(r, p0, round), self.cap(r, p1, round));
            if c0 >= c1 {
                // a and b sit at 0 ahead of p0 in the tie order
                bids[p0] = if c1.is_zero() { self.zero_plus.min(c0) } else { c1 };
                bids[p1] = c1;
            } else {
                bids[p0] = c0;
                bids[p1] = inst.bid_plus(c0).unwrap_or(c1).min(c1);
            }
        } else if let Some(i) = l.chain_index(round) {
            match self.chain_price(round, i, r) {
                Some(t) => {
                    bids[l.p(i)] = t;
                    bids[a] = pred_grid(inst, t);
                }
                None => {
                    bids[a] = self.one;
                    bids[b] = self.one;
                }
            }
        }
        bids
    }

    /// The price at which `p_i` should win `I_i`, if letting it win is in the
    /// additive bidders' interest and `p_i` accepts.
    fn chain_price(&self, round: usize, i: usize, r: &[Money]) -> Option<Money> {
        let l = self.layout;
        let inst = &self.inst;
        let (a, b) = (Thm1Layout::A, Thm1Layout::B);
        let pi = l.p(i);
        let top = self.cap(r, pi, round);
        let rival = if i < l.k { self.cap(r, l.p(i + 1), round) } else { Money::ZERO };
        let floor = rival.max(self.zero_plus);
        let eps = self.p.epsilon;
        let value_i = inst.valuations[pi].marginal_unchecked(ItemSet::EMPTY, round);
        let lo = inst.bid_grid.partition_point(|x| *x < floor);
        let hi = inst.bid_grid.partition_point(|x| *x <= top).max(lo);
        for &t in inst.bid_grid[lo..hi].iter().rev() {
            let cont = self.values_at(round + 1, &self.pay(round, r, pi, t));
            let by_a = self.values_at(round + 1, &self.pay(round, r, a, t));
            if Money::from_int(1) + eps - t + by_a[a] > cont[a] {
                continue;
            }
            let by_b = self.values_at(round + 1, &self.pay(round, r, b, t));
            if Money::from_int(1) - t + by_b[b] > cont[b] {
                continue;
            }
            let lose = self.values_at(round + 1, &self.pay(round, r, a, pred_grid(inst, t)));
            if value_i - t + cont[pi] < lose[pi] {
                continue;
            }
            return Some(t);
        }
        None
    }
}

impl StrategyProfile for Thm1BudgetedProfile {
    fn name(&self) -> String {
        format!("thm1-budgeted(k={})", self.layout.k)
    }

    fn project(&self, _inst: &Instance, state: &GameState) -> AbstractState {
        let key = state
            .remaining
            .as_ref()
            .map(|r| r.iter().map(|x| x.nanos()).collect())
            .unwrap_or_default();
        AbstractState { round: state.round(), key }
    }

    fn bid(&self, _inst: &Instance, player: PlayerId, at: &AbstractState) -> Option<Money> {
        if at.round >= self.inst.num_items() || at.key.len() != self.inst.num_players() {
            return None;
        }
        let r: Vec<Money> = at.key.iter().map(|&x| Money::from_nanos(x)).collect();
        Some(self.bids_at(at.round, &r)[player])
    }

    fn describe(&self, inst: &Instance, at: &AbstractState) -> String {
        let budgets: Vec<String> = at
            .key
            .iter()
            .zip(&inst.players)
            .map(|(x, n)| format!("{n}:{}", Money::from_nanos(*x)))
            .collect();
        format!("round {} budgets [{}]", at.round, budgets.join(", "))
    }
}

/// Plays the VCG outcome on path and the solver's equilibrium everywhere else.
///
/// On path the VCG winner of each item bids its VCG price and every other
/// bidder bids up to that price (one level lower where it would win the tie).
pub struct VcgMimicProfile {
    solved: SolvedGame,
    owners: Vec<PlayerId>,
    prices: Vec<Money>,
}

impl VcgMimicProfile {
    pub fn new(inst: &Instance) -> Result<Self> {
        let res = vcg(inst)?;
        let owners = res
            .item_owners(inst.num_items())
            .into_iter()
            .enumerate()
            .map(|(j, o)| {
                o.ok_or_else(|| Error::domain(format!("item {} is unallocated by VCG", inst.items[j])))
            })
            .collect::<Result<Vec<_>>>()?;
        let solved = solve(inst, &SolverConfig::default())?;
        Ok(VcgMimicProfile { solved, owners, prices: res.prices })
    }

    pub fn solved(&self) -> &SolvedGame {
        &self.solved
    }

    fn on_path(&self, at: &AbstractState) -> bool {
        at.key[..at.round].iter().zip(&self.owners).all(|(&w, &o)| w as usize == o)
    }
}

impl StrategyProfile for VcgMimicProfile {
    fn name(&self) -> String {
        "vcg-mimic".into()
    }

    /// Actual winners (needed to tell the VCG path apart) plus budgets.
    fn project(&self, _inst: &Instance, state: &GameState) -> AbstractState {
        let mut key: Vec<i64> = state.winners.iter().map(|&w| w as i64).collect();
        key.extend(state.remaining.iter().flatten().map(|r| r.nanos()));
        AbstractState { round: state.round(), key }
    }

    fn bid(&self, inst: &Instance, player: PlayerId, at: &AbstractState) -> Option<Money> {
        if at.round >= inst.num_items() {
            return None;
        }
        if !self.on_path(at) {
            let mut reduced = at.clone();
            for w in &mut reduced.key[..at.round] {
                *w = i64::from(inst.key_winner(*w as usize));
            }
            return SolverProfile { solved: &self.solved }.bid(inst, player, &reduced);
        }
        let owner = self.owners[at.round];
        let price = self.prices[owner];
        if player == owner {
            return Some(price);
        }
        let mut holdings = ItemSet::EMPTY;
        for (j, &w) in at.key[..at.round].iter().enumerate() {
            if w as usize == player {
                holdings = holdings.with(j);
            }
        }
        let marginal = inst.valuations[player].marginal_unchecked(holdings, at.round);
        let ceiling = if inst.wins_tie(owner, player) { price } else { pred_grid(inst, price) };
        Some(floor_grid(inst, marginal.min(ceiling)))
    }
}
