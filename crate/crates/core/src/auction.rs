//! The sequential first-price auction game: instances, states, round
//! resolution, utilities and welfare benchmarks.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::money::{Money, Utility, WelfareRatio};
use crate::valuation::{ItemSet, Valuation, MAX_ITEMS};

pub type PlayerId = usize;
pub type ItemId = usize;

/// Winner per sold item, in sale order.
pub type Allocation = Vec<Option<PlayerId>>;

/// Items above this count skip the exhaustive critical-value scan and use
/// singleton marginals only.
const CRITICAL_SCAN_ITEMS: usize = 14;
/// Largest universe for the subset dynamic program in `optimal_welfare`.
const SUBSET_DP_ITEMS: usize = 16;
const BRUTE_FORCE_LIMIT: f64 = 1e8;
/// Largest threshold set kept for exact budget canonicalization.
const BUDGET_LEVEL_LIMIT: usize = 200_000;

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    /// Items in sale order; item ids index this list.
    pub items: Vec<String>,
    pub players: Vec<String>,
    pub valuations: Vec<Valuation>,
    /// Hard caps on total payment, when active.
    pub budgets: Option<Vec<Money>>,
    pub grid_step: Money,
    pub extra_grid_points: Vec<Money>,
    pub bid_grid: Vec<Money>,
    /// Players from highest to lowest priority in ties.
    pub tie_priority: Vec<PlayerId>,
    pub metadata: BTreeMap<String, serde_json::Value>,
    rank: Vec<usize>,
    /// `budget_levels[L]`: sums of at most `L` grid bids, when small enough.
    budget_levels: Vec<Option<Vec<Money>>>,
}

impl Instance {
    pub fn new(
        items: Vec<String>,
        players: Vec<String>,
        valuations: Vec<Valuation>,
        budgets: Option<Vec<Money>>,
        grid_step: Money,
        extra_grid_points: Vec<Money>,
        tie_priority: Option<Vec<PlayerId>>,
    ) -> Result<Instance> {
        let m = items.len();
        let n = players.len();
        if m == 0 || n == 0 {
            return Err(Error::domain("an instance needs at least one item and one player"));
        }
        if m > MAX_ITEMS {
            return Err(Error::capacity(format!("{m} items (limit {MAX_ITEMS})")));
        }
        if n > u8::MAX as usize {
            return Err(Error::capacity(format!("{n} players (limit {})", u8::MAX)));
        }
        let distinct = |names: &[String]| {
            let mut v = names.to_vec();
            v.sort();
            v.dedup();
            v.len() == names.len()
        };
        if !distinct(&items) {
            return Err(Error::domain("item names must be distinct"));
        }
        if !distinct(&players) {
            return Err(Error::domain("player names must be distinct"));
        }
        if valuations.len() != n {
            return Err(Error::domain(format!("{} valuations for {n} players", valuations.len())));
        }
        for (i, v) in valuations.iter().enumerate() {
            if v.num_items() != m {
                return Err(Error::domain(format!(
                    "valuation of {} covers {} items, expected {m}",
                    players[i],
                    v.num_items()
                )));
            }
            v.validate()?;
        }
        if let Some(b) = &budgets {
            if b.len() != n || b.iter().any(|x| x.is_negative()) {
                return Err(Error::domain("budgets must be non-negative, one per player"));
            }
        }
        if grid_step <= Money::ZERO {
            return Err(Error::domain("grid step must be positive"));
        }
        let tie_priority = tie_priority.unwrap_or_else(|| (0..n).collect());
        let mut rank = vec![usize::MAX; n];
        for (r, &p) in tie_priority.iter().enumerate() {
            if p >= n || rank[p] != usize::MAX {
                return Err(Error::domain("tie priority must be a permutation of the players"));
            }
            rank[p] = r;
        }
        if tie_priority.len() != n {
            return Err(Error::domain("tie priority must be a permutation of the players"));
        }
        let mut inst = Instance {
            items,
            players,
            valuations,
            budgets,
            grid_step,
            extra_grid_points,
            bid_grid: Vec::new(),
            tie_priority,
            metadata: BTreeMap::new(),
            rank,
            budget_levels: Vec::new(),
        };
        inst.bid_grid = inst.build_grid()?;
        inst.budget_levels = inst.build_budget_levels();
        Ok(inst)
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn num_players(&self) -> usize {
        self.players.len()
    }

    pub fn player_id(&self, name: &str) -> Result<PlayerId> {
        self.players
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| Error::domain(format!("unknown player {name:?}")))
    }

    pub fn item_id(&self, name: &str) -> Result<ItemId> {
        self.items
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| Error::domain(format!("unknown item {name:?}")))
    }

    /// Position of `player` in the tie order; lower wins ties.
    pub fn priority_rank(&self, player: PlayerId) -> usize {
        self.rank[player]
    }

    pub fn has_budgets(&self) -> bool {
        self.budgets.is_some()
    }

    pub fn grid_max(&self) -> Money {
        *self.bid_grid.last().expect("grid is never empty")
    }

    pub fn grid_index(&self, bid: Money) -> Option<usize> {
        self.bid_grid.binary_search(&bid).ok()
    }

    /// The next grid level above `bid` (the `b⁺` bid).
    pub fn bid_plus(&self, bid: Money) -> Option<Money> {
        let idx = match self.bid_grid.binary_search(&bid) {
            Ok(i) => i + 1,
            Err(i) => i,
        };
        self.bid_grid.get(idx).copied()
    }

    /// Default grid: multiples of the step up to the largest item value, every
    /// marginal value in the instance and its neighbours at `± step`, and any
    /// extra points.
    fn build_grid(&self) -> Result<Vec<Money>> {
        let m = self.num_items();
        let step = self.grid_step;
        let mut critical: Vec<Money> = Vec::new();
        for v in &self.valuations {
            if m <= CRITICAL_SCAN_ITEMS {
                for s in ItemSet::full(m).subsets() {
                    for j in ItemSet::full(m).minus(s).iter() {
                        critical.push(v.marginal_unchecked(s, j));
                    }
                }
            } else {
                critical.extend(v.item_values());
            }
        }
        critical.sort();
        critical.dedup();
        let top = critical.last().copied().unwrap_or(Money::ZERO);
        let levels = top.nanos() / step.nanos() + 1;
        if levels > 2_000_000 {
            return Err(Error::capacity(format!("bid grid with {levels} uniform levels")));
        }
        let mut grid: Vec<Money> = (0..levels).map(|k| step.times(k)).collect();
        for c in critical {
            for g in [c - step, c, c + step] {
                if !g.is_negative() {
                    grid.push(g);
                }
            }
        }
        for &e in &self.extra_grid_points {
            if e.is_negative() {
                return Err(Error::domain("grid points must be non-negative"));
            }
            grid.push(e);
        }
        grid.sort();
        grid.dedup();
        Ok(grid)
    }

    fn build_budget_levels(&self) -> Vec<Option<Vec<Money>>> {
        if self.budgets.is_none() {
            return Vec::new();
        }
        let mut levels = vec![Some(vec![Money::ZERO])];
        for _ in 0..self.num_items() {
            let next = match levels.last().and_then(Option::as_ref) {
                Some(prev) if prev.len() * self.bid_grid.len() <= BUDGET_LEVEL_LIMIT * 8 => {
                    let mut sums: Vec<Money> = prev
                        .iter()
                        .flat_map(|a| self.bid_grid.iter().map(move |b| *a + *b))
                        .collect();
                    sums.sort();
                    sums.dedup();
                    (sums.len() <= BUDGET_LEVEL_LIMIT).then_some(sums)
                }
                _ => None,
            };
            levels.push(next);
        }
        levels
    }

    /// Canonical remaining budget with `rounds_left` rounds to go: the largest
    /// sum of `rounds_left` grid bids not above `r`. Budgets with the same
    /// canonical value admit exactly the same future bid sequences.
    pub fn canonical_budget(&self, r: Money, rounds_left: usize) -> Money {
        let cap = self.grid_max().times(rounds_left as i64);
        let r = r.min(cap);
        match self.budget_levels.get(rounds_left).and_then(Option::as_ref) {
            Some(levels) => levels[levels.partition_point(|x| *x <= r) - 1],
            None => r,
        }
    }

    fn canonicalize(&self, state: &mut GameState) {
        let left = self.num_items() - state.round();
        if let Some(r) = &mut state.remaining {
            for x in r.iter_mut() {
                *x = self.canonical_budget(*x, left);
            }
        }
    }

    /// The same game with items sold in `order` (a permutation of item ids).
    pub fn reordered(&self, order: &[ItemId]) -> Result<Instance> {
        let m = self.num_items();
        let mut new_index = vec![usize::MAX; m];
        for (pos, &old) in order.iter().enumerate() {
            if old >= m || new_index[old] != usize::MAX {
                return Err(Error::domain("sale order must be a permutation of the items"));
            }
            new_index[old] = pos;
        }
        if order.len() != m {
            return Err(Error::domain("sale order must be a permutation of the items"));
        }
        let mut out = self.clone();
        out.items = order.iter().map(|&j| self.items[j].clone()).collect();
        out.valuations = self.valuations.iter().map(|v| v.permuted(&new_index)).collect();
        Ok(out)
    }

    pub fn initial_state(&self) -> GameState {
        let mut s = GameState {
            winners: Vec::new(),
            payments: vec![Money::ZERO; self.num_players()],
            holdings: vec![ItemSet::EMPTY; self.num_players()],
            remaining: self.budgets.clone(),
        };
        self.canonicalize(&mut s);
        s
    }

    /// Bids a player may place in `state`: the grid, cut at the remaining budget.
    pub fn feasible_bids(&self, state: &GameState, player: PlayerId) -> &[Money] {
        match &state.remaining {
            Some(r) => {
                let end = self.bid_grid.partition_point(|b| *b <= r[player]);
                &self.bid_grid[..end]
            }
            None => &self.bid_grid,
        }
    }

    /// Winner of a bid vector: highest bid, ties to the higher-priority player.
    pub fn winner_of(&self, bids: &[Money]) -> PlayerId {
        let mut best = 0;
        for i in 1..bids.len() {
            if bids[i] > bids[best] || (bids[i] == bids[best] && self.rank[i] < self.rank[best]) {
                best = i;
            }
        }
        best
    }

    /// Whether `a` beats `b` when both bid the same amount.
    pub fn wins_tie(&self, a: PlayerId, b: PlayerId) -> bool {
        self.rank[a] < self.rank[b]
    }

    /// Successor of `state` when `winner` buys the current item at `price`.
    /// No validation; see `resolve_round`.
    pub fn advance(&self, state: &GameState, winner: PlayerId, price: Money) -> GameState {
        let item = state.round();
        let mut next = state.clone();
        next.winners.push(winner);
        next.payments[winner] += price;
        next.holdings[winner] = next.holdings[winner].with(item);
        if let Some(r) = &mut next.remaining {
            r[winner] -= price;
        }
        self.canonicalize(&mut next);
        next
    }

    /// Value gain for `player` from winning the current item in `state`.
    pub fn marginal_now(&self, state: &GameState, player: PlayerId) -> Money {
        self.valuations[player].marginal_unchecked(state.holdings[player], state.round())
    }

    /// Memoization key: sold-item winners plus canonical remaining budgets.
    ///
    /// Wins by additive players are recorded as [`StateKey::ADDITIVE`]: their
    /// marginal values never depend on holdings, so the continuation game is
    /// the same whichever of them won.
    pub fn state_key(&self, state: &GameState) -> StateKey {
        StateKey {
            winners: state.winners.iter().map(|&w| self.key_winner(w)).collect(),
            remaining: state.remaining.clone().unwrap_or_default(),
        }
    }

    pub fn key_winner(&self, w: PlayerId) -> u8 {
        match self.valuations[w] {
            Valuation::Additive { .. } => StateKey::ADDITIVE,
            _ => w as u8,
        }
    }

    pub fn describe_state(&self, state: &GameState) -> String {
        let sold: Vec<String> = state
            .winners
            .iter()
            .enumerate()
            .map(|(j, &w)| format!("{}:{}", self.items[j], self.players[w]))
            .collect();
        let mut out = format!("round {} [{}]", state.round(), sold.join(", "));
        if let Some(r) = &state.remaining {
            let rem: Vec<String> = r.iter().map(|x| x.to_string()).collect();
            out.push_str(&format!(" budgets [{}]", rem.join(", ")));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GameState {
    /// Winner of each item sold so far; its length is the round index.
    pub winners: Vec<PlayerId>,
    pub payments: Vec<Money>,
    pub holdings: Vec<ItemSet>,
    /// Remaining budgets in canonical form (see `Instance::canonical_budget`).
    pub remaining: Option<Vec<Money>>,
}

impl GameState {
    pub fn round(&self) -> usize {
        self.winners.len()
    }

    pub fn allocation(&self) -> Allocation {
        self.winners.iter().map(|&w| Some(w)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateKey {
    pub winners: Vec<u8>,
    pub remaining: Vec<Money>,
}

impl StateKey {
    pub const ADDITIVE: u8 = u8::MAX;
}

/// Quasi-linear utility, or `-∞` once payments exceed an active budget.
pub fn utility(inst: &Instance, player: PlayerId, won: ItemSet, paid: Money) -> Result<Utility> {
    if paid.is_negative() {
        return Err(Error::domain("payments are non-negative"));
    }
    if let Some(b) = &inst.budgets {
        if paid > b[player] {
            return Ok(Utility::NegInfinity);
        }
    }
    Ok(Utility::Finite(inst.valuations[player].value(won)? - paid))
}

/// Runs one first-price round.
pub fn resolve_round(
    inst: &Instance,
    state: &GameState,
    bids: &[Money],
) -> Result<(PlayerId, Money, GameState)> {
    if state.round() >= inst.num_items() {
        return Err(Error::domain("all items are already sold"));
    }
    if bids.len() != inst.num_players() {
        return Err(Error::domain(format!(
            "{} bids for {} players",
            bids.len(),
            inst.num_players()
        )));
    }
    for (i, &b) in bids.iter().enumerate() {
        if inst.grid_index(b).is_none() {
            return Err(Error::domain(format!("bid {b} of {} is off the grid", inst.players[i])));
        }
        if let Some(r) = &state.remaining {
            if b > r[i] {
                return Err(Error::domain(format!(
                    "bid {b} of {} exceeds remaining budget {}",
                    inst.players[i], r[i]
                )));
            }
        }
    }
    let winner = inst.winner_of(bids);
    let price = bids[winner];
    Ok((winner, price, inst.advance(state, winner, price)))
}

/// Per-player bundles of an allocation.
pub fn bundles(inst: &Instance, allocation: &[Option<PlayerId>]) -> Result<Vec<ItemSet>> {
    let mut out = vec![ItemSet::EMPTY; inst.num_players()];
    for (j, w) in allocation.iter().enumerate() {
        if let Some(w) = *w {
            if w >= inst.num_players() || j >= inst.num_items() {
                return Err(Error::domain("allocation refers to an unknown player or item"));
            }
            out[w] = out[w].with(j);
        }
    }
    Ok(out)
}

fn check_disjoint(inst: &Instance, sets: &[ItemSet]) -> Result<()> {
    if sets.len() != inst.num_players() {
        return Err(Error::domain("one bundle per player expected"));
    }
    let mut seen = ItemSet::EMPTY;
    for s in sets {
        if !seen.intersection(*s).is_empty() {
            return Err(Error::domain(format!("items {:?} assigned twice", seen.intersection(*s))));
        }
        seen = seen.union(*s);
    }
    Ok(())
}

/// Σ_i v_i(x_i). Payments play no role.
pub fn welfare(inst: &Instance, bundles: &[ItemSet]) -> Result<Money> {
    check_disjoint(inst, bundles)?;
    bundles.iter().enumerate().map(|(i, s)| inst.valuations[i].value(*s)).sum()
}

/// Σ_i min(v_i(x_i), B_i).
pub fn effective_welfare(inst: &Instance, bundles: &[ItemSet]) -> Result<Money> {
    let budgets = inst
        .budgets
        .as_ref()
        .ok_or_else(|| Error::domain("effective welfare needs payment budgets"))?;
    check_disjoint(inst, bundles)?;
    bundles
        .iter()
        .enumerate()
        .map(|(i, s)| Ok(inst.valuations[i].value(*s)?.min(budgets[i])))
        .sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimalAllocation {
    pub bundles: Vec<ItemSet>,
    pub welfare: Money,
}

/// Welfare-maximizing allocation. Unit-demand instances use a matching;
/// otherwise a subset dynamic program, then brute force.
pub fn optimal_welfare(inst: &Instance) -> Result<OptimalAllocation> {
    if inst.valuations.iter().all(Valuation::is_unit_demand) {
        return optimal_by_matching(inst);
    }
    if inst.num_items() <= SUBSET_DP_ITEMS {
        return Ok(subset_dp(inst, |i, s| inst.valuations[i].value_unchecked(s)));
    }
    let count = (inst.num_players() as f64).powi(inst.num_items() as i32);
    if count <= BRUTE_FORCE_LIMIT {
        return brute_force_optimal_welfare(inst);
    }
    Err(Error::capacity(format!(
        "optimal welfare over {} items and {} players",
        inst.num_items(),
        inst.num_players()
    )))
}

/// Maximum of Σ_i min(v_i(x_i), B_i) over allocations.
pub fn optimal_effective_welfare(inst: &Instance) -> Result<OptimalAllocation> {
    let budgets = inst
        .budgets
        .as_ref()
        .ok_or_else(|| Error::domain("effective welfare needs payment budgets"))?;
    if inst.num_items() > SUBSET_DP_ITEMS {
        return Err(Error::capacity(format!("effective welfare over {} items", inst.num_items())));
    }
    Ok(subset_dp(inst, |i, s| inst.valuations[i].value_unchecked(s).min(budgets[i])))
}

fn optimal_by_matching(inst: &Instance) -> Result<OptimalAllocation> {
    let weights = crate::vcg::unit_demand_weights(inst)?;
    let matching = crate::vcg::max_weight_matching(&weights);
    let mut bundles = vec![ItemSet::EMPTY; inst.num_players()];
    for (i, item) in matching.iter().enumerate() {
        if let Some(j) = item {
            bundles[i] = ItemSet::singleton(*j);
        }
    }
    let welfare = welfare(inst, &bundles)?;
    Ok(OptimalAllocation { bundles, welfare })
}

fn subset_dp(inst: &Instance, value: impl Fn(PlayerId, ItemSet) -> Money) -> OptimalAllocation {
    let n = inst.num_players();
    let full = ItemSet::full(inst.num_items());
    let size = 1usize << inst.num_items();
    // best[i][mask]: best welfare of players < i using items within mask
    let mut best = vec![vec![Money::ZERO; size]; n + 1];
    let mut choice = vec![vec![ItemSet::EMPTY; size]; n + 1];
    for i in 0..n {
        let vals: Vec<Money> = (0..size).map(|s| value(i, ItemSet(s as u64))).collect();
        for mask in 0..size {
            let mut top = best[i][mask];
            let mut pick = ItemSet::EMPTY;
            for sub in ItemSet(mask as u64).subsets().skip(1) {
                let w = best[i][mask & !(sub.0 as usize)] + vals[sub.0 as usize];
                if w > top {
                    top = w;
                    pick = sub;
                }
            }
            best[i + 1][mask] = top;
            choice[i + 1][mask] = pick;
        }
    }
    let mut bundles = vec![ItemSet::EMPTY; n];
    let mut mask = full;
    for i in (0..n).rev() {
        let pick = choice[i + 1][mask.0 as usize];
        bundles[i] = pick;
        mask = mask.minus(pick);
    }
    OptimalAllocation { bundles, welfare: best[n][full.0 as usize] }
}

/// Exhaustive search over all n^m item assignments; the lexicographically
/// smallest optimal assignment (by winner index per item) is returned.
pub fn brute_force_optimal_welfare(inst: &Instance) -> Result<OptimalAllocation> {
    let n = inst.num_players();
    let m = inst.num_items();
    if (n as f64).powi(m as i32) > BRUTE_FORCE_LIMIT {
        return Err(Error::capacity(format!("brute force over {n}^{m} assignments")));
    }
    let mut assign = vec![0usize; m];
    let mut best: Option<OptimalAllocation> = None;
    loop {
        let mut bundles = vec![ItemSet::EMPTY; n];
        for (j, &w) in assign.iter().enumerate() {
            bundles[w] = bundles[w].with(j);
        }
        let w: Money = bundles
            .iter()
            .enumerate()
            .map(|(i, s)| inst.valuations[i].value_unchecked(*s))
            .sum();
        if best.as_ref().is_none_or(|b| w > b.welfare) {
            best = Some(OptimalAllocation { bundles, welfare: w });
        }
        // odometer with the last item fastest keeps lexicographic order
        let mut pos = m;
        loop {
            if pos == 0 {
                return Ok(best.expect("at least one assignment"));
            }
            pos -= 1;
            assign[pos] += 1;
            if assign[pos] < n {
                break;
            }
            assign[pos] = 0;
        }
    }
}

/// Optimal over equilibrium welfare as an exact ratio.
pub fn poa(opt_welfare: Money, eq_welfare: Money) -> WelfareRatio {
    WelfareRatio::of(opt_welfare, eq_welfare)
}

/// Terminal result of a play.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub allocation: Vec<PlayerId>,
    pub prices: Vec<Money>,
    pub payments: Vec<Money>,
    pub utilities: Vec<Utility>,
    pub welfare: Money,
}

impl Outcome {
    pub fn from_terminal(inst: &Instance, state: &GameState, prices: Vec<Money>) -> Result<Outcome> {
        let bundles = &state.holdings;
        let utilities = (0..inst.num_players())
            .map(|i| utility(inst, i, bundles[i], state.payments[i]))
            .collect::<Result<Vec<_>>>()?;
        Ok(Outcome {
            allocation: state.winners.clone(),
            prices,
            payments: state.payments.clone(),
            utilities,
            welfare: welfare(inst, bundles)?,
        })
    }

    pub fn bundles(&self, n: usize) -> Vec<ItemSet> {
        let mut out = vec![ItemSet::EMPTY; n];
        for (j, &w) in self.allocation.iter().enumerate() {
            out[w] = out[w].with(j);
        }
        out
    }

    pub fn to_json(&self, inst: &Instance) -> serde_json::Value {
        let allocation: BTreeMap<&str, &str> = self
            .allocation
            .iter()
            .enumerate()
            .map(|(j, &w)| (inst.items[j].as_str(), inst.players[w].as_str()))
            .collect();
        let per_player = |vals: Vec<String>| -> BTreeMap<&str, String> {
            inst.players.iter().map(String::as_str).zip(vals).collect()
        };
        serde_json::json!({
            "allocation": allocation,
            "prices": inst.items.iter().zip(&self.prices).map(|(i, p)| (i.clone(), p.to_string())).collect::<BTreeMap<_, _>>(),
            "payments": per_player(self.payments.iter().map(|p| p.to_string()).collect()),
            "utilities": per_player(self.utilities.iter().map(|u| u.to_string()).collect()),
            "welfare": self.welfare.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::money::money;
    use proptest::prelude::*;

    fn two_item_instance(budgets: Option<Vec<Money>>) -> Instance {
        Instance::new(
            vec!["A".into(), "B".into()],
            vec!["x".into(), "y".into(), "z".into()],
            vec![
                Valuation::Additive { values: vec![money("1"), money("2")] },
                Valuation::UnitDemand { values: vec![money("3"), money("1")] },
                Valuation::Additive { values: vec![Money::ZERO, Money::ZERO] },
            ],
            budgets,
            money("0.5"),
            vec![],
            None,
        )
        .unwrap()
    }

    #[test]
    fn grid_contains_steps_and_critical_values() {
        let inst = two_item_instance(None);
        let g = &inst.bid_grid;
        assert_eq!(g[0], Money::ZERO);
        assert!(g.windows(2).all(|w| w[0] < w[1] && w[1] - w[0] <= inst.grid_step));
        for v in ["1", "2", "3", "3.5", "0.5"] {
            assert!(inst.grid_index(money(v)).is_some(), "{v} missing");
        }
        assert_eq!(inst.bid_plus(money("1")), Some(money("1.5")));
    }

    #[test]
    fn ties_follow_priority() {
        let inst = two_item_instance(None);
        let s = inst.initial_state();
        let (w, p, next) = resolve_round(&inst, &s, &[Money::ZERO; 3]).unwrap();
        assert_eq!((w, p), (0, Money::ZERO));
        assert_eq!(next.round(), 1);
        let (w, p, _) = resolve_round(&inst, &s, &[money("1"), money("1.5"), money("0.5")]).unwrap();
        assert_eq!((w, p), (1, money("1.5")));
    }

    #[test]
    fn resolve_round_rejects_bad_bids() {
        let inst = two_item_instance(Some(vec![money("1"), money("5"), money("5")]));
        let s = inst.initial_state();
        assert!(resolve_round(&inst, &s, &[money("0.3"), Money::ZERO, Money::ZERO]).is_err());
        assert!(resolve_round(&inst, &s, &[money("1.5"), Money::ZERO, Money::ZERO]).is_err());
        assert!(resolve_round(&inst, &s, &[money("1"), Money::ZERO, Money::ZERO]).is_ok());
    }

    #[test]
    fn utility_with_and_without_budgets() {
        let inst = two_item_instance(None);
        assert_eq!(utility(&inst, 0, ItemSet::EMPTY, Money::ZERO).unwrap(), Utility::Finite(Money::ZERO));
        assert_eq!(
            utility(&inst, 0, ItemSet(0b11), money("2.5")).unwrap(),
            Utility::Finite(money("0.5"))
        );
        let inst = two_item_instance(Some(vec![money("2"), money("5"), money("5")]));
        assert_eq!(utility(&inst, 0, ItemSet(0b11), money("2.5")).unwrap(), Utility::NegInfinity);
    }

    #[test]
    fn welfare_and_effective_welfare() {
        let inst = two_item_instance(Some(vec![money("2.5"), money("10"), money("10")]));
        let b = vec![ItemSet(0b11), ItemSet::EMPTY, ItemSet::EMPTY];
        assert_eq!(welfare(&inst, &b).unwrap(), money("3"));
        assert_eq!(effective_welfare(&inst, &b).unwrap(), money("2.5"));
        let overlap = vec![ItemSet(0b01), ItemSet(0b01), ItemSet::EMPTY];
        assert!(welfare(&inst, &overlap).is_err());
        assert!(effective_welfare(&two_item_instance(None), &b).is_err());
        assert_eq!(welfare(&inst, &[ItemSet::EMPTY; 3]).unwrap(), Money::ZERO);
    }

    #[test]
    fn optimal_welfare_small() {
        let inst = two_item_instance(None);
        let opt = optimal_welfare(&inst).unwrap();
        // y takes A (3), x takes B (2)
        assert_eq!(opt.welfare, money("5"));
        assert_eq!(brute_force_optimal_welfare(&inst).unwrap().welfare, money("5"));
        let single = Instance::new(
            vec!["A".into()],
            vec!["x".into()],
            vec![Valuation::Additive { values: vec![money("4")] }],
            None,
            money("1"),
            vec![],
            None,
        )
        .unwrap();
        assert_eq!(optimal_welfare(&single).unwrap().welfare, money("4"));
    }

    #[test]
    fn poa_values() {
        assert_eq!(poa(money("3"), money("2")).to_string(), "3/2");
        assert_eq!(poa(money("2"), money("2")).to_string(), "1/1");
        assert_eq!(poa(money("2"), Money::ZERO), WelfareRatio::Infinite);
    }

    #[test]
    fn reorder_keeps_valuations_attached_to_names() {
        let inst = two_item_instance(None);
        let r = inst.reordered(&[1, 0]).unwrap();
        assert_eq!(r.items, vec!["B".to_string(), "A".to_string()]);
        assert_eq!(r.valuations[0].value(ItemSet(0b01)).unwrap(), money("2"));
        assert!(inst.reordered(&[0, 0]).is_err());
    }

    proptest! {
        #[test]
        fn round_conserves_money(bids in prop::collection::vec(0usize..8, 3)) {
            let inst = two_item_instance(None);
            let s = inst.initial_state();
            let bids: Vec<Money> = bids.iter().map(|&k| inst.bid_grid[k]).collect();
            let (w, p, next) = resolve_round(&inst, &s, &bids).unwrap();
            for i in 0..3 {
                let delta = next.payments[i] - s.payments[i];
                prop_assert_eq!(delta, if i == w { p } else { Money::ZERO });
            }
        }

        #[test]
        fn refining_the_grid_keeps_the_winner(bids in prop::collection::vec(0usize..8, 3)) {
            let inst = two_item_instance(None);
            let mut extra = inst.clone();
            extra.extra_grid_points = vec![money("0.25"), money("1.75")];
            let fine = Instance::new(
                extra.items.clone(), extra.players.clone(), extra.valuations.clone(), None,
                extra.grid_step, extra.extra_grid_points.clone(), None,
            ).unwrap();
            let bids: Vec<Money> = bids.iter().map(|&k| inst.bid_grid[k]).collect();
            let a = resolve_round(&inst, &inst.initial_state(), &bids).unwrap();
            let b = resolve_round(&fine, &fine.initial_state(), &bids).unwrap();
            prop_assert_eq!((a.0, a.1), (b.0, b.1));
        }

        #[test]
        fn budgets_stay_nonnegative(seq in prop::collection::vec((0usize..3, 0usize..30), 2)) {
            let inst = two_item_instance(Some(vec![money("1"), money("2"), money("0.5")]));
            let mut s = inst.initial_state();
            for (w, k) in seq {
                let feasible = inst.feasible_bids(&s, w);
                let price = feasible[k % feasible.len()];
                s = inst.advance(&s, w, price);
                prop_assert!(s.remaining.as_ref().unwrap().iter().all(|r| !r.is_negative()));
            }
        }
    }
}
