//! Backward-induction solver for the discretized sequential auction.
//!
//! Each round is a simultaneous first-price bid game whose payoffs come from
//! the already solved continuation. The stage game is reduced by iterated
//! elimination of weakly dominated bids, its surviving pure equilibria are
//! enumerated, and one is selected by a fixed rule.
//!
//! Bids are handled as grid indices. Against a fixed bid of player `i`, the
//! other players matter only through the highest competing bid `M` and the
//! player `w` placing it (the one winning ties among them), so dominance and
//! equilibrium checks run over such summaries instead of full bid profiles.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::auction::{GameState, Instance, Outcome, PlayerId, StateKey};
use crate::error::{Error, Result};
use crate::money::Money;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionRule {
    /// Highest total stage utility, then lowest price, then tie priority.
    #[default]
    MaxTotalUtility,
    /// Lowest price, then highest total stage utility, then tie priority.
    MinPrice,
}

impl SelectionRule {
    pub fn id(self) -> &'static str {
        match self {
            SelectionRule::MaxTotalUtility => "max-total-utility",
            SelectionRule::MinPrice => "min-price",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub rule: SelectionRule,
    /// Upper bound on memoized states across all rounds.
    pub max_states: usize,
    /// Keep every surviving stage equilibrium along the path.
    pub enumerate: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { rule: SelectionRule::default(), max_states: 2_000_000, enumerate: false }
    }
}

/// Stage payoffs: `payoff(i, w, p)` is player `i`'s utility-to-go when `w`
/// wins the current item at grid level `p`.
#[derive(Clone, Debug)]
enum Payoffs {
    /// Without budgets the continuation ignores the price: `C[i][w]`
    /// includes the item's marginal value on the diagonal.
    Externality(Vec<Vec<Money>>),
    /// `table[w][p][i]` for every price `p` feasible for `w`.
    Table(Vec<Vec<Vec<Money>>>),
}

#[derive(Clone, Debug)]
pub struct StageGame {
    pub state: GameState,
    /// Surviving bids per player as ascending grid indices.
    pub bid_sets: Vec<Vec<usize>>,
    grid: Vec<Money>,
    rank: Vec<usize>,
    payoffs: Payoffs,
}

impl StageGame {
    pub fn num_players(&self) -> usize {
        self.bid_sets.len()
    }

    pub fn payoff(&self, i: PlayerId, w: PlayerId, p: usize) -> Money {
        match &self.payoffs {
            Payoffs::Externality(c) => {
                if i == w {
                    c[i][w] - self.grid[p]
                } else {
                    c[i][w]
                }
            }
            Payoffs::Table(t) => t[w][p][i],
        }
    }

    /// The externality entry `C[i][w]` when payoffs ignore prices.
    pub fn externality(&self, i: PlayerId, w: PlayerId) -> Option<Money> {
        match &self.payoffs {
            Payoffs::Externality(c) => Some(c[i][w]),
            Payoffs::Table(_) => None,
        }
    }

    pub fn bids(&self, i: PlayerId) -> Vec<Money> {
        self.bid_sets[i].iter().map(|&k| self.grid[k]).collect()
    }

    fn beats(&self, a: PlayerId, b: PlayerId) -> bool {
        self.rank[a] < self.rank[b]
    }

    /// Players `w` that can be the top competitor of `i` at level `m`.
    fn top_competitors(&self, i: PlayerId, m: usize, mins: &[usize]) -> Vec<PlayerId> {
        let n = self.num_players();
        (0..n)
            .filter(|&w| w != i && self.bid_sets[w].binary_search(&m).is_ok())
            .filter(|&w| {
                (0..n).all(|j| {
                    j == i || j == w || mins[j] < m || (mins[j] == m && self.beats(w, j))
                })
            })
            .collect()
    }
}

/// Utility-to-go of every player after the current round, by successor.
pub fn build_stage_game(
    inst: &Instance,
    state: &GameState,
    values_next: &HashMap<StateKey, Vec<Money>>,
) -> Result<StageGame> {
    let n = inst.num_players();
    let lookup = |s: &GameState| -> Result<&Vec<Money>> {
        values_next.get(&inst.state_key(s)).ok_or_else(|| {
            Error::Consistency(format!("missing continuation for {}", inst.describe_state(s)))
        })
    };
    let bid_sets: Vec<Vec<usize>> =
        (0..n).map(|i| (0..inst.feasible_bids(state, i).len()).collect()).collect();
    let payoffs = if state.remaining.is_none() {
        let mut c = vec![vec![Money::ZERO; n]; n];
        for w in 0..n {
            let next = inst.advance(state, w, Money::ZERO);
            let v = lookup(&next)?;
            for i in 0..n {
                c[i][w] = v[i];
            }
            c[w][w] += inst.marginal_now(state, w);
        }
        Payoffs::Externality(c)
    } else {
        let mut table = Vec::with_capacity(n);
        for w in 0..n {
            let gain = inst.marginal_now(state, w);
            let mut rows = Vec::with_capacity(bid_sets[w].len());
            for &p in &bid_sets[w] {
                let price = inst.bid_grid[p];
                let mut v = lookup(&inst.advance(state, w, price))?.clone();
                v[w] += gain - price;
                rows.push(v);
            }
            table.push(rows);
        }
        Payoffs::Table(table)
    };
    Ok(StageGame {
        state: state.clone(),
        bid_sets,
        grid: inst.bid_grid.clone(),
        rank: (0..n).map(|i| inst.priority_rank(i)).collect(),
        payoffs,
    })
}

/// Summary statistics of the losing payoff `L(w, M)` of one player at one
/// competing level `M`, split by whether the player wins a tie against `w`.
#[derive(Clone, Copy, Debug, Default)]
struct LevelStats {
    /// Competitors the player beats on ties (a tie at `M` is a win).
    tie_won: Option<(Money, Money)>,
    /// Competitors that beat the player on ties.
    tie_lost: Option<(Money, Money)>,
}

fn widen(acc: &mut Option<(Money, Money)>, x: Money) {
    *acc = Some(match *acc {
        None => (x, x),
        Some((lo, hi)) => (lo.min(x), hi.max(x)),
    });
}

fn merge(acc: &mut Option<(Money, Money)>, other: Option<(Money, Money)>) {
    if let Some((lo, hi)) = other {
        widen(acc, lo);
        widen(acc, hi);
    }
}

/// Bids of player `i` weakly dominated against the current sets of the others.
fn dominated_bids(g: &StageGame, i: PlayerId) -> Vec<bool> {
    let bids = &g.bid_sets[i];
    let k = bids.len();
    let win: Vec<Money> = bids.iter().map(|&b| g.payoff(i, i, b)).collect();
    let mut dominated = vec![false; k];
    if g.num_players() == 1 {
        let best = win.iter().copied().max().unwrap_or(Money::ZERO);
        for (x, d) in win.iter().zip(dominated.iter_mut()) {
            *d = *x < best;
        }
        return dominated;
    }
    let mins: Vec<usize> = g.bid_sets.iter().map(|s| s[0]).collect();
    // competitor levels, ascending, with their losing-payoff statistics
    let mut levels: Vec<usize> = g
        .bid_sets
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .flat_map(|(_, s)| s.iter().copied())
        .collect();
    levels.sort_unstable();
    levels.dedup();
    let mut stats: Vec<(usize, LevelStats)> = Vec::new();
    for &m in &levels {
        let mut st = LevelStats::default();
        for w in g.top_competitors(i, m, &mins) {
            let l = g.payoff(i, w, m);
            if g.beats(i, w) {
                widen(&mut st.tie_won, l);
            } else {
                widen(&mut st.tie_lost, l);
            }
        }
        if st.tie_won.is_some() || st.tie_lost.is_some() {
            stats.push((m, st));
        }
    }
    // exists[j]: some summary has competing level below bids[j], or equal to
    // it with the tie going to i (region where bids[j] wins)
    let first_level = stats.first().map(|(m, st)| (*m, st.tie_won.is_some()));
    let wins_somewhere = |b: usize| match first_level {
        Some((m, tie_won)) => m < b || (m == b && tie_won),
        None => true,
    };
    // position of the first stats entry with level >= b
    let lower = |b: usize| stats.partition_point(|(m, _)| *m < b);
    for a in 0..k {
        let b1 = bids[a];
        let r1 = wins_somewhere(b1);
        // levels where b1 loses, accumulated as b2 moves up
        let mut open: Option<(Money, Money)> = None;
        let mut ptr = lower(b1);
        if ptr < stats.len() && stats[ptr].0 == b1 {
            merge(&mut open, stats[ptr].1.tie_lost);
            ptr += 1;
        }
        for c in (a + 1)..k {
            let b2 = bids[c];
            while ptr < stats.len() && stats[ptr].0 < b2 {
                merge(&mut open, stats[ptr].1.tie_won);
                merge(&mut open, stats[ptr].1.tie_lost);
                ptr += 1;
            }
            if dominated[a] && dominated[c] {
                continue;
            }
            // region where b1 loses but b2 wins
            let mut r2 = open;
            if ptr < stats.len() && stats[ptr].0 == b2 {
                merge(&mut r2, stats[ptr].1.tie_won);
            }
            let (w1, w2) = (win[a], win[c]);
            if !dominated[a] {
                let geq = (!r1 || w2 >= w1) && r2.is_none_or(|(_, hi)| w2 >= hi);
                let strict = (r1 && w2 > w1) || r2.is_some_and(|(lo, _)| w2 > lo);
                if geq && strict {
                    dominated[a] = true;
                }
            }
            if !dominated[c] {
                let geq = (!r1 || w1 >= w2) && r2.is_none_or(|(lo, _)| lo >= w2);
                let strict = (r1 && w1 > w2) || r2.is_some_and(|(_, hi)| hi > w2);
                if geq && strict {
                    dominated[c] = true;
                }
            }
        }
    }
    dominated
}

/// Removes weakly dominated bids until none are left. Each pass visits the
/// players in index order and judges dominance against the sets at the start
/// of the pass, so a bid dominated against the full grid is always removed in
/// the first pass.
pub fn stage_iewds(mut g: StageGame) -> StageGame {
    let n = g.num_players();
    loop {
        let marks: Vec<Vec<bool>> = (0..n).map(|i| dominated_bids(&g, i)).collect();
        if !marks.iter().flatten().any(|d| *d) {
            return g;
        }
        for (set, dominated) in g.bid_sets.iter_mut().zip(&marks) {
            let kept: Vec<usize> =
                set.iter().zip(dominated).filter(|(_, d)| !**d).map(|(b, _)| *b).collect();
            debug_assert!(!kept.is_empty());
            *set = kept;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StageEquilibrium {
    pub bids: Vec<Money>,
    pub winner: PlayerId,
    pub price: Money,
    /// Σ_i of stage payoffs for this outcome.
    pub total_utility: Money,
}

/// Every (winner, price) supported by a pure Nash equilibrium of the reduced
/// stage game, each with one representative bid profile.
pub fn enumerate_stage_equilibria(g: &StageGame) -> Vec<StageEquilibrium> {
    let n = g.num_players();
    let mins: Vec<usize> = g.bid_sets.iter().map(|s| s[0]).collect();
    // best payoff of i from bids strictly above a level, via suffix maxima
    let suffix_best: Vec<Vec<Money>> = (0..n)
        .map(|i| {
            let s = &g.bid_sets[i];
            let mut out = vec![Money::ZERO; s.len() + 1];
            let mut best: Option<Money> = None;
            for k in (0..s.len()).rev() {
                let x = g.payoff(i, i, s[k]);
                best = Some(best.map_or(x, |b: Money| b.max(x)));
                out[k] = best.expect("set above");
            }
            out
        })
        .collect();
    let best_above = |i: PlayerId, level: usize, include_equal: bool| -> Option<Money> {
        let s = &g.bid_sets[i];
        let k = if include_equal {
            s.partition_point(|b| *b < level)
        } else {
            s.partition_point(|b| *b <= level)
        };
        (k < s.len()).then(|| suffix_best[i][k])
    };
    let has_below = |i: PlayerId, level: usize, include_equal: bool| -> bool {
        let lo = g.bid_sets[i][0];
        lo < level || (include_equal && lo == level)
    };
    let mut out = Vec::new();
    for w in 0..n {
        for &p in &g.bid_sets[w] {
            // everyone else must be able to stay at or below p, losing ties to w
            let feasible = (0..n).all(|j| j == w || mins[j] < p || (mins[j] == p && g.beats(w, j)));
            if !feasible {
                continue;
            }
            let losers_ok = (0..n).filter(|&j| j != w).all(|j| {
                let current = g.payoff(j, w, p);
                best_above(j, p, g.beats(j, w)).is_none_or(|x| x <= current)
            });
            if !losers_ok {
                continue;
            }
            let current = g.payoff(w, w, p);
            let support = if n == 1 {
                (suffix_best[w][0] <= current).then_some(None)
            } else {
                winner_support(g, w, p, current, &mins, &best_above, &has_below)
            };
            let Some(second) = support else { continue };
            let mut bids: Vec<Money> = (0..n).map(|j| g.grid[mins[j]]).collect();
            bids[w] = g.grid[p];
            if let Some((w2, m2)) = second {
                bids[w2] = g.grid[m2];
            }
            let total_utility = (0..n).map(|i| g.payoff(i, w, p)).sum();
            out.push(StageEquilibrium { bids, winner: w, price: g.grid[p], total_utility });
        }
    }
    out
}

/// A second-highest bidder and level making winning at `p` a best response
/// for `w`, preferring the highest such level.
fn winner_support(
    g: &StageGame,
    w: PlayerId,
    p: usize,
    current: Money,
    mins: &[usize],
    best_above: &dyn Fn(PlayerId, usize, bool) -> Option<Money>,
    has_below: &dyn Fn(PlayerId, usize, bool) -> bool,
) -> Option<Option<(PlayerId, usize)>> {
    let n = g.num_players();
    let mut levels: Vec<usize> = (0..n)
        .filter(|&j| j != w)
        .flat_map(|j| g.bid_sets[j].iter().copied().filter(|&b| b <= p))
        .collect();
    levels.sort_unstable();
    levels.dedup();
    for &m2 in levels.iter().rev() {
        // cheaper winning bids only get more attractive as m2 drops
        if best_above(w, m2, false).is_some_and(|x| x > current) {
            return None;
        }
        for w2 in g.top_competitors(w, m2, mins) {
            if m2 == p && !g.beats(w, w2) {
                continue;
            }
            let w_wins_tie = g.beats(w, w2);
            if w_wins_tie && g.bid_sets[w].binary_search(&m2).is_ok() && g.payoff(w, w, m2) > current
            {
                continue;
            }
            if has_below(w, m2, !w_wins_tie) && g.payoff(w, w2, m2) > current {
                continue;
            }
            return Some(Some((w2, m2)));
        }
    }
    None
}

/// Picks one candidate by `rule`; `None` when there are no candidates.
pub fn select_equilibrium(
    inst: &Instance,
    cands: &[StageEquilibrium],
    rule: SelectionRule,
) -> Option<StageEquilibrium> {
    cands
        .iter()
        .min_by(|a, b| {
            let by_priority = inst.priority_rank(a.winner).cmp(&inst.priority_rank(b.winner));
            match rule {
                SelectionRule::MaxTotalUtility => b
                    .total_utility
                    .cmp(&a.total_utility)
                    .then(a.price.cmp(&b.price))
                    .then(by_priority),
                SelectionRule::MinPrice => a
                    .price
                    .cmp(&b.price)
                    .then(b.total_utility.cmp(&a.total_utility))
                    .then(by_priority),
            }
        })
        .cloned()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StagePlay {
    pub bids: Vec<Money>,
    pub winner: PlayerId,
    pub price: Money,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathStep {
    pub item: usize,
    pub winner: PlayerId,
    pub price: Money,
    pub bids: Vec<Money>,
    pub equilibria: usize,
    /// All surviving (winner, price) pairs, in enumeration mode.
    pub candidates: Option<Vec<(PlayerId, Money)>>,
}

#[derive(Clone, Debug)]
pub struct SolvedGame {
    pub rule: SelectionRule,
    pub policy: HashMap<StateKey, StagePlay>,
    pub values: HashMap<StateKey, Vec<Money>>,
    pub path: Vec<PathStep>,
    pub outcome: Outcome,
    pub eq_welfare: Money,
    pub states: usize,
}

impl SolvedGame {
    pub fn root_values(&self, inst: &Instance) -> &[Money] {
        &self.values[&inst.state_key(&inst.initial_state())]
    }
}

/// Every state reachable under some bid profile, by round.
pub fn reachable_layers(inst: &Instance, max_states: usize) -> Result<Vec<Vec<GameState>>> {
    let n = inst.num_players();
    let mut layers = vec![vec![inst.initial_state()]];
    let mut total = 1usize;
    for _ in 0..inst.num_items() {
        let mut seen: HashMap<StateKey, GameState> = HashMap::new();
        for s in layers.last().expect("nonempty") {
            for w in 0..n {
                let prices: &[Money] = if s.remaining.is_some() {
                    inst.feasible_bids(s, w)
                } else {
                    &[Money::ZERO]
                };
                for &p in prices {
                    let next = inst.advance(s, w, p);
                    seen.entry(inst.state_key(&next)).or_insert(next);
                }
            }
            if total + seen.len() > max_states {
                return Err(Error::capacity(format!(
                    "more than {max_states} reachable states"
                )));
            }
        }
        total += seen.len();
        let mut layer: Vec<(StateKey, GameState)> = seen.into_iter().collect();
        layer.sort_by(|a, b| a.0.cmp(&b.0));
        layers.push(layer.into_iter().map(|(_, s)| s).collect());
    }
    Ok(layers)
}

pub fn solve(inst: &Instance, cfg: &SolverConfig) -> Result<SolvedGame> {
    let layers = reachable_layers(inst, cfg.max_states)?;
    let m = inst.num_items();
    let n = inst.num_players();
    let mut values: HashMap<StateKey, Vec<Money>> = HashMap::new();
    let mut policy: HashMap<StateKey, StagePlay> = HashMap::new();
    let mut candidate_log: HashMap<StateKey, Vec<(PlayerId, Money)>> = HashMap::new();
    let mut counts: HashMap<StateKey, usize> = HashMap::new();
    for s in &layers[m] {
        values.insert(inst.state_key(s), vec![Money::ZERO; n]);
    }
    for t in (0..m).rev() {
        let next_values = &values;
        let solved: Vec<Result<(StateKey, StagePlay, Vec<Money>, Vec<(PlayerId, Money)>)>> = layers[t]
            .par_iter()
            .map(|s| {
                let g = stage_iewds(build_stage_game(inst, s, next_values)?);
                let cands = enumerate_stage_equilibria(&g);
                let pick = select_equilibrium(inst, &cands, cfg.rule).ok_or_else(|| {
                    Error::NoPureStageEquilibrium { state: inst.describe_state(s) }
                })?;
                let p = inst.grid_index(pick.price).expect("on grid");
                let v: Vec<Money> = (0..n).map(|i| g.payoff(i, pick.winner, p)).collect();
                let listed = cands.iter().map(|c| (c.winner, c.price)).collect();
                Ok((
                    inst.state_key(s),
                    StagePlay { bids: pick.bids, winner: pick.winner, price: pick.price },
                    v,
                    listed,
                ))
            })
            .collect();
        for r in solved {
            let (key, play, v, listed) = r?;
            counts.insert(key.clone(), listed.len());
            if cfg.enumerate {
                candidate_log.insert(key.clone(), listed);
            }
            policy.insert(key.clone(), play);
            values.insert(key, v);
        }
    }
    let mut state = inst.initial_state();
    let mut path = Vec::with_capacity(m);
    let mut prices = Vec::with_capacity(m);
    for item in 0..m {
        let key = inst.state_key(&state);
        let play = &policy[&key];
        path.push(PathStep {
            item,
            winner: play.winner,
            price: play.price,
            bids: play.bids.clone(),
            equilibria: counts[&key],
            candidates: candidate_log.get(&key).cloned(),
        });
        prices.push(play.price);
        state = inst.advance(&state, play.winner, play.price);
    }
    let outcome = Outcome::from_terminal(inst, &state, prices)?;
    let states = values.len();
    Ok(SolvedGame {
        rule: cfg.rule,
        policy,
        values,
        path,
        eq_welfare: outcome.welfare,
        outcome,
        states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::money::money;
    use crate::valuation::Valuation;
    use proptest::prelude::*;

    fn single_item(values: &[&str], step: &str) -> Instance {
        Instance::new(
            vec!["A".into()],
            (0..values.len()).map(|i| format!("p{i}")).collect(),
            values.iter().map(|v| Valuation::Additive { values: vec![money(v)] }).collect(),
            None,
            money(step),
            vec![],
            None,
        )
        .unwrap()
    }

    fn stage_at_root(inst: &Instance) -> StageGame {
        let mut terminal = HashMap::new();
        for w in 0..inst.num_players() {
            let s = inst.advance(&inst.initial_state(), w, Money::ZERO);
            terminal.insert(inst.state_key(&s), vec![Money::ZERO; inst.num_players()]);
        }
        build_stage_game(inst, &inst.initial_state(), &terminal).unwrap()
    }

    /// Nash check of a full bid profile by brute force over the grid.
    fn is_nash(g: &StageGame, inst: &Instance, bids: &[usize]) -> bool {
        let w = inst.winner_of(&bids.iter().map(|&b| g.grid[b]).collect::<Vec<_>>());
        (0..bids.len()).all(|i| {
            let current = g.payoff(i, w, bids[w]);
            g.bid_sets[i].iter().all(|&b| {
                let mut dev = bids.to_vec();
                dev[i] = b;
                let dw = inst.winner_of(&dev.iter().map(|&b| g.grid[b]).collect::<Vec<_>>());
                g.payoff(i, dw, dev[dw]) <= current
            })
        })
    }

    #[test]
    fn two_bidders_five_and_three() {
        let inst = single_item(&["5", "3"], "1");
        let g = stage_iewds(stage_at_root(&inst));
        // bids above value are dominated for both; 3 is dominated for the low bidder
        assert!(g.bids(0).iter().all(|b| *b <= money("5")));
        assert!(g.bids(1).iter().all(|b| *b <= money("2")));
        let eq = enumerate_stage_equilibria(&g);
        assert!(!eq.is_empty());
        for e in &eq {
            assert_eq!(e.winner, 0);
            assert!(e.price <= money("5"));
        }
        let solved = solve(&inst, &SolverConfig::default()).unwrap();
        assert_eq!(solved.outcome.allocation, vec![0]);
        let price = solved.outcome.prices[0];
        assert!((price - money("3")).abs() <= inst.grid_step, "price {price}");
    }

    #[test]
    fn one_active_bidder_wins_for_free() {
        let mut inst = single_item(&["0", "4", "0"], "1");
        let solved = solve(&inst, &SolverConfig::default()).unwrap();
        assert_eq!(solved.outcome.allocation, vec![1]);
        // a zero bid loses the tie to p0, so the cheapest win is one level up
        assert_eq!(solved.outcome.prices, vec![inst.bid_grid[1]]);
        inst = Instance::new(
            inst.items.clone(),
            inst.players.clone(),
            inst.valuations.clone(),
            None,
            inst.grid_step,
            vec![],
            Some(vec![1, 0, 2]),
        )
        .unwrap();
        let solved = solve(&inst, &SolverConfig::default()).unwrap();
        assert_eq!(solved.outcome.allocation, vec![1]);
        assert_eq!(solved.outcome.prices, vec![Money::ZERO]);
    }

    #[test]
    fn indifferent_player_keeps_zero() {
        let inst = single_item(&["0", "0"], "1");
        let g = stage_iewds(stage_at_root(&inst));
        assert_eq!(g.bids(0), vec![Money::ZERO]);
        assert_eq!(g.bids(1), vec![Money::ZERO]);
    }

    #[test]
    fn selection_prefers_total_utility_then_price_then_priority() {
        let inst = single_item(&["1", "1"], "1");
        let mk = |w, p: &str, t: &str| StageEquilibrium {
            bids: vec![],
            winner: w,
            price: money(p),
            total_utility: money(t),
        };
        let c = vec![mk(1, "0", "1"), mk(0, "0", "1"), mk(0, "1", "2")];
        assert_eq!(select_equilibrium(&inst, &c, SelectionRule::MaxTotalUtility).unwrap(), c[2]);
        assert_eq!(select_equilibrium(&inst, &c, SelectionRule::MinPrice).unwrap(), c[1]);
        assert_eq!(select_equilibrium(&inst, &c[..1], SelectionRule::MinPrice).unwrap(), c[0]);
        assert!(select_equilibrium(&inst, &[], SelectionRule::MinPrice).is_none());
    }

    fn random_instance() -> impl Strategy<Value = Instance> {
        (1usize..=3, 1usize..=3, 1i64..=4).prop_flat_map(|(n, m, step_quarters)| {
            let val = (0usize..3, prop::collection::vec(0i64..=12, m)).prop_map(move |(kind, vals)| {
                let values: Vec<Money> = vals.iter().map(|v| Money::from_nanos(v * 250_000_000)).collect();
                match kind {
                    0 => Valuation::Additive { values },
                    1 => Valuation::UnitDemand { values },
                    _ => Valuation::BudgetAdditive {
                        cap: values.iter().copied().max().unwrap_or(Money::ZERO),
                        values,
                    },
                }
            });
            prop::collection::vec(val, n).prop_map(move |vals| {
                Instance::new(
                    (0..m).map(|j| format!("I{j}")).collect(),
                    (0..n).map(|i| format!("p{i}")).collect(),
                    vals,
                    None,
                    Money::from_nanos(step_quarters * 250_000_000),
                    vec![],
                    None,
                )
                .unwrap()
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(60))]

        #[test]
        fn equilibria_are_nash_against_surviving_bids(inst in random_instance()) {
            let g = stage_iewds(stage_at_root(&inst));
            for e in enumerate_stage_equilibria(&g) {
                let idx: Vec<usize> = e.bids.iter().map(|b| inst.grid_index(*b).unwrap()).collect();
                prop_assert!(is_nash(&g, &inst, &idx));
                prop_assert_eq!(inst.winner_of(&e.bids), e.winner);
            }
        }

        #[test]
        fn bellman_consistency(inst in random_instance()) {
            let solved = match solve(&inst, &SolverConfig::default()) {
                Ok(s) => s,
                Err(Error::NoPureStageEquilibrium { .. }) => return Ok(()),
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            };
            let layers = reachable_layers(&inst, 1_000_000).unwrap();
            for layer in &layers[..inst.num_items()] {
                for s in layer {
                    let key = inst.state_key(s);
                    let play = &solved.policy[&key];
                    let next = inst.advance(s, play.winner, play.price);
                    let after = &solved.values[&inst.state_key(&next)];
                    for i in 0..inst.num_players() {
                        let mut stage = Money::ZERO;
                        if i == play.winner {
                            stage = inst.marginal_now(s, i) - play.price;
                        }
                        prop_assert_eq!(solved.values[&key][i], stage + after[i]);
                    }
                    if s.round() + 1 == inst.num_items() {
                        for i in 0..inst.num_players() {
                            prop_assert!(play.bids[i] <= inst.marginal_now(s, i));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn brute_force_nash_matches_enumeration() {
        // exhaustive check on a tiny two-player stage: every pure Nash profile
        // of the reduced game maps to an enumerated (winner, price)
        let inst = single_item(&["3", "2"], "1");
        let g = stage_iewds(stage_at_root(&inst));
        let found: Vec<(usize, Money)> =
            enumerate_stage_equilibria(&g).iter().map(|e| (e.winner, e.price)).collect();
        for &b0 in &g.bid_sets[0] {
            for &b1 in &g.bid_sets[1] {
                if is_nash(&g, &inst, &[b0, b1]) {
                    let w = inst.winner_of(&[g.grid[b0], g.grid[b1]]);
                    assert!(found.contains(&(w, g.grid[[b0, b1][w]])));
                }
            }
        }
    }
}
