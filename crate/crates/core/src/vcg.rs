//! Welfare-optimal matchings, VCG outcomes and augmenting paths for
//! unit-demand bidders.

use rayon::prelude::*;
use serde::Serialize;

use crate::auction::{Instance, ItemId, PlayerId};
use crate::error::{Error, Result};
use crate::money::Money;
use crate::valuation::ItemSet;

/// Weight table indexed `[player][item]`.
pub type Weights = Vec<Vec<Money>>;

/// Item assigned to each player.
pub type Matching = Vec<Option<ItemId>>;

/// Singleton values `v_i({j})`; fails unless every valuation is unit-demand.
pub fn unit_demand_weights(inst: &Instance) -> Result<Weights> {
    inst.valuations
        .iter()
        .enumerate()
        .map(|(i, v)| {
            if !v.is_unit_demand() {
                return Err(Error::domain(format!(
                    "valuation of {} is not unit-demand",
                    inst.players[i]
                )));
            }
            Ok((0..inst.num_items())
                .map(|j| v.value_unchecked(ItemSet::singleton(j)))
                .collect())
        })
        .collect()
}

/// Maximum-weight matching. Among optimal matchings the lexicographically
/// smallest is returned, comparing players in order and preferring lower item
/// indices over staying unmatched. Zero-weight edges are never used.
pub fn max_weight_matching(weights: &Weights) -> Matching {
    let w: Vec<Vec<i64>> = weights
        .iter()
        .map(|row| row.iter().map(|x| x.nanos()).collect())
        .collect();
    lex_optimal(&w)
}

pub fn matching_weight(weights: &Weights, matching: &Matching) -> Money {
    matching
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| weights[i][j]))
        .sum()
}

fn lex_optimal(w: &[Vec<i64>]) -> Matching {
    let n = w.len();
    let m = w.first().map_or(0, Vec::len);
    let target = constrained_optimum(w, &[]);
    let mut fixed: Vec<Option<ItemId>> = Vec::with_capacity(n);
    for i in 0..n {
        let taken: Vec<ItemId> = fixed.iter().flatten().copied().collect();
        let mut chosen = None;
        for j in (0..m).filter(|&j| w[i][j] > 0 && !taken.contains(&j)) {
            fixed.push(Some(j));
            if constrained_optimum(w, &fixed) == target {
                chosen = Some(j);
                fixed.pop();
                break;
            }
            fixed.pop();
        }
        fixed.push(chosen);
    }
    fixed
}

/// Best total weight with the first `fixed.len()` players pinned.
fn constrained_optimum(w: &[Vec<i64>], fixed: &[Option<ItemId>]) -> i64 {
    let n = w.len();
    let m = w.first().map_or(0, Vec::len);
    let used: Vec<ItemId> = fixed.iter().flatten().copied().collect();
    let base: i64 = fixed
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| w[i][j]))
        .sum();
    let cols: Vec<ItemId> = (0..m).filter(|j| !used.contains(j)).collect();
    let sub: Vec<Vec<i64>> = (fixed.len()..n)
        .map(|i| cols.iter().map(|&j| w[i][j].max(0)).collect())
        .collect();
    base + hungarian_max(&sub)
}

/// Optimal assignment value of a non-negative weight matrix (Hungarian
/// method with potentials on the zero-padded square matrix).
fn hungarian_max(w: &[Vec<i64>]) -> i64 {
    let rows = w.len();
    let cols = w.first().map_or(0, Vec::len);
    let size = rows.max(cols);
    if size == 0 {
        return 0;
    }
    let cost = |i: usize, j: usize| -> i64 {
        if i < rows && j < cols {
            -w[i][j]
        } else {
            0
        }
    };
    // 1-based arrays; p[j] = row matched to column j
    let mut u = vec![0i64; size + 1];
    let mut v = vec![0i64; size + 1];
    let mut p = vec![0usize; size + 1];
    let mut way = vec![0usize; size + 1];
    for i in 1..=size {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![i64::MAX; size + 1];
        let mut used = vec![false; size + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = i64::MAX;
            let mut j1 = 0;
            for j in 1..=size {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=size {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=size).map(|j| -cost(p[j] - 1, j - 1)).sum()
}

/// Exhaustive optimum over all matchings; the oracle for tests.
pub fn brute_force_matching_weight(weights: &Weights) -> Money {
    fn go(w: &Weights, i: usize, used: u64) -> Money {
        if i == w.len() {
            return Money::ZERO;
        }
        let mut best = go(w, i + 1, used);
        for j in 0..w[i].len() {
            if used & (1 << j) == 0 && w[i][j] > Money::ZERO {
                best = best.max(w[i][j] + go(w, i + 1, used | (1 << j)));
            }
        }
        best
    }
    go(weights, 0, 0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum PriceSetter {
    Player(PlayerId),
    /// Zero-value setter for players whose removal leaves an item unsold.
    Virtual,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PathNode {
    Player(PlayerId),
    Item(ItemId),
    Virtual,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AugPath {
    pub nodes: Vec<PathNode>,
}

impl AugPath {
    pub fn price_setter(&self) -> Option<PriceSetter> {
        match self.nodes.last()? {
            PathNode::Virtual => Some(PriceSetter::Virtual),
            PathNode::Player(k) if self.nodes.len() > 1 => Some(PriceSetter::Player(*k)),
            _ => None,
        }
    }

    pub fn names(&self, inst: &Instance) -> Vec<String> {
        self.nodes
            .iter()
            .map(|n| match n {
                PathNode::Player(i) => inst.players[*i].clone(),
                PathNode::Item(j) => inst.items[*j].clone(),
                PathNode::Virtual => "virtual".to_string(),
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VcgResult {
    pub weights: Weights,
    pub allocation: Matching,
    pub welfare: Money,
    pub prices: Vec<Money>,
    /// `without[i]` is the optimal matching with player `i` excluded.
    pub without: Vec<Matching>,
    pub paths: Vec<Option<AugPath>>,
    pub price_setters: Vec<Option<PriceSetter>>,
}

impl VcgResult {
    /// `v_k` of a price setter: its largest item weight, zero for the virtual one.
    pub fn setter_value(&self, k: PriceSetter) -> Money {
        match k {
            PriceSetter::Player(k) => self.weights[k].iter().copied().max().unwrap_or(Money::ZERO),
            PriceSetter::Virtual => Money::ZERO,
        }
    }

    pub fn interest_set(&self, k: PlayerId) -> ItemSet {
        ItemSet::from_items((0..self.weights[k].len()).filter(|&j| self.weights[k][j] > Money::ZERO))
    }

    /// Player holding each item under the VCG allocation.
    pub fn item_owners(&self, num_items: usize) -> Vec<Option<PlayerId>> {
        let mut owners = vec![None; num_items];
        for (i, j) in self.allocation.iter().enumerate() {
            if let Some(j) = j {
                owners[*j] = Some(i);
            }
        }
        owners
    }

    pub fn to_json(&self, inst: &Instance) -> serde_json::Value {
        #[derive(Serialize)]
        struct PlayerJson {
            player: String,
            item: Option<String>,
            price: Money,
            price_setter: Option<String>,
            augmenting_path: Option<Vec<String>>,
            without: std::collections::BTreeMap<String, Option<String>>,
        }
        let item_name = |j: &Option<ItemId>| j.map(|j| inst.items[j].clone());
        let players: Vec<PlayerJson> = (0..inst.num_players())
            .map(|i| PlayerJson {
                player: inst.players[i].clone(),
                item: item_name(&self.allocation[i]),
                price: self.prices[i],
                price_setter: self.price_setters[i].map(|k| match k {
                    PriceSetter::Player(k) => inst.players[k].clone(),
                    PriceSetter::Virtual => "virtual".to_string(),
                }),
                augmenting_path: self.paths[i].as_ref().map(|p| p.names(inst)),
                without: self.without[i]
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| *k != i)
                    .map(|(k, j)| (inst.players[k].clone(), item_name(j)))
                    .collect(),
            })
            .collect();
        serde_json::json!({
            "welfare": self.welfare,
            "players": players,
        })
    }
}

/// VCG allocation, prices, remove-one matchings and augmenting paths.
pub fn vcg(inst: &Instance) -> Result<VcgResult> {
    let weights = unit_demand_weights(inst)?;
    vcg_from_weights(weights)
}

pub fn vcg_from_weights(weights: Weights) -> Result<VcgResult> {
    let n = weights.len();
    let allocation = max_weight_matching(&weights);
    let welfare = matching_weight(&weights, &allocation);
    let without: Vec<Matching> = (0..n)
        .into_par_iter()
        .map(|i| matching_without(&weights, &allocation, i))
        .collect();
    let mut prices = Vec::with_capacity(n);
    let mut paths = Vec::with_capacity(n);
    let mut price_setters = Vec::with_capacity(n);
    for i in 0..n {
        let own = allocation[i].map_or(Money::ZERO, |j| weights[i][j]);
        let others = welfare - own;
        prices.push(matching_weight(&weights, &without[i]) - others);
        let path = match allocation[i] {
            Some(_) => Some(trace_path(&allocation, &without[i], i)?),
            None => None,
        };
        price_setters.push(path.as_ref().and_then(AugPath::price_setter));
        paths.push(path);
    }
    Ok(VcgResult { weights, allocation, welfare, prices, without, paths, price_setters })
}

/// Optimal matching without player `i`, changing as few assignments of
/// `base` as possible among optima.
fn matching_without(weights: &Weights, base: &Matching, i: PlayerId) -> Matching {
    let n = weights.len() as i64;
    let w: Vec<Vec<i64>> = weights
        .iter()
        .enumerate()
        .map(|(k, row)| {
            row.iter()
                .enumerate()
                .map(|(j, x)| {
                    if k == i || x.is_zero() {
                        0
                    } else {
                        x.nanos() * (n + 1) + i64::from(base[k] == Some(j))
                    }
                })
                .collect()
        })
        .collect();
    lex_optimal(&w)
}

/// The alternating path of player `i` through the symmetric difference of
/// `x` and `x^(−i)`.
pub fn augmenting_path(res: &VcgResult, i: PlayerId) -> Result<AugPath> {
    if i >= res.allocation.len() {
        return Err(Error::domain(format!("player index {i} out of range")));
    }
    if res.allocation[i].is_none() {
        return Err(Error::domain("augmenting paths start at allocated players"));
    }
    trace_path(&res.allocation, &res.without[i], i)
}

fn trace_path(x: &Matching, without: &Matching, i: PlayerId) -> Result<AugPath> {
    let mut nodes = vec![PathNode::Player(i)];
    let mut visited = vec![i];
    let mut item = x[i];
    while let Some(j) = item {
        nodes.push(PathNode::Item(j));
        let taker = (0..x.len()).find(|&k| k != i && without[k] == Some(j) && x[k] != Some(j));
        match taker {
            None => {
                nodes.push(PathNode::Virtual);
                break;
            }
            Some(k) => {
                if visited.contains(&k) {
                    return Err(Error::Consistency(format!(
                        "alternating edges of player {i} revisit player {k}"
                    )));
                }
                visited.push(k);
                nodes.push(PathNode::Player(k));
                item = x[k];
            }
        }
    }
    let changed = (0..x.len()).filter(|&k| k == i || x[k] != without[k]).count();
    if changed != visited.len() {
        return Err(Error::Consistency(format!(
            "matchings with and without player {i} differ off the augmenting path"
        )));
    }
    Ok(AugPath { nodes })
}
