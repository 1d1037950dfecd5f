//! Augmenting-path forests and the item orderings they induce.
//!
//! Starting from each price setter (highest value first) the forest grows
//! breadth-first: a player node adopts the items of its interest set not yet
//! placed, and an item node adopts the player the optimal matching gives it
//! to. Post-order traversals restricted to item nodes give candidate sale
//! orders, which are then checked against the VCG outcome with the solver.

use std::collections::{HashSet, VecDeque};

use rand::seq::SliceRandom;
use rand::rngs::Xoshiro256PlusPlus;
use rand::SeedableRng;
use serde::Serialize;

use crate::auction::{Instance, ItemId, Outcome, PlayerId};
use crate::error::{Error, Result};
use crate::money::Money;
use crate::solver::{solve, SolverConfig};
use crate::valuation::{ItemSet, ValuationKind};
use crate::vcg::{vcg, PriceSetter, VcgResult};

pub const DEFAULT_CAP: usize = 5040;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "kind", content = "id", rename_all = "lowercase")]
pub enum ForestNode {
    Player(PlayerId),
    Item(ItemId),
    Virtual,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TreeNode {
    pub node: ForestNode,
    pub children: Vec<usize>,
}

/// One tree; `nodes[0]` is the root.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ForestTree {
    pub setter: PriceSetter,
    pub setter_value: Money,
    pub nodes: Vec<TreeNode>,
}

impl ForestTree {
    /// The nodes in order when the tree is a simple path.
    pub fn as_line(&self) -> Option<Vec<ForestNode>> {
        let mut out = vec![self.nodes[0].node];
        let mut at = 0;
        loop {
            match self.nodes[at].children.as_slice() {
                [] => return Some(out),
                [c] => {
                    at = *c;
                    out.push(self.nodes[at].node);
                }
                _ => return None,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &ForestTree, at: usize) -> usize {
            t.nodes[at].children.iter().map(|&c| 1 + go(t, c)).max().unwrap_or(0)
        }
        go(self, 0)
    }

    pub fn items(&self) -> Vec<ItemId> {
        self.nodes
            .iter()
            .filter_map(|n| match n.node {
                ForestNode::Item(j) => Some(j),
                _ => None,
            })
            .collect()
    }

    /// Parent index of every node (`None` for the root).
    pub fn parents(&self) -> Vec<Option<usize>> {
        let mut out = vec![None; self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            for &c in &n.children {
                out[c] = Some(i);
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ApForest {
    pub trees: Vec<ForestTree>,
    /// Items only placed under the virtual root because no price setter reached them.
    pub unreached: Vec<ItemId>,
}

impl ApForest {
    pub fn node_name(inst: &Instance, n: ForestNode) -> String {
        match n {
            ForestNode::Player(i) => inst.players[i].clone(),
            ForestNode::Item(j) => inst.items[j].clone(),
            ForestNode::Virtual => "virtual".into(),
        }
    }

    pub fn to_json(&self, inst: &Instance) -> serde_json::Value {
        fn node(inst: &Instance, t: &ForestTree, at: usize) -> serde_json::Value {
            let n = &t.nodes[at];
            serde_json::json!({
                "node": ApForest::node_name(inst, n.node),
                "children": n.children.iter().map(|&c| node(inst, t, c)).collect::<Vec<_>>(),
            })
        }
        serde_json::json!({
            "trees": self.trees.iter().map(|t| serde_json::json!({
                "setter_value": t.setter_value,
                "root": node(inst, t, 0),
            })).collect::<Vec<_>>(),
            "unreached": self.unreached.iter().map(|&j| inst.items[j].clone()).collect::<Vec<_>>(),
        })
    }
}

struct Builder<'a> {
    res: &'a VcgResult,
    owners: Vec<Option<PlayerId>>,
    placed_items: Vec<bool>,
    placed_players: Vec<bool>,
}

impl Builder<'_> {
    /// Breadth-first growth from `root` whose children are `seeds`.
    fn grow(&mut self, root: ForestNode, seeds: Vec<ItemId>) -> Vec<TreeNode> {
        let mut nodes = vec![TreeNode { node: root, children: Vec::new() }];
        let mut queue = VecDeque::new();
        self.adopt_items(0, seeds, &mut nodes, &mut queue);
        while let Some(at) = queue.pop_front() {
            match nodes[at].node {
                ForestNode::Item(j) => {
                    if let Some(i) = self.owners[j] {
                        if !self.placed_players[i] {
                            self.placed_players[i] = true;
                            let id = push_child(&mut nodes, at, ForestNode::Player(i));
                            queue.push_back(id);
                        }
                    }
                }
                ForestNode::Player(i) => {
                    let items = self.res.interest_set(i).iter().collect();
                    self.adopt_items(at, items, &mut nodes, &mut queue);
                }
                ForestNode::Virtual => {}
            }
        }
        nodes
    }

    fn adopt_items(
        &mut self,
        parent: usize,
        items: Vec<ItemId>,
        nodes: &mut Vec<TreeNode>,
        queue: &mut VecDeque<usize>,
    ) {
        for j in items {
            if !self.placed_items[j] {
                self.placed_items[j] = true;
                queue.push_back(push_child(nodes, parent, ForestNode::Item(j)));
            }
        }
    }
}

fn push_child(nodes: &mut Vec<TreeNode>, parent: usize, node: ForestNode) -> usize {
    nodes.push(TreeNode { node, children: Vec::new() });
    let id = nodes.len() - 1;
    nodes[parent].children.push(id);
    id
}

/// Builds the forest from a VCG result and its matching.
///
/// Setters are taken by decreasing value, ties in declaration order. A setter
/// already placed inside an earlier tree starts no tree of its own. Items no
/// setter reaches hang under a virtual root at the end.
pub fn build_ap_forest(res: &VcgResult) -> ApForest {
    let n = res.weights.len();
    let m = res.weights.first().map_or(0, Vec::len);
    let mut setters: Vec<PlayerId> = Vec::new();
    for s in res.price_setters.iter().flatten() {
        if let PriceSetter::Player(k) = s {
            if !setters.contains(k) {
                setters.push(*k);
            }
        }
    }
    let value = |k: PlayerId| res.setter_value(PriceSetter::Player(k));
    setters.sort_by(|a, b| value(*b).cmp(&value(*a)).then(a.cmp(b)));

    let mut b = Builder {
        res,
        owners: res.item_owners(m),
        placed_items: vec![false; m],
        placed_players: vec![false; n],
    };
    let mut trees = Vec::new();
    for k in setters {
        if b.placed_players[k] {
            continue;
        }
        b.placed_players[k] = true;
        let nodes = b.grow(ForestNode::Player(k), res.interest_set(k).iter().collect());
        trees.push(ForestTree {
            setter: PriceSetter::Player(k),
            setter_value: value(k),
            nodes,
        });
    }
    let unreached: Vec<ItemId> = (0..m).filter(|&j| !b.placed_items[j]).collect();
    if !unreached.is_empty() {
        let nodes = b.grow(ForestNode::Virtual, unreached.clone());
        trees.push(ForestTree { setter: PriceSetter::Virtual, setter_value: Money::ZERO, nodes });
    }
    ApForest { trees, unreached }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EnumerationMode {
    Exhaustive,
    Truncated,
    Sampled,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Orderings {
    pub orderings: Vec<Vec<ItemId>>,
    pub mode: EnumerationMode,
}

impl Orderings {
    pub fn exhaustive(&self) -> bool {
        self.mode == EnumerationMode::Exhaustive
    }
}

/// Distinct post-order item sequences of the subtree at `at`, at most `cap`.
/// The flag is false when some list was cut.
fn subtree_orders(t: &ForestTree, at: usize, cap: usize) -> (Vec<Vec<ItemId>>, bool) {
    let node = &t.nodes[at];
    let mut complete = true;
    let child_orders: Vec<Vec<Vec<ItemId>>> = node
        .children
        .iter()
        .map(|&c| {
            let (o, full) = subtree_orders(t, c, cap);
            complete &= full;
            o
        })
        .collect();
    let mut out: Vec<Vec<ItemId>> = Vec::new();
    let mut seen: HashSet<Vec<ItemId>> = HashSet::new();
    let mut perm: Vec<usize> = (0..child_orders.len()).collect();
    'perms: loop {
        let mut partial: Vec<Vec<ItemId>> = vec![Vec::new()];
        for &c in &perm {
            let mut next = Vec::new();
            for p in &partial {
                for o in &child_orders[c] {
                    if next.len() >= cap {
                        complete = false;
                        break;
                    }
                    let mut s = p.clone();
                    s.extend_from_slice(o);
                    next.push(s);
                }
            }
            partial = next;
        }
        for mut s in partial {
            if let ForestNode::Item(j) = node.node {
                s.push(j);
            }
            if seen.insert(s.clone()) {
                if out.len() >= cap {
                    complete = false;
                    break 'perms;
                }
                out.push(s);
            }
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    (out, complete)
}

fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
        return false;
    };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).expect("exists");
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// All post-order item sequences over sibling permutations, trees in forest
/// order, truncated at `cap`.
pub fn enumerate_orderings(f: &ApForest, cap: usize) -> Result<Orderings> {
    if cap == 0 {
        return Err(Error::domain("cap must be at least 1"));
    }
    let mut complete = true;
    let mut acc: Vec<Vec<ItemId>> = vec![Vec::new()];
    for t in &f.trees {
        let (orders, full) = subtree_orders(t, 0, cap);
        complete &= full;
        let mut next = Vec::new();
        'outer: for a in &acc {
            for o in &orders {
                if next.len() >= cap {
                    complete = false;
                    break 'outer;
                }
                let mut s = a.clone();
                s.extend_from_slice(o);
                next.push(s);
            }
        }
        acc = next;
    }
    let mode = if complete { EnumerationMode::Exhaustive } else { EnumerationMode::Truncated };
    Ok(Orderings { orderings: acc, mode })
}

/// `count` orderings from uniformly shuffled sibling orders (duplicates dropped).
pub fn sample_orderings(f: &ApForest, count: usize, seed: u64) -> Orderings {
    fn walk(t: &ForestTree, at: usize, rng: &mut Xoshiro256PlusPlus, out: &mut Vec<ItemId>) {
        let mut kids = t.nodes[at].children.clone();
        kids.shuffle(rng);
        for c in kids {
            walk(t, c, rng, out);
        }
        if let ForestNode::Item(j) = t.nodes[at].node {
            out.push(j);
        }
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut orderings = Vec::new();
    for _ in 0..count {
        let mut o = Vec::new();
        for t in &f.trees {
            walk(t, 0, &mut rng, &mut o);
        }
        if seen.insert(o.clone()) {
            orderings.push(o);
        }
    }
    Orderings { orderings, mode: EnumerationMode::Sampled }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum OrderingVerdict {
    VcgReplicated,
    NotVcg { reason: String },
    Failed { error: String },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrderingResult {
    pub ordering: Vec<String>,
    pub verdict: OrderingVerdict,
    /// Winner and price of each item in sale order, when the solver finished.
    pub path: Option<Vec<(String, String, Money)>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConjectureReport {
    pub instance: String,
    pub enumeration: EnumerationMode,
    pub tolerance: Money,
    pub results: Vec<OrderingResult>,
    pub witness: Option<Vec<String>>,
}

impl ConjectureReport {
    pub fn exhausted(&self) -> bool {
        self.witness.is_none()
    }
}

#[derive(Clone, Debug)]
pub struct ConjectureConfig {
    pub cap: usize,
    /// Orderings to sample when enumeration is truncated (0 keeps the truncated list).
    pub sample: usize,
    pub seed: u64,
    pub solver: SolverConfig,
    /// Keep testing after the first witness.
    pub test_all: bool,
}

impl Default for ConjectureConfig {
    fn default() -> Self {
        ConjectureConfig {
            cap: DEFAULT_CAP,
            sample: 0,
            seed: 0,
            solver: SolverConfig::default(),
            test_all: false,
        }
    }
}

fn require_single_valued(inst: &Instance) -> Result<()> {
    for (i, v) in inst.valuations.iter().enumerate() {
        if v.kind() != ValuationKind::SingleValuedUd {
            return Err(Error::domain(format!(
                "orderings need single-valued unit-demand bidders; {} is {:?}",
                inst.players[i],
                v.kind()
            )));
        }
    }
    Ok(())
}

/// Compares the solved outcome of one sale order with the VCG outcome.
pub fn check_ordering(
    inst: &Instance,
    res: &VcgResult,
    order: &[ItemId],
    solver: &SolverConfig,
    tolerance: Money,
) -> OrderingResult {
    let ordering: Vec<String> = order.iter().map(|&j| inst.items[j].clone()).collect();
    let solved = inst.reordered(order).and_then(|r| solve(&r, solver));
    let solved = match solved {
        Ok(s) => s,
        Err(e) => {
            return OrderingResult {
                ordering,
                verdict: OrderingVerdict::Failed { error: e.to_string() },
                path: None,
            }
        }
    };
    let out = &solved.outcome;
    let path = order
        .iter()
        .enumerate()
        .map(|(pos, &j)| (inst.items[j].clone(), inst.players[out.allocation[pos]].clone(), out.prices[pos]))
        .collect();
    let verdict = compare_with_vcg(inst, res, order, out, tolerance);
    OrderingResult { ordering, verdict, path: Some(path) }
}

/// Compares an outcome of `inst` sold in `order` with the VCG outcome: each
/// VCG-allocated item must go to its VCG owner at a price within `tolerance`
/// of the owner's VCG price, and items VCG leaves unsold must go to bidders
/// with no value for them.
pub fn compare_with_vcg(
    inst: &Instance,
    res: &VcgResult,
    order: &[ItemId],
    out: &Outcome,
    tolerance: Money,
) -> OrderingVerdict {
    let owners = res.item_owners(inst.num_items());
    let mut reasons = Vec::new();
    for (pos, &j) in order.iter().enumerate() {
        let w = out.allocation[pos];
        match owners[j] {
            Some(o) if o != w => reasons.push(format!(
                "{} goes to {} instead of {}",
                inst.items[j], inst.players[w], inst.players[o]
            )),
            Some(o) => {
                let gap = (out.prices[pos] - res.prices[o]).abs();
                if gap > tolerance {
                    reasons.push(format!(
                        "{} sells at {} against a VCG price of {}",
                        inst.items[j], out.prices[pos], res.prices[o]
                    ));
                }
            }
            None => {
                if inst.valuations[w].value_unchecked(ItemSet::singleton(j)) > Money::ZERO {
                    reasons.push(format!(
                        "{} is unallocated by VCG but {} values it",
                        inst.items[j], inst.players[w]
                    ));
                }
            }
        }
    }
    if reasons.is_empty() {
        OrderingVerdict::VcgReplicated
    } else {
        OrderingVerdict::NotVcg { reason: reasons.join("; ") }
    }
}

/// Searches the augmenting-path orderings for one whose solved equilibrium
/// reproduces the VCG allocation and (within two grid steps) its prices.
pub fn test_conjecture(inst: &Instance, cfg: &ConjectureConfig) -> Result<ConjectureReport> {
    require_single_valued(inst)?;
    let res = vcg(inst)?;
    let forest = build_ap_forest(&res);
    let mut orders = enumerate_orderings(&forest, cfg.cap)?;
    if !orders.exhaustive() && cfg.sample > 0 {
        orders = sample_orderings(&forest, cfg.sample, cfg.seed);
    }
    let tolerance = inst.grid_step.times(2);
    let mut results = Vec::new();
    let mut witness = None;
    for o in &orders.orderings {
        let r = check_ordering(inst, &res, o, &cfg.solver, tolerance);
        let hit = r.verdict == OrderingVerdict::VcgReplicated;
        if hit && witness.is_none() {
            witness = Some(r.ordering.clone());
        }
        results.push(r);
        if hit && !cfg.test_all {
            break;
        }
    }
    let instance = inst
        .metadata
        .get("family")
        .and_then(|v| v.as_str())
        .unwrap_or("instance")
        .to_string();
    Ok(ConjectureReport { instance, enumeration: orders.mode, tolerance, results, witness })
}

#[cfg(test)]
mod tests;
