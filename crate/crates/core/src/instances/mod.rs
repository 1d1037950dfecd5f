//! Instance generators for the lower-bound construction, its budgeted
//! variants, the two single-valued unit-demand examples and a small
//! identical-items family, together with scripted profiles and JSON I/O.

mod io;
mod profiles;

pub use io::{from_json, load, parse, save, to_json, InstanceJson, SCHEMA_VERSION};
pub use profiles::{Thm1BudgetedProfile, Thm1Profile, VcgMimicProfile};

use serde::Serialize;
use serde_json::json;

use crate::auction::{
    effective_welfare, optimal_effective_welfare, optimal_welfare, poa, Instance, ItemId, PlayerId,
};
use crate::money::WelfareRatio;
use crate::verifier::play;
use crate::error::{Error, Result};
use crate::money::{money, Money};
use crate::valuation::{ItemSet, Valuation};

/// Parameters of the chain construction with `k` small unit-demand bidders.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Thm1Params {
    pub k: usize,
    pub epsilon: Money,
    /// `deltas[i - 1]` is the value of bidder `p_i`.
    pub deltas: Vec<Money>,
    pub grid_step: Money,
}

impl Thm1Params {
    pub fn new(k: usize, epsilon: Money, deltas: Vec<Money>, grid_step: Money) -> Result<Self> {
        let p = Thm1Params { k, epsilon, deltas, grid_step };
        p.validate()?;
        Ok(p)
    }

    /// `ε = 0.01`, `δ_i = 0.01·(i+1)`, grid step `0.01`.
    pub fn standard(k: usize) -> Self {
        Thm1Params {
            k,
            epsilon: money("0.01"),
            deltas: (1..=k).map(|i| money("0.01").times(i as i64 + 1)).collect(),
            grid_step: money("0.01"),
        }
    }

    /// `ε = 0.01`, `δ_i = 0.01·(i+2)`, so that `δ_1 > 2ε`.
    pub fn standard_budgeted(k: usize) -> Self {
        Thm1Params {
            deltas: (1..=k).map(|i| money("0.01").times(i as i64 + 2)).collect(),
            ..Thm1Params::standard(k)
        }
    }

    /// `ε = 0.1`, `δ_i = 0.1·(i+2)`, grid step `0.1` (needs `k ≤ 7`).
    ///
    /// Budgets make every payment part of the state, so exhaustive checks
    /// of the budgeted game need a grid this coarse to stay small.
    pub fn coarse_budgeted(k: usize) -> Self {
        let step = money("0.1");
        Thm1Params {
            k,
            epsilon: step,
            deltas: (1..=k).map(|i| step.times(i as i64 + 2)).collect(),
            grid_step: step,
        }
    }

    /// `ε < δ_1 < ... < δ_k < 1` and a positive grid step.
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::parameter("k must be at least 1"));
        }
        if self.deltas.len() != self.k {
            return Err(Error::parameter(format!(
                "{} deltas given for k = {}",
                self.deltas.len(),
                self.k
            )));
        }
        if self.epsilon <= Money::ZERO {
            return Err(Error::parameter("epsilon must be positive"));
        }
        if self.grid_step <= Money::ZERO {
            return Err(Error::parameter("grid step must be positive"));
        }
        if self.deltas[0] <= self.epsilon {
            return Err(Error::parameter(format!(
                "need delta_1 > epsilon, got {} <= {}",
                self.deltas[0], self.epsilon
            )));
        }
        for i in 1..self.k {
            if self.deltas[i] <= self.deltas[i - 1] {
                return Err(Error::parameter(format!(
                    "deltas must increase strictly: delta_{} = {} <= delta_{} = {}",
                    i + 1,
                    self.deltas[i],
                    i,
                    self.deltas[i - 1]
                )));
            }
        }
        if self.deltas[self.k - 1] >= Money::from_int(1) {
            return Err(Error::parameter("delta_k must stay below 1"));
        }
        Ok(())
    }

    pub fn validate_budgeted(&self) -> Result<()> {
        self.validate()?;
        if self.deltas[0] <= self.epsilon.times(2) {
            return Err(Error::parameter(format!(
                "the budgeted variant needs delta_1 > 2 epsilon, got {} <= {}",
                self.deltas[0],
                self.epsilon.times(2)
            )));
        }
        Ok(())
    }

    pub fn delta(&self, i: usize) -> Money {
        self.deltas[i - 1]
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "k": self.k,
            "epsilon": self.epsilon,
            "deltas": self.deltas,
            "grid_step": self.grid_step,
        })
    }

    /// Reads the object written by [`Thm1Params::to_json`].
    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        #[derive(serde::Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Doc {
            k: usize,
            epsilon: Money,
            deltas: Vec<Money>,
            grid_step: Money,
        }
        let d: Doc = serde_json::from_value(v.clone()).map_err(|e| Error::schema("metadata.params", e.to_string()))?;
        Thm1Params::new(d.k, d.epsilon, d.deltas, d.grid_step)
    }

    /// Parameters recorded in a generated instance's metadata.
    pub fn from_instance(inst: &Instance) -> Result<Self> {
        let v = inst
            .metadata
            .get("params")
            .ok_or_else(|| Error::schema("metadata.params", "instance carries no construction parameters"))?;
        Thm1Params::from_json(v)
    }
}

/// Player and item indices of the chain construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Thm1Layout {
    pub k: usize,
}

impl Thm1Layout {
    pub const A: PlayerId = 0;
    pub const B: PlayerId = 1;
    pub const P0: PlayerId = 2;

    /// Player `p_i`, `1 ≤ i ≤ k`.
    pub fn p(self, i: usize) -> PlayerId {
        2 + i
    }

    pub fn num_players(self) -> usize {
        self.k + 3
    }

    /// Item `I_i`; items are sold `I_k, ..., I_1`.
    pub fn item(self, i: usize) -> ItemId {
        self.k - i
    }

    pub fn y(self) -> ItemId {
        self.k
    }

    pub fn z1(self) -> ItemId {
        self.k + 1
    }

    pub fn z2(self) -> ItemId {
        self.k + 2
    }

    pub fn num_items(self) -> usize {
        self.k + 3
    }

    /// The `i` of the item sold in `round`, if it is one of the `I` items.
    pub fn chain_index(self, round: usize) -> Option<usize> {
        (round < self.k).then(|| self.k - round)
    }

    fn item_names(self) -> Vec<String> {
        let mut items: Vec<String> = (1..=self.k).rev().map(|i| format!("I{i}")).collect();
        items.extend(["Y", "Z1", "Z2"].map(String::from));
        items
    }

    fn player_names(self) -> Vec<String> {
        let mut players: Vec<String> = ["a", "b", "p0"].map(String::from).to_vec();
        players.extend((1..=self.k).map(|i| format!("p{i}")));
        players
    }
}

/// Per-player item values of the construction, in player order.
fn thm1_item_values(p: &Thm1Params) -> Vec<Vec<Money>> {
    let l = Thm1Layout { k: p.k };
    let m = l.num_items();
    let ten = Money::from_int(10);
    let one = Money::from_int(1);
    let mut rows = vec![vec![Money::ZERO; m]; l.num_players()];
    for i in 1..=p.k {
        rows[Thm1Layout::A][l.item(i)] = one + p.epsilon;
        rows[Thm1Layout::B][l.item(i)] = one;
    }
    rows[Thm1Layout::A][l.z1()] = ten;
    rows[Thm1Layout::B][l.z2()] = ten;
    for j in [l.y(), l.z1(), l.z2()] {
        rows[Thm1Layout::P0][j] = ten - p.epsilon;
    }
    rows[l.p(1)][l.item(1)] = p.delta(1);
    rows[l.p(1)][l.y()] = ten;
    for i in 2..=p.k {
        rows[l.p(i)][l.item(i)] = p.delta(i);
        rows[l.p(i)][l.item(i - 1)] = p.delta(i);
    }
    rows
}

fn thm1_metadata(inst: &mut Instance, family: &str, p: &Thm1Params) {
    inst.metadata.insert("family".into(), json!(family));
    inst.metadata.insert("params".into(), p.to_json());
    inst.metadata.insert(
        "notes".into(),
        json!([
            "players p0..pk are all present, so there are k+1 unit-demand bidders",
            "p_i for i >= 2 values the adjacent items I_i and I_(i-1)"
        ]),
    );
}

fn thm1_extra_points(p: &Thm1Params) -> Vec<Money> {
    vec![p.epsilon, p.delta(1) - p.epsilon]
}

/// Two additive bidders, `k + 1` unit-demand bidders and `k + 3` items sold
/// in the order `I_k, ..., I_1, Y, Z1, Z2`.
pub fn thm1_instance(p: &Thm1Params) -> Result<Instance> {
    p.validate()?;
    let l = Thm1Layout { k: p.k };
    let rows = thm1_item_values(p);
    let valuations = rows
        .into_iter()
        .enumerate()
        .map(|(i, values)| {
            if i == Thm1Layout::A || i == Thm1Layout::B {
                Valuation::Additive { values }
            } else {
                Valuation::UnitDemand { values }
            }
        })
        .collect();
    let mut inst = Instance::new(
        l.item_names(),
        l.player_names(),
        valuations,
        None,
        p.grid_step,
        thm1_extra_points(p),
        None,
    )?;
    thm1_metadata(&mut inst, "thm1", p);
    Ok(inst)
}

/// The caps each player carries in the budgeted re-encodings: `δ_i` for
/// `p_i` with `i ≥ 2`, `10` for `p_1`, `10 − ε` for `p_0`, and an amount no
/// sequence of bids can reach for the additive bidders.
fn thm1_caps(p: &Thm1Params, unbounded: Money) -> Vec<Money> {
    let l = Thm1Layout { k: p.k };
    let mut caps = vec![unbounded; l.num_players()];
    caps[Thm1Layout::P0] = Money::from_int(10) - p.epsilon;
    caps[l.p(1)] = Money::from_int(10);
    for i in 2..=p.k {
        caps[l.p(i)] = p.delta(i);
    }
    caps
}

/// Stand-in for an unlimited budget: `m · (1 + Σ all item values)`.
fn unbounded_budget(rows: &[Vec<Money>]) -> Money {
    let total: Money = rows.iter().flatten().copied().sum();
    (Money::from_int(1) + total).times(rows[0].len() as i64)
}

/// Every valuation additive, with hard payment budgets.
pub fn thm1_budgeted(p: &Thm1Params) -> Result<(Instance, Thm1BudgetedProfile)> {
    p.validate_budgeted()?;
    let l = Thm1Layout { k: p.k };
    let rows = thm1_item_values(p);
    let budgets = thm1_caps(p, unbounded_budget(&rows));
    let valuations = rows.into_iter().map(|values| Valuation::Additive { values }).collect();
    let mut extra = thm1_extra_points(p);
    extra.push(p.epsilon.times(2));
    let mut inst = Instance::new(
        l.item_names(),
        l.player_names(),
        valuations,
        Some(budgets),
        p.grid_step,
        extra,
        None,
    )?;
    thm1_metadata(&mut inst, "thm1-budgeted", p);
    let prof = Thm1BudgetedProfile::new(&inst, p)?;
    Ok((inst, prof))
}

/// The construction with every unit-demand bidder written as budget-additive.
pub fn thm1_budget_additive(p: &Thm1Params) -> Result<Instance> {
    p.validate()?;
    let l = Thm1Layout { k: p.k };
    let rows = thm1_item_values(p);
    let unbounded: Money = rows.iter().flatten().copied().sum::<Money>() + Money::from_int(1);
    let caps = thm1_caps(p, unbounded);
    let valuations = rows
        .into_iter()
        .zip(caps)
        .enumerate()
        .map(|(i, (values, cap))| {
            if i == Thm1Layout::A || i == Thm1Layout::B {
                Valuation::Additive { values }
            } else {
                Valuation::BudgetAdditive { values, cap }
            }
        })
        .collect();
    let mut inst = Instance::new(
        l.item_names(),
        l.player_names(),
        valuations,
        None,
        p.grid_step,
        thm1_extra_points(p),
        None,
    )?;
    thm1_metadata(&mut inst, "thm1-budget-additive", p);
    Ok(inst)
}

fn single_valued(
    items: &[&str],
    players: &[(&str, Money, &[&str])],
    grid_step: Money,
    tie_priority: Option<Vec<PlayerId>>,
) -> Result<Instance> {
    let names: Vec<String> = items.iter().map(|s| s.to_string()).collect();
    let valuations = players
        .iter()
        .map(|(_, v, interest)| Valuation::SingleValuedUd {
            value: *v,
            interest: ItemSet::from_items(
                interest.iter().map(|j| items.iter().position(|x| x == j).expect("known item")),
            ),
            num_items: items.len(),
        })
        .collect();
    Instance::new(
        names,
        players.iter().map(|(n, _, _)| n.to_string()).collect(),
        valuations,
        None,
        grid_step,
        Vec::new(),
        tie_priority,
    )
}

/// Four single-valued bidders on a line of three items, sold `A, B, C`.
/// The grid step is `ε / 2`.
pub fn appendix_a_instance(epsilon: Money) -> Result<Instance> {
    appendix_a_instance_with_step(epsilon, epsilon.halve())
}

pub fn appendix_a_instance_with_step(epsilon: Money, grid_step: Money) -> Result<Instance> {
    if epsilon <= Money::ZERO || epsilon.times(4) >= Money::from_int(1) {
        return Err(Error::parameter("need 0 < epsilon < 1/4"));
    }
    let one = Money::from_int(1);
    let mut inst = single_valued(
        &["A", "B", "C"],
        &[
            ("a", epsilon, &["A"]),
            ("b", one, &["A", "C"]),
            ("c", one, &["B", "C"]),
            ("d", one - epsilon, &["B"]),
        ],
        grid_step,
        None,
    )?;
    inst.metadata.insert("family".into(), json!("appendix-a"));
    inst.metadata.insert("params".into(), json!({ "epsilon": epsilon, "grid_step": grid_step }));
    Ok(inst)
}

/// Four single-valued bidders where player 1 is the price setter of everyone.
/// Ties go to the higher-numbered player.
pub fn appendix_b_instance() -> Result<Instance> {
    let mut inst = single_valued(
        &["A", "B", "C"],
        &[
            ("1", Money::from_int(1), &["A", "B", "C"]),
            ("2", Money::from_int(2), &["B"]),
            ("3", Money::from_int(3), &["B", "C"]),
            ("4", Money::from_int(4), &["A", "C"]),
        ],
        money("0.25"),
        Some(vec![3, 2, 1, 0]),
    )?;
    inst.metadata.insert("family".into(), json!("appendix-b"));
    Ok(inst)
}

/// `m` interchangeable items, two additive bidders worth 1 per item and two
/// unit-demand bidders worth 1.5 and 1.25 for any single item.
///
/// The values are a stand-in chosen for this crate and are flagged as such
/// in the metadata.
pub fn identical_items_instance(m: usize) -> Result<Instance> {
    if m < 2 {
        return Err(Error::parameter("need at least two items"));
    }
    let row = |v: &str| vec![money(v); m];
    let mut inst = Instance::new(
        (1..=m).map(|j| format!("G{j}")).collect(),
        ["a", "b", "u1", "u2"].map(String::from).to_vec(),
        vec![
            Valuation::Additive { values: row("1") },
            Valuation::Additive { values: row("1") },
            Valuation::UnitDemand { values: row("1.5") },
            Valuation::UnitDemand { values: row("1.25") },
        ],
        None,
        money("0.25"),
        Vec::new(),
        None,
    )?;
    inst.metadata.insert("family".into(), json!("identical"));
    inst.metadata.insert("params".into(), json!({ "m": m }));
    inst.metadata.insert("reconstructed".into(), json!(true));
    Ok(inst)
}

/// One row of a price-of-anarchy sweep over `k`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PoaRow {
    pub k: usize,
    pub opt: Money,
    pub eq: Money,
    pub ratio: WelfareRatio,
    /// `(k(1+ε)+30)/31`.
    pub bound: WelfareRatio,
}

impl PoaRow {
    /// Exact `ratio >= bound`.
    pub fn meets_bound(&self) -> bool {
        match (self.ratio, self.bound) {
            (WelfareRatio::Infinite, _) => true,
            (_, WelfareRatio::Infinite) => false,
            (WelfareRatio::Finite(r), WelfareRatio::Finite(b)) => r >= b,
        }
    }
}

/// Welfare of the scripted equilibrium against the optimum for each `k`.
///
/// The budgeted family is measured in effective welfare.
pub fn poa_sweep(
    budgeted: bool,
    ks: impl IntoIterator<Item = usize>,
    params: impl Fn(usize) -> Thm1Params,
) -> Result<Vec<PoaRow>> {
    ks.into_iter()
        .map(|k| {
            let p = params(k);
            let (opt, eq) = if budgeted {
                let (inst, prof) = thm1_budgeted(&p)?;
                let out = play(&inst, &prof)?;
                let eq = effective_welfare(&inst, &out.bundles(inst.num_players()))?;
                (optimal_effective_welfare(&inst)?.welfare, eq)
            } else {
                let inst = thm1_instance(&p)?;
                let prof = Thm1Profile::new(&inst, &p)?;
                (optimal_welfare(&inst)?.welfare, play(&inst, &prof)?.welfare)
            };
            let thirty = Money::from_int(30);
            let bound_num = (Money::from_int(1) + p.epsilon).times(k as i64) + thirty;
            Ok(PoaRow {
                k,
                opt,
                eq,
                ratio: poa(opt, eq),
                bound: WelfareRatio::of(bound_num, Money::from_int(31)),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests;
