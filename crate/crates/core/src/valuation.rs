//! Valuation classes and their value, marginal-value and demand queries.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::money::Money;

/// Largest item universe supported by set-valued operations.
pub const MAX_ITEMS: usize = 63;
/// Largest universe for exhaustive subset checks.
pub const MAX_EXHAUSTIVE_ITEMS: usize = 20;

/// A set of item indices, stored as a bitmask.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ItemSet(pub u64);

impl ItemSet {
    pub const EMPTY: ItemSet = ItemSet(0);

    pub fn full(m: usize) -> Self {
        debug_assert!(m <= MAX_ITEMS);
        ItemSet((1u64 << m) - 1)
    }

    pub fn singleton(j: usize) -> Self {
        ItemSet(1 << j)
    }

    pub fn from_items<I: IntoIterator<Item = usize>>(items: I) -> Self {
        ItemSet(items.into_iter().fold(0, |acc, j| acc | (1 << j)))
    }

    pub fn contains(self, j: usize) -> bool {
        j < 64 && self.0 & (1 << j) != 0
    }

    pub fn with(self, j: usize) -> Self {
        ItemSet(self.0 | (1 << j))
    }

    pub fn without(self, j: usize) -> Self {
        ItemSet(self.0 & !(1 << j))
    }

    pub fn union(self, other: ItemSet) -> Self {
        ItemSet(self.0 | other.0)
    }

    pub fn intersection(self, other: ItemSet) -> Self {
        ItemSet(self.0 & other.0)
    }

    pub fn minus(self, other: ItemSet) -> Self {
        ItemSet(self.0 & !other.0)
    }

    pub fn is_subset(self, other: ItemSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let j = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(j)
            }
        })
    }

    /// All subsets of `self`, starting with the empty set.
    pub fn subsets(self) -> impl Iterator<Item = ItemSet> {
        let full = self.0;
        let mut next = Some(0u64);
        std::iter::from_fn(move || {
            let cur = next?;
            next = if cur == full { None } else { Some((cur.wrapping_sub(full)) & full) };
            Some(ItemSet(cur))
        })
    }

    /// Orders sets by their ascending element lists, lexicographically.
    pub fn lex_cmp(self, other: ItemSet) -> Ordering {
        let diff = self.0 ^ other.0;
        if diff == 0 {
            return Ordering::Equal;
        }
        let low = diff & diff.wrapping_neg();
        let above = !(low - 1);
        // Common prefix ends just below `low`; whichever list holds `low` is
        // smaller unless the other list has no elements left.
        if self.0 & low != 0 {
            if other.0 & above == 0 {
                Ordering::Greater
            } else {
                Ordering::Less
            }
        } else if self.0 & above == 0 {
            Ordering::Less
        } else {
            Ordering::Greater
        }
    }
}

impl fmt::Debug for ItemSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Valuation {
    Additive { values: Vec<Money> },
    UnitDemand { values: Vec<Money> },
    SingleValuedUd { value: Money, interest: ItemSet, num_items: usize },
    BudgetAdditive { values: Vec<Money>, cap: Money },
    KCapacitated { values: Vec<Money>, k: usize },
    /// Explicit value per subset, indexed by bitmask.
    Table { values: Vec<Money> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[derive(Default)]
pub enum ValuationKind {
    #[default]
    Additive,
    UnitDemand,
    SingleValuedUd,
    BudgetAdditive,
    KCapacitated,
    Table,
}

impl Valuation {
    pub fn kind(&self) -> ValuationKind {
        match self {
            Valuation::Additive { .. } => ValuationKind::Additive,
            Valuation::UnitDemand { .. } => ValuationKind::UnitDemand,
            Valuation::SingleValuedUd { .. } => ValuationKind::SingleValuedUd,
            Valuation::BudgetAdditive { .. } => ValuationKind::BudgetAdditive,
            Valuation::KCapacitated { .. } => ValuationKind::KCapacitated,
            Valuation::Table { .. } => ValuationKind::Table,
        }
    }

    pub fn num_items(&self) -> usize {
        match self {
            Valuation::Additive { values }
            | Valuation::UnitDemand { values }
            | Valuation::BudgetAdditive { values, .. }
            | Valuation::KCapacitated { values, .. } => values.len(),
            Valuation::SingleValuedUd { num_items, .. } => *num_items,
            Valuation::Table { values } => values.len().trailing_zeros() as usize,
        }
    }

    /// True for the classes whose value is the best single item in the set.
    pub fn is_unit_demand(&self) -> bool {
        match self {
            Valuation::UnitDemand { .. } | Valuation::SingleValuedUd { .. } => true,
            Valuation::KCapacitated { k, .. } => *k == 1,
            _ => false,
        }
    }

    /// Checks the per-class invariants.
    pub fn validate(&self) -> Result<()> {
        let m = self.num_items();
        if m > MAX_ITEMS {
            return Err(Error::capacity(format!("{m} items exceeds the limit of {MAX_ITEMS}")));
        }
        let nonneg = |vals: &[Money]| vals.iter().all(|v| !v.is_negative());
        let ok = match self {
            Valuation::Additive { values } | Valuation::UnitDemand { values } => nonneg(values),
            Valuation::SingleValuedUd { value, interest, num_items } => {
                !value.is_negative() && interest.is_subset(ItemSet::full(*num_items))
            }
            Valuation::BudgetAdditive { values, cap } => nonneg(values) && !cap.is_negative(),
            Valuation::KCapacitated { values, k } => {
                if *k < 1 || *k > values.len().max(1) {
                    return Err(Error::domain(format!(
                        "capacity k = {k} outside 1..={}",
                        values.len()
                    )));
                }
                nonneg(values)
            }
            Valuation::Table { values } => {
                if !values.len().is_power_of_two() {
                    return Err(Error::domain("table must cover every subset"));
                }
                nonneg(values) && values[0].is_zero()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::domain("valuation has a negative entry or a nonzero empty-set value"))
        }
    }

    fn check_set(&self, s: ItemSet) -> Result<()> {
        let m = self.num_items();
        if !s.is_subset(ItemSet::full(m)) {
            return Err(Error::domain(format!("item set {s:?} not within the {m} items")));
        }
        Ok(())
    }

    pub fn value(&self, s: ItemSet) -> Result<Money> {
        self.check_set(s)?;
        Ok(self.value_unchecked(s))
    }

    /// `value` without the universe check, for hot loops over known-valid sets.
    pub fn value_unchecked(&self, s: ItemSet) -> Money {
        match self {
            Valuation::Additive { values } => s.iter().map(|j| values[j]).sum(),
            Valuation::UnitDemand { values } => s.iter().map(|j| values[j]).max().unwrap_or(Money::ZERO),
            Valuation::SingleValuedUd { value, interest, .. } => {
                if s.intersection(*interest).is_empty() {
                    Money::ZERO
                } else {
                    *value
                }
            }
            Valuation::BudgetAdditive { values, cap } => {
                let sum: Money = s.iter().map(|j| values[j]).sum();
                sum.min(*cap)
            }
            Valuation::KCapacitated { values, k } => {
                let mut vals: Vec<Money> = s.iter().map(|j| values[j]).collect();
                vals.sort_unstable_by(|a, b| b.cmp(a));
                vals.into_iter().take(*k).sum()
            }
            Valuation::Table { values } => values[s.0 as usize],
        }
    }

    pub fn marginal_value(&self, s: ItemSet, j: usize) -> Result<Money> {
        self.check_set(s.with(j))?;
        if s.contains(j) {
            return Err(Error::domain(format!("item {j} already in the set")));
        }
        Ok(self.marginal_unchecked(s, j))
    }

    pub fn marginal_unchecked(&self, s: ItemSet, j: usize) -> Money {
        match self {
            Valuation::Additive { values } => values[j],
            _ => self.value_unchecked(s.with(j)) - self.value_unchecked(s),
        }
    }

    /// Value of each singleton.
    pub fn item_values(&self) -> Vec<Money> {
        (0..self.num_items()).map(|j| self.value_unchecked(ItemSet::singleton(j))).collect()
    }

    /// Exhaustive check that adding any single item never lowers the value.
    pub fn is_monotone(&self, items: ItemSet) -> Result<bool> {
        self.check_set(items)?;
        if items.len() > MAX_EXHAUSTIVE_ITEMS {
            return Err(Error::capacity(format!(
                "monotonicity check over {} items (limit {MAX_EXHAUSTIVE_ITEMS})",
                items.len()
            )));
        }
        for t in items.subsets() {
            let vt = self.value_unchecked(t);
            for j in items.minus(t).iter() {
                if self.value_unchecked(t.with(j)) < vt {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// A surplus-maximizing bundle; ties prefer smaller sets, then the
    /// lexicographically smallest set.
    pub fn demand(&self, prices: &[Money]) -> Result<ItemSet> {
        let m = self.num_items();
        if prices.len() != m {
            return Err(Error::domain(format!("{} prices for {m} items", prices.len())));
        }
        match self {
            Valuation::Additive { values } => Ok(ItemSet::from_items(
                (0..m).filter(|&j| values[j] > prices[j]),
            )),
            Valuation::UnitDemand { .. } | Valuation::SingleValuedUd { .. } => {
                let mut best = (Money::ZERO, ItemSet::EMPTY);
                for j in 0..m {
                    let surplus = self.value_unchecked(ItemSet::singleton(j)) - prices[j];
                    if surplus > best.0 {
                        best = (surplus, ItemSet::singleton(j));
                    }
                }
                Ok(best.1)
            }
            _ => {
                let all = self.demand_sets(prices)?;
                Ok(all[0])
            }
        }
    }

    /// Every surplus-maximizing bundle, sorted by (size, lexicographic order).
    pub fn demand_sets(&self, prices: &[Money]) -> Result<Vec<ItemSet>> {
        let m = self.num_items();
        if m > MAX_EXHAUSTIVE_ITEMS {
            return Err(Error::capacity(format!("demand enumeration over {m} items")));
        }
        let mut best = Money::ZERO;
        let mut sets = vec![ItemSet::EMPTY];
        for s in ItemSet::full(m).subsets().skip(1) {
            let surplus = self.value_unchecked(s) - s.iter().map(|j| prices[j]).sum::<Money>();
            match surplus.cmp(&best) {
                Ordering::Greater => {
                    best = surplus;
                    sets.clear();
                    sets.push(s);
                }
                Ordering::Equal => sets.push(s),
                Ordering::Less => {}
            }
        }
        sets.sort_by(|a, b| a.len().cmp(&b.len()).then(a.lex_cmp(*b)));
        Ok(sets)
    }

    /// Searches `price_set` for a gross-substitutes violation. `true` only
    /// means none was found on the supplied vectors.
    pub fn check_gross_substitutes(&self, price_set: &[Vec<Money>]) -> Result<bool> {
        let demands = price_set
            .iter()
            .map(|p| self.demand_sets(p))
            .collect::<Result<Vec<_>>>()?;
        for (a, p) in price_set.iter().enumerate() {
            for (b, q) in price_set.iter().enumerate() {
                if a == b || !p.iter().zip(q).all(|(x, y)| y >= x) {
                    continue;
                }
                let unchanged = ItemSet::from_items((0..p.len()).filter(|&j| p[j] == q[j]));
                for s in &demands[a] {
                    let keep = s.intersection(unchanged);
                    if !demands[b].iter().any(|t| keep.is_subset(*t)) {
                        return Ok(false);
                    }
                }
            }
        }
        Ok(true)
    }

    /// Price vectors over every item drawn from the distinct item values,
    /// the midpoints between consecutive values, and one level above the top.
    pub fn default_gs_price_grid(&self) -> Result<Vec<Vec<Money>>> {
        let m = self.num_items();
        let mut levels: Vec<Money> = self.item_values();
        if let Valuation::Table { values } = self {
            levels.extend(values.iter().copied());
        }
        levels.push(Money::ZERO);
        levels.sort();
        levels.dedup();
        let mut with_mid = Vec::with_capacity(levels.len() * 2 + 1);
        for w in levels.windows(2) {
            with_mid.push(w[0]);
            with_mid.push((w[0] + w[1]).halve());
        }
        let top = *levels.last().unwrap_or(&Money::ZERO);
        with_mid.push(top);
        with_mid.push(top + Money::from_int(1));
        with_mid.dedup();
        let count = (with_mid.len() as f64).powi(m as i32);
        if count > 50_000.0 {
            return Err(Error::capacity(format!("{count} price vectors in the default grid")));
        }
        let mut grid = vec![Vec::new()];
        for _ in 0..m {
            grid = grid
                .into_iter()
                .flat_map(|prefix| {
                    with_mid.iter().map(move |&l| {
                        let mut v = prefix.clone();
                        v.push(l);
                        v
                    })
                })
                .collect();
        }
        Ok(grid)
    }

    /// Re-indexes items: `new_index[old] = new`.
    pub fn permuted(&self, new_index: &[usize]) -> Valuation {
        let perm_vec = |values: &[Money]| {
            let mut out = vec![Money::ZERO; values.len()];
            for (old, &v) in values.iter().enumerate() {
                out[new_index[old]] = v;
            }
            out
        };
        let perm_set = |s: ItemSet| ItemSet::from_items(s.iter().map(|j| new_index[j]));
        match self {
            Valuation::Additive { values } => Valuation::Additive { values: perm_vec(values) },
            Valuation::UnitDemand { values } => Valuation::UnitDemand { values: perm_vec(values) },
            Valuation::SingleValuedUd { value, interest, num_items } => Valuation::SingleValuedUd {
                value: *value,
                interest: perm_set(*interest),
                num_items: *num_items,
            },
            Valuation::BudgetAdditive { values, cap } => {
                Valuation::BudgetAdditive { values: perm_vec(values), cap: *cap }
            }
            Valuation::KCapacitated { values, k } => {
                Valuation::KCapacitated { values: perm_vec(values), k: *k }
            }
            Valuation::Table { values } => {
                let mut out = vec![Money::ZERO; values.len()];
                for (mask, &v) in values.iter().enumerate() {
                    out[perm_set(ItemSet(mask as u64)).0 as usize] = v;
                }
                Valuation::Table { values: out }
            }
        }
    }

    pub fn to_json(&self, items: &[String]) -> ValuationJson {
        let named = |values: &[Money]| -> BTreeMap<String, Money> {
            values
                .iter()
                .enumerate()
                .filter(|(_, v)| !v.is_zero())
                .map(|(j, v)| (items[j].clone(), *v))
                .collect()
        };
        let names = |s: ItemSet| s.iter().map(|j| items[j].clone()).collect::<Vec<_>>();
        let mut out = ValuationJson { kind: self.kind(), ..Default::default() };
        match self {
            Valuation::Additive { values } | Valuation::UnitDemand { values } => {
                out.values = Some(named(values))
            }
            Valuation::SingleValuedUd { value, interest, .. } => {
                out.value = Some(*value);
                out.interest = Some(names(*interest));
            }
            Valuation::BudgetAdditive { values, cap } => {
                out.values = Some(named(values));
                out.cap = Some(*cap);
            }
            Valuation::KCapacitated { values, k } => {
                out.values = Some(named(values));
                out.k = Some(*k);
            }
            Valuation::Table { values } => {
                out.entries = Some(
                    values
                        .iter()
                        .enumerate()
                        .skip(1)
                        .map(|(mask, v)| TableEntry { items: names(ItemSet(mask as u64)), value: *v })
                        .collect(),
                )
            }
        }
        out
    }

    pub fn from_json(json: &ValuationJson, items: &[String], path: &str) -> Result<Valuation> {
        let m = items.len();
        let index = |name: &str, at: &str| -> Result<usize> {
            items
                .iter()
                .position(|i| i == name)
                .ok_or_else(|| Error::schema(at, format!("unknown item {name:?}")))
        };
        let per_item = |field: &Option<BTreeMap<String, Money>>| -> Result<Vec<Money>> {
            let map = field
                .as_ref()
                .ok_or_else(|| Error::schema(format!("{path}.values"), "missing field"))?;
            let mut out = vec![Money::ZERO; m];
            for (name, v) in map {
                out[index(name, &format!("{path}.values.{name}"))?] = *v;
            }
            Ok(out)
        };
        let required = |field: &str| Error::schema(format!("{path}.{field}"), "missing field");
        let v = match json.kind {
            ValuationKind::Additive => Valuation::Additive { values: per_item(&json.values)? },
            ValuationKind::UnitDemand => Valuation::UnitDemand { values: per_item(&json.values)? },
            ValuationKind::SingleValuedUd => {
                let names = json.interest.as_ref().ok_or_else(|| required("interest"))?;
                let mut interest = ItemSet::EMPTY;
                for n in names {
                    interest = interest.with(index(n, &format!("{path}.interest"))?);
                }
                Valuation::SingleValuedUd {
                    value: json.value.ok_or_else(|| required("value"))?,
                    interest,
                    num_items: m,
                }
            }
            ValuationKind::BudgetAdditive => Valuation::BudgetAdditive {
                values: per_item(&json.values)?,
                cap: json.cap.ok_or_else(|| required("cap"))?,
            },
            ValuationKind::KCapacitated => Valuation::KCapacitated {
                values: per_item(&json.values)?,
                k: json.k.ok_or_else(|| required("k"))?,
            },
            ValuationKind::Table => {
                if m > MAX_EXHAUSTIVE_ITEMS {
                    return Err(Error::capacity(format!("table valuation over {m} items")));
                }
                let entries = json.entries.as_ref().ok_or_else(|| required("entries"))?;
                let mut values = vec![None; 1 << m];
                values[0] = Some(Money::ZERO);
                for (e_idx, e) in entries.iter().enumerate() {
                    let mut s = ItemSet::EMPTY;
                    for n in &e.items {
                        s = s.with(index(n, &format!("{path}.entries[{e_idx}]"))?);
                    }
                    values[s.0 as usize] = Some(e.value);
                }
                let values = values
                    .into_iter()
                    .enumerate()
                    .map(|(mask, v)| {
                        v.ok_or_else(|| {
                            Error::schema(
                                format!("{path}.entries"),
                                format!("no entry for subset {:?}", ItemSet(mask as u64)),
                            )
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Valuation::Table { values }
            }
        };
        v.validate().map_err(|e| Error::schema(path, e.to_string()))?;
        Ok(v)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValuationJson {
    pub kind: ValuationKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<BTreeMap<String, Money>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Money>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interest: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<Money>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entries: Option<Vec<TableEntry>>,
}


#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub items: Vec<String>,
    pub value: Money,
}
