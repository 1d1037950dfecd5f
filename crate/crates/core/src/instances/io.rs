//! Instance JSON documents.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::auction::Instance;
use crate::error::{Error, Result};
use crate::money::Money;
use crate::valuation::{Valuation, ValuationJson};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceJson {
    #[serde(default = "default_version")]
    pub schema_version: u32,
    /// Sale order.
    pub items: Vec<String>,
    pub players: Vec<String>,
    pub valuations: BTreeMap<String, ValuationJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budgets: Option<BTreeMap<String, Money>>,
    pub grid_step: Money,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra_grid_points: Vec<Money>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tie_priority: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

fn default_version() -> u32 {
    SCHEMA_VERSION
}

pub fn to_json(inst: &Instance) -> InstanceJson {
    let name = |i: usize| inst.players[i].clone();
    let default_priority: Vec<usize> = (0..inst.num_players()).collect();
    InstanceJson {
        schema_version: SCHEMA_VERSION,
        items: inst.items.clone(),
        players: inst.players.clone(),
        valuations: inst
            .valuations
            .iter()
            .enumerate()
            .map(|(i, v)| (name(i), v.to_json(&inst.items)))
            .collect(),
        budgets: inst
            .budgets
            .as_ref()
            .map(|b| b.iter().enumerate().map(|(i, x)| (name(i), *x)).collect()),
        grid_step: inst.grid_step,
        extra_grid_points: inst.extra_grid_points.clone(),
        tie_priority: (inst.tie_priority != default_priority)
            .then(|| inst.tie_priority.iter().map(|&i| name(i)).collect()),
        metadata: inst.metadata.clone(),
    }
}

pub fn from_json(doc: &InstanceJson) -> Result<Instance> {
    if doc.schema_version != SCHEMA_VERSION {
        return Err(Error::schema(
            "schema_version",
            format!("unsupported version {} (expected {SCHEMA_VERSION})", doc.schema_version),
        ));
    }
    let index = |name: &str, path: String| -> Result<usize> {
        doc.players
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| Error::schema(path, format!("unknown player {name:?}")))
    };
    for name in doc.valuations.keys() {
        index(name, format!("valuations.{name}"))?;
    }
    let valuations = doc
        .players
        .iter()
        .map(|p| {
            let path = format!("valuations.{p}");
            let v = doc.valuations.get(p).ok_or_else(|| Error::schema(&path, "missing valuation"))?;
            Valuation::from_json(v, &doc.items, &path)
        })
        .collect::<Result<Vec<_>>>()?;
    let budgets = match &doc.budgets {
        None => None,
        Some(map) => {
            for name in map.keys() {
                index(name, format!("budgets.{name}"))?;
            }
            Some(
                doc.players
                    .iter()
                    .map(|p| {
                        map.get(p)
                            .copied()
                            .ok_or_else(|| Error::schema(format!("budgets.{p}"), "missing budget"))
                    })
                    .collect::<Result<Vec<_>>>()?,
            )
        }
    };
    let tie_priority = match &doc.tie_priority {
        None => None,
        Some(names) => Some(
            names
                .iter()
                .enumerate()
                .map(|(r, n)| index(n, format!("tie_priority[{r}]")))
                .collect::<Result<Vec<_>>>()?,
        ),
    };
    let mut inst = Instance::new(
        doc.items.clone(),
        doc.players.clone(),
        valuations,
        budgets,
        doc.grid_step,
        doc.extra_grid_points.clone(),
        tie_priority,
    )
    .map_err(|e| match e {
        Error::Domain(msg) => Error::schema("$", msg),
        other => other,
    })?;
    inst.metadata = doc.metadata.clone();
    Ok(inst)
}

/// Parses an instance document, reporting the offending field on failure.
pub fn parse(text: &str) -> Result<Instance> {
    let doc: InstanceJson = serde_json::from_str(text).map_err(|e| {
        let msg = e.to_string();
        match missing_field(&msg) {
            Some(field) => Error::schema(field, msg),
            None if e.is_syntax() || e.is_eof() => Error::parse(msg),
            None => Error::schema("$", msg),
        }
    })?;
    from_json(&doc)
}

fn missing_field(msg: &str) -> Option<String> {
    let rest = msg.strip_prefix("missing field `")?;
    Some(rest[..rest.find('`')?].to_string())
}

pub fn load(path: impl AsRef<Path>) -> Result<Instance> {
    parse(&fs::read_to_string(path)?)
}

pub fn save(inst: &Instance, path: impl AsRef<Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(&to_json(inst)).expect("instance documents serialize");
    fs::write(path, text + "\n")?;
    Ok(())
}
