//! System configuration: the synthetic machine a simulation runs on.
//!
//! The file format is a JSON object:
//!
//! ```json
//! {
//!   "system_name": "Seth - HPC2N",
//!   "start_time": 1027839845,
//!   "equivalence": { "processor": { "core": 2 } },
//!   "groups": { "g0": { "core": 4, "mem": 1000000 } },
//!   "resources": { "g0": 120 }
//! }
//! ```
//!
//! `groups` gives the per-node capacity of each node group, `resources` the
//! number of nodes in each group. Group declaration order is significant: it
//! fixes node order in the pool, which first-fit allocation depends on.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::resources::ResourceVector;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        path: path.into(),
        message: message.into(),
    }
}

/// How a trace column maps onto a machine resource type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Equivalence {
    pub resource: String,
    /// Units of `resource` per unit of the trace column. Always at least 1.
    pub multiplier: u64,
}

/// Trace column name (`"processor"`, `"memory"`) to resource mapping.
pub type EquivalenceMap = BTreeMap<String, Equivalence>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeGroup {
    pub name: String,
    pub capacity: ResourceVector,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemConfig {
    pub system_name: String,
    /// Epoch seconds of trace time zero.
    pub start_time: i64,
    pub equivalence: EquivalenceMap,
    /// In declaration order.
    pub groups: Vec<NodeGroup>,
}

impl SystemConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Parses and validates a configuration document.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let root: Value = serde_json::from_str(text)?;
        let root = root
            .as_object()
            .ok_or_else(|| invalid("$", "expected an object"))?;

        let system_name = match root.get("system_name") {
            Some(Value::String(s)) => s.clone(),
            Some(_) => return Err(invalid("system_name", "expected a string")),
            None => String::new(),
        };
        let start_time = match root.get("start_time") {
            Some(v) => v
                .as_i64()
                .ok_or_else(|| invalid("start_time", "expected an integer"))?,
            None => 0,
        };

        let mut equivalence = EquivalenceMap::new();
        if let Some(v) = root.get("equivalence") {
            let obj = v
                .as_object()
                .ok_or_else(|| invalid("equivalence", "expected an object"))?;
            for (column, target) in obj {
                let path = format!("equivalence.{column}");
                let target = target
                    .as_object()
                    .ok_or_else(|| invalid(&path, "expected an object"))?;
                if target.len() != 1 {
                    return Err(invalid(&path, "expected exactly one resource type"));
                }
                let (resource, mult) = target.iter().next().expect("len checked");
                let multiplier = positive_int(mult, &format!("{path}.{resource}"))?;
                equivalence.insert(
                    column.clone(),
                    Equivalence {
                        resource: resource.clone(),
                        multiplier,
                    },
                );
            }
        }

        let groups_obj = object_field(root, "groups")?;
        let counts_obj = object_field(root, "resources")?;

        let mut capacities: Vec<(String, ResourceVector)> = Vec::new();
        for (name, caps) in groups_obj {
            let path = format!("groups.{name}");
            let caps = caps
                .as_object()
                .ok_or_else(|| invalid(&path, "expected an object of integers"))?;
            let mut capacity = ResourceVector::new();
            for (kind, qty) in caps {
                let qty = qty.as_u64().ok_or_else(|| {
                    invalid(
                        format!("{path}.{kind}"),
                        "expected a non-negative integer quantity",
                    )
                })?;
                capacity.set(kind.clone(), qty);
            }
            if !capacity.has_positive() {
                return Err(invalid(&path, "capacity has no positive resource"));
            }
            capacities.push((name.clone(), capacity));
        }

        for name in counts_obj.keys() {
            if !capacities.iter().any(|(g, _)| g == name) {
                return Err(invalid(
                    format!("resources.{name}"),
                    "references an undefined group",
                ));
            }
        }

        let mut groups = Vec::new();
        for (name, capacity) in capacities {
            // A group declared but not counted contributes no nodes.
            let Some(count) = counts_obj.get(&name) else {
                continue;
            };
            let count = positive_int(count, &format!("resources.{name}"))?;
            groups.push(NodeGroup {
                name,
                capacity,
                count,
            });
        }
        if groups.is_empty() {
            return Err(invalid("resources", "system has no nodes"));
        }

        Ok(SystemConfig {
            system_name,
            start_time,
            equivalence,
            groups,
        })
    }

    /// Renders the configuration back into its JSON form.
    pub fn to_json(&self) -> String {
        let mut eq = Map::new();
        for (col, e) in &self.equivalence {
            let mut inner = Map::new();
            inner.insert(e.resource.clone(), Value::from(e.multiplier));
            eq.insert(col.clone(), Value::Object(inner));
        }
        let mut groups = Map::new();
        let mut counts = Map::new();
        for g in &self.groups {
            let caps: Map<String, Value> = g
                .capacity
                .iter()
                .map(|(k, v)| (k.to_string(), Value::from(v)))
                .collect();
            groups.insert(g.name.clone(), Value::Object(caps));
            counts.insert(g.name.clone(), Value::from(g.count));
        }
        let mut root = Map::new();
        root.insert("system_name".into(), Value::from(self.system_name.clone()));
        root.insert("start_time".into(), Value::from(self.start_time));
        root.insert("equivalence".into(), Value::Object(eq));
        root.insert("groups".into(), Value::Object(groups));
        root.insert("resources".into(), Value::Object(counts));
        serde_json::to_string_pretty(&Value::Object(root)).expect("serializable")
    }

    pub fn node_count(&self) -> u64 {
        self.groups.iter().map(|g| g.count).sum()
    }

    /// Σ over groups of `count × capacity`.
    pub fn total_capacity(&self) -> ResourceVector {
        self.groups.iter().fold(ResourceVector::new(), |acc, g| {
            acc.checked_add(&g.capacity.scaled(g.count))
                .expect("capacity overflow")
        })
    }

    /// Short stable fingerprint of the configuration, used in output footers.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        let mut out = String::with_capacity(16);
        for b in &digest[..8] {
            write!(out, "{b:02x}").expect("write to string");
        }
        out
    }
}

fn object_field<'a>(root: &'a Map<String, Value>, key: &str) -> Result<&'a Map<String, Value>, ConfigError> {
    root.get(key)
        .ok_or_else(|| invalid(key, "missing field"))?
        .as_object()
        .ok_or_else(|| invalid(key, "expected an object"))
}

fn positive_int(v: &Value, path: &str) -> Result<u64, ConfigError> {
    match v.as_u64() {
        Some(n) if n > 0 => Ok(n),
        _ => Err(invalid(path, "expected a positive integer")),
    }
}

/// The configuration of the Seth cluster at HPC2N, used throughout the
/// documentation and tests.
pub const SETH_CONFIG_JSON: &str = r#"{
    "system_name": "Seth - HPC2N",
    "start_time": 1027839845,
    "equivalence": {
        "processor": {
            "core": 2
        }
    },
    "groups": {
        "g0": {
            "core": 4,
            "mem": 1000000
        }
    },
    "resources": {
        "g0": 120
    }
}"#;

pub fn seth_config() -> SystemConfig {
    SystemConfig::from_json(SETH_CONFIG_JSON).expect("built-in config is valid")
}
