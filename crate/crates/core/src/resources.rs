//! Resource vectors: named, integer quantities such as cores or memory.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// A mapping from resource-type name to a non-negative integer quantity.
///
/// Missing keys read as zero, so two vectors with different key sets can
/// still be compared and combined componentwise. Keys are kept sorted, which
/// makes iteration order (and therefore every output derived from it)
/// deterministic.
#[derive(Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResourceVector(BTreeMap<String, u64>);

impl ResourceVector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Quantity of `kind`, zero when absent.
    pub fn get(&self, kind: &str) -> u64 {
        self.0.get(kind).copied().unwrap_or(0)
    }

    /// Sets `kind` to `qty`. A zero quantity removes the key so that
    /// equality does not depend on explicit zeros.
    pub fn set(&mut self, kind: impl Into<String>, qty: u64) {
        let kind = kind.into();
        if qty == 0 {
            self.0.remove(&kind);
        } else {
            self.0.insert(kind, qty);
        }
    }

    pub fn with(mut self, kind: impl Into<String>, qty: u64) -> Self {
        self.set(kind, qty);
        self
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn kinds(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn is_zero(&self) -> bool {
        self.0.values().all(|&v| v == 0)
    }

    pub fn has_positive(&self) -> bool {
        self.0.values().any(|&v| v > 0)
    }

    /// `true` when every component of `self` is at most the matching
    /// component of `other`.
    pub fn fits_within(&self, other: &ResourceVector) -> bool {
        self.iter().all(|(k, v)| v <= other.get(k))
    }

    pub fn checked_add(&self, other: &ResourceVector) -> Option<ResourceVector> {
        let mut out = self.clone();
        for (k, v) in other.iter() {
            let sum = out.get(k).checked_add(v)?;
            out.set(k, sum);
        }
        Some(out)
    }

    /// Componentwise subtraction; `None` if any component would go negative.
    pub fn checked_sub(&self, other: &ResourceVector) -> Option<ResourceVector> {
        let mut out = self.clone();
        for (k, v) in other.iter() {
            let diff = out.get(k).checked_sub(v)?;
            out.set(k, diff);
        }
        Some(out)
    }

    pub fn saturating_sub(&self, other: &ResourceVector) -> ResourceVector {
        let mut out = self.clone();
        for (k, v) in other.iter() {
            let diff = out.get(k).saturating_sub(v);
            out.set(k, diff);
        }
        out
    }

    /// Every component multiplied by `factor`.
    pub fn scaled(&self, factor: u64) -> ResourceVector {
        let mut out = ResourceVector::new();
        for (k, v) in self.iter() {
            out.set(k, v.saturating_mul(factor));
        }
        out
    }

    /// `true` if both vectors hold a positive quantity of some common kind.
    pub fn overlaps(&self, other: &ResourceVector) -> bool {
        self.iter().any(|(k, v)| v > 0 && other.get(k) > 0)
    }

    /// Dot product against a per-unit rate table (for example GFLOPS per core).
    pub fn dot(&self, rates: &BTreeMap<String, f64>) -> f64 {
        self.iter()
            .map(|(k, v)| v as f64 * rates.get(k).copied().unwrap_or(0.0))
            .sum()
    }
}

impl fmt::Debug for ResourceVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.0.iter()).finish()
    }
}

/// Renders as `core=4,mem=1000`, the format used in result files.
impl fmt::Display for ResourceVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (k, v) in self.iter() {
            if !first {
                f.write_str(",")?;
            }
            first = false;
            write!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

impl<K: Into<String>> FromIterator<(K, u64)> for ResourceVector {
    fn from_iter<I: IntoIterator<Item = (K, u64)>>(iter: I) -> Self {
        let mut out = ResourceVector::new();
        for (k, v) in iter {
            out.set(k, v);
        }
        out
    }
}

impl std::str::FromStr for ResourceVector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = ResourceVector::new();
        if s.is_empty() {
            return Ok(out);
        }
        for part in s.split(',') {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| format!("expected kind=qty, found {part:?}"))?;
            let v: u64 = v.parse().map_err(|e| format!("bad quantity in {part:?}: {e}"))?;
            out.set(k, v);
        }
        Ok(out)
    }
}
