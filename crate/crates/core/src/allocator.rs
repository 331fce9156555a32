//! Per-QI split of the subcarrier budget between sensing and communication.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Which function is served first under contention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AllocationMode {
    /// Communication priority.
    Cp,
    /// Sensing priority.
    Sp,
    /// Fixed half split.
    Equal,
}

impl AllocationMode {
    pub const ALL: [AllocationMode; 3] = [AllocationMode::Cp, AllocationMode::Sp, AllocationMode::Equal];
}

impl fmt::Display for AllocationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AllocationMode::Cp => "cp",
            AllocationMode::Sp => "sp",
            AllocationMode::Equal => "equal",
        })
    }
}

impl FromStr for AllocationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cp" => Ok(AllocationMode::Cp),
            "sp" => Ok(AllocationMode::Sp),
            "equal" => Ok(AllocationMode::Equal),
            other => Err(Error::Config(format!("unknown allocation mode `{other}`"))),
        }
    }
}

/// Granted subcarriers together with the demands that produced them.
///
/// Demands above the budget encode an unreachable rate (communication) or an
/// unreachable accuracy (sensing).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationDecision {
    pub n_s: usize,
    pub n_c: usize,
    pub demand_s: u64,
    pub demand_c: u64,
    pub mode: AllocationMode,
    pub feasible_s: bool,
    pub feasible_c: bool,
}

/// Serves `first` fully when it fits, then gives `second` what remains.
fn prioritized(capacity: usize, first: u64, second: u64) -> (usize, usize) {
    let cap = capacity as u64;
    if first > cap {
        (capacity, 0)
    } else if first.saturating_add(second) > cap {
        (first as usize, (cap - first) as usize)
    } else {
        (first as usize, second as usize)
    }
}

pub fn allocate(capacity: usize, demand_c: u64, demand_s: u64, mode: AllocationMode) -> AllocationDecision {
    let (n_c, n_s) = match mode {
        AllocationMode::Cp => prioritized(capacity, demand_c, demand_s),
        AllocationMode::Sp => {
            let (s, c) = prioritized(capacity, demand_s, demand_c);
            (c, s)
        }
        AllocationMode::Equal => (capacity / 2, capacity / 2),
    };
    AllocationDecision {
        n_s,
        n_c,
        demand_s,
        demand_c,
        mode,
        feasible_s: n_s as u64 >= demand_s,
        feasible_c: n_c as u64 >= demand_c,
    }
}

/// Weights of the relaxed per-QI objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct P1Weights {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
}

impl Default for P1Weights {
    fn default() -> Self {
        Self {
            alpha1: 0.6,
            alpha2: 0.1,
            alpha3: 0.3,
        }
    }
}

impl P1Weights {
    pub fn new(alpha1: f64, alpha2: f64, alpha3: f64) -> crate::Result<Self> {
        for a in [alpha1, alpha2, alpha3] {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Config(format!("objective weight {a} outside [0, 1]")));
            }
        }
        Ok(Self { alpha1, alpha2, alpha3 })
    }
}

/// Accuracy excess + subcarrier usage + rate shortfall. Reported per QI as a
/// diagnostic; the allocation itself is rule-based.
pub fn p1_objective(
    weights: &P1Weights,
    x_var: f64,
    xibar_sq: f64,
    n_s: usize,
    n_c: usize,
    rate: f64,
    rate_target: f64,
) -> f64 {
    weights.alpha1 * (x_var - xibar_sq).max(0.0)
        + weights.alpha2 * (n_s + n_c) as f64
        + weights.alpha3 * (rate_target - rate).max(0.0)
}
