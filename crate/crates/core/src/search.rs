//! Greedy coordinate search over scale-range bounds.
//!
//! Starting from the initial range, the search alternates between sweeping
//! the lower bound with the upper bound fixed and sweeping the upper bound
//! with the lower bound fixed, keeping the best AP of each sweep, until a
//! full alternation moves neither bound. Every range is evaluated at most
//! once.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::SearchError;
use crate::geometry::ScaleRange;

/// Which candidates a sweep visits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepPolicy {
    /// Lower-bound sweeps visit candidates at or above the current lower
    /// bound, upper-bound sweeps those at or below the current upper bound.
    /// Starting from the widest range the first sweeps therefore cover every
    /// candidate, and later sweeps only try to narrow further.
    #[default]
    Narrowing,
    /// Every sweep visits every candidate.
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub lower_candidates: Vec<f64>,
    pub upper_candidates: Vec<f64>,
    pub initial: ScaleRange,
    #[serde(default)]
    pub policy: SweepPolicy,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            lower_candidates: vec![0.0, 16.0, 32.0],
            upper_candidates: vec![320.0, 496.0, 560.0, 640.0],
            initial: ScaleRange::new(0.0, 640.0).expect("static range"),
            policy: SweepPolicy::Narrowing,
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: &str| Err(SearchError::InvalidSpace(m.to_string()));
        for list in [&self.lower_candidates, &self.upper_candidates] {
            if list.is_empty() {
                return bad("candidate lists must be non-empty");
            }
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return bad("candidates must be sorted ascending without repeats");
            }
        }
        if !self.lower_candidates.contains(&self.initial.lower()) {
            return bad("initial lower bound is not a lower candidate");
        }
        if !self.upper_candidates.contains(&self.initial.upper()) {
            return bad("initial upper bound is not an upper candidate");
        }
        Ok(())
    }
}

/// Source of AP values for candidate ranges.
pub trait ApOracle {
    fn ap(&mut self, range: &ScaleRange) -> Result<f64, String>;
}

impl<F> ApOracle for F
where
    F: FnMut(&ScaleRange) -> Result<f64, String>,
{
    fn ap(&mut self, range: &ScaleRange) -> Result<f64, String> {
        self(range)
    }
}

/// Oracle backed by precomputed `(range, AP)` pairs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LookupOracle {
    entries: Vec<LookupEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookupEntry {
    pub range: ScaleRange,
    pub ap: f64,
}

impl LookupOracle {
    pub fn new(entries: Vec<LookupEntry>) -> Self {
        Self { entries }
    }

    pub fn from_pairs(pairs: &[((f64, f64), f64)]) -> Result<Self, crate::error::GeometryError> {
        let entries = pairs
            .iter()
            .map(|&((lo, hi), ap)| {
                Ok(LookupEntry {
                    range: ScaleRange::new(lo, hi)?,
                    ap,
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[LookupEntry] {
        &self.entries
    }
}

impl ApOracle for LookupOracle {
    fn ap(&mut self, range: &ScaleRange) -> Result<f64, String> {
        self.entries
            .iter()
            .find(|e| e.range == *range)
            .map(|e| e.ap)
            .ok_or_else(|| "range not in lookup table".to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub range: ScaleRange,
    pub ap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: ScaleRange,
    pub best_ap: f64,
    /// Every oracle query, in query order.
    pub trace: Vec<TraceEntry>,
}

/// Search failure carrying the trace gathered before the failing query.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchFailure {
    pub error: SearchError,
    pub partial_trace: Vec<TraceEntry>,
}

impl std::fmt::Display for SearchFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} after {} evaluations",
            self.error,
            self.partial_trace.len()
        )
    }
}

impl std::error::Error for SearchFailure {}

struct Memo<'a, O: ApOracle + ?Sized> {
    oracle: &'a mut O,
    seen: BTreeMap<(u64, u64), f64>,
    trace: Vec<TraceEntry>,
}

impl<O: ApOracle + ?Sized> Memo<'_, O> {
    fn ap(&mut self, lower: f64, upper: f64) -> Result<f64, SearchError> {
        let key = (lower.to_bits(), upper.to_bits());
        if let Some(&ap) = self.seen.get(&key) {
            return Ok(ap);
        }
        let range =
            ScaleRange::new(lower, upper).map_err(|e| SearchError::InvalidSpace(e.to_string()))?;
        let ap = self
            .oracle
            .ap(&range)
            .map_err(|reason| SearchError::Oracle {
                range: range.to_string(),
                reason,
            })?;
        self.seen.insert(key, ap);
        self.trace.push(TraceEntry { range, ap });
        Ok(ap)
    }
}

/// Runs the alternating sweep search over `space` against `oracle`.
///
/// Within a sweep the best AP wins; ties go to the smaller lower bound or
/// the larger upper bound, so equal AP never narrows the range. Candidate
/// pairs that do not form a valid range (`lower >= upper`) are skipped.
pub fn greedy_range_search<O: ApOracle + ?Sized>(
    space: &SearchSpace,
    oracle: &mut O,
) -> Result<SearchOutcome, SearchFailure> {
    let fail = |error, trace: &[TraceEntry]| SearchFailure {
        error,
        partial_trace: trace.to_vec(),
    };
    space.validate().map_err(|e| fail(e, &[]))?;
    let mut memo = Memo {
        oracle,
        seen: BTreeMap::new(),
        trace: Vec::new(),
    };
    let (mut lower, mut upper) = (space.initial.lower(), space.initial.upper());
    let mut best_ap = memo.ap(lower, upper).map_err(|e| fail(e, &memo.trace))?;

    loop {
        let mut moved = false;

        // Lower-bound sweep, ascending so the first maximum is the smallest bound.
        let lowers: Vec<f64> = space
            .lower_candidates
            .iter()
            .copied()
            .filter(|&l| l < upper)
            .filter(|&l| space.policy == SweepPolicy::Exhaustive || l >= lower)
            .collect();
        let mut sweep_best = (lower, best_ap);
        for l in lowers {
            let ap = memo.ap(l, upper).map_err(|e| fail(e, &memo.trace))?;
            if ap > sweep_best.1 || (ap == sweep_best.1 && l < sweep_best.0) {
                sweep_best = (l, ap);
            }
        }
        if sweep_best.0 != lower {
            (lower, best_ap) = sweep_best;
            moved = true;
        }

        // Upper-bound sweep, descending so the first maximum is the largest bound.
        let uppers: Vec<f64> = space
            .upper_candidates
            .iter()
            .rev()
            .copied()
            .filter(|&u| u > lower)
            .filter(|&u| space.policy == SweepPolicy::Exhaustive || u <= upper)
            .collect();
        let mut sweep_best = (upper, best_ap);
        for u in uppers {
            let ap = memo.ap(lower, u).map_err(|e| fail(e, &memo.trace))?;
            if ap > sweep_best.1 || (ap == sweep_best.1 && u > sweep_best.0) {
                sweep_best = (u, ap);
            }
        }
        if sweep_best.0 != upper {
            (upper, best_ap) = sweep_best;
            moved = true;
        }

        if !moved {
            break;
        }
    }

    Ok(SearchOutcome {
        best: ScaleRange::new(lower, upper).expect("search only visits valid ranges"),
        best_ap,
        trace: memo.trace,
    })
}
