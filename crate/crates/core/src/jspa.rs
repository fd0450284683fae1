//! Search over associations with interval pruning.
//!
//! For every BS pair, the entries of all other pairs are fixed in turn (the
//! context). Two solves with one focus BS left without a budget tell which
//! side of the pair is overloaded, and the cumulative power of the overloaded
//! BS along the pair's SNR-ratio order bounds where the pair's boundary can
//! sit at the optimum. Only boundaries inside the bounds are solved.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::association::{associate, for_each_cc, Association, CcEntry, CcVector, PairOrders};
use crate::error::Result;
use crate::model::{Allocation, Instance, Tolerances};
use crate::solver::{solve_fixed, solve_fixed_warm, FixedAssocProblem, Warm};

/// Admissible boundaries of one BS pair.
///
/// Positions count only the in-scope UEs (those not already claimed by the
/// context) along the pair's descending SNR-ratio order, starting at 1.
/// A shared UE at position `k` is admitted for `lo <= k <= hi`; a plain cut
/// after `k` in-scope UEs is admitted for `lo - 1 <= k <= hi`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairBounds {
    pub pair: (usize, usize),
    pub lo: usize,
    pub hi: usize,
    /// Both relaxed solves coincide, so the best-BS split is optimal.
    pub already_optimal: bool,
    /// The bounds could not be derived and cover every boundary.
    pub fallback: bool,
    /// In-scope UEs among the first `c` UEs of the pair order, `c = 0..=N`.
    prefix: Vec<usize>,
    /// Whether the UE at each pair-order position is in scope.
    in_scope: Vec<bool>,
}

impl PairBounds {
    fn full(pair: (usize, usize), prefix: Vec<usize>, in_scope: Vec<bool>) -> Self {
        let n = *prefix.last().unwrap_or(&0);
        Self {
            pair,
            lo: 0,
            hi: n,
            already_optimal: false,
            fallback: true,
            prefix,
            in_scope,
        }
    }

    /// Number of in-scope UEs.
    pub fn scope_len(&self) -> usize {
        *self.prefix.last().unwrap_or(&0)
    }

    /// Whether the pair entry `e` falls inside the bounds.
    pub fn admits(&self, e: CcEntry) -> bool {
        let k = self.prefix[e.cut];
        if e.shared && e.cut > 0 && self.in_scope[e.cut - 1] {
            self.lo <= k && k <= self.hi
        } else {
            k + 1 >= self.lo && k <= self.hi
        }
    }
}

/// Counters describing how much work the search did.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JspaStats {
    /// Distinct CC vectors associated and solved.
    pub evaluated: usize,
    /// CC vectors an exhaustive search would solve.
    pub unpruned: usize,
    /// Contexts whose bounds fell back to the full range.
    pub fallbacks: usize,
}

/// Best allocation found, its association and search counters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JspaOutcome {
    pub alloc: Allocation,
    pub assoc: Option<Association>,
    pub stats: JspaStats,
}

/// Memoized solves keyed by association.
#[derive(Default)]
struct SolveCache {
    fixed: HashMap<Association, Option<Allocation>>,
    relaxed: HashMap<(Association, usize), Option<Allocation>>,
    warm_fixed: Warm,
    warm_relaxed: Warm,
}

impl SolveCache {
    fn fixed(&mut self, inst: &Instance, assoc: &Association) -> Option<Allocation> {
        if let Some(hit) = self.fixed.get(assoc) {
            return hit.clone();
        }
        let out = match solve_fixed_warm(&FixedAssocProblem::new(inst, assoc), &self.warm_fixed, false) {
            Ok(s) if s.alloc.feasible => Some(s.alloc),
            Ok(_) => None,
            Err(e) => {
                log::warn!("skipping association: {e}");
                None
            }
        };
        self.fixed.insert(assoc.clone(), out.clone());
        out
    }

    fn relaxed(&mut self, inst: &Instance, assoc: &Association, bs: usize) -> Option<Allocation> {
        let key = (assoc.clone(), bs);
        if let Some(hit) = self.relaxed.get(&key) {
            return hit.clone();
        }
        let fp = FixedAssocProblem::new(inst, assoc).with_relaxed([bs]);
        let out = match solve_fixed_warm(&fp, &self.warm_relaxed, false) {
            Ok(s) if s.duals.is_some() && s.alloc.feasible => Some(s.alloc),
            _ => None,
        };
        self.relaxed.insert(key, out.clone());
        out
    }
}

/// Bounds on pair `pair`'s entry given the entries of every other pair in
/// `context` (the entry of `pair` itself is ignored).
pub fn lemma3_bounds(inst: &Instance, orders: &PairOrders, pair: usize, context: &CcVector) -> PairBounds {
    pair_bounds(inst, orders, pair, context, &mut SolveCache::default())
}

fn pair_bounds(inst: &Instance, orders: &PairOrders, pair: usize, context: &CcVector, cache: &mut SolveCache) -> PairBounds {
    let (m, n) = (inst.num_bs(), inst.num_ue());
    let (a, b) = orders.pairs()[pair];
    let tol = Tolerances::default();

    // Context serving sets for UEs the focus pair does not control.
    let mut fixed: Vec<Option<Vec<usize>>> = vec![None; n];
    for (j, slot) in fixed.iter_mut().enumerate() {
        if let Some(k) = (0..m).find(|&k| k != a && k != b && orders.strictly_prefers(context, k, j)) {
            *slot = Some(vec![k]);
        }
    }
    for (p, d) in context.designated(orders).into_iter().enumerate() {
        let Some(u) = d else { continue };
        if p == pair || matches!(&fixed[u], Some(s) if s.len() == 1) {
            continue;
        }
        let (i, k) = orders.pairs()[p];
        let s = fixed[u].get_or_insert_with(Vec::new);
        for bs in [i, k] {
            if inst.gamma(bs, u) > 0.0 && !s.contains(&bs) {
                s.push(bs);
            }
        }
    }

    let order = orders.order(pair);
    let in_scope: Vec<bool> = order.iter().map(|&j| fixed[j].is_none()).collect();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0);
    for &s in &in_scope {
        prefix.push(prefix.last().unwrap() + usize::from(s));
    }
    let scope: Vec<usize> = order.iter().copied().filter(|&j| fixed[j].is_none()).collect();
    let fallback = |why: &str| {
        log::debug!("pair ({a},{b}): bounds unavailable ({why}); using the full range");
        PairBounds::full((a, b), prefix.clone(), in_scope.clone())
    };

    let mut serving: Vec<Vec<usize>> = Vec::with_capacity(n);
    for (j, f) in fixed.iter().enumerate() {
        match f {
            Some(s) if !s.is_empty() => serving.push(s.clone()),
            Some(_) => return fallback("context leaves a UE unserved"),
            None => {
                let pick = if inst.gamma(a, j) >= inst.gamma(b, j) { a } else { b };
                if inst.gamma(pick, j) <= 0.0 {
                    return fallback("focus pair cannot reach a UE");
                }
                serving.push(vec![pick]);
            }
        }
    }
    let n0 = scope.iter().filter(|&&j| inst.gamma(a, j) >= inst.gamma(b, j)).count();
    let Ok(assoc) = Association::from_serving(inst, &serving) else {
        return fallback("context association invalid");
    };
    let ra = cache.relaxed(inst, &assoc, a);
    let rb = cache.relaxed(inst, &assoc, b);
    if ra.is_none() && rb.is_none() {
        return fallback("both relaxed solves infeasible");
    }
    // A relaxed solve fails only when the other focus BS (or a context BS)
    // cannot carry its best-BS load; the surviving solve carries the signal.
    let over1 = ra.as_ref().is_some_and(|r| r.bs_power(a) > 1.0 + tol.eq);
    let over2 = rb.as_ref().is_some_and(|r| r.bs_power(b) > 1.0 + tol.eq);
    let same = match (&ra, &rb) {
        (Some(x), Some(y)) => {
            (x.bs_power(a) - y.bs_power(a)).abs() <= tol.eq && (x.bs_power(b) - y.bs_power(b)).abs() <= tol.eq
        }
        _ => false,
    };

    let scope_power = |alloc: &Allocation, bs: usize| scope.iter().map(|&j| alloc.x[bs][j]).sum::<f64>();
    let first_cross = |r: &Allocation| {
        let mut cum = r.bs_power(a) - scope_power(r, a);
        for (k, &j) in scope.iter().enumerate() {
            cum += r.x[a][j];
            if cum > 1.0 + tol.eq {
                return k + 1;
            }
        }
        n0
    };
    let last_cross = |r: &Allocation| {
        let mut cum = r.bs_power(b) - scope_power(r, b);
        for (k, &j) in scope.iter().enumerate().rev() {
            cum += r.x[b][j];
            if cum > 1.0 + tol.eq {
                return k + 1;
            }
        }
        n0 + 1
    };
    let (lo, hi) = match (&ra, &rb, over1, over2) {
        (Some(r), _, true, false) => (first_cross(r), n0),
        (_, Some(r), false, true) => (n0 + 1, last_cross(r)),
        (Some(r1), Some(r2), true, true) => (first_cross(r1), last_cross(r2)),
        (Some(_), Some(_), false, false) => (n0, n0),
        _ => return fallback("relaxed solve infeasible without an overloaded focus BS"),
    };
    if lo > hi + 1 {
        log::warn!("pair ({a},{b}): empty boundary range [{lo}, {hi}]; using the full range");
        return fallback("empty range");
    }
    PairBounds {
        pair: (a, b),
        lo,
        hi,
        already_optimal: same && !over1 && !over2,
        fallback: false,
        prefix,
        in_scope,
    }
}

/// Number of CC vectors an exhaustive search visits.
pub fn unpruned_count(orders: &PairOrders) -> usize {
    let mut count = 0;
    for_each_cc(orders, &vec![None; orders.num_pairs()], |_| count += 1);
    count
}

/// Best allocation with search counters.
pub fn optimize_detailed(inst: &Instance) -> Result<JspaOutcome> {
    let (m, n) = (inst.num_bs(), inst.num_ue());
    if m == 1 {
        let assoc = Association::from_serving(inst, &vec![vec![0]; n])?;
        let mut alloc = solve_fixed(&FixedAssocProblem::new(inst, &assoc))?;
        if !alloc.feasible {
            alloc = Allocation::infeasible(m, n);
        }
        return Ok(JspaOutcome {
            alloc,
            assoc: Some(assoc),
            stats: JspaStats {
                evaluated: 1,
                unpruned: 1,
                fallbacks: 0,
            },
        });
    }
    let orders = PairOrders::new(inst);
    let mut cache = SolveCache::default();
    let mut stats = JspaStats::default();
    let mut bounds: HashMap<(usize, Vec<CcEntry>), PairBounds> = HashMap::new();
    let mut best: Option<(Allocation, Association)> = None;
    let mut vectors = Vec::new();
    for_each_cc(&orders, &vec![None; orders.num_pairs()], |cc| vectors.push(cc.clone()));
    stats.unpruned = vectors.len();

    for cc in vectors {
        let keys: Vec<(usize, Vec<CcEntry>)> = (0..orders.num_pairs())
            .map(|p| {
                let mut ctx = cc.entries.clone();
                ctx[p] = CcEntry::new(0, false);
                (p, ctx)
            })
            .collect();
        // Bounds already at hand reject most vectors before any new solve.
        let rejected = keys
            .iter()
            .any(|k| bounds.get(k).is_some_and(|b| !b.admits(cc.entries[k.0])));
        let admitted = !rejected
            && keys.into_iter().all(|key| {
                let p = key.0;
                let b = bounds.entry(key).or_insert_with_key(|(_, ctx)| {
                    let ctx = CcVector { entries: ctx.clone() };
                    let b = pair_bounds(inst, &orders, p, &ctx, &mut cache);
                    stats.fallbacks += usize::from(b.fallback);
                    b
                });
                b.admits(cc.entries[p])
            });
        if !admitted {
            continue;
        }
        stats.evaluated += 1;
        let Ok(assoc) = associate(inst, &orders, &cc) else {
            continue;
        };
        if let Some(alloc) = cache.fixed(inst, &assoc) {
            if best.as_ref().is_none_or(|(b, _)| alloc.z < b.z) {
                best = Some((alloc, assoc));
            }
        }
    }
    Ok(match best {
        Some((alloc, assoc)) => JspaOutcome {
            alloc,
            assoc: Some(assoc),
            stats,
        },
        None => JspaOutcome {
            alloc: Allocation::infeasible(m, n),
            assoc: None,
            stats,
        },
    })
}

/// Minimum-power allocation; `feasible = false` when no association meets
/// every budget.
pub fn optimize(inst: &Instance) -> Result<Allocation> {
    optimize_detailed(inst).map(|o| o.alloc)
}

/// Two-BS entry point; identical to [`optimize`] on two-BS instances.
pub fn optimize_two_bs(inst: &Instance) -> Result<Allocation> {
    if inst.num_bs() != 2 {
        return Err(crate::error::Error::InvalidInput(format!(
            "two-BS search called with {} BSs",
            inst.num_bs()
        )));
    }
    optimize(inst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn single_ue_best_bs_alone() {
        let inst = Instance::new(vec![vec![3.0], vec![1.0]], vec![1.0]).unwrap();
        let a = optimize_two_bs(&inst).unwrap();
        assert!(a.feasible);
        assert_relative_eq!(a.z, 1.0 / 3.0, max_relative = 1e-9);
        assert_eq!(a.x[1][0], 0.0);
    }

    #[test]
    fn single_ue_forced_split() {
        // 2^R' - 1 = 3 with gamma 2 needs 1.5 units of power.
        let inst = Instance::new(vec![vec![2.0], vec![2.0]], vec![2.0]).unwrap();
        let a = optimize_two_bs(&inst).unwrap();
        assert!(a.feasible);
        assert_relative_eq!(a.z, 1.5, max_relative = 1e-9);
        assert!(a.x[0][0] <= 1.0 + 1e-9 && a.x[1][0] <= 1.0 + 1e-9);
    }

    #[test]
    fn only_one_bs_covers() {
        let inst = Instance::new(vec![vec![0.0], vec![0.0], vec![5.0]], vec![0.5]).unwrap();
        let a = optimize(&inst).unwrap();
        assert!(a.feasible);
        assert_relative_eq!(a.z, (2f64.sqrt() - 1.0) / 5.0, max_relative = 1e-9);
    }

    #[test]
    fn light_load_is_already_optimal() {
        let inst = Instance::new(vec![vec![5.0, 1.0, 2.0], vec![1.0, 4.0, 1.5]], vec![0.1, 0.1, 0.1]).unwrap();
        let orders = PairOrders::new(&inst);
        let ctx = CcVector {
            entries: vec![CcEntry::new(0, false)],
        };
        let b = lemma3_bounds(&inst, &orders, 0, &ctx);
        assert!(!b.fallback && b.already_optimal);
        assert_eq!((b.lo, b.hi), (2, 2));
    }

    #[test]
    fn overloaded_bs_narrows_range() {
        let inst = Instance::new(
            vec![vec![9.0, 8.0, 7.0, 6.0], vec![0.9, 0.9, 1.0, 1.0]],
            vec![1.5, 1.5, 1.5, 1.5],
        )
        .unwrap();
        let orders = PairOrders::new(&inst);
        let ctx = CcVector {
            entries: vec![CcEntry::new(0, false)],
        };
        let b = lemma3_bounds(&inst, &orders, 0, &ctx);
        assert!(!b.fallback);
        assert!(b.hi <= 4 && b.lo >= 1, "{b:?}");
    }
}
