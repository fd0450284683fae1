//! Ground truth for tests: exhaustive association search, power-shift
//! cycles and optimality certificates.

use std::collections::HashMap;

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use serde::{Deserialize, Serialize};

use crate::association::{associate, for_each_cc, Association, CcVector, PairOrders};
use crate::error::{Error, Result};
use crate::model::{evaluate, received_power, received_power_slope, Allocation, Instance, Tolerances};
use crate::solver::{solve_fixed, FixedAssocProblem, KktResiduals};

/// Largest instance [`brute_force`] accepts.
pub const BRUTE_MAX_BS: usize = 4;
pub const BRUTE_MAX_UE: usize = 6;

/// Ratio gap below which a cycle counts as a tie.
const TIE_RATIO: f64 = 1e-12;

/// A closed alternating walk over positive cells of X.
///
/// Consecutive cells `cells[2k]`, `cells[2k+1]` share a UE; `cells[2k+1]`,
/// `cells[2k+2]` share a BS, and the last cell shares a BS with the first.
/// Moving `t` units into the first cell and balancing each UE's received
/// power and each intermediate BS's power changes Z by `t * gain`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftCycle {
    pub cells: Vec<(usize, usize)>,
    /// +1 or -1: sign applied to the per-unit changes.
    pub direction: f64,
    /// Step size, at most [`ShiftCycle::max_step`].
    pub magnitude: f64,
    /// Per-unit change of every cell for `direction = +1`.
    coefficients: Vec<f64>,
}

impl ShiftCycle {
    /// Builds the cycle for `cells` with unit direction and zero step.
    pub fn new(inst: &Instance, cells: Vec<(usize, usize)>) -> Result<Self> {
        let len = cells.len();
        if len < 4 || len % 2 != 0 {
            return Err(Error::ShiftPrecondition(format!("cycle needs an even length >= 4, got {len}")));
        }
        for k in 0..len {
            let (a, b) = (cells[k], cells[(k + 1) % len]);
            let linked = if k % 2 == 0 { a.1 == b.1 && a.0 != b.0 } else { a.0 == b.0 && a.1 != b.1 };
            if !linked {
                return Err(Error::ShiftPrecondition(format!("cells {a:?} and {b:?} do not alternate")));
            }
            if inst.gamma(a.0, a.1) <= 0.0 {
                return Err(Error::ShiftPrecondition(format!("cell {a:?} has no link")));
            }
        }
        let mut coefficients = vec![1.0; len];
        for k in 1..len {
            coefficients[k] = if k % 2 == 1 {
                let (p, c) = (cells[k - 1], cells[k]);
                -coefficients[k - 1] * inst.gamma(p.0, p.1) / inst.gamma(c.0, c.1)
            } else {
                -coefficients[k - 1]
            };
        }
        Ok(Self {
            cells,
            direction: 1.0,
            magnitude: 0.0,
            coefficients,
        })
    }

    /// Change of Z per unit step in the +1 direction.
    pub fn unit_gain(&self) -> f64 {
        self.coefficients.iter().sum()
    }

    /// Change of Z for the current direction and magnitude.
    pub fn delta_z(&self) -> f64 {
        self.direction * self.magnitude * self.unit_gain()
    }

    /// Change applied to cell `k`.
    pub fn delta(&self, k: usize) -> f64 {
        self.direction * self.magnitude * self.coefficients[k]
    }

    /// Largest step keeping every cell nonnegative, and the cell that binds.
    pub fn max_step(&self, alloc: &Allocation) -> (f64, usize) {
        let mut best = (f64::INFINITY, 0);
        for (k, &(i, j)) in self.cells.iter().enumerate() {
            let c = self.direction * self.coefficients[k];
            if c < 0.0 {
                let s = alloc.x[i][j].max(0.0) / -c;
                if s < best.0 {
                    best = (s, k);
                }
            }
        }
        best
    }
}

fn check_rates(inst: &Instance, alloc: &Allocation, tol: &Tolerances) -> Result<()> {
    let ev = evaluate(inst, alloc)?;
    for (j, r) in ev.rate_residuals.iter().enumerate() {
        let need = received_power(inst.rate(j), alloc.y[j]);
        if !(r.abs() <= tol.rate * need.max(1e-300)) {
            return Err(Error::ShiftPrecondition(format!("UE {j} misses its rate by {r:e}")));
        }
    }
    Ok(())
}

/// Finds a cycle among the positive cells of X.
///
/// Rows and columns with fewer than two positive cells are peeled away
/// repeatedly; whatever remains contains a cycle, which a depth-first walk
/// extracts. Every cycle either lowers Z in one of its two directions or,
/// on a tie, zeroes a cell at no cost, so `None` means the support of X is
/// a forest.
pub fn find_improving_shift(inst: &Instance, alloc: &Allocation) -> Result<Option<ShiftCycle>> {
    let tol = Tolerances::default();
    check_rates(inst, alloc, &tol)?;
    let (m, n) = (inst.num_bs(), inst.num_ue());
    let mut alive = vec![vec![false; n]; m];
    for (i, row) in alive.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = alloc.x[i][j] > tol.zero && inst.gamma(i, j) > 0.0;
        }
    }
    peel(&mut alive);
    let Some(cells) = extract_cycle(&alive) else {
        return Ok(None);
    };
    let mut cycle = ShiftCycle::new(inst, cells)?;
    let gain = cycle.unit_gain();
    let scale = cycle.coefficients.iter().map(|c| c.abs()).fold(0.0, f64::max);
    cycle.direction = if gain.abs() <= TIE_RATIO * scale || gain < 0.0 { 1.0 } else { -1.0 };
    let (mut step, _) = cycle.max_step(alloc);
    if gain.abs() <= TIE_RATIO * scale && !(step > 0.0 && step.is_finite()) {
        cycle.direction = -1.0;
        step = cycle.max_step(alloc).0;
    }
    cycle.magnitude = step;
    Ok(Some(cycle))
}

fn peel(alive: &mut [Vec<bool>]) {
    let (m, n) = (alive.len(), alive.first().map_or(0, Vec::len));
    loop {
        let mut changed = false;
        for i in 0..m {
            if (0..n).filter(|&j| alive[i][j]).count() == 1 {
                alive[i].iter_mut().for_each(|c| *c = false);
                changed = true;
            }
        }
        for j in 0..n {
            if (0..m).filter(|&i| alive[i][j]).count() == 1 {
                (0..m).for_each(|i| alive[i][j] = false);
                changed = true;
            }
        }
        if !changed {
            return;
        }
    }
}

/// Walks the bipartite graph left after peeling, where every vertex has
/// degree zero or at least two, until a vertex repeats.
fn extract_cycle(alive: &[Vec<bool>]) -> Option<Vec<(usize, usize)>> {
    let (m, n) = (alive.len(), alive.first().map_or(0, Vec::len));
    let start = (0..m).find(|&i| alive[i].iter().any(|&c| c))?;
    // Vertices: BS i as i, UE j as m + j.
    let mut path = vec![start];
    let mut index: HashMap<usize, usize> = HashMap::from([(start, 0)]);
    loop {
        let cur = *path.last().unwrap();
        let prev = (path.len() >= 2).then(|| path[path.len() - 2]);
        let next = if cur < m {
            (0..n).map(|j| m + j).find(|&v| alive[cur][v - m] && Some(v) != prev)
        } else {
            (0..m).find(|&i| alive[i][cur - m] && Some(i) != prev)
        }?;
        if let Some(&at) = index.get(&next) {
            let mut ring: Vec<usize> = path[at..].to_vec();
            if ring[0] >= m {
                ring.rotate_left(1);
            }
            let k = ring.len() / 2;
            let mut cells = Vec::with_capacity(ring.len());
            for s in 0..k {
                let (b, u, b_next) = (ring[2 * s], ring[2 * s + 1] - m, ring[(2 * s + 2) % ring.len()]);
                cells.push((b, u));
                cells.push((b_next, u));
            }
            return Some(cells);
        }
        index.insert(next, path.len());
        path.push(next);
    }
}

/// Applies `cycle` to `alloc`. The cell that limits the step is set to zero
/// exactly when the step is maximal.
pub fn apply_shift(alloc: &Allocation, cycle: &ShiftCycle) -> Result<Allocation> {
    if !(cycle.magnitude >= 0.0) {
        return Err(Error::ShiftPrecondition(format!("negative step {}", cycle.magnitude)));
    }
    let (max_step, binding) = cycle.max_step(alloc);
    if cycle.magnitude > max_step * (1.0 + 1e-12) {
        let (i, j) = cycle.cells[binding];
        return Err(Error::ShiftStep {
            step: cycle.magnitude,
            max_step,
            binding: format!("x[{i}][{j}]"),
        });
    }
    let mut x = alloc.x.clone();
    for (k, &(i, j)) in cycle.cells.iter().enumerate() {
        x[i][j] += cycle.delta(k);
    }
    if cycle.magnitude >= max_step * (1.0 - 1e-12) && max_step.is_finite() {
        let (i, j) = cycle.cells[binding];
        x[i][j] = 0.0;
    }
    for v in x.iter_mut().flatten() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let row = cycle.cells[0].0;
    let p: f64 = x[row].iter().sum();
    if p > 1.0 + Tolerances::default().eq && p > alloc.bs_power(row) {
        return Err(Error::ShiftStep {
            step: cycle.magnitude,
            max_step,
            binding: format!("budget of BS {row}"),
        });
    }
    Ok(Allocation::new(x, alloc.y.clone(), alloc.feasible))
}

/// Cheapest power for fixed bandwidths, as a linear program.
/// `None` when no X meets the rates within the budgets.
pub fn min_power_at(inst: &Instance, y: &[f64]) -> Option<Allocation> {
    let (m, n) = (inst.num_bs(), inst.num_ue());
    if y.len() != n || y.iter().any(|v| !(*v > 0.0)) {
        return None;
    }
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let mut vars = vec![vec![None; n]; m];
    for (i, row) in vars.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            if inst.gamma(i, j) > 0.0 {
                *v = Some(lp.add_var(1.0, (0.0, 1.0)));
            }
        }
    }
    for j in 0..n {
        let need = received_power(inst.rate(j), y[j]);
        if !need.is_finite() {
            return None;
        }
        let terms: Vec<_> = (0..m).filter_map(|i| vars[i][j].map(|v| (v, inst.gamma(i, j)))).collect();
        lp.add_constraint(terms.as_slice(), ComparisonOp::Ge, need);
    }
    for row in &vars {
        let terms: Vec<_> = row.iter().flatten().map(|&v| (v, 1.0)).collect();
        if !terms.is_empty() {
            lp.add_constraint(terms.as_slice(), ComparisonOp::Le, 1.0);
        }
    }
    let sol = lp.solve().ok()?;
    let x = vars
        .iter()
        .map(|row| row.iter().map(|v| v.map_or(0.0, |v| sol[v].max(0.0))).collect())
        .collect();
    Some(Allocation::new(x, y.to_vec(), true))
}

/// Outcome of the association-free descent cross-check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossCheck {
    /// Best Z found by descent over bandwidths.
    pub z_descent: f64,
    /// The exhaustive optimum is no worse than the descent point.
    pub lower_bound_ok: bool,
    /// The descent point is within 0.1% of the exhaustive optimum.
    pub close: bool,
}

/// Result of [`brute_force_report`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BruteForceReport {
    pub alloc: Allocation,
    pub assoc: Option<Association>,
    pub cc: Option<CcVector>,
    /// CC vectors visited.
    pub candidates: usize,
    pub cross_check: Option<CrossCheck>,
}

/// Minimum Z over every CC vector.
pub fn brute_force(inst: &Instance) -> Result<Allocation> {
    brute_force_report(inst, false).map(|r| r.alloc)
}

/// Exhaustive search; with `cross_check` and M*N <= 8, also runs the
/// bandwidth-space descent.
pub fn brute_force_report(inst: &Instance, cross_check: bool) -> Result<BruteForceReport> {
    let (m, n) = (inst.num_bs(), inst.num_ue());
    if m > BRUTE_MAX_BS || n > BRUTE_MAX_UE {
        return Err(Error::SizeGuard {
            num_bs: m,
            num_ue: n,
            max_bs: BRUTE_MAX_BS,
            max_ue: BRUTE_MAX_UE,
        });
    }
    let mut best: Option<(Allocation, Association, Option<CcVector>)> = None;
    let mut candidates = 0;
    let mut consider = |alloc: Allocation, assoc: Association, cc: Option<CcVector>| {
        if alloc.feasible && best.as_ref().is_none_or(|(b, _, _)| alloc.z < b.z) {
            best = Some((alloc, assoc, cc));
        }
    };
    if m == 1 {
        let assoc = Association::from_serving(inst, &vec![vec![0]; n])?;
        candidates = 1;
        consider(solve_fixed(&FixedAssocProblem::new(inst, &assoc))?, assoc, None);
    } else {
        let orders = PairOrders::new(inst);
        let mut cache: HashMap<Association, Option<Allocation>> = HashMap::new();
        let mut vectors = Vec::new();
        for_each_cc(&orders, &vec![None; orders.num_pairs()], |cc| vectors.push(cc.clone()));
        for cc in vectors {
            candidates += 1;
            let Ok(assoc) = associate(inst, &orders, &cc) else {
                continue;
            };
            let alloc = cache
                .entry(assoc.clone())
                .or_insert_with(|| solve_fixed(&FixedAssocProblem::new(inst, &assoc)).ok())
                .clone();
            if let Some(a) = alloc {
                consider(a, assoc, Some(cc));
            }
        }
    }
    let (alloc, assoc, cc) = match best {
        Some((a, s, c)) => (a, Some(s), c),
        None => (Allocation::infeasible(m, n), None, None),
    };
    let cross_check = (cross_check && m * n <= 8).then(|| {
        let z_descent = descent(inst);
        CrossCheck {
            z_descent,
            lower_bound_ok: alloc.z <= z_descent + 1e-9,
            close: z_descent <= alloc.z * (1.0 + 1e-3),
        }
    });
    Ok(BruteForceReport {
        alloc,
        assoc,
        cc,
        candidates,
        cross_check,
    })
}

/// Multi-start pairwise-exchange descent over bandwidths, each point priced
/// by [`min_power_at`]. Returns the best Z found (`inf` if none feasible).
pub fn descent(inst: &Instance) -> f64 {
    let n = inst.num_ue();
    let value = |y: &[f64]| min_power_at(inst, y).map_or(f64::INFINITY, |a| a.z);
    let total_rate: f64 = inst.rates().iter().sum();
    let mut starts = vec![vec![1.0 / n as f64; n], inst.rates().iter().map(|r| r / total_rate).collect()];
    for k in 0..n {
        let mut y = vec![0.5 / (n as f64 - 1.0).max(1.0); n];
        y[k] = if n == 1 { 1.0 } else { 0.5 };
        starts.push(y);
    }
    let mut best = f64::INFINITY;
    for mut y in starts {
        let mut z = value(&y);
        for _sweep in 0..100 {
            let before = z;
            for a in 0..n {
                for b in (a + 1)..n {
                    // Move d from y_b to y_a, keeping both above a floor.
                    let floor = 1e-6;
                    let (lo, hi) = (-(y[a] - floor), y[b] - floor);
                    if hi <= lo {
                        continue;
                    }
                    let eval = |d: f64| {
                        let mut t = y.clone();
                        t[a] += d;
                        t[b] -= d;
                        value(&t)
                    };
                    let d = golden(eval, lo, hi);
                    let cand = eval(d);
                    if cand < z {
                        y[a] += d;
                        y[b] -= d;
                        z = cand;
                    }
                }
            }
            if !(before - z > 1e-13 * z.abs().max(1e-12)) {
                break;
            }
        }
        best = best.min(z);
    }
    best
}

fn golden(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - r * (hi - lo);
    let mut d = lo + r * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - r * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + r * (hi - lo);
            fd = f(d);
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    if fc <= fd {
        c
    } else {
        d
    }
}

/// Structural and optimality checks of an allocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifyReport {
    /// At most M-1 multi-BS UEs and at least (M-1)(N-1) zeros in X.
    pub lemma1_ok: bool,
    /// The induced clusters respect every pairwise SNR-ratio order.
    pub lemma2_ok: bool,
    pub no_improving_shift: bool,
    /// Optimality conditions of the full problem hold within 1e-6.
    pub kkt_ok: bool,
    pub kkt: KktResiduals,
}

impl CertifyReport {
    pub fn all_ok(&self) -> bool {
        self.lemma1_ok && self.lemma2_ok && self.no_improving_shift && self.kkt_ok
    }
}

/// Runs every certificate on `alloc`.
pub fn certify(inst: &Instance, alloc: &Allocation) -> CertifyReport {
    let tol = Tolerances::default();
    let (m, n) = (inst.num_bs(), inst.num_ue());
    let multi = alloc.multi_bs_ues(tol.zero).len();
    let zeros = alloc.count_zeros(tol.zero);
    let lemma1_ok = multi <= m - 1 && zeros >= (m - 1) * n.saturating_sub(1);
    let no_improving_shift = matches!(find_improving_shift(inst, alloc), Ok(None));
    let kkt = inferred_kkt(inst, alloc, &tol);
    CertifyReport {
        lemma1_ok,
        lemma2_ok: ordering_consistent(inst, alloc, &tol),
        no_improving_shift,
        kkt_ok: kkt.max() < 1e-6,
        kkt,
    }
}

/// For every BS pair, UEs served by the first BS alone have SNR ratios no
/// smaller than those served by the second alone, and at most one UE is
/// served by both, sitting between the two groups.
pub fn ordering_consistent(inst: &Instance, alloc: &Allocation, tol: &Tolerances) -> bool {
    let (m, n) = (inst.num_bs(), inst.num_ue());
    let serving: Vec<Vec<usize>> = (0..n).map(|j| alloc.serving(j, tol.zero)).collect();
    // a ranks at least as high as b on the (i, k) order.
    let before = |i: usize, k: usize, a: usize, b: usize| {
        let lhs = inst.gamma(i, a) * inst.gamma(k, b);
        let rhs = inst.gamma(i, b) * inst.gamma(k, a);
        lhs >= rhs * (1.0 - 1e-12)
    };
    for i in 0..m {
        for k in (i + 1)..m {
            let only = |bs: usize| (0..n).filter(|&j| serving[j] == [bs]).collect::<Vec<_>>();
            let (a_set, b_set) = (only(i), only(k));
            let both: Vec<usize> = (0..n).filter(|&j| serving[j].contains(&i) && serving[j].contains(&k)).collect();
            if both.len() > 1 {
                return false;
            }
            if !a_set.iter().all(|&a| b_set.iter().all(|&b| before(i, k, a, b))) {
                return false;
            }
            if let Some(&s) = both.first() {
                if !a_set.iter().all(|&a| before(i, k, a, s)) || !b_set.iter().all(|&b| before(i, k, s, b)) {
                    return false;
                }
            }
        }
    }
    true
}

/// Optimality conditions with multipliers inferred from the allocation:
/// each BS's price `mu / w_i` is the mean of `-f'(y_j) / gamma_ij` over its
/// positive cells, and `mu` is the largest such price.
pub fn inferred_kkt(inst: &Instance, alloc: &Allocation, tol: &Tolerances) -> KktResiduals {
    let (m, n) = (inst.num_bs(), inst.num_ue());
    let slope: Vec<f64> = (0..n).map(|j| -received_power_slope(inst.rate(j), alloc.y[j])).collect();
    let mut price = vec![f64::NAN; m];
    for (i, p) in price.iter_mut().enumerate() {
        let cells: Vec<f64> = (0..n)
            .filter(|&j| alloc.x[i][j] > tol.zero)
            .map(|j| slope[j] / inst.gamma(i, j))
            .collect();
        if !cells.is_empty() {
            *p = cells.iter().sum::<f64>() / cells.len() as f64;
        }
    }
    let mu = price.iter().copied().filter(|p| p.is_finite()).fold(0.0, f64::max);
    let mut res = KktResiduals::default();
    if !(mu > 0.0) {
        res.stationarity = f64::INFINITY;
        return res;
    }
    let w: Vec<f64> = price.iter().map(|&p| if p.is_finite() { mu / p } else { 1.0 }).collect();
    for i in 0..m {
        for j in 0..n {
            if inst.gamma(i, j) <= 0.0 {
                continue;
            }
            let gap = (w[i] * slope[j] / inst.gamma(i, j) - mu) / mu;
            if alloc.x[i][j] > tol.zero {
                res.stationarity = res.stationarity.max(gap.abs());
            } else {
                res.dual_feasibility = res.dual_feasibility.max(-gap);
            }
        }
        res.complementary = res.complementary.max(((w[i] - 1.0) * (1.0 - alloc.bs_power(i))).abs());
    }
    res
}
