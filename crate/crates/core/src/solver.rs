//! Convex solve for a fixed UE-BS association.
//!
//! With serving sets fixed, the problem is convex once the rate equalities are
//! read as `>=`. Its dual has one spectrum price `mu` and one weight
//! `w_i = 1 + lambda_i` per BS. A UE served by several BSs is only split
//! between BSs that tie on `w_i / gamma_ij`, so BSs linked by shared UEs form
//! components whose weights move together by fixed ratios `rho_i`. Each
//! component collapses to a one-dimensional price `theta`, and the spectrum
//! price is a one-dimensional root of `sum_j y_j = 1`. Which shared links carry
//! power is found by trying supports in order of how many links they drop,
//! after the support that worked for the previous related solve.

use std::cell::{Cell, RefCell};
use std::collections::BTreeSet;
use std::f64::consts::LN_2;

use lambert_w::lambert_w0;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::association::Association;
use crate::error::{Error, Result};
use crate::model::{marginal_gap, received_power_slope, Allocation, Instance, Tolerances, MAX_EXPONENT};
use crate::roots::{bracket, newton_bracketed};

/// Relative tolerance for weight ties between BSs.
const TIE_TOL: f64 = 1e-10;
/// Cap on the number of link supports tried per solve.
const MAX_SUPPORTS: usize = 1 << 16;

/// How a BS's power budget enters the problem.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BudgetKind {
    /// `sum_j x_ij <= b`.
    Inequality,
    /// `sum_j x_ij = b`.
    Capped,
    /// No budget.
    Relaxed,
}

/// A fixed-association problem.
#[derive(Clone, Debug)]
pub struct FixedAssocProblem<'a> {
    pub inst: &'a Instance,
    pub assoc: &'a Association,
    /// BSs whose budget must be spent exactly.
    pub capped: BTreeSet<usize>,
    /// BSs without a budget.
    pub relaxed: BTreeSet<usize>,
    /// Common budget level `b` (1 for the normalized problem).
    pub budget: f64,
    pub tol: Tolerances,
}

impl<'a> FixedAssocProblem<'a> {
    pub fn new(inst: &'a Instance, assoc: &'a Association) -> Self {
        Self {
            inst,
            assoc,
            capped: BTreeSet::new(),
            relaxed: BTreeSet::new(),
            budget: 1.0,
            tol: Tolerances::default(),
        }
    }

    pub fn with_capped(mut self, capped: impl IntoIterator<Item = usize>) -> Self {
        self.capped = capped.into_iter().collect();
        self
    }

    pub fn with_relaxed(mut self, relaxed: impl IntoIterator<Item = usize>) -> Self {
        self.relaxed = relaxed.into_iter().collect();
        self
    }

    pub fn with_budget(mut self, budget: f64) -> Self {
        self.budget = budget;
        self
    }

    pub fn with_tolerances(mut self, tol: Tolerances) -> Self {
        self.tol = tol;
        self
    }

    /// Budget kind of every BS.
    pub fn kinds(&self) -> Vec<BudgetKind> {
        (0..self.inst.num_bs())
            .map(|i| {
                if self.relaxed.contains(&i) {
                    BudgetKind::Relaxed
                } else if self.capped.contains(&i) {
                    BudgetKind::Capped
                } else {
                    BudgetKind::Inequality
                }
            })
            .collect()
    }

    fn validated_serving(&self) -> Result<Vec<Vec<usize>>> {
        let (m, n) = (self.inst.num_bs(), self.inst.num_ue());
        if self.assoc.num_bs() != m {
            return Err(Error::Dimension(format!(
                "association has {} BSs, instance has {m}",
                self.assoc.num_bs()
            )));
        }
        if let Some(i) = self.capped.intersection(&self.relaxed).next() {
            return Err(Error::InvalidInput(format!("BS {i} is both capped and relaxed")));
        }
        if let Some(&i) = self.capped.iter().chain(&self.relaxed).find(|&&i| i >= m) {
            return Err(Error::InvalidInput(format!("BS index {i} out of range")));
        }
        if !(self.budget > 0.0 && self.budget.is_finite()) {
            return Err(Error::InvalidInput(format!("budget level must be positive, got {}", self.budget)));
        }
        let serving = self.assoc.serving_sets(n);
        for (j, s) in serving.iter().enumerate() {
            if s.is_empty() {
                return Err(Error::Unassociable { ue: j });
            }
            if let Some(&i) = s.iter().find(|&&i| i >= m || self.inst.gamma(i, j) <= 0.0) {
                return Err(Error::InvalidInput(format!("UE {j} is served by BS {i} without a usable link")));
            }
        }
        Ok(serving)
    }
}

/// Dual variables at a solution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    /// Spectrum price.
    pub mu: f64,
    /// Per-BS power weights `1 + lambda_i`.
    pub w: Vec<f64>,
}

/// Allocation together with the duals that certify it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedSolution {
    pub alloc: Allocation,
    /// `None` when the problem was infeasible.
    pub duals: Option<DualState>,
}

/// Output of [`per_ue_bandwidth`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bandwidth {
    pub y: f64,
    /// Set when the stationary point lies below the `y_min` floor.
    pub saturated: bool,
}

/// Bandwidth ratio at which `w * d/dy[f(y) / gamma] + mu = 0`, where
/// `f(y) = (2^{r/y} - 1) y`.
pub fn per_ue_bandwidth(rate: f64, gamma_eff: f64, w_eff: f64, mu: f64) -> Result<Bandwidth> {
    for (name, v) in [("rate", rate), ("gamma", gamma_eff), ("weight", w_eff), ("mu", mu)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Domain(format!("{name} must be positive and finite, got {v}")));
        }
    }
    let t = gap_inverse(mu * gamma_eff / w_eff);
    let y = rate * LN_2 / t;
    let y_min = Tolerances::default().y_min;
    Ok(if y < y_min {
        Bandwidth { y: y_min, saturated: true }
    } else {
        Bandwidth { y, saturated: false }
    })
}

/// Inverse of `h(t) = 1 + (t - 1) e^t` on `t > 0`.
pub(crate) fn gap_inverse(kappa: f64) -> f64 {
    gap_inverse_exp(kappa).0
}

/// [`gap_inverse`] together with `e^t`.
fn gap_inverse_exp(kappa: f64) -> (f64, f64) {
    if !(kappa > 0.0) {
        return (0.0, 1.0);
    }
    if kappa < 0.5 {
        // Near zero h(t) ~ t^2 / 2. h is convex and increasing, so Newton
        // from above decreases monotonically onto the root.
        let mut t = (2.0 * kappa).sqrt();
        for _ in 0..100 {
            let e = t.exp();
            let step = (marginal_gap(t) - kappa) / (t * e);
            if !(step > 0.0) {
                return (t, e);
            }
            t -= step;
            if step <= 1e-16 * t {
                break;
            }
        }
        return (t, t.exp());
    }
    // (t - 1) e^(t - 1) = (kappa - 1) / e, so t - 1 is a Lambert W value.
    let t = 1.0 + lambert_w0((kappa - 1.0) / std::f64::consts::E);
    if t > MAX_EXPONENT {
        return (t, f64::INFINITY);
    }
    let e = t.exp();
    let step = (1.0 + (t - 1.0) * e - kappa) / (t * e);
    (t - step, e * (1.0 - step + 0.5 * step * step))
}

/// Bandwidth and its derivative for a UE with price weight `weight` under
/// component price `theta`, plus its received power.
fn ue_response(rate: f64, weight: f64, theta: f64) -> (f64, f64, f64) {
    let (t, e) = gap_inverse_exp(theta / weight);
    let a = rate * LN_2;
    let y = a / t;
    if t > MAX_EXPONENT {
        return (y, 0.0, f64::INFINITY);
    }
    let dy = -a / (t * t) / (weight * t * e);
    let growth = if t < 0.5 { t.exp_m1() } else { e - 1.0 };
    (y, dy, growth * y)
}

#[derive(Clone, Copy, Debug)]
struct UeTerm {
    ue: usize,
    rate: f64,
    /// Ratio `rho_i / gamma_ij`, common to every serving BS.
    weight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Mode {
    /// Has an inequality BS and no relaxed BS; the cheapest inequality BS
    /// may go slack.
    Floating { rho_anchor: f64 },
    /// Contains a relaxed BS, whose weight is fixed at one.
    FixedScale { rho_relaxed: f64 },
    /// Every BS is capped.
    Pinned,
}

#[derive(Clone, Debug)]
struct Component {
    bss: Vec<usize>,
    ues: Vec<UeTerm>,
    mode: Mode,
    /// Price at which every non-relaxed BS spends exactly its budget.
    theta_all: f64,
}

impl Component {
    fn eval(&self, theta: f64) -> (f64, f64, f64) {
        let (mut big_y, mut dy, mut phi) = (0.0, 0.0, 0.0);
        for u in &self.ues {
            let (y, d, q) = ue_response(u.rate, u.weight, theta);
            big_y += y;
            dy += d;
            phi += u.weight * q;
        }
        (big_y, dy, phi)
    }

    fn theta(&self, mu: f64) -> f64 {
        match self.mode {
            Mode::Floating { rho_anchor } => (mu * rho_anchor).min(self.theta_all),
            Mode::FixedScale { rho_relaxed } => mu * rho_relaxed,
            Mode::Pinned => self.theta_all,
        }
    }

    /// Whether the component price follows `mu` at this value.
    fn tracks_mu(&self, mu: f64) -> bool {
        match self.mode {
            Mode::Floating { rho_anchor } => mu * rho_anchor < self.theta_all,
            Mode::FixedScale { .. } => true,
            Mode::Pinned => false,
        }
    }
}

#[derive(Clone, Debug)]
struct Solved {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    mu: f64,
    w: Vec<f64>,
}

#[derive(Clone, Debug)]
enum Outcome {
    Solved(Solved),
    /// Provably no allocation meets the budgets on this support.
    Infeasible,
    /// The support admits no consistent tie structure or sign-feasible split.
    Invalid,
}

/// Splits BSs into components and assigns the weight ratios.
fn build_components(
    inst: &Instance,
    serving: &[Vec<usize>],
    kinds: &[BudgetKind],
    budget: f64,
    warm: &Warm,
) -> Components {
    let m = inst.num_bs();
    let mut shared_of = vec![Vec::new(); m];
    let mut single_of = vec![Vec::new(); m];
    for (j, s) in serving.iter().enumerate() {
        if s.len() == 1 {
            single_of[s[0]].push(j);
        } else {
            s.iter().for_each(|&i| shared_of[i].push(j));
        }
    }
    let mut rho = vec![f64::NAN; m];
    let mut comps = Vec::new();
    for root in 0..m {
        if !rho[root].is_nan() {
            continue;
        }
        rho[root] = 1.0;
        let mut bss = vec![root];
        let mut head = 0;
        while head < bss.len() {
            let i = bss[head];
            head += 1;
            for &j in &shared_of[i] {
                let price = rho[i] / inst.gamma(i, j);
                for &k in &serving[j] {
                    let want = price * inst.gamma(k, j);
                    if rho[k].is_nan() {
                        rho[k] = want;
                        bss.push(k);
                    } else if (rho[k] - want).abs() > TIE_TOL * want {
                        return Components::Invalid;
                    }
                }
            }
        }
        bss.sort_unstable();
        let mut ues: Vec<UeTerm> = Vec::new();
        let mut seen = BTreeSet::new();
        for &i in &bss {
            for &j in single_of[i].iter().chain(&shared_of[i]) {
                if seen.insert(j) {
                    ues.push(UeTerm {
                        ue: j,
                        rate: inst.rate(j),
                        weight: rho[i] / inst.gamma(i, j),
                    });
                }
            }
        }
        ues.sort_by_key(|u| u.ue);

        let relaxed: Vec<f64> = bss.iter().filter(|&&i| kinds[i] == BudgetKind::Relaxed).map(|&i| rho[i]).collect();
        let ineq_min = bss
            .iter()
            .filter(|&&i| kinds[i] == BudgetKind::Inequality)
            .map(|&i| rho[i])
            .fold(f64::INFINITY, f64::min);
        let mode = if let Some(&r) = relaxed.first() {
            if relaxed.iter().any(|&o| (o - r).abs() > TIE_TOL * r) || ineq_min < r * (1.0 - TIE_TOL) {
                return Components::Invalid;
            }
            Mode::FixedScale { rho_relaxed: r }
        } else if ineq_min.is_finite() {
            Mode::Floating { rho_anchor: ineq_min }
        } else {
            Mode::Pinned
        };

        let mut comp = Component {
            bss,
            ues,
            mode,
            theta_all: f64::INFINITY,
        };
        if !matches!(mode, Mode::FixedScale { .. }) {
            let target = budget * comp.bss.iter().map(|&i| rho[i]).sum::<f64>();
            match solve_theta_all(&comp, target, warm) {
                Some(th) => comp.theta_all = th,
                None => return Components::Infeasible,
            }
        }
        comps.push(comp);
    }
    Components::Built { comps, rho }
}

enum Components {
    Built { comps: Vec<Component>, rho: Vec<f64> },
    Infeasible,
    Invalid,
}

/// Price at which the component's rho-weighted power equals `target`.
/// `None` when even unlimited bandwidth costs too much; `+inf` for
/// components without UEs whose budgets may go unused.
fn solve_theta_all(comp: &Component, target: f64, warm: &Warm) -> Option<f64> {
    if comp.ues.is_empty() {
        return match comp.mode {
            Mode::Pinned => None,
            _ => Some(f64::INFINITY),
        };
    }
    let floor: f64 = comp.ues.iter().map(|u| u.weight * u.rate * LN_2).sum();
    if floor >= target {
        return None;
    }
    let mut g = |s: f64| comp.eval(s.exp()).2 - target;
    let start = warm.theta.get();
    let (lo, hi) = bracket(&mut g, start, true)?;
    if lo == hi {
        return Some(lo.exp());
    }
    let s = newton_bracketed(
        |s| {
            let th = s.exp();
            let (_, dy, phi) = comp.eval(th);
            (phi - target, -th * th * dy)
        },
        lo,
        hi,
        true,
        start,
    );
    warm.theta.set(s);
    Some(s.exp())
}

/// Spectrum price with `sum_j y_j = 1`.
fn solve_mu(comps: &[Component], warm: &Warm) -> Option<f64> {
    let responsive = comps
        .iter()
        .any(|c| !c.ues.is_empty() && !matches!(c.mode, Mode::Pinned) && c.theta_all > 0.0);
    let total = |mu: f64| -> (f64, f64) {
        let (mut y, mut d) = (0.0, 0.0);
        for c in comps {
            let th = c.theta(mu);
            let (cy, cd, _) = c.eval(th);
            y += cy;
            if c.tracks_mu(mu) {
                d += th * cd;
            }
        }
        (y - 1.0, d)
    };
    if !responsive {
        let (r, _) = total(1.0);
        return (r.abs() <= 1e-12).then_some(1.0);
    }
    let floor: f64 = comps
        .iter()
        .filter(|c| !matches!(c.mode, Mode::FixedScale { .. }) && c.theta_all.is_finite())
        .map(|c| c.eval(c.theta_all).0)
        .sum();
    if floor >= 1.0 {
        return None;
    }
    let mut g = |s: f64| total(s.exp()).0;
    let start = warm.mu.get();
    let (lo, hi) = bracket(&mut g, start, false)?;
    if lo == hi {
        return Some(lo.exp());
    }
    let s = newton_bracketed(|s| total(s.exp()), lo, hi, false, start);
    warm.mu.set(s);
    Some(s.exp())
}

/// Log-space starting points carried between related solves.
#[derive(Debug, Default)]
pub(crate) struct Warm {
    mu: Cell<f64>,
    theta: Cell<f64>,
    /// Shared links dropped by the last successful active-set search.
    dropped: RefCell<Vec<(usize, usize)>>,
}

/// Solves on fixed serving sets, assuming every shared link carries power.
fn solve_support(
    inst: &Instance,
    serving: &[Vec<usize>],
    kinds: &[BudgetKind],
    budget: f64,
    tol: &Tolerances,
    warm: &Warm,
) -> Outcome {
    let (m, n) = (inst.num_bs(), inst.num_ue());
    let (comps, rho) = match build_components(inst, serving, kinds, budget, warm) {
        Components::Built { comps, rho } => (comps, rho),
        Components::Infeasible => return Outcome::Infeasible,
        Components::Invalid => return Outcome::Invalid,
    };
    let Some(mu) = solve_mu(&comps, warm) else {
        return Outcome::Infeasible;
    };

    let mut y = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut w = vec![1.0; m];
    let mut binding = vec![false; m];
    for c in &comps {
        let th = c.theta(mu);
        let scale = match c.mode {
            Mode::FixedScale { rho_relaxed } => 1.0 / rho_relaxed,
            _ if c.ues.is_empty() => {
                if let Mode::Floating { rho_anchor } = c.mode {
                    1.0 / rho_anchor
                } else {
                    1.0
                }
            }
            _ => mu / th,
        };
        for &i in &c.bss {
            w[i] = scale * rho[i];
            binding[i] = match kinds[i] {
                BudgetKind::Relaxed => false,
                BudgetKind::Capped => true,
                BudgetKind::Inequality => w[i] > 1.0 + TIE_TOL,
            };
        }
        for u in &c.ues {
            let (yy, _, qq) = ue_response(u.rate, u.weight, th);
            y[u.ue] = yy;
            q[u.ue] = qq;
        }
    }
    if y.iter().any(|v| !(*v >= tol.y_min)) || q.iter().any(|v| !v.is_finite()) {
        return Outcome::Infeasible;
    }

    let mut x = vec![vec![0.0; n]; m];
    let mut links = Vec::new();
    for (j, s) in serving.iter().enumerate() {
        if s.len() == 1 {
            x[s[0]][j] = q[j] / inst.gamma(s[0], j);
        } else {
            s.iter().for_each(|&i| links.push((i, j)));
        }
    }
    if !split_shared(inst, serving, &links, &binding, budget, &mut x, &q) {
        return Outcome::Invalid;
    }
    for i in 0..m {
        if kinds[i] != BudgetKind::Relaxed && !binding[i] {
            let p: f64 = x[i].iter().sum();
            if p > budget + tol.eq * budget.max(1.0) {
                return Outcome::Invalid;
            }
        }
    }
    Outcome::Solved(Solved { x, y, mu, w })
}

/// Fills shared-link entries of `x` from the rate equalities of shared UEs
/// and the budget equalities of binding BSs.
fn split_shared(
    inst: &Instance,
    serving: &[Vec<usize>],
    links: &[(usize, usize)],
    binding: &[bool],
    budget: f64,
    x: &mut [Vec<f64>],
    q: &[f64],
) -> bool {
    let m = inst.num_bs();
    let shared_ues: Vec<usize> = (0..serving.len()).filter(|&j| serving[j].len() >= 2).collect();
    let bind_rows: Vec<usize> = (0..m).filter(|&i| binding[i]).collect();
    let rows = shared_ues.len() + bind_rows.len();
    let mut a = DMatrix::<f64>::zeros(rows, links.len());
    let mut rhs = DVector::<f64>::zeros(rows);
    for (r, &j) in shared_ues.iter().enumerate() {
        rhs[r] = q[j];
        for (c, &(i, jj)) in links.iter().enumerate() {
            if jj == j {
                a[(r, c)] = inst.gamma(i, j);
            }
        }
    }
    for (k, &i) in bind_rows.iter().enumerate() {
        let r = shared_ues.len() + k;
        rhs[r] = budget - x[i].iter().sum::<f64>();
        for (c, &(ii, _)) in links.iter().enumerate() {
            if ii == i {
                a[(r, c)] = 1.0;
            }
        }
    }
    // Rate rows are scaled to unit gamma so both row types weigh alike.
    for r in 0..shared_ues.len() {
        let s = a.row(r).amax();
        if s > 0.0 {
            a.row_mut(r).scale_mut(1.0 / s);
            rhs[r] /= s;
        }
    }
    let scale = rhs.amax().max(1.0);
    let sol = if links.is_empty() {
        DVector::zeros(0)
    } else {
        let svd = a.clone().svd(true, true);
        let eps = 1e-13 * svd.singular_values.max().max(1.0);
        match svd.solve(&rhs, eps) {
            Ok(s) => s,
            Err(_) => return false,
        }
    };
    let resid = if links.is_empty() { rhs.clone() } else { &a * &sol - &rhs };
    if resid.amax() > 1e-9 * scale {
        return false;
    }
    let xs = sol.amax().max(scale);
    if sol.iter().any(|&v| v < -1e-11 * xs) {
        return false;
    }
    for (c, &(i, j)) in links.iter().enumerate() {
        x[i][j] = sol[c].max(0.0);
    }
    true
}

/// Searches supports of shared links, fewest dropped first, for one that
/// satisfies every optimality condition.
fn solve_active_set(
    inst: &Instance,
    serving: &[Vec<usize>],
    kinds: &[BudgetKind],
    budget: f64,
    tol: &Tolerances,
    warm: &Warm,
) -> Option<std::result::Result<Solved, ()>> {
    let links: Vec<(usize, usize)> = serving
        .iter()
        .enumerate()
        .filter(|(_, s)| s.len() >= 2)
        .flat_map(|(j, s)| s.iter().map(move |&i| (i, j)))
        .collect();
    let tried = Cell::new(0usize);
    let saw_infeasible = Cell::new(false);
    // Any support that solves with its dropped links priced out is optimal,
    // so the order of attempts only affects speed.
    let attempt = |drop: &[usize]| -> Step {
        tried.set(tried.get() + 1);
        let mut reduced = serving.to_vec();
        for &d in drop {
            let (i, j) = links[d];
            reduced[j].retain(|&k| k != i);
        }
        if reduced.iter().any(|s| s.is_empty()) {
            return Step::Next;
        }
        match solve_support(inst, &reduced, kinds, budget, tol, warm) {
            Outcome::Solved(s) => {
                let priced_out = drop.iter().all(|&d| {
                    let (i, j) = links[d];
                    let k = reduced[j][0];
                    let nu = s.w[k] / inst.gamma(k, j);
                    s.w[i] / inst.gamma(i, j) >= nu * (1.0 - 1e-9)
                });
                if priced_out {
                    *warm.dropped.borrow_mut() = drop.iter().map(|&d| links[d]).collect();
                    Step::Found(s)
                } else {
                    Step::Next
                }
            }
            Outcome::Infeasible => {
                saw_infeasible.set(true);
                // Dropping links only removes capacity.
                if drop.is_empty() {
                    Step::Infeasible
                } else {
                    Step::Next
                }
            }
            Outcome::Invalid => Step::Next,
        }
    };
    let hint: Vec<usize> = {
        let last = warm.dropped.borrow();
        (0..links.len()).filter(|&d| last.contains(&links[d])).collect()
    };
    if !hint.is_empty() {
        if let Step::Found(s) = attempt(&hint) {
            return Some(Ok(s));
        }
    }
    for size in 0..=links.len() {
        let mut picked = Vec::with_capacity(size);
        let mut outcome = None;
        combinations(links.len(), size, &mut picked, 0, &mut |drop| {
            if tried.get() >= MAX_SUPPORTS {
                return true;
            }
            if size > 0 && drop == hint.as_slice() {
                return false;
            }
            match attempt(drop) {
                Step::Next => false,
                done => {
                    outcome = Some(done);
                    true
                }
            }
        });
        match outcome {
            Some(Step::Found(s)) => return Some(Ok(s)),
            Some(Step::Infeasible) => return Some(Err(())),
            _ => {}
        }
        if tried.get() >= MAX_SUPPORTS {
            return None;
        }
    }
    // A feasible problem has an optimum, and the optimum's support would have
    // passed. Without any infeasible support the failure is structural.
    saw_infeasible.get().then_some(Err(()))
}

enum Step {
    Found(Solved),
    Infeasible,
    Next,
}

/// Calls `visit` with every `size`-subset of `0..n` in lexicographic order
/// until it returns `true`.
fn combinations(n: usize, size: usize, picked: &mut Vec<usize>, from: usize, visit: &mut impl FnMut(&[usize]) -> bool) -> bool {
    if picked.len() == size {
        return visit(picked);
    }
    for k in from..n {
        if n - k < size - picked.len() {
            break;
        }
        picked.push(k);
        if combinations(n, size, picked, k + 1, visit) {
            return true;
        }
        picked.pop();
    }
    false
}

fn meets_budgets(inst: &Instance, alloc: &Allocation, kinds: &[BudgetKind], budget: f64, tol: &Tolerances) -> bool {
    let scale = budget.max(1.0);
    let ok_x = alloc.x.iter().flatten().all(|v| *v >= -tol.eq);
    let ok_y = alloc.y.iter().all(|v| *v >= tol.y_min) && (alloc.y.iter().sum::<f64>() - 1.0).abs() <= tol.eq;
    let ok_p = kinds.iter().enumerate().all(|(i, k)| {
        let p = alloc.bs_power(i);
        match k {
            BudgetKind::Relaxed => true,
            BudgetKind::Inequality => p <= budget + tol.eq * scale,
            BudgetKind::Capped => (p - budget).abs() <= tol.eq * scale,
        }
    });
    let ok_r = (0..inst.num_ue()).all(|j| {
        let got: f64 = (0..inst.num_bs()).map(|i| inst.gamma(i, j) * alloc.x[i][j]).sum();
        let need = crate::model::received_power(inst.rate(j), alloc.y[j]);
        (got - need).abs() <= tol.rate * need.max(f64::MIN_POSITIVE)
    });
    ok_x && ok_y && ok_p && ok_r
}

/// Full solve with duals. Infeasible problems return a best-effort
/// allocation that ignores every budget, flagged `feasible = false`.
pub fn solve_fixed_detailed(fp: &FixedAssocProblem) -> Result<FixedSolution> {
    solve_fixed_warm(fp, &Warm::default(), true)
}

/// As [`solve_fixed_detailed`], reusing starting points from `warm`. Without
/// `best_effort`, infeasible problems skip the budget-free re-solve.
pub(crate) fn solve_fixed_warm(fp: &FixedAssocProblem, warm: &Warm, best_effort: bool) -> Result<FixedSolution> {
    let serving = fp.validated_serving()?;
    let kinds = fp.kinds();
    let (m, n) = (fp.inst.num_bs(), fp.inst.num_ue());
    match solve_active_set(fp.inst, &serving, &kinds, fp.budget, &fp.tol, warm) {
        Some(Ok(s)) => {
            let mut alloc = Allocation::new(s.x, s.y, true);
            alloc.feasible = meets_budgets(fp.inst, &alloc, &kinds, fp.budget, &fp.tol);
            Ok(FixedSolution {
                alloc,
                duals: Some(DualState { mu: s.mu, w: s.w }),
            })
        }
        Some(Err(())) if !best_effort => Ok(FixedSolution {
            alloc: Allocation::infeasible(m, n),
            duals: None,
        }),
        Some(Err(())) => {
            let free = vec![BudgetKind::Relaxed; m];
            let alloc = match solve_active_set(fp.inst, &serving, &free, fp.budget, &fp.tol, warm) {
                Some(Ok(s)) => Allocation::new(s.x, s.y, false),
                _ => Allocation::infeasible(m, n),
            };
            Ok(FixedSolution { alloc, duals: None })
        }
        None => Err(Error::Solver(format!(
            "no consistent set of active links for serving sets {serving:?}"
        ))),
    }
}

/// Minimum-power allocation for the association in `fp`.
pub fn solve_fixed(fp: &FixedAssocProblem) -> Result<Allocation> {
    solve_fixed_detailed(fp).map(|s| s.alloc)
}

/// Solution with some budgets dropped, plus the power sums of two BSs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelaxedSolution {
    pub solution: FixedSolution,
    /// Power sums `(P_a, P_b)` of the two focus BSs.
    pub point: (f64, f64),
}

/// Solves `fp` (which should list one focus BS in `relaxed`) and reports the
/// power sums of the focus pair.
pub fn solve_relaxed(fp: &FixedAssocProblem, focus: (usize, usize)) -> Result<RelaxedSolution> {
    let m = fp.inst.num_bs();
    if focus.0 >= m || focus.1 >= m || focus.0 == focus.1 {
        return Err(Error::InvalidInput(format!("bad focus pair {focus:?}")));
    }
    let solution = solve_fixed_detailed(fp)?;
    let point = (solution.alloc.bs_power(focus.0), solution.alloc.bs_power(focus.1));
    Ok(RelaxedSolution { solution, point })
}

/// Verdict of [`feasibility_probe`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub feasible: bool,
    /// Smallest common budget level every BS can meet; `inf` if none.
    pub min_max_power: f64,
}

/// Smallest common budget level under which `assoc` can serve every demand.
pub fn feasibility_probe(inst: &Instance, assoc: &Association) -> Probe {
    let tol = Tolerances::default();
    let fp = FixedAssocProblem::new(inst, assoc);
    let Ok(serving) = fp.validated_serving() else {
        return Probe {
            feasible: false,
            min_max_power: f64::INFINITY,
        };
    };
    let kinds = vec![BudgetKind::Inequality; inst.num_bs()];
    let warm = Warm::default();
    let ok = |b: f64| matches!(solve_active_set(inst, &serving, &kinds, b, &tol, &warm), Some(Ok(_)));
    let (mut lo, mut hi) = if ok(1.0) {
        let mut lo = 0.5;
        while lo > 1e-300 && ok(lo) {
            lo *= 0.5;
        }
        (lo, 2.0 * lo)
    } else {
        let mut hi = 2.0;
        while hi < 1e300 && !ok(hi) {
            hi *= 2.0;
        }
        if hi >= 1e300 {
            return Probe {
                feasible: false,
                min_max_power: f64::INFINITY,
            };
        }
        (0.5 * hi, hi)
    };
    for _ in 0..64 {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Probe {
        feasible: hi <= 1.0 + tol.eq,
        min_max_power: hi,
    }
}

/// Largest violations of the optimality conditions, relative to `mu`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub complementary: f64,
    pub dual_feasibility: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.complementary).max(self.dual_feasibility)
    }
}

/// Checks `alloc` and `duals` against the optimality conditions of `fp`.
pub fn kkt_residuals(fp: &FixedAssocProblem, alloc: &Allocation, duals: &DualState) -> Result<KktResiduals> {
    let serving = fp.validated_serving()?;
    let kinds = fp.kinds();
    let mut res = KktResiduals::default();
    let mu = duals.mu;
    if !(mu > 0.0) {
        return Err(Error::InvalidInput(format!("spectrum price must be positive, got {mu}")));
    }
    for (j, s) in serving.iter().enumerate() {
        let slope = -received_power_slope(fp.inst.rate(j), alloc.y[j]);
        for &i in s {
            let lhs = duals.w[i] * slope / fp.inst.gamma(i, j);
            let gap = (lhs - mu) / mu;
            if alloc.x[i][j] > fp.tol.zero || s.len() == 1 {
                res.stationarity = res.stationarity.max(gap.abs());
            } else {
                res.dual_feasibility = res.dual_feasibility.max(-gap);
            }
        }
    }
    for (i, k) in kinds.iter().enumerate() {
        let slack = fp.budget - alloc.bs_power(i);
        match k {
            BudgetKind::Inequality => {
                res.complementary = res.complementary.max(((duals.w[i] - 1.0) * slack).abs());
                res.dual_feasibility = res.dual_feasibility.max(1.0 - duals.w[i]);
            }
            BudgetKind::Relaxed => res.complementary = res.complementary.max((duals.w[i] - 1.0).abs()),
            BudgetKind::Capped => res.complementary = res.complementary.max(slack.abs()),
        }
    }
    Ok(res)
}
