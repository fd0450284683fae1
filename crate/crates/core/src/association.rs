//! UE-BS association: SNR-ratio orderings, best-BS clustering, common
//! candidate (CC) vectors and the clustering loop that turns a CC vector into
//! disjoint single-BS clusters plus multi-BS candidate sets.
//!
//! For every BS pair `(i, k)` with `i < k` the UEs are sorted by descending
//! `gamma_ij / gamma_kj`, ties broken by ascending UE index. A [`CcEntry`]
//! cuts that order: the first `cut` UEs lie on BS `i`'s side, the rest on BS
//! `k`'s side, and with `shared` set the last UE before the cut is the pair's
//! common candidate, eligible for power from both BSs.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Instance;

/// gamma_ij / gamma_kj; +inf on a coverage hole of BS `k`.
pub fn snr_ratio(inst: &Instance, i: usize, k: usize, ue: usize) -> Result<f64> {
    let (a, b) = (inst.gamma(i, ue), inst.gamma(k, ue));
    match (a > 0.0, b > 0.0) {
        (_, true) => Ok(a / b),
        (true, false) => Ok(f64::INFINITY),
        (false, false) => Err(Error::UncoverableLinkPair { bs_a: i, bs_b: k, ue }),
    }
}

/// BS with the strongest link to `ue`, lowest index on ties.
fn best_bs(inst: &Instance, ue: usize, allowed: impl Fn(usize) -> bool) -> Option<usize> {
    let mut best: Option<usize> = None;
    for i in (0..inst.num_bs()).filter(|&i| allowed(i) && inst.gamma(i, ue) > 0.0) {
        if best.is_none_or(|b| inst.gamma(i, ue) > inst.gamma(b, ue)) {
            best = Some(i);
        }
    }
    best
}

/// J_i^0: every UE joins the BS with the best channel.
pub fn initial_clusters(inst: &Instance) -> Vec<Vec<usize>> {
    let mut clusters = vec![Vec::new(); inst.num_bs()];
    for j in 0..inst.num_ue() {
        let i = best_bs(inst, j, |_| true).expect("instance guarantees coverage");
        clusters[i].push(j);
    }
    clusters
}

/// Side of a UE relative to one BS pair under a given cut.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    First,
    Boundary,
    Second,
}

/// Per-pair descending SNR-ratio orders, fixed once per instance.
#[derive(Clone, Debug)]
pub struct PairOrders {
    num_bs: usize,
    num_ue: usize,
    pairs: Vec<(usize, usize)>,
    order: Vec<Vec<usize>>,
    position: Vec<Vec<usize>>,
}

fn ratio_key(inst: &Instance, i: usize, k: usize, ue: usize) -> f64 {
    // a UE neither BS covers sits at the neutral point
    snr_ratio(inst, i, k, ue).unwrap_or(1.0)
}

impl PairOrders {
    pub fn new(inst: &Instance) -> Self {
        let (m, n) = (inst.num_bs(), inst.num_ue());
        let mut pairs = Vec::new();
        let mut order = Vec::new();
        let mut position = Vec::new();
        for i in 0..m {
            for k in i + 1..m {
                let keys: Vec<f64> = (0..n).map(|j| ratio_key(inst, i, k, j)).collect();
                let mut ord: Vec<usize> = (0..n).collect();
                ord.sort_by(|&a, &b| {
                    keys[b].partial_cmp(&keys[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b))
                });
                let mut pos = vec![0; n];
                for (p, &j) in ord.iter().enumerate() {
                    pos[j] = p;
                }
                pairs.push((i, k));
                order.push(ord);
                position.push(pos);
            }
        }
        Self {
            num_bs: m,
            num_ue: n,
            pairs,
            order,
            position,
        }
    }

    pub fn num_bs(&self) -> usize {
        self.num_bs
    }

    pub fn num_ue(&self) -> usize {
        self.num_ue
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn pair_index(&self, a: usize, b: usize) -> usize {
        let (i, k) = if a < b { (a, b) } else { (b, a) };
        debug_assert!(i != k && k < self.num_bs);
        // row-major upper triangle
        i * (2 * self.num_bs - i - 1) / 2 + (k - i - 1)
    }

    /// UEs of pair `p` in descending ratio order.
    pub fn order(&self, p: usize) -> &[usize] {
        &self.order[p]
    }

    pub fn position(&self, p: usize, ue: usize) -> usize {
        self.position[p][ue]
    }

    pub fn side(&self, p: usize, entry: CcEntry, ue: usize) -> Side {
        let pos = self.position[p][ue];
        if entry.shared && pos + 1 == entry.cut {
            Side::Boundary
        } else if pos < entry.cut {
            Side::First
        } else {
            Side::Second
        }
    }

    /// True when `ue` lies strictly on `bs`'s side of every pair involving it.
    pub(crate) fn strictly_prefers(&self, cc: &CcVector, bs: usize, ue: usize) -> bool {
        (0..self.num_bs).filter(|&k| k != bs).all(|k| {
            let p = self.pair_index(bs, k);
            let want = if bs < k { Side::First } else { Side::Second };
            self.side(p, cc.entries[p], ue) == want
        })
    }
}

/// One pair's boundary in the pair's sorted UE order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CcEntry {
    pub cut: usize,
    pub shared: bool,
}

impl CcEntry {
    pub const fn new(cut: usize, shared: bool) -> Self {
        Self { cut, shared }
    }
}

/// One entry per BS pair, in the lexicographic pair order of [`PairOrders`].
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CcVector {
    pub entries: Vec<CcEntry>,
}

impl CcVector {
    /// Common candidate of each pair, if designated.
    pub fn designated(&self, orders: &PairOrders) -> Vec<Option<usize>> {
        self.entries
            .iter()
            .enumerate()
            .map(|(p, e)| (e.shared && e.cut > 0).then(|| orders.order(p)[e.cut - 1]))
            .collect()
    }

    /// UNI(J^CC): distinct UEs designated as shared.
    pub fn shared_ues(&self, orders: &PairOrders) -> BTreeSet<usize> {
        self.designated(orders).into_iter().flatten().collect()
    }

    pub fn is_well_formed(&self, orders: &PairOrders) -> bool {
        self.entries.len() == orders.num_pairs()
            && self
                .entries
                .iter()
                .all(|e| e.cut <= orders.num_ue() && (!e.shared || e.cut > 0))
    }

    /// Every unshared cut whose last UE could be designated without breaking
    /// the M-1 bound. Flagging such a cut only widens the support of the
    /// resulting association, so the unflagged vector is dominated.
    pub fn is_maximal(&self, orders: &PairOrders, free: impl Fn(usize) -> bool) -> bool {
        let shared = self.shared_ues(orders);
        let limit = orders.num_bs().saturating_sub(1);
        self.entries.iter().enumerate().all(|(p, e)| {
            if !free(p) || e.shared || e.cut == 0 {
                return true;
            }
            let ue = orders.order(p)[e.cut - 1];
            !shared.contains(&ue) && shared.len() + 1 > limit
        })
    }
}

/// Calls `visit` for every CC vector that agrees with `fixed` on the pinned
/// pairs, designates at most M-1 distinct UEs and is maximal on the free pairs.
/// Free pairs iterate cuts in ascending order, unshared before shared.
pub fn for_each_cc(orders: &PairOrders, fixed: &[Option<CcEntry>], visit: impl FnMut(&CcVector)) {
    walk(orders, fixed, true, visit);
}

/// Like [`for_each_cc`] but without the maximality filter.
pub fn for_each_cc_unfiltered(orders: &PairOrders, fixed: &[Option<CcEntry>], visit: impl FnMut(&CcVector)) {
    walk(orders, fixed, false, visit);
}

fn walk(orders: &PairOrders, fixed: &[Option<CcEntry>], maximal_only: bool, mut visit: impl FnMut(&CcVector)) {
    assert_eq!(fixed.len(), orders.num_pairs(), "one slot per BS pair");
    let limit = orders.num_bs().saturating_sub(1);
    let mut counts = vec![0usize; orders.num_ue()];
    let mut entries = Vec::with_capacity(orders.num_pairs());
    let mut ctx = Walk {
        orders,
        fixed,
        limit,
        maximal_only,
    };
    ctx.recurse(0, &mut counts, 0, &mut entries, &mut visit);
}

struct Walk<'a> {
    orders: &'a PairOrders,
    fixed: &'a [Option<CcEntry>],
    limit: usize,
    maximal_only: bool,
}

impl Walk<'_> {
    fn recurse(
        &mut self,
        distinct: usize,
        counts: &mut [usize],
        p: usize,
        entries: &mut Vec<CcEntry>,
        visit: &mut impl FnMut(&CcVector),
    ) {
        let orders = self.orders;
        if p == orders.num_pairs() {
            let cc = CcVector {
                entries: entries.clone(),
            };
            let fixed = self.fixed;
            if !self.maximal_only || cc.is_maximal(orders, |q| fixed[q].is_none()) {
                visit(&cc);
            }
            return;
        }
        let n = orders.num_ue();
        let options: Vec<CcEntry> = match self.fixed[p] {
            Some(e) => vec![e],
            None => std::iter::once(CcEntry::new(0, false))
                .chain((1..=n).flat_map(|c| [CcEntry::new(c, false), CcEntry::new(c, true)]))
                .collect(),
        };
        for e in options {
            let designated = (e.shared && e.cut > 0).then(|| orders.order(p)[e.cut - 1]);
            let mut d = distinct;
            if let Some(u) = designated {
                if counts[u] == 0 {
                    d += 1;
                }
                if d > self.limit {
                    continue;
                }
                counts[u] += 1;
            }
            entries.push(e);
            self.recurse(d, counts, p + 1, entries, visit);
            entries.pop();
            if let Some(u) = designated {
                counts[u] -= 1;
            }
        }
    }
}

pub fn enumerate_cc(orders: &PairOrders, fixed: &[Option<CcEntry>]) -> Vec<CcVector> {
    let mut out = Vec::new();
    for_each_cc(orders, fixed, |cc| out.push(cc.clone()));
    out
}

/// Result of UE-BS association.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Association {
    /// J_i: UEs powered by BS i alone.
    pub clusters: Vec<Vec<usize>>,
    /// J_i^mul: UEs powered by BS i together with at least one other BS.
    pub multi: Vec<Vec<usize>>,
    /// J_i^0: best-BS clusters.
    pub initial: Vec<Vec<usize>>,
}

impl Association {
    /// Builds an association from explicit serving sets, one per UE.
    pub fn from_serving(inst: &Instance, serving: &[Vec<usize>]) -> Result<Self> {
        let m = inst.num_bs();
        let mut clusters = vec![Vec::new(); m];
        let mut multi = vec![Vec::new(); m];
        for (j, s) in serving.iter().enumerate() {
            match s.len() {
                0 => return Err(Error::Unassociable { ue: j }),
                1 => clusters[s[0]].push(j),
                _ => s.iter().for_each(|&i| multi[i].push(j)),
            }
        }
        Ok(Self {
            clusters,
            multi,
            initial: initial_clusters(inst),
        })
    }

    pub fn num_bs(&self) -> usize {
        self.clusters.len()
    }

    /// BSs that may power `ue`.
    pub fn serving(&self, ue: usize) -> Vec<usize> {
        (0..self.num_bs())
            .filter(|&i| self.clusters[i].contains(&ue) || self.multi[i].contains(&ue))
            .collect()
    }

    /// Serving sets for all `num_ue` UEs.
    pub fn serving_sets(&self, num_ue: usize) -> Vec<Vec<usize>> {
        let mut s = vec![Vec::new(); num_ue];
        for i in 0..self.num_bs() {
            for &j in self.clusters[i].iter().chain(&self.multi[i]) {
                s[j].push(i);
            }
        }
        for v in &mut s {
            v.sort_unstable();
            v.dedup();
        }
        s
    }

    pub fn multi_ues(&self) -> BTreeSet<usize> {
        self.multi.iter().flatten().copied().collect()
    }

    /// Partition, disjointness and the bound on multi-BS UEs.
    pub fn check_invariants(&self, num_ue: usize) -> std::result::Result<(), String> {
        let m = self.num_bs();
        let mut owner = vec![None; num_ue];
        for (i, c) in self.clusters.iter().enumerate() {
            for &j in c {
                if let Some(o) = owner[j] {
                    return Err(format!("UE {j} in clusters of BS {o} and BS {i}"));
                }
                owner[j] = Some(i);
            }
        }
        let multi = self.multi_ues();
        for &j in &multi {
            if owner[j].is_some() {
                return Err(format!("UE {j} is both single- and multi-BS"));
            }
        }
        if let Some(j) = (0..num_ue).find(|&j| owner[j].is_none() && !multi.contains(&j)) {
            return Err(format!("UE {j} has no serving BS"));
        }
        if multi.len() > m.saturating_sub(1) {
            return Err(format!("{} multi-BS UEs exceed M-1 = {}", multi.len(), m - 1));
        }
        Ok(())
    }
}

/// Turns a CC vector into clusters.
///
/// Starting from the best-BS clusters, every unsettled UE is offered to its
/// best remaining BS; the BS keeps it when the UE lies strictly on its side of
/// every pair, otherwise that BS is struck from the UE's candidates and the
/// best-BS assignment is redone over the survivors. Designated UEs that no
/// cluster absorbs become multi-BS UEs of the designating pairs.
pub fn associate(inst: &Instance, orders: &PairOrders, cc: &CcVector) -> Result<Association> {
    let (m, n) = (inst.num_bs(), inst.num_ue());
    if !cc.is_well_formed(orders) {
        return Err(Error::InvalidInput("CC vector does not match the instance".into()));
    }
    let initial = initial_clusters(inst);
    let mut clusters = vec![Vec::new(); m];
    let mut excluded = vec![vec![false; m]; n];
    let mut settled = vec![false; n];
    let mut active: Vec<usize> = (0..n).collect();
    let guard = m * n + m;
    let mut iterations = 0;
    while !active.is_empty() {
        iterations += 1;
        if iterations > guard {
            return Err(Error::NonTermination { iterations });
        }
        let mut still = Vec::with_capacity(active.len());
        for &j in &active {
            let Some(i) = best_bs(inst, j, |i| !excluded[j][i]) else {
                continue; // exhausted
            };
            if orders.strictly_prefers(cc, i, j) {
                clusters[i].push(j);
                settled[j] = true;
            } else {
                excluded[j][i] = true;
                still.push(j);
            }
        }
        active = still;
    }

    let mut multi: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); m];
    for (p, d) in cc.designated(orders).into_iter().enumerate() {
        if let Some(u) = d {
            if !settled[u] {
                let (i, k) = orders.pairs()[p];
                multi[i].insert(u);
                multi[k].insert(u);
            }
        }
    }
    let multi_ues: BTreeSet<usize> = multi.iter().flatten().copied().collect();
    for u in multi_ues {
        let serving: Vec<usize> = (0..m).filter(|&i| multi[i].contains(&u)).collect();
        let live: Vec<usize> = serving.iter().copied().filter(|&i| inst.gamma(i, u) > 0.0).collect();
        if live.len() < serving.len() {
            for &i in &serving {
                multi[i].remove(&u);
            }
            match live.as_slice() {
                [] => return Err(Error::Unassociable { ue: u }),
                [only] => clusters[*only].push(u),
                _ => live.iter().for_each(|&i| {
                    multi[i].insert(u);
                }),
            }
        }
        settled[u] = true;
    }
    if let Some(j) = (0..n).find(|&j| !settled[j]) {
        return Err(Error::Unassociable { ue: j });
    }
    for c in &mut clusters {
        c.sort_unstable();
    }
    Ok(Association {
        clusters,
        multi: multi.into_iter().map(|s| s.into_iter().collect()).collect(),
        initial,
    })
}

/// Position-based form of the CC ordering condition: for every pair the
/// first BS's cluster precedes the cut, the second BS's cluster follows it,
/// and a designated UE belongs to neither.
pub fn satisfies_ordering(orders: &PairOrders, assoc: &Association, cc: &CcVector) -> bool {
    orders.pairs().iter().enumerate().all(|(p, &(i, k))| {
        let e = cc.entries[p];
        assoc.clusters[i].iter().all(|&j| orders.side(p, e, j) == Side::First)
            && assoc.clusters[k].iter().all(|&j| orders.side(p, e, j) == Side::Second)
    })
}
