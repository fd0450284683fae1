//! Random instance batches shared by the integration tests.

#![allow(dead_code)]

use coopalloc::Instance;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

/// Instance with `gamma = scale * Exp(1)` and rates uniform on `[lo, hi]`.
pub fn random_instance(rng: &mut ChaCha8Rng, m: usize, n: usize, scale: f64, lo: f64, hi: f64) -> Instance {
    let gamma = (0..m)
        .map(|_| {
            (0..n)
                .map(|_| {
                    let e: f64 = Exp1.sample(rng);
                    scale * e.max(1e-6)
                })
                .collect()
        })
        .collect();
    let rate = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    Instance::new(gamma, rate).unwrap()
}

/// Largest factor (to 1e-3 relative, up to 64) by which `inst`'s rates can
/// be scaled while the exhaustive optimum stays feasible.
pub fn feasibility_limit(inst: &Instance) -> f64 {
    let ok = |f: f64| {
        let scaled = inst.with_scaled_rates(f).unwrap();
        coopalloc::oracle::brute_force(&scaled).map(|a| a.feasible).unwrap_or(false)
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while ok(hi) {
        lo = hi;
        hi *= 2.0;
        if hi > 64.0 {
            return 64.0;
        }
    }
    while hi - lo > 1e-3 * hi {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Deterministic batch of `count` feasible instances, cycling through
/// `m in ms` and `n in ns`. Each instance's demand sits at a random fraction
/// of its feasibility limit: anywhere in `[0.3, 1)` for even draws and close
/// to the limit for odd ones, where optima load some BS fully.
pub fn feasible_batch(seed: u64, count: usize, ms: &[usize], ns: &[usize]) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut k = 0usize;
    while out.len() < count {
        let m = ms[k % ms.len()];
        let n = ns[(k / ms.len()) % ns.len()];
        k += 1;
        let base = random_instance(&mut rng, m, n, 10.0, 0.5, 1.5);
        let limit = feasibility_limit(&base);
        let frac: f64 = if (k / (ms.len() * ns.len())) % 2 == 0 { rng.gen_range(0.3..0.999) } else { rng.gen_range(0.9..0.9995) };
        let inst = base.with_scaled_rates(limit * frac).unwrap();
        if coopalloc::oracle::brute_force(&inst).map(|a| a.feasible).unwrap_or(false) {
            out.push(inst);
        }
    }
    out
}
