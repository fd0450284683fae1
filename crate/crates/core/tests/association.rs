mod common;

use std::collections::HashSet;

use coopalloc::association::initial_clusters;
use coopalloc::{associate, enumerate_cc, CcEntry, CcVector, Instance, PairOrders};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn argmax_column(inst: &Instance, j: usize) -> usize {
    let mut best = 0;
    for i in 1..inst.num_bs() {
        if inst.gamma(i, j) > inst.gamma(best, j) {
            best = i;
        }
    }
    best
}

#[test]
fn initial_clusters_match_argmax_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let inst = common::random_instance(&mut rng, 3, 6, 1.0, 0.5, 1.0);
        let clusters = initial_clusters(&inst);
        for j in 0..6 {
            let owners: Vec<usize> = (0..3).filter(|&i| clusters[i].contains(&j)).collect();
            assert_eq!(owners, vec![argmax_column(&inst, j)]);
        }
    }
}

#[test]
fn initial_clusters_ignore_column_scaling() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let inst = common::random_instance(&mut rng, 3, 5, 1.0, 0.5, 1.0);
    let mut gamma = inst.gamma_matrix().to_vec();
    for row in &mut gamma {
        row[2] *= 37.5;
        row[4] *= 1e-3;
    }
    let scaled = Instance::new(gamma, inst.rates().to_vec()).unwrap();
    assert_eq!(initial_clusters(&inst), initial_clusters(&scaled));
}

/// Every combination of per-pair entries, then the two filters applied
/// directly: at most M-1 distinct designated UEs, and no unshared non-empty
/// cut whose last UE could still be designated.
fn independent_count(orders: &PairOrders) -> usize {
    let (m, n, pairs) = (orders.num_bs(), orders.num_ue(), orders.num_pairs());
    let options: Vec<CcEntry> = std::iter::once(CcEntry::new(0, false))
        .chain((1..=n).flat_map(|c| [CcEntry::new(c, false), CcEntry::new(c, true)]))
        .collect();
    let total = options.len().pow(pairs as u32);
    let mut count = 0;
    for mut code in 0..total {
        let mut entries = Vec::with_capacity(pairs);
        for _ in 0..pairs {
            entries.push(options[code % options.len()]);
            code /= options.len();
        }
        let designated: HashSet<usize> = entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.shared)
            .map(|(p, e)| orders.order(p)[e.cut - 1])
            .collect();
        if designated.len() > m - 1 {
            continue;
        }
        let extendable = entries.iter().enumerate().any(|(p, e)| {
            !e.shared && e.cut > 0 && {
                let u = orders.order(p)[e.cut - 1];
                designated.contains(&u) || designated.len() < m - 1
            }
        });
        if !extendable {
            count += 1;
        }
    }
    count
}

#[test]
fn candidate_count_matches_independent_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for (m, n) in [(3, 4), (3, 2), (2, 5)] {
        for _ in 0..3 {
            let inst = common::random_instance(&mut rng, m, n, 1.0, 0.5, 1.0);
            let orders = PairOrders::new(&inst);
            let got = enumerate_cc(&orders, &vec![None; orders.num_pairs()]);
            assert_eq!(got.len(), independent_count(&orders), "M={m} N={n}");
            let unique: HashSet<&CcVector> = got.iter().collect();
            assert_eq!(unique.len(), got.len(), "duplicates for M={m} N={n}");
        }
    }
}

#[test]
fn pinned_pairs_are_respected() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let inst = common::random_instance(&mut rng, 3, 4, 1.0, 0.5, 1.0);
    let orders = PairOrders::new(&inst);
    let pin = CcEntry::new(2, true);
    let got = enumerate_cc(&orders, &[None, Some(pin), None]);
    assert!(!got.is_empty());
    assert!(got.iter().all(|cc| cc.entries[1] == pin));
}

#[test]
fn associations_satisfy_invariants_and_one_way_moves() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..5 {
        let inst = common::random_instance(&mut rng, 3, 5, 1.0, 0.5, 1.0);
        let orders = PairOrders::new(&inst);
        let initial = initial_clusters(&inst);
        for cc in enumerate_cc(&orders, &[None, None, None]) {
            assert!(cc.shared_ues(&orders).len() <= 2);
            let Ok(a) = associate(&inst, &orders, &cc) else {
                continue;
            };
            a.check_invariants(5).unwrap();
            assert_eq!(a, associate(&inst, &orders, &cc).unwrap(), "not idempotent");
            // UEs moved from i to k forbid moves from k to i.
            for i in 0..3 {
                for k in 0..3 {
                    if i == k {
                        continue;
                    }
                    let moved = |from: usize, to: usize| initial[from].iter().any(|u| a.clusters[to].contains(u));
                    assert!(!(moved(i, k) && moved(k, i)), "two-way move between {i} and {k} for {cc:?}");
                }
            }
        }
    }
}
