//! Library results checked against brute-force and numerical oracles.

mod common;

use common::{
    all_clusterings, all_partitions, integrate, marginal_by_quadrature, planted_matrix,
    random_matrix,
};
use modret::metrics::{entropy, nid};
use modret::partitions::{bell, RestrictedGrowth};
use modret::ppm::{log_cluster_marginal, log_crp_prior, log_posterior_score, ClusterStats};
use modret::search::{
    brute_force_map, candidate_sweep, greedy_map_search, greedy_map_search_detailed, kmeans,
    restricted_map_search, Heuristic, KRange, SearchConfig,
};
use modret::{Clustering, ExpressionMatrix, Hyperparameters};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn quadrature_sanity() {
    let poly = integrate(&|x: f64| x.powi(6) - 2.0 * x, 0.0, 2.0, 1e-12);
    assert!((poly - (128.0 / 7.0 - 4.0)).abs() < 1e-12);
    let gauss = integrate(&|x: f64| (-x * x).exp(), -10.0, 10.0, 1e-12);
    assert!((gauss - std::f64::consts::PI.sqrt()).abs() < 1e-12);
}

#[test]
fn independent_enumerator_counts_bell_numbers() {
    for n in 0..=8 {
        assert_eq!(all_partitions(n).len() as u128, bell(n));
    }
}

#[test]
fn library_enumeration_matches_independent_one() {
    for n in 1..=7 {
        let mut a: Vec<Clustering> = RestrictedGrowth::new(n)
            .map(|l| Clustering::from_labels(&l))
            .collect();
        let mut b = all_clusterings(n);
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }
}

#[test]
fn prior_sums_to_one() {
    for eta in [0.3, 1.0, 4.0] {
        for n in 1..=7 {
            let total: f64 = all_clusterings(n)
                .iter()
                .map(|c| log_crp_prior(c, eta).exp())
                .sum();
            assert!((total - 1.0).abs() < 1e-10, "n={n} eta={eta}: {total}");
        }
    }
}

#[test]
fn marginal_matches_quadrature_on_hand_points() {
    let h = Hyperparameters::default();
    for xs in [
        vec![0.0],
        vec![1.0, -1.0],
        vec![0.3, 0.5, -1.7],
        vec![2.0, 2.1, 1.9, 2.2, 2.05],
    ] {
        let rows: Vec<[f64; 1]> = xs.iter().map(|&x| [x]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| &r[..]).collect();
        let exact = log_cluster_marginal(&refs, &h).unwrap().exp();
        let numeric = marginal_by_quadrature(&xs, &h);
        assert!(
            ((exact - numeric) / numeric).abs() < 1e-8,
            "{xs:?}: {exact} vs {numeric}"
        );
    }
    let other = Hyperparameters {
        mu0: 0.5,
        rho0: 2.0,
        alpha0: 1.5,
        beta0: 0.7,
        eta0: 1.0,
    };
    let xs = [0.1, 0.9, 1.3];
    let rows: Vec<[f64; 1]> = xs.iter().map(|&x| [x]).collect();
    let refs: Vec<&[f64]> = rows.iter().map(|r| &r[..]).collect();
    let exact = log_cluster_marginal(&refs, &other).unwrap().exp();
    let numeric = marginal_by_quadrature(&xs, &other);
    assert!(((exact - numeric) / numeric).abs() < 1e-8);
}

#[test]
fn moving_one_row_changes_score_by_local_delta() {
    let h = Hyperparameters {
        eta0: 0.8,
        ..Hyperparameters::default()
    };
    let d = random_matrix(9, 3, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..200 {
        let labels: Vec<usize> = (0..9).map(|_| rng.random_range(0..4)).collect();
        let before = Clustering::from_labels(&labels);
        let item = rng.random_range(0..9);
        let mut moved = labels.clone();
        moved[item] = rng.random_range(0..5);
        let after = Clustering::from_labels(&moved);
        let full = log_posterior_score(&d, &after, &h).unwrap()
            - log_posterior_score(&d, &before, &h).unwrap();

        let cluster_ml = |labels: &[usize], l: usize| -> f64 {
            let members: Vec<usize> = (0..9).filter(|&i| labels[i] == l).collect();
            if members.is_empty() {
                0.0
            } else {
                ClusterStats::of_members(&d, &members)
                    .log_marginal(&h)
                    .unwrap()
            }
        };
        let (src, dst) = (labels[item], moved[item]);
        let ml_delta = if src == dst {
            0.0
        } else {
            cluster_ml(&moved, src) + cluster_ml(&moved, dst)
                - cluster_ml(&labels, src)
                - cluster_ml(&labels, dst)
        };
        let prior_delta = log_crp_prior(&after, h.eta0) - log_crp_prior(&before, h.eta0);
        assert!((full - (ml_delta + prior_delta)).abs() < 1e-10);
    }
}

#[test]
fn planted_blocks_are_the_exhaustive_map() {
    let d = planted_matrix(&[(10.0, 3), (-10.0, 3)], 2, 0.1, 21);
    let h = Hyperparameters::default();
    let truth = Clustering::from_labels(&[0, 0, 0, 1, 1, 1]);
    let best = all_clusterings(6)
        .into_iter()
        .map(|c| (log_posterior_score(&d, &c, &h).unwrap(), c))
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .unwrap();
    assert_eq!(best.1, truth);
    assert_eq!(brute_force_map(&d, &h).unwrap().0, truth);
    assert_eq!(
        greedy_map_search(&d, &h, &SearchConfig::default())
            .unwrap()
            .0,
        truth
    );
}

#[test]
fn brute_force_agrees_with_independent_enumeration() {
    let h = Hyperparameters::default();
    for seed in 0..10 {
        let d = random_matrix(6, 2, 100 + seed);
        let (c, s) = brute_force_map(&d, &h).unwrap();
        let oracle = all_clusterings(6)
            .iter()
            .map(|c| log_posterior_score(&d, c, &h).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((s - oracle).abs() < 1e-9);
        assert!((log_posterior_score(&d, &c, &h).unwrap() - s).abs() < 1e-9);
    }
}

#[test]
fn greedy_never_beats_brute_force_and_usually_ties() {
    let h = Hyperparameters::default();
    let mut hits = 0;
    for seed in 0..20u64 {
        let n = 4 + (seed as usize % 5);
        let d = random_matrix(n, 1 + seed as usize % 3, seed);
        let (_, bf) = brute_force_map(&d, &h).unwrap();
        let cfg = SearchConfig {
            seed,
            ..SearchConfig::default()
        };
        let (_, g) = greedy_map_search(&d, &h, &cfg).unwrap();
        assert!(g <= bf + 1e-9);
        if (g - bf).abs() <= 1e-9 {
            hits += 1;
        }
    }
    assert!(hits >= 19, "greedy reached the optimum on {hits}/20");
}

#[test]
fn greedy_incumbent_never_decreases() {
    let d = random_matrix(30, 3, 77);
    let out = greedy_map_search_detailed(
        &d,
        &Hyperparameters::default(),
        &SearchConfig {
            seed: 3,
            restarts: 6,
            ..SearchConfig::default()
        },
    )
    .unwrap();
    for r in &out.restarts {
        assert!(r.trace.windows(2).all(|w| w[1] >= w[0]));
    }
}

#[test]
fn restricted_search_bounded_by_full_space() {
    let h = Hyperparameters::default();
    for seed in 0..10u64 {
        let d = random_matrix(8, 2, 300 + seed);
        let (bf_c, bf) = brute_force_map(&d, &h).unwrap();
        let mut cands = candidate_sweep(
            &d,
            &[Heuristic::KMeans, Heuristic::CompleteLinkage],
            &KRange::Explicit(1..=8),
            seed,
        )
        .unwrap();
        let (_, rs) = restricted_map_search(&d, &cands, &h).unwrap();
        assert!(rs <= bf + 1e-12);
        cands.push(bf_c.clone());
        let (c, _) = restricted_map_search(&d, &cands, &h).unwrap();
        assert_eq!(c, bf_c);
    }
}

fn sse(d: &ExpressionMatrix, c: &Clustering) -> f64 {
    c.blocks()
        .iter()
        .map(|b| {
            let p = d.p();
            (0..p)
                .map(|j| {
                    let m = b.iter().map(|&i| d.get(i, j)).sum::<f64>() / b.len() as f64;
                    b.iter().map(|&i| (d.get(i, j) - m).powi(2)).sum::<f64>()
                })
                .sum::<f64>()
        })
        .sum()
}

#[test]
fn kmeans_finds_sse_minimizer_on_planted_data() {
    let d = planted_matrix(&[(6.0, 3), (0.0, 3), (-6.0, 3)], 2, 0.5, 12);
    let best = all_clusterings(9)
        .into_iter()
        .filter(|c| c.k() == 3)
        .min_by(|a, b| sse(&d, a).total_cmp(&sse(&d, b)))
        .unwrap();
    assert_eq!(best, Clustering::from_labels(&[0, 0, 0, 1, 1, 1, 2, 2, 2]));
    for seed in 0..5 {
        assert_eq!(kmeans(&d, 3, seed).unwrap(), best);
    }
}

#[test]
fn nid_oracle_values() {
    let s = Clustering::from_labels(&[0, 0, 1, 1]);
    let t = Clustering::from_labels(&[0, 1, 0, 1]);
    assert_eq!(nid(&s, &t).unwrap(), 1.0);
    assert_eq!(nid(&s, &s).unwrap(), 0.0);
    assert_eq!(entropy(&Clustering::singletons(7)), 7f64.ln());
}
