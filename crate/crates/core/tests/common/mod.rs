//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use modret::{Clustering, ExpressionMatrix, Hyperparameters};

/// All partitions of `0..n` as block lists, built by inserting each item into
/// every existing block or a new one.
pub fn all_partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
    let mut parts: Vec<Vec<Vec<usize>>> = vec![vec![]];
    for item in 0..n {
        let mut next = Vec::new();
        for p in &parts {
            for b in 0..p.len() {
                let mut q = p.clone();
                q[b].push(item);
                next.push(q);
            }
            let mut q = p.clone();
            q.push(vec![item]);
            next.push(q);
        }
        parts = next;
    }
    parts
}

pub fn all_clusterings(n: usize) -> Vec<Clustering> {
    all_partitions(n)
        .iter()
        .map(|blocks| Clustering::from_blocks(n, blocks).unwrap())
        .collect()
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let x = h * XGK[i];
        let s = f(c - x) + f(c + x);
        kronrod += WGK[i] * s;
        if i % 2 == 1 {
            gauss += WG[i / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod (7/15) quadrature on a finite interval.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
        let (v, err) = gk15(f, a, b);
        if err <= tol.max(v.abs() * 1e-15) || depth == 0 {
            return v;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, 0.5 * tol, depth - 1) + rec(f, m, b, 0.5 * tol, depth - 1)
    }
    let (rough, _) = gk15(f, a, b);
    let tol = rel_tol * rough.abs().max(f64::MIN_POSITIVE);
    rec(f, a, b, tol, 40)
}

fn ln_gamma_lanczos(x: f64) -> f64 {
    // Lanczos (g = 7, n = 9); independent of the library's log-gamma.
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma_lanczos(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, &c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Marginal likelihood of one column's values by numerically integrating the
/// Gaussian likelihood against the Normal-Gamma prior over (mean, precision).
pub fn marginal_by_quadrature(xs: &[f64], h: &Hyperparameters) -> f64 {
    let n = xs.len() as f64;
    let sum: f64 = xs.iter().sum();
    let two_pi = 2.0 * std::f64::consts::PI;
    let ln_gamma_a0 = ln_gamma_lanczos(h.alpha0);
    let density = |mu: f64, tau: f64| -> f64 {
        let mut log = 0.0;
        for &x in xs {
            log += 0.5 * (tau / two_pi).ln() - 0.5 * tau * (x - mu).powi(2);
        }
        let prior_tau = h.rho0 * tau;
        log += 0.5 * (prior_tau / two_pi).ln() - 0.5 * prior_tau * (mu - h.mu0).powi(2);
        log += h.alpha0 * h.beta0.ln() - ln_gamma_a0 + (h.alpha0 - 1.0) * tau.ln() - h.beta0 * tau;
        log.exp()
    };
    let center = (h.rho0 * h.mu0 + sum) / (h.rho0 + n);
    let outer = |v: f64| -> f64 {
        let tau = v / (1.0 - v);
        let jac_tau = 1.0 / ((1.0 - v) * (1.0 - v));
        let scale = 1.0 / ((h.rho0 + n) * tau).sqrt();
        let inner = |z: f64| -> f64 {
            let mu = center + scale * z / (1.0 - z * z);
            let jac = scale * (1.0 + z * z) / ((1.0 - z * z) * (1.0 - z * z));
            density(mu, tau) * jac
        };
        integrate(&inner, -1.0, 1.0, 1e-11) * jac_tau
    };
    integrate(&outer, 0.0, 1.0, 1e-10)
}

/// Rows drawn around the given group means with Gaussian noise.
pub fn planted_matrix(
    groups: &[(f64, usize)],
    p: usize,
    noise: f64,
    seed: u64,
) -> ExpressionMatrix {
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let eps = Normal::new(0.0, noise).unwrap();
    let mut rows = Vec::new();
    for &(mean, count) in groups {
        for _ in 0..count {
            rows.push((0..p).map(|_| mean + eps.sample(&mut rng)).collect());
        }
    }
    ExpressionMatrix::from_rows("planted", &rows).unwrap()
}

/// Uniformly random real matrix.
pub fn random_matrix(n: usize, p: usize, seed: u64) -> ExpressionMatrix {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..p).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    ExpressionMatrix::from_rows("random", &rows).unwrap()
}
