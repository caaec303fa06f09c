use nalgebra::{dmatrix, dvector, DVector};
use quadrature::double_exponential;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use vis_yield::distributions::{GaussianProposal, MixtureProposal, Proposal, SkewNormalProposal};

fn families_1d() -> Vec<(&'static str, Proposal)> {
    let g = GaussianProposal::new(dvector![0.7], dmatrix![2.3]).unwrap();
    let s = SkewNormalProposal::new(GaussianProposal::new(dvector![-0.4], dmatrix![1.5]).unwrap(), dvector![3.0]).unwrap();
    let m = MixtureProposal::new(
        vec![
            s.clone(),
            SkewNormalProposal::new(GaussianProposal::new(dvector![4.0], dmatrix![0.3]).unwrap(), dvector![-2.0]).unwrap(),
        ],
        vec![0.35, 0.65],
    )
    .unwrap();
    vec![("gaussian", g.into()), ("skew normal", s.into()), ("mixture", m.into())]
}

fn families_2d() -> Vec<(&'static str, Proposal)> {
    let g = GaussianProposal::new(dvector![0.5, -0.3], dmatrix![1.2, 0.4; 0.4, 0.8]).unwrap();
    let s = SkewNormalProposal::new(g.clone(), dvector![2.0, -1.0]).unwrap();
    let m = MixtureProposal::new(
        vec![
            s.clone(),
            SkewNormalProposal::new(GaussianProposal::new(dvector![-2.0, 2.0], dmatrix![0.5, 0.0; 0.0, 0.7]).unwrap(), dvector![0.0, 1.5])
                .unwrap(),
        ],
        vec![0.6, 0.4],
    )
    .unwrap();
    vec![("gaussian", g.into()), ("skew normal", s.into()), ("mixture", m.into())]
}

fn density(q: &Proposal, x: &[f64]) -> f64 {
    q.log_density(&DVector::from_column_slice(x)).exp()
}

#[test]
fn densities_integrate_to_one_in_1d() {
    for (name, q) in families_1d() {
        let mut total = 0.0;
        for w in [-40.0, -10.0, -3.0, 0.0, 3.0, 10.0, 40.0].windows(2) {
            total += double_exponential::integrate(|x| density(&q, &[x]), w[0], w[1], 1e-12).integral;
        }
        assert!((total - 1.0).abs() < 1e-6, "{name}: {total}");
    }
}

/// Midpoint rule on [lo, hi]² with n×n cells.
fn grid_mass(q: &Proposal, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            total += density(q, &[lo + (i as f64 + 0.5) * h, lo + (j as f64 + 0.5) * h]);
        }
    }
    total * h * h
}

#[test]
fn densities_integrate_to_one_in_2d() {
    for (name, q) in families_2d() {
        let total = grid_mass(&q, -12.0, 12.0, 480);
        assert!((total - 1.0).abs() < 1e-4, "{name}: {total}");
    }
}

#[test]
fn zero_shape_skew_normal_is_the_gaussian() {
    let g = GaussianProposal::new(dvector![0.3, -1.0, 2.0], dmatrix![2.0, 0.3, 0.1; 0.3, 1.0, -0.2; 0.1, -0.2, 0.5]).unwrap();
    let s = SkewNormalProposal::new(g.clone(), DVector::zeros(3)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let x = DVector::from_fn(3, |_, _| rng.random_range(-6.0..6.0));
        assert!((s.log_density(&x) - g.log_density(&x)).abs() < 1e-12);
    }
}

/// Pearson chi-square of samples against quadrature cell masses on a 20×20
/// grid plus one bin for everything outside it.
fn chi_square_p(q: &Proposal, lo: f64, hi: f64, seed: u64) -> f64 {
    const CELLS: usize = 20;
    const SUB: usize = 8;
    const N: usize = 100_000;
    let h = (hi - lo) / CELLS as f64;
    let mut expected = vec![0.0; CELLS * CELLS + 1];
    for ci in 0..CELLS {
        for cj in 0..CELLS {
            let mut m = 0.0;
            let hs = h / SUB as f64;
            for si in 0..SUB {
                for sj in 0..SUB {
                    let x = lo + ci as f64 * h + (si as f64 + 0.5) * hs;
                    let y = lo + cj as f64 * h + (sj as f64 + 0.5) * hs;
                    m += density(q, &[x, y]) * hs * hs;
                }
            }
            expected[ci * CELLS + cj] = m * N as f64;
        }
    }
    let inside: f64 = expected.iter().sum();
    expected[CELLS * CELLS] = (N as f64 - inside).max(0.0);

    let mut observed = vec![0.0; CELLS * CELLS + 1];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..N {
        let x = q.sample(&mut rng);
        let ci = ((x[0] - lo) / h).floor();
        let cj = ((x[1] - lo) / h).floor();
        if (0.0..CELLS as f64).contains(&ci) && (0.0..CELLS as f64).contains(&cj) {
            observed[ci as usize * CELLS + cj as usize] += 1.0;
        } else {
            observed[CELLS * CELLS] += 1.0;
        }
    }

    // pool sparse cells so every bin expects at least 5
    let (mut stat, mut bins) = (0.0, 0usize);
    let (mut pool_e, mut pool_o) = (0.0, 0.0);
    for (e, o) in expected.iter().zip(&observed) {
        if *e >= 5.0 {
            stat += (o - e).powi(2) / e;
            bins += 1;
        } else {
            pool_e += e;
            pool_o += o;
        }
    }
    if pool_e > 0.0 {
        stat += (pool_o - pool_e).powi(2) / pool_e.max(1e-300);
        bins += 1;
    }
    1.0 - ChiSquared::new((bins - 1) as f64).unwrap().cdf(stat)
}

#[test]
fn samplers_match_densities_in_2d() {
    for (k, (name, q)) in families_2d().into_iter().enumerate() {
        let p = chi_square_p(&q, -5.0, 5.0, 100 + k as u64);
        assert!(p > 0.001, "{name}: p = {p}");
    }
}

#[test]
fn mixture_selection_frequency() {
    let c = |m: f64| SkewNormalProposal::symmetric(GaussianProposal::mean_shift(dvector![m]));
    let q = MixtureProposal::new(vec![c(-3.0), c(3.0)], vec![0.9, 0.1]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = 100_000;
    let first = (0..n).filter(|_| q.sample_labeled(&mut rng).0 == 0).count();
    assert!((first as f64 / n as f64 - 0.9).abs() < 0.01);
}

#[test]
fn symmetric_mixture_has_symmetric_density() {
    let c = |m: f64| SkewNormalProposal::symmetric(GaussianProposal::new(dvector![m, 0.5 * m], dmatrix![1.0, 0.2; 0.2, 0.7]).unwrap());
    let q: Proposal = MixtureProposal::new(vec![c(-2.0), c(2.0)], vec![0.5, 0.5]).unwrap().into();
    for i in -20..=20 {
        for j in -20..=20 {
            let (x, y) = (0.3 * i as f64, 0.3 * j as f64);
            let a = q.log_density(&dvector![x, y]);
            let b = q.log_density(&dvector![-x, -y]);
            assert!((a - b).abs() < 1e-12, "({x}, {y})");
        }
    }
}
