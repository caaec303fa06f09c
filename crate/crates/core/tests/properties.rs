use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use vis_yield::clustering::{select_clusters, ClusterConfig};
use vis_yield::distributions::{GaussianProposal, MixtureProposal, SkewNormalProposal};
use vis_yield::sampling::{annulus_radius, csv_number, EstimatorState};
use vis_yield::visfit::{
    alpha_objective, fit_alpha, full_sss_covariance, normalized_weights, scalar_sss_variance, true_omsv, FailureSet, FitConfig,
};
use vis_yield::Execution;

/// 1 to 12 distinct points of dimension 1 to 4 with coordinates in [−6, 6].
fn failure_set() -> impl Strategy<Value = FailureSet> {
    (1usize..=4).prop_flat_map(|d| {
        prop::collection::vec(prop::collection::vec(-6.0f64..6.0, d), 1..=12).prop_filter_map("duplicate points", move |pts| {
            let fs = FailureSet::from_points(d, pts.into_iter().map(DVector::from_vec)).ok()?;
            (!fs.is_empty()).then_some(fs)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn weights_are_a_distribution(fs in failure_set()) {
        let w = normalized_weights(&fs).unwrap();
        prop_assert!(w.iter().all(|&v| v >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let ess = fs.effective_size().unwrap();
        prop_assert!(ess >= 1.0 - 1e-9 && ess <= fs.len() as f64 + 1e-9);
    }

    #[test]
    fn mean_shift_lies_in_the_bounding_box(fs in failure_set()) {
        let mu = true_omsv(&fs).unwrap();
        for i in 0..fs.dim() {
            let lo = fs.points().map(|p| p[i]).fold(f64::INFINITY, f64::min);
            let hi = fs.points().map(|p| p[i]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(mu[i] >= lo - 1e-9 && mu[i] <= hi + 1e-9);
        }
    }

    #[test]
    fn scatter_is_symmetric_psd_and_traces_to_the_scalar(fs in failure_set()) {
        let mu = true_omsv(&fs).unwrap();
        let cov = full_sss_covariance(&fs, &mu).unwrap();
        prop_assert!((&cov - cov.transpose()).abs().max() < 1e-12);
        let scale = cov.abs().max().max(1.0);
        prop_assert!(cov.clone().symmetric_eigenvalues().min() > -1e-10 * scale);
        let var = scalar_sss_variance(&fs, &mu).unwrap();
        let tr = cov.trace() / fs.dim() as f64;
        prop_assert!(var >= tr - 1e-12 * scale);
    }

    #[test]
    fn alpha_fit_never_scores_below_zero_shape(fs in failure_set(), shift in -1.0f64..1.0) {
        let d = fs.dim();
        let mu = true_omsv(&fs).unwrap().add_scalar(shift);
        let zero = DVector::zeros(d);
        prop_assert!((alpha_objective(&fs, &mu, &zero).unwrap() + std::f64::consts::LN_2).abs() < 1e-12);
        let fit = fit_alpha(&fs, &mu, &DMatrix::identity(d, d), &FitConfig::default()).unwrap();
        let at_zero = fit_alpha(
            &fs,
            &mu,
            &DMatrix::identity(d, d),
            &FitConfig { alpha_max_iters: 1, alpha_step: 1e-300, ..FitConfig::default() },
        )
        .unwrap();
        prop_assert!(fit.objective >= at_zero.objective - 1e-12);
    }

    #[test]
    fn mixture_density_dominates_each_weighted_component(
        m1 in -3.0f64..3.0, m2 in -3.0f64..3.0, a in -3.0f64..3.0, w in 0.05f64..0.95, x in -8.0f64..8.0,
    ) {
        let c1 = SkewNormalProposal::new(GaussianProposal::mean_shift(DVector::from_element(1, m1)), DVector::from_element(1, a)).unwrap();
        let c2 = SkewNormalProposal::symmetric(GaussianProposal::isotropic(DVector::from_element(1, m2), 2.0).unwrap());
        let q = MixtureProposal::new(vec![c1.clone(), c2.clone()], vec![w, 1.0 - w]).unwrap();
        let x = DVector::from_element(1, x);
        let total = q.log_density(&x);
        prop_assert!(total >= w.ln() + c1.log_density(&x) - 1e-12);
        prop_assert!(total >= (1.0 - w).ln() + c2.log_density(&x) - 1e-12);
    }

    #[test]
    fn annulus_radius_is_monotone_within_the_shell(d in 1usize..40, inner in 0.0f64..6.0, width in 0.1f64..2.0, u in 0.0f64..1.0, du in 0.0f64..0.5) {
        let outer = inner + width;
        let r = annulus_radius(d, inner, outer, u);
        let r2 = annulus_radius(d, inner, outer, (u + du).min(1.0));
        prop_assert!(r >= inner - 1e-12 && r <= outer + 1e-12);
        prop_assert!(r2 >= r - 1e-12);
    }

    #[test]
    fn pooled_sums_ignore_batch_boundaries(terms in prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..1e-3], 1..400), cut in 0usize..400) {
        let cut = cut.min(terms.len());
        let mut whole = EstimatorState::new(terms.len(), 0, FailureSet::new(1));
        whole.absorb(&terms);
        let mut split = EstimatorState::new(terms.len(), 0, FailureSet::new(1));
        split.absorb(&terms[..cut]);
        split.absorb(&terms[cut..]);
        prop_assert_eq!(whole.sum_weights().to_bits(), split.sum_weights().to_bits());
        prop_assert_eq!(whole.sum_sq_weights().to_bits(), split.sum_sq_weights().to_bits());
        prop_assert_eq!(whole.estimate().to_bits(), split.estimate().to_bits());
    }

    #[test]
    fn csv_numbers_round_trip(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        prop_assert_eq!(csv_number(Some(v)).parse::<f64>().unwrap().to_bits(), v.to_bits());
    }

    #[test]
    fn clustering_labels_are_consistent(pts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 1..30), seed in 0u64..1000) {
        let pts: Vec<DVector<f64>> = pts.into_iter().map(DVector::from_vec).collect();
        let c = select_clusters(&pts, &ClusterConfig::default(), seed, 0, Execution::Sequential).unwrap();
        prop_assert_eq!(c.labels.len(), pts.len());
        prop_assert!(c.labels.iter().all(|&l| l < c.n_clusters));
        prop_assert_eq!(c.sizes().iter().sum::<usize>(), pts.len());
        prop_assert!(c.sizes().iter().all(|&s| s > 0));
        if let Some(s) = c.mean_silhouette {
            prop_assert!((-1.0..=1.0).contains(&s));
        }
        let again = select_clusters(&pts, &ClusterConfig::default(), seed, 0, Execution::Parallel).unwrap();
        prop_assert_eq!(c, again);
    }
}
