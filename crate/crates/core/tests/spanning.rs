mod common;

use common::{gaussian, ks_distance, random_panel};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use spanlab::dgp::{catalog_entry, simulate_panel};
use spanlab::regression::NodewiseResiduals;
use spanlab::spanning::{
    batch_mean_ttest, bcs_test, block_count, cauchy_combine, cauchy_combine_equal, make_batch_plan,
    moment_series, panel_moments, random_weights, BcsAnalysis, BcsConfig, Degeneracy, Hypothesis, PValue,
};
use spanlab::{Error, ReturnPanel};
use statrs::distribution::{ContinuousCDF, StudentsT};

fn fake_fit(v1: &[f64], v2: &[f64], v3: &[f64]) -> NodewiseResiduals {
    let z = DVector::zeros(2);
    NodewiseResiduals {
        theta1: z.clone(),
        theta2: z.clone(),
        theta3: z,
        v1: DVector::from_row_slice(v1),
        v2: DVector::from_row_slice(v2),
        v3: DVector::from_row_slice(v3),
        g1_sq: 0.0,
        g2_sq: 0.0,
        g3_sq: 0.0,
        exact_fit: false,
    }
}

#[test]
fn moment_rows_are_products() {
    let f = fake_fit(&[1.0, -1.0, 0.0], &[2.0, 2.0, 2.0], &[0.5, 0.5, 0.5]);
    let m = moment_series(&[f]).unwrap();
    assert_eq!(m.values().nrows(), 2);
    assert_eq!(m.row(0), vec![2.0, -2.0, 0.0]);
    assert_eq!(m.row_mean(0), 0.0);
    assert_eq!(m.row(1), vec![0.5, -0.5, 0.0]);
}

#[test]
fn moment_length_mismatch() {
    let a = fake_fit(&[1.0, 2.0, 3.0], &[1.0; 3], &[1.0; 3]);
    let b = fake_fit(&[1.0, 2.0], &[1.0; 2], &[1.0; 2]);
    assert!(matches!(moment_series(&[a, b]), Err(Error::LengthMismatch { .. })));
}

#[test]
fn spanned_asset_rows_vanish() {
    let b = gaussian(60, 2, 4);
    let tests = DMatrix::from_fn(60, 2, |s, _| b[(s, 1)]);
    let panel = ReturnPanel::from_blocks(&b, &tests).unwrap();
    let m = panel_moments(&panel).unwrap();
    for r in 0..4 {
        assert!(m.row(r).iter().all(|v| *v == 0.0));
    }
}

#[test]
fn null_moment_means_are_small() {
    let spec = catalog_entry("DGP1").unwrap().with_dims(2, 5, 250);
    for seed in 0..20 {
        let m = panel_moments(&simulate_panel(&spec, seed).unwrap()).unwrap();
        let bound = 5.0 / 250f64.sqrt();
        for r in 0..10 {
            assert!(m.row_mean(r).abs() <= bound, "seed {seed} row {r}");
        }
    }
}

#[test]
fn batch_plan_examples() {
    assert_eq!(make_batch_plan(250, 1.0 / 3.0, 2, 0).unwrap().block_count(), 6);
    assert_eq!(make_batch_plan(250, 2.0 / 3.0, 2, 0).unwrap().block_count(), 39);
    let p = make_batch_plan(8, 0.5, 0, 0).unwrap();
    assert_eq!(p.blocks, vec![0..4, 4..8]);
    assert!(make_batch_plan(3, 0.5, 0, 0).is_err());
    assert!(make_batch_plan(100, 1.0, 0, 0).is_err());
    assert!(make_batch_plan(100, 0.0, 0, 0).is_err());
    assert_eq!(block_count(216, 1.0 / 3.0), 6);
}

#[test]
fn unit_weights_at_depth_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    assert!(random_weights(50, 0, &mut rng).iter().all(|w| *w == 1.0));
}

#[test]
fn weight_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let k1 = random_weights(1_000_000, 1, &mut rng);
    let mean1 = k1.iter().sum::<f64>() / 1e6;
    assert!((mean1 - 1.0).abs() < 0.005, "{mean1}");
    let k2 = random_weights(1_000_000, 2, &mut rng);
    let mean2 = k2.iter().sum::<f64>() / 1e6;
    let var2 = k2.iter().map(|k| (k - mean2).powi(2)).sum::<f64>() / (1e6 - 1.0);
    assert!((var2 - 3.0).abs() < 0.05, "{var2}");
}

#[test]
fn alternating_block_means() {
    let plan = make_batch_plan(36, 0.5, 0, 0).unwrap();
    assert_eq!(plan.block_count(), 6);
    let series: Vec<f64> = (0..36).map(|s| if (s / 6) % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let r = batch_mean_ttest(&series, &plan, &vec![1.0; 36]).unwrap();
    assert_eq!(r.grand_mean, 0.0);
    assert_eq!(r.t_stat, 0.0);
    assert_eq!(r.p_value, 1.0);
    assert_eq!(r.degenerate, None);
}

#[test]
fn degenerate_series() {
    let plan = make_batch_plan(60, 0.5, 0, 0).unwrap();
    let ones = vec![1.0; 60];
    let r = batch_mean_ttest(&vec![0.3; 60], &plan, &ones).unwrap();
    assert_eq!(r.degenerate, Some(Degeneracy::ZeroVariance));
    assert_eq!(r.p_value, 0.0);
    let z = batch_mean_ttest(&vec![0.0; 60], &plan, &ones).unwrap();
    assert_eq!(z.degenerate, Some(Degeneracy::ZeroMoment));
    assert_eq!(z.p_value, 1.0);
    assert!(batch_mean_ttest(&vec![0.0; 59], &plan, &ones).is_err());
}

#[test]
fn batch_t_null_distribution() {
    let plan = make_batch_plan(240, 1.0 / 3.0, 0, 0).unwrap();
    assert_eq!(plan.block_count(), 6);
    let w = vec![1.0; 240];
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut t_stats = Vec::with_capacity(10_000);
    let mut pvals = Vec::with_capacity(10_000);
    for _ in 0..10_000 {
        let s: Vec<f64> = (0..240).map(|_| rng.sample(StandardNormal)).collect();
        let r = batch_mean_ttest(&s, &plan, &w).unwrap();
        t_stats.push(r.t_stat);
        pvals.push(r.p_value);
    }
    let t5 = StudentsT::new(0.0, 1.0, 5.0).unwrap();
    assert!(ks_distance(&mut t_stats, |x| t5.cdf(x)) < 0.02);
    assert!(ks_distance(&mut pvals, |p| p.clamp(0.0, 1.0)) < 0.02);
}

#[test]
fn cct_examples() {
    assert!((cauchy_combine(&[0.37], &[1.0]).unwrap() - 0.37).abs() < 1e-12);
    assert!((cauchy_combine(&[0.2, 0.2, 0.2], &[0.5, 0.3, 0.2]).unwrap() - 0.2).abs() < 1e-12);
    assert!((cauchy_combine(&[0.01, 0.99], &[0.5, 0.5]).unwrap() - 0.5).abs() < 1e-12);
    assert_eq!(cauchy_combine(&[], &[]), Err(Error::EmptyInput));
    assert!(matches!(cauchy_combine(&[0.1, 0.2], &[0.5, 0.6]), Err(Error::WeightSumViolation(_))));
    let tiny = cauchy_combine_equal(&[0.0, 0.5]).unwrap();
    assert!(tiny.is_finite() && tiny < 1e-10);
}

#[test]
fn cct_level_at_one_percent() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let reps = 100_000;
    let mut hits = 0;
    for _ in 0..reps {
        let p: Vec<f64> = (0..100).map(|_| rng.random::<f64>()).collect();
        if cauchy_combine_equal(&p).unwrap() <= 0.01 {
            hits += 1;
        }
    }
    let rate = hits as f64 / reps as f64;
    assert!((rate - 0.01).abs() <= 0.003, "{rate}");
}

#[test]
fn exact_copies_give_unit_p() {
    let b = gaussian(250, 2, 9);
    let tests = DMatrix::from_fn(250, 2, |s, _| b[(s, 0)]);
    let panel = ReturnPanel::from_blocks(&b, &tests).unwrap();
    let a = BcsAnalysis::new(&panel, &BcsConfig::default()).unwrap();
    assert!(a.series_tests.iter().all(|s| s.degenerate == Some(Degeneracy::ZeroMoment)));
    for h in Hypothesis::ALL {
        let p = a.outcome(h).point().unwrap();
        assert!(p > 1.0 - 1e-12, "{h}: {p}");
    }
}

#[test]
fn dgp1_size_near_nominal() {
    let spec = catalog_entry("DGP1").unwrap();
    let mut rej = 0;
    for rep in 0..500u64 {
        let panel = simulate_panel(&spec, 10_000 + rep).unwrap();
        let cfg = BcsConfig { seed: rep, ..BcsConfig::default() };
        if bcs_test(&panel, Hypothesis::Joint, &cfg).unwrap().point().unwrap() < 0.05 {
            rej += 1;
        }
    }
    let rate = rej as f64 / 500.0;
    assert!((0.023..=0.073).contains(&rate), "{rate}");
}

#[test]
fn outcome_diagnostics() {
    let panel = random_panel(250, 2, 3, 1);
    let o = bcs_test(&panel, Hypothesis::Alpha, &BcsConfig { zeta: 0.5, depth: 1, seed: 4 }).unwrap();
    assert_eq!(o.test, "BCS1-alpha");
    assert_eq!(o.per_asset_pvalues.len(), 3);
    assert_eq!(o.diagnostics.blocks, Some(15));
    assert_eq!(o.diagnostics.depth, Some(1));
    assert!(matches!(o.p, PValue::Point(_)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn plan_partition(t in 4usize..2000, zeta in 0.05f64..0.95) {
        let p = make_batch_plan(t, zeta, 0, 0).unwrap();
        prop_assert!(p.block_count() >= 2);
        prop_assert_eq!(p.blocks[0].start, 0);
        prop_assert_eq!(p.blocks.last().unwrap().end, t);
        for w in p.blocks.windows(2) {
            prop_assert_eq!(w[0].end, w[1].start);
        }
        let sizes: Vec<usize> = p.blocks.iter().map(|b| b.len()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        // Remainder-first: sizes never increase.
        prop_assert!(sizes.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn t_identity_and_scale_invariance(seed in any::<u64>(), c in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let plan = make_batch_plan(120, 1.0 / 3.0, 2, seed).unwrap();
        let w = plan.weights();
        let s: Vec<f64> = (0..120).map(|_| rng.sample::<f64, _>(StandardNormal) + 0.1).collect();
        let r = batch_mean_ttest(&s, &plan, &w).unwrap();
        let b = plan.block_count() as f64;
        prop_assert!((r.t_stat - b.sqrt() * r.grand_mean / r.variance.sqrt()).abs() < 1e-12 * r.t_stat.abs().max(1.0));
        let tb = StudentsT::new(0.0, 1.0, b - 1.0).unwrap();
        prop_assert!((r.p_value - 2.0 * (1.0 - tb.cdf(r.t_stat.abs()))).abs() < 1e-9);
        let scaled: Vec<f64> = s.iter().map(|x| x * c).collect();
        let q = batch_mean_ttest(&scaled, &plan, &w).unwrap();
        prop_assert!((q.t_stat - r.t_stat).abs() < 1e-9 * r.t_stat.abs().max(1.0));
        prop_assert!((q.p_value - r.p_value).abs() < 1e-10);
    }

    #[test]
    fn cct_monotone(p in prop::collection::vec(0.001f64..0.999, 2..20), i in any::<prop::sample::Index>(), f in 0.1f64..0.9) {
        let w = vec![1.0 / p.len() as f64; p.len()];
        let total: f64 = w.iter().sum();
        let w: Vec<f64> = w.iter().map(|x| x / total).collect();
        let base = cauchy_combine(&p, &w).unwrap();
        let mut q = p.clone();
        let j = i.index(q.len());
        q[j] *= f;
        prop_assert!(cauchy_combine(&q, &w).unwrap() < base);
        prop_assert!((0.0..=1.0).contains(&base));
    }

    #[test]
    fn cct_equal_inputs(p in 0.001f64..0.999, raw in prop::collection::vec(0.01f64..1.0, 1..10)) {
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let pv = vec![p; w.len()];
        match cauchy_combine(&pv, &w) {
            Ok(v) => prop_assert!((v - p).abs() < 1e-10),
            Err(Error::WeightSumViolation(_)) => {}
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn bcs_deterministic_and_consistent(seed in 0u64..1000, n in 1usize..5) {
        let panel = random_panel(120, 2, n, seed);
        let cfg = BcsConfig { zeta: 1.0 / 3.0, depth: 2, seed };
        let a = BcsAnalysis::new(&panel, &cfg).unwrap();
        let joint = a.outcome(Hypothesis::Joint);
        let mut both = a.outcome(Hypothesis::Alpha).per_asset_pvalues;
        both.extend(a.outcome(Hypothesis::Delta).per_asset_pvalues);
        prop_assert_eq!(&joint.per_asset_pvalues, &both);
        let again = bcs_test(&panel, Hypothesis::Joint, &cfg).unwrap();
        prop_assert_eq!(joint, again);
    }
}
