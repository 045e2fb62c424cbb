use medmi_core::datagen::{generate_complete, impose_missingness, DgmParams, MdagLabel, MdagSpec};
use medmi_core::impute::{MethodKind, MissingMethod};
use medmi_core::mediation::EstimatorKind;
use medmi_core::variance::{
    boot_mi, boot_mi_anova, boot_variance, mi_boot, rubin_pool, Components, Estimand, PooledResult, Z_95,
};
use medmi_core::{AnalysisSpec, CellTable, StreamSeed, Var};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn bootstrap_variance_of_a_proportion() {
    let data = generate_complete(500, &DgmParams::default(), &mut StreamSeed(1).stream(0)).unwrap();
    let table = CellTable::from_dataset(&data).unwrap();
    let p = table.prevalence(Var::Y);
    let reps = boot_variance(&table, |t, _| Ok::<_, String>(vec![t.prevalence(Var::Y)]), 4000, &mut StreamSeed(2).stream(0))
        .unwrap();
    assert_eq!(reps.estimates.len(), 4000);
    let v = reps.variances()[0];
    let expected = p * (1.0 - p) / 500.0;
    // relative MC error of a variance from 4000 draws is about 2.2%
    assert!((v / expected - 1.0).abs() < 0.1, "{v} vs {expected}");
}

#[test]
fn bootstrap_replicates_are_seed_stable() {
    let data = generate_complete(300, &DgmParams::default(), &mut StreamSeed(3).stream(0)).unwrap();
    let table = CellTable::from_dataset(&data).unwrap();
    let run = || boot_variance(&table, |t, _| Ok::<_, String>(vec![t.prevalence(Var::X)]), 50, &mut StreamSeed(4).stream(0));
    assert_eq!(run().unwrap(), run().unwrap());
}

fn total_ss(groups: &[Vec<f64>]) -> f64 {
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    all.iter().map(|x| (x - mean).powi(2)).sum()
}

#[test]
fn anova_partitions_the_total_sum_of_squares() {
    let mut rng = StreamSeed(5).stream(0);
    for _ in 0..200 {
        let b = rng.random_range(2..30);
        let m = rng.random_range(2..6);
        let groups: Vec<Vec<f64>> =
            (0..b).map(|_| (0..m).map(|_| rng.random::<f64>() * 0.2 - 0.1).collect()).collect();
        let (grand, c) = boot_mi_anova(&groups).unwrap();
        let Components::BootMi { msb, msw, .. } = c else { panic!() };
        let lhs = msb * (b - 1) as f64 + msw * (b * (m - 1)) as f64;
        assert!((lhs - total_ss(&groups)).abs() < 1e-10);
        let flat_mean = groups.iter().flatten().sum::<f64>() / (b * m) as f64;
        assert!((grand - flat_mean).abs() < 1e-14);
    }
}

#[test]
fn anova_hand_example() {
    let (grand, c) = boot_mi_anova(&[vec![1.0, 3.0], vec![5.0, 7.0]]).unwrap();
    assert_eq!(grand, 4.0);
    let Components::BootMi { msb, msw, sigma2_inf, sigma2_wb, .. } = c else { panic!() };
    assert_eq!((msb, msw, sigma2_inf, sigma2_wb), (16.0, 2.0, 7.0, 2.0));
    assert!((c.variance() - 11.0).abs() < 1e-12);
    let r = PooledResult::new(Estimand::Indirect, grand, c, 0);
    assert!((r.ci_high - r.ci_low - 2.0 * Z_95 * 11f64.sqrt()).abs() < 1e-12);
}

#[test]
fn rubin_with_identical_estimates_is_within_variance() {
    let r = rubin_pool(Estimand::Direct, &[0.07; 10], &[0.0004, 0.0002, 0.0003, 0.0003, 0.0003, 0.0002, 0.0004, 0.0003, 0.0003, 0.0003]).unwrap();
    assert!((r.se * r.se - 0.0003).abs() < 1e-15);
    assert!((r.point - 0.07).abs() < 1e-15);
}

#[test]
fn boot_mi_variance_does_not_grow_with_b() {
    let at = |b: usize| Components::BootMi { sigma2_inf: 2e-4, sigma2_wb: 5e-4, msb: 0.0, msw: 0.0, b, m: 2 }.variance();
    for b in 2..500 {
        assert!(at(b + 1) <= at(b));
    }
}

proptest! {
    #[test]
    fn pooled_variances_are_never_negative(values in prop::collection::vec(-1.0f64..1.0, 4..60), m in 2usize..5) {
        let b = values.len() / m;
        prop_assume!(b >= 2);
        let groups: Vec<Vec<f64>> = values.chunks_exact(m).take(b).map(|c| c.to_vec()).collect();
        let (_, c) = boot_mi_anova(&groups).unwrap();
        prop_assert!(c.variance() >= 0.0);
        if let Components::BootMi { sigma2_inf, .. } = c {
            prop_assert!(sigma2_inf >= 0.0);
        }
        let r = rubin_pool(Estimand::Total, &values, &vec![0.0; values.len()]).unwrap();
        prop_assert!(r.se >= 0.0 && r.ci_low <= r.point && r.point <= r.ci_high);
    }
}

#[test]
fn mi_boot_and_boot_mi_points_agree_on_average() {
    let params = DgmParams::default();
    let spec = AnalysisSpec::default();
    let method = MissingMethod::new(MethodKind::NoInt).with_cycles(3);
    let reps = 200;
    let mut diffs = [Vec::new(), Vec::new(), Vec::new()];
    for rep in 0..reps {
        let seed = StreamSeed(600).child(rep);
        let complete = generate_complete(1000, &params, &mut seed.stream(0)).unwrap();
        let data = impose_missingness(&complete, &MdagSpec::preset(MdagLabel::A), &mut seed.stream(1)).unwrap();
        let a = mi_boot(&data, &method, EstimatorKind::Dr, &spec, 4, 2, &mut seed.stream(2)).unwrap();
        let b = boot_mi(&data, &method, EstimatorKind::Dr, &spec, 4, 2, &mut seed.stream(3)).unwrap();
        for e in Estimand::ALL {
            diffs[e.index()].push(a.get(e).point - b.get(e).point);
        }
    }
    for (k, d) in diffs.iter().enumerate() {
        let mean = d.iter().sum::<f64>() / reps as f64;
        let sd = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
        assert!(mean.abs() < 3.0 * sd / (reps as f64).sqrt(), "estimand {k}: mean difference {mean}, sd {sd}");
    }
}
