use medmi_core::datagen::{DgmParams, MdagLabel, MdagSpec};
use medmi_core::impute::MethodKind;
use medmi_core::simstudy::{compute_metrics, estimate_truth, run_replication, sort_records, RawRecord, ScenarioConfig};
use medmi_core::variance::{Estimand, VarianceApproach, VarianceSettings};
use medmi_core::{StreamSeed, Term, Var};
use rand::seq::SliceRandom;

fn small(reps: usize) -> ScenarioConfig {
    ScenarioConfig {
        mdag: MdagLabel::A,
        n: 1000,
        reps,
        methods: vec![MethodKind::Cca, MethodKind::NoInt],
        approaches: vec![VarianceApproach::MiBoot],
        variance: VarianceSettings { boot_b: 10, miboot_m: 2, miboot_b: 5, bootmi_b: 5, bootmi_m: 2 },
        cycles: 2,
        ..Default::default()
    }
}

fn run_all(config: &ScenarioConfig) -> Vec<RawRecord> {
    let params = DgmParams::default();
    let mdag = MdagSpec::preset(config.mdag);
    let mut out: Vec<RawRecord> =
        (0..config.reps).flat_map(|r| run_replication(config, &params, &mdag, r).unwrap()).collect();
    sort_records(&mut out);
    out
}

#[test]
fn two_reps_two_methods_give_twelve_rows() {
    let records = run_all(&small(2));
    assert_eq!(records.len(), 2 * 2 * 3);
    assert!(records.iter().all(|r| !r.failed() && r.se.unwrap() > 0.0));
    assert_eq!(records, run_all(&small(2)));
    let mut other = small(2);
    other.base_seed += 1;
    assert_ne!(records, run_all(&other));
}

#[test]
fn complete_cases_are_a_strict_subset_of_the_imputation_input() {
    for r in run_all(&small(2)).iter().filter(|r| r.estimand == Estimand::Indirect) {
        match r.method {
            MethodKind::Cca => assert!(r.n_rows < 1000 && r.n_rows > 0),
            _ => assert_eq!(r.n_rows, 1000),
        }
    }
}

#[test]
fn a_cell_does_not_depend_on_the_other_cells() {
    let both = run_all(&small(2));
    let mut only = small(2);
    only.methods = vec![MethodKind::NoInt];
    let alone = run_all(&only);
    let from_both: Vec<_> = both.into_iter().filter(|r| r.method == MethodKind::NoInt).collect();
    assert_eq!(from_both, alone);
}

#[test]
fn metrics_ignore_record_order() {
    let records = run_all(&small(4));
    let truth = estimate_truth(&DgmParams::default(), 20_000, 1).unwrap();
    let a = compute_metrics(&records, &truth).unwrap();
    let mut shuffled = records.clone();
    shuffled.shuffle(&mut StreamSeed(3).stream(0));
    let b = compute_metrics(&shuffled, &truth).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.rows.len(), 2 * 3);
    let row = a.find(Estimand::Indirect, MethodKind::Cca, Some(VarianceApproach::Boot)).unwrap();
    assert_eq!(row.reps, 4);
    assert!(row.coverage.unwrap() >= 0.0 && row.coverage.unwrap() <= 100.0);
}

#[test]
fn truth_is_stable_across_seeds() {
    let params = DgmParams::default();
    let a = estimate_truth(&params, 1_000_000, 1).unwrap();
    let b = estimate_truth(&params, 1_000_000, 2).unwrap();
    assert!((a.indirect - b.indirect).abs() < 0.002 && (a.direct - b.direct).abs() < 0.002, "{a:?} {b:?}");
    assert!((a.total - a.indirect - a.direct).abs() < 1e-15);
    assert!((a.indirect - 0.055).abs() < 0.003 && (a.direct - 0.077).abs() < 0.003, "{a:?}");
}

#[test]
fn no_causal_path_gives_null_truth() {
    let params = DgmParams::default()
        .with_coef(Var::Z, Term::Main(Var::X), 0.0)
        .with_coef(Var::Y, Term::Main(Var::X), 0.0)
        .with_coef(Var::Y, Term::interaction(Var::X, Var::Z), 0.0);
    let t = estimate_truth(&params, 1_000_000, 4).unwrap();
    assert!(t.indirect.abs() < 0.002 && t.direct.abs() < 0.002, "{t:?}");
}
