use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use medmi::config::RunConfig;
use medmi::io::{read_dataset_file, read_records, write_dataset_file};
use medmi_core::datagen::{generate_complete, DgmParams};
use medmi_core::impute::complete_cases;
use medmi_core::mediation::dr_gcomp;
use medmi_core::variance::Estimand;
use medmi_core::{AnalysisSpec, CellTable, StreamSeed};

fn medmi(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_medmi"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn generated_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    ok(&medmi(dir.path(), &["generate", "--n", "2000", "--mdag", "A", "--seed", "5"]));
    let path = dir.path().join("data.csv");
    let data = read_dataset_file(&path).unwrap();
    assert_eq!(data.n(), 2000);

    let mut c = RunConfig::default();
    c.scenario.n = 2000;
    c.scenario.base_seed = 5;
    let expected = medmi::cli::generated_dataset(&c).unwrap();
    assert_eq!(data.rows(), expected.rows());
    assert_eq!(data.mask(), expected.mask());

    let copy = dir.path().join("copy.csv");
    write_dataset_file(&data, &copy).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&copy).unwrap());

    let any = (0..data.n()).filter(|&i| data.mask()[i] != 0).count() as f64 / 2000.0;
    assert!((any - 0.49).abs() < 0.04, "{any}");
    let header = std::fs::read_to_string(&path).unwrap();
    assert!(header.starts_with("A,C1,C2,C3,X,Z,Y\n"));
    assert!(header.contains("NA"));
}

#[test]
fn generate_is_seed_stable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        ok(&medmi(d.path(), &["generate", "--n", "500", "--seed", "9", "--mdag", "D"]));
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("data.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    ok(&medmi(b.path(), &["generate", "--n", "500", "--seed", "10", "--mdag", "D"]));
    assert_ne!(read(&a), read(&b));
}

#[test]
fn truth_is_cached_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let t0 = Instant::now();
    let first = ok(&medmi(dir.path(), &["truth"]));
    let cold = t0.elapsed();
    let truth = std::fs::read(dir.path().join("truth.json")).unwrap();
    let t1 = Instant::now();
    let second = ok(&medmi(dir.path(), &["truth"]));
    assert!(t1.elapsed() < cold);
    assert_eq!(first, second);
    assert_eq!(truth, std::fs::read(dir.path().join("truth.json")).unwrap());
    let v: serde_json::Value = serde_json::from_slice(&truth).unwrap();
    let (ind, dir_) = (v["indirect"].as_f64().unwrap(), v["direct"].as_f64().unwrap());
    assert!((ind - 0.055).abs() < 0.003 && (dir_ - 0.077).abs() < 0.003, "{ind} {dir_}");
    let cached = std::fs::read_dir(dir.path()).unwrap().filter(|e| {
        e.as_ref().unwrap().file_name().to_string_lossy().starts_with("truth-")
    });
    assert_eq!(cached.count(), 1);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    assert_eq!(code(&medmi(&missing, &["truth"])), 2);
    assert_eq!(code(&medmi(dir.path(), &["generate", "--mdag", "Q"])), 2);
    assert_eq!(code(&medmi(dir.path(), &["generate", "--n", "0"])), 2);
    assert_eq!(code(&medmi(dir.path(), &["frobnicate"])), 2);
    assert_eq!(code(&medmi(dir.path(), &["analyze", "absent.csv"])), 3);

    let csv = dir.path().join("na.csv");
    std::fs::write(&csv, "A,C1,C2,C3,X,Z,Y\n0,NA,0,1,0,0,1\n1,1,0,0,1,1,0\n").unwrap();
    let out = medmi(dir.path(), &["analyze", csv.to_str().unwrap(), "--method", "cca"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("C1"));

    ok(&medmi(dir.path(), &["generate", "--n", "300"]));
    let data = dir.path().join("data.csv");
    let out = medmi(dir.path(), &["analyze", data.to_str().unwrap(), "--method", "mi-zint", "--estimator", "dr"]);
    assert_eq!(code(&out), 2);

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "schema_version = 1\nunknown_key = 3\n").unwrap();
    assert_eq!(code(&medmi(dir.path(), &["config", "--config", bad.to_str().unwrap()])), 2);
}

#[test]
fn complete_case_analysis_of_a_complete_file_is_plain_g_computation() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_complete(1500, &DgmParams::default(), &mut StreamSeed(21).stream(0)).unwrap();
    let csv = dir.path().join("complete.csv");
    write_dataset_file(&data, &csv).unwrap();
    let stdout = ok(&medmi(dir.path(), &["analyze", csv.to_str().unwrap(), "--method", "cca", "--b", "20"]));
    assert!(stdout.contains("CCA"));
    let text = std::fs::read_to_string(dir.path().join("analysis.json")).unwrap();
    let reports: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(reports.as_array().unwrap().len(), 1);

    let read = read_dataset_file(&csv).unwrap();
    let table = CellTable::from_dataset(&complete_cases(&read).unwrap()).unwrap();
    let e = dr_gcomp(&table, &AnalysisSpec::default()).unwrap();
    for (k, want) in [(Estimand::Indirect, e.indirect), (Estimand::Direct, e.direct), (Estimand::Total, e.total)] {
        let got = reports[0]["analysis"]["results"][k.index()]["point"].as_f64().unwrap();
        assert!((got - want).abs() < 1e-12, "{k:?}: {got} vs {want}");
        let lo = reports[0]["analysis"]["results"][k.index()]["ci_low"].as_f64().unwrap();
        assert!(lo < got);
    }
}

#[test]
fn auxiliary_columns_are_carried_into_imputation() {
    let dir = tempfile::tempdir().unwrap();
    ok(&medmi(dir.path(), &["generate", "--n", "400", "--mdag", "C"]));
    let text = std::fs::read_to_string(dir.path().join("data.csv")).unwrap();
    // append an extra complete binary column
    let mut lines = text.lines();
    let mut with_aux = format!("{},S\n", lines.next().unwrap());
    for (i, l) in lines.enumerate() {
        with_aux += &format!("{l},{}\n", i % 2);
    }
    let csv = dir.path().join("aux.csv");
    std::fs::write(&csv, with_aux).unwrap();
    assert_eq!(read_dataset_file(&csv).unwrap().aux_names(), ["S"]);
    let args =
        ["analyze", csv.to_str().unwrap(), "--method", "mi-noint", "--variance", "miboot", "--m", "2", "--b", "3"];
    ok(&medmi(dir.path(), &args));
}

fn small_simulation(dir: &Path, threads: &str) -> Output {
    medmi(
        dir,
        &[
            "simulate", "--reps", "4", "--n", "800", "--method", "cca,mi-noint", "--variance", "miboot,bootmi", "--m", "2",
            "--b", "4", "--threads", threads,
        ],
    )
}

#[test]
fn small_simulation_is_fast_and_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let t0 = Instant::now();
    let table = ok(&small_simulation(a.path(), "1"));
    assert!(t0.elapsed() < Duration::from_secs(60));
    ok(&small_simulation(b.path(), "2"));
    for f in ["raw.jsonl", "metrics.csv", "report.txt"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    assert!(table.contains("MI-noint (MIBoot)") && table.contains("MI-noint (BootMI)"));
    let records = read_records(std::io::BufReader::new(std::fs::File::open(a.path().join("raw.jsonl")).unwrap())).unwrap();
    assert_eq!(records.len(), 4 * 3 * 3);
    let first = std::fs::read_to_string(a.path().join("raw.jsonl")).unwrap();
    assert!(first.lines().next().unwrap().contains("\"schema_version\":1"));
}

#[test]
fn report_matches_golden_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let metrics = golden.join("metrics.csv");
    let stdout = ok(&medmi(dir.path(), &["report", metrics.to_str().unwrap(), "--config", golden.join("plots.toml").to_str().unwrap()]));
    let expected = std::fs::read_to_string(golden.join("report.txt")).unwrap();
    assert_eq!(stdout, expected);
    assert_eq!(std::fs::read_to_string(dir.path().join("report.txt")).unwrap(), expected);
    assert_eq!(std::fs::read(dir.path().join("metrics.csv")).unwrap(), std::fs::read(&metrics).unwrap());
    let svgs = std::fs::read_dir(dir.path()).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "svg"));
    assert!(svgs.count() > 0);
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    assert_ne!(code(&medmi(dir.path(), &["report", empty.to_str().unwrap()])), 0);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[scenario]\nreps = 10\nn = 700\nmethods = [\"cca\"]\n\n[scenario.variance]\nboot_b = 7\n").unwrap();
    let base = ok(&medmi(dir.path(), &["config", "--config", cfg.to_str().unwrap()]));
    let c = RunConfig::from_toml(&base).unwrap();
    assert_eq!((c.scenario.reps, c.scenario.n, c.scenario.variance.boot_b), (10, 700, 7));
    let over = ok(&medmi(dir.path(), &["config", "--config", cfg.to_str().unwrap(), "--reps", "3", "--b", "9", "--mdag", "F"]));
    let c = RunConfig::from_toml(&over).unwrap();
    assert_eq!((c.scenario.reps, c.scenario.n, c.scenario.variance.boot_b), (3, 700, 9));
    assert_eq!(c.scenario.mdag.to_string(), "F");
    let full = RunConfig::from_toml(&ok(&medmi(dir.path(), &["config", "--full"]))).unwrap();
    assert_eq!(full.scenario.reps, 2000);
}
