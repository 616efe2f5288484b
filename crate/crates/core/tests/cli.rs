use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn onemax(args: &[&str], cache: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_onemax"))
        .args(args)
        .env("ONEMAX_CACHE_DIR", cache)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn rows(text: &str) -> Vec<Vec<String>> {
    assert!(!text.contains('\r'));
    text.lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn policy_tables_for_three_bits() {
    let cache = tempfile::tempdir().unwrap();
    let text = stdout(&onemax(&["policy", "--algo", "rls", "--mode", "opt", "--n", "3"], cache.path()));
    assert_eq!(text, "level,value\n0,3\n1,2\n2,1\n");

    let text = stdout(&onemax(&["policy", "--algo", "ea-res", "--mode", "opt", "--n", "3", "--p-min", "0"], cache.path()));
    let r = rows(&text);
    assert_eq!(r[0], ["level", "value"]);
    let values: Vec<f64> = r[1..].iter().map(|row| row[1].parse().unwrap()).collect();
    assert!((values[0] - 1.0).abs() < 1e-9);
    assert!((values[1] - 0.75).abs() < 1e-6);
    assert_eq!(values[2], 0.0);
}

#[test]
fn back_policy_and_sidecar() {
    let cache = tempfile::tempdir().unwrap();
    let out = cache.path().join("back.csv");
    stdout(&onemax(
        &["policy", "--algo", "ea", "--mode", "back", "--n", "1000", "--out", out.to_str().unwrap()],
        cache.path(),
    ));
    let r = rows(&fs::read_to_string(&out).unwrap());
    assert_eq!(r.len(), 1001);
    let p: f64 = r[601][1].parse().unwrap();
    assert_eq!(r[601][0], "600");
    assert_eq!(p, 1.0 / 202.0);
    let p: f64 = r[1][1].parse().unwrap();
    // below half the rule is undefined and the drift-maximizing rate is used
    assert_eq!(p, 1.0);

    let sidecar: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.with_extension("json")).unwrap()).unwrap();
    assert_eq!(sidecar["n"], 1000);
    assert_eq!(sidecar["values"], "rates");
    assert!(sidecar["expected_time"].as_f64().unwrap() > 16_000.0);
}

#[test]
fn runtime_table_and_levels() {
    let cache = tempfile::tempdir().unwrap();
    let levels = cache.path().join("levels");
    let text = stdout(&onemax(
        &[
            "runtime", "--algo", "rls", "--mode", "opt", "--dims", "3,10", "--normalize", "--gradient",
            "--levels-dir", levels.to_str().unwrap(),
        ],
        cache.path(),
    ));
    let r = rows(&text);
    assert_eq!(r[0], ["algorithm", "mode", "p_min", "n", "expected_time", "normalized_time"]);
    assert_eq!(r[1][..4], ["rls", "opt", "", "3"]);
    let total: f64 = r[1][4].parse().unwrap();
    assert!((total - 2.375).abs() < 1e-12);
    let normalized: f64 = r[1][5].parse().unwrap();
    assert!((normalized - 2.375 / (3.0 * 3f64.ln())).abs() < 1e-12);

    let files: Vec<_> = fs::read_dir(&levels).unwrap().collect();
    assert_eq!(files.len(), 2);
    let per_level = fs::read_dir(&levels)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.to_str().unwrap().ends_with("_n3.csv"))
        .unwrap();
    let r = rows(&fs::read_to_string(per_level).unwrap());
    assert_eq!(r[0], ["level", "remaining_time", "gradient"]);
    assert_eq!(r.len(), 5);
    assert_eq!(r[4][1], "0");
}

#[test]
fn usage_errors_exit_nonzero() {
    let cache = tempfile::tempdir().unwrap();
    let cases: &[&[&str]] = &[
        &["policy", "--algo", "rls", "--mode", "back", "--n", "5"],
        &["policy", "--algo", "ea", "--mode", "opt", "--n", "5", "--p-min", "1/n"],
        &["policy", "--algo", "rls", "--mode", "opt", "--n", "0"],
        &["runtime", "--algo", "rls", "--mode", "opt", "--dims", "1", "--normalize"],
        &["runtime", "--algo", "rls", "--mode", "opt", "--dims", "5", "--gradient"],
        &["simulate", "--algo", "rls", "--mode", "opt", "--n", "5", "--runs", "0"],
        &["simulate", "--algo", "rls", "--mode", "opt", "--n", "5", "--runs", "3", "--budgets", "0"],
        &["simulate", "--algo", "rls", "--mode", "opt", "--n", "5", "--runs", "3", "--targets", "6"],
        &["table", "--dims", "5", "--algos", "rls:sideways"],
        &["policy", "--algo", "nope", "--mode", "opt", "--n", "5"],
    ];
    for args in cases {
        let out = onemax(args, cache.path());
        assert!(!out.status.success(), "{args:?} should fail");
        assert!(!out.stderr.is_empty(), "{args:?} should explain itself");
    }
}

#[test]
fn no_compute_requires_a_cached_policy() {
    let cache = tempfile::tempdir().unwrap();
    let args = ["runtime", "--algo", "ea", "--mode", "opt", "--dims", "20", "--no-compute"];
    let out = onemax(&args, cache.path());
    assert_eq!(out.status.code(), Some(1));

    // the env var directory is honored, so a computed policy is found later
    stdout(&onemax(&["policy", "--algo", "ea", "--mode", "opt", "--n", "20"], cache.path()));
    assert!(fs::read_dir(cache.path()).unwrap().count() > 0);
    let text = stdout(&onemax(&args, cache.path()));
    assert_eq!(rows(&text).len(), 2);

    // an explicit flag wins over the env var
    let other = tempfile::tempdir().unwrap();
    let mut flagged = args.to_vec();
    flagged.extend(["--cache-dir", other.path().to_str().unwrap()]);
    assert!(!onemax(&flagged, cache.path()).status.success());
}

#[test]
fn simulation_outputs_are_reproducible() {
    let cache = tempfile::tempdir().unwrap();
    let run = |dir: &Path| {
        stdout(&onemax(
            &[
                "simulate", "--algo", "rls", "--mode", "drift", "--n", "50", "--runs", "30", "--seed", "9",
                "--budgets", "1,10,100", "--targets", "25,50", "--raw", "--out-dir", dir.to_str().unwrap(),
            ],
            cache.path(),
        ));
    };
    let (a, b) = (cache.path().join("a"), cache.path().join("b"));
    run(&a);
    run(&b);
    for name in ["fixed_budget.csv", "fixed_target.csv", "runs.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let r = rows(&fs::read_to_string(a.join("fixed_target.csv")).unwrap());
    assert_eq!(r[0], ["point", "mean", "std", "count", "censored"]);
    assert_eq!(r[2][3], "30");
    let r = rows(&fs::read_to_string(a.join("fixed_budget.csv")).unwrap());
    assert_eq!(r[0], ["point", "mean", "std", "count"]);
    let runs = rows(&fs::read_to_string(a.join("runs.csv")).unwrap());
    assert_eq!(runs[0], ["run", "seed", "evals", "fitness"]);
    assert_eq!(runs.iter().filter(|r| r[3] == "50").count(), 30);
}

#[test]
fn table_output() {
    let cache = tempfile::tempdir().unwrap();
    let text = stdout(&onemax(&["table", "--dims", "3,4", "--algos", ""], cache.path()));
    assert_eq!(text, "algorithm,3,4\n");

    let text = stdout(&onemax(
        &["table", "--dims", "3", "--algos", "rls:opt,rls:drift,rls:static,ea:opt,ea:static:p=1/n"],
        cache.path(),
    ));
    let r = rows(&text);
    let want = [("rls:opt", 2.375), ("rls:drift", 2.75), ("rls:static", 3.5), ("ea:opt", 5.1875), ("ea:static:p=1/n", 1161.0 / 176.0)];
    assert_eq!(r.len(), want.len() + 1);
    for (row, (id, total)) in r[1..].iter().zip(want) {
        assert_eq!(row[0], id);
        let got: f64 = row[1].parse().unwrap();
        assert!((got - total).abs() < 1e-12, "{id}: {got} vs {total}");
    }
}

#[test]
fn floats_round_trip_through_csv() {
    let cache = tempfile::tempdir().unwrap();
    let out = onemax(&["runtime", "--algo", "ea", "--mode", "opt", "--dims", "37"], cache.path());
    let total: f64 = rows(&stdout(&out))[1][4].parse().unwrap();
    let policy = onemax_core::policy::p_opt_table(
        37,
        onemax_core::policy::RateFamily::Binomial,
        0.0,
        &onemax_core::policy::OptimizerConfig::default(),
    )
    .unwrap()
    .1;
    assert_eq!(total, onemax_core::runtime::total_expected_time(&policy));
}
