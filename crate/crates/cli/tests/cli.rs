use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use jointloc::scenarios::{EntityClass, MethodName};
use jointloc_cli::artifacts::{read_ledger, read_summary, read_traces, LEDGER, SUMMARY, TRACES};

fn jointloc(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jointloc"))
        .args(args)
        .env("JOINTLOC_OUT", out)
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .expect("spawn jointloc")
}

fn ok(output: &Output) {
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
}

fn rmse(errors: &[f64]) -> f64 {
    (errors.iter().sum::<f64>() / errors.len() as f64).sqrt()
}

#[test]
fn dynamic_runs_are_reproducible_and_summaries_match_traces() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&jointloc(&["run", "--scenario", "dynamic1", "--runs", "1", "--seed", "7"], &a));
    ok(&jointloc(&["run", "--scenario", "dynamic1", "--runs", "1", "--seed", "7"], &b));
    for file in [TRACES, LEDGER] {
        let x = std::fs::read(a.join(file)).unwrap();
        let y = std::fs::read(b.join(file)).unwrap();
        assert!(x == y, "{file} differs between identical runs");
    }

    let rows = read_traces(&a.join(TRACES)).unwrap();
    let summary = read_summary(&a.join(SUMMARY)).unwrap();
    assert_eq!(summary.kind, "dynamic");
    assert_eq!(summary.groups.len(), 1);
    let methods: Vec<MethodName> = summary.groups[0].methods.iter().map(|m| m.method).collect();
    assert_eq!(methods, [MethodName::Pm, MethodName::Rm]);
    for m in &summary.groups[0].methods {
        for (class, stored, per_time) in [
            (EntityClass::Agent, m.agent_rmse, &m.agent_rmse_per_time),
            (EntityClass::Object, m.object_rmse, &m.object_rmse_per_time),
        ] {
            let mine: Vec<_> = rows.iter().filter(|r| r.method == m.method && r.class == class && r.is_final == 1).collect();
            for r in &mine {
                let e = (r.est_x - r.truth_x).powi(2) + (r.est_y - r.truth_y).powi(2);
                assert!((e - r.sq_error).abs() <= 1e-9 * (1.0 + e));
            }
            let all: Vec<f64> = mine.iter().map(|r| r.sq_error).collect();
            assert!((rmse(&all) - stored.unwrap()).abs() < 1e-9);
            let mut by_time: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
            for r in &mine {
                by_time.entry(r.time).or_default().push(r.sq_error);
            }
            assert_eq!(by_time.len(), per_time.len());
            for ((n, errs), &(sn, sv)) in by_time.iter().zip(per_time) {
                assert_eq!(*n, sn);
                assert!((rmse(errs) - sv).abs() < 1e-9);
            }
        }
    }

    let ledger = read_ledger(&a.join(LEDGER)).unwrap();
    let first = ledger.iter().find(|r| r.method == MethodName::Pm && r.time == 1).unwrap();
    assert_eq!((first.n_c, first.n_nbp, first.n_ap, first.delay), (18000, 2000, 12000, 12));
    assert!(ledger.iter().all(|r| r.audit_violations == 0));

    let report = jointloc(&["report", a.to_str().unwrap()], &a);
    ok(&report);
    let text = String::from_utf8(report.stdout).unwrap();
    let header = text.lines().find(|l| l.trim_start().starts_with("n ")).expect("per-n table");
    let cols: Vec<&str> = header.split_whitespace().collect();
    assert_eq!(cols, ["n", "PM-MA-RMSE", "RM-MA-RMSE", "PM-obj-RMSE", "RM-obj-RMSE"]);
    let ledger_header = text.lines().find(|l| l.contains("N^C")).expect("ledger table");
    let cols: Vec<&str> = ledger_header.split_whitespace().collect();
    assert_eq!(cols, ["method", "n", "N^C", "N^NBP", "N^AP", "N^TOT", "delay"]);
}

#[test]
fn scalability_sizes_give_a_runtime_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    ok(&jointloc(&["run", "--scenario", "scalability", "--sizes", "8,2", "16,4", "32,8", "--runs", "1"], &out));
    let summary = read_summary(&out.join(SUMMARY)).unwrap();
    for m in &summary.groups[0].methods {
        let sizes: Vec<(usize, usize)> = m.runtime_per_size.iter().map(|x| (x.0, x.1)).collect();
        assert_eq!(sizes, [(8, 2), (16, 4), (32, 8)]);
        assert!(m.runtime_per_size.iter().all(|x| x.2 > 0.0));
    }
    let report = jointloc(&["report", out.to_str().unwrap()], &out);
    ok(&report);
    let text = String::from_utf8(report.stdout).unwrap();
    assert!(text.contains("PM-s/step") && text.contains("SPF-s/step"));
    assert!(text.contains("log-log runtime slope"));
}

#[test]
fn rho_sweep_reports_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/dynamic1.toml");
    let text = std::fs::read_to_string(cfg).unwrap().replace("steps = 75", "steps = 3");
    let small = dir.path().join("tiny.toml");
    std::fs::write(&small, text).unwrap();
    ok(&jointloc(&["run", "--scenario", small.to_str().unwrap(), "--rho", "15", "25", "--runs", "1", "-J", "200"], &out));
    let summary = read_summary(&out.join(SUMMARY)).unwrap();
    let rhos: Vec<Option<f64>> = summary.groups.iter().map(|g| g.rho).collect();
    assert_eq!(rhos, [Some(15.0), Some(25.0)]);
    let report = jointloc(&["report", out.to_str().unwrap()], &out);
    ok(&report);
    assert!(String::from_utf8(report.stdout).unwrap().contains("versus rho"));
}

#[test]
fn configuration_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("e");
    let missing = jointloc(&["run", "--scenario", "no-such-scenario"], &out);
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("not found"));
    let wrong = jointloc(&["run", "--scenario", "static", "--rho", "20"], &out);
    assert!(!wrong.status.success());
    let bad = jointloc(&["run", "--scenario", "dynamic1", "--methods", "pm,spf"], &out);
    assert!(!bad.status.success());
    let absent = jointloc(&["report", dir.path().join("nothing").to_str().unwrap()], &out);
    assert!(!absent.status.success());
}
