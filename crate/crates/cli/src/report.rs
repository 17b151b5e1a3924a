//! Plain-text tables from an artifact directory.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::Path;

use anyhow::Result;
use jointloc::scenarios::{log_log_slope, MethodName};

use crate::artifacts::{self, GroupSummary, LedgerRow, MethodSummary, Summary};

fn upper(m: MethodName) -> String {
    m.as_str().to_ascii_uppercase()
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())
}

fn lookup<K: PartialEq + Copy>(series: &[(K, f64)], k: K) -> Option<f64> {
    series.iter().find(|(x, _)| *x == k).map(|(_, v)| *v)
}

fn table(out: &mut String, header: &[String], rows: &[Vec<String>]) {
    let widths: Vec<usize> =
        (0..header.len()).map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0)).collect();
    let line = |cells: &[String]| -> String {
        cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect::<Vec<_>>().join("  ")
    };
    let _ = writeln!(out, "{}", line(header));
    for r in rows {
        let _ = writeln!(out, "{}", line(r));
    }
    let _ = writeln!(out);
}

/// Table over a shared key with agent and object columns per method.
fn keyed<K: Ord + Copy + ToString>(
    out: &mut String,
    key: &str,
    methods: &[MethodSummary],
    agent: impl Fn(&MethodSummary) -> &[(K, f64)],
    object: impl Fn(&MethodSummary) -> &[(K, f64)],
) {
    let mut keys: Vec<K> = methods.iter().flat_map(|m| agent(m).iter().chain(object(m)).map(|(k, _)| *k)).collect();
    keys.sort();
    keys.dedup();
    let mut header = vec![key.to_string()];
    header.extend(methods.iter().map(|m| format!("{}-MA-RMSE", upper(m.method))));
    header.extend(methods.iter().map(|m| format!("{}-obj-RMSE", upper(m.method))));
    let rows: Vec<Vec<String>> = keys
        .iter()
        .map(|&k| {
            let mut r = vec![k.to_string()];
            r.extend(methods.iter().map(|m| cell(lookup(agent(m), k))));
            r.extend(methods.iter().map(|m| cell(lookup(object(m), k))));
            r
        })
        .collect();
    table(out, &header, &rows);
}

fn averages(out: &mut String, g: &GroupSummary) {
    for m in &g.methods {
        let _ = writeln!(
            out,
            "{}: time-averaged MA RMSE {}, object RMSE {}, aborted runs {}/{}",
            upper(m.method),
            cell(m.agent_rmse),
            cell(m.object_rmse),
            m.aborted_runs,
            m.runs
        );
    }
    let _ = writeln!(out);
}

fn rho_label(rho: Option<f64>) -> String {
    rho.map(|r| format!(" (rho = {r})")).unwrap_or_default()
}

fn scalability(out: &mut String, g: &GroupSummary) {
    let mut sizes: Vec<(usize, usize)> =
        g.methods.iter().flat_map(|m| m.agent_rmse_per_size.iter().map(|&(a, o, _)| (a, o))).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let mut header = vec!["agents".to_string(), "objects".to_string()];
    for m in &g.methods {
        header.push(format!("{}-RMSE", upper(m.method)));
        header.push(format!("{}-s/step", upper(m.method)));
    }
    let find = |s: &[(usize, usize, f64)], k: (usize, usize)| s.iter().find(|x| (x.0, x.1) == k).map(|x| x.2);
    let rows: Vec<Vec<String>> = sizes
        .iter()
        .map(|&k| {
            let mut r = vec![k.0.to_string(), k.1.to_string()];
            for m in &g.methods {
                r.push(cell(combined_rmse(m, k)));
                r.push(find(&m.runtime_per_size, k).map(|v| format!("{v:.3e}")).unwrap_or_else(|| "-".into()));
            }
            r
        })
        .collect();
    table(out, &header, &rows);
    for m in &g.methods {
        let pts: Vec<(f64, f64)> =
            m.runtime_per_size.iter().filter(|x| x.2 > 0.0).map(|&(a, o, s)| ((a + o) as f64, s)).collect();
        if pts.len() >= 2 {
            let _ = writeln!(out, "{}: log-log runtime slope {:.3}", upper(m.method), log_log_slope(&pts));
        }
    }
    let _ = writeln!(out);
}

/// RMSE over agents and objects together, weighted by their counts.
fn combined_rmse(m: &MethodSummary, k: (usize, usize)) -> Option<f64> {
    let a = m.agent_rmse_per_size.iter().find(|x| (x.0, x.1) == k)?.2;
    let o = m.object_rmse_per_size.iter().find(|x| (x.0, x.1) == k).map(|x| x.2);
    match o {
        Some(o) => {
            let (na, no) = (k.0 as f64, k.1 as f64);
            Some(((na * a * a + no * o * o) / (na + no)).sqrt())
        }
        None => Some(a),
    }
}

type LedgerKey = (MethodName, u64, u64, u64, u64, u64, u64);

fn ledger(out: &mut String, rows: &[LedgerRow]) {
    // One table per method from the first run of the first sweep point.
    let Some(first) = rows.first() else { return };
    let (rho, run, size) = (first.rho, first.run, (first.size_agents, first.size_objects));
    let mut by_method: BTreeMap<MethodName, Vec<&LedgerRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.rho == rho && r.run == run && (r.size_agents, r.size_objects) == size) {
        by_method.entry(r.method).or_default().push(r);
    }
    let header: Vec<String> =
        ["method", "n", "N^C", "N^NBP", "N^AP", "N^TOT", "delay"].iter().map(|s| s.to_string()).collect();
    let mut table_rows = Vec::new();
    for (method, rs) in by_method {
        // Collapse consecutive steps with identical counts.
        let mut spans: Vec<(usize, usize, LedgerKey)> = Vec::new();
        for r in rs {
            let key = (method, r.n_c, r.n_nbp, r.n_ap, r.n_ho, r.n_tot, r.delay);
            match spans.last_mut() {
                Some(last) if last.2 == key && last.1 + 1 == r.time => last.1 = r.time,
                _ => spans.push((r.time, r.time, key)),
            }
        }
        for (a, b, k) in spans {
            let n = if a == b { a.to_string() } else { format!("{a}-{b}") };
            table_rows.push(vec![
                upper(method),
                n,
                k.1.to_string(),
                k.2.to_string(),
                k.3.to_string(),
                k.5.to_string(),
                k.6.to_string(),
            ]);
        }
    }
    let _ = writeln!(out, "communication of the busiest agent (run {run}):");
    table(out, &header, &table_rows);
}

pub fn render_summary(s: &Summary, ledger_rows: &[LedgerRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "scenario {} ({}), seed {}, {} run(s)\n", s.scenario, s.kind, s.seed, s.runs);
    for g in &s.groups {
        match s.kind.as_str() {
            "dynamic" => {
                let _ = writeln!(out, "RMSE versus time n{}:", rho_label(g.rho));
                keyed(&mut out, "n", &g.methods, |m| &m.agent_rmse_per_time, |m| &m.object_rmse_per_time);
                averages(&mut out, g);
            }
            "static" => {
                let _ = writeln!(out, "RMSE versus message passing iteration p{}:", rho_label(g.rho));
                keyed(&mut out, "p", &g.methods, |m| &m.agent_rmse_per_iteration, |m| &m.object_rmse_per_iteration);
            }
            _ => {
                let _ = writeln!(out, "RMSE and runtime versus network size:");
                scalability(&mut out, g);
            }
        }
    }
    if s.groups.len() > 1 {
        let _ = writeln!(out, "time-averaged RMSE versus rho:");
        let methods: Vec<MethodName> = s.groups[0].methods.iter().map(|m| m.method).collect();
        let mut header = vec!["rho".to_string()];
        header.extend(methods.iter().map(|m| format!("{}-MA-RMSE", upper(*m))));
        header.extend(methods.iter().map(|m| format!("{}-obj-RMSE", upper(*m))));
        let rows: Vec<Vec<String>> = s
            .groups
            .iter()
            .map(|g| {
                let mut r = vec![g.rho.map(|v| v.to_string()).unwrap_or_else(|| "-".into())];
                r.extend(g.methods.iter().map(|m| cell(m.agent_rmse)));
                r.extend(g.methods.iter().map(|m| cell(m.object_rmse)));
                r
            })
            .collect();
        table(&mut out, &header, &rows);
    }
    ledger(&mut out, ledger_rows);
    out
}

pub fn render(dir: &Path) -> Result<String> {
    let summary = artifacts::read_summary(&dir.join(artifacts::SUMMARY))?;
    let rows = artifacts::read_ledger(&dir.join(artifacts::LEDGER))?;
    Ok(render_summary(&summary, &rows))
}
