//! Artifact files written by `run` and read by `report`.
//!
//! `traces.csv` has one row per (method, run, time, iteration, entity):
//!
//! | column | meaning |
//! |---|---|
//! | `method` | `pm`, `rm` or `spf` |
//! | `rho` | corner-agent range of the sweep point, empty if not swept |
//! | `run` | run index |
//! | `size_agents`, `size_objects` | network size (scalability scenario), else empty |
//! | `time` | time step `n`, from 1 |
//! | `iteration` | message passing iteration `p`, from 1 |
//! | `final` | 1 if `iteration` is the step's output iteration |
//! | `class` | `agent` or `object` |
//! | `id` | index within the class |
//! | `truth_x`, `truth_y`, `est_x`, `est_y` | true and estimated position |
//! | `sq_error` | squared position error |
//!
//! `ledger.csv` has one row per (method, run, time) with the counts of the
//! busiest agent: `method, rho, run, size_agents, size_objects, time, n_c,
//! n_nbp, n_ap, n_ho, n_tot, delay, degenerate, audit_violations, aborted`.
//!
//! Floats are written with 17 significant digits. Wall-clock times appear
//! only in `summary.json`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use jointloc::scenarios::{EntityClass, MethodName, RunTrace};
use serde::{Deserialize, Serialize};

pub const TRACES: &str = "traces.csv";
pub const LEDGER: &str = "ledger.csv";
pub const SUMMARY: &str = "summary.json";

pub const TRACE_HEADER: [&str; 15] = [
    "method", "rho", "run", "size_agents", "size_objects", "time", "iteration", "final", "class", "id", "truth_x", "truth_y",
    "est_x", "est_y", "sq_error",
];

pub const LEDGER_HEADER: [&str; 15] = [
    "method", "rho", "run", "size_agents", "size_objects", "time", "n_c", "n_nbp", "n_ap", "n_ho", "n_tot", "delay",
    "degenerate", "audit_violations", "aborted",
];

/// Formats with 17 significant digits.
pub fn sig17(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// One group of traces sharing a sweep value.
pub struct Group<'a> {
    pub rho: Option<f64>,
    pub traces: &'a [RunTrace],
}

pub fn write_traces(path: &Path, groups: &[Group<'_>]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(TRACE_HEADER)?;
    for g in groups {
        let rho = opt(g.rho.map(sig17));
        for t in g.traces {
            let (sa, so) = (opt(t.size.map(|s| s[0])), opt(t.size.map(|s| s[1])));
            for s in &t.steps {
                for e in &s.entities {
                    w.write_record([
                        t.method.as_str().to_string(),
                        rho.clone(),
                        t.run.to_string(),
                        sa.clone(),
                        so.clone(),
                        s.time.to_string(),
                        e.iteration.to_string(),
                        u8::from(e.iteration == s.final_iteration).to_string(),
                        e.class.as_str().to_string(),
                        e.id.to_string(),
                        sig17(e.truth[0]),
                        sig17(e.truth[1]),
                        sig17(e.estimate[0]),
                        sig17(e.estimate[1]),
                        sig17(e.squared_error()),
                    ])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_ledger(path: &Path, groups: &[Group<'_>]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(LEDGER_HEADER)?;
    for g in groups {
        let rho = opt(g.rho.map(sig17));
        for t in g.traces {
            for s in &t.steps {
                let l = &s.ledger;
                w.write_record([
                    t.method.as_str().to_string(),
                    rho.clone(),
                    t.run.to_string(),
                    opt(t.size.map(|s| s[0])),
                    opt(t.size.map(|s| s[1])),
                    s.time.to_string(),
                    l.n_c.to_string(),
                    l.n_nbp.to_string(),
                    l.n_ap.to_string(),
                    l.n_ho.to_string(),
                    l.total().to_string(),
                    s.delay.to_string(),
                    u8::from(s.degenerate).to_string(),
                    s.audit_violations.to_string(),
                    u8::from(t.aborted).to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// A parsed `traces.csv` row.
#[derive(Clone, Debug, Deserialize)]
pub struct TraceRow {
    pub method: MethodName,
    pub rho: Option<f64>,
    pub run: usize,
    pub size_agents: Option<usize>,
    pub size_objects: Option<usize>,
    pub time: usize,
    pub iteration: usize,
    #[serde(rename = "final")]
    pub is_final: u8,
    pub class: EntityClass,
    pub id: usize,
    pub truth_x: f64,
    pub truth_y: f64,
    pub est_x: f64,
    pub est_y: f64,
    pub sq_error: f64,
}

/// A parsed `ledger.csv` row.
#[derive(Clone, Debug, Deserialize)]
pub struct LedgerRow {
    pub method: MethodName,
    pub rho: Option<f64>,
    pub run: usize,
    pub size_agents: Option<usize>,
    pub size_objects: Option<usize>,
    pub time: usize,
    pub n_c: u64,
    pub n_nbp: u64,
    pub n_ap: u64,
    pub n_ho: u64,
    pub n_tot: u64,
    pub delay: u64,
    pub degenerate: u8,
    pub audit_violations: usize,
    pub aborted: u8,
}

fn read_csv<R: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<R>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    r.deserialize().collect::<std::result::Result<_, _>>().with_context(|| format!("parsing {}", path.display()))
}

pub fn read_traces(path: &Path) -> Result<Vec<TraceRow>> {
    read_csv(path)
}

pub fn read_ledger(path: &Path) -> Result<Vec<LedgerRow>> {
    read_csv(path)
}

/// Communication totals of the busiest agent, summed over steps and runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CommTotals {
    pub n_c: u64,
    pub n_nbp: u64,
    pub n_ap: u64,
    pub n_ho: u64,
    pub n_tot: u64,
    pub delay: u64,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: MethodName,
    pub runs: usize,
    pub aborted_runs: usize,
    pub agent_rmse: Option<f64>,
    pub object_rmse: Option<f64>,
    /// `(n, rmse)` over runs and entities.
    pub agent_rmse_per_time: Vec<(usize, f64)>,
    pub object_rmse_per_time: Vec<(usize, f64)>,
    /// `(p, rmse)` at the last time step.
    pub agent_rmse_per_iteration: Vec<(usize, f64)>,
    pub object_rmse_per_iteration: Vec<(usize, f64)>,
    /// `(mobile agents, objects, rmse)`.
    pub agent_rmse_per_size: Vec<(usize, usize, f64)>,
    pub object_rmse_per_size: Vec<(usize, usize, f64)>,
    pub comm: CommTotals,
    /// Mean wall-clock seconds per time step.
    pub mean_step_seconds: f64,
    /// `(n, seconds)` averaged over runs.
    pub step_seconds_per_time: Vec<(usize, f64)>,
    /// `(mobile agents, objects, seconds per step)`.
    pub runtime_per_size: Vec<(usize, usize, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub rho: Option<f64>,
    pub methods: Vec<MethodSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub kind: String,
    pub seed: u64,
    pub runs: usize,
    /// Effective configuration after overrides, as TOML.
    pub config: String,
    pub groups: Vec<GroupSummary>,
}

pub fn write_summary(path: &Path, summary: &Summary) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, summary)?;
    writeln!(w)?;
    Ok(())
}

pub fn read_summary(path: &Path) -> Result<Summary> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
