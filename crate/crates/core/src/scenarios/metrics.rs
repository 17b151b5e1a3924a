//! Run traces and RMSE aggregation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::netsim::CommLedger;

use super::config::MethodName;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntityClass {
    /// Non-anchor agents.
    Agent,
    Object,
}

impl EntityClass {
    pub fn as_str(self) -> &'static str {
        match self {
            EntityClass::Agent => "agent",
            EntityClass::Object => "object",
        }
    }
}

/// One position estimate against the truth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub class: EntityClass,
    /// Index within the class.
    pub id: usize,
    /// Message passing iteration, starting at 1.
    pub iteration: usize,
    pub truth: [f64; 2],
    pub estimate: [f64; 2],
}

impl EntityRecord {
    pub fn squared_error(&self) -> f64 {
        let dx = self.estimate[0] - self.truth[0];
        let dy = self.estimate[1] - self.truth[1];
        dx * dx + dy * dy
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub time: usize,
    /// Iteration whose estimates count as the step's output.
    pub final_iteration: usize,
    pub entities: Vec<EntityRecord>,
    /// Counts of the busiest agent (zero for centralized methods).
    pub ledger: CommLedger,
    pub delay: u64,
    pub degenerate: bool,
    pub audit_violations: usize,
}

impl StepRecord {
    pub fn final_entities(&self) -> impl Iterator<Item = &EntityRecord> {
        self.entities.iter().filter(move |e| e.iteration == self.final_iteration)
    }
}

/// One run of one method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub method: MethodName,
    pub run: usize,
    /// `(mobile agents, objects)` in the scalability scenario.
    pub size: Option<[usize; 2]>,
    pub steps: Vec<StepRecord>,
    /// Set when the run stopped after repeated degenerate steps.
    pub aborted: bool,
    /// Wall-clock seconds per step. Not part of the reproducible output.
    #[serde(skip)]
    pub step_seconds: Vec<f64>,
}

impl RunTrace {
    pub fn new(method: MethodName, run: usize, size: Option<[usize; 2]>) -> Self {
        Self { method, run, size, steps: Vec::new(), aborted: false, step_seconds: Vec::new() }
    }

    pub fn mean_step_seconds(&self) -> f64 {
        if self.step_seconds.is_empty() {
            0.0
        } else {
            self.step_seconds.iter().sum::<f64>() / self.step_seconds.len() as f64
        }
    }
}

/// Root of the mean of squared errors; `NaN` for an empty input.
pub fn rmse_of(squared_errors: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = squared_errors.into_iter().fold((0.0, 0usize), |(s, n), e| (s + e, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        (sum / n as f64).sqrt()
    }
}

fn selected<'a>(traces: &'a [RunTrace], method: MethodName) -> impl Iterator<Item = &'a RunTrace> {
    traces.iter().filter(move |t| t.method == method)
}

/// RMSE at each time step over runs and entities of `class`, final iterations only.
pub fn rmse_per_time(traces: &[RunTrace], method: MethodName, class: EntityClass) -> Vec<(usize, f64)> {
    let mut by_time: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for t in selected(traces, method) {
        for s in &t.steps {
            let errs = by_time.entry(s.time).or_default();
            errs.extend(s.final_entities().filter(|e| e.class == class).map(EntityRecord::squared_error));
        }
    }
    by_time.into_iter().map(|(n, e)| (n, rmse_of(e))).collect()
}

/// RMSE over all time steps, runs and entities of `class`, final iterations only.
pub fn rmse_time_averaged(traces: &[RunTrace], method: MethodName, class: EntityClass) -> f64 {
    rmse_of(selected(traces, method).flat_map(|t| {
        t.steps.iter().flat_map(move |s| s.final_entities().filter(move |e| e.class == class).map(EntityRecord::squared_error))
    }))
}

/// RMSE at time `time` for each message passing iteration.
pub fn rmse_per_iteration(traces: &[RunTrace], method: MethodName, class: EntityClass, time: usize) -> Vec<(usize, f64)> {
    let mut by_p: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for t in selected(traces, method) {
        for s in t.steps.iter().filter(|s| s.time == time) {
            for e in s.entities.iter().filter(|e| e.class == class) {
                by_p.entry(e.iteration).or_default().push(e.squared_error());
            }
        }
    }
    by_p.into_iter().map(|(p, e)| (p, rmse_of(e))).collect()
}

/// Time-averaged RMSE per network size (scalability scenario).
pub fn rmse_per_size(traces: &[RunTrace], method: MethodName, class: EntityClass) -> Vec<([usize; 2], f64)> {
    let mut sizes: Vec<[usize; 2]> = selected(traces, method).filter_map(|t| t.size).collect();
    sizes.sort_unstable();
    sizes.dedup();
    sizes
        .into_iter()
        .map(|size| {
            let group: Vec<RunTrace> = selected(traces, method).filter(|t| t.size == Some(size)).cloned().collect();
            (size, rmse_time_averaged(&group, method, class))
        })
        .collect()
}

/// Mean wall-clock seconds per step per network size.
pub fn runtime_per_size(traces: &[RunTrace], method: MethodName) -> Vec<([usize; 2], f64)> {
    let mut acc: BTreeMap<[usize; 2], (f64, usize)> = BTreeMap::new();
    for t in selected(traces, method) {
        if let Some(size) = t.size {
            let e = acc.entry(size).or_default();
            e.0 += t.step_seconds.iter().sum::<f64>();
            e.1 += t.step_seconds.len();
        }
    }
    acc.into_iter().map(|(s, (sum, n))| (s, if n == 0 { 0.0 } else { sum / n as f64 })).collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(class: EntityClass, id: usize, err: [f64; 2]) -> EntityRecord {
        EntityRecord { class, id, iteration: 1, truth: [1.0, 1.0], estimate: [1.0 + err[0], 1.0 + err[1]] }
    }

    fn trace(run: usize, steps: Vec<Vec<EntityRecord>>) -> RunTrace {
        let mut t = RunTrace::new(MethodName::Pm, run, None);
        t.steps = steps
            .into_iter()
            .enumerate()
            .map(|(i, entities)| StepRecord {
                time: i + 1,
                final_iteration: 1,
                entities,
                ledger: CommLedger::default(),
                delay: 0,
                degenerate: false,
                audit_violations: 0,
            })
            .collect();
        t
    }

    #[test]
    fn perfect_estimates_give_zero() {
        let t = trace(0, vec![vec![record(EntityClass::Agent, 0, [0.0, 0.0])]]);
        assert_eq!(rmse_time_averaged(&[t], MethodName::Pm, EntityClass::Agent), 0.0);
    }

    #[test]
    fn three_four_five() {
        let t = trace(0, vec![vec![record(EntityClass::Agent, 0, [3.0, 4.0])]]);
        assert_eq!(rmse_time_averaged(&[t], MethodName::Pm, EntityClass::Agent), 5.0);
    }

    #[test]
    fn mean_before_root_over_runs() {
        let a = trace(0, vec![vec![record(EntityClass::Object, 0, [3.0, 0.0])]]);
        let b = trace(1, vec![vec![record(EntityClass::Object, 0, [4.0, 0.0])]]);
        let v = rmse_time_averaged(&[a, b], MethodName::Pm, EntityClass::Object);
        assert!((v - 12.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn classes_and_methods_are_separated() {
        let t = trace(0, vec![vec![record(EntityClass::Agent, 0, [3.0, 4.0]), record(EntityClass::Object, 0, [1.0, 0.0])]]);
        assert_eq!(rmse_per_time(std::slice::from_ref(&t), MethodName::Pm, EntityClass::Object), vec![(1, 1.0)]);
        assert!(rmse_time_averaged(&[t], MethodName::Rm, EntityClass::Agent).is_nan());
    }

    #[test]
    fn slope_of_a_power_law() {
        let pts: Vec<(f64, f64)> = [10.0, 20.0, 40.0, 80.0].iter().map(|&x: &f64| (x, 3.0 * x.powf(1.7))).collect();
        assert!((log_log_slope(&pts) - 1.7).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn rmse_is_permutation_invariant(errs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..12), rot in 0usize..12) {
            let recs: Vec<EntityRecord> = errs.iter().enumerate().map(|(i, &(x, y))| record(EntityClass::Agent, i, [x, y])).collect();
            let mut shuffled = recs.clone();
            let k = rot % shuffled.len();
            shuffled.rotate_left(k);
            let a = rmse_time_averaged(&[trace(0, vec![recs.clone()])], MethodName::Pm, EntityClass::Agent);
            let split: Vec<RunTrace> = shuffled.iter().enumerate().map(|(i, r)| trace(i, vec![vec![*r]])).collect();
            let b = rmse_time_averaged(&split, MethodName::Pm, EntityClass::Agent);
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }
    }
}
