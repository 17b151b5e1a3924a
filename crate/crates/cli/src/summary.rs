//! Aggregates run traces into `summary.json`.

use std::collections::BTreeMap;

use jointloc::scenarios::{
    rmse_per_iteration, rmse_per_size, rmse_per_time, rmse_time_averaged, runtime_per_size, EntityClass, MethodName,
    RunTrace,
};

use crate::artifacts::{CommTotals, GroupSummary, MethodSummary};

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn drop_nan<K>(series: Vec<(K, f64)>) -> Vec<(K, f64)> {
    series.into_iter().filter(|(_, v)| v.is_finite()).collect()
}

fn flat_size(series: Vec<([usize; 2], f64)>) -> Vec<(usize, usize, f64)> {
    series.into_iter().filter(|(_, v)| v.is_finite()).map(|(s, v)| (s[0], s[1], v)).collect()
}

pub fn summarize_method(traces: &[RunTrace], method: MethodName) -> MethodSummary {
    let own: Vec<&RunTrace> = traces.iter().filter(|t| t.method == method).collect();
    let last = own.iter().flat_map(|t| t.steps.last()).map(|s| s.time).max().unwrap_or(0);

    let mut comm = CommTotals::default();
    let mut seconds: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    let (mut total_seconds, mut total_steps) = (0.0, 0usize);
    for t in &own {
        for s in &t.steps {
            let l = &s.ledger;
            comm.n_c += l.n_c;
            comm.n_nbp += l.n_nbp;
            comm.n_ap += l.n_ap;
            comm.n_ho += l.n_ho;
            comm.n_tot += l.total();
            comm.delay += s.delay;
            comm.steps += 1;
        }
        for (s, &sec) in t.steps.iter().zip(&t.step_seconds) {
            let e = seconds.entry(s.time).or_default();
            e.0 += sec;
            e.1 += 1;
            total_seconds += sec;
            total_steps += 1;
        }
    }

    MethodSummary {
        method,
        runs: own.len(),
        aborted_runs: own.iter().filter(|t| t.aborted).count(),
        agent_rmse: finite(rmse_time_averaged(traces, method, EntityClass::Agent)),
        object_rmse: finite(rmse_time_averaged(traces, method, EntityClass::Object)),
        agent_rmse_per_time: drop_nan(rmse_per_time(traces, method, EntityClass::Agent)),
        object_rmse_per_time: drop_nan(rmse_per_time(traces, method, EntityClass::Object)),
        agent_rmse_per_iteration: drop_nan(rmse_per_iteration(traces, method, EntityClass::Agent, last)),
        object_rmse_per_iteration: drop_nan(rmse_per_iteration(traces, method, EntityClass::Object, last)),
        agent_rmse_per_size: flat_size(rmse_per_size(traces, method, EntityClass::Agent)),
        object_rmse_per_size: flat_size(rmse_per_size(traces, method, EntityClass::Object)),
        comm,
        mean_step_seconds: if total_steps == 0 { 0.0 } else { total_seconds / total_steps as f64 },
        step_seconds_per_time: seconds.into_iter().map(|(n, (s, k))| (n, s / k as f64)).collect(),
        runtime_per_size: flat_size(runtime_per_size(traces, method)),
    }
}

pub fn summarize_group(rho: Option<f64>, traces: &[RunTrace], methods: &[MethodName]) -> GroupSummary {
    GroupSummary { rho, methods: methods.iter().map(|&m| summarize_method(traces, m)).collect() }
}
