//! Average, max and min consensus, and the product of per-agent message
//! values computed from an average of their logarithms.

use crate::error::{Error, Result};
use crate::particles::{normalize, normalize_log};
use crate::scalar::Real;
use crate::topology::Graph;

/// Symmetric doubly stochastic weights stored as self weight plus sparse rows.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMatrix<T> {
    self_weights: Vec<T>,
    rows: Vec<Vec<(usize, T)>>,
}

impl<T: Real> WeightMatrix<T> {
    pub fn len(&self) -> usize {
        self.self_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.self_weights.is_empty()
    }

    pub fn self_weight(&self, i: usize) -> T {
        self.self_weights[i]
    }

    /// Off-diagonal entries of row `i`, sorted by column.
    pub fn row(&self, i: usize) -> &[(usize, T)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        if i == j {
            return self.self_weights[i];
        }
        self.rows[i].iter().find(|(k, _)| *k == j).map(|(_, w)| *w).unwrap_or_else(T::zero)
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        (0..self.len()).map(|i| (0..self.len()).map(|j| self.get(i, j)).collect()).collect()
    }
}

/// Metropolis weights `w_ij = 1 / (1 + max(d_i, d_j))` on edges.
pub fn metropolis_weights<T: Real>(graph: &Graph) -> Result<WeightMatrix<T>> {
    if !graph.is_connected() {
        return Err(Error::CommGraphDisconnected);
    }
    let mut self_weights = Vec::with_capacity(graph.len());
    let mut rows = Vec::with_capacity(graph.len());
    for i in 0..graph.len() {
        let row: Vec<(usize, T)> = graph
            .neighbors(i)
            .iter()
            .map(|&j| (j, T::one() / T::from_usize_lossy(1 + graph.degree(i).max(graph.degree(j)))))
            .collect();
        let off: T = row.iter().map(|(_, w)| *w).sum();
        self_weights.push(T::one() - off);
        rows.push(row);
    }
    Ok(WeightMatrix { self_weights, rows })
}

/// One agent's average-consensus update, summing in the order given.
pub fn average_update<T: Real>(self_weight: T, own: &[T], neighbors: &[(T, &[T])], out: &mut [T]) {
    for (o, &v) in out.iter_mut().zip(own) {
        *o = self_weight * v;
    }
    for (w, vals) in neighbors {
        for (o, &v) in out.iter_mut().zip(vals.iter()) {
            *o = *o + *w * v;
        }
    }
}

pub fn max_update<T: Real>(own: &mut [T], other: &[T]) {
    for (a, &b) in own.iter_mut().zip(other) {
        if b > *a {
            *a = b;
        }
    }
}

pub fn min_update<T: Real>(own: &mut [T], other: &[T]) {
    for (a, &b) in own.iter_mut().zip(other) {
        if b < *a {
            *a = b;
        }
    }
}

/// Per-agent state vectors evolving over a fixed graph.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsensusInstance<T> {
    graph: Graph,
    states: Vec<Vec<T>>,
    iteration: usize,
}

impl<T: Real> ConsensusInstance<T> {
    pub fn new(graph: Graph, states: Vec<Vec<T>>) -> Result<Self> {
        if states.len() != graph.len() {
            return Err(Error::DimensionMismatch { expected: graph.len(), got: states.len() });
        }
        if let Some(first) = states.first() {
            if let Some(bad) = states.iter().find(|s| s.len() != first.len()) {
                return Err(Error::DimensionMismatch { expected: first.len(), got: bad.len() });
            }
        }
        Ok(Self { graph, states, iteration: 0 })
    }

    pub fn states(&self) -> &[Vec<T>] {
        &self.states
    }

    pub fn into_states(self) -> Vec<Vec<T>> {
        self.states
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn average_step(&mut self, weights: &WeightMatrix<T>) {
        let mut next = Vec::with_capacity(self.states.len());
        for i in 0..self.states.len() {
            let nb: Vec<(T, &[T])> = weights.row(i).iter().map(|&(k, w)| (w, self.states[k].as_slice())).collect();
            let mut out = vec![T::zero(); self.states[i].len()];
            average_update(weights.self_weight(i), &self.states[i], &nb, &mut out);
            next.push(out);
        }
        self.states = next;
        self.iteration += 1;
    }

    fn extremum_step(&mut self, update: fn(&mut [T], &[T])) {
        let mut next = self.states.clone();
        for (i, out) in next.iter_mut().enumerate() {
            for &k in self.graph.neighbors(i) {
                update(out, &self.states[k]);
            }
        }
        self.states = next;
        self.iteration += 1;
    }

    pub fn max_step(&mut self) {
        self.extremum_step(max_update)
    }

    pub fn min_step(&mut self) {
        self.extremum_step(min_update)
    }
}

pub fn average_consensus<T: Real>(instance: &mut ConsensusInstance<T>, weights: &WeightMatrix<T>, iterations: usize) {
    for _ in 0..iterations {
        instance.average_step(weights);
    }
}

pub fn max_consensus<T: Real>(instance: &mut ConsensusInstance<T>, iterations: usize) {
    for _ in 0..iterations {
        instance.max_step();
    }
}

pub fn min_consensus<T: Real>(instance: &mut ConsensusInstance<T>, iterations: usize) {
    for _ in 0..iterations {
        instance.min_step();
    }
}

/// Result of a consensus-over-weights round, indexed like the participating agents.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsensusOutcome<T> {
    /// `ζ^(0)` per agent.
    pub initial: Vec<Vec<T>>,
    /// `|A| · ζ^(C)` per agent.
    pub log_products: Vec<Vec<T>>,
    /// Normalized weights after max consensus; identical for every agent.
    pub weights: Vec<Vec<T>>,
}

/// Runs the full pipeline on `graph`: `ζ^(0)` is `log φ` for observers and zero
/// otherwise, then `C` average iterations, scaling by `scale`, per-agent
/// normalization, `I` max iterations and renormalization.
///
/// `log_phi[i]` belongs to `observers[i]`.
pub fn consensus_over_weights<T: Real>(
    graph: &Graph,
    observers: &[usize],
    log_phi: &[Vec<T>],
    scale: usize,
    iterations: usize,
    max_iterations: usize,
) -> Result<ConsensusOutcome<T>> {
    let j = log_phi.first().map(|v| v.len()).ok_or(Error::EmptyObserverSet(usize::MAX))?;
    let mut init = vec![vec![T::zero(); j]; graph.len()];
    for (&l, v) in observers.iter().zip(log_phi) {
        init[l] = v.clone();
    }
    let weights = metropolis_weights(graph)?;
    let mut inst = ConsensusInstance::new(graph.clone(), init.clone())?;
    average_consensus(&mut inst, &weights, iterations);
    let a = T::from_usize_lossy(scale);
    let log_products: Vec<Vec<T>> = inst.states().iter().map(|s| s.iter().map(|&v| a * v).collect()).collect();
    let normalized = log_products.iter().map(|v| normalize_log(v)).collect::<Result<Vec<_>>>()?;
    let mut maxed = ConsensusInstance::new(graph.clone(), normalized)?;
    max_consensus(&mut maxed, max_iterations);
    let weights = maxed.into_states().iter().map(|w| normalize(w)).collect::<Result<Vec<_>>>()?;
    Ok(ConsensusOutcome { initial: init, log_products, weights })
}

/// The same pipeline restricted to the observers' induced subgraph, scaled by
/// the number of observers and finished after its diameter in max iterations.
/// Outcome rows follow `observers`.
pub fn ldt_consensus<T: Real>(
    graph: &Graph,
    object: usize,
    observers: &[usize],
    log_phi: &[Vec<T>],
    iterations: usize,
) -> Result<ConsensusOutcome<T>> {
    let sub = graph.induced(observers);
    let diameter = sub.diameter().ok_or(Error::LdtSubgraphDisconnected { object })?;
    let local: Vec<usize> = (0..observers.len()).collect();
    consensus_over_weights(&sub, &local, log_phi, observers.len(), iterations, diameter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, RngStream, StreamKey};
    use proptest::prelude::*;
    use rand::Rng;

    fn random_connected(n: usize, p: f64, seed: u64) -> Graph {
        let mut r = RngStream::new(seed, StreamKey::new(0, 0, 0, Purpose::Topology));
        let mut g = Graph::empty(n);
        // Random spanning tree first, then extra edges.
        for i in 1..n {
            let parent = r.random_range(0..i);
            g.add_edge(i, parent);
        }
        for a in 0..n {
            for b in a + 1..n {
                if r.random::<f64>() < p {
                    g.add_edge(a, b);
                }
            }
        }
        g
    }

    fn mean(states: &[Vec<f64>], k: usize) -> f64 {
        states.iter().map(|s| s[k]).sum::<f64>() / states.len() as f64
    }

    #[test]
    fn metropolis_examples() {
        let k2 = metropolis_weights::<f64>(&Graph::complete(2)).unwrap();
        assert_eq!(k2.to_dense(), vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
        let p3 = metropolis_weights::<f64>(&Graph::path(3)).unwrap();
        let d = p3.to_dense();
        let third = 1.0 / 3.0;
        assert_eq!(d[0][1], third);
        assert_eq!(d[1][2], third);
        assert!((d[0][0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((d[1][1] - third).abs() < 1e-15);
        assert!((d[2][2] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(
            metropolis_weights::<f64>(&Graph::empty(2)).unwrap_err(),
            Error::CommGraphDisconnected
        );
    }

    #[test]
    fn average_examples() {
        let mut inst = ConsensusInstance::new(Graph::path(3), vec![vec![0.0], vec![3.0], vec![6.0]]).unwrap();
        let w = metropolis_weights(&Graph::path(3)).unwrap();
        average_consensus(&mut inst, &w, 1);
        let s: Vec<f64> = inst.states().iter().map(|v| v[0]).collect();
        assert!((s[0] - 1.0).abs() < 1e-12 && (s[1] - 3.0).abs() < 1e-12 && (s[2] - 5.0).abs() < 1e-12);

        let mut k2 = ConsensusInstance::new(Graph::complete(2), vec![vec![1.0], vec![4.0]]).unwrap();
        average_consensus(&mut k2, &metropolis_weights(&Graph::complete(2)).unwrap(), 1);
        assert_eq!(k2.states(), &[vec![2.5], vec![2.5]]);

        let g = random_connected(7, 0.3, 1);
        let mut c = ConsensusInstance::new(g.clone(), vec![vec![4.25f64]; 7]).unwrap();
        average_consensus(&mut c, &metropolis_weights(&g).unwrap(), 25);
        assert!(c.states().iter().all(|s| (s[0] - 4.25).abs() < 1e-12));
    }

    #[test]
    fn extremum_examples() {
        let mut inst = ConsensusInstance::new(Graph::path(3), vec![vec![1.0], vec![5.0], vec![2.0]]).unwrap();
        max_consensus(&mut inst, 1);
        assert_eq!(inst.states(), &[vec![5.0], vec![5.0], vec![5.0]]);
        let mut single = ConsensusInstance::new(Graph::empty(1), vec![vec![3.0]]).unwrap();
        max_consensus(&mut single, 4);
        assert_eq!(single.states(), &[vec![3.0]]);
        let mut mn = ConsensusInstance::new(Graph::path(3), vec![vec![4.0], vec![5.0], vec![2.0]]).unwrap();
        min_consensus(&mut mn, 2);
        assert_eq!(mn.states(), &[vec![2.0], vec![2.0], vec![2.0]]);
    }

    #[test]
    fn single_agent_product_is_own_value() {
        let phi = vec![-1.5, -0.25, -3.0];
        let out = consensus_over_weights(&Graph::empty(1), &[0], &[phi.clone()], 1, 0, 0).unwrap();
        assert_eq!(out.log_products[0], phi);
    }

    #[test]
    fn two_agents_give_exact_product() {
        let (p1, p2) = (vec![0.3f64.ln(), 0.05f64.ln()], vec![0.7f64.ln(), 0.2f64.ln()]);
        let out = consensus_over_weights(&Graph::complete(2), &[0, 1], &[p1, p2], 2, 1, 1).unwrap();
        for agent in &out.log_products {
            assert!((agent[0].exp() - 0.3 * 0.7).abs() < 1e-12);
            assert!((agent[1].exp() - 0.05 * 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn non_observer_starts_at_zero() {
        let out = consensus_over_weights(&Graph::path(3), &[0], &[vec![-2.0, -1.0]], 3, 0, 2).unwrap();
        assert_eq!(out.initial[1], vec![0.0, 0.0]);
        assert_eq!(out.initial[2], vec![0.0, 0.0]);
    }

    #[test]
    fn long_consensus_recovers_log_product() {
        for seed in 0..5 {
            let g = random_connected(12, 0.2, 40 + seed);
            let mut r = RngStream::new(seed, StreamKey::new(1, 0, 0, Purpose::Topology));
            let observers: Vec<usize> = (0..12).filter(|_| r.random::<f64>() < 0.6).collect();
            let observers = if observers.is_empty() { vec![0] } else { observers };
            let phis: Vec<Vec<f64>> =
                observers.iter().map(|_| (0..6).map(|_| -20.0 * r.random::<f64>()).collect()).collect();
            let out = consensus_over_weights(&g, &observers, &phis, 12, 200, g.diameter().unwrap()).unwrap();
            for k in 0..6 {
                let truth: f64 = phis.iter().map(|p| p[k]).sum();
                for agent in &out.log_products {
                    assert!((agent[k] - truth).abs() < 1e-6, "{} vs {}", agent[k], truth);
                }
            }
            for agent in &out.weights {
                assert_eq!(agent, &out.weights[0]);
            }
        }
    }

    #[test]
    fn restricted_matches_full_network() {
        let g = random_connected(12, 0.25, 77);
        // Observers forming a connected induced subgraph: a BFS ball around node 0.
        let hops = g.hops_from(0);
        let observers: Vec<usize> = (0..12).filter(|&i| hops[i] <= 1).collect();
        let phis: Vec<Vec<f64>> = observers.iter().map(|&l| (0..5).map(|k| -(((l * 7 + k * 3) % 11) as f64)).collect()).collect();
        let full = consensus_over_weights(&g, &observers, &phis, 12, 400, g.diameter().unwrap()).unwrap();
        let local = ldt_consensus(&g, 0, &observers, &phis, 400).unwrap();
        for (a, b) in full.log_products[0].iter().zip(&local.log_products[0]) {
            assert!(((a - b) / a.abs().max(1.0)).abs() < 1e-6);
        }
        let lw = |w: &[f64]| w.iter().map(|x| x.ln()).collect::<Vec<_>>();
        for (a, b) in lw(&full.weights[0]).iter().zip(lw(&local.weights[0])) {
            assert!((a - b).abs() / a.abs().max(1.0) < 1e-6);
        }
    }

    #[test]
    fn restricted_single_observer_needs_no_iterations() {
        let g = Graph::path(4);
        let out = ldt_consensus(&g, 0, &[2], &[vec![-1.0, -2.0]], 0).unwrap();
        assert_eq!(out.log_products[0], vec![-1.0, -2.0]);
    }

    #[test]
    fn restricted_disconnected_is_reported() {
        let g = Graph::path(4);
        let err = ldt_consensus(&g, 5, &[0, 2], &[vec![0.0], vec![0.0]], 3).unwrap_err();
        assert_eq!(err, Error::LdtSubgraphDisconnected { object: 5 });
    }

    /// Largest |eigenvalue| of W − 11ᵀ/N by power iteration (W symmetric).
    fn second_singular_value(w: &WeightMatrix<f64>) -> f64 {
        let n = w.len();
        let d = w.to_dense();
        let mut v: Vec<f64> = (0..n).map(|i| ((i * 37 + 11) % 17) as f64 - 8.0).collect();
        let mut lambda = 0.0;
        for _ in 0..5000 {
            let m = v.iter().sum::<f64>() / n as f64;
            let mut nv: Vec<f64> = (0..n).map(|i| (0..n).map(|k| d[i][k] * v[k]).sum::<f64>() - m).collect();
            let norm = nv.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            for x in &mut nv {
                *x /= norm;
            }
            lambda = norm / v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v = nv;
        }
        lambda
    }

    #[test]
    fn convergence_bound() {
        for seed in 0..6 {
            let g = random_connected(10, 0.2, 200 + seed);
            let w = metropolis_weights::<f64>(&g).unwrap();
            let rho = second_singular_value(&w);
            assert!(rho < 1.0);
            let init: Vec<Vec<f64>> = (0..10).map(|i| vec![((i * 13 + seed as usize) % 7) as f64]).collect();
            let m = mean(&init, 0);
            let dev0 = init.iter().map(|s| (s[0] - m).abs()).fold(0.0, f64::max);
            let mut inst = ConsensusInstance::new(g, init).unwrap();
            for c in 1..=30 {
                inst.average_step(&w);
                let dev = inst.states().iter().map(|s| (s[0] - m).abs()).fold(0.0, f64::max);
                // The ∞-norm bound carries a √N factor for a 2-norm contraction.
                assert!(dev <= (10f64).sqrt() * rho.powi(c) * dev0 + 1e-12, "c={c} dev={dev}");
            }
        }
    }

    proptest! {
        #[test]
        fn weights_are_doubly_stochastic(n in 2usize..15, p in 0.0f64..0.6, seed: u64) {
            let g = random_connected(n, p, seed);
            let w = metropolis_weights::<f64>(&g).unwrap();
            let d = w.to_dense();
            for i in 0..n {
                prop_assert!((d[i].iter().sum::<f64>() - 1.0).abs() < 1e-12);
                for j in 0..n {
                    prop_assert_eq!(d[i][j], d[j][i]);
                    if i != j && !g.has_edge(i, j) {
                        prop_assert_eq!(d[i][j], 0.0);
                    }
                }
            }
        }

        #[test]
        fn average_preserves_mean(n in 2usize..15, p in 0.0f64..0.6, seed: u64, iters in 1usize..20) {
            let g = random_connected(n, p, seed);
            let w = metropolis_weights::<f64>(&g).unwrap();
            let init: Vec<Vec<f64>> = (0..n).map(|i| vec![(i as f64 * 1.7).sin() * 10.0, -(i as f64)]).collect();
            let m0 = [mean(&init, 0), mean(&init, 1)];
            let mut inst = ConsensusInstance::new(g, init).unwrap();
            for _ in 0..iters {
                inst.average_step(&w);
                for k in 0..2 {
                    prop_assert!((mean(inst.states(), k) - m0[k]).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn extrema_exact_after_diameter(n in 1usize..15, p in 0.0f64..0.5, seed: u64) {
            let g = random_connected(n, p, seed);
            let diam = g.diameter().unwrap();
            let init: Vec<Vec<f64>> = (0..n).map(|i| vec![((i * 31 + seed as usize % 97) % 23) as f64 - 11.0]).collect();
            let hi = init.iter().map(|s| s[0]).fold(f64::MIN, f64::max);
            let lo = init.iter().map(|s| s[0]).fold(f64::MAX, f64::min);
            let mut mx = ConsensusInstance::new(g.clone(), init.clone()).unwrap();
            max_consensus(&mut mx, diam);
            prop_assert!(mx.states().iter().all(|s| s[0] == hi));
            let mut mn = ConsensusInstance::new(g, init).unwrap();
            min_consensus(&mut mn, diam);
            prop_assert!(mn.states().iter().all(|s| s[0] == lo));
        }
    }
}
