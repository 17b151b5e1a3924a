//! Broadcast scalar counts and delay slots.

use serde::{Deserialize, Serialize};

/// Scalars broadcast by one agent during one time step, by purpose.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommLedger {
    /// Consensus frames (averaging and maximization).
    pub n_c: u64,
    /// Belief broadcasts.
    pub n_nbp: u64,
    /// Proposal dissemination frames.
    pub n_ap: u64,
    /// Object belief handover after local tracking.
    pub n_ho: u64,
}

impl CommLedger {
    pub fn total(&self) -> u64 {
        self.n_c + self.n_nbp + self.n_ap + self.n_ho
    }

    pub fn add(&mut self, other: &CommLedger) {
        self.n_c += other.n_c;
        self.n_nbp += other.n_nbp;
        self.n_ap += other.n_ap;
        self.n_ho += other.n_ho;
    }
}

/// Parameters entering the closed-form counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CountParams {
    /// Message passing iterations `P`.
    pub iterations: u64,
    /// Particles `J`.
    pub particles: u64,
    /// Averaging iterations `C`.
    pub consensus: u64,
    /// Max/min iterations `I`.
    pub diameter: u64,
    /// Dimension `L` of the measured substate.
    pub position_dim: u64,
    /// Number of objects `|O|`.
    pub objects: u64,
    /// Whether the alternative proposal is disseminated at this step.
    pub alt_proposal: bool,
}

impl CountParams {
    /// Per-agent counts `N^C = P(C+I)J|O|`, `N^NBP = PJL`, `N^AP = PJLI|O|`.
    pub fn closed_form(&self) -> CommLedger {
        let p = self.iterations;
        let j = self.particles;
        let o = self.objects;
        let n_c = p * (self.consensus + self.diameter) * j * o;
        let n_nbp = p * j * self.position_dim;
        let n_ap = if self.alt_proposal { p * j * self.position_dim * self.diameter * o } else { 0 };
        CommLedger { n_c, n_nbp, n_ap, n_ho: 0 }
    }
}

/// Delay in slots: `P(C+I)`, or `P(C+2I)` with the alternative proposal.
/// Without objects only the belief broadcasts remain: `P`.
pub fn compute_delay(params: &CountParams) -> u64 {
    if params.objects == 0 {
        return params.iterations;
    }
    let extra = if params.alt_proposal { params.diameter } else { 0 };
    params.iterations * (params.consensus + params.diameter + extra)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dynamic(alt: bool) -> CountParams {
        CountParams { iterations: 1, particles: 1000, consensus: 6, diameter: 3, position_dim: 2, objects: 2, alt_proposal: alt }
    }

    #[test]
    fn dynamic_counts() {
        let c = dynamic(false).closed_form();
        assert_eq!((c.n_c, c.n_nbp, c.total()), (18000, 2000, 20000));
        assert_eq!(dynamic(true).closed_form().n_ap, 12000);
        assert_eq!(compute_delay(&dynamic(false)), 9);
        assert_eq!(compute_delay(&dynamic(true)), 12);
    }

    #[test]
    fn static_counts() {
        let p = CountParams { iterations: 3, particles: 1000, consensus: 15, diameter: 3, position_dim: 2, objects: 50, alt_proposal: true };
        let c = p.closed_form();
        assert_eq!((c.n_c, c.n_nbp, c.n_ap), (2_700_000, 6000, 900_000));
        assert_eq!(compute_delay(&p), 63);
    }

    #[test]
    fn no_objects() {
        let p = CountParams { objects: 0, ..dynamic(false) };
        assert_eq!(p.closed_form().total(), 2000);
        assert_eq!(compute_delay(&p), 1);
    }
}
