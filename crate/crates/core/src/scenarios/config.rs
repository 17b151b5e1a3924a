//! Scenario files: TOML documents with an `[algorithm]` and `[model]` table and
//! exactly one of `[dynamic]`, `[static]` or `[scalability]`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netsim::ProposalPolicy;

/// Estimators a scenario can run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodName {
    Pm,
    Rm,
    Spf,
}

impl MethodName {
    pub fn as_str(self) -> &'static str {
        match self {
            MethodName::Pm => "pm",
            MethodName::Rm => "rm",
            MethodName::Spf => "spf",
        }
    }
}

impl std::str::FromStr for MethodName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pm" => Ok(MethodName::Pm),
            "rm" => Ok(MethodName::Rm),
            "spf" => Ok(MethodName::Spf),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

fn default_diffuse() -> f64 {
    100.0
}

fn default_cap() -> f64 {
    100.0
}

fn default_threshold() -> f64 {
    10.0
}

fn default_audit() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmParams {
    pub particles: usize,
    pub iterations: usize,
    pub consensus_iterations: usize,
    /// Max-consensus rounds; the actual graph diameter when absent.
    #[serde(default)]
    pub diameter: Option<usize>,
    #[serde(default)]
    pub ldt: bool,
    pub proposal: ProposalPolicy,
    #[serde(default = "default_diffuse")]
    pub diffuse_variance: f64,
    #[serde(default = "default_cap")]
    pub partner_variance_cap: f64,
    /// Largest component variance of a localized agent.
    #[serde(default = "default_threshold")]
    pub localization_threshold: f64,
    pub methods: Vec<MethodName>,
    #[serde(default = "default_audit")]
    pub audit: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub sigma_v2: f64,
    pub agent_sigma_u2: f64,
    pub object_sigma_u2: f64,
    /// Position jitter of mobile agents that have not started moving.
    #[serde(default)]
    pub parked_sigma_u2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectStart {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicParams {
    pub steps: usize,
    pub field: [f64; 2],
    pub comm_range: f64,
    pub anchors: Vec<[f64; 2]>,
    pub mobile_agents: Vec<[f64; 2]>,
    /// Indices into `mobile_agents` whose range is `corner_range`.
    pub corner_agents: Vec<usize>,
    pub corner_range: f64,
    /// Measurement range of every other agent, anchors included.
    pub agent_range: f64,
    pub objects: Vec<ObjectStart>,
    /// Lower and upper bound of the uniform position prior on both axes.
    pub prior_bounds: [f64; 2],
    pub center: [f64; 2],
    pub horizon: f64,
    pub onset_velocity_variance: f64,
    pub velocity_prior_variance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaticParams {
    pub field: [f64; 2],
    pub anchors: Vec<[f64; 2]>,
    pub agents: usize,
    pub objects: usize,
    pub measurement_range: f64,
    pub comm_range: f64,
    pub prior_bounds: [f64; 2],
    /// Placement redraws allowed while the graph is too wide or disconnected.
    pub max_redraws: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalabilityParams {
    /// `(mobile agents, objects)` per network size.
    pub sizes: Vec<[usize; 2]>,
    pub steps: usize,
    pub field: [f64; 2],
    pub anchors: Vec<[f64; 2]>,
    /// Prior covariance `v I` around a mean drawn from `N(truth, mean_variance I)`.
    pub prior_variance: f64,
    pub prior_mean_variance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub runs: usize,
    pub algorithm: AlgorithmParams,
    pub model: ModelParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamic: Option<DynamicParams>,
    #[serde(default, rename = "static", skip_serializing_if = "Option::is_none")]
    pub placement: Option<StaticParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scalability: Option<ScalabilityParams>,
}

/// The scenario-specific section of a config.
#[derive(Clone, Copy, Debug)]
pub enum ScenarioKind<'a> {
    Dynamic(&'a DynamicParams),
    Static(&'a StaticParams),
    Scalability(&'a ScalabilityParams),
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive, got {v}")))
    }
}

fn nonnegative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be nonnegative, got {v}")))
    }
}

fn inside(name: &str, p: [f64; 2], field: [f64; 2]) -> Result<()> {
    if (0.0..=field[0]).contains(&p[0]) && (0.0..=field[1]).contains(&p[1]) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} {p:?} lies outside the field")))
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn kind(&self) -> Result<ScenarioKind<'_>> {
        match (&self.dynamic, &self.placement, &self.scalability) {
            (Some(d), None, None) => Ok(ScenarioKind::Dynamic(d)),
            (None, Some(s), None) => Ok(ScenarioKind::Static(s)),
            (None, None, Some(s)) => Ok(ScenarioKind::Scalability(s)),
            _ => Err(Error::Config("exactly one of [dynamic], [static], [scalability] is required".into())),
        }
    }

    pub fn runs_method(&self, m: MethodName) -> bool {
        self.algorithm.methods.contains(&m)
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.algorithm;
        if a.particles == 0 || a.iterations == 0 || self.runs == 0 {
            return Err(Error::Config("particles, iterations and runs must be positive".into()));
        }
        if a.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        positive("diffuse_variance", a.diffuse_variance)?;
        positive("partner_variance_cap", a.partner_variance_cap)?;
        positive("localization_threshold", a.localization_threshold)?;
        let m = &self.model;
        positive("sigma_v2", m.sigma_v2)?;
        nonnegative("agent_sigma_u2", m.agent_sigma_u2)?;
        nonnegative("object_sigma_u2", m.object_sigma_u2)?;
        nonnegative("parked_sigma_u2", m.parked_sigma_u2)?;
        match self.kind()? {
            ScenarioKind::Dynamic(d) => {
                if d.steps == 0 || d.mobile_agents.is_empty() {
                    return Err(Error::Config("dynamic scenario needs steps and mobile agents".into()));
                }
                positive("comm_range", d.comm_range)?;
                positive("corner_range", d.corner_range)?;
                positive("agent_range", d.agent_range)?;
                positive("horizon", d.horizon)?;
                nonnegative("onset_velocity_variance", d.onset_velocity_variance)?;
                nonnegative("velocity_prior_variance", d.velocity_prior_variance)?;
                for &p in &d.anchors {
                    inside("anchor", p, d.field)?;
                }
                if let Some(&c) = d.corner_agents.iter().find(|&&c| c >= d.mobile_agents.len()) {
                    return Err(Error::Config(format!("corner agent {c} does not exist")));
                }
                if d.prior_bounds[0] >= d.prior_bounds[1] {
                    return Err(Error::Config("empty prior box".into()));
                }
                if self.runs_method(MethodName::Spf) {
                    return Err(Error::Config("the dynamic scenario runs PM and RM only".into()));
                }
            }
            ScenarioKind::Static(s) => {
                positive("measurement_range", s.measurement_range)?;
                positive("comm_range", s.comm_range)?;
                for &p in &s.anchors {
                    inside("anchor", p, s.field)?;
                }
                if s.prior_bounds[0] >= s.prior_bounds[1] {
                    return Err(Error::Config("empty prior box".into()));
                }
                if self.runs_method(MethodName::Spf) {
                    return Err(Error::Config("the static scenario runs PM and RM only".into()));
                }
            }
            ScenarioKind::Scalability(s) => {
                if s.sizes.is_empty() || s.steps == 0 || s.anchors.is_empty() {
                    return Err(Error::Config("scalability scenario needs sizes, steps and anchors".into()));
                }
                for &[agents, objects] in &s.sizes {
                    if agents < 3 || objects > agents {
                        return Err(Error::Config(format!("size ({agents}, {objects}) needs at least 3 agents and no more objects than agents")));
                    }
                }
                positive("prior_variance", s.prior_variance)?;
                nonnegative("prior_mean_variance", s.prior_mean_variance)?;
                if self.runs_method(MethodName::Rm) {
                    return Err(Error::Config("the scalability scenario runs PM and SPF only".into()));
                }
            }
        }
        Ok(())
    }
}

/// Command-line style overrides of a loaded config.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub particles: Option<usize>,
    pub iterations: Option<usize>,
    pub consensus_iterations: Option<usize>,
    pub rho: Option<f64>,
    pub ldt: Option<bool>,
    pub alt_proposal: Option<bool>,
    pub runs: Option<usize>,
    pub seed: Option<u64>,
    pub sizes: Option<Vec<[usize; 2]>>,
    pub methods: Option<Vec<MethodName>>,
}

impl Overrides {
    /// Applies the overrides and re-validates.
    pub fn apply(&self, cfg: &mut ScenarioConfig) -> Result<()> {
        let a = &mut cfg.algorithm;
        if let Some(v) = self.particles {
            a.particles = v;
        }
        if let Some(v) = self.iterations {
            a.iterations = v;
        }
        if let Some(v) = self.consensus_iterations {
            a.consensus_iterations = v;
        }
        if let Some(v) = self.ldt {
            a.ldt = v;
        }
        match self.alt_proposal {
            Some(false) => a.proposal = ProposalPolicy::Never,
            Some(true) if a.proposal == ProposalPolicy::Never => a.proposal = ProposalPolicy::FirstStep,
            _ => {}
        }
        if let Some(m) = &self.methods {
            a.methods = m.clone();
        }
        if let Some(v) = self.runs {
            cfg.runs = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(rho) = self.rho {
            match cfg.dynamic.as_mut() {
                Some(d) => d.corner_range = rho,
                None => return Err(Error::Config("--rho applies to dynamic scenarios only".into())),
            }
        }
        if let Some(sizes) = &self.sizes {
            match cfg.scalability.as_mut() {
                Some(s) => s.sizes = sizes.clone(),
                None => return Err(Error::Config("--sizes applies to the scalability scenario only".into())),
            }
        }
        cfg.validate()
    }
}
