//! Versioned experiment configuration. Unknown fields are rejected; every
//! default a suite relies on is written back into the config before hashing.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::environment::{build_two_point_law, EnvironmentLaw, LawSpec, SupportEntry};
use crate::error::{Error, Result};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Velocity,
    KalikowVerify,
    PhatIdentity,
    Gambler,
    PolynomialProbe,
    Tgamma,
    Expansion,
    RenormAudit,
    BoxClassify,
    GreenScaling,
}

impl Suite {
    pub const ALL: [Suite; 10] = [
        Suite::Velocity,
        Suite::KalikowVerify,
        Suite::PhatIdentity,
        Suite::Gambler,
        Suite::PolynomialProbe,
        Suite::Tgamma,
        Suite::Expansion,
        Suite::RenormAudit,
        Suite::BoxClassify,
        Suite::GreenScaling,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Velocity => "velocity",
            Suite::KalikowVerify => "kalikow-verify",
            Suite::PhatIdentity => "phat-identity",
            Suite::Gambler => "gambler",
            Suite::PolynomialProbe => "polynomial-probe",
            Suite::Tgamma => "tgamma",
            Suite::Expansion => "expansion",
            Suite::RenormAudit => "renorm-audit",
            Suite::BoxClassify => "box-classify",
            Suite::GreenScaling => "green-scaling",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LawConfig {
    /// Two-outcome law with mean drift `lambda` along e1.
    TwoPoint {
        d: usize,
        epsilon: f64,
        lambda: f64,
        #[serde(default)]
        transverse_noise: f64,
    },
    Ssrw { d: usize },
    /// Deterministic environment with `ξ(±e1) = ±a`.
    Homogeneous { d: usize, epsilon: f64, a: f64 },
    Support { d: usize, epsilon: f64, support: Vec<SupportEntry> },
}

impl LawConfig {
    pub fn build(&self, seed: u64) -> Result<EnvironmentLaw> {
        let law = match self {
            LawConfig::TwoPoint { d, epsilon, lambda, transverse_noise } => {
                build_two_point_law(*d, *epsilon, *lambda, *transverse_noise, seed)?.0
            }
            LawConfig::Ssrw { d } => EnvironmentLaw::ssrw(*d).with_seed(seed),
            LawConfig::Homogeneous { d, epsilon, a } => EnvironmentLaw::homogeneous_drift(*d, *epsilon, *a, seed)?,
            LawConfig::Support { d, epsilon, support } => {
                EnvironmentLaw::new(LawSpec { d: *d, epsilon: *epsilon, support: support.clone(), master_seed: seed })?
            }
        };
        Ok(law)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_list: Option<Vec<i64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_list: Option<Vec<i64>>,
    /// Half-width of the Kalikow box.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub box_half: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_max: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_override: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi_k_max: Option<u64>,
    /// 0-box scale; `NL` from `(θ, ε)` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nl: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub box_lateral: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub box_window: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parent_m: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parent_lateral: Option<i64>,
    /// Transverse cap of the slabs in units of `L`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cap_factor: Option<i64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budgets {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_walks: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_envs: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_cap: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub site_budget: Option<u128>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub enumeration_cap: Option<u128>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_domains: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_domain_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extra_transverse: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hitting_level: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_budget: Option<u128>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constants {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c4: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_power: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Exponent `K` of the polynomial condition.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_poly: Option<f64>,
    /// Exponent `α` of the Green power sums.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub leak_tol: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Suite>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub law: Option<LawConfig>,
    #[serde(default)]
    pub geometry: Geometry,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default)]
    pub constants: Constants,
}

impl ExperimentConfig {
    pub fn new(suite: Suite) -> Self {
        Self {
            version: CONFIG_VERSION,
            experiment: Some(suite),
            master_seed: None,
            law: None,
            geometry: Geometry::default(),
            budgets: Budgets::default(),
            constants: Constants::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.version != CONFIG_VERSION {
            return Err(Error::Config(format!("version: expected {CONFIG_VERSION}, got {}", cfg.version)));
        }
        Ok(cfg)
    }

    pub fn seed(&mut self) -> u64 {
        *self.master_seed.get_or_insert(1)
    }

    /// The configured law, or `default` recorded as the law. Construction
    /// errors are configuration errors.
    pub fn law_or(&mut self, default: LawConfig) -> Result<EnvironmentLaw> {
        let seed = self.seed();
        self.law.get_or_insert(default).build(seed).map_err(|e| Error::Config(format!("law: {e}")))
    }

    /// SHA-256 of the canonical JSON of the resolved config.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}
