//! Experiment configuration (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const DATA_DIR_ENV: &str = "HSCG_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    Hscg,
    HscgRestart,
    Scg,
    Civr,
}

impl SolverKind {
    pub fn name(&self) -> &'static str {
        match self {
            SolverKind::Hscg => "hscg",
            SolverKind::HscgRestart => "hscg-restart",
            SolverKind::Scg => "scg",
            SolverKind::Civr => "civr",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Portfolio,
    Minimax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Synthetic {
    pub n: usize,
    pub p: usize,
    #[serde(default)]
    pub seed: u64,
    /// Label flip probability (minimax only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flip: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub kind: ProblemKind,
    /// Dataset file; relative paths are resolved against `HSCG_DATA_DIR`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<Synthetic>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Number of blocks `n_b`; the default mini-batch is `⌈N / n_b⌉`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<usize>,
    #[serde(default)]
    pub drop_missing: bool,
    #[serde(default)]
    pub index_column: bool,
    #[serde(default)]
    pub max_abs_scale: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
}

/// `"zero"`, `"diminishing"` or a constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaSetting {
    Named(String),
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    #[default]
    Manual,
    Thm1,
    Thm2,
    Thm3,
    Thm4,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsConfig {
    /// Given constants; any missing value is estimated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_f: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_f: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_f: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_j: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HscgSection {
    #[serde(default)]
    pub schedule: ScheduleKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<GammaSetting>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stages: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b0_hat: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlated: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<ConstantsConfig>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScgSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_exponent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<GammaSetting>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CivrSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<usize>,
    /// Epoch-start batch `B`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mega: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_batch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<GammaSetting>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KktSection {
    /// Override of the smoothing `γ_T` stored with the run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// `M_F` for the bound; estimated around `x̄` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_f: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradcheckSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// Added to every Jacobian entry; a negative control for the checker.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jacobian_perturbation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub solvers: Vec<SolverKind>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Epoch budget shared by every solver unless overridden per section.
    pub epochs: f64,
    /// Iterations between metric records; defaults to about one epoch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cadence: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mega_batch: Option<usize>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub hscg: HscgSection,
    #[serde(default, rename = "hscg-restart")]
    pub hscg_restart: HscgSection,
    #[serde(default)]
    pub scg: ScgSection,
    #[serde(default)]
    pub civr: CivrSection,
    #[serde(default)]
    pub kkt: KktSection,
    #[serde(default)]
    pub gradcheck: GradcheckSection,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Field-level checks that need no data.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.solvers.is_empty() {
            return bad("`solvers` must list at least one solver".into());
        }
        if self.seeds.is_empty() {
            return bad("`seeds` must not be empty".into());
        }
        if !(self.epochs > 0.0) || !self.epochs.is_finite() {
            return bad(format!("epoch budget {} must be positive", self.epochs));
        }
        if self.cadence == Some(0) {
            return bad("cadence must be positive".into());
        }
        let p = &self.problem;
        match (&p.path, &p.synthetic) {
            (None, None) => {
                return bad("problem needs either `path` or a `[problem.synthetic]` table".into())
            }
            (Some(_), Some(_)) => {
                return bad("problem takes `path` or `synthetic`, not both".into())
            }
            _ => {}
        }
        if let Some(s) = &p.synthetic {
            if s.n == 0 || s.p == 0 {
                return bad("synthetic problem needs n >= 1 and p >= 1".into());
            }
            if let Some(f) = s.flip {
                if !(0.0..=1.0).contains(&f) {
                    return bad(format!("flip probability {f} outside [0, 1]"));
                }
            }
        }
        if p.blocks == Some(0) {
            return bad("blocks must be positive".into());
        }
        for (name, g) in [
            ("hscg", &self.hscg.gamma),
            ("hscg-restart", &self.hscg_restart.gamma),
            ("scg", &self.scg.gamma),
            ("civr", &self.civr.gamma),
        ] {
            if let Some(GammaSetting::Named(s)) = g {
                if s != "zero" && s != "diminishing" {
                    return bad(format!(
                        "[{name}] gamma must be \"zero\", \"diminishing\" or a number, got \"{s}\""
                    ));
                }
            }
        }
        for e in [
            self.hscg.epochs,
            self.hscg_restart.epochs,
            self.scg.epochs,
            self.civr.epochs,
        ]
        .into_iter()
        .flatten()
        {
            if !(e > 0.0) {
                return bad(format!("epoch budget {e} must be positive"));
            }
        }
        Ok(())
    }

    /// Effective epoch budget of `kind`.
    pub fn epochs_for(&self, kind: SolverKind) -> f64 {
        let own = match kind {
            SolverKind::Hscg => self.hscg.epochs,
            SolverKind::HscgRestart => self.hscg_restart.epochs,
            SolverKind::Scg => self.scg.epochs,
            SolverKind::Civr => self.civr.epochs,
        };
        own.unwrap_or(self.epochs)
    }

    /// Dataset path with `HSCG_DATA_DIR` applied to relative paths.
    pub fn data_path(&self) -> Option<PathBuf> {
        let path = self.problem.path.as_ref()?;
        if path.is_absolute() {
            return Some(path.clone());
        }
        match std::env::var_os(DATA_DIR_ENV) {
            Some(dir) => Some(PathBuf::from(dir).join(path)),
            None => Some(path.clone()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
solvers = ["hscg", "scg"]
seeds = [0, 1]
epochs = 5.0
cadence = 3

[problem]
kind = "minimax"
lambda = 0.0001

[problem.synthetic]
n = 100
p = 10
flip = 0.1

[hscg]
eta = 0.5
theta = 1.0
gamma = "diminishing"

[scg]
eta = 0.1
gamma = 0.05
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(cfg.solvers, vec![SolverKind::Hscg, SolverKind::Scg]);
        assert_eq!(
            cfg.hscg.gamma,
            Some(GammaSetting::Named("diminishing".into()))
        );
        assert_eq!(cfg.scg.gamma, Some(GammaSetting::Value(0.05)));
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.to_toml(), cfg.to_toml());
    }

    #[test]
    fn rejects_unknown_fields_and_bad_values() {
        assert!(
            ExperimentConfig::from_toml(&SAMPLE.replace("cadence = 3", "cadense = 3")).is_err()
        );
        assert!(
            ExperimentConfig::from_toml(&SAMPLE.replace("epochs = 5.0", "epochs = -1.0")).is_err()
        );
        assert!(
            ExperimentConfig::from_toml(&SAMPLE.replace("\"diminishing\"", "\"fast\"")).is_err()
        );
        assert!(
            ExperimentConfig::from_toml(&SAMPLE.replace("seeds = [0, 1]", "seeds = []")).is_err()
        );
    }

    #[test]
    fn per_solver_epochs() {
        let cfg =
            ExperimentConfig::from_toml(&SAMPLE.replace("eta = 0.1", "eta = 0.1\nepochs = 2.0"))
                .unwrap();
        assert_eq!(cfg.epochs_for(SolverKind::Hscg), 5.0);
        assert_eq!(cfg.epochs_for(SolverKind::Scg), 2.0);
    }
}
