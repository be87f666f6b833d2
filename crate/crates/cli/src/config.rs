//! Experiment configuration: a preset id plus optional overrides, read from
//! TOML or built from command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use permdiag::learners::{ForestConfig, MlpConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const DEFAULT_SEED: u64 = 20_190_101;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Fig1Ranks,
    Fig2Grid,
    Fig3Effects,
    Fig4Contour,
    Fig5Alternatives,
    Fig6NnVariance,
    Fig7Bikeshare,
    TheoremCheck,
}

impl Preset {
    pub const ALL: [Preset; 8] = [
        Preset::Fig1Ranks,
        Preset::Fig2Grid,
        Preset::Fig3Effects,
        Preset::Fig4Contour,
        Preset::Fig5Alternatives,
        Preset::Fig6NnVariance,
        Preset::Fig7Bikeshare,
        Preset::TheoremCheck,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            Preset::Fig1Ranks => "fig1_ranks",
            Preset::Fig2Grid => "fig2_grid",
            Preset::Fig3Effects => "fig3_effects",
            Preset::Fig4Contour => "fig4_contour",
            Preset::Fig5Alternatives => "fig5_alternatives",
            Preset::Fig6NnVariance => "fig6_nn_variance",
            Preset::Fig7Bikeshare => "fig7_bikeshare",
            Preset::TheoremCheck => "theorem_check",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Preset {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Preset::ALL
            .into_iter()
            .find(|p| p.id() == s)
            .ok_or_else(|| CliError::Config(format!("unknown preset {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    Forest,
    Mlp,
    Linear,
}

impl LearnerKind {
    pub fn id(&self) -> &'static str {
        match self {
            LearnerKind::Forest => "forest",
            LearnerKind::Mlp => "mlp",
            LearnerKind::Linear => "linear",
        }
    }

    /// One-letter plot marker.
    pub fn marker(&self) -> char {
        match self {
            LearnerKind::Forest => 'r',
            LearnerKind::Mlp => 'n',
            LearnerKind::Linear => 'l',
        }
    }
}

/// Everything a run needs. Fields left as `None` take the preset default,
/// which depends on `full`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: Preset,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Larger replicate counts and sample-size grids.
    #[serde(default)]
    pub full: bool,
    #[serde(default)]
    pub reps: Option<usize>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub ns: Option<Vec<usize>>,
    #[serde(default)]
    pub rhos: Option<Vec<f64>>,
    /// Permutation or resampling draws per importance score.
    #[serde(default)]
    pub perm_reps: Option<usize>,
    #[serde(default)]
    pub learners: Option<Vec<LearnerKind>>,
    #[serde(default)]
    pub forest: ForestConfig,
    #[serde(default)]
    pub mlp: MlpConfig,
    /// Grid points per axis for curves and fields.
    #[serde(default)]
    pub resolution: Option<usize>,
    #[serde(default)]
    pub bikeshare: Option<BikeShareSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BikeShareSection {
    pub path: PathBuf,
    #[serde(default)]
    pub subsample: Option<usize>,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn new(preset: Preset) -> Self {
        Self {
            preset,
            seed: DEFAULT_SEED,
            out: default_out().join(preset.id()),
            full: false,
            reps: None,
            n: None,
            ns: None,
            rhos: None,
            perm_reps: None,
            learners: None,
            forest: ForestConfig::default(),
            mlp: MlpConfig::default(),
            resolution: None,
            bikeshare: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.reps == Some(0) {
            return bad("reps must be >= 1".into());
        }
        if self.perm_reps == Some(0) {
            return bad("perm_reps must be >= 1".into());
        }
        if let Some(n) = self.n {
            if n < 10 {
                return bad(format!("n = {n} is too small"));
            }
        }
        if let Some(ns) = &self.ns {
            if ns.is_empty() || ns.iter().any(|&n| n < 10) {
                return bad("ns must be non-empty with every n >= 10".into());
            }
        }
        if let Some(rhos) = &self.rhos {
            if rhos.is_empty() {
                return bad("rhos must be non-empty".into());
            }
            if let Some(r) = rhos.iter().find(|r| !(r.abs() <= 1.0)) {
                return bad(format!("rho = {r} outside [-1, 1]"));
            }
        }
        if let Some(l) = &self.learners {
            if l.is_empty() {
                return bad("learners must be non-empty".into());
            }
        }
        if self.resolution.is_some_and(|r| r < 2) {
            return bad("resolution must be >= 2".into());
        }
        if self.forest.n_trees == 0 || self.forest.min_leaf == 0 {
            return bad("forest needs n_trees >= 1 and min_leaf >= 1".into());
        }
        if self.mlp.hidden == 0 {
            return bad("mlp.hidden must be >= 1".into());
        }
        if self.preset == Preset::Fig7Bikeshare && self.bikeshare.is_none() {
            return bad("fig7_bikeshare needs [bikeshare] path".into());
        }
        Ok(())
    }

    pub fn reps_or(&self, desk: usize, full: usize) -> usize {
        self.reps.unwrap_or(if self.full { full } else { desk })
    }

    pub fn n_or(&self, default: usize) -> usize {
        self.n.unwrap_or(default)
    }

    pub fn rhos_or(&self, default: &[f64]) -> Vec<f64> {
        self.rhos.clone().unwrap_or_else(|| default.to_vec())
    }

    pub fn perm_reps(&self) -> usize {
        self.perm_reps.unwrap_or(1)
    }

    pub fn learners_or(&self, default: &[LearnerKind]) -> Vec<LearnerKind> {
        self.learners.clone().unwrap_or_else(|| default.to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_toml() {
        let cfg = ExperimentConfig::from_toml("preset = \"fig1_ranks\"").unwrap();
        assert_eq!(cfg.preset, Preset::Fig1Ranks);
        assert_eq!(cfg.seed, DEFAULT_SEED);
        assert_eq!(cfg.forest, ForestConfig::default());
    }

    #[test]
    fn misplaced_key_in_learner_section_is_rejected() {
        let err = ExperimentConfig::from_toml("preset = \"fig1_ranks\"\n[mlp]\nout = \"x\"\n").unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
    }

    #[test]
    fn overrides_and_sections() {
        let text = r#"
            preset = "fig5_alternatives"
            seed = 7
            reps = 3
            rhos = [0.0, 0.5]
            learners = ["linear"]
            [forest]
            n_trees = 50
            [mlp]
            max_iter = 10
        "#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.reps_or(10, 50), 3);
        assert_eq!(cfg.forest.n_trees, 50);
        assert_eq!(cfg.forest.min_leaf, 5);
        assert_eq!(cfg.mlp.max_iter, 10);
        assert_eq!(cfg.learners_or(&[]), vec![LearnerKind::Linear]);
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for text in [
            "preset = \"fig9\"",
            "preset = \"fig1_ranks\"\nreps = 0",
            "preset = \"fig1_ranks\"\nrhos = [1.5]",
            "preset = \"fig1_ranks\"\ncolour = 1",
            "preset = \"fig7_bikeshare\"",
        ] {
            assert!(matches!(ExperimentConfig::from_toml(text), Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn full_flag_switches_defaults() {
        let mut cfg = ExperimentConfig::new(Preset::Fig4Contour);
        assert_eq!(cfg.reps_or(30, 100), 30);
        cfg.full = true;
        assert_eq!(cfg.reps_or(30, 100), 100);
    }

    #[test]
    fn preset_ids_round_trip() {
        for p in Preset::ALL {
            assert_eq!(p.id().parse::<Preset>().unwrap(), p);
        }
    }
}
