//! Experiment manifests: one TOML file describing a whole reproducible
//! pipeline — dataset, split, period-initialization budget, training
//! configuration, ensemble members, and where outputs go.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::SplitSpec;
use crate::error::{Error, Result};
use crate::fsio::read_bytes;
use crate::train::TrainingConfig;

/// Period-initialization budget: `k` spectral candidates, at most `j`
/// selected atoms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitSettings {
    pub k: usize,
    pub j: usize,
}

impl Default for InitSettings {
    fn default() -> Self {
        InitSettings { k: 128, j: 8 }
    }
}

/// One ensemble member: a lookback length (as a horizon multiple) and a
/// training seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemberSpec {
    pub lookback_multiplier: usize,
    pub seed: u64,
}

/// The full experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    /// Long-format CSV with the observations.
    pub dataset: PathBuf,
    /// Directory for checkpoints, forecasts, and reports.
    pub out_dir: PathBuf,
    /// Periodicity coefficients document; when absent, training runs the
    /// initialization itself and writes the document into `out_dir`.
    #[serde(default)]
    pub coefficients: Option<PathBuf>,
    pub split: SplitSpec,
    #[serde(default)]
    pub init: InitSettings,
    #[serde(default)]
    pub training: TrainingConfig,
    /// Ensemble members; empty means one member drawn from `training`.
    #[serde(default)]
    pub members: Vec<MemberSpec>,
}

impl ExperimentManifest {
    /// The member list actually trained: the declared members, or a single
    /// member assembled from the training config.
    pub fn effective_members(&self) -> Vec<MemberSpec> {
        if self.members.is_empty() {
            vec![MemberSpec {
                lookback_multiplier: self.training.lookback_multiplier,
                seed: self.training.seed,
            }]
        } else {
            self.members.clone()
        }
    }

    /// The training config of one member: the shared config with the
    /// member's lookback and seed substituted.
    pub fn member_config(&self, member: &MemberSpec) -> TrainingConfig {
        TrainingConfig {
            lookback_multiplier: member.lookback_multiplier,
            seed: member.seed,
            ..self.training.clone()
        }
    }

    /// Checkpoint path of member `index` under `out_dir`.
    pub fn checkpoint_path(&self, index: usize) -> PathBuf {
        self.out_dir.join(format!("member-{index}.checkpoint.json"))
    }

    /// Path of the coefficients document training writes when none was
    /// supplied.
    pub fn derived_coefficients_path(&self) -> PathBuf {
        self.out_dir.join("periods.json")
    }

    fn validate(&self) -> Result<()> {
        if self.dataset.as_os_str().is_empty() || self.out_dir.as_os_str().is_empty() {
            return Err(Error::Data("manifest: dataset and out_dir must be set".into()));
        }
        if self.split.train_end >= self.split.val_end || self.split.val_end > self.split.test_end {
            return Err(Error::Data(format!(
                "manifest: split {} / {} / {} is not ordered",
                self.split.train_end, self.split.val_end, self.split.test_end
            )));
        }
        if self.init.k == 0 {
            return Err(Error::Data("manifest: init.k must be positive".into()));
        }
        self.training.validate()?;
        for (i, m) in self.members.iter().enumerate() {
            if m.lookback_multiplier == 0 {
                return Err(Error::Data(format!("manifest: member {i} has a zero lookback")));
            }
        }
        Ok(())
    }

    /// Re-roots the relative paths onto the manifest file's directory, so a
    /// manifest can be run from anywhere.
    fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.dataset, &mut self.out_dir] {
            if p.is_relative() {
                *p = base.join(&p);
            }
        }
        if let Some(c) = &mut self.coefficients {
            if c.is_relative() {
                *c = base.join(&c);
            }
        }
    }
}

/// Parses and validates a manifest from raw bytes, leaving paths untouched.
///
/// This is the single entry point for untrusted manifest bytes, shared by
/// [`load_manifest`] and the fuzz harness: it must reject, never panic.
pub fn parse_manifest(bytes: &[u8]) -> Result<ExperimentManifest> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::Data(format!("manifest is not valid utf-8: {e}")))?;
    let manifest: ExperimentManifest =
        toml::from_str(text).map_err(|e| Error::Data(format!("malformed manifest: {e}")))?;
    manifest.validate()?;
    Ok(manifest)
}

/// Reads a manifest file and resolves its relative paths against the file's
/// directory.
pub fn load_manifest(path: &Path) -> Result<ExperimentManifest> {
    let mut manifest = parse_manifest(&read_bytes(path)?)?;
    let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    manifest.resolve_paths(base);
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::{Loss, Variant};

    const FULL: &str = r#"
dataset = "data/cubic.csv"
out_dir = "runs/exp1"
coefficients = "periods.json"

[split]
train_end = 4000
val_end = 4100
test_end = 5000

[init]
k = 64
j = 6

[training]
iterations = 500
batch_size = 16
loss = "mase"
variant = "depts-2"
horizon = 12

[[members]]
lookback_multiplier = 2
seed = 1

[[members]]
lookback_multiplier = 3
seed = 2
"#;

    #[test]
    fn parses_a_full_manifest() {
        let m = parse_manifest(FULL.as_bytes()).unwrap();
        assert_eq!(m.dataset, PathBuf::from("data/cubic.csv"));
        assert_eq!(m.init, InitSettings { k: 64, j: 6 });
        assert_eq!(m.training.loss, Loss::Mase);
        assert_eq!(m.training.variant, Variant::Depts2);
        assert_eq!(m.training.iterations, 500);
        // Unset training fields keep their defaults.
        assert_eq!(m.training.lr_theta, TrainingConfig::default().lr_theta);
        assert_eq!(m.members.len(), 2);
        assert_eq!(m.effective_members(), m.members);
        let cfg = m.member_config(&m.members[1]);
        assert_eq!((cfg.lookback_multiplier, cfg.seed), (3, 2));
        assert_eq!(cfg.loss, Loss::Mase);
    }

    #[test]
    fn minimal_manifest_gets_defaults_and_a_single_member() {
        let m = parse_manifest(
            br#"
dataset = "d.csv"
out_dir = "out"
[split]
train_end = 100
val_end = 120
test_end = 150
"#,
        )
        .unwrap();
        assert_eq!(m.coefficients, None);
        assert_eq!(m.init, InitSettings::default());
        assert_eq!(m.training, TrainingConfig::default());
        let members = m.effective_members();
        assert_eq!(members.len(), 1);
        assert_eq!(members[0].lookback_multiplier, m.training.lookback_multiplier);
        assert_eq!(m.checkpoint_path(0), PathBuf::from("out/member-0.checkpoint.json"));
    }

    #[test]
    fn rejects_malformed_manifests() {
        let cases: [&[u8]; 6] = [
            b"",
            b"dataset = \"d.csv\"\nout_dir = \"o\"\n",
            b"dataset = \"d.csv\"\nout_dir = \"o\"\n[split]\ntrain_end = 10\nval_end = 5\ntest_end = 20\n",
            b"dataset = \"d.csv\"\nout_dir = \"o\"\nsurprise = 1\n[split]\ntrain_end = 1\nval_end = 2\ntest_end = 3\n",
            b"dataset = \"d.csv\"\nout_dir = \"o\"\n[split]\ntrain_end = 1\nval_end = 2\ntest_end = 3\n[training]\nhorizon = 0\n",
            b"\xff\xfeoops",
        ];
        for case in cases {
            assert!(parse_manifest(case).is_err(), "{:?}", String::from_utf8_lossy(case));
        }
    }

    #[test]
    fn load_resolves_relative_paths_against_the_manifest_directory() {
        let dir = tempfile::tempdir().unwrap();
        let nested = dir.path().join("cfg");
        std::fs::create_dir_all(&nested).unwrap();
        let path = nested.join("exp.toml");
        std::fs::write(&path, FULL).unwrap();
        let m = load_manifest(&path).unwrap();
        assert_eq!(m.dataset, nested.join("data/cubic.csv"));
        assert_eq!(m.out_dir, nested.join("runs/exp1"));
        assert_eq!(m.coefficients, Some(nested.join("periods.json")));
    }
}
