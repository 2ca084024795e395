//! The experiment document and its resolution against the file system.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Deserialize;

use sqoe::abr::{BinningConfig, MpcObjectiveParams, PolicyConfig};
use sqoe::media::{ladder_default, Manifest, DEFAULT_SEGMENT_DURATION_S};
use sqoe::nettrace::{parse_trace, Trace, TraceFormat};
use sqoe::qoe::{ModelId, QoeParams};
use sqoe::simulator::PlayerConfig;
use sqoe::stats::DEFAULT_ALPHA;
use sqoe::subjective::{PartitionFilter, ScreeningConfig, MIN_SET_SIZE};
use sqoe::synth::{synthetic_manifest, synthetic_trace, trace_grid, ContentModel, TraceModel};

use crate::output::read_text;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticManifest {
    pub segments: usize,
    #[serde(default = "default_segment_duration")]
    pub segment_duration_s: f64,
    #[serde(default)]
    pub content: ContentModel,
}

fn default_segment_duration() -> f64 {
    DEFAULT_SEGMENT_DURATION_S
}

/// A manifest file or a seeded synthetic one.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestSource {
    pub name: Option<String>,
    pub path: Option<PathBuf>,
    pub synthetic: Option<SyntheticManifest>,
}

/// A trace file or a seeded synthetic one.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSource {
    pub name: Option<String>,
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<TraceFormat>,
    pub synthetic: Option<TraceModel>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubjectiveSection {
    /// `subject_id,video_id,session_id,day,device,score`
    pub ratings: Option<PathBuf>,
    /// `video_id,mos` scores of the realignment videos.
    pub anchors: Option<PathBuf>,
    /// Records JSON (id → record) of the rated videos.
    pub records: Option<PathBuf>,
    /// `subject_id,accuracy`
    pub accuracy: Option<PathBuf>,
    /// `subject_id,video_id,time_s` stall flags, scored against the records.
    pub keystrokes: Option<PathBuf>,
    pub screening: ScreeningConfig,
    pub filter: PartitionFilter,
    pub min_set_size: usize,
}

impl Default for SubjectiveSection {
    fn default() -> Self {
        Self {
            ratings: None,
            anchors: None,
            records: None,
            accuracy: None,
            keystrokes: None,
            screening: ScreeningConfig::default(),
            filter: PartitionFilter::default(),
            min_set_size: MIN_SET_SIZE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Wilcoxon,
    FTest,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsSection {
    /// `item_id,method,score`
    pub scores: Option<PathBuf>,
    /// `item_id,mos`
    pub mos: Option<PathBuf>,
    /// Defaults to the F-test when MOS is given, Wilcoxon otherwise.
    pub test: Option<TestKind>,
    pub alpha: f64,
}

impl Default for StatsSection {
    fn default() -> Self {
        Self {
            scores: None,
            mos: None,
            test: None,
            alpha: DEFAULT_ALPHA,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub manifests: Vec<ManifestSource>,
    pub traces: Vec<TraceSource>,
    /// Adds the nine-trace synthetic grid of this duration.
    pub trace_grid_duration_s: Option<f64>,
    pub policies: Vec<PolicyConfig>,
    /// Model ids; empty means every closed-form model.
    pub models: Vec<String>,
    pub qoe: QoeParams,
    pub player: PlayerConfig,
    pub mpc: MpcObjectiveParams,
    pub binning: BinningConfig,
    /// Records JSON for `qoe`.
    pub records: Option<PathBuf>,
    pub subjective: SubjectiveSection,
    pub stats: StatsSection,
}

/// A loaded config with paths made absolute and overrides applied.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub out: PathBuf,
    base: PathBuf,
}

/// Separate seed streams for each kind of generated input.
fn derive_seed(seed: u64, stream: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (stream << 48) ^ index as u64
}

fn unique(names: &[String], what: &str) -> anyhow::Result<()> {
    let mut seen = BTreeSet::new();
    for n in names {
        if !seen.insert(n) {
            bail!("duplicate {what} name {n:?}");
        }
    }
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

impl Experiment {
    pub fn load(path: Option<&Path>, seed: Option<u64>, out: Option<PathBuf>) -> anyhow::Result<Self> {
        let (config, base) = match path {
            Some(p) => {
                let text = read_text(p, "config")?;
                let config: ExperimentConfig =
                    toml::from_str(&text).with_context(|| format!("invalid config {}", p.display()))?;
                let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
                (config, base)
            }
            None => (ExperimentConfig::default(), PathBuf::new()),
        };
        let exp = Self {
            seed: seed.unwrap_or(config.seed),
            out: out
                .or_else(|| config.out.as_ref().map(|o| base.join(o)))
                .unwrap_or_else(|| "sqoe-out".into()),
            config,
            base,
        };
        exp.validate()?;
        Ok(exp)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base.join(p)
    }

    /// Resolves an optional path and checks that it exists.
    pub fn existing(&self, p: Option<&PathBuf>, what: &str) -> anyhow::Result<Option<PathBuf>> {
        p.map(|p| {
            let full = self.resolve(p);
            if !full.is_file() {
                bail!("{what} file not found: {}", full.display());
            }
            Ok(full)
        })
        .transpose()
    }

    fn validate(&self) -> anyhow::Result<()> {
        let c = &self.config;
        for (i, m) in c.manifests.iter().enumerate() {
            if m.path.is_some() == m.synthetic.is_some() {
                bail!("manifest #{} needs exactly one of `path` and `synthetic`", i + 1);
            }
            self.existing(m.path.as_ref(), "manifest")?;
        }
        for (i, t) in c.traces.iter().enumerate() {
            if t.path.is_some() == t.synthetic.is_some() {
                bail!("trace #{} needs exactly one of `path` and `synthetic`", i + 1);
            }
            self.existing(t.path.as_ref(), "trace")?;
        }
        unique(&self.manifest_names(), "manifest")?;
        unique(&self.trace_names(), "trace")?;
        self.models()?;
        c.qoe.validate().context("invalid [qoe] parameters")?;
        Ok(())
    }

    pub fn models(&self) -> anyhow::Result<Vec<ModelId>> {
        if self.config.models.is_empty() {
            return Ok(ModelId::BUILTIN.to_vec());
        }
        self.config
            .models
            .iter()
            .map(|m| m.parse::<ModelId>().map_err(anyhow::Error::from))
            .collect()
    }

    pub fn manifest_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .config
            .manifests
            .iter()
            .enumerate()
            .map(|(i, m)| match (&m.name, &m.path) {
                (Some(n), _) => n.clone(),
                (None, Some(p)) => stem(p),
                (None, None) => format!("synthetic{}", i + 1),
            })
            .collect();
        if names.is_empty() {
            names.push("default".into());
        }
        names
    }

    /// Manifests in config order. Without any, a 15-segment synthetic
    /// manifest on the default ladder. Parse errors stay per manifest.
    pub fn manifests(&self) -> Vec<(String, Result<Manifest, String>)> {
        let names = self.manifest_names();
        if self.config.manifests.is_empty() {
            let m = synthetic_manifest(
                ladder_default(),
                DEFAULT_SEGMENT_DURATION_S,
                15,
                &ContentModel::default(),
                derive_seed(self.seed, 1, 0),
            );
            return vec![(names[0].clone(), m.map_err(|e| e.to_string()))];
        }
        self.config
            .manifests
            .iter()
            .zip(names)
            .enumerate()
            .map(|(i, (src, name))| {
                let m = match (&src.path, &src.synthetic) {
                    (Some(p), _) => read_text(&self.resolve(p), "manifest")
                        .map_err(|e| format!("{e:#}"))
                        .and_then(|t| Manifest::from_json(&t).map_err(|e| format!("{}: {e}", p.display()))),
                    (None, Some(s)) => synthetic_manifest(
                        ladder_default(),
                        s.segment_duration_s,
                        s.segments,
                        &s.content,
                        derive_seed(self.seed, 1, i),
                    )
                    .map_err(|e| e.to_string()),
                    (None, None) => unreachable!("validated"),
                };
                (name, m)
            })
            .collect()
    }

    pub fn trace_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .config
            .traces
            .iter()
            .enumerate()
            .map(|(i, t)| match (&t.name, &t.path) {
                (Some(n), _) => n.clone(),
                (None, Some(p)) => stem(p),
                (None, None) => format!("synthetic{}", i + 1),
            })
            .collect();
        if let Some(d) = self.config.trace_grid_duration_s {
            names.extend(trace_grid(0, d).into_iter().map(|(n, _)| n));
        }
        names
    }

    /// Traces in config order, then the synthetic grid.
    pub fn traces(&self) -> Vec<(String, Result<Trace, String>)> {
        let names = self.trace_names();
        let mut out: Vec<(String, Result<Trace, String>)> = self
            .config
            .traces
            .iter()
            .zip(names)
            .enumerate()
            .map(|(i, (src, name))| {
                let t = match (&src.path, &src.synthetic) {
                    (Some(p), _) => read_text(&self.resolve(p), "trace")
                        .map_err(|e| format!("{e:#}"))
                        .and_then(|text| {
                            parse_trace(&text, src.format.unwrap_or(TraceFormat::Pairs))
                                .map_err(|e| format!("{}: {e}", p.display()))
                        }),
                    (None, Some(model)) => {
                        synthetic_trace(model, derive_seed(self.seed, 2, i)).map_err(|e| e.to_string())
                    }
                    (None, None) => unreachable!("validated"),
                };
                (name, t)
            })
            .collect();
        if let Some(d) = self.config.trace_grid_duration_s {
            out.extend(
                trace_grid(derive_seed(self.seed, 3, 0), d)
                    .into_iter()
                    .map(|(n, t)| (n, Ok(t))),
            );
        }
        out
    }

    /// Policies with unique labels. Without any, the rate- and
    /// buffer-based baselines.
    pub fn policies(&self) -> Vec<(String, PolicyConfig)> {
        let list = if self.config.policies.is_empty() {
            vec![
                PolicyConfig::Rb(Default::default()),
                PolicyConfig::Bb(Default::default()),
            ]
        } else {
            self.config.policies.clone()
        };
        let mut seen: BTreeSet<String> = BTreeSet::new();
        list.into_iter()
            .map(|mut p| {
                if let PolicyConfig::Fastmpc {
                    table_path: Some(t), ..
                } = &mut p
                {
                    *t = self.resolve(Path::new(t)).to_string_lossy().into_owned();
                }
                let base = p.label();
                let mut label = base.clone();
                let mut k = 2;
                while !seen.insert(label.clone()) {
                    label = format!("{base}_{k}");
                    k += 1;
                }
                (label, p)
            })
            .collect()
    }
}
