//! Run configuration: a TOML file mirroring the pipeline settings, with
//! preset defaults filled in for anything left out.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use ctsr_core::assembly::{LhsSpec, RowStacking};
use ctsr_core::cases::{CasePreset, DatasetSource, Sampling};
use ctsr_core::dataset::{load_dataset, GridDataset};
use ctsr_core::library::{LibraryMode, LibrarySpec};
use ctsr_core::selection::{GridSpec, GroundTruth};
use ctsr_core::solver::Hyperparams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthTerm {
    pub term: String,
    pub coefficient: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LhsConfig {
    TimeDerivative { quantity: String },
    Channel { quantity: String },
    Combination { terms: Vec<TruthTerm> },
}

/// Everything a run needs. Optional sections fall back to the case preset;
/// `case = "custom"` requires `library`, `lhs` and a data source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub case: String,
    pub mode: LibraryMode,
    pub dataset: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub stacking: Option<RowStacking>,
    pub library: Option<LibrarySpec>,
    pub hyper: Option<Hyperparams>,
    pub sampling: Option<Sampling>,
    pub lhs: Option<LhsConfig>,
    pub source: Option<DatasetSource>,
    pub truth: Option<Vec<TruthTerm>>,
    pub sweep: GridSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            case: CasePreset::Burgers2d.name().into(),
            mode: LibraryMode::Tensor,
            dataset: None,
            output_dir: None,
            stacking: None,
            library: None,
            hyper: None,
            sampling: None,
            lhs: None,
            source: None,
            truth: None,
            sweep: GridSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let config: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(config)
    }

    pub fn preset(&self) -> anyhow::Result<Option<CasePreset>> {
        if self.case == "custom" {
            return Ok(None);
        }
        match CasePreset::from_name(&self.case) {
            Some(c) => Ok(Some(c)),
            None => bail!(
                "unknown case `{}`; expected burgers2d, convection2d, ns3d, giesekus3d or custom",
                self.case
            ),
        }
    }

    /// Fills every optional section from the preset, so the result can be
    /// written out and reloaded to reproduce the run.
    pub fn effective(&self) -> anyhow::Result<RunConfig> {
        let mut c = self.clone();
        let preset = self.preset()?;
        if let Some(p) = preset {
            c.library.get_or_insert_with(|| p.library_spec(self.mode));
            c.hyper.get_or_insert_with(|| p.hyperparams());
            c.sampling.get_or_insert_with(|| p.sampling());
            c.stacking.get_or_insert(if self.mode == LibraryMode::Scalar { p.scalar_stacking() } else { RowStacking::Ordered });
            c.lhs.get_or_insert_with(|| lhs_config(&p.lhs()));
            if c.dataset.is_none() {
                c.source.get_or_insert_with(|| p.dataset_source());
            }
            c.truth.get_or_insert_with(|| {
                p.truth()
                    .labelled()
                    .into_iter()
                    .map(|(term, coefficient)| TruthTerm { term, coefficient })
                    .collect()
            });
        } else {
            if c.library.is_none() || c.lhs.is_none() {
                bail!("a custom case needs [library] and [lhs] sections");
            }
            if c.dataset.is_none() && c.source.is_none() {
                bail!("a custom case needs `dataset` or a [source] section");
            }
            c.hyper.get_or_insert_with(Hyperparams::default);
            c.sampling.get_or_insert_with(Sampling::default);
            c.stacking.get_or_insert(RowStacking::Ordered);
        }
        if let Some(lib) = &mut c.library {
            lib.mode = self.mode;
        }
        if let Some(path) = &c.dataset {
            if !path.exists() {
                bail!("dataset {} does not exist", path.display());
            }
        }
        c.hyper.as_ref().unwrap().validate()?;
        c.library.as_ref().unwrap().validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}

fn lhs_config(lhs: &LhsSpec) -> LhsConfig {
    match lhs {
        LhsSpec::TimeDerivative { quantity } => LhsConfig::TimeDerivative { quantity: quantity.clone() },
        LhsSpec::Channel { quantity } => LhsConfig::Channel { quantity: quantity.clone() },
        LhsSpec::Combination(terms) => LhsConfig::Combination {
            terms: terms
                .iter()
                .map(|(c, t)| TruthTerm {
                    term: t.to_string(),
                    coefficient: *c,
                })
                .collect(),
        },
    }
}

/// A fully resolved run: the effective config plus parsed pieces.
pub struct Run {
    pub config: RunConfig,
    pub preset: Option<CasePreset>,
    pub library: LibrarySpec,
    pub hyper: Hyperparams,
    pub sampling: Sampling,
    pub stacking: RowStacking,
    pub lhs: LhsSpec,
    pub truth: Option<GroundTruth>,
}

impl Run {
    pub fn new(config: &RunConfig) -> anyhow::Result<Run> {
        let config = config.effective()?;
        let library = config.library.clone().unwrap();
        let parse = |t: &TruthTerm| -> anyhow::Result<(ctsr_core::symbolic::CandidateTerm, f64)> {
            let term = library.parse_term(&t.term).with_context(|| format!("term `{}`", t.term))?;
            Ok((term, t.coefficient))
        };
        let lhs = match config.lhs.clone().unwrap() {
            LhsConfig::TimeDerivative { quantity } => LhsSpec::TimeDerivative { quantity },
            LhsConfig::Channel { quantity } => LhsSpec::Channel { quantity },
            LhsConfig::Combination { terms } => LhsSpec::Combination(
                terms
                    .iter()
                    .map(|t| parse(t).map(|(term, c)| (c, term)))
                    .collect::<anyhow::Result<_>>()?,
            ),
        };
        let truth = match &config.truth {
            Some(terms) if !terms.is_empty() => Some(GroundTruth::new(terms.iter().map(parse).collect::<anyhow::Result<_>>()?)?),
            _ => None,
        };
        Ok(Run {
            preset: config.preset()?,
            hyper: config.hyper.clone().unwrap(),
            sampling: config.sampling.unwrap(),
            stacking: config.stacking.unwrap(),
            library,
            lhs,
            truth,
            config,
        })
    }

    pub fn dataset(&self) -> anyhow::Result<GridDataset> {
        match (&self.config.dataset, &self.config.source) {
            (Some(path), _) => Ok(load_dataset(path).with_context(|| format!("loading {}", path.display()))?),
            (None, Some(source)) => Ok(source.generate()?),
            (None, None) => bail!("no dataset or source configured"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn effective_config_round_trips() {
        for case in CasePreset::ALL {
            let config = RunConfig {
                case: case.name().into(),
                ..RunConfig::default()
            };
            let eff = config.effective().unwrap();
            let text = eff.to_toml().unwrap();
            let back: RunConfig = toml::from_str(&text).unwrap();
            assert_eq!(back, eff);
            assert_eq!(back.effective().unwrap(), eff);
        }
    }

    #[test]
    fn preset_defaults() {
        let eff = RunConfig {
            case: "giesekus3d".into(),
            ..RunConfig::default()
        }
        .effective()
        .unwrap();
        assert_eq!(eff.hyper.unwrap().d_tol, 1.2);
        assert_eq!(eff.sampling.unwrap().n_time, 0);
        let run = Run::new(&RunConfig::default()).unwrap();
        assert_eq!(run.hyper.lambda, 1e-5);
        assert_eq!(run.truth.unwrap().terms.len(), 2);
    }

    #[test]
    fn custom_case_needs_sections() {
        let config = RunConfig {
            case: "custom".into(),
            ..RunConfig::default()
        };
        assert!(config.effective().is_err());
        let bad = RunConfig {
            case: "nope".into(),
            ..RunConfig::default()
        };
        assert!(bad.effective().is_err());
    }
}
