//! TOML run specification: dataset, model, training and output sections.
//!
//! Every key is optional except `dataset.kind` and `output.dir`; missing
//! keys take the defaults of [`TrainConfig::with_plan`] and
//! [`RunSpec::resolved`]. Unknown keys are rejected, and parse errors carry
//! the 1-based line of the offending entry.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_csv, load_idx_dataset, standardize, subsample, Dataset, DomainShift, SyntheticKind};
use crate::error::{Result, SrdaError};
use crate::model::ModelSpec;
use crate::numeric::{OptimizerKind, Rng};
use crate::perturbation::{NoisePlan, PlanKind, DEFAULT_EPSILON, DEFAULT_VAT_POWER_ITERS, DEFAULT_VAT_XI};
use crate::training::{default_smooth_lr, EntropyStage, TrainConfig};

pub const DEFAULT_N: usize = 400;
pub const DEFAULT_NOISE_SD: f64 = 0.1;
pub const DEFAULT_BLOB_CLASSES: usize = 3;

const SUBSAMPLE_STREAM: u64 = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    TwoMoons,
    Blobs,
    /// Two CSV files as written by `gen-data`.
    Csv,
    /// Four IDX files (images and labels for each domain).
    Idx,
}

impl DatasetKind {
    fn synthetic(self) -> Option<SyntheticKind> {
        match self {
            DatasetKind::TwoMoons => Some(SyntheticKind::TwoMoons),
            DatasetKind::Blobs => Some(SyntheticKind::Blobs),
            DatasetKind::Csv | DatasetKind::Idx => None,
        }
    }
}

/// `plan = "none"` selects the source-only baseline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanSetting {
    None,
    Isotropic,
    Fgsm,
    Vat,
}

impl PlanSetting {
    pub fn kind(self) -> Option<PlanKind> {
        match self {
            PlanSetting::None => None,
            PlanSetting::Isotropic => Some(PlanKind::Isotropic),
            PlanSetting::Fgsm => Some(PlanKind::Fgsm),
            PlanSetting::Vat => Some(PlanKind::Vat),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(PlanSetting::None),
            other => PlanKind::parse(other).map(Self::from),
        }
    }
}

impl From<PlanKind> for PlanSetting {
    fn from(kind: PlanKind) -> Self {
        match kind {
            PlanKind::Isotropic => PlanSetting::Isotropic,
            PlanKind::Fgsm => PlanSetting::Fgsm,
            PlanKind::Vat => PlanSetting::Vat,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub kind: DatasetKind,
    pub n: Option<usize>,
    pub noise_sd: Option<f64>,
    pub classes: Option<usize>,
    /// Target rotation in degrees.
    pub rotate: Option<f64>,
    pub translate: Option<[f64; 2]>,
    pub seed: Option<u64>,
    /// Rescale both domains with source mean and standard deviation.
    pub standardize: Option<bool>,
    pub source: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub source_images: Option<PathBuf>,
    pub source_labels: Option<PathBuf>,
    pub target_images: Option<PathBuf>,
    pub target_labels: Option<PathBuf>,
    /// Random subset sizes for file-backed domains.
    pub n_source: Option<usize>,
    pub n_target: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr_source: Option<f64>,
    pub lr_smooth: Option<f64>,
    pub optimizer: Option<OptimizerKind>,
    pub plan: Option<PlanSetting>,
    pub epsilon: Option<f64>,
    pub vat_xi: Option<f64>,
    pub vat_power_iters: Option<usize>,
    pub entropy_weight: Option<f64>,
    pub entropy_stage: Option<EntropyStage>,
    pub seed: Option<u64>,
    pub eval_every: Option<usize>,
    pub warmup_epochs: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Save an extra checkpoint at evaluated epochs divisible by this; 0
    /// keeps only the final one.
    pub checkpoint_every: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub dataset: DatasetSection,
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub train: TrainSection,
    pub output: OutputSection,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl RunSpec {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let message = e.message().trim().to_string();
            match e.span() {
                Some(span) => SrdaError::Config(format!("line {}: {message}", line_of(text, span.start))),
                None => SrdaError::Config(message),
            }
        })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            SrdaError::Config(m) => SrdaError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| SrdaError::Config(e.to_string()))
    }

    fn plan_kind(&self) -> Option<PlanKind> {
        self.train.plan.unwrap_or(PlanSetting::Isotropic).kind()
    }

    /// Copy with every defaulted key written out, so the echo file fully
    /// describes the run. The model section stays empty until the data
    /// dimension is known; see [`RunSpec::model_spec`].
    pub fn resolved(&self) -> Result<Self> {
        self.check_kind_keys()?;
        let d = &self.dataset;
        let synthetic = d.kind.synthetic().is_some();
        let dataset = DatasetSection {
            n: d.n.or(synthetic.then_some(DEFAULT_N)),
            noise_sd: d.noise_sd.or(synthetic.then_some(DEFAULT_NOISE_SD)),
            classes: d.classes.or((d.kind == DatasetKind::Blobs).then_some(DEFAULT_BLOB_CLASSES)),
            rotate: d.rotate.or(synthetic.then_some(0.0)),
            translate: d.translate.or(synthetic.then_some([0.0, 0.0])),
            seed: Some(d.seed.unwrap_or(0)),
            standardize: Some(d.standardize.unwrap_or(d.kind != DatasetKind::Idx)),
            ..d.clone()
        };
        let kind = self.plan_kind();
        let base = TrainConfig::with_plan(kind);
        let t = &self.train;
        let train = TrainSection {
            epochs: Some(t.epochs.unwrap_or(base.epochs)),
            batch_size: Some(t.batch_size.unwrap_or(base.batch_size)),
            lr_source: Some(t.lr_source.unwrap_or(base.lr_source)),
            lr_smooth: Some(t.lr_smooth.unwrap_or(default_smooth_lr(kind))),
            optimizer: Some(t.optimizer.unwrap_or(base.optimizer)),
            plan: Some(t.plan.unwrap_or(PlanSetting::Isotropic)),
            epsilon: Some(t.epsilon.unwrap_or(DEFAULT_EPSILON)),
            vat_xi: Some(t.vat_xi.unwrap_or(DEFAULT_VAT_XI)),
            vat_power_iters: Some(t.vat_power_iters.unwrap_or(DEFAULT_VAT_POWER_ITERS)),
            entropy_weight: Some(t.entropy_weight.unwrap_or(base.entropy_weight)),
            entropy_stage: Some(t.entropy_stage.unwrap_or(base.entropy_stage)),
            seed: Some(t.seed.unwrap_or(base.seed)),
            eval_every: Some(t.eval_every.unwrap_or(base.eval_every)),
            warmup_epochs: Some(t.warmup_epochs.unwrap_or(base.warmup_epochs)),
        };
        let output = OutputSection { checkpoint_every: Some(self.output.checkpoint_every.unwrap_or(0)), ..self.output.clone() };
        let spec = RunSpec { dataset, model: self.model.clone(), train, output };
        spec.train_config()?.validate()?;
        if let Some(m) = &spec.model {
            m.validate()?;
        }
        Ok(spec)
    }

    /// Rejects keys that the chosen dataset kind would silently ignore.
    fn check_kind_keys(&self) -> Result<()> {
        let d = &self.dataset;
        let present = |name: &'static str, set: bool| set.then_some(name);
        let synthetic_keys = [
            present("n", d.n.is_some()),
            present("noise_sd", d.noise_sd.is_some()),
            present("rotate", d.rotate.is_some()),
            present("translate", d.translate.is_some()),
        ];
        let csv_keys = [present("source", d.source.is_some()), present("target", d.target.is_some())];
        let idx_keys = [
            present("source_images", d.source_images.is_some()),
            present("source_labels", d.source_labels.is_some()),
            present("target_images", d.target_images.is_some()),
            present("target_labels", d.target_labels.is_some()),
        ];
        let file_keys = [present("n_source", d.n_source.is_some()), present("n_target", d.n_target.is_some())];
        let classes = [present("classes", d.classes.is_some())];

        let (forbidden, required): (Vec<Option<&str>>, Vec<(&str, bool)>) = match d.kind {
            DatasetKind::TwoMoons => ([&csv_keys[..], &idx_keys, &file_keys, &classes].concat(), vec![]),
            DatasetKind::Blobs => ([&csv_keys[..], &idx_keys, &file_keys].concat(), vec![]),
            DatasetKind::Csv => (
                [&synthetic_keys[..], &idx_keys, &classes].concat(),
                vec![("source", d.source.is_some()), ("target", d.target.is_some())],
            ),
            DatasetKind::Idx => (
                [&synthetic_keys[..], &csv_keys, &classes].concat(),
                vec![
                    ("source_images", d.source_images.is_some()),
                    ("source_labels", d.source_labels.is_some()),
                    ("target_images", d.target_images.is_some()),
                    ("target_labels", d.target_labels.is_some()),
                ],
            ),
        };
        let kind = serde_kind_name(d.kind);
        if let Some(key) = forbidden.into_iter().flatten().next() {
            return Err(SrdaError::Config(format!("[dataset] {key} is not used by kind \"{kind}\"")));
        }
        if let Some((key, _)) = required.into_iter().find(|(_, set)| !set) {
            return Err(SrdaError::Config(format!("[dataset] {key} is required for kind \"{kind}\"")));
        }
        Ok(())
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let kind = self.plan_kind();
        let base = TrainConfig::with_plan(kind);
        let t = &self.train;
        let plan = kind.map(|k| NoisePlan {
            kind: k,
            epsilon: t.epsilon.unwrap_or(DEFAULT_EPSILON),
            vat_xi: t.vat_xi.unwrap_or(DEFAULT_VAT_XI),
            vat_power_iters: t.vat_power_iters.unwrap_or(DEFAULT_VAT_POWER_ITERS),
        });
        if let Some(p) = &plan {
            p.validate()?;
        }
        Ok(TrainConfig {
            epochs: t.epochs.unwrap_or(base.epochs),
            batch_size: t.batch_size.unwrap_or(base.batch_size),
            lr_source: t.lr_source.unwrap_or(base.lr_source),
            lr_smooth: t.lr_smooth.unwrap_or(base.lr_smooth),
            optimizer: t.optimizer.unwrap_or(base.optimizer),
            plan,
            entropy_weight: t.entropy_weight.unwrap_or(base.entropy_weight),
            entropy_stage: t.entropy_stage.unwrap_or(base.entropy_stage),
            seed: t.seed.unwrap_or(base.seed),
            eval_every: t.eval_every.unwrap_or(base.eval_every),
            warmup_epochs: t.warmup_epochs.unwrap_or(base.warmup_epochs),
        })
    }

    /// Loads or generates `(source, target)`. Relative paths resolve against
    /// the current directory.
    pub fn load_domains(&self) -> Result<(Dataset, Dataset)> {
        let spec = self.resolved()?;
        let d = &spec.dataset;
        let seed = d.seed.unwrap_or(0);
        let required = |p: &Option<PathBuf>| p.clone().expect("checked by resolved()");
        let (source, target) = match d.kind.synthetic() {
            Some(kind) => DomainShift {
                kind,
                n: d.n.unwrap_or(DEFAULT_N),
                noise_sd: d.noise_sd.unwrap_or(DEFAULT_NOISE_SD),
                classes: d.classes.unwrap_or(2),
                rotate_deg: d.rotate.unwrap_or(0.0),
                translate: d.translate.unwrap_or([0.0, 0.0]),
            }
            .generate(seed)?,
            None => {
                let (source, target) = if d.kind == DatasetKind::Csv {
                    (load_csv(required(&d.source))?, load_csv(required(&d.target))?)
                } else {
                    (
                        load_idx_dataset(required(&d.source_images), required(&d.source_labels), "source")?,
                        load_idx_dataset(required(&d.target_images), required(&d.target_labels), "target")?,
                    )
                };
                let mut rng = Rng::new(seed).fork(SUBSAMPLE_STREAM);
                let source = match d.n_source {
                    Some(n) => subsample(&source, n, &mut rng)?,
                    None => source,
                };
                let target = match d.n_target {
                    Some(n) => subsample(&target, n, &mut rng)?,
                    None => target,
                };
                (source, target)
            }
        };
        if source.dim() != target.dim() {
            return Err(SrdaError::ShapeError(format!("source has {} features, target {}", source.dim(), target.dim())));
        }
        if d.standardize == Some(true) {
            Ok((standardize(&source, &source)?, standardize(&source, &target)?))
        } else {
            Ok((source, target))
        }
    }

    /// The configured widths, or the small MLP for the data's shape.
    pub fn model_spec(&self, source: &Dataset) -> Result<ModelSpec> {
        let classes = source.classes().ok_or(SrdaError::UnlabeledData)?;
        let spec = self.model.clone().unwrap_or_else(|| ModelSpec::small_mlp(source.dim(), classes));
        spec.validate()?;
        if spec.generator[0] != source.dim() {
            return Err(SrdaError::ShapeError(format!("model input width {} but data has {} features", spec.generator[0], source.dim())));
        }
        if spec.classifier.last() != Some(&classes) {
            return Err(SrdaError::ShapeError(format!("model has {:?} outputs but data has {classes} classes", spec.classifier.last())));
        }
        Ok(spec)
    }
}

fn serde_kind_name(kind: DatasetKind) -> &'static str {
    match kind {
        DatasetKind::TwoMoons => "two-moons",
        DatasetKind::Blobs => "blobs",
        DatasetKind::Csv => "csv",
        DatasetKind::Idx => "idx",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[dataset]\nkind = \"two-moons\"\n\n[output]\ndir = \"runs/a\"\n";

    #[test]
    fn minimal_config_takes_documented_defaults() {
        let spec = RunSpec::parse(MINIMAL).unwrap();
        let cfg = spec.train_config().unwrap();
        assert_eq!(cfg, TrainConfig::with_plan(Some(PlanKind::Isotropic)));
        let r = spec.resolved().unwrap();
        assert_eq!(r.dataset.n, Some(DEFAULT_N));
        assert_eq!(r.train.batch_size, Some(128));
        assert_eq!(r.train.epochs, Some(150));
        assert_eq!(r.train.epsilon, Some(0.5));
        assert_eq!(r.output.checkpoint_every, Some(0));
    }

    #[test]
    fn fgsm_defaults_to_the_smaller_smoothing_rate() {
        let text = format!("{MINIMAL}[train]\nplan = \"fgsm\"\n");
        let cfg = RunSpec::parse(&text).unwrap().train_config().unwrap();
        assert_eq!(cfg.lr_smooth, 1e-4);
        assert_eq!(cfg.lr_source, 1e-3);
    }

    #[test]
    fn none_plan_trains_source_only() {
        let text = format!("{MINIMAL}[train]\nplan = \"none\"\n");
        assert_eq!(RunSpec::parse(&text).unwrap().train_config().unwrap().plan, None);
    }

    #[test]
    fn unknown_key_reports_its_line() {
        let text = "[dataset]\nkind = \"two-moons\"\nrotation = 30\n[output]\ndir = \"x\"\n";
        let err = RunSpec::parse(text).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        assert!(err.contains("rotation"), "{err}");
    }

    #[test]
    fn missing_required_section_is_rejected() {
        let err = RunSpec::parse("[dataset]\nkind = \"blobs\"\n").unwrap_err().to_string();
        assert!(err.contains("output"), "{err}");
    }

    #[test]
    fn bad_value_type_reports_its_line() {
        let text = "[dataset]\nkind = \"two-moons\"\n[output]\ndir = \"x\"\n[train]\n\nepochs = \"many\"\n";
        let err = RunSpec::parse(text).unwrap_err().to_string();
        assert!(err.contains("line 7"), "{err}");
    }

    #[test]
    fn kind_specific_keys_are_checked() {
        let text = "[dataset]\nkind = \"csv\"\nsource = \"a.csv\"\n[output]\ndir = \"x\"\n";
        let err = RunSpec::parse(text).unwrap().resolved().unwrap_err().to_string();
        assert!(err.contains("target"), "{err}");
        let text = "[dataset]\nkind = \"two-moons\"\nsource = \"a.csv\"\n[output]\ndir = \"x\"\n";
        let err = RunSpec::parse(text).unwrap().resolved().unwrap_err().to_string();
        assert!(err.contains("not used"), "{err}");
    }

    #[test]
    fn resolved_echo_round_trips() {
        let text = format!("{MINIMAL}[train]\nplan = \"vat\"\nseed = 9\n[model]\ngenerator = [2, 8]\nclassifier = [8, 2]\n");
        let resolved = RunSpec::parse(&text).unwrap().resolved().unwrap();
        let echoed = RunSpec::parse(&resolved.to_toml().unwrap()).unwrap();
        assert_eq!(echoed, resolved);
        assert_eq!(echoed.resolved().unwrap(), resolved);
        assert_eq!(echoed.train_config().unwrap(), resolved.train_config().unwrap());
    }

    #[test]
    fn invalid_training_values_are_rejected_on_resolve() {
        let text = format!("{MINIMAL}[train]\nepsilon = -1.0\n");
        assert!(RunSpec::parse(&text).unwrap().resolved().is_err());
        let text = format!("{MINIMAL}[train]\nbatch_size = 0\n");
        assert!(RunSpec::parse(&text).unwrap().resolved().is_err());
    }

    #[test]
    fn synthetic_domains_match_the_experiment_generator() {
        let text = "[dataset]\nkind = \"two-moons\"\nrotate = 30.0\nseed = 4\n[output]\ndir = \"x\"\n";
        let (s, t) = RunSpec::parse(text).unwrap().load_domains().unwrap();
        let (es, et) = crate::experiment::MoonsShift::default().domains(4).unwrap();
        assert_eq!(s.features(), es.features());
        assert_eq!(t.features(), et.features());
        assert_eq!(t.labels(), et.labels());
    }

    #[test]
    fn default_model_fits_the_data() {
        let text = "[dataset]\nkind = \"blobs\"\nclasses = 4\n[output]\ndir = \"x\"\n";
        let spec = RunSpec::parse(text).unwrap();
        let (s, _) = spec.load_domains().unwrap();
        let m = spec.model_spec(&s).unwrap();
        assert_eq!(m, ModelSpec::small_mlp(2, 4));
    }
}
