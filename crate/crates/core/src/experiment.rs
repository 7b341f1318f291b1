//! Reproducible comparison runs: one model per (plan, seed), trained on a
//! shared source/target pair, executed across seeds in parallel.

use std::path::PathBuf;

use crate::data::{load_idx_dataset, standardize, subsample, Dataset, DomainShift, SyntheticKind};
use crate::error::{Result, SrdaError};
use crate::metrics::{self, metrics_csv_string, RunRecord, TraceCorrelation};
use crate::model::{Model, ModelSpec};
use crate::numeric::{cross_entropy, finite_diff_grad, relative_error, Matrix, ParamStore, Rng};
use crate::numeric::gradcheck::DEFAULT_STEP;
use crate::par::{map_indexed, Execution};
use crate::perturbation::{lsd_batch_with_grad, perturb, perturbation_batch, NoisePlan, PlanKind, DEFAULT_EPSILON};
use crate::training::{default_smooth_lr, train_schedule, TrainConfig};

const INIT_STREAM: u64 = 11;

/// Two-moons source and a rotated two-moons target, both standardized with
/// source statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct MoonsShift {
    pub n_per_domain: usize,
    pub noise_sd: f64,
    pub rotate_deg: f64,
}

impl Default for MoonsShift {
    fn default() -> Self {
        Self { n_per_domain: 400, noise_sd: 0.1, rotate_deg: 30.0 }
    }
}

impl MoonsShift {
    pub fn shift(&self) -> DomainShift {
        DomainShift {
            kind: SyntheticKind::TwoMoons,
            n: self.n_per_domain,
            noise_sd: self.noise_sd,
            classes: 2,
            rotate_deg: self.rotate_deg,
            translate: [0.0, 0.0],
        }
    }

    pub fn domains(&self, seed: u64) -> Result<(Dataset, Dataset)> {
        let (source, target) = self.shift().generate(seed)?;
        let target = standardize(&source, &target)?;
        let source = standardize(&source, &source)?;
        Ok((source, target))
    }
}

/// Initial model for `seed`; independent of the plan so ablations share it.
pub fn initial_model(spec: &ModelSpec, seed: u64) -> Result<Model> {
    Model::new(spec, &mut Rng::new(seed).fork(INIT_STREAM))
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub plan: Option<PlanKind>,
    pub seed: u64,
    pub history: Vec<RunRecord>,
    pub final_accuracy: Option<f64>,
    pub trace: Option<TraceCorrelation>,
    pub metrics_csv: String,
    pub model: Model,
}

pub fn plan_label(plan: Option<PlanKind>) -> &'static str {
    plan.map_or("none", PlanKind::name)
}

/// `base` with the plan swapped in and the plan's default smoothing rate.
pub fn config_for(base: &TrainConfig, plan: Option<PlanKind>, seed: u64) -> TrainConfig {
    let epsilon = base.plan.map_or(DEFAULT_EPSILON, |p| p.epsilon);
    TrainConfig {
        plan: plan.map(|k| NoisePlan { kind: k, ..base.plan.unwrap_or(NoisePlan::new(k, epsilon)) }),
        lr_smooth: default_smooth_lr(plan),
        seed,
        ..base.clone()
    }
}

pub fn run_one(spec: &ModelSpec, source: &Dataset, target: &Dataset, config: &TrainConfig) -> Result<RunOutcome> {
    let model = initial_model(spec, config.seed)?;
    let state = train_schedule(model, source, target, config)?;
    let final_accuracy = if target.is_labeled() { Some(metrics::accuracy(&state.model, target)?) } else { None };
    let trace = metrics::lsd_accuracy_trace(&state.history).ok();
    Ok(RunOutcome {
        plan: config.plan.map(|p| p.kind),
        seed: config.seed,
        metrics_csv: metrics_csv_string(&state.history),
        history: state.history,
        final_accuracy,
        trace,
        model: state.model,
    })
}

/// Trains every (plan, seed) combination on the two-moons shift. Runs are
/// independent and deterministic, so `exec` only affects wall time.
pub fn compare_on_moons(
    shift: &MoonsShift,
    spec: &ModelSpec,
    base: &TrainConfig,
    plans: &[Option<PlanKind>],
    seeds: &[u64],
    exec: Execution,
) -> Result<Vec<RunOutcome>> {
    let jobs: Vec<(Option<PlanKind>, u64)> = plans.iter().flat_map(|&p| seeds.iter().map(move |&s| (p, s))).collect();
    map_indexed(jobs.len(), exec, |i| {
        let (plan, seed) = jobs[i];
        let (source, target) = shift.domains(seed)?;
        run_one(spec, &source, &target, &config_for(base, plan, seed))
    })
    .into_iter()
    .collect()
}

/// Mean final target accuracy of the outcomes for `plan`.
pub fn mean_accuracy(outcomes: &[RunOutcome], plan: Option<PlanKind>) -> f64 {
    let accs: Vec<f64> = outcomes.iter().filter(|o| o.plan == plan).filter_map(|o| o.final_accuracy).collect();
    accs.iter().sum::<f64>() / accs.len() as f64
}

/// Epoch-wise average of the histories for `plan`. Every run of the plan
/// must share the same evaluation epochs.
pub fn mean_history(outcomes: &[RunOutcome], plan: Option<PlanKind>) -> Result<Vec<RunRecord>> {
    let runs: Vec<&RunOutcome> = outcomes.iter().filter(|o| o.plan == plan).collect();
    let Some(first) = runs.first() else {
        return Err(SrdaError::InsufficientData(format!("no runs for plan {}", plan_label(plan))));
    };
    let n = runs.len() as f64;
    let mut mean = Vec::with_capacity(first.history.len());
    for (i, template) in first.history.iter().enumerate() {
        let mut rec = RunRecord { source_loss: 0.0, mean_lsd: 0.0, hdh_proxy: 0.0, target_accuracy: template.target_accuracy.map(|_| 0.0), ..template.clone() };
        for run in &runs {
            let r = run.history.get(i).filter(|r| r.epoch == template.epoch).ok_or_else(|| {
                SrdaError::InvalidInput(format!("seed {} evaluates on different epochs", run.seed))
            })?;
            rec.source_loss += r.source_loss / n;
            rec.mean_lsd += r.mean_lsd / n;
            rec.hdh_proxy += r.hdh_proxy / n;
            rec.target_accuracy = rec.target_accuracy.zip(r.target_accuracy).map(|(a, b)| a + b / n);
        }
        mean.push(rec);
    }
    Ok(mean)
}

/// Directory holding the user-supplied digit domains, see [`DIGIT_FILES`].
pub const DIGITS_DIR_ENV: &str = "SRDA_DIGITS_DIR";

/// File names expected inside the digits directory: source images, source
/// labels, target images, target labels.
pub const DIGIT_FILES: [&str; 4] = ["source-images.idx", "source-labels.idx", "target-images.idx", "target-labels.idx"];

const DIGIT_SUBSAMPLE_STREAM: u64 = 13;

/// Reduced digit transfer: stratified subsets of two IDX domains, a
/// flattened-image MLP, source-only against isotropic smoothing.
#[derive(Clone, Debug, PartialEq)]
pub struct DigitsSetup {
    pub dir: PathBuf,
    pub n_source: usize,
    pub n_target: usize,
}

impl DigitsSetup {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into(), n_source: 2000, n_target: 2000 }
    }

    /// Setup from [`DIGITS_DIR_ENV`] when every file is present.
    pub fn from_env() -> Option<Self> {
        let setup = Self::new(std::env::var_os(DIGITS_DIR_ENV)?);
        setup.files().iter().all(|p| p.is_file()).then_some(setup)
    }

    pub fn files(&self) -> [PathBuf; 4] {
        DIGIT_FILES.map(|f| self.dir.join(f))
    }

    /// Loads both domains once; [`DigitsSetup::domains`] subsamples them.
    pub fn load(&self) -> Result<(Dataset, Dataset)> {
        let [si, sl, ti, tl] = self.files();
        let source = load_idx_dataset(si, sl, "source")?;
        let target = load_idx_dataset(ti, tl, "target")?;
        if source.dim() != target.dim() {
            return Err(SrdaError::ShapeError(format!("source images have {} pixels, target {}", source.dim(), target.dim())));
        }
        let classes = source.classes().max(target.classes());
        let relabel = |ds: Dataset| Dataset::new(ds.name.clone(), ds.features().clone(), ds.labels().map(<[usize]>::to_vec), classes);
        Ok((relabel(source)?, relabel(target)?))
    }

    pub fn domains(&self, full: &(Dataset, Dataset), seed: u64) -> Result<(Dataset, Dataset)> {
        let mut rng = Rng::new(seed).fork(DIGIT_SUBSAMPLE_STREAM);
        let source = subsample(&full.0, self.n_source.min(full.0.len()), &mut rng)?;
        let target = subsample(&full.1, self.n_target.min(full.1.len()), &mut rng)?;
        Ok((source, target))
    }

    /// Thirty epochs, batch 128, ε = 0.5.
    pub fn base_config() -> TrainConfig {
        TrainConfig { epochs: 30, ..TrainConfig::with_plan(None) }
    }

    pub fn compare(&self, base: &TrainConfig, plans: &[Option<PlanKind>], seeds: &[u64], exec: Execution) -> Result<Vec<RunOutcome>> {
        let full = self.load()?;
        let spec = ModelSpec::digits(full.0.dim(), full.0.classes().unwrap_or(2));
        let jobs: Vec<(Option<PlanKind>, u64)> = plans.iter().flat_map(|&p| seeds.iter().map(move |&s| (p, s))).collect();
        map_indexed(jobs.len(), exec, |i| {
            let (plan, seed) = jobs[i];
            let (source, target) = self.domains(&full, seed)?;
            run_one(&spec, &source, &target, &config_for(base, plan, seed))
        })
        .into_iter()
        .collect()
    }
}

/// Losses covered by [`gradcheck_suite`], in report order.
pub const GRADCHECK_LOSSES: [&str; 3] = ["source_loss", "entropy_loss", "lsd_value"];
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct LossCheck {
    pub loss: &'static str,
    pub max_rel_error: f64,
    /// Segment and seed where `max_rel_error` occurred.
    pub worst_segment: String,
    pub worst_seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub checks: Vec<LossCheck>,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.max_rel_error <= self.tolerance)
    }
}

#[derive(Clone, Debug, Default)]
pub struct GradcheckOptions {
    pub base_seed: u64,
    pub seeds: usize,
    /// Negative control: adds a constant to the analytic gradient of the
    /// named segment before comparison.
    pub corrupt_segment: Option<String>,
}

/// Random model with three dense layers split between G and C, widths ≤ 8.
fn gradcheck_model(rng: &mut Rng) -> Result<(Model, Matrix, Vec<usize>)> {
    let mut width = |lo: usize| lo + rng.below(9 - lo);
    let (d, h, f, k) = (width(1), width(1), width(1), width(2));
    let spec = if rng.below(2) == 0 {
        ModelSpec { generator: vec![d, h, f], classifier: vec![f, k] }
    } else {
        ModelSpec { generator: vec![d, f], classifier: vec![f, h, k] }
    };
    let model = Model::new(&spec, rng)?;
    let batch = 2 + rng.below(5);
    let x = Matrix::from_vec(batch, d, rng.normal_vec(batch * d))?;
    let labels = (0..batch).map(|_| rng.below(k)).collect();
    Ok((model, x, labels))
}

/// Compares `analytic` (one store per net) against finite differences of
/// `loss`, returning the worst segment.
fn compare(
    analytic: &[&ParamStore],
    model: &Model,
    which: &[bool; 2],
    loss: &dyn Fn(&Model) -> f64,
    corrupt: Option<&str>,
) -> (f64, String) {
    let mut worst = (0.0, String::new());
    for (net, &active) in which.iter().enumerate() {
        if !active {
            continue;
        }
        let store = if net == 0 { model.generator.params() } else { model.classifier.params() };
        let fd = finite_diff_grad(
            |p| {
                let mut probe = model.clone();
                let target = if net == 0 { probe.generator.params_mut() } else { probe.classifier.params_mut() };
                *target = p.clone();
                loss(&probe)
            },
            store,
            DEFAULT_STEP,
        );
        for (seg, fd) in analytic[net].segments().iter().zip(&fd) {
            let mut grad = seg.grads.clone();
            if corrupt == Some(seg.name.as_str()) {
                grad = grad.map(|g| g + 0.1);
            }
            let err = relative_error(grad.as_slice(), fd.as_slice());
            if err > worst.0 || worst.1.is_empty() {
                worst = (err, seg.name.clone());
            }
        }
    }
    worst
}

fn gradcheck_seed(seed: u64, corrupt: Option<&str>) -> Result<[(f64, String); 3]> {
    let mut rng = Rng::new(seed);
    let (model, x, labels) = gradcheck_model(&mut rng)?;

    let mut m = model.clone();
    m.zero_grads();
    m.source_loss_backward(&x, &labels)?;
    let source = compare(
        &[m.generator.params(), m.classifier.params()],
        &model,
        &[true, true],
        &|p: &Model| p.source_loss(&x, &labels).unwrap_or(f64::NAN),
        corrupt,
    );

    let mut m = model.clone();
    m.zero_grads();
    m.entropy_loss_backward(&x, 1.0, true)?;
    let entropy = compare(
        &[m.generator.params(), m.classifier.params()],
        &model,
        &[true, true],
        &|p: &Model| p.entropy_loss(&x).unwrap_or(f64::NAN),
        corrupt,
    );

    // r and the clean prediction are constants of the smoothing objective.
    let g = model.forward_features(&x)?;
    let (r, _) = perturbation_batch(&model, &g, &NoisePlan::isotropic(DEFAULT_EPSILON), &mut rng)?;
    let reference = model.classify(&g)?;
    let mut m = model.clone();
    m.zero_grads();
    let trace = m.forward_trace(&x)?;
    let (_, feature_grad) = lsd_batch_with_grad(&m, &trace.features, &r)?;
    m.backward_generator(&trace, &feature_grad)?;
    let lsd_at = |p: &Model| -> Result<f64> {
        let q = p.classify(&perturb(&p.forward_features(&x)?, &r)?)?;
        let mut total = 0.0;
        for i in 0..q.rows() {
            total += cross_entropy(q.row(i), reference.row(i))?;
        }
        Ok(total / q.rows() as f64)
    };
    let lsd = compare(
        &[m.generator.params(), m.classifier.params()],
        &model,
        &[true, false],
        &|p: &Model| lsd_at(p).unwrap_or(f64::NAN),
        corrupt,
    );
    Ok([source, entropy, lsd])
}

/// Backprop against central finite differences for every loss over
/// `opts.seeds` random models.
pub fn gradcheck_suite(opts: &GradcheckOptions, exec: Execution) -> Result<GradcheckReport> {
    let seeds: Vec<u64> = (0..opts.seeds as u64).map(|i| opts.base_seed.wrapping_add(i)).collect();
    let per_seed: Vec<[(f64, String); 3]> =
        map_indexed(seeds.len(), exec, |i| gradcheck_seed(seeds[i], opts.corrupt_segment.as_deref())).into_iter().collect::<Result<_>>()?;
    let checks = GRADCHECK_LOSSES
        .iter()
        .enumerate()
        .map(|(l, &loss)| {
            let mut check = LossCheck { loss, max_rel_error: 0.0, worst_segment: String::new(), worst_seed: opts.base_seed };
            for (seed, results) in seeds.iter().zip(&per_seed) {
                let (err, segment) = &results[l];
                // NaN compares false, so route it through the explicit check.
                if err.is_nan() || *err > check.max_rel_error || check.worst_segment.is_empty() {
                    check = LossCheck { loss, max_rel_error: if err.is_nan() { f64::INFINITY } else { *err }, worst_segment: segment.clone(), worst_seed: *seed };
                }
            }
            check
        })
        .collect();
    Ok(GradcheckReport { checks, tolerance: GRADCHECK_TOLERANCE })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradcheck_passes_on_ten_seeds() {
        let report = gradcheck_suite(&GradcheckOptions { base_seed: 0, seeds: 10, corrupt_segment: None }, Execution::default()).unwrap();
        assert_eq!(report.checks.iter().map(|c| c.loss).collect::<Vec<_>>(), GRADCHECK_LOSSES);
        for c in &report.checks {
            assert!(c.max_rel_error <= 1e-5, "{c:?}");
        }
        assert!(report.passed());
    }

    #[test]
    fn corrupted_gradient_is_caught_and_named() {
        let opts = GradcheckOptions { base_seed: 3, seeds: 2, corrupt_segment: Some("generator.layer0.bias".into()) };
        let report = gradcheck_suite(&opts, Execution::Sequential).unwrap();
        assert!(!report.passed());
        for c in &report.checks {
            assert_eq!(c.worst_segment, "generator.layer0.bias", "{c:?}");
            assert!(c.max_rel_error > 1e-2);
        }
    }

    #[test]
    fn gradcheck_is_split_independent() {
        let opts = GradcheckOptions { base_seed: 5, seeds: 4, corrupt_segment: None };
        assert_eq!(gradcheck_suite(&opts, Execution::Sequential).unwrap(), gradcheck_suite(&opts, Execution::Parallel).unwrap());
    }

    #[test]
    fn digits_runner_reads_idx_fixtures() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = Rng::new(1);
        // 4×4 "digits": class k lights row k; the target domain is inverted.
        for (prefix, invert) in [("source", false), ("target", true)] {
            let n = 40;
            let labels: Vec<u8> = (0..n).map(|i| (i % 4) as u8).collect();
            let pixels: Vec<u8> = labels
                .iter()
                .flat_map(|&k| (0..16).map(move |p| (p / 4 == k as usize) as u8 * 200))
                .map(|v| if invert { 255 - v } else { v.saturating_add(rng.below(30) as u8) })
                .collect();
            std::fs::write(dir.path().join(format!("{prefix}-images.idx")), crate::data::encode_idx_images(n, 4, 4, &pixels)).unwrap();
            std::fs::write(dir.path().join(format!("{prefix}-labels.idx")), crate::data::encode_idx_labels(&labels)).unwrap();
        }
        let setup = DigitsSetup { n_source: 20, n_target: 30, ..DigitsSetup::new(dir.path()) };
        let base = TrainConfig { epochs: 2, batch_size: 8, ..DigitsSetup::base_config() };
        let out = setup.compare(&base, &[None, Some(PlanKind::Isotropic)], &[0], Execution::default()).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].model.spec(), ModelSpec::digits(16, 4));
        assert_eq!(out[1].history.len(), 2);
        let (s, t) = setup.domains(&setup.load().unwrap(), 0).unwrap();
        assert_eq!((s.len(), t.len()), (20, 30));
        assert!(DigitsSetup::new(dir.path().join("missing")).load().is_err());
    }

    #[test]
    fn config_for_swaps_plan_and_rates() {
        let base = TrainConfig::with_plan(Some(PlanKind::Isotropic));
        let fgsm = config_for(&base, Some(PlanKind::Fgsm), 9);
        assert_eq!(fgsm.plan.unwrap().kind, PlanKind::Fgsm);
        assert_eq!(fgsm.plan.unwrap().epsilon, 0.5);
        assert_eq!(fgsm.lr_smooth, 1e-4);
        assert_eq!(fgsm.seed, 9);
        assert_eq!(config_for(&base, None, 9).plan, None);
    }

    #[test]
    fn moons_domains_are_deterministic_and_standardized() {
        let shift = MoonsShift::default();
        let (s, t) = shift.domains(2).unwrap();
        let (s2, t2) = shift.domains(2).unwrap();
        assert_eq!((s.features(), t.features()), (s2.features(), t2.features()));
        let (mean, sd) = s.features().column_stats();
        for j in 0..2 {
            assert!(mean[j].abs() < 1e-12 && (sd[j] - 1.0).abs() < 1e-12);
        }
        assert_ne!(shift.domains(3).unwrap().0.features(), s.features());
    }

    #[test]
    fn tiny_comparison_runs_and_averages() {
        let shift = MoonsShift { n_per_domain: 40, ..MoonsShift::default() };
        let spec = ModelSpec { generator: vec![2, 6, 4], classifier: vec![4, 2] };
        let base = TrainConfig { epochs: 3, batch_size: 16, ..TrainConfig::with_plan(None) };
        let plans = [None, Some(PlanKind::Vat)];
        let out = compare_on_moons(&shift, &spec, &base, &plans, &[1, 2], Execution::default()).unwrap();
        assert_eq!(out.len(), 4);
        let mean = mean_history(&out, Some(PlanKind::Vat)).unwrap();
        assert_eq!(mean.len(), 3);
        let runs: Vec<_> = out.iter().filter(|o| o.plan == Some(PlanKind::Vat)).collect();
        let expect = (runs[0].history[2].mean_lsd + runs[1].history[2].mean_lsd) / 2.0;
        assert!((mean[2].mean_lsd - expect).abs() < 1e-15);
        let acc = mean_accuracy(&out, None);
        assert!((0.0..=1.0).contains(&acc));
        assert!(mean_history(&out, Some(PlanKind::Fgsm)).is_err());
        let seq = compare_on_moons(&shift, &spec, &base, &plans, &[1, 2], Execution::Sequential).unwrap();
        for (a, b) in out.iter().zip(&seq) {
            assert_eq!(a.metrics_csv, b.metrics_csv);
        }
    }
}
