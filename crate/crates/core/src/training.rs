//! The alternating optimization schedule.
//!
//! Every iteration takes one supervised step on a labeled source batch
//! (generator and classifier), then perturbs the features of an unlabeled
//! target batch and takes one step on the generator alone to reduce their
//! local smooth discrepancy. The classifier is never modified by the
//! smoothing step.

use log::{debug, info};

use crate::data::{BatchStream, Dataset};
use crate::error::{Result, SrdaError};
use crate::metrics::{self, RunRecord};
use crate::model::Model;
use crate::numeric::rng::mix_seed;
use crate::numeric::{Matrix, Optimizer, OptimizerKind, Rng};
use crate::par::Execution;
use crate::perturbation::{lsd_batch_with_grad, perturbation_batch, NoisePlan, PlanKind, DEFAULT_EPSILON};

/// Where the optional entropy-minimization term is applied.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntropyStage {
    /// Added to the supervised step (updates G and C).
    Source,
    /// Added to the smoothing step (updates G only).
    Smooth,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_source: f64,
    pub lr_smooth: f64,
    pub optimizer: OptimizerKind,
    /// `None` trains on the source domain only.
    pub plan: Option<NoisePlan>,
    pub entropy_weight: f64,
    pub entropy_stage: EntropyStage,
    pub seed: u64,
    /// Evaluate and append a [`RunRecord`] every this many epochs (and after
    /// the last one).
    pub eval_every: usize,
    /// Leading epochs that skip the smoothing step.
    pub warmup_epochs: usize,
}

pub const DEFAULT_LR: f64 = 1e-3;
pub const DEFAULT_FGSM_LR: f64 = 1e-4;
pub const DEFAULT_ENTROPY_WEIGHT: f64 = 0.05;

/// Smoothing-step learning rate used when none is configured.
pub fn default_smooth_lr(kind: Option<PlanKind>) -> f64 {
    match kind {
        Some(PlanKind::Fgsm) => DEFAULT_FGSM_LR,
        _ => DEFAULT_LR,
    }
}

impl TrainConfig {
    /// Batch 128, 150 epochs, ε = 0.5, learning rate 1e-3 (1e-4 for the
    /// FGSM smoothing step), Adam, no entropy term.
    pub fn with_plan(kind: Option<PlanKind>) -> Self {
        Self {
            epochs: 150,
            batch_size: 128,
            lr_source: DEFAULT_LR,
            lr_smooth: default_smooth_lr(kind),
            optimizer: OptimizerKind::Adam,
            plan: kind.map(|k| NoisePlan::new(k, DEFAULT_EPSILON)),
            entropy_weight: 0.0,
            entropy_stage: EntropyStage::Smooth,
            seed: 0,
            eval_every: 1,
            warmup_epochs: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(SrdaError::InvalidInput("batch_size must be ≥ 1".into()));
        }
        if !(self.lr_source > 0.0) || !(self.lr_smooth > 0.0) {
            return Err(SrdaError::InvalidInput("learning rates must be positive".into()));
        }
        if !(self.entropy_weight >= 0.0) {
            return Err(SrdaError::InvalidInput("entropy_weight must be ≥ 0".into()));
        }
        if self.eval_every == 0 {
            return Err(SrdaError::InvalidInput("eval_every must be ≥ 1".into()));
        }
        if let Some(plan) = &self.plan {
            plan.validate()?;
        }
        Ok(())
    }

    /// The plan used for evaluation metrics: the training plan, or isotropic
    /// noise for source-only runs.
    pub fn eval_plan(&self) -> NoisePlan {
        self.plan.unwrap_or_else(|| NoisePlan::isotropic(DEFAULT_EPSILON))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepKind {
    Source,
    Smooth,
}

/// Reported to a [`TrainObserver`] after every optimizer step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepEvent {
    pub kind: StepKind,
    pub epoch: usize,
    pub iteration: u64,
    pub loss: f64,
    pub generator_before: u64,
    pub generator_after: u64,
    pub classifier_before: u64,
    pub classifier_after: u64,
}

pub trait TrainObserver {
    fn on_step(&mut self, _event: &StepEvent) {}

    /// Called after each recorded evaluation.
    fn on_record(&mut self, _record: &RunRecord, _model: &Model) -> Result<()> {
        Ok(())
    }
}

impl TrainObserver for () {}

const NOISE_STREAM: u64 = 1;
const SOURCE_STREAM: u64 = 2;
const TARGET_STREAM: u64 = 3;
const EVAL_STREAM: u64 = 4;

/// Mutable training state: the model, its optimizers and the noise stream.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub model: Model,
    noise_rng: Rng,
    source_generator_opt: Optimizer,
    source_classifier_opt: Optimizer,
    smooth_generator_opt: Optimizer,
    pub epoch: usize,
    /// Completed iterations (source batches consumed).
    pub iteration: u64,
    pub history: Vec<RunRecord>,
    /// Anisotropic perturbations that fell back to isotropic noise.
    pub fallbacks: usize,
}

impl TrainState {
    pub fn new(model: Model, optimizer: OptimizerKind, seed: u64) -> Self {
        Self {
            model,
            noise_rng: Rng::new(seed).fork(NOISE_STREAM),
            source_generator_opt: Optimizer::new(optimizer),
            source_classifier_opt: Optimizer::new(optimizer),
            smooth_generator_opt: Optimizer::new(optimizer),
            epoch: 0,
            iteration: 0,
            history: Vec::new(),
            fallbacks: 0,
        }
    }

    fn diverged(&self, context: impl Into<String>) -> SrdaError {
        SrdaError::Diverged { step: self.iteration, context: context.into() }
    }

    fn remap_divergence(&self, e: SrdaError, which: &str) -> SrdaError {
        match e {
            SrdaError::Diverged { context, .. } => self.diverged(format!("{which}: {context}")),
            other => other,
        }
    }

    /// One supervised step on G and C. Returns the pre-step loss.
    pub fn step_source(&mut self, x_s: &Matrix, y_s: &[usize], lr: f64) -> Result<f64> {
        self.step_source_with_entropy(x_s, y_s, None, lr)
    }

    /// Supervised step, optionally adding `weight · entropy_loss(x_t)` for a
    /// target batch. Returns the pre-step source loss.
    pub fn step_source_with_entropy(&mut self, x_s: &Matrix, y_s: &[usize], entropy: Option<(&Matrix, f64)>, lr: f64) -> Result<f64> {
        self.model.zero_grads();
        let loss = self.model.source_loss_backward(x_s, y_s)?;
        if !loss.is_finite() {
            return Err(self.diverged(format!("source loss {loss}")));
        }
        if let Some((x_t, w)) = entropy {
            let h = self.model.entropy_loss_backward(x_t, w, true)?;
            if !h.is_finite() {
                return Err(self.diverged(format!("entropy loss {h}")));
            }
        }
        self.source_generator_opt
            .step(self.model.generator.params_mut(), lr)
            .map_err(|e| self.remap_divergence(e, "source step (generator)"))?;
        self.source_classifier_opt
            .step(self.model.classifier.params_mut(), lr)
            .map_err(|e| self.remap_divergence(e, "source step (classifier)"))?;
        Ok(loss)
    }

    /// One generator-only smoothing step on a target batch. Returns the
    /// pre-step mean LSD.
    pub fn step_smooth(&mut self, x_t: &Matrix, plan: &NoisePlan, lr: f64) -> Result<f64> {
        self.step_smooth_with_entropy(x_t, plan, 0.0, lr)
    }

    pub fn step_smooth_with_entropy(&mut self, x_t: &Matrix, plan: &NoisePlan, entropy_weight: f64, lr: f64) -> Result<f64> {
        self.model.zero_grads();
        let trace = self.model.forward_trace(x_t)?;
        let (r, fallbacks) = perturbation_batch(&self.model, &trace.features, plan, &mut self.noise_rng)?;
        self.fallbacks += fallbacks;
        let (lsd, feature_grad) = lsd_batch_with_grad(&self.model, &trace.features, &r)?;
        if !lsd.is_finite() {
            return Err(self.diverged(format!("mean LSD {lsd}")));
        }
        self.model.backward_generator(&trace, &feature_grad)?;
        if entropy_weight > 0.0 {
            let h = self.model.entropy_loss_backward(x_t, entropy_weight, false)?;
            if !h.is_finite() {
                return Err(self.diverged(format!("entropy loss {h}")));
            }
        }
        self.smooth_generator_opt
            .step(self.model.generator.params_mut(), lr)
            .map_err(|e| self.remap_divergence(e, "smoothing step"))?;
        Ok(lsd)
    }
}

fn batch(ds: &Dataset, idx: &[usize]) -> (Matrix, Option<Vec<usize>>) {
    let sel = ds.select(idx);
    let labels = sel.labels().map(<[usize]>::to_vec);
    (sel.features().clone(), labels)
}

/// Runs the full schedule and returns the final state with its history.
pub fn train_schedule(model: Model, source: &Dataset, target: &Dataset, config: &TrainConfig) -> Result<TrainState> {
    train_schedule_observed(model, source, target, config, &mut ())
}

/// Evaluates `model` on `target` with the config's evaluation plan and a
/// perturbation seed fixed for the whole run.
pub fn evaluate_epoch(model: &Model, target: &Dataset, config: &TrainConfig, epoch: usize, iteration: u64, source_loss: f64) -> Result<RunRecord> {
    let base_seed = mix_seed(config.seed ^ mix_seed(EVAL_STREAM));
    let probes = metrics::probe_samples(model, target, &config.eval_plan(), base_seed, Execution::default())?;
    let target_accuracy = if target.is_labeled() { Some(metrics::accuracy(model, target)?) } else { None };
    Ok(RunRecord {
        epoch,
        step: iteration,
        source_loss,
        mean_lsd: metrics::mean_lsd_of(&probes).value,
        target_accuracy,
        hdh_proxy: metrics::hdh_proxy_of(&probes).value,
    })
}

/// [`train_schedule`] with a callback after every step and evaluation.
/// Target labels, when present, are used only for the recorded accuracy.
pub fn train_schedule_observed(model: Model, source: &Dataset, target: &Dataset, config: &TrainConfig, observer: &mut dyn TrainObserver) -> Result<TrainState> {
    config.validate()?;
    let y_all = source.labels().ok_or(SrdaError::UnlabeledData)?;
    if source.dim() != model.input_dim() || target.dim() != model.input_dim() {
        return Err(SrdaError::ShapeError(format!(
            "model input width {} vs source dim {} and target dim {}",
            model.input_dim(),
            source.dim(),
            target.dim()
        )));
    }
    if let Some(&bad) = y_all.iter().find(|&&y| y >= model.classes()) {
        return Err(SrdaError::InvalidLabel { label: bad, classes: model.classes() });
    }
    let root = Rng::new(config.seed);
    let mut source_stream = BatchStream::new(source.len(), config.batch_size, root.fork(SOURCE_STREAM))?;
    let mut target_stream = BatchStream::new(target.len(), config.batch_size, root.fork(TARGET_STREAM))?;
    let iterations = source_stream.batches_per_pass().max(target_stream.batches_per_pass());
    let mut state = TrainState::new(model, config.optimizer, config.seed);

    for epoch in 0..config.epochs {
        let smoothing = config.plan.filter(|_| epoch >= config.warmup_epochs);
        let mut loss_sum = 0.0;
        for _ in 0..iterations {
            let (x_s, y_s) = batch(source, &source_stream.next_batch());
            let y_s = y_s.expect("source is labeled");
            let needs_target = smoothing.is_some() || (config.entropy_weight > 0.0);
            let x_t = if needs_target { Some(batch(target, &target_stream.next_batch()).0) } else { None };

            let g0 = state.model.generator.params().checksum();
            let c0 = state.model.classifier.params().checksum();
            let entropy_in_source = match (&x_t, config.entropy_stage) {
                (Some(x), EntropyStage::Source) if config.entropy_weight > 0.0 => Some((x, config.entropy_weight)),
                _ => None,
            };
            let loss = state.step_source_with_entropy(&x_s, &y_s, entropy_in_source, config.lr_source)?;
            let g1 = state.model.generator.params().checksum();
            let c1 = state.model.classifier.params().checksum();
            observer.on_step(&StepEvent {
                kind: StepKind::Source,
                epoch,
                iteration: state.iteration,
                loss,
                generator_before: g0,
                generator_after: g1,
                classifier_before: c0,
                classifier_after: c1,
            });
            loss_sum += loss;

            if let (Some(plan), Some(x_t)) = (&smoothing, &x_t) {
                let w = if config.entropy_stage == EntropyStage::Smooth { config.entropy_weight } else { 0.0 };
                let lsd = state.step_smooth_with_entropy(x_t, plan, w, config.lr_smooth)?;
                observer.on_step(&StepEvent {
                    kind: StepKind::Smooth,
                    epoch,
                    iteration: state.iteration,
                    loss: lsd,
                    generator_before: g1,
                    generator_after: state.model.generator.params().checksum(),
                    classifier_before: c1,
                    classifier_after: state.model.classifier.params().checksum(),
                });
            }
            state.iteration += 1;
        }
        state.epoch = epoch + 1;
        let source_loss = loss_sum / iterations as f64;
        debug!("epoch {} source loss {source_loss:.6}", state.epoch);
        if state.epoch % config.eval_every == 0 || state.epoch == config.epochs {
            let record = evaluate_epoch(&state.model, target, config, state.epoch, state.iteration, source_loss)?;
            if !(record.mean_lsd.is_finite() && record.hdh_proxy.is_finite()) {
                return Err(state.diverged("non-finite evaluation metrics"));
            }
            info!(
                "epoch {} loss {:.4} lsd {:.4} acc {} hdh {:.4}",
                record.epoch,
                record.source_loss,
                record.mean_lsd,
                record.target_accuracy.map_or("NA".into(), |a| format!("{a:.4}")),
                record.hdh_proxy
            );
            observer.on_record(&record, &state.model)?;
            state.history.push(record);
        }
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_two_moons, rotate_domain, standardize};
    use crate::model::ModelSpec;
    use crate::numeric::{finite_diff_grad, relative_error, Activation, LayeredNet};

    fn moons(seed: u64) -> (Dataset, Dataset) {
        let mut rng = Rng::new(seed);
        let src = gen_two_moons(120, 0.1, &mut rng).unwrap();
        let tgt = rotate_domain(&gen_two_moons(120, 0.1, &mut rng).unwrap(), 30.0).unwrap();
        (standardize(&src, &src).unwrap(), standardize(&src, &tgt).unwrap())
    }

    fn small_model(seed: u64) -> Model {
        Model::new(&ModelSpec { generator: vec![2, 8, 4], classifier: vec![4, 2] }, &mut Rng::new(seed)).unwrap()
    }

    fn quick_config(plan: Option<PlanKind>) -> TrainConfig {
        TrainConfig { epochs: 3, batch_size: 32, ..TrainConfig::with_plan(plan) }
    }

    #[test]
    fn zero_lr_source_step_keeps_params() {
        let (src, _) = moons(1);
        let mut state = TrainState::new(small_model(1), OptimizerKind::Adam, 0);
        let before = state.model.clone();
        let loss = state.step_source(src.features(), src.labels().unwrap(), 0.0).unwrap();
        assert!(loss > 0.0);
        assert!(state.model.generator.params().values_bit_equal(before.generator.params()));
        assert!(state.model.classifier.params().values_bit_equal(before.classifier.params()));
    }

    #[test]
    fn single_neuron_loss_decreases() {
        // G: 1→1 identity (w = 1), C: 1→2 linear; points x = ±1 with labels 0/1
        let mut gen = LayeredNet::zeros("generator", &[1, 1], Activation::Identity, Activation::Identity).unwrap();
        gen.set_layer(0, Matrix::identity(1), Matrix::zeros(1, 1)).unwrap();
        let mut cls = LayeredNet::zeros("classifier", &[1, 2], Activation::Identity, Activation::Identity).unwrap();
        cls.set_layer(0, Matrix::row_vector(&[0.1, -0.1]), Matrix::zeros(1, 2)).unwrap();
        let model = Model::from_nets(gen, cls).unwrap();
        let x = Matrix::from_rows(&[vec![1.0], vec![-1.0]]).unwrap();
        let y = [0, 1];
        let mut state = TrainState::new(model, OptimizerKind::Sgd, 0);
        let before = state.step_source(&x, &y, 0.1).unwrap();
        let after = state.model.source_loss(&x, &y).unwrap();
        // logits ±[0.1, −0.1]: margin 0.2, loss ln(1 + e^{−0.2}) before the step
        assert!((before - (1.0 + (-0.2f64).exp()).ln()).abs() < 1e-12);
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn source_step_uses_exact_gradient() {
        let (src, _) = moons(2);
        let x = src.features().select_rows(&(0..16).collect::<Vec<_>>());
        let y = &src.labels().unwrap()[..16];
        let model = small_model(2);
        let mut state = TrainState::new(model.clone(), OptimizerKind::Sgd, 0);
        state.step_source(&x, y, 0.0).unwrap();
        let fd = finite_diff_grad(|p| {
            let mut m = model.clone();
            *m.generator.params_mut() = p.clone();
            m.source_loss(&x, y).unwrap()
        }, model.generator.params(), 1e-5);
        for (seg, est) in state.model.generator.params().segments().iter().zip(&fd) {
            assert!(relative_error(seg.grads.as_slice(), est.as_slice()) <= 1e-5, "{}", seg.name);
        }
    }

    #[test]
    fn smoothing_never_touches_the_classifier() {
        let (_, tgt) = moons(3);
        for plan in [NoisePlan::isotropic(0.5), NoisePlan::fgsm(0.5), NoisePlan::vat(0.5)] {
            let mut state = TrainState::new(small_model(3), OptimizerKind::Adam, 0);
            let c = state.model.classifier.params().clone();
            let g = state.model.generator.params().clone();
            state.step_smooth(tgt.features(), &plan, 1e-2).unwrap();
            assert!(state.model.classifier.params().values_bit_equal(&c));
            assert!(!state.model.generator.params().values_bit_equal(&g));

            let g = state.model.generator.params().clone();
            state.step_smooth(tgt.features(), &plan, 0.0).unwrap();
            assert!(state.model.generator.params().values_bit_equal(&g));
        }
    }

    #[test]
    fn repeated_smoothing_reduces_lsd() {
        let (_, tgt) = moons(4);
        let plan = NoisePlan::isotropic(0.5);
        let mut state = TrainState::new(small_model(4), OptimizerKind::Adam, 4);
        let eval = |m: &Model| metrics::mean_lsd_with(m, &tgt, &plan, 77, Execution::Sequential).unwrap().value;
        let start = eval(&state.model);
        let first = state.step_smooth(tgt.features(), &plan, 1e-3).unwrap();
        let mut last = first;
        for _ in 0..19 {
            last = state.step_smooth(tgt.features(), &plan, 1e-3).unwrap();
        }
        let end = eval(&state.model);
        assert!(end < start, "{end} !< {start}");
        assert!(last < first, "{last} !< {first}");
    }

    #[test]
    fn zero_epochs_returns_input_model() {
        let (src, tgt) = moons(5);
        let model = small_model(5);
        let cfg = TrainConfig { epochs: 0, ..quick_config(Some(PlanKind::Vat)) };
        let state = train_schedule(model.clone(), &src, &tgt, &cfg).unwrap();
        assert_eq!(state.model, model);
        assert!(state.history.is_empty());
    }

    #[test]
    fn same_seed_same_history() {
        let (src, tgt) = moons(6);
        for plan in [None, Some(PlanKind::Isotropic), Some(PlanKind::Fgsm), Some(PlanKind::Vat)] {
            let cfg = TrainConfig { seed: 17, ..quick_config(plan) };
            let a = train_schedule(small_model(6), &src, &tgt, &cfg).unwrap();
            let b = train_schedule(small_model(6), &src, &tgt, &cfg).unwrap();
            assert_eq!(a.history, b.history);
            assert_eq!(a.history.len(), 3);
            assert!(a.model.generator.params().values_bit_equal(b.model.generator.params()));
            assert!(a.model.classifier.params().values_bit_equal(b.model.classifier.params()));
        }
    }

    #[derive(Default)]
    struct Log(Vec<StepEvent>);

    impl TrainObserver for Log {
        fn on_step(&mut self, e: &StepEvent) {
            self.0.push(e.clone());
        }
    }

    #[test]
    fn schedule_order_and_frozen_classifier() {
        let (src, tgt) = moons(7);
        let mut log = Log::default();
        let cfg = TrainConfig { epochs: 2, batch_size: 50, ..quick_config(Some(PlanKind::Fgsm)) };
        let state = train_schedule_observed(small_model(7), &src, &tgt, &cfg, &mut log).unwrap();
        // 120 samples / 50 per batch → 3 iterations per epoch
        assert_eq!(state.iteration, 6);
        assert_eq!(log.0.len(), 12);
        for pair in log.0.chunks(2) {
            assert_eq!((pair[0].kind, pair[1].kind), (StepKind::Source, StepKind::Smooth));
            assert_eq!(pair[0].iteration, pair[1].iteration);
            assert_eq!(pair[1].classifier_before, pair[1].classifier_after);
            assert_ne!(pair[0].classifier_before, pair[0].classifier_after);
        }
    }

    #[test]
    fn source_only_and_warmup_skip_smoothing() {
        let (src, tgt) = moons(8);
        let mut log = Log::default();
        train_schedule_observed(small_model(8), &src, &tgt, &quick_config(None), &mut log).unwrap();
        assert!(log.0.iter().all(|e| e.kind == StepKind::Source));

        let mut log = Log::default();
        let cfg = TrainConfig { warmup_epochs: 2, ..quick_config(Some(PlanKind::Isotropic)) };
        train_schedule_observed(small_model(8), &src, &tgt, &cfg, &mut log).unwrap();
        assert!(log.0.iter().filter(|e| e.kind == StepKind::Smooth).all(|e| e.epoch == 2));
        assert!(log.0.iter().any(|e| e.kind == StepKind::Smooth));
    }

    #[test]
    fn source_batches_match_between_ablations() {
        // smoothing draws from its own streams, so the source batches are shared
        let (src, tgt) = moons(9);
        let mut a = Log::default();
        let mut b = Log::default();
        let cfg = TrainConfig { lr_source: 1e-12, ..quick_config(None) };
        train_schedule_observed(small_model(9), &src, &tgt, &cfg, &mut a).unwrap();
        let cfg = TrainConfig { lr_source: 1e-12, lr_smooth: 1e-300, ..quick_config(Some(PlanKind::Isotropic)) };
        train_schedule_observed(small_model(9), &src, &tgt, &cfg, &mut b).unwrap();
        let la: Vec<u64> = a.0.iter().map(|e| e.loss.to_bits()).collect();
        let lb: Vec<u64> = b.0.iter().filter(|e| e.kind == StepKind::Source).map(|e| e.loss.to_bits()).collect();
        assert_eq!(la, lb);
    }

    #[test]
    fn entropy_term_in_either_stage() {
        let (src, tgt) = moons(10);
        for stage in [EntropyStage::Source, EntropyStage::Smooth] {
            let cfg = TrainConfig { entropy_weight: DEFAULT_ENTROPY_WEIGHT, entropy_stage: stage, ..quick_config(Some(PlanKind::Isotropic)) };
            let state = train_schedule(small_model(10), &src, &tgt, &cfg).unwrap();
            assert!(state.history.iter().all(|r| r.source_loss.is_finite()));
        }
    }

    #[test]
    fn divergence_is_reported_with_step() {
        let (src, tgt) = moons(11);
        let mut model = small_model(11);
        model.classifier.params_mut().segment_mut(0).values.as_mut_slice()[0] = f64::NAN;
        let err = train_schedule(model, &src, &tgt, &quick_config(Some(PlanKind::Isotropic))).unwrap_err();
        assert!(matches!(err, SrdaError::InvalidInput(_) | SrdaError::Diverged { step: 0, .. }), "{err}");
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { batch_size: 0, ..quick_config(None) }.validate().is_err());
        assert!(TrainConfig { lr_source: 0.0, ..quick_config(None) }.validate().is_err());
        assert!(TrainConfig { lr_smooth: -1.0, ..quick_config(None) }.validate().is_err());
        let mut cfg = quick_config(Some(PlanKind::Vat));
        cfg.plan.as_mut().unwrap().epsilon = 0.0;
        assert!(cfg.validate().is_err());
        assert_eq!(TrainConfig::with_plan(Some(PlanKind::Fgsm)).lr_smooth, 1e-4);
        assert_eq!(TrainConfig::with_plan(Some(PlanKind::Vat)).lr_smooth, 1e-3);
    }
}
