use std::fs;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use log::info;
use srda::config::{PlanSetting, RunSpec};
use srda::data::{save_csv, DomainShift, SyntheticKind};
use srda::experiment::{gradcheck_suite, initial_model, GradcheckOptions};
use srda::metrics::{self, emit_csv, RunRecord};
use srda::model::checkpoint;
use srda::training::{train_schedule_observed, TrainObserver};
use srda::{Execution, Model, NoisePlan, PlanKind};

use crate::{EvalArgs, GenDataArgs, GradcheckArgs, KindArg, PlanArg, TrainArgs};

impl PlanArg {
    fn kind(self) -> Option<PlanKind> {
        match self {
            PlanArg::None => None,
            PlanArg::Isotropic => Some(PlanKind::Isotropic),
            PlanArg::Fgsm => Some(PlanKind::Fgsm),
            PlanArg::Vat => Some(PlanKind::Vat),
        }
    }
}

pub fn gen_data(args: GenDataArgs) -> Result<ExitCode> {
    let kind = match args.kind {
        KindArg::TwoMoons => SyntheticKind::TwoMoons,
        KindArg::Blobs => SyntheticKind::Blobs,
    };
    let translate = args.translate.unwrap_or([0.0, 0.0]);
    let shift = DomainShift { kind, n: args.n, noise_sd: args.noise, classes: args.classes, rotate_deg: args.rotate, translate };
    let (source, target) = shift.generate(args.seed)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    save_csv(&source, args.out.join("source.csv"))?;
    save_csv(&target, args.out.join("target.csv"))?;
    let classes = match kind {
        SyntheticKind::TwoMoons => String::new(),
        SyntheticKind::Blobs => format!("classes = {}\n", args.classes),
    };
    let manifest = format!(
        "kind = \"{}\"\nn = {}\nnoise_sd = {:?}\n{classes}rotate = {:?}\ntranslate = [{:?}, {:?}]\nseed = {}\nsource = \"source.csv\"\ntarget = \"target.csv\"\n",
        kind.name(),
        args.n,
        args.noise,
        args.rotate,
        translate[0],
        translate[1],
        args.seed
    );
    fs::write(args.out.join("manifest.toml"), manifest)?;
    println!("wrote {} and {} samples to {}", source.len(), target.len(), args.out.display());
    Ok(ExitCode::SUCCESS)
}

/// Logs progress and writes periodic checkpoints.
struct Progress<'a> {
    dir: &'a Path,
    every: usize,
}

impl TrainObserver for Progress<'_> {
    fn on_record(&mut self, record: &RunRecord, model: &Model) -> srda::Result<()> {
        info!(
            "epoch {} step {} source_loss {:.4} mean_lsd {:.4} target_accuracy {:?} hdh_proxy {:.4}",
            record.epoch, record.step, record.source_loss, record.mean_lsd, record.target_accuracy, record.hdh_proxy
        );
        if self.every > 0 && record.epoch % self.every == 0 {
            checkpoint::save(model, self.dir.join(format!("checkpoint-epoch{:04}.txt", record.epoch)))?;
        }
        Ok(())
    }
}

pub fn train(args: TrainArgs) -> Result<ExitCode> {
    let mut spec = RunSpec::from_path(&args.config)?;
    if let Some(plan) = args.plan {
        spec.train.plan = Some(plan.kind().map_or(PlanSetting::None, PlanSetting::from));
    }
    if let Some(seed) = args.seed {
        spec.train.seed = Some(seed);
    }
    if let Some(epochs) = args.epochs {
        spec.train.epochs = Some(epochs);
    }
    if let Some(out) = args.out {
        spec.output.dir = out;
    }
    let spec = spec.resolved()?;
    let config = spec.train_config()?;
    let (source, target) = spec.load_domains()?;
    let model_spec = spec.model_spec(&source)?;
    let echo = RunSpec { model: Some(model_spec.clone()), ..spec.clone() };

    let dir = &spec.output.dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("config.resolved.toml"), echo.to_toml()?)?;
    save_csv(&source, dir.join("train-source.csv"))?;
    save_csv(&target, dir.join("train-target.csv"))?;

    let model = initial_model(&model_spec, config.seed)?;
    let mut progress = Progress { dir, every: spec.output.checkpoint_every.unwrap_or(0) };
    let state = train_schedule_observed(model, &source, &target, &config, &mut progress)?;

    checkpoint::save(&state.model, dir.join("checkpoint.txt"))?;
    emit_csv(&state.history, fs::File::create(dir.join("metrics.csv"))?)?;
    println!("plan={}", config.plan.map_or("none", |p| p.kind.name()));
    println!("epochs={}", config.epochs);
    println!("steps={}", state.iteration);
    if let Some(last) = state.history.last() {
        println!("source_loss={}", last.source_loss);
        println!("mean_lsd={}", last.mean_lsd);
        if let Some(acc) = last.target_accuracy {
            println!("target_accuracy={acc}");
        }
        println!("hdh_proxy={}", last.hdh_proxy);
    }
    println!("fallbacks={}", state.fallbacks);
    println!("output={}", dir.display());
    Ok(ExitCode::SUCCESS)
}

pub fn eval(args: EvalArgs) -> Result<ExitCode> {
    let model = checkpoint::load(&args.checkpoint).with_context(|| format!("reading checkpoint {}", args.checkpoint.display()))?;
    let data = srda::data::load_csv(&args.data).with_context(|| format!("reading dataset {}", args.data.display()))?;
    println!("n={}", data.len());
    if data.is_labeled() {
        println!("accuracy={}", metrics::accuracy(&model, &data)?);
    }
    let mut plans: Vec<PlanKind> = Vec::new();
    for plan in &args.plan {
        match plan.kind() {
            Some(kind) if !plans.contains(&kind) => plans.push(kind),
            Some(_) => {}
            None => bail!("--plan none has no perturbation to evaluate"),
        }
    }
    for kind in plans {
        let plan = NoisePlan::new(kind, args.epsilon);
        plan.validate()?;
        let probes = metrics::probe_samples(&model, &data, &plan, args.seed, Execution::default())?;
        let lsd = metrics::mean_lsd_of(&probes);
        println!("mean_lsd.{kind}={}", lsd.value);
        println!("hdh_proxy.{kind}={}", metrics::hdh_proxy_of(&probes).value);
        println!("fallbacks.{kind}={}", lsd.fallbacks);
    }
    Ok(ExitCode::SUCCESS)
}

pub fn gradcheck(args: GradcheckArgs) -> Result<ExitCode> {
    let opts = GradcheckOptions { base_seed: args.seed, seeds: args.seeds, corrupt_segment: args.corrupt_backward };
    let report = gradcheck_suite(&opts, Execution::default())?;
    for check in &report.checks {
        let verdict = if check.max_rel_error <= report.tolerance { "ok" } else { "FAIL" };
        println!(
            "{} max_rel_error={:e} segment={} seed={} {verdict}",
            check.loss, check.max_rel_error, check.worst_segment, check.worst_seed
        );
    }
    if report.passed() {
        return Ok(ExitCode::SUCCESS);
    }
    for check in report.checks.iter().filter(|c| c.max_rel_error > report.tolerance) {
        eprintln!(
            "error: {} gradient mismatch in segment {} (seed {}): {:e} > {:e}",
            check.loss, check.worst_segment, check.worst_seed, check.max_rel_error, report.tolerance
        );
    }
    Ok(ExitCode::from(1))
}
