//! Evaluation: accuracy, mean LSD, the prediction-flip proxy for the
//! H∆H divergence, the LSD/accuracy rank correlation and CSV output.

use std::io::Write;

use crate::data::Dataset;
use crate::error::{Result, SrdaError};
use crate::model::Model;
use crate::numeric::ops::argmax;
use crate::numeric::{Matrix, Rng};
use crate::par::{map_indexed, Execution};
use crate::perturbation::{lsd_value, plan_perturbation, NoisePlan};

/// One evaluation row of a training run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub epoch: usize,
    pub step: u64,
    pub source_loss: f64,
    pub mean_lsd: f64,
    pub target_accuracy: Option<f64>,
    pub hdh_proxy: f64,
}

/// Fraction of samples whose predicted label matches.
pub fn accuracy(model: &Model, ds: &Dataset) -> Result<f64> {
    let labels = ds.labels().ok_or(SrdaError::UnlabeledData)?;
    let predicted = model.predict_labels(ds.features())?;
    let hits = predicted.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Per-sample outcome of perturbing one feature row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleProbe {
    pub lsd: f64,
    pub flipped: bool,
    pub fell_back: bool,
}

/// Mean of a metric together with how many anisotropic perturbations had
/// to fall back to isotropic noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricValue {
    pub value: f64,
    pub fallbacks: usize,
}

fn probe_row(model: &Model, g: &[f64], r: &[f64], fell_back: bool) -> Result<SampleProbe> {
    let lsd = lsd_value(model, g, r)?;
    let shifted: Vec<f64> = g.iter().zip(r).map(|(a, b)| a + b).collect();
    let clean = model.classify(&Matrix::row_vector(g))?;
    let moved = model.classify(&Matrix::row_vector(&shifted))?;
    Ok(SampleProbe { lsd, flipped: argmax(clean.row(0)) != argmax(moved.row(0)), fell_back })
}

/// Probes every sample of `ds`. Sample `i` draws its noise from
/// `Rng::for_index(base_seed, i)`, so results do not depend on `exec`.
pub fn probe_samples(model: &Model, ds: &Dataset, plan: &NoisePlan, base_seed: u64, exec: Execution) -> Result<Vec<SampleProbe>> {
    plan.validate()?;
    let g = model.forward_features(ds.features())?;
    map_indexed(ds.len(), exec, |i| {
        let mut rng = Rng::for_index(base_seed, i as u64);
        let row = g.row(i);
        let p = plan_perturbation(model, row, plan, &mut rng)?;
        probe_row(model, row, &p.r, p.fell_back)
    })
    .into_iter()
    .collect()
}

/// Probes with explicitly supplied perturbations (one row per sample).
pub fn probe_with_perturbations(model: &Model, ds: &Dataset, r: &Matrix) -> Result<Vec<SampleProbe>> {
    let g = model.forward_features(ds.features())?;
    if r.shape() != g.shape() {
        return Err(SrdaError::ShapeError(format!("perturbations {:?} for features {:?}", r.shape(), g.shape())));
    }
    (0..g.rows()).map(|i| probe_row(model, g.row(i), r.row(i), false)).collect()
}

fn summarize(probes: &[SampleProbe], f: impl Fn(&SampleProbe) -> f64) -> MetricValue {
    // in-order sum keeps the result independent of the parallel split
    let mut total = 0.0;
    for p in probes {
        total += f(p);
    }
    MetricValue { value: total / probes.len() as f64, fallbacks: probes.iter().filter(|p| p.fell_back).count() }
}

pub fn mean_lsd_of(probes: &[SampleProbe]) -> MetricValue {
    summarize(probes, |p| p.lsd)
}

pub fn hdh_proxy_of(probes: &[SampleProbe]) -> MetricValue {
    summarize(probes, |p| if p.flipped { 1.0 } else { 0.0 })
}

/// Mean LSD over `ds` with per-sample noise from `plan`. One value is drawn
/// from `rng` as the base seed of the per-sample streams.
pub fn mean_lsd(model: &Model, ds: &Dataset, plan: &NoisePlan, rng: &mut Rng) -> Result<MetricValue> {
    mean_lsd_with(model, ds, plan, rng.next_u64(), Execution::default())
}

pub fn mean_lsd_with(model: &Model, ds: &Dataset, plan: &NoisePlan, base_seed: u64, exec: Execution) -> Result<MetricValue> {
    Ok(mean_lsd_of(&probe_samples(model, ds, plan, base_seed, exec)?))
}

/// Fraction of samples whose arg-max prediction changes when their features
/// are perturbed by the plan's noise.
pub fn hdh_proxy(model: &Model, ds: &Dataset, plan: &NoisePlan, rng: &mut Rng) -> Result<MetricValue> {
    hdh_proxy_with(model, ds, plan, rng.next_u64(), Execution::default())
}

pub fn hdh_proxy_with(model: &Model, ds: &Dataset, plan: &NoisePlan, base_seed: u64, exec: Execution) -> Result<MetricValue> {
    Ok(hdh_proxy_of(&probe_samples(model, ds, plan, base_seed, exec)?))
}

/// Spearman rank correlation between epoch-wise mean LSD and target accuracy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceCorrelation {
    pub rho: f64,
    /// Set when either series is constant; `rho` is then reported as 0.
    pub degenerate: bool,
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's ρ (Pearson correlation of average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> TraceCorrelation {
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return TraceCorrelation { rho: 0.0, degenerate: true };
    }
    TraceCorrelation { rho: sxy / (sxx * syy).sqrt(), degenerate: false }
}

pub fn lsd_accuracy_trace(history: &[RunRecord]) -> Result<TraceCorrelation> {
    let (lsd, acc): (Vec<f64>, Vec<f64>) = history.iter().filter_map(|r| r.target_accuracy.map(|a| (r.mean_lsd, a))).unzip();
    if acc.len() < 3 {
        return Err(SrdaError::InsufficientData(format!("{} records with accuracy; need ≥ 3", acc.len())));
    }
    Ok(spearman(&lsd, &acc))
}

/// `%g`-style formatting with six significant digits.
pub fn format_sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { v.to_string() };
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: String| {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    if !(-4..6).contains(&exp) {
        format!("{}e{}{:02}", trim(mantissa.to_string()), if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (5 - exp).max(0) as usize;
        trim(format!("{v:.decimals$}"))
    }
}

pub const CSV_HEADER: &str = "epoch,step,source_loss,mean_lsd,target_accuracy,hdh_proxy";

/// Writes the history as CSV and returns the number of bytes written.
pub fn emit_csv(history: &[RunRecord], mut sink: impl Write) -> Result<usize> {
    let mut text = String::with_capacity(64 * (history.len() + 1));
    text.push_str(CSV_HEADER);
    text.push('\n');
    for r in history {
        let acc = r.target_accuracy.map_or("NA".to_string(), format_sig6);
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.epoch,
            r.step,
            format_sig6(r.source_loss),
            format_sig6(r.mean_lsd),
            acc,
            format_sig6(r.hdh_proxy)
        ));
    }
    sink.write_all(text.as_bytes())?;
    Ok(text.len())
}

pub fn metrics_csv_string(history: &[RunRecord]) -> String {
    let mut buf = Vec::new();
    emit_csv(history, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("CSV is ASCII")
}
