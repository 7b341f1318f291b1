//! Datasets, synthetic shifted domains, IDX/CSV ingestion and batching.

use std::f64::consts::PI;
use std::io::{Read, Write};

use crate::error::{Result, SrdaError};
use crate::numeric::{Matrix, Rng};

pub mod idx;

pub use idx::{encode_idx_images, encode_idx_labels, load_idx_dataset, parse_idx, IdxData};

/// Feature matrix with optional class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    features: Matrix,
    labels: Option<Vec<usize>>,
    classes: Option<usize>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, features: Matrix, labels: Option<Vec<usize>>, classes: Option<usize>) -> Result<Self> {
        if features.rows() == 0 {
            return Err(SrdaError::InvalidCount("dataset needs at least one sample".into()));
        }
        if let Some(labels) = &labels {
            if labels.len() != features.rows() {
                return Err(SrdaError::ShapeError(format!("{} labels for {} samples", labels.len(), features.rows())));
            }
            let k = classes.ok_or_else(|| SrdaError::InvalidInput("labeled dataset needs a class count".into()))?;
            if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
                return Err(SrdaError::InvalidLabel { label: bad, classes: k });
            }
        }
        let classes = if labels.is_some() { classes } else { None };
        Ok(Self { name: name.into(), features, labels, classes })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn classes(&self) -> Option<usize> {
        self.classes
    }

    pub fn is_labeled(&self) -> bool {
        self.labels.is_some()
    }

    /// Same features with the labels dropped.
    pub fn unlabeled(&self) -> Dataset {
        Dataset { name: self.name.clone(), features: self.features.clone(), labels: None, classes: None }
    }

    /// Rows `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            features: self.features.select_rows(indices),
            labels: self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
            classes: self.classes,
        }
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Dataset {
        self.name = name.into();
        self
    }

    fn with_features(&self, features: Matrix) -> Dataset {
        Dataset { name: self.name.clone(), features, labels: self.labels.clone(), classes: self.classes }
    }
}

/// Interleaving half circles: class 0 on `(cos t, sin t)`, class 1 on
/// `(1 − cos t, 0.5 − sin t)`, `t ~ U[0, π]`, plus N(0, noise_sd²) noise.
/// Class 0 receives `⌈n/2⌉` points.
pub fn gen_two_moons(n: usize, noise_sd: f64, rng: &mut Rng) -> Result<Dataset> {
    if n < 2 {
        return Err(SrdaError::InvalidCount(format!("two moons needs n ≥ 2, got {n}")));
    }
    let n0 = n - n / 2;
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let t = rng.uniform_range(0.0, PI);
        let (class, x, y) = if i < n0 { (0, t.cos(), t.sin()) } else { (1, 1.0 - t.cos(), 0.5 - t.sin()) };
        let (nx, ny) = if noise_sd > 0.0 { (noise_sd * rng.normal(), noise_sd * rng.normal()) } else { (0.0, 0.0) };
        rows.push(vec![x + nx, y + ny]);
        labels.push(class);
    }
    Dataset::new("two-moons", Matrix::from_rows(&rows)?, Some(labels), Some(2))
}

/// `classes` isotropic Gaussian blobs centered on a circle of radius 2.
pub fn gen_blobs(n: usize, classes: usize, sd: f64, rng: &mut Rng) -> Result<Dataset> {
    if classes < 2 || n < classes {
        return Err(SrdaError::InvalidCount(format!("blobs needs classes ≥ 2 and n ≥ classes, got n={n}, classes={classes}")));
    }
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let k = i * classes / n;
        let angle = 2.0 * PI * k as f64 / classes as f64;
        rows.push(vec![2.0 * angle.cos() + sd * rng.normal(), 2.0 * angle.sin() + sd * rng.normal()]);
        labels.push(k);
    }
    Dataset::new("blobs", Matrix::from_rows(&rows)?, Some(labels), Some(classes))
}

fn centroid(m: &Matrix) -> Vec<f64> {
    m.column_stats().0
}

/// Rotates a planar dataset by `theta_deg` degrees about its centroid.
pub fn rotate_domain(ds: &Dataset, theta_deg: f64) -> Result<Dataset> {
    if ds.dim() != 2 {
        return Err(SrdaError::NonPlanarData(ds.dim()));
    }
    if theta_deg % 360.0 == 0.0 {
        return Ok(ds.clone());
    }
    let c = centroid(ds.features());
    let (s, co) = theta_deg.to_radians().sin_cos();
    let mut out = ds.features().clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let (dx, dy) = (row[0] - c[0], row[1] - c[1]);
        row[0] = c[0] + co * dx - s * dy;
        row[1] = c[1] + s * dx + co * dy;
    }
    Ok(ds.with_features(out))
}

pub fn translate_domain(ds: &Dataset, offset: &[f64]) -> Result<Dataset> {
    if offset.len() != ds.dim() {
        return Err(SrdaError::ShapeError(format!("offset of length {} for {}-d data", offset.len(), ds.dim())));
    }
    let mut out = ds.features().clone();
    for r in 0..out.rows() {
        out.row_mut(r).iter_mut().zip(offset).for_each(|(v, o)| *v += o);
    }
    Ok(ds.with_features(out))
}

/// Built-in planar generators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    TwoMoons,
    Blobs,
}

impl SyntheticKind {
    pub fn name(self) -> &'static str {
        match self {
            SyntheticKind::TwoMoons => "two-moons",
            SyntheticKind::Blobs => "blobs",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "two-moons" => Some(SyntheticKind::TwoMoons),
            "blobs" => Some(SyntheticKind::Blobs),
            _ => None,
        }
    }
}

/// Source domain drawn from a generator; target drawn from the same
/// generator and then rotated and translated.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainShift {
    pub kind: SyntheticKind,
    pub n: usize,
    pub noise_sd: f64,
    /// Used by blobs only.
    pub classes: usize,
    pub rotate_deg: f64,
    pub translate: [f64; 2],
}

const SHIFT_DATA_STREAM: u64 = 10;

impl DomainShift {
    /// Unstandardized `(source, target)`. Deterministic in `seed`.
    pub fn generate(&self, seed: u64) -> Result<(Dataset, Dataset)> {
        let mut rng = Rng::new(seed).fork(SHIFT_DATA_STREAM);
        let draw = |rng: &mut Rng| match self.kind {
            SyntheticKind::TwoMoons => gen_two_moons(self.n, self.noise_sd, rng),
            SyntheticKind::Blobs => gen_blobs(self.n, self.classes, self.noise_sd, rng),
        };
        let source = draw(&mut rng)?.renamed("source");
        let target = draw(&mut rng)?;
        let target = translate_domain(&rotate_domain(&target, self.rotate_deg)?, &self.translate)?.renamed("target");
        Ok((source, target))
    }
}

/// Random subset of `n_keep` samples. Labeled data is stratified so that
/// per-class counts differ by at most one (as far as class sizes allow).
pub fn subsample(ds: &Dataset, n_keep: usize, rng: &mut Rng) -> Result<Dataset> {
    if n_keep == 0 || n_keep > ds.len() {
        return Err(SrdaError::InvalidCount(format!("cannot keep {n_keep} of {} samples", ds.len())));
    }
    let mut chosen = match (ds.labels(), ds.classes()) {
        (Some(labels), Some(k)) => {
            let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k];
            for (i, &y) in labels.iter().enumerate() {
                groups[y].push(i);
            }
            groups.iter_mut().for_each(|g| rng.shuffle(g));
            let mut class_order: Vec<usize> = (0..k).collect();
            rng.shuffle(&mut class_order);
            let mut quota = vec![0usize; k];
            let mut remaining = n_keep;
            while remaining > 0 {
                for &c in &class_order {
                    if remaining > 0 && quota[c] < groups[c].len() {
                        quota[c] += 1;
                        remaining -= 1;
                    }
                }
            }
            groups.iter().zip(&quota).flat_map(|(g, &q)| g[..q].iter().copied()).collect::<Vec<_>>()
        }
        _ => {
            let mut all: Vec<usize> = (0..ds.len()).collect();
            rng.shuffle(&mut all);
            all.truncate(n_keep);
            all
        }
    };
    rng.shuffle(&mut chosen);
    Ok(ds.select(&chosen))
}

const SD_FLOOR: f64 = 1e-8;

/// Per-feature `(x − mean) / sd` with statistics fitted on `fit` (population
/// sd clamped at 1e-8) and applied to `apply`.
pub fn standardize(fit: &Dataset, apply: &Dataset) -> Result<Dataset> {
    if fit.dim() != apply.dim() {
        return Err(SrdaError::ShapeError(format!("fit on {}-d data, applied to {}-d", fit.dim(), apply.dim())));
    }
    let (mean, sd) = fit.features().column_stats();
    let mut out = apply.features().clone();
    for r in 0..out.rows() {
        for ((v, m), s) in out.row_mut(r).iter_mut().zip(&mean).zip(&sd) {
            *v = (*v - m) / s.max(SD_FLOOR);
        }
    }
    Ok(apply.with_features(out))
}

/// Writes `label,f0,f1,...` rows; unlabeled samples get label `-1`.
pub fn write_csv(ds: &Dataset, sink: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["label".to_string()];
    header.extend((0..ds.dim()).map(|j| format!("f{j}")));
    w.write_record(&header)?;
    for i in 0..ds.len() {
        let mut rec = vec![ds.labels().map_or("-1".to_string(), |l| l[i].to_string())];
        rec.extend(ds.features().row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the format produced by [`write_csv`]. The class count of labeled
/// data is `max(label) + 1` (at least 2).
pub fn read_csv(source: impl Read, name: &str) -> Result<Dataset> {
    let mut r = csv::Reader::from_reader(source);
    let header = r.headers()?.clone();
    if header.get(0) != Some("label") || header.iter().skip(1).enumerate().any(|(j, h)| h != format!("f{j}")) {
        return Err(SrdaError::InvalidInput("CSV header must be `label,f0,f1,...`".into()));
    }
    let dim = header.len() - 1;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| SrdaError::InvalidInput(format!("CSV record {}: bad {what}", line + 1));
        let label: i64 = rec.get(0).and_then(|s| s.trim().parse().ok()).ok_or_else(|| bad("label"))?;
        labels.push(label);
        for j in 0..dim {
            data.push(rec.get(j + 1).and_then(|s| s.trim().parse::<f64>().ok()).ok_or_else(|| bad("feature"))?);
        }
    }
    let features = Matrix::from_vec(labels.len(), dim, data)?;
    if labels.iter().all(|&l| l == -1) {
        return Dataset::new(name, features, None, None);
    }
    if labels.iter().any(|&l| l < 0) {
        return Err(SrdaError::InvalidInput("CSV mixes labeled and unlabeled rows".into()));
    }
    let labels: Vec<usize> = labels.into_iter().map(|l| l as usize).collect();
    let classes = labels.iter().max().map_or(2, |m| (m + 1).max(2));
    Dataset::new(name, features, Some(labels), Some(classes))
}

pub fn save_csv(ds: &Dataset, path: impl AsRef<std::path::Path>) -> Result<()> {
    write_csv(ds, std::io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn load_csv(path: impl AsRef<std::path::Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let name = path.file_stem().map_or("data".into(), |s| s.to_string_lossy().into_owned());
    read_csv(std::fs::File::open(path)?, &name)
}

/// Seeded minibatch order over `n` indices. Each pass is a fresh
/// permutation; a pass ends with a partial batch when `batch_size ∤ n`.
#[derive(Clone, Debug)]
pub struct BatchStream {
    batch_size: usize,
    order: Vec<usize>,
    cursor: usize,
    passes: u64,
    rng: Rng,
}

impl BatchStream {
    pub fn new(n: usize, batch_size: usize, rng: Rng) -> Result<Self> {
        if n == 0 || batch_size == 0 {
            return Err(SrdaError::InvalidCount(format!("batch stream over {n} samples with batch size {batch_size}")));
        }
        Ok(Self { batch_size, order: (0..n).collect(), cursor: n, passes: 0, rng })
    }

    pub fn batches_per_pass(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }

    /// Completed-or-started passes so far.
    pub fn passes(&self) -> u64 {
        self.passes
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        if self.cursor == self.order.len() {
            self.rng.shuffle(&mut self.order);
            self.cursor = 0;
            self.passes += 1;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let batch = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        batch
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest};

    fn distances(m: &Matrix) -> Vec<f64> {
        let mut out = Vec::new();
        for i in 0..m.rows() {
            for j in 0..m.rows() {
                let d: f64 = m.row(i).iter().zip(m.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                out.push(d.sqrt());
            }
        }
        out
    }

    #[test]
    fn two_moons_balance_and_geometry() {
        let ds = gen_two_moons(10, 0.1, &mut Rng::new(1)).unwrap();
        let labels = ds.labels().unwrap();
        assert_eq!(labels.iter().filter(|&&y| y == 0).count(), 5);
        assert_eq!(labels.iter().filter(|&&y| y == 1).count(), 5);

        let clean = gen_two_moons(51, 0.0, &mut Rng::new(2)).unwrap();
        for (row, &y) in clean.features().row_iter().zip(clean.labels().unwrap()) {
            if y == 0 {
                assert!(((row[0] * row[0] + row[1] * row[1]).sqrt() - 1.0).abs() < 1e-15);
            }
        }
        let ones = clean.labels().unwrap().iter().filter(|&&y| y == 1).count();
        assert!((25..=26).contains(&ones));

        assert_eq!(gen_two_moons(40, 0.2, &mut Rng::new(9)).unwrap(), gen_two_moons(40, 0.2, &mut Rng::new(9)).unwrap());
        assert!(gen_two_moons(1, 0.1, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn rotate_examples() {
        let ds = gen_two_moons(30, 0.1, &mut Rng::new(3)).unwrap();
        assert_eq!(rotate_domain(&ds, 0.0).unwrap(), ds);

        let sym = Dataset::new("s", Matrix::from_rows(&[vec![1.0, 2.0], vec![-1.0, -2.0]]).unwrap(), None, None).unwrap();
        let flipped = rotate_domain(&sym, 180.0).unwrap();
        assert!((flipped.features().get(0, 0) + 1.0).abs() < 1e-12 && (flipped.features().get(0, 1) + 2.0).abs() < 1e-12);

        let c = centroid(ds.features());
        let rotated = rotate_domain(&ds, 30.0).unwrap();
        for (a, b) in ds.features().row_iter().zip(rotated.features().row_iter()) {
            let da = ((a[0] - c[0]).powi(2) + (a[1] - c[1]).powi(2)).sqrt();
            let db = ((b[0] - c[0]).powi(2) + (b[1] - c[1]).powi(2)).sqrt();
            assert!((da - db).abs() < 1e-12);
        }
        assert_eq!(rotated.labels(), ds.labels());

        let three = Dataset::new("t", Matrix::zeros(2, 3), None, None).unwrap();
        assert!(matches!(rotate_domain(&three, 10.0), Err(SrdaError::NonPlanarData(3))));
    }

    #[test]
    fn translate_examples() {
        let ds = Dataset::new("p", Matrix::from_rows(&[vec![0.0, 0.0], vec![3.0, -1.0]]).unwrap(), Some(vec![0, 1]), Some(2)).unwrap();
        assert_eq!(translate_domain(&ds, &[0.0, 0.0]).unwrap(), ds);
        let moved = translate_domain(&ds, &[1.0, 0.0]).unwrap();
        assert_eq!(moved.features().row(0), &[1.0, 0.0]);
        assert_eq!(moved.labels(), ds.labels());
        assert!(translate_domain(&ds, &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn shifts_are_isometries(seed in any::<u64>(), theta in -360.0f64..360.0, dx in -5.0f64..5.0, dy in -5.0f64..5.0) {
            let ds = gen_two_moons(12, 0.2, &mut Rng::new(seed)).unwrap();
            let base = distances(ds.features());
            for moved in [rotate_domain(&ds, theta).unwrap(), translate_domain(&ds, &[dx, dy]).unwrap()] {
                prop_assert_eq!(moved.labels(), ds.labels());
                for (a, b) in base.iter().zip(distances(moved.features())) {
                    prop_assert!((a - b).abs() < 1e-10);
                }
            }
        }

        #[test]
        fn one_pass_visits_each_index_once(n in 1usize..200, bs in 1usize..70, seed in any::<u64>()) {
            let mut stream = BatchStream::new(n, bs, Rng::new(seed)).unwrap();
            let mut seen: Vec<usize> = (0..stream.batches_per_pass()).flat_map(|_| stream.next_batch()).collect();
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn subsample_examples() {
        let ds = gen_two_moons(20, 0.1, &mut Rng::new(4)).unwrap();
        let all = subsample(&ds, 20, &mut Rng::new(1)).unwrap();
        let mut a: Vec<u64> = all.features().as_slice().iter().map(|v| v.to_bits()).collect();
        let mut b: Vec<u64> = ds.features().as_slice().iter().map(|v| v.to_bits()).collect();
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b);

        let two = subsample(&ds, 2, &mut Rng::new(1)).unwrap();
        let mut labels = two.labels().unwrap().to_vec();
        labels.sort_unstable();
        assert_eq!(labels, vec![0, 1]);

        let blobs = gen_blobs(100, 3, 0.3, &mut Rng::new(5)).unwrap();
        let sub = subsample(&blobs, 10, &mut Rng::new(8)).unwrap();
        let counts: Vec<usize> = (0..3).map(|k| sub.labels().unwrap().iter().filter(|&&y| y == k).count()).collect();
        assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1, "{counts:?}");
        assert_eq!(sub, subsample(&blobs, 10, &mut Rng::new(8)).unwrap());

        assert!(matches!(subsample(&ds, 21, &mut Rng::new(0)), Err(SrdaError::InvalidCount(_))));
        assert!(subsample(&ds.unlabeled(), 5, &mut Rng::new(0)).unwrap().labels().is_none());
    }

    #[test]
    fn standardize_examples() {
        let ds = gen_two_moons(50, 0.1, &mut Rng::new(6)).unwrap();
        let z = standardize(&ds, &ds).unwrap();
        let (mean, sd) = z.features().column_stats();
        assert!(mean.iter().all(|m| m.abs() < 1e-10));
        assert!(sd.iter().all(|s| (s - 1.0).abs() < 1e-10));

        let constant = Dataset::new("c", Matrix::from_rows(&[vec![3.0], vec![3.0]]).unwrap(), None, None).unwrap();
        assert!(standardize(&constant, &constant).unwrap().features().as_slice().iter().all(|&v| v == 0.0));

        let pair = Dataset::new("p", Matrix::from_rows(&[vec![0.0], vec![2.0]]).unwrap(), None, None).unwrap();
        assert_eq!(standardize(&pair, &pair).unwrap().features().as_slice(), &[-1.0, 1.0]);

        let wide = Dataset::new("w", Matrix::zeros(2, 3), None, None).unwrap();
        assert!(standardize(&pair, &wide).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let ds = gen_two_moons(9, 0.3, &mut Rng::new(7)).unwrap();
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("label,f0,f1\n"));
        let back = read_csv(buf.as_slice(), "two-moons").unwrap();
        assert_eq!(back, ds);

        let mut buf = Vec::new();
        write_csv(&ds.unlabeled(), &mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().lines().nth(1).unwrap().starts_with("-1,"));
        assert!(!read_csv(buf.as_slice(), "u").unwrap().is_labeled());
    }
}
