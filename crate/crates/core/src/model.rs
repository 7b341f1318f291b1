//! Feature generator G, classifier C and the supervised losses of f = C∘G.

use crate::error::{Result, SrdaError};
use crate::numeric::ops::{self, cross_entropy_logit_grad, entropy_logit_grad, PROB_FLOOR};
use crate::numeric::{Activation, LayeredNet, Matrix, NetCache, Rng};

pub mod checkpoint;

/// Layer widths for both sub-networks. The generator uses ReLU on hidden
/// layers and identity on its output; the classifier likewise, producing
/// logits that `classify` turns into probabilities.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// input dim → … → feature dim
    pub generator: Vec<usize>,
    /// feature dim → … → K
    pub classifier: Vec<usize>,
}

impl ModelSpec {
    /// `d`→64→64→16 generator and a 16→16→K classifier. The hidden layer in
    /// the classifier matters: with a linear head, generator-only smoothing
    /// barely changes target accuracy on the two-moons shift.
    pub fn small_mlp(input_dim: usize, classes: usize) -> Self {
        Self { generator: vec![input_dim, 64, 64, 16], classifier: vec![16, 16, classes] }
    }

    /// Flattened-image generator `d`→256→64 and a 64→32→K classifier.
    pub fn digits(input_dim: usize, classes: usize) -> Self {
        Self { generator: vec![input_dim, 256, 64], classifier: vec![64, 32, classes] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.generator.len() < 2 || self.generator.iter().any(|&w| w == 0) {
            return Err(SrdaError::InvalidInput(format!(
                "generator widths {:?} need at least one layer of positive widths",
                self.generator
            )));
        }
        if self.classifier.len() < 2 || self.classifier.iter().any(|&w| w == 0) {
            return Err(SrdaError::InvalidInput(format!(
                "classifier widths {:?} need at least one layer of positive widths",
                self.classifier
            )));
        }
        if *self.classifier.last().unwrap() < 2 {
            return Err(SrdaError::InvalidInput("classifier needs K ≥ 2 outputs".into()));
        }
        if self.generator.last() != self.classifier.first() {
            return Err(SrdaError::ShapeError(format!(
                "generator feature dim {} differs from classifier input {}",
                self.generator.last().unwrap(),
                self.classifier[0]
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub generator: LayeredNet,
    pub classifier: LayeredNet,
}

/// Forward pass retained for backpropagation.
pub struct ForwardTrace {
    pub features: Matrix,
    pub probs: Matrix,
    generator_cache: NetCache,
    classifier_cache: NetCache,
}

impl Model {
    pub fn new(spec: &ModelSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let generator = LayeredNet::random("generator", &spec.generator, Activation::Relu, Activation::Identity, rng)?;
        let classifier = LayeredNet::random("classifier", &spec.classifier, Activation::Relu, Activation::Identity, rng)?;
        Ok(Self { generator, classifier })
    }

    pub fn from_nets(generator: LayeredNet, classifier: LayeredNet) -> Result<Self> {
        if generator.output_width() != classifier.input_width() {
            return Err(SrdaError::ShapeError(format!(
                "generator output {} vs classifier input {}",
                generator.output_width(),
                classifier.input_width()
            )));
        }
        if classifier.output_width() < 2 {
            return Err(SrdaError::InvalidInput("classifier needs K ≥ 2 outputs".into()));
        }
        Ok(Self { generator, classifier })
    }

    pub fn spec(&self) -> ModelSpec {
        ModelSpec { generator: self.generator.widths(), classifier: self.classifier.widths() }
    }

    pub fn input_dim(&self) -> usize {
        self.generator.input_width()
    }

    pub fn feature_dim(&self) -> usize {
        self.generator.output_width()
    }

    pub fn classes(&self) -> usize {
        self.classifier.output_width()
    }

    /// g = G(x).
    pub fn forward_features(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        self.generator.infer(x)
    }

    /// Softmax of C(g), row by row.
    pub fn classify(&self, g: &Matrix) -> Result<Matrix> {
        if g.cols() != self.feature_dim() {
            return Err(SrdaError::ShapeError(format!("features have {} cols, model expects {}", g.cols(), self.feature_dim())));
        }
        let logits = self.classifier.infer(g)?;
        softmax_rows(&logits)
    }

    /// Arg-max class per row of `x`, ties to the lowest index.
    pub fn predict_labels(&self, x: &Matrix) -> Result<Vec<usize>> {
        let probs = self.classify(&self.forward_features(x)?)?;
        Ok(probs.row_iter().map(ops::argmax).collect())
    }

    pub fn forward_trace(&self, x: &Matrix) -> Result<ForwardTrace> {
        self.check_input(x)?;
        let (features, generator_cache) = self.generator.forward(x)?;
        let (logits, classifier_cache) = self.classifier.forward(&features)?;
        let probs = softmax_rows(&logits)?;
        Ok(ForwardTrace { features, probs, generator_cache, classifier_cache })
    }

    /// `−(1/B) Σ_i ln p_i[y_i]`.
    pub fn source_loss(&self, x: &Matrix, labels: &[usize]) -> Result<f64> {
        let probs = self.classify(&self.forward_features(x)?)?;
        labeled_nll(&probs, labels, self.classes())
    }

    /// Same value as [`Model::source_loss`]; gradients are added into both
    /// generator and classifier stores.
    pub fn source_loss_backward(&mut self, x: &Matrix, labels: &[usize]) -> Result<f64> {
        let trace = self.forward_trace(x)?;
        let loss = labeled_nll(&trace.probs, labels, self.classes())?;
        let b = x.rows() as f64;
        let mut upstream = Matrix::zeros(trace.probs.rows(), self.classes());
        for (i, &y) in labels.iter().enumerate() {
            let target = ops::one_hot(y, self.classes());
            let g = cross_entropy_logit_grad(trace.probs.row(i), &target);
            for (u, gk) in upstream.row_mut(i).iter_mut().zip(g) {
                *u = gk / b;
            }
        }
        let feature_grad = self.classifier.backward(&trace.classifier_cache, &upstream)?;
        self.generator.backward(&trace.generator_cache, &feature_grad)?;
        Ok(loss)
    }

    /// Mean Shannon entropy of the predictions on `x`.
    pub fn entropy_loss(&self, x: &Matrix) -> Result<f64> {
        let probs = self.classify(&self.forward_features(x)?)?;
        Ok(mean_entropy(&probs))
    }

    /// Backpropagates `weight · entropy_loss(x)`. The generator always
    /// receives gradients; the classifier only when `update_classifier`.
    pub fn entropy_loss_backward(&mut self, x: &Matrix, weight: f64, update_classifier: bool) -> Result<f64> {
        let trace = self.forward_trace(x)?;
        let loss = mean_entropy(&trace.probs);
        let scale = weight / x.rows() as f64;
        let mut upstream = Matrix::zeros(trace.probs.rows(), self.classes());
        for i in 0..trace.probs.rows() {
            let g = entropy_logit_grad(trace.probs.row(i));
            for (u, gk) in upstream.row_mut(i).iter_mut().zip(g) {
                *u = gk * scale;
            }
        }
        let feature_grad = if update_classifier {
            self.classifier.backward(&trace.classifier_cache, &upstream)?
        } else {
            self.classifier.input_grad(&trace.classifier_cache, &upstream)?
        };
        self.generator.backward(&trace.generator_cache, &feature_grad)?;
        Ok(loss)
    }

    /// Backpropagates a gradient with respect to the features of `trace`
    /// into the generator only.
    pub fn backward_generator(&mut self, trace: &ForwardTrace, feature_grad: &Matrix) -> Result<()> {
        self.generator.backward(&trace.generator_cache, feature_grad)?;
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        self.generator.params_mut().zero_grads();
        self.classifier.params_mut().zero_grads();
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(SrdaError::ShapeError(format!("input has {} cols, model expects {}", x.cols(), self.input_dim())));
        }
        Ok(())
    }
}

pub(crate) fn softmax_rows(logits: &Matrix) -> Result<Matrix> {
    let mut out = Matrix::zeros(logits.rows(), logits.cols());
    for r in 0..logits.rows() {
        out.row_mut(r).copy_from_slice(&ops::softmax(logits.row(r))?);
    }
    Ok(out)
}

fn labeled_nll(probs: &Matrix, labels: &[usize], classes: usize) -> Result<f64> {
    if labels.len() != probs.rows() {
        return Err(SrdaError::ShapeError(format!("{} labels for {} rows", labels.len(), probs.rows())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(SrdaError::InvalidLabel { label: bad, classes });
    }
    let total: f64 = labels.iter().enumerate().map(|(i, &y)| -probs.get(i, y).max(PROB_FLOOR).ln()).sum();
    Ok(total / labels.len() as f64)
}

fn mean_entropy(probs: &Matrix) -> f64 {
    probs.row_iter().map(ops::entropy).sum::<f64>() / probs.rows() as f64
}
