use super::params::ParamStore;
use crate::error::{Result, SrdaError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        }
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Optimizer state bound to one [`ParamStore`]. Moment buffers are sized
/// lazily on the first step.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    steps: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Self {
        Self { kind, steps: 0, first_moment: Vec::new(), second_moment: Vec::new() }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update from the gradients currently stored in `params`.
    /// With `lr == 0` values are left bit-identical.
    pub fn step(&mut self, params: &mut ParamStore, lr: f64) -> Result<()> {
        if !params.grads_finite() {
            return Err(SrdaError::Diverged {
                step: self.steps,
                context: "non-finite gradient reached the optimizer".into(),
            });
        }
        self.steps += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                if lr != 0.0 {
                    for s in params.segments_mut() {
                        let grads = s.grads.as_slice().to_vec();
                        for (w, g) in s.values.as_mut_slice().iter_mut().zip(grads) {
                            *w -= lr * g;
                        }
                    }
                }
            }
            OptimizerKind::Adam => {
                if self.first_moment.is_empty() {
                    self.first_moment = params.segments().iter().map(|s| vec![0.0; s.values.as_slice().len()]).collect();
                    self.second_moment = self.first_moment.clone();
                }
                let t = self.steps as i32;
                let bias1 = 1.0 - BETA1.powi(t);
                let bias2 = 1.0 - BETA2.powi(t);
                for (si, s) in params.segments_mut().iter_mut().enumerate() {
                    let m = &mut self.first_moment[si];
                    let v = &mut self.second_moment[si];
                    let grads = s.grads.as_slice().to_vec();
                    for (i, (w, g)) in s.values.as_mut_slice().iter_mut().zip(grads).enumerate() {
                        m[i] = BETA1 * m[i] + (1.0 - BETA1) * g;
                        v[i] = BETA2 * v[i] + (1.0 - BETA2) * g * g;
                        if lr != 0.0 {
                            let m_hat = m[i] / bias1;
                            let v_hat = v[i] / bias2;
                            *w -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::matrix::Matrix;
    use crate::numeric::params::Segment;
    use crate::numeric::rng::Rng;

    fn single(w: f64, g: f64) -> ParamStore {
        let mut store = ParamStore::new();
        store.push(Segment::new("w", Matrix::from_vec(1, 1, vec![w]).unwrap()));
        store.accumulate(0, &Matrix::from_vec(1, 1, vec![g]).unwrap()).unwrap();
        store
    }

    #[test]
    fn zero_lr_is_bit_identical() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::Adam] {
            let mut store = single(-0.0, -3.0);
            let before = store.clone();
            Optimizer::new(kind).step(&mut store, 0.0).unwrap();
            assert!(store.values_bit_equal(&before));
        }
    }

    #[test]
    fn sgd_definition() {
        let mut store = single(1.0, 2.0);
        Optimizer::new(OptimizerKind::Sgd).step(&mut store, 0.1).unwrap();
        assert!((store.segment(0).values.get(0, 0) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        // t = 1: m̂ = g, v̂ = g², update = lr·g/(|g| + 1e-8)
        for g in [1e-3, 1e3, -1e3] {
            let mut store = single(0.0, g);
            Optimizer::new(OptimizerKind::Adam).step(&mut store, 0.01).unwrap();
            let moved = store.segment(0).values.get(0, 0);
            let expected = -0.01 * g / (g.abs() + 1e-8);
            assert!((moved - expected).abs() < 1e-15, "g={g}: {moved} vs {expected}");
            assert!((moved.abs() - 0.01).abs() < 1e-7);
        }
    }

    #[test]
    fn non_finite_gradient_is_divergence() {
        let mut store = single(1.0, f64::NAN);
        let err = Optimizer::new(OptimizerKind::Adam).step(&mut store, 0.1).unwrap_err();
        assert!(matches!(err, SrdaError::Diverged { .. }));
    }

    #[test]
    fn identical_seeds_identical_trajectories() {
        let run = |seed: u64| {
            let mut rng = Rng::new(seed);
            let mut store = ParamStore::new();
            store.push(Segment::new("w", Matrix::from_vec(2, 3, rng.normal_vec(6)).unwrap()));
            let mut opt = Optimizer::new(OptimizerKind::Adam);
            for _ in 0..25 {
                store.zero_grads();
                let g = Matrix::from_vec(2, 3, rng.normal_vec(6)).unwrap();
                store.accumulate(0, &g).unwrap();
                opt.step(&mut store, 1e-2).unwrap();
            }
            store
        };
        assert!(run(11).values_bit_equal(&run(11)));
        assert!(!run(11).values_bit_equal(&run(12)));
    }
}
