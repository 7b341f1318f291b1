//! Dense linear algebra, layer stacks with explicit backward passes,
//! optimizers, the seeded random source and the finite-difference oracle.

pub mod gradcheck;
pub mod layer;
pub mod matrix;
pub mod ops;
pub mod optim;
pub mod params;
pub mod rng;

pub use gradcheck::{finite_diff_grad, finite_diff_vec, relative_error};
pub use layer::{layer_backward, layer_forward, Activation, Dense, LayerCache, LayerGrads, LayeredNet, NetCache};
pub use matrix::{dot, l2_norm, Matrix};
pub use ops::{argmax, cross_entropy, entropy, l2_normalize, one_hot, softmax};
pub use optim::{Optimizer, OptimizerKind};
pub use params::{ParamStore, Segment};
pub use rng::Rng;
