use super::matrix::Matrix;
use crate::error::{Result, SrdaError};

/// One named parameter tensor with its gradient buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub name: String,
    pub values: Matrix,
    pub grads: Matrix,
}

impl Segment {
    pub fn new(name: impl Into<String>, values: Matrix) -> Self {
        let grads = Matrix::zeros(values.rows(), values.cols());
        Self { name: name.into(), values, grads }
    }
}

/// Ordered parameter segments. Each layer's weight and bias occupy one
/// segment apiece.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    segments: Vec<Segment>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, segment: Segment) -> usize {
        self.segments.push(segment);
        self.segments.len() - 1
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segments_mut(&mut self) -> &mut [Segment] {
        &mut self.segments
    }

    pub fn segment(&self, idx: usize) -> &Segment {
        &self.segments[idx]
    }

    pub fn segment_mut(&mut self, idx: usize) -> &mut Segment {
        &mut self.segments[idx]
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.segments.iter().map(|s| s.values.as_slice().len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for s in &mut self.segments {
            s.grads.as_mut_slice().fill(0.0);
        }
    }

    /// Adds `grad` into the gradient buffer of segment `idx`.
    pub fn accumulate(&mut self, idx: usize, grad: &Matrix) -> Result<()> {
        let seg = &mut self.segments[idx];
        if seg.grads.shape() != grad.shape() {
            return Err(SrdaError::ShapeError(format!(
                "gradient {:?} for segment {} of shape {:?}",
                grad.shape(),
                seg.name,
                seg.grads.shape()
            )));
        }
        for (g, &d) in seg.grads.as_mut_slice().iter_mut().zip(grad.as_slice()) {
            *g += d;
        }
        Ok(())
    }

    /// Copies of every gradient buffer, in segment order.
    pub fn grads(&self) -> Vec<Matrix> {
        self.segments.iter().map(|s| s.grads.clone()).collect()
    }

    pub fn grads_finite(&self) -> bool {
        self.segments.iter().all(|s| s.grads.is_finite())
    }

    /// FNV-1a over the bit patterns of every value. Equal checksums mean
    /// bit-identical parameters for all practical purposes.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for s in &self.segments {
            for v in s.values.as_slice() {
                for b in v.to_bits().to_le_bytes() {
                    h ^= u64::from(b);
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
        h
    }

    /// Values only (gradients excluded) are compared bit for bit.
    pub fn values_bit_equal(&self, other: &ParamStore) -> bool {
        self.segments.len() == other.segments.len()
            && self.segments.iter().zip(&other.segments).all(|(a, b)| {
                a.name == b.name
                    && a.values.shape() == b.values.shape()
                    && a.values.as_slice().iter().zip(b.values.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}
