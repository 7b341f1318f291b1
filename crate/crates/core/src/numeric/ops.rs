//! Probability-space primitives shared by every loss.

use super::matrix::l2_norm;
use crate::error::{Result, SrdaError};

/// Probabilities below this are clamped before taking a log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Norms below this are treated as zero.
pub const NORM_FLOOR: f64 = 1e-12;

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(SrdaError::InvalidInput("softmax of non-finite logits".into()));
    }
    Ok(softmax_unchecked(logits))
}

pub(crate) fn softmax_unchecked(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    out
}

fn clamped_ln(q: f64) -> f64 {
    q.max(PROB_FLOOR).ln()
}

/// `D(q, p) = −Σ p_k ln q_k`, with `p` the fixed reference distribution.
pub fn cross_entropy(q: &[f64], p: &[f64]) -> Result<f64> {
    if q.len() != p.len() {
        return Err(SrdaError::ShapeError(format!(
            "cross_entropy over {} vs {} classes",
            q.len(),
            p.len()
        )));
    }
    Ok(q.iter().zip(p).map(|(&qk, &pk)| -pk * clamped_ln(qk)).sum())
}

/// Gradient of `cross_entropy(softmax(z), p)` with respect to the logits `z`,
/// given `q = softmax(z)`. Clamped classes contribute no gradient through
/// their log, which makes this the exact derivative of the clamped loss.
pub fn cross_entropy_logit_grad(q: &[f64], p: &[f64]) -> Vec<f64> {
    let live_mass: f64 = q.iter().zip(p).filter(|(&qk, _)| qk >= PROB_FLOOR).map(|(_, &pk)| pk).sum();
    q.iter()
        .zip(p)
        .map(|(&qj, &pj)| {
            let direct = if qj >= PROB_FLOOR { pj } else { 0.0 };
            qj * live_mass - direct
        })
        .collect()
}

/// Shannon entropy `−Σ p ln p` (clamped log).
pub fn entropy(p: &[f64]) -> f64 {
    p.iter().map(|&pk| -pk * clamped_ln(pk)).sum()
}

/// Gradient of `entropy(softmax(z))` with respect to `z`, given `p = softmax(z)`.
pub fn entropy_logit_grad(p: &[f64]) -> Vec<f64> {
    // d/dz_j of −Σ p_k ln⁺(p_k), where ln⁺ is the clamped log
    let dh_dp: Vec<f64> = p
        .iter()
        .map(|&pk| if pk >= PROB_FLOOR { -(pk.ln() + 1.0) } else { -PROB_FLOOR.ln() })
        .collect();
    let weighted: f64 = p.iter().zip(&dh_dp).map(|(a, b)| a * b).sum();
    p.iter().zip(&dh_dp).map(|(&pj, &gj)| pj * (gj - weighted)).collect()
}

/// Scales `v` to unit L2 norm.
pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>> {
    let norm = l2_norm(v);
    if !(norm >= NORM_FLOOR) {
        return Err(SrdaError::ZeroNorm);
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn one_hot(k: usize, classes: usize) -> Vec<f64> {
    let mut v = vec![0.0; classes];
    v[k] = 1.0;
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn softmax_examples() {
        let third = 1.0 / 3.0;
        assert!(close(&softmax(&[0.0, 0.0, 0.0]).unwrap(), &[third; 3], 1e-15));
        let big = softmax(&[1000.0, 0.0]).unwrap();
        assert!(big.iter().all(|v| v.is_finite()));
        assert!((big[0] - 1.0).abs() < 1e-15 && big[1] < 1e-300);
        // e^x / Σ e^x evaluated at 30 digits
        assert!(close(&softmax(&[1.0, 2.0, 3.0]).unwrap(), &[0.09003057, 0.24472847, 0.66524096], 1e-5));
    }

    #[test]
    fn softmax_rejects_non_finite() {
        assert!(matches!(softmax(&[f64::NAN, 0.0]), Err(SrdaError::InvalidInput(_))));
        assert!(matches!(softmax(&[f64::INFINITY]), Err(SrdaError::InvalidInput(_))));
    }

    #[test]
    fn cross_entropy_examples() {
        assert_eq!(cross_entropy(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        let uniform = [0.25; 4];
        for p in [[1.0, 0.0, 0.0, 0.0], [0.1, 0.2, 0.3, 0.4]] {
            assert!((cross_entropy(&uniform, &p).unwrap() - 4f64.ln()).abs() < 1e-12);
        }
        let v = cross_entropy(&[0.7, 0.3], &[0.5, 0.5]).unwrap();
        assert!((v - 0.780_323_874_132_334_3).abs() < 1e-12, "{v}");
        assert!(matches!(cross_entropy(&[1.0], &[0.5, 0.5]), Err(SrdaError::ShapeError(_))));
    }

    #[test]
    fn cross_entropy_stays_finite_at_zero_probability() {
        let v = cross_entropy(&[0.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((v + PROB_FLOOR.ln()).abs() < 1e-12);
    }

    #[test]
    fn l2_normalize_examples() {
        assert!(close(&l2_normalize(&[3.0, 4.0]).unwrap(), &[0.6, 0.8], 1e-15));
        assert_eq!(l2_normalize(&[2.0, 0.0, 0.0]).unwrap(), vec![1.0, 0.0, 0.0]);
        assert!(matches!(l2_normalize(&[0.0, 0.0]), Err(SrdaError::ZeroNorm)));
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.2, 0.5, 0.3]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    fn logits_strategy() -> impl Strategy<Value = Vec<f64>> {
        (2usize..8).prop_flat_map(|k| proptest::collection::vec(-30.0f64..30.0, k))
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one_and_is_shift_invariant(z in logits_strategy(), c in -100.0f64..100.0) {
            let p = softmax(&z).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(p.iter().all(|&v| v > 0.0));
            let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
            let ps = softmax(&shifted).unwrap();
            for (a, b) in p.iter().zip(&ps) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn gibbs_inequality(zq in logits_strategy(), seed in any::<u64>()) {
            let k = zq.len();
            let zp: Vec<f64> = (0..k).map(|i| ((seed.rotate_left(i as u32 * 7) % 1000) as f64) / 100.0).collect();
            let q = softmax(&zq).unwrap();
            let p = softmax(&zp).unwrap();
            prop_assert!(cross_entropy(&q, &p).unwrap() >= entropy(&p) - 1e-12);
        }

        #[test]
        fn l2_normalize_gives_unit_norm(v in proptest::collection::vec(-1e3f64..1e3, 1..10)) {
            prop_assume!(l2_norm(&v) > 1e-6);
            let u = l2_normalize(&v).unwrap();
            prop_assert!((l2_norm(&u) - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn logit_gradients_match_central_differences() {
        let z = [0.3, -1.2, 2.0, 0.1];
        let p = [0.1, 0.2, 0.3, 0.4];
        let h = 1e-6;
        let q = softmax(&z).unwrap();
        let ce = cross_entropy_logit_grad(&q, &p);
        let ent = entropy_logit_grad(&q);
        for j in 0..4 {
            let mut up = z;
            let mut dn = z;
            up[j] += h;
            dn[j] -= h;
            let (qu, qd) = (softmax(&up).unwrap(), softmax(&dn).unwrap());
            let fd_ce = (cross_entropy(&qu, &p).unwrap() - cross_entropy(&qd, &p).unwrap()) / (2.0 * h);
            let fd_ent = (entropy(&qu) - entropy(&qd)) / (2.0 * h);
            assert!((fd_ce - ce[j]).abs() < 1e-8);
            assert!((fd_ent - ent[j]).abs() < 1e-8);
        }
    }
}
