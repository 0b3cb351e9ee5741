//! Loss terms on the tape. Probabilities enter every logarithm through
//! [`Var::ln_clamped`] at the scalar type's `log_eps`.

use crate::error::{Result, TrainError};
use crate::nn::Var;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

fn ln<'t, T: Scalar>(x: Var<'t, T>) -> Var<'t, T> {
    x.ln_clamped(T::log_eps())
}

/// `−mean[y ln ŷ + (1 − y) ln(1 − ŷ)]` over an `n × 1` column.
pub fn binary_cross_entropy<'t, T: Scalar>(yhat: Var<'t, T>, labels: &[u8]) -> Result<Var<'t, T>> {
    if labels.is_empty() {
        return Err(TrainError::EmptySplit("labelled batch").into());
    }
    let tape = yhat.tape();
    let y = Tensor::column_vector(labels.iter().map(|&l| T::of(f64::from(l))).collect());
    let not_y = y.map(|v| T::one() - v);
    let pos = tape.constant(y).mul(ln(yhat))?;
    let neg = tape.constant(not_y).mul(ln(yhat.one_minus()))?;
    Ok(pos.add(neg)?.mean().neg())
}

/// `L_c = α·BCE(source) + BCE(target)`. An empty source batch contributes
/// nothing; an empty target batch is an error.
pub fn classification_loss<'t, T: Scalar>(
    yhat_s: Var<'t, T>,
    y_s: &[u8],
    yhat_t: Var<'t, T>,
    y_t: &[u8],
    alpha: T,
) -> Result<Var<'t, T>> {
    if y_t.is_empty() {
        return Err(TrainError::EmptySplit("target batch").into());
    }
    let target = binary_cross_entropy(yhat_t, y_t)?;
    if y_s.is_empty() {
        return Ok(target);
    }
    Ok(binary_cross_entropy(yhat_s, y_s)?.scale(alpha).add(target)?)
}

/// Binary entropy `−p ln p − (1 − p) ln(1 − p)`, elementwise.
pub fn entropy<'t, T: Scalar>(p: Var<'t, T>) -> Result<Var<'t, T>> {
    let a = p.mul(ln(p))?;
    let q = p.one_minus();
    Ok(a.add(q.mul(ln(q))?)?.neg())
}

/// `z = (1 + H) ⊙ r`.
pub fn scale<'t, T: Scalar>(r: Var<'t, T>, h: Var<'t, T>) -> Result<Var<'t, T>> {
    Ok(r.mul(h.affine(T::one(), T::one()))?)
}

/// `−mean ln p_s − mean ln(1 − p_t)`; the shared form of the feature-wise
/// (`p` is `n × d`) and compound-wise (`q` is `n × 1`) discriminator losses.
pub fn domain_loss<'t, T: Scalar>(p_s: Var<'t, T>, p_t: Var<'t, T>) -> Result<Var<'t, T>> {
    if p_s.shape().0 == 0 || p_t.shape().0 == 0 {
        return Err(TrainError::EmptySplit("discriminator batch").into());
    }
    Ok(ln(p_s).mean().add(ln(p_t.one_minus()).mean())?.neg())
}

/// `L_l` from the per-feature source probabilities of both domains.
pub fn feature_disc_loss<'t, T: Scalar>(p_s: Var<'t, T>, p_t: Var<'t, T>) -> Result<Var<'t, T>> {
    domain_loss(p_s, p_t)
}

/// `L_g` from the per-compound source probabilities of both domains.
pub fn compound_disc_loss<'t, T: Scalar>(q_s: Var<'t, T>, q_t: Var<'t, T>) -> Result<Var<'t, T>> {
    domain_loss(q_s, q_t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tape;

    const LN2: f64 = std::f64::consts::LN_2;

    fn col<'t>(t: &'t Tape<f64>, xs: &[f64]) -> Var<'t, f64> {
        t.constant(Tensor::column_vector(xs.to_vec()))
    }

    #[test]
    fn bce_at_half() {
        let t = Tape::new();
        let l = classification_loss(col(&t, &[0.5, 0.5]), &[1, 0], col(&t, &[0.5]), &[1], 0.7).unwrap();
        assert!((l.item() - 1.7 * LN2).abs() < 1e-15);
    }

    #[test]
    fn bce_perfect_is_clamped() {
        let t = Tape::new();
        let l = classification_loss(col(&t, &[1.0]), &[1], col(&t, &[0.0]), &[0], 2.0).unwrap();
        let expected = 3.0 * -(1.0 - 1e-7f64).ln();
        assert!((l.item() - expected).abs() < 1e-15);
        assert!(l.item() < 1e-6);
    }

    #[test]
    fn zero_alpha_silences_source() {
        let t = Tape::new();
        let ys = t.leaf(Tensor::column_vector(vec![0.3, 0.8]));
        let l = classification_loss(ys, &[1, 0], col(&t, &[0.4]), &[1], 0.0).unwrap();
        assert_eq!(l.item(), -(0.4f64).ln());
        let g = t.backward(l).unwrap();
        assert!(g.wrt(ys).unwrap().data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn empty_target_rejected() {
        let t = Tape::new();
        assert!(classification_loss(col(&t, &[0.5]), &[1], col(&t, &[]), &[], 1.0).is_err());
    }

    #[test]
    fn entropy_values() {
        let t = Tape::new();
        let h = entropy(col(&t, &[0.5, 0.0, 1.0, 0.2])).unwrap().value();
        assert!((h.data()[0] - LN2).abs() < 1e-12);
        assert!(h.data()[1].abs() < 1e-5 && h.data()[2].abs() < 1e-5);
        let direct = -(0.2f64 * 0.2f64.ln() + 0.8 * 0.8f64.ln());
        assert!((h.data()[3] - direct).abs() < 1e-15);
    }

    #[test]
    fn scale_of_zero_is_zero() {
        let t = Tape::new();
        let z = scale(col(&t, &[0.0, 2.0]), col(&t, &[0.3, LN2])).unwrap().value();
        assert_eq!(z.data()[0], 0.0);
        assert!((z.data()[1] - 2.0 * (1.0 + LN2)).abs() < 1e-15);
    }

    #[test]
    fn discriminator_examples() {
        let t = Tape::new();
        let l = feature_disc_loss(col(&t, &[0.8]), col(&t, &[0.3])).unwrap();
        assert!((l.item() - (-(0.8f64).ln() - (0.7f64).ln())).abs() < 1e-15);
        assert!((l.item() - 0.5798).abs() < 1e-4);
        let g = compound_disc_loss(col(&t, &[0.9]), col(&t, &[0.2])).unwrap();
        assert!((g.item() - 0.3285).abs() < 1e-4);
        let half = t.constant(Tensor::filled(3, 4, 0.5));
        assert!((feature_disc_loss(half, half).unwrap().item() - 2.0 * LN2).abs() < 1e-15);
    }
}
