//! Relative L2 loss, averaged over samples.

use able_core::tensor::numel;
use able_core::{Tape, Tensor, Var};

use crate::error::{Result, TrainError};

fn target_norms(target: &Tensor) -> Result<Vec<f64>> {
    let shape = target.shape();
    if shape.is_empty() {
        return Err(TrainError::Domain("loss needs a batch axis".into()));
    }
    let per = numel(&shape[1..]);
    let v = target.as_real()?;
    (0..shape[0])
        .map(|b| {
            let n = v[b * per..(b + 1) * per].iter().map(|x| x * x).sum::<f64>().sqrt();
            if n == 0.0 {
                Err(TrainError::Domain(format!("target sample {b} has zero norm")))
            } else {
                Ok(n)
            }
        })
        .collect()
}

/// Mean that does not depend on the order of `v`.
pub fn order_free_mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s.iter().sum::<f64>() / s.len() as f64
}

/// `‖pred_b − target_b‖ / ‖target_b‖` for every sample `b`.
pub fn relative_l2_per_sample(pred: &Tensor, target: &Tensor) -> Result<Vec<f64>> {
    if pred.shape() != target.shape() {
        return Err(TrainError::Domain(format!(
            "prediction {:?} and target {:?} differ in shape",
            pred.shape(),
            target.shape()
        )));
    }
    let norms = target_norms(target)?;
    let per = numel(&target.shape()[1..]);
    let (p, t) = (pred.as_real()?, target.as_real()?);
    Ok(norms
        .iter()
        .enumerate()
        .map(|(b, n)| {
            let r = b * per..(b + 1) * per;
            p[r.clone()].iter().zip(&t[r]).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt() / n
        })
        .collect())
}

pub fn relative_l2(pred: &Tensor, target: &Tensor) -> Result<f64> {
    Ok(order_free_mean(&relative_l2_per_sample(pred, target)?))
}

/// Differentiable loss: returns `(per-sample errors, batch mean)`.
pub fn relative_l2_tape(tape: &mut Tape, pred: Var, target: &Tensor) -> Result<(Var, Var)> {
    if tape.shape(pred) != target.shape() {
        return Err(TrainError::Domain(format!(
            "prediction {:?} and target {:?} differ in shape",
            tape.shape(pred),
            target.shape()
        )));
    }
    let inv: Vec<f64> = target_norms(target)?.iter().map(|n| 1.0 / n).collect();
    let b = inv.len();
    let t = tape.constant(target.clone());
    let diff = tape.sub(pred, t)?;
    let sq = tape.batch_sq_norm(diff)?;
    let norm = tape.sqrt(sq)?;
    let scale = tape.constant(Tensor::real(&[b], inv)?);
    let per = tape.mul(norm, scale)?;
    let mean = tape.mean(per)?;
    Ok((per, mean))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        let t = Tensor::from_fn(&[3, 1, 8], |i| (i as f64).sin() + 2.0);
        assert_eq!(relative_l2(&t, &t).unwrap(), 0.0);
        assert!((relative_l2(&t.scale(0.0), &t).unwrap() - 1.0).abs() < 1e-15);
        assert!((relative_l2(&t.scale(2.0), &t).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_target_is_an_error() {
        let mut t = Tensor::from_fn(&[2, 1, 4], |_| 1.0);
        t.as_real_mut().unwrap()[4..].iter_mut().for_each(|x| *x = 0.0);
        assert!(matches!(relative_l2(&t, &t), Err(TrainError::Domain(_))));
    }

    #[test]
    fn tape_matches_pure() {
        let t = Tensor::from_fn(&[2, 1, 4], |i| i as f64 - 1.5);
        let p = Tensor::from_fn(&[2, 1, 4], |i| (i as f64).cos());
        let mut tape = Tape::new();
        let pv = tape.leaf(p.clone());
        let (_, mean) = relative_l2_tape(&mut tape, pv, &t).unwrap();
        assert!((tape.value(mean).item().unwrap() - relative_l2(&p, &t).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn order_free_mean_is_permutation_invariant() {
        let v = [0.1, 1e-17, 0.3, 7.0, 1e-9];
        let mut w = v;
        w.reverse();
        assert_eq!(order_free_mean(&v).to_bits(), order_free_mean(&w).to_bits());
    }
}
