//! Cross-entropy over identity logits plus batch-hard triplet loss.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{FusionError, Result};

pub const DEFAULT_MARGIN: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossValues {
    pub total: f64,
    pub ce: f64,
    pub triplet: f64,
}

/// Mean negative log-softmax of the true class and its gradient.
pub fn cross_entropy(logits: &DMatrix<f64>, labels: &[usize]) -> Result<(f64, DMatrix<f64>)> {
    let (b, c) = logits.shape();
    if labels.len() != b || b == 0 {
        return Err(FusionError::Input(format!("{} labels for {b} logit rows", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
        return Err(FusionError::Input(format!("label {bad} out of range for {c} classes")));
    }
    let mut loss = 0.0;
    let mut grad = DMatrix::zeros(b, c);
    for (r, &y) in labels.iter().enumerate() {
        let row = logits.row(r);
        let m = row.max();
        let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
        let lse = m + z.ln();
        loss += lse - logits[(r, y)];
        for k in 0..c {
            grad[(r, k)] = ((logits[(r, k)] - lse).exp() - if k == y { 1.0 } else { 0.0 }) / b as f64;
        }
    }
    Ok((loss / b as f64, grad))
}

/// Batch-hard triplet loss on Euclidean distances: per anchor the farthest
/// same-label sample and the nearest other-label sample. Returns the mean,
/// its gradient and the per-anchor terms.
pub fn batch_hard_triplet(
    emb: &DMatrix<f64>,
    labels: &[usize],
    margin: f64,
) -> Result<(f64, DMatrix<f64>, Vec<f64>)> {
    let b = emb.nrows();
    if labels.len() != b {
        return Err(FusionError::Input(format!("{} labels for {b} embeddings", labels.len())));
    }
    let mut distinct = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(FusionError::Config("triplet loss needs at least two identities in the batch".into()));
    }
    let dist = |i: usize, j: usize| (emb.row(i) - emb.row(j)).norm();
    let mut per_anchor = Vec::with_capacity(b);
    let mut grad = DMatrix::zeros(b, emb.ncols());
    for a in 0..b {
        let pos = (0..b)
            .filter(|&p| p != a && labels[p] == labels[a])
            .map(|p| (dist(a, p), p))
            .max_by(|x, y| x.0.total_cmp(&y.0).then(y.1.cmp(&x.1)));
        let Some((dp, p)) = pos else {
            return Err(FusionError::Config(format!(
                "identity {} has a single sample in the batch",
                labels[a]
            )));
        };
        let (dn, n) = (0..b)
            .filter(|&n| labels[n] != labels[a])
            .map(|n| (dist(a, n), n))
            .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)))
            .expect("two identities present");
        let l = dp - dn + margin;
        if l > 0.0 {
            per_anchor.push(l);
            let s = 1.0 / b as f64;
            if dp > 0.0 {
                let g = (emb.row(a) - emb.row(p)) * (s / dp);
                let mut ra = grad.row_mut(a);
                ra += &g;
                let mut rp = grad.row_mut(p);
                rp -= &g;
            }
            if dn > 0.0 {
                let g = (emb.row(a) - emb.row(n)) * (s / dn);
                let mut ra = grad.row_mut(a);
                ra -= &g;
                let mut rn = grad.row_mut(n);
                rn += &g;
            }
        } else {
            per_anchor.push(0.0);
        }
    }
    Ok((per_anchor.iter().sum::<f64>() / b as f64, grad, per_anchor))
}

/// Cross-entropy plus triplet loss; returns the values and the gradients
/// with respect to the embeddings and the logits.
pub fn losses(
    emb: &DMatrix<f64>,
    logits: &DMatrix<f64>,
    labels: &[usize],
    margin: f64,
) -> Result<(LossValues, DMatrix<f64>, DMatrix<f64>)> {
    let (ce, d_logits) = cross_entropy(logits, labels)?;
    let (triplet, d_emb, _) = batch_hard_triplet(emb, labels, margin)?;
    Ok((
        LossValues {
            total: ce + triplet,
            ce,
            triplet,
        },
        d_emb,
        d_logits,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_c() {
        let (ce, _) = cross_entropy(&DMatrix::zeros(3, 5), &[0, 4, 2]).unwrap();
        assert!((ce - 5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn hand_computed_triplets() {
        let e = DMatrix::from_column_slice(4, 1, &[0.0, 0.1, 1.0, 1.1]);
        let labels = [0, 0, 1, 1];
        let (t, _, _) = batch_hard_triplet(&e, &labels, 0.3).unwrap();
        assert_eq!(t, 0.0);
        let (t, _, per) = batch_hard_triplet(&e, &labels, 1.0).unwrap();
        // inner anchors: 0.1 - 0.9 + 1; outer anchors: 0.1 - 1.0 + 1
        let want = [0.1, 0.2, 0.2, 0.1];
        for (a, b) in per.iter().zip(want) {
            assert!((a - b).abs() < 1e-12, "{per:?}");
        }
        assert!((t - 0.15).abs() < 1e-12);
    }

    #[test]
    fn coincident_positives_far_negatives() {
        let e = DMatrix::from_column_slice(4, 1, &[0.0, 0.0, 5.0, 5.0]);
        assert_eq!(batch_hard_triplet(&e, &[0, 0, 1, 1], 0.3).unwrap().0, 0.0);
    }

    #[test]
    fn single_identity_is_rejected() {
        let e = DMatrix::zeros(3, 2);
        assert!(matches!(batch_hard_triplet(&e, &[1, 1, 1], 0.3), Err(FusionError::Config(_))));
    }
}
