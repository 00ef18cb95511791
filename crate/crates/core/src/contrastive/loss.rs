use crate::error::{Error, Result};
use crate::vecmath;

fn check(vectors: &[&[f64]]) -> Result<()> {
    let dim = vectors[0].len();
    for v in vectors {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("loss input".into()));
        }
    }
    Ok(())
}

/// `max(||q - p|| - ||q - n|| + margin, 0)` with L2 distances.
pub fn triplet_loss(q: &[f64], p: &[f64], n: &[f64], margin: f64) -> Result<f64> {
    check(&[q, p, n])?;
    Ok((vecmath::l2_distance(q, p) - vecmath::l2_distance(q, n) + margin).max(0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletGrad {
    pub loss: f64,
    pub query: Vec<f64>,
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

/// Loss and gradients of [`triplet_loss`]. The hinge contributes no gradient
/// when its argument is `<= 0`, and a zero distance contributes none either.
pub fn triplet_loss_grad(q: &[f64], p: &[f64], n: &[f64], margin: f64) -> Result<TripletGrad> {
    check(&[q, p, n])?;
    let (d_pos, d_neg) = (vecmath::l2_distance(q, p), vecmath::l2_distance(q, n));
    let arg = d_pos - d_neg + margin;
    let dim = q.len();
    let mut g = TripletGrad {
        loss: arg.max(0.0),
        query: vec![0.0; dim],
        positive: vec![0.0; dim],
        negative: vec![0.0; dim],
    };
    if arg <= 0.0 {
        return Ok(g);
    }
    for i in 0..dim {
        let up = if d_pos > 0.0 { (q[i] - p[i]) / d_pos } else { 0.0 };
        let un = if d_neg > 0.0 { (q[i] - n[i]) / d_neg } else { 0.0 };
        g.query[i] = up - un;
        g.positive[i] = -up;
        g.negative[i] = un;
    }
    Ok(g)
}

/// Multiple negatives ranking loss with in-batch negatives: mean over rows
/// of `-log softmax_j(scale * cos(q_i, d_j))` at `j = i`.
pub fn mnr_loss(queries: &[Vec<f64>], docs: &[Vec<f64>], scale: f64) -> Result<f64> {
    if queries.len() != docs.len() {
        return Err(Error::DimensionMismatch {
            expected: queries.len(),
            actual: docs.len(),
        });
    }
    let targets: Vec<usize> = (0..queries.len()).collect();
    Ok(mnr_loss_grad(queries, docs, &targets, scale)?.loss)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MnrGrad {
    pub loss: f64,
    pub queries: Vec<Vec<f64>>,
    pub docs: Vec<Vec<f64>>,
}

/// Generalized MNR loss: query `i` must pick candidate `targets[i]` out of
/// every row of `docs`.
pub fn mnr_loss_grad(queries: &[Vec<f64>], docs: &[Vec<f64>], targets: &[usize], scale: f64) -> Result<MnrGrad> {
    if queries.is_empty() {
        return Err(Error::EmptyInput("mnr loss needs at least one query".into()));
    }
    if targets.len() != queries.len() {
        return Err(Error::DimensionMismatch {
            expected: queries.len(),
            actual: targets.len(),
        });
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= docs.len()) {
        return Err(Error::Config(format!("target {t} outside {} candidates", docs.len())));
    }
    let dim = queries[0].len();
    let all: Vec<&[f64]> = queries.iter().chain(docs).map(Vec::as_slice).collect();
    check(&all)?;
    for (i, v) in all.iter().enumerate() {
        if vecmath::norm(v) == 0.0 {
            return Err(Error::ZeroNorm(i));
        }
    }

    let n = queries.len() as f64;
    let mut out = MnrGrad {
        loss: 0.0,
        queries: vec![vec![0.0; dim]; queries.len()],
        docs: vec![vec![0.0; dim]; docs.len()],
    };
    for (i, q) in queries.iter().enumerate() {
        let sims: Vec<(f64, Vec<f64>, Vec<f64>)> = docs.iter().map(|d| vecmath::cosine_grad(q, d)).collect();
        let logits: Vec<f64> = sims.iter().map(|s| scale * s.0).collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        out.loss += (max + total.ln() - logits[targets[i]]) / n;
        for (j, (_, gq, gd)) in sims.iter().enumerate() {
            let coef = (exps[j] / total - f64::from(u8::from(j == targets[i]))) * scale / n;
            vecmath::add_scaled(&mut out.queries[i], gq, coef);
            vecmath::add_scaled(&mut out.docs[j], gd, coef);
        }
    }
    if !out.loss.is_finite() {
        return Err(Error::NonFinite("mnr loss".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_positive_clears_the_margin() {
        let l = triplet_loss(&[0.0, 0.0], &[0.0, 0.0], &[2.0, 0.0], 1.0).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn positive_equal_to_negative_costs_the_margin() {
        let l = triplet_loss(&[0.3, -1.0], &[2.0, 5.0], &[2.0, 5.0], 0.7).unwrap();
        assert_eq!(l, 0.7);
    }

    #[test]
    fn hand_arithmetic() {
        let l = triplet_loss(&[0.0, 0.0], &[3.0, 0.0], &[0.0, 1.0], 1.0).unwrap();
        assert_eq!(l, 3.0);
    }

    #[test]
    fn triplet_errors() {
        assert!(triplet_loss(&[0.0], &[0.0, 1.0], &[0.0], 1.0).is_err());
        assert!(triplet_loss(&[f64::NAN], &[0.0], &[0.0], 1.0).is_err());
    }

    #[test]
    fn mnr_single_row_is_zero() {
        assert_eq!(mnr_loss(&[vec![1.0, 2.0]], &[vec![3.0, -1.0]], 20.0).unwrap(), 0.0);
    }

    #[test]
    fn mnr_two_rows_hand_softmax() {
        let q = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let l = mnr_loss(&q, &q, 1.0).unwrap();
        let want = -(1f64.exp() / (1f64.exp() + 1.0)).ln();
        assert!((l - want).abs() < 1e-12);
        assert!((l - 0.3133).abs() < 1e-4);
    }

    #[test]
    fn mnr_indistinguishable_docs_is_ln2() {
        let q = vec![vec![1.0, 0.3], vec![-0.2, 1.0]];
        let d = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        assert!((mnr_loss(&q, &d, 20.0).unwrap() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn mnr_zero_row_is_named() {
        let err = mnr_loss(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[vec![1.0, 0.0], vec![0.0, 0.0]], 1.0).unwrap_err();
        assert!(matches!(err, Error::ZeroNorm(3)));
    }
}
