//! Temperature-scaled contrastive loss over paired projections.
//!
//! Input is 2N projection vectors laid out as view pairs: the partner of
//! index `i` is `i ^ 1`, i.e. `[g0·v0, g0·v1, g1·v0, g1·v1, …]`. Each anchor
//! contributes
//!
//! ```text
//! ℓ_i = −log( exp(cos(p̂_i, p̂_partner)/τ) / Σ_{k≠i} exp(cos(p̂_i, p̂_k)/τ) )
//! ```
//!
//! where the denominator ranges over every other projection in the batch,
//! and the reported loss is the mean over all 2N anchors. The analytic
//! per-projection gradients are returned alongside.

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm};

/// Partner index under the interleaved pair layout.
pub fn partner(i: usize) -> usize {
    i ^ 1
}

pub fn contrastive_loss(projections: &[Vec<f64>], tau: f64) -> Result<(f64, Vec<Vec<f64>>)> {
    if tau <= 0.0 {
        return Err(Error::Usage(format!("temperature must be positive, got {tau}")));
    }
    let m = projections.len();
    if m < 4 || m % 2 != 0 {
        return Err(Error::Usage(format!(
            "contrastive loss needs 2N projections from N >= 2 graphs, got {m}"
        )));
    }
    let dim = projections[0].len();
    let mut norms = Vec::with_capacity(m);
    let mut units: Vec<Vec<f64>> = Vec::with_capacity(m);
    for (i, p) in projections.iter().enumerate() {
        if p.len() != dim {
            return Err(Error::Data("projection dimensions disagree".into()));
        }
        let n = norm(p);
        if n == 0.0 || !n.is_finite() {
            return Err(Error::Numeric(format!(
                "projection {i} has norm {n}; cosine similarity undefined"
            )));
        }
        norms.push(n);
        units.push(p.iter().map(|v| v / n).collect());
    }

    // Cosine matrix.
    let mut cos = vec![vec![0.0; m]; m];
    for i in 0..m {
        for k in (i + 1)..m {
            let c = dot(&units[i], &units[k]);
            cos[i][k] = c;
            cos[k][i] = c;
        }
    }

    let mut loss = 0.0;
    // dL/dc accumulated over both anchors touching each ordered pair.
    let mut d_cos = vec![vec![0.0; m]; m];
    let anchor_weight = 1.0 / m as f64;
    for i in 0..m {
        let j = partner(i);
        // log-sum-exp over k != i, max-shifted
        let max_l = (0..m)
            .filter(|&k| k != i)
            .map(|k| cos[i][k] / tau)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for k in 0..m {
            if k != i {
                denom += ((cos[i][k] / tau) - max_l).exp();
            }
        }
        let lse = max_l + denom.ln();
        loss += anchor_weight * (lse - cos[i][j] / tau);
        for k in 0..m {
            if k == i {
                continue;
            }
            let softmax = ((cos[i][k] / tau) - max_l).exp() / denom;
            let mut g = softmax;
            if k == j {
                g -= 1.0;
            }
            d_cos[i][k] += anchor_weight * g / tau;
        }
    }

    // Chain through cosine and the normalization.
    let mut d_units = vec![vec![0.0; dim]; m];
    for i in 0..m {
        for k in 0..m {
            let g = d_cos[i][k];
            if g != 0.0 {
                axpy(&mut d_units[i], &units[k], g);
                axpy(&mut d_units[k], &units[i], g);
            }
        }
    }
    let grads = (0..m)
        .map(|i| {
            let du = &d_units[i];
            let u = &units[i];
            let radial = dot(du, u);
            du.iter()
                .zip(u)
                .map(|(d, ui)| (d - radial * ui) / norms[i])
                .collect()
        })
        .collect();

    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle: evaluate the loss formula directly, no shared
    /// code with the implementation (no max-shift, no unit caching).
    fn oracle_loss(projections: &[Vec<f64>], tau: f64) -> f64 {
        let m = projections.len();
        let cos = |a: &[f64], b: &[f64]| {
            let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            d / (na * nb)
        };
        let mut total = 0.0;
        for i in 0..m {
            let j = i ^ 1;
            let num = (cos(&projections[i], &projections[j]) / tau).exp();
            let den: f64 = (0..m)
                .filter(|&k| k != i)
                .map(|k| (cos(&projections[i], &projections[k]) / tau).exp())
                .sum();
            total += -(num / den).ln();
        }
        total / m as f64
    }

    fn fixture_orthogonal_pairs() -> Vec<Vec<f64>> {
        vec![
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, 1.0],
        ]
    }

    #[test]
    fn worked_two_graph_example_matches_the_oracle() {
        // N=2, τ=1, identical pairs on orthogonal axes: each anchor's loss is
        // −log(e¹/(e¹+2e⁰)) and the mean equals it.
        let projs = fixture_orthogonal_pairs();
        let (loss, _) = contrastive_loss(&projs, 1.0).unwrap();
        let expected = -(1f64.exp() / (1f64.exp() + 2.0)).ln();
        assert!((loss - expected).abs() < 1e-12, "loss {loss} vs formula {expected}");
        assert!((loss - oracle_loss(&projs, 1.0)).abs() < 1e-12);
    }

    #[test]
    fn all_identical_projections_give_log_2n_minus_1() {
        for n in [2usize, 3, 5] {
            let projs = vec![vec![0.3, -0.7, 0.2]; 2 * n];
            let (loss, grads) = contrastive_loss(&projs, 0.7).unwrap();
            let expected = ((2 * n - 1) as f64).ln();
            assert!(
                (loss - expected).abs() < 1e-10,
                "n={n}: {loss} vs {expected}"
            );
            // With every similarity equal the gradient field is flat.
            for g in grads {
                for v in g {
                    assert!(v.abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn gradients_match_central_finite_differences() {
        // Deterministic pseudo-random batch of 4 projections in 3 dims.
        let mut projs: Vec<Vec<f64>> = Vec::new();
        let mut state = 0.37f64;
        for _ in 0..4 {
            let mut v = Vec::new();
            for _ in 0..3 {
                state = (state * 997.13).fract();
                v.push(state - 0.5);
            }
            projs.push(v);
        }
        let tau = 0.5;
        let (_, grads) = contrastive_loss(&projs, tau).unwrap();
        let h = 1e-6;
        for i in 0..projs.len() {
            for d in 0..projs[i].len() {
                let mut plus = projs.clone();
                plus[i][d] += h;
                let mut minus = projs.clone();
                minus[i][d] -= h;
                let fd = (oracle_loss(&plus, tau) - oracle_loss(&minus, tau)) / (2.0 * h);
                let a = grads[i][d];
                let rel = (fd - a).abs() / fd.abs().max(a.abs()).max(1e-8);
                assert!(
                    rel < 1e-5,
                    "grad[{i}][{d}]: analytic {a} vs fd {fd} (rel {rel})"
                );
            }
        }
    }

    #[test]
    fn zero_norm_projection_is_rejected() {
        let projs = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
        ];
        assert!(matches!(
            contrastive_loss(&projs, 1.0),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn batch_shape_is_validated() {
        assert!(contrastive_loss(&[vec![1.0], vec![1.0]], 1.0).is_err());
        let odd: Vec<Vec<f64>> = (0..5).map(|_| vec![1.0]).collect();
        assert!(contrastive_loss(&odd, 1.0).is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn loss_is_finite_and_respects_the_cosine_bound(
                raw in prop::collection::vec(-5.0f64..5.0, 24),
                tau in 0.2f64..2.0,
            ) {
                // 8 projections of dim 3; nudge away from exact zero norms.
                let projs: Vec<Vec<f64>> = raw
                    .chunks(3)
                    .map(|c| {
                        let mut v = c.to_vec();
                        if v.iter().all(|x| x.abs() < 1e-9) {
                            v[0] = 1.0;
                        }
                        v
                    })
                    .collect();
                let n2 = projs.len();
                let (loss, _) = contrastive_loss(&projs, tau).unwrap();
                prop_assert!(loss.is_finite());
                // cos ∈ [−1,1] bounds each anchor below by log(2N−1) − 2/τ.
                let bound = ((n2 - 1) as f64).ln() - 2.0 / tau;
                prop_assert!(loss >= bound - 1e-9, "loss {loss} under bound {bound}");
            }
        }
    }
}
