//! Deformable attention: every query samples `K` bilinearly interpolated
//! value features per head at learned offsets from its own cell.

use nalgebra::DMatrix;

use crate::feature_map::check_same;
use crate::params::{AttentionConfig, AttentionParams};
use crate::{FeatureMap, Result};

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct AttentionCache {
    pub offsets: DMatrix<f64>,
    /// Softmax weights, `N x (heads * K)`.
    pub weights: DMatrix<f64>,
    /// Concatenated head outputs before the output projection.
    pub heads: DMatrix<f64>,
}

struct Corner {
    row: usize,
    w: f64,
    dw_dx: f64,
    dw_dy: f64,
}

/// Bilinear corners of `(x, y)` (column, row in cells) that fall inside the
/// map; outside corners are dropped, which is zero padding.
fn corners(x: f64, y: f64, h: usize, w: usize) -> Vec<Corner> {
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let mut out = Vec::with_capacity(4);
    for (dx, dy) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)] {
        let (cx, cy) = (x0 + dx, y0 + dy);
        if cx < 0.0 || cy < 0.0 || cx >= w as f64 || cy >= h as f64 {
            continue;
        }
        let wx = if dx == 0.0 { 1.0 - fx } else { fx };
        let wy = if dy == 0.0 { 1.0 - fy } else { fy };
        let sx = if dx == 0.0 { -1.0 } else { 1.0 };
        let sy = if dy == 0.0 { -1.0 } else { 1.0 };
        out.push(Corner {
            row: cy as usize * w + cx as usize,
            w: wx * wy,
            dw_dx: sx * wy,
            dw_dy: wx * sy,
        });
    }
    out
}

pub fn deformable_attention(
    query: &FeatureMap,
    value: &FeatureMap,
    params: &AttentionParams,
    cfg: &AttentionConfig,
) -> Result<FeatureMap> {
    Ok(attention_forward(query, value, params, cfg)?.0)
}

pub fn attention_forward(
    query: &FeatureMap,
    value: &FeatureMap,
    params: &AttentionParams,
    cfg: &AttentionConfig,
) -> Result<(FeatureMap, AttentionCache)> {
    cfg.validate()?;
    check_same(query, value, "attention query and value maps")?;
    if query.e() != cfg.e {
        return Err(crate::FusionError::Shape(format!("E is {}, config says {}", query.e(), cfg.e)));
    }
    let (h, w) = (query.h, query.w);
    let (nh, k, dh) = (cfg.heads, cfg.points, cfg.head_dim());
    let offsets = params.offsets.forward(&query.data);
    let mut weights = params.logits.forward(&query.data);
    for n in 0..h * w {
        for hd in 0..nh {
            let base = hd * k;
            let m = (0..k).map(|p| weights[(n, base + p)]).fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for p in 0..k {
                let e = (weights[(n, base + p)] - m).exp();
                weights[(n, base + p)] = e;
                z += e;
            }
            for p in 0..k {
                weights[(n, base + p)] /= z;
            }
        }
    }
    let mut heads = DMatrix::zeros(h * w, cfg.e);
    for i in 0..h {
        for j in 0..w {
            let n = i * w + j;
            for hd in 0..nh {
                for p in 0..k {
                    let col = (hd * k + p) * 2;
                    let x = j as f64 + offsets[(n, col)];
                    let y = i as f64 + offsets[(n, col + 1)];
                    let a = weights[(n, hd * k + p)];
                    for c in corners(x, y, h, w) {
                        let s = a * c.w;
                        for d in 0..dh {
                            heads[(n, hd * dh + d)] += s * value.data[(c.row, hd * dh + d)];
                        }
                    }
                }
            }
        }
    }
    let out = params.output.forward(&heads);
    Ok((
        FeatureMap { h, w, data: out },
        AttentionCache { offsets, weights, heads },
    ))
}

/// Returns `(dL/dquery, dL/dvalue)` and accumulates parameter gradients.
pub fn attention_backward(
    query: &FeatureMap,
    value: &FeatureMap,
    params: &AttentionParams,
    cfg: &AttentionConfig,
    cache: &AttentionCache,
    d_out: &DMatrix<f64>,
    grad: &mut AttentionParams,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let (h, w) = (query.h, query.w);
    let (nh, k, dh) = (cfg.heads, cfg.points, cfg.head_dim());
    let d_heads = params.output.backward(&cache.heads, d_out, &mut grad.output);
    let mut d_value = DMatrix::zeros(h * w, cfg.e);
    let mut d_offsets = DMatrix::zeros(h * w, 2 * nh * k);
    let mut d_logits = DMatrix::zeros(h * w, nh * k);
    let mut d_weight = vec![0.0; k];
    for i in 0..h {
        for j in 0..w {
            let n = i * w + j;
            for hd in 0..nh {
                for p in 0..k {
                    let col = (hd * k + p) * 2;
                    let x = j as f64 + cache.offsets[(n, col)];
                    let y = i as f64 + cache.offsets[(n, col + 1)];
                    let a = cache.weights[(n, hd * k + p)];
                    let (mut da, mut dx, mut dy) = (0.0, 0.0, 0.0);
                    for c in corners(x, y, h, w) {
                        // g = <value row, d_head> over this head's channels
                        let mut g = 0.0;
                        for d in 0..dh {
                            let dhd = d_heads[(n, hd * dh + d)];
                            g += value.data[(c.row, hd * dh + d)] * dhd;
                            d_value[(c.row, hd * dh + d)] += a * c.w * dhd;
                        }
                        da += c.w * g;
                        dx += a * c.dw_dx * g;
                        dy += a * c.dw_dy * g;
                    }
                    d_weight[p] = da;
                    d_offsets[(n, col)] = dx;
                    d_offsets[(n, col + 1)] = dy;
                }
                let base = hd * k;
                let dot: f64 = (0..k).map(|p| cache.weights[(n, base + p)] * d_weight[p]).sum();
                for p in 0..k {
                    d_logits[(n, base + p)] = cache.weights[(n, base + p)] * (d_weight[p] - dot);
                }
            }
        }
    }
    let mut d_query = params.offsets.backward(&query.data, &d_offsets, &mut grad.offsets);
    d_query += params.logits.backward(&query.data, &d_logits, &mut grad.logits);
    (d_query, d_value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Linear;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_offset_single_point_is_identity() {
        let cfg = AttentionConfig { heads: 1, points: 1, e: 6 };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = AttentionParams::init(&cfg, &mut rng);
        p.output = Linear {
            weight: DMatrix::identity(6, 6),
            bias: DMatrix::zeros(1, 6),
        };
        let q = FeatureMap::new(3, 4, DMatrix::from_fn(12, 6, |r, c| (r * 7 + c) as f64 * 0.1)).unwrap();
        let v = FeatureMap::new(3, 4, DMatrix::from_fn(12, 6, |r, c| ((r + 2 * c) as f64).sin())).unwrap();
        let out = deformable_attention(&q, &v, &p, &cfg).unwrap();
        assert!((out.data - v.data).abs().max() < 1e-15);
    }

    #[test]
    fn weights_sum_to_one() {
        let cfg = AttentionConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = AttentionParams::init(&cfg, &mut rng);
        let q = FeatureMap::new(4, 4, DMatrix::from_fn(16, 16, |r, c| ((r * 3 + c) as f64).cos())).unwrap();
        let (_, cache) = attention_forward(&q, &q, &p, &cfg).unwrap();
        for n in 0..16 {
            for hd in 0..cfg.heads {
                let s: f64 = (0..cfg.points).map(|k| cache.weights[(n, hd * cfg.points + k)]).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn outside_samples_contribute_nothing() {
        let cfg = AttentionConfig { heads: 1, points: 1, e: 2 };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = AttentionParams::init(&cfg, &mut rng);
        p.offsets.bias = DMatrix::from_row_slice(1, 2, &[100.0, -50.0]);
        let v = FeatureMap::new(2, 2, DMatrix::from_element(4, 2, 1.0)).unwrap();
        let out = deformable_attention(&v, &v, &p, &cfg).unwrap();
        // only the output bias (zero) remains
        assert_eq!(out.data.abs().max(), 0.0);
    }

    #[test]
    fn shape_mismatch() {
        let cfg = AttentionConfig { heads: 1, points: 1, e: 2 };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = AttentionParams::init(&cfg, &mut rng);
        let a = FeatureMap::zeros(2, 2, 2);
        let b = FeatureMap::zeros(2, 3, 2);
        assert!(deformable_attention(&a, &b, &p, &cfg).is_err());
    }
}
