//! Per-position modality weight from the concatenated encoder features.

use nalgebra::DMatrix;

use crate::params::WeightingParams;
use crate::FeatureMap;

#[derive(Debug, Clone)]
pub struct WeightingCache {
    /// im2col of the concatenated input, `N x (9 * 2E)`.
    cols: DMatrix<f64>,
    /// Hidden activations before ReLU, `N x hidden`.
    pub(crate) pre: DMatrix<f64>,
    pub alpha: Vec<f64>,
}

const TAPS: [(isize, isize); 9] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 0), (0, 1), (1, -1), (1, 0), (1, 1)];

fn im2col(rgb: &FeatureMap, depth: &FeatureMap) -> DMatrix<f64> {
    let (h, w, e) = (rgb.h, rgb.w, rgb.e());
    let c2 = 2 * e;
    let mut cols = DMatrix::zeros(h * w, 9 * c2);
    for i in 0..h {
        for j in 0..w {
            let n = i * w + j;
            for (t, (di, dj)) in TAPS.iter().enumerate() {
                let (ii, jj) = (i as isize + di, j as isize + dj);
                if ii < 0 || jj < 0 || ii >= h as isize || jj >= w as isize {
                    continue;
                }
                let src = ii as usize * w + jj as usize;
                for c in 0..e {
                    cols[(n, t * c2 + c)] = rgb.data[(src, c)];
                    cols[(n, t * c2 + e + c)] = depth.data[(src, c)];
                }
            }
        }
    }
    cols
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn weighting_forward(rgb: &FeatureMap, depth: &FeatureMap, p: &WeightingParams) -> WeightingCache {
    let cols = im2col(rgb, depth);
    let mut pre = &cols * p.conv1_weight.transpose();
    for mut row in pre.row_iter_mut() {
        row += &p.conv1_bias;
    }
    let alpha = pre
        .row_iter()
        .map(|row| {
            let s: f64 = row
                .iter()
                .zip(p.conv2_weight.iter())
                .map(|(z, w)| z.max(0.0) * w)
                .sum::<f64>()
                + p.conv2_bias[(0, 0)];
            sigmoid(s)
        })
        .collect();
    WeightingCache { cols, pre, alpha }
}

/// Given `dL/dalpha`, accumulates parameter gradients and returns the
/// gradients for the RGB and depth encoder maps.
pub fn weighting_backward(
    rgb: &FeatureMap,
    p: &WeightingParams,
    cache: &WeightingCache,
    d_alpha: &[f64],
    grad: &mut WeightingParams,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let (h, w, e) = (rgb.h, rgb.w, rgb.e());
    let hidden = p.conv2_weight.nrows();
    let n_pos = h * w;
    let mut d_pre = DMatrix::zeros(n_pos, hidden);
    for n in 0..n_pos {
        let a = cache.alpha[n];
        let ds = d_alpha[n] * a * (1.0 - a);
        grad.conv2_bias[(0, 0)] += ds;
        for c in 0..hidden {
            let z = cache.pre[(n, c)];
            grad.conv2_weight[(c, 0)] += ds * z.max(0.0);
            if z > 0.0 {
                d_pre[(n, c)] = ds * p.conv2_weight[(c, 0)];
            }
        }
    }
    grad.conv1_weight += d_pre.transpose() * &cache.cols;
    for row in d_pre.row_iter() {
        grad.conv1_bias += row;
    }
    let d_cols = &d_pre * &p.conv1_weight;
    let c2 = 2 * e;
    let mut d_rgb = DMatrix::zeros(n_pos, e);
    let mut d_depth = DMatrix::zeros(n_pos, e);
    for i in 0..h {
        for j in 0..w {
            let n = i * w + j;
            for (t, (di, dj)) in TAPS.iter().enumerate() {
                let (ii, jj) = (i as isize + di, j as isize + dj);
                if ii < 0 || jj < 0 || ii >= h as isize || jj >= w as isize {
                    continue;
                }
                let src = ii as usize * w + jj as usize;
                for c in 0..e {
                    d_rgb[(src, c)] += d_cols[(n, t * c2 + c)];
                    d_depth[(src, c)] += d_cols[(n, t * c2 + e + c)];
                }
            }
        }
    }
    (d_rgb, d_depth)
}
