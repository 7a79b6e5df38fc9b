//! Retrieval metrics over L2-ranked galleries.

use nalgebra::DMatrix;

use crate::{FusionError, Result};

fn check(q: &DMatrix<f64>, ql: &[usize], g: &DMatrix<f64>, gl: &[usize]) -> Result<()> {
    if q.nrows() != ql.len() || g.nrows() != gl.len() {
        return Err(FusionError::Input("label count differs from embedding count".into()));
    }
    if q.ncols() != g.ncols() {
        return Err(FusionError::Shape(format!(
            "query embeddings have {} dims, gallery {}",
            q.ncols(),
            g.ncols()
        )));
    }
    if let Some(l) = ql.iter().find(|l| !gl.contains(l)) {
        return Err(FusionError::Input(format!("query label {l} has no gallery entry")));
    }
    Ok(())
}

/// Gallery indices sorted by distance to `query`; ties keep gallery order.
fn ranking(query: &DMatrix<f64>, qi: usize, gallery: &DMatrix<f64>) -> Vec<usize> {
    let q = query.row(qi);
    let d: Vec<f64> = (0..gallery.nrows()).map(|g| (gallery.row(g) - q).norm()).collect();
    let mut idx: Vec<usize> = (0..gallery.nrows()).collect();
    idx.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    idx
}

/// Mean over queries of the average precision of the gallery ranking, with
/// same-label entries relevant.
pub fn mean_average_precision(
    query: &DMatrix<f64>,
    query_labels: &[usize],
    gallery: &DMatrix<f64>,
    gallery_labels: &[usize],
) -> Result<f64> {
    check(query, query_labels, gallery, gallery_labels)?;
    if query.nrows() == 0 {
        return Err(FusionError::Input("no queries".into()));
    }
    let mut total = 0.0;
    for qi in 0..query.nrows() {
        let mut hits = 0usize;
        let mut ap = 0.0;
        for (rank, g) in ranking(query, qi, gallery).into_iter().enumerate() {
            if gallery_labels[g] == query_labels[qi] {
                hits += 1;
                ap += hits as f64 / (rank + 1) as f64;
            }
        }
        total += ap / hits as f64;
    }
    Ok(total / query.nrows() as f64)
}

/// Fraction of queries whose nearest gallery entry shares their label.
pub fn rank1_accuracy(
    query: &DMatrix<f64>,
    query_labels: &[usize],
    gallery: &DMatrix<f64>,
    gallery_labels: &[usize],
) -> Result<f64> {
    check(query, query_labels, gallery, gallery_labels)?;
    if query.nrows() == 0 {
        return Err(FusionError::Input("no queries".into()));
    }
    let hits = (0..query.nrows())
        .filter(|&qi| gallery_labels[ranking(query, qi, gallery)[0]] == query_labels[qi])
        .count();
    Ok(hits as f64 / query.nrows() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    #[test]
    fn neg_then_pos_is_half() {
        let ap = mean_average_precision(&col(&[0.0]), &[1], &col(&[0.1, 0.5]), &[2, 1]).unwrap();
        assert!((ap - 0.5).abs() < 1e-12);
    }

    #[test]
    fn perfect_and_all_positive() {
        let q = col(&[0.0, 10.0]);
        let g = col(&[0.1, 0.2, 10.1, 9.8]);
        assert_eq!(mean_average_precision(&q, &[0, 1], &g, &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(rank1_accuracy(&q, &[0, 1], &g, &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(mean_average_precision(&q, &[3, 3], &g, &[3, 3, 3, 3]).unwrap(), 1.0);
    }

    #[test]
    fn missing_label_is_an_error() {
        assert!(matches!(
            mean_average_precision(&col(&[0.0]), &[5], &col(&[0.0]), &[1]),
            Err(FusionError::Input(_))
        ));
    }

    #[test]
    fn two_positives_interleaved() {
        // ranking pos, neg, pos: (1/1 + 2/3) / 2
        let ap = mean_average_precision(&col(&[0.0]), &[0], &col(&[0.1, 0.2, 0.3]), &[0, 1, 0]).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
    }
}
