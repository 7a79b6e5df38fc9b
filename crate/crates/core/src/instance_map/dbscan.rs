use std::collections::VecDeque;

use nalgebra::Vector3;

use crate::{Error, Result};

/// Density-based clustering of 3-D points.
///
/// A point is a core point when at least `min_pts` points (itself included)
/// lie within `eps`. Clusters are grown from core points in index order;
/// points reachable from no core point are noise (`None`). With
/// `min_pts == 1` every point is labeled.
pub fn dbscan(points: &[Vector3<f64>], eps: f64, min_pts: usize) -> Result<Vec<Option<usize>>> {
    if !(eps > 0.0) || min_pts == 0 {
        return Err(Error::invalid(format!(
            "dbscan needs eps > 0 and min_pts >= 1 (got {eps}, {min_pts})"
        )));
    }
    let n = points.len();
    let eps2 = eps * eps;
    let neighbors = |i: usize| -> Vec<usize> {
        (0..n)
            .filter(|&j| (points[i] - points[j]).norm_squared() <= eps2)
            .collect()
    };
    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut next = 0;
    for start in 0..n {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        let nb = neighbors(start);
        if nb.len() < min_pts {
            continue;
        }
        let cluster = next;
        next += 1;
        labels[start] = Some(cluster);
        let mut queue: VecDeque<usize> = nb.into();
        while let Some(j) = queue.pop_front() {
            if labels[j].is_none() {
                labels[j] = Some(cluster);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            let nbj = neighbors(j);
            if nbj.len() >= min_pts {
                queue.extend(nbj);
            }
        }
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64) -> Vector3<f64> {
        Vector3::new(x, 0.0, 0.0)
    }

    #[test]
    fn single_point() {
        assert_eq!(dbscan(&[v(0.0)], 1.0, 1).unwrap(), vec![Some(0)]);
    }

    #[test]
    fn empty_input() {
        assert!(dbscan(&[], 1.0, 1).unwrap().is_empty());
    }

    #[test]
    fn two_blobs() {
        let mut pts: Vec<_> = (0..5).map(|i| v(0.1 * i as f64)).collect();
        pts.extend((0..5).map(|i| v(10.0 + 0.1 * i as f64)));
        let l = dbscan(&pts, 1.0, 1).unwrap();
        assert!(l[..5].iter().all(|x| *x == Some(0)));
        assert!(l[5..].iter().all(|x| *x == Some(1)));
    }

    #[test]
    fn chained_reachability() {
        let l = dbscan(&[v(0.0), v(0.8), v(1.6)], 1.0, 1).unwrap();
        assert_eq!(l, vec![Some(0); 3]);
    }

    #[test]
    fn noise_with_higher_min_pts() {
        let l = dbscan(&[v(0.0), v(0.1), v(0.2), v(5.0)], 0.5, 3).unwrap();
        assert_eq!(l, vec![Some(0), Some(0), Some(0), None]);
    }

    #[test]
    fn bad_params() {
        assert!(dbscan(&[v(0.0)], 0.0, 1).is_err());
        assert!(dbscan(&[v(0.0)], 1.0, 0).is_err());
    }
}
