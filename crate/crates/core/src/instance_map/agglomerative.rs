use crate::{Error, Result};

/// Average-linkage agglomerative clustering over a symmetric distance matrix.
///
/// Clusters are merged while the smallest average inter-cluster distance is
/// `<= threshold`. Ties pick the pair with the lowest `(i, j)` cluster
/// representatives, where a cluster is represented by its smallest member.
/// Returned labels are 0-based and numbered in order of first appearance.
pub fn agg_cluster(dist: &[Vec<f64>], threshold: f64) -> Result<Vec<usize>> {
    let n = dist.len();
    check_distance_matrix(dist)?;
    if n == 0 {
        return Ok(Vec::new());
    }
    // Sum of member-pair distances between clusters, indexed by representative.
    let mut sums: Vec<Vec<f64>> = dist.to_vec();
    let mut size = vec![1usize; n];
    let mut active: Vec<usize> = (0..n).collect();
    let mut owner: Vec<usize> = (0..n).collect();

    while active.len() > 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for (ai, &i) in active.iter().enumerate() {
            for &j in &active[ai + 1..] {
                let link = sums[i][j] / (size[i] * size[j]) as f64;
                if best.is_none_or(|(b, _, _)| link < b) {
                    best = Some((link, i, j));
                }
            }
        }
        let (link, i, j) = best.unwrap();
        if link > threshold {
            break;
        }
        for &k in &active {
            if k != i && k != j {
                let s = sums[i][k] + sums[j][k];
                sums[i][k] = s;
                sums[k][i] = s;
            }
        }
        size[i] += size[j];
        for o in owner.iter_mut() {
            if *o == j {
                *o = i;
            }
        }
        active.retain(|&k| k != j);
    }
    Ok(relabel(&owner))
}

/// Maps arbitrary cluster keys to 0-based labels in order of first appearance.
pub fn relabel(keys: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    keys.iter()
        .map(|k| {
            let next = map.len();
            *map.entry(*k).or_insert(next)
        })
        .collect()
}

pub(crate) fn check_distance_matrix(dist: &[Vec<f64>]) -> Result<()> {
    let n = dist.len();
    for (i, row) in dist.iter().enumerate() {
        if row.len() != n {
            return Err(Error::invalid("distance matrix is not square"));
        }
        if row[i] != 0.0 {
            return Err(Error::invalid(format!("distance matrix diagonal [{i}] is nonzero")));
        }
        for j in 0..i {
            let (a, b) = (row[j], dist[j][i]);
            if !a.is_finite() || a < 0.0 || (a - b).abs() > 1e-12 * a.abs().max(1.0) {
                return Err(Error::invalid(format!(
                    "distance matrix is not a symmetric nonnegative matrix at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn close_pair_merges() {
        let d = vec![vec![0.0, 0.1], vec![0.1, 0.0]];
        assert_eq!(agg_cluster(&d, 0.5).unwrap(), vec![0, 0]);
    }

    #[test]
    fn all_far_gives_singletons() {
        let d = vec![vec![0.0, 0.9, 0.8], vec![0.9, 0.0, 0.7], vec![0.8, 0.7, 0.0]];
        assert_eq!(agg_cluster(&d, 0.5).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn average_linkage_blocks_chaining() {
        // {1,2} merge at 0.2; linkage to 3 is (0.2 + 0.9) / 2 = 0.55 > 0.5.
        let d = vec![vec![0.0, 0.2, 0.9], vec![0.2, 0.0, 0.2], vec![0.9, 0.2, 0.0]];
        assert_eq!(agg_cluster(&d, 0.5).unwrap(), vec![0, 0, 1]);
    }

    #[test]
    fn asymmetric_rejected() {
        let d = vec![vec![0.0, 0.1], vec![0.2, 0.0]];
        assert!(agg_cluster(&d, 0.5).is_err());
        let nz = vec![vec![0.1]];
        assert!(agg_cluster(&nz, 0.5).is_err());
    }

    #[test]
    fn empty() {
        assert!(agg_cluster(&[], 0.5).unwrap().is_empty());
    }
}
