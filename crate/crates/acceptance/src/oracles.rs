use std::collections::{HashMap, HashSet};

use nalgebra::Vector3;

/// Average-linkage agglomeration, recomputing every linkage from the
/// original matrix at every step. Ties go to the pair whose smallest
/// members are lexicographically smallest. Labels are numbered by first
/// appearance.
pub fn agg_cluster(dist: &[Vec<f64>], threshold: f64) -> Vec<usize> {
    let mut clusters: Vec<Vec<usize>> = (0..dist.len()).map(|i| vec![i]).collect();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let mut sum = 0.0;
                for &i in &clusters[a] {
                    for &j in &clusters[b] {
                        sum += dist[i][j];
                    }
                }
                let link = sum / (clusters[a].len() * clusters[b].len()) as f64;
                let better = match best {
                    None => true,
                    Some((l, ba, bb)) => {
                        link < l
                            || (link == l && (clusters[a][0], clusters[b][0]) < (clusters[ba][0], clusters[bb][0]))
                    }
                };
                if better {
                    best = Some((link, a, b));
                }
            }
        }
        match best {
            Some((link, a, b)) if link <= threshold => {
                let moved = clusters.remove(b);
                clusters[a].extend(moved);
                clusters[a].sort_unstable();
                clusters.sort_by_key(|c| c[0]);
            }
            _ => break,
        }
    }
    let mut labels = vec![0; dist.len()];
    for (k, c) in clusters.iter().enumerate() {
        for &i in c {
            labels[i] = k;
        }
    }
    labels
}

/// DBSCAN from its definition: core points are those with at least
/// `min_pts` points within `eps` (themselves included); clusters are the
/// connected components of core points, ordered by their smallest core
/// index; a border point joins the first such cluster with a core point in
/// reach.
pub fn dbscan(points: &[Vector3<f64>], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let n = points.len();
    let near = |i: usize, j: usize| (points[i] - points[j]).norm_squared() <= eps * eps;
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_pts).collect();
    let mut comp: Vec<Option<usize>> = vec![None; n];
    let mut count = 0;
    for s in 0..n {
        if !core[s] || comp[s].is_some() {
            continue;
        }
        let mut stack = vec![s];
        comp[s] = Some(count);
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if core[j] && comp[j].is_none() && near(i, j) {
                    comp[j] = Some(count);
                    stack.push(j);
                }
            }
        }
        count += 1;
    }
    (0..n)
        .map(|i| {
            if core[i] {
                comp[i]
            } else {
                (0..n).filter(|&j| core[j] && near(i, j)).filter_map(|j| comp[j]).min()
            }
        })
        .collect()
}

/// A tuple as the reference sees it: raw points and the list of embeddings.
#[derive(Debug, Clone)]
pub struct RefTuple {
    pub points: Vec<Vector3<f64>>,
    pub embeddings: Vec<Vec<f64>>,
}

fn voxels(points: &[Vector3<f64>], voxel: f64) -> HashSet<(i64, i64, i64)> {
    points
        .iter()
        .map(|p| {
            (
                (p.x / voxel).floor() as i64,
                (p.y / voxel).floor() as i64,
                (p.z / voxel).floor() as i64,
            )
        })
        .collect()
}

fn iou(a: &HashSet<(i64, i64, i64)>, b: &HashSet<(i64, i64, i64)>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.union(b).count();
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

fn mean_embedding(t: &RefTuple) -> Vec<f64> {
    let d = t.embeddings[0].len();
    let mut m = vec![0.0; d];
    for e in &t.embeddings {
        for (a, b) in m.iter_mut().zip(e) {
            *a += b;
        }
    }
    m.iter().map(|v| v / t.embeddings.len() as f64).collect()
}

fn merge(parts: &[&RefTuple]) -> RefTuple {
    RefTuple {
        points: parts.iter().flat_map(|t| t.points.iter().copied()).collect(),
        embeddings: parts.iter().flat_map(|t| t.embeddings.iter().cloned()).collect(),
    }
}

fn groups_of(labels: &[usize]) -> Vec<Vec<usize>> {
    let mut by: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by.entry(l).or_default().push(i);
    }
    let mut g: Vec<Vec<usize>> = by.into_values().collect();
    g.sort();
    g
}

/// The three clustering stages (voxel IoU, mean-embedding distance,
/// centroid DBSCAN) on raw tuples. Returns the input indices of every
/// output group, each sorted, groups sorted.
pub fn cluster_groups(
    tuples: &[RefTuple],
    eps_iou: f64,
    eps_l2: f64,
    voxel: f64,
    dbscan_eps: f64,
    min_pts: usize,
) -> Vec<Vec<usize>> {
    let n = tuples.len();
    let sets: Vec<_> = tuples.iter().map(|t| voxels(&t.points, voxel)).collect();
    let d1: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 0.0 } else { 1.0 - iou(&sets[i], &sets[j]) }).collect())
        .collect();
    let stage1: Vec<Vec<usize>> = groups_of(&agg_cluster(&d1, 1.0 - eps_iou));
    // keep first-appearance order, which is what the merge order follows
    let mut stage1 = stage1;
    stage1.sort_by_key(|g| g[0]);
    let merged1: Vec<RefTuple> = stage1
        .iter()
        .map(|g| merge(&g.iter().map(|&i| &tuples[i]).collect::<Vec<_>>()))
        .collect();
    let means: Vec<Vec<f64>> = merged1.iter().map(mean_embedding).collect();
    let m = merged1.len();
    let d2: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            (0..m)
                .map(|j| means[i].iter().zip(&means[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
                .collect()
        })
        .collect();
    let stage2 = groups_of(&agg_cluster(&d2, eps_l2));
    let mut out = Vec::new();
    for g in stage2 {
        let centroids: Vec<Vector3<f64>> = g
            .iter()
            .map(|&k| merged1[k].points.iter().sum::<Vector3<f64>>() / merged1[k].points.len() as f64)
            .collect();
        let labels = dbscan(&centroids, dbscan_eps, min_pts);
        let mut by: HashMap<Option<usize>, Vec<usize>> = HashMap::new();
        for (pos, l) in labels.iter().enumerate() {
            match l {
                Some(_) => by.entry(*l).or_default().push(g[pos]),
                None => out.push(stage1[g[pos]].clone()),
            }
        }
        for (_, ks) in by {
            let mut members: Vec<usize> = ks.iter().flat_map(|&k| stage1[k].iter().copied()).collect();
            members.sort_unstable();
            out.push(members);
        }
    }
    for g in &mut out {
        g.sort_unstable();
    }
    out.sort();
    out
}

/// One ranked assignment: `(row, column)` pairs sorted by row and the plain
/// product of their distances.
#[derive(Debug, Clone, PartialEq)]
pub struct RefAssignment {
    pub pairs: Vec<(usize, usize)>,
    pub score: f64,
}

/// Every assignment of at least three rows to distinct columns drawn from
/// each row's `top_m` nearest columns, ranked by floored product, then more
/// pairs, then smaller distance sum, then pair list; the first `k`.
pub fn k_best(dist: &[Vec<f64>], top_m: usize, k: usize, floor: f64, min_pairs: usize) -> Vec<RefAssignment> {
    let rows = dist.len();
    let options: Vec<Vec<usize>> = dist
        .iter()
        .map(|row| {
            let mut c: Vec<usize> = (0..row.len()).collect();
            c.sort_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap().then(a.cmp(&b)));
            c.truncate(top_m);
            c
        })
        .collect();
    let mut all: Vec<(f64, usize, f64, Vec<(usize, usize)>)> = Vec::new();
    let mut choice: Vec<Option<usize>> = vec![None; rows];
    fn rec(
        r: usize,
        dist: &[Vec<f64>],
        options: &[Vec<usize>],
        choice: &mut Vec<Option<usize>>,
        floor: f64,
        min_pairs: usize,
        out: &mut Vec<(f64, usize, f64, Vec<(usize, usize)>)>,
    ) {
        if r == dist.len() {
            let pairs: Vec<(usize, usize)> = choice.iter().enumerate().filter_map(|(i, c)| c.map(|c| (i, c))).collect();
            if pairs.len() >= min_pairs {
                let rank = pairs.iter().fold(1.0, |acc, &(i, j)| acc * dist[i][j].max(floor));
                let sum = pairs.iter().map(|&(i, j)| dist[i][j]).sum();
                out.push((rank, pairs.len(), sum, pairs));
            }
            return;
        }
        choice[r] = None;
        rec(r + 1, dist, options, choice, floor, min_pairs, out);
        for &c in &options[r] {
            if choice[..r].contains(&Some(c)) {
                continue;
            }
            choice[r] = Some(c);
            rec(r + 1, dist, options, choice, floor, min_pairs, out);
        }
        choice[r] = None;
    }
    rec(0, dist, &options, &mut choice, floor, min_pairs, &mut all);
    all.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then(b.1.cmp(&a.1))
            .then(a.2.partial_cmp(&b.2).unwrap())
            .then_with(|| a.3.cmp(&b.3))
    });
    all.into_iter()
        .take(k)
        .map(|(_, _, _, pairs)| RefAssignment {
            score: pairs.iter().map(|&(i, j)| dist[i][j]).product(),
            pairs,
        })
        .collect()
}
