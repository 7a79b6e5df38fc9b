//! k-best assignment search between query detections and map objects.
//!
//! Every detection either stays unmatched or is paired with one of its
//! `top_m` nearest map objects by embedding distance. An assignment is
//! feasible when it uses at least three detections and no map object twice.
//! Assignments are ranked by
//!
//! 1. the product of the matched distances, each floored at
//!    [`SCORE_FLOOR`] and multiplied in detection order (so exact zero
//!    distances still reward additional matches),
//! 2. more pairs first,
//! 3. smaller sum of distances,
//! 4. lexicographically smaller pair list.
//!
//! The search is best-first over per-detection option lists sorted by
//! factor (an unmatched detection contributes a factor of one), which is
//! monotone, so the first feasible states popped are the best ones.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::RegistrationConfig;
use crate::instance_map::{tuple_embedding_distance, EmbeddingAggregation, ObjectId, ObjectInfoTuple, ObjectMemory};
use crate::{Error, Result};

pub const SCORE_FLOOR: f64 = 1e-9;
pub const MIN_PAIRS: usize = 3;

/// A detection-to-map matching. `pairs` are sorted by detection index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentCandidate {
    pub pairs: Vec<(usize, ObjectId)>,
    /// Product of the pairs' embedding distances.
    pub score: f64,
}

/// Assignment over matrix indices, as returned by [`k_best_assignments`].
#[derive(Debug, Clone, PartialEq)]
pub struct RankedAssignment {
    /// `(detection row, map column)`, sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub score: f64,
    /// Floored product used for ranking.
    pub rank_score: f64,
    pub distance_sum: f64,
}

impl RankedAssignment {
    fn from_pairs(dist: &[Vec<f64>], pairs: Vec<(usize, usize)>) -> Self {
        let mut score = 1.0;
        let mut rank_score = 1.0;
        let mut distance_sum = 0.0;
        for &(i, j) in &pairs {
            let d = dist[i][j];
            score *= d;
            rank_score *= d.max(SCORE_FLOOR);
            distance_sum += d;
        }
        Self {
            pairs,
            score,
            rank_score,
            distance_sum,
        }
    }

    /// The total ranking order described in the module docs.
    pub fn rank_cmp(&self, other: &Self) -> Ordering {
        self.rank_score
            .total_cmp(&other.rank_score)
            .then(other.pairs.len().cmp(&self.pairs.len()))
            .then(self.distance_sum.total_cmp(&other.distance_sum))
            .then_with(|| self.pairs.cmp(&other.pairs))
    }
}

/// For each row, the `top_m` columns with the smallest distance (ties by
/// column index), in that order.
pub fn candidate_lists(dist: &[Vec<f64>], top_m: usize) -> Vec<Vec<usize>> {
    dist.iter()
        .map(|row| {
            let mut cols: Vec<usize> = (0..row.len()).collect();
            cols.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
            cols.truncate(top_m);
            cols
        })
        .collect()
}

struct State {
    key: f64,
    choice: Vec<u32>,
    /// Only coordinates at or after this one may be advanced, so each
    /// combination is generated exactly once.
    next: usize,
}

impl PartialEq for State {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for State {}
impl PartialOrd for State {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for State {
    fn cmp(&self, o: &Self) -> Ordering {
        // min-heap on key, then on choice for determinism
        o.key.total_cmp(&self.key).then_with(|| o.choice.cmp(&self.choice))
    }
}

/// The `k` best feasible assignments for a detection-by-map distance matrix,
/// best first. Returns fewer when fewer exist.
pub fn k_best_assignments(
    dist: &[Vec<f64>],
    top_m: usize,
    k: usize,
    max_states: usize,
) -> Result<Vec<RankedAssignment>> {
    let n = dist.len();
    let cols = dist.first().map_or(0, |r| r.len());
    if dist.iter().any(|r| r.len() != cols) {
        return Err(Error::invalid("distance matrix rows differ in length"));
    }
    if dist.iter().flatten().any(|d| !(d.is_finite() && *d >= 0.0)) {
        return Err(Error::invalid("distances must be finite and nonnegative"));
    }
    if n < MIN_PAIRS || cols < MIN_PAIRS || k == 0 {
        return Ok(Vec::new());
    }
    // options[i]: (factor, column or None), ascending by factor
    let options: Vec<Vec<(f64, Option<usize>)>> = candidate_lists(dist, top_m)
        .into_iter()
        .enumerate()
        .map(|(i, cand)| {
            let mut o: Vec<(f64, Option<usize>)> = cand.into_iter().map(|j| (dist[i][j].max(SCORE_FLOOR), Some(j))).collect();
            o.push((1.0, None));
            o.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.is_none().cmp(&b.1.is_none())).then(a.1.cmp(&b.1)));
            o
        })
        .collect();
    let key_of = |choice: &[u32]| {
        let mut key = 1.0;
        for (i, &c) in choice.iter().enumerate() {
            if let (_, Some(j)) = options[i][c as usize] {
                key *= dist[i][j].max(SCORE_FLOOR);
            }
        }
        key
    };

    let mut heap = BinaryHeap::new();
    let start = vec![0u32; n];
    heap.push(State {
        key: key_of(&start),
        choice: start,
        next: 0,
    });
    let mut found: Vec<RankedAssignment> = Vec::new();
    let mut used = vec![false; cols];
    let mut expanded = 0usize;
    while let Some(state) = heap.pop() {
        if found.len() >= k {
            let kth = found[k - 1].rank_score;
            if state.key > kth {
                break;
            }
        }
        expanded += 1;
        if expanded > max_states {
            log::warn!("assignment search stopped after {max_states} states");
            break;
        }
        used.iter_mut().for_each(|u| *u = false);
        let mut pairs = Vec::new();
        let mut injective = true;
        for (i, &c) in state.choice.iter().enumerate() {
            if let (_, Some(j)) = options[i][c as usize] {
                if used[j] {
                    injective = false;
                    break;
                }
                used[j] = true;
                pairs.push((i, j));
            }
        }
        if injective && pairs.len() >= MIN_PAIRS {
            let cand = RankedAssignment::from_pairs(dist, pairs);
            let pos = found.partition_point(|f| f.rank_cmp(&cand) != Ordering::Greater);
            found.insert(pos, cand);
        }
        for i in state.next..n {
            let c = state.choice[i] as usize + 1;
            if c < options[i].len() {
                let mut choice = state.choice.clone();
                choice[i] = c as u32;
                heap.push(State {
                    key: key_of(&choice),
                    choice,
                    next: i,
                });
            }
        }
    }
    found.truncate(k);
    Ok(found)
}

/// Detection-by-map embedding distance matrix.
pub fn assignment_distances(
    detections: &[ObjectInfoTuple],
    memory: &ObjectMemory,
    aggregation: EmbeddingAggregation,
) -> Result<Vec<Vec<f64>>> {
    detections
        .iter()
        .map(|d| {
            memory
                .objects
                .iter()
                .map(|m| tuple_embedding_distance(d, m, aggregation))
                .collect()
        })
        .collect()
}

/// The `k_best` lowest-scoring assignments of `detections` to `memory`.
pub fn enumerate_assignments(
    detections: &[ObjectInfoTuple],
    memory: &ObjectMemory,
    config: &RegistrationConfig,
) -> Result<Vec<AssignmentCandidate>> {
    if memory.is_empty() {
        return Err(Error::invalid("object memory is empty"));
    }
    if detections.len() < MIN_PAIRS {
        return Err(Error::NotEnoughDetections {
            found: detections.len(),
            required: MIN_PAIRS,
        });
    }
    let aggregation = memory.meta.clustering.map(|c| c.aggregation).unwrap_or_default();
    let dist = assignment_distances(detections, memory, aggregation)?;
    let ranked = k_best_assignments(&dist, config.top_m_per_detection, config.k_best, config.max_assignment_states)?;
    Ok(ranked
        .into_iter()
        .map(|r| AssignmentCandidate {
            pairs: r.pairs.iter().map(|&(i, j)| (i, memory.objects[j].id)).collect(),
            score: r.score,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_is_best() {
        let d = vec![vec![0.1, 0.9, 0.9], vec![0.9, 0.1, 0.9], vec![0.9, 0.9, 0.1]];
        let r = k_best_assignments(&d, 5, 8, 1_000_000).unwrap();
        assert_eq!(r[0].pairs, vec![(0, 0), (1, 1), (2, 2)]);
        assert!((r[0].score - 0.001).abs() < 1e-15);
        // only the 6 full permutations are feasible
        assert_eq!(r.len(), 6);
        assert!(r.windows(2).all(|w| w[0].rank_cmp(&w[1]) != Ordering::Greater));
    }

    #[test]
    fn zero_distances_prefer_more_pairs() {
        let d = vec![vec![0.0, 1.0, 1.0, 1.0]; 4]
            .into_iter()
            .enumerate()
            .map(|(i, mut r)| {
                r.rotate_right(i);
                r
            })
            .collect::<Vec<_>>();
        let r = k_best_assignments(&d, 4, 3, 1_000_000).unwrap();
        assert_eq!(r[0].pairs.len(), 4);
        assert_eq!(r[0].score, 0.0);
    }

    #[test]
    fn too_small() {
        let d = vec![vec![0.1; 2]; 3];
        assert!(k_best_assignments(&d, 5, 8, 100).unwrap().is_empty());
    }
}
