use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::geometry::PointCloud;
use crate::{Error, Result};

/// Opaque identifier of an object info tuple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub u64);

static NEXT_ID: AtomicU64 = AtomicU64::new(1 << 40);

impl ObjectId {
    /// Process-unique id, disjoint from the small sequential ids assigned
    /// when a memory is clustered or loaded.
    pub fn fresh() -> Self {
        ObjectId(NEXT_ID.fetch_add(1, Ordering::Relaxed))
    }
}

impl std::fmt::Display for ObjectId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One object instance: a point cloud plus every re-identification
/// embedding observed for it.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectInfoTuple {
    pub id: ObjectId,
    pub cloud: PointCloud,
    pub embeddings: Vec<Vec<f64>>,
}

impl ObjectInfoTuple {
    pub fn new(id: ObjectId, cloud: PointCloud, embeddings: Vec<Vec<f64>>) -> Result<Self> {
        let t = Self {
            id,
            cloud,
            embeddings,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cloud.is_empty() {
            return Err(Error::invalid(format!("object {} has an empty cloud", self.id)));
        }
        let Some(first) = self.embeddings.first() else {
            return Err(Error::invalid(format!("object {} has no embeddings", self.id)));
        };
        if first.is_empty() || self.embeddings.iter().any(|e| e.len() != first.len()) {
            return Err(Error::invalid(format!(
                "object {} has inconsistent embedding dimensions",
                self.id
            )));
        }
        self.cloud.validate()
    }

    pub fn embedding_dim(&self) -> usize {
        self.embeddings.first().map_or(0, Vec::len)
    }

    pub fn mean_embedding(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.embedding_dim()];
        for e in &self.embeddings {
            for (a, b) in m.iter_mut().zip(e) {
                *a += b;
            }
        }
        let n = self.embeddings.len().max(1) as f64;
        m.iter_mut().for_each(|a| *a /= n);
        m
    }

    /// Mean of the cloud points.
    pub fn centroid(&self) -> Vector3<f64> {
        self.cloud.centroid().unwrap_or_else(Vector3::zeros)
    }
}

/// Groups two tuples: point multisets and embedding lists are concatenated
/// (`a` first) under a fresh id.
pub fn group(a: &ObjectInfoTuple, b: &ObjectInfoTuple) -> Result<ObjectInfoTuple> {
    if a.embedding_dim() != b.embedding_dim() {
        return Err(Error::invalid(format!(
            "cannot group embeddings of dimension {} and {}",
            a.embedding_dim(),
            b.embedding_dim()
        )));
    }
    let mut cloud = a.cloud.clone();
    cloud.extend(&b.cloud);
    let mut embeddings = a.embeddings.clone();
    embeddings.extend(b.embeddings.iter().cloned());
    Ok(ObjectInfoTuple {
        id: ObjectId::fresh(),
        cloud,
        embeddings,
    })
}

/// How the embedding lists of two tuples are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingAggregation {
    /// Euclidean distance between the mean embeddings.
    #[default]
    Mean,
    /// Smallest Euclidean distance over all embedding pairs.
    MinPairwise,
}

pub fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn tuple_embedding_distance(
    a: &ObjectInfoTuple,
    b: &ObjectInfoTuple,
    aggregation: EmbeddingAggregation,
) -> Result<f64> {
    if a.embedding_dim() != b.embedding_dim() {
        return Err(Error::invalid(format!(
            "embedding dimensions differ: {} vs {}",
            a.embedding_dim(),
            b.embedding_dim()
        )));
    }
    Ok(match aggregation {
        EmbeddingAggregation::Mean => l2(&a.mean_embedding(), &b.mean_embedding()),
        EmbeddingAggregation::MinPairwise => a
            .embeddings
            .iter()
            .flat_map(|x| b.embeddings.iter().map(move |y| l2(x, y)))
            .fold(f64::INFINITY, f64::min),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(pts: &[[f64; 3]], embs: &[&[f64]]) -> ObjectInfoTuple {
        ObjectInfoTuple::new(
            ObjectId::fresh(),
            PointCloud::new(pts.iter().map(|&p| p.into()).collect()),
            embs.iter().map(|e| e.to_vec()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn distances() {
        let a = t(&[[0.0; 3]], &[&[0.0, 0.0]]);
        let b = t(&[[0.0; 3]], &[&[3.0, 4.0]]);
        assert_eq!(tuple_embedding_distance(&a, &a, EmbeddingAggregation::Mean).unwrap(), 0.0);
        assert_eq!(tuple_embedding_distance(&a, &b, EmbeddingAggregation::Mean).unwrap(), 5.0);
        let c = t(&[[0.0; 3]], &[&[0.0, 0.0], &[2.0, 0.0]]);
        let d = t(&[[0.0; 3]], &[&[4.0, 0.0]]);
        assert_eq!(tuple_embedding_distance(&c, &d, EmbeddingAggregation::Mean).unwrap(), 3.0);
        assert_eq!(tuple_embedding_distance(&c, &d, EmbeddingAggregation::MinPairwise).unwrap(), 2.0);
    }

    #[test]
    fn dimension_mismatch() {
        let a = t(&[[0.0; 3]], &[&[0.0, 0.0]]);
        let b = t(&[[0.0; 3]], &[&[0.0, 0.0, 1.0]]);
        assert!(group(&a, &b).is_err());
        assert!(tuple_embedding_distance(&a, &b, EmbeddingAggregation::Mean).is_err());
    }

    #[test]
    fn invalid_tuples() {
        let empty = ObjectInfoTuple::new(ObjectId(0), PointCloud::default(), vec![vec![1.0]]);
        assert!(empty.is_err());
        let no_emb = ObjectInfoTuple::new(ObjectId(0), PointCloud::new(vec![Vector3::zeros()]), vec![]);
        assert!(no_emb.is_err());
    }

    #[test]
    fn group_concatenates() {
        let a = t(&[[0.0; 3], [1.0, 0.0, 0.0]], &[&[1.0]]);
        let b = t(&[[2.0, 0.0, 0.0]], &[&[2.0], &[3.0]]);
        let g = group(&a, &b).unwrap();
        assert_eq!(g.cloud.len(), 3);
        assert_eq!(g.embeddings.len(), 3);
        assert_ne!(g.id, a.id);
        assert_ne!(g.id, b.id);
    }
}
