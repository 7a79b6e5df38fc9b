//! The object memory: info tuples, grouping, and the staged clustering that
//! consolidates repeated observations of the same object.

mod agglomerative;
mod cluster;
mod dbscan;
pub mod store;
mod tuple;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

pub use agglomerative::{agg_cluster, relabel};
pub use cluster::{
    cluster_memory, cluster_memory_traced, embedding_distance_matrix, iou_matrix, ClusterOutcome,
    ClusteringConfig,
};
pub use dbscan::dbscan;
pub use tuple::{group, l2, tuple_embedding_distance, EmbeddingAggregation, ObjectId, ObjectInfoTuple};

use crate::{Error, Result};

/// Snapshot of the settings a memory was built with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MemoryMeta {
    pub embedding_dim: usize,
    #[serde(default)]
    pub clustering: Option<ClusteringConfig>,
    /// Frame stride used when sampling the mapping sequence.
    #[serde(default)]
    pub stride: Option<usize>,
}

/// Immutable collection of object info tuples.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectMemory {
    pub objects: Vec<ObjectInfoTuple>,
    pub meta: MemoryMeta,
}

impl ObjectMemory {
    /// Validates id uniqueness and a common embedding dimension. The
    /// dimension in `meta` is filled from the tuples when nonempty.
    pub fn new(objects: Vec<ObjectInfoTuple>, mut meta: MemoryMeta) -> Result<Self> {
        let mut ids = HashSet::new();
        for t in &objects {
            t.validate()?;
            if !ids.insert(t.id) {
                return Err(Error::invalid(format!("duplicate object id {}", t.id)));
            }
        }
        if let Some(first) = objects.first() {
            let e = first.embedding_dim();
            if objects.iter().any(|t| t.embedding_dim() != e) {
                return Err(Error::invalid("objects have different embedding dimensions"));
            }
            if meta.embedding_dim != 0 && meta.embedding_dim != e {
                return Err(Error::invalid(format!(
                    "memory declares embedding dimension {}, objects have {e}",
                    meta.embedding_dim
                )));
            }
            meta.embedding_dim = e;
        }
        Ok(Self { objects, meta })
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn get(&self, id: ObjectId) -> Option<&ObjectInfoTuple> {
        self.objects.iter().find(|t| t.id == id)
    }
}
