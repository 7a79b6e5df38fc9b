use instloc::geometry::PointCloud;
use instloc::instance_map::{cluster_memory, cluster_memory_traced, ClusteringConfig, MemoryMeta, ObjectId, ObjectInfoTuple, ObjectMemory};
use nalgebra::Vector3;
use proptest::prelude::*;

fn cube(center: Vector3<f64>, half: f64) -> PointCloud {
    let mut pts = Vec::new();
    for i in 0..6 {
        for j in 0..6 {
            for k in 0..6 {
                pts.push(center + Vector3::new(i as f64, j as f64, k as f64) * (2.0 * half / 5.0) - Vector3::repeat(half));
            }
        }
    }
    PointCloud::new(pts)
}

fn memory(tuples: Vec<(Vector3<f64>, f64, Vec<f64>)>) -> ObjectMemory {
    let dim = tuples[0].2.len();
    let tuples = tuples
        .into_iter()
        .enumerate()
        .map(|(i, (c, h, e))| ObjectInfoTuple::new(ObjectId(i as u64), cube(c, h), vec![e]).unwrap())
        .collect();
    ObjectMemory::new(
        tuples,
        MemoryMeta {
            embedding_dim: dim,
            clustering: None,
            stride: None,
        },
    )
    .unwrap()
}

#[test]
fn duplicate_tuple_merges_with_both_embeddings() {
    let e = vec![0.1, 0.2, 0.3];
    let m = memory(vec![(Vector3::zeros(), 0.2, e.clone()), (Vector3::zeros(), 0.2, e)]);
    let out = cluster_memory(&m, &ClusteringConfig::default()).unwrap();
    assert_eq!(out.len(), 1);
    assert_eq!(out.objects[0].embeddings.len(), 2);
}

#[test]
fn same_appearance_far_apart_stays_split() {
    let e = vec![1.0, 0.0, 0.0];
    let m = memory(vec![
        (Vector3::zeros(), 0.2, e.clone()),
        (Vector3::new(10.0, 0.0, 0.0), 0.2, e),
    ]);
    let config = ClusteringConfig {
        eps_iou: 0.25,
        eps_l2: 0.5,
        dbscan_eps: 1.0,
        ..ClusteringConfig::default()
    };
    assert_eq!(cluster_memory(&m, &config).unwrap().len(), 2);
}

#[test]
fn empty_memory_is_rejected() {
    let m = ObjectMemory::new(
        Vec::new(),
        MemoryMeta {
            embedding_dim: 3,
            clustering: None,
            stride: None,
        },
    );
    if let Ok(m) = m {
        assert!(cluster_memory(&m, &ClusteringConfig::default()).is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn clustering_partitions_its_input(
        items in prop::collection::vec(
            ((-3.0f64..3.0, -3.0f64..3.0), 0.05f64..0.3, 0usize..3, -0.2f64..0.2),
            1..10,
        )
    ) {
        let looks = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let m = memory(
            items
                .iter()
                .map(|&((x, y), h, look, jitter)| {
                    let mut e = looks[look].to_vec();
                    e[0] += jitter;
                    (Vector3::new(x, y, 0.0), h, e)
                })
                .collect(),
        );
        let out = cluster_memory_traced(&m, &ClusteringConfig::default()).unwrap();
        let mut seen: Vec<usize> = out.members.iter().flatten().copied().collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..items.len()).collect::<Vec<_>>());
        prop_assert!(out.memory.len() <= items.len());
        let points: usize = out.memory.objects.iter().map(|o| o.cloud.len()).sum();
        prop_assert!(points <= m.objects.iter().map(|o| o.cloud.len()).sum::<usize>());
    }
}
