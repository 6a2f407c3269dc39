use std::collections::BTreeSet;

use epiassim::network::{generate_bter, load_edge_list, write_network_files, BterSpec, ContactNetwork};
use proptest::prelude::*;

fn edge_set() -> impl Strategy<Value = (usize, Vec<(u32, u32)>)> {
    (2usize..40).prop_flat_map(|n| {
        let pairs = prop::collection::btree_set((0..n as u32, 0..n as u32), 0..120);
        (Just(n), pairs).prop_map(|(n, set)| {
            let edges: BTreeSet<(u32, u32)> = set
                .into_iter()
                .filter(|(u, v)| u != v)
                .map(|(u, v)| (u.min(v), u.max(v)))
                .collect();
            (n, edges.into_iter().collect())
        })
    })
}

/// Clustering by direct enumeration of neighbour pairs.
fn brute_clustering(n: usize, edges: &[(u32, u32)]) -> f64 {
    let mut adj = vec![vec![false; n]; n];
    for &(u, v) in edges {
        adj[u as usize][v as usize] = true;
        adj[v as usize][u as usize] = true;
    }
    let mut total = 0.0;
    for v in 0..n {
        let nb: Vec<usize> = (0..n).filter(|&u| adj[v][u]).collect();
        let d = nb.len();
        if d < 2 {
            continue;
        }
        let mut closed = 0;
        for a in 0..d {
            for b in a + 1..d {
                closed += adj[nb[a]][nb[b]] as usize;
            }
        }
        total += closed as f64 / (d * (d - 1) / 2) as f64;
    }
    total / n as f64
}

proptest! {
    #[test]
    fn adjacency_is_symmetric_and_sorted((n, edges) in edge_set()) {
        let net = ContactNetwork::from_edges(n, &edges).unwrap();
        prop_assert_eq!(net.edge_count(), edges.len());
        prop_assert_eq!(net.degrees().sum::<usize>(), 2 * edges.len());
        for v in 0..n {
            let nb = net.neighbors(v);
            prop_assert!(nb.windows(2).all(|w| w[0] < w[1]));
            for &u in nb {
                prop_assert!(u as usize != v);
                prop_assert!(net.has_edge(u as usize, v));
            }
        }
        prop_assert_eq!(net.edges().collect::<Vec<_>>(), edges);
    }

    #[test]
    fn clustering_matches_enumeration((n, edges) in edge_set()) {
        let net = ContactNetwork::from_edges(n, &edges).unwrap();
        let c = net.global_clustering();
        prop_assert!((c - brute_clustering(n, &edges)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&c));
    }

    #[test]
    fn partitions_are_balanced_and_contiguous(n in 1usize..60, workers in 1usize..16) {
        prop_assume!(workers <= n);
        let net = ContactNetwork::complete(n).unwrap().partition(workers).unwrap();
        let mut next = 0;
        let mut sizes = Vec::new();
        for p in 0..workers {
            let r = net.partition_range(p);
            prop_assert_eq!(r.start, next);
            next = r.end;
            sizes.push(r.len());
            for v in r {
                prop_assert_eq!(net.partition_of(v), p);
            }
        }
        prop_assert_eq!(next, net.node_count());
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }
}

#[test]
fn clustering_of_a_200_node_random_graph() {
    let spec = BterSpec::new(200, 8.0, 0.4, 21);
    let net = generate_bter(&spec).unwrap();
    let edges: Vec<(u32, u32)> = net.edges().collect();
    assert!((net.global_clustering() - brute_clustering(200, &edges)).abs() < 1e-12);
}

#[test]
fn bter_hits_targets_at_moderate_size() {
    for (mean, clustering) in [(6.0, 0.3), (16.52, 0.55), (10.0, 0.7)] {
        let net = generate_bter(&BterSpec::new(3000, mean, clustering, 2)).unwrap();
        let s = net.stats();
        assert!((s.mean_degree - mean).abs() <= 0.15 * mean, "{mean}: {s:?}");
        assert!((s.clustering - clustering).abs() <= 0.1, "{clustering}: {s:?}");
    }
}

#[test]
fn edge_list_round_trip_preserves_the_graph() {
    let net = generate_bter(&BterSpec::new(500, 10.0, 0.5, 4)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.edges");
    let meta = write_network_files(&net, &path, Some(4)).unwrap();
    assert_eq!(meta.edge_count, net.edge_count());
    assert_eq!(load_edge_list(&path).unwrap(), net);
}
