use std::collections::VecDeque;

use gcs_sim::engine::rng::seeded_stream;
use gcs_sim::topology::{hop_diameter, hop_distance, DistanceMatrix, Edge, EdgeParams, NetworkGraph, NodeId};
use rand::Rng;

fn random_graph(seed: u64, n: usize, extra: usize) -> NetworkGraph {
    let mut rng = seeded_stream(seed, "graph");
    let mut pairs = std::collections::BTreeSet::new();
    for v in 1..n {
        pairs.insert((rng.gen_range(0..v), v));
    }
    while pairs.len() < n - 1 + extra {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a != b {
            pairs.insert((a.min(b), a.max(b)));
        }
    }
    let edges = pairs
        .into_iter()
        .map(|(u, v)| Edge {
            u: NodeId(u),
            v: NodeId(v),
            params: EdgeParams::symmetric(rng.gen_range(0.1..3.0), 0.05, rng.gen_range(0.1..0.5)),
        })
        .collect();
    NetworkGraph::new(n, 5.0, edges).unwrap()
}

fn bfs(adj: &[Vec<usize>], src: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; adj.len()];
    dist[src] = 0;
    let mut q = VecDeque::from([src]);
    while let Some(v) = q.pop_front() {
        for &w in &adj[v] {
            if dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                q.push_back(w);
            }
        }
    }
    dist
}

#[test]
fn hop_metrics_match_bfs() {
    for seed in 0..20 {
        let g = random_graph(seed, 16, 6);
        let mut adj = vec![Vec::new(); 16];
        for e in g.edges() {
            adj[e.u.0].push(e.v.0);
            adj[e.v.0].push(e.u.0);
        }
        let mut diam = 0;
        for v in 0..16 {
            let d = bfs(&adj, v);
            for w in 0..16 {
                assert_eq!(hop_distance(&g, NodeId(v), NodeId(w)).unwrap(), d[w]);
                diam = diam.max(d[w]);
            }
        }
        assert_eq!(hop_diameter(&g), diam, "seed {seed}");
    }
}

#[test]
fn weighted_distances_match_floyd_warshall() {
    for seed in 0..10 {
        let g = random_graph(100 + seed, 12, 8);
        let kappa = g.kappa_weights(1.001).unwrap();
        let n = g.node_count();
        let mut fw = vec![vec![f64::INFINITY; n]; n];
        for (i, row) in fw.iter_mut().enumerate() {
            row[i] = 0.0;
        }
        for (e, &k) in g.edges().iter().zip(&kappa) {
            fw[e.u.0][e.v.0] = k;
            fw[e.v.0][e.u.0] = k;
        }
        for m in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let via = fw[i][m] + fw[m][j];
                    if via < fw[i][j] {
                        fw[i][j] = via;
                    }
                }
            }
        }
        let dm = DistanceMatrix::new(&g, &kappa);
        for i in 0..n {
            for j in 0..n {
                let d = dm.get(NodeId(i), NodeId(j));
                assert!((d - fw[i][j]).abs() <= 1e-12 * fw[i][j].max(1.0), "{i}-{j}: {d} vs {}", fw[i][j]);
            }
        }
    }
}
