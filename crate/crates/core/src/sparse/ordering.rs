use std::cmp::Reverse;
use std::collections::BinaryHeap;

/// Minimum-degree ordering on the explicit elimination graph. Ties go to the
/// lowest index so the result is deterministic. Returns `perm` with
/// `perm[new] = old`.
pub fn minimum_degree(adjacency: &[Vec<usize>]) -> Vec<usize> {
    let n = adjacency.len();
    let mut adj: Vec<Vec<usize>> = adjacency.to_vec();
    for a in &mut adj {
        a.sort_unstable();
        a.dedup();
    }
    let mut eliminated = vec![false; n];
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> = (0..n).map(|i| Reverse((adj[i].len(), i))).collect();
    let mut perm = Vec::with_capacity(n);
    let mut merged = Vec::new();
    while let Some(Reverse((deg, v))) = heap.pop() {
        if eliminated[v] || deg != adj[v].len() {
            continue;
        }
        eliminated[v] = true;
        perm.push(v);
        let clique = std::mem::take(&mut adj[v]);
        for &u in &clique {
            // adj[u] := (adj[u] ∪ clique) \ {u, v}
            merged.clear();
            let a = &adj[u];
            let (mut i, mut j) = (0, 0);
            while i < a.len() || j < clique.len() {
                let next = if j >= clique.len() || (i < a.len() && a[i] < clique[j]) {
                    i += 1;
                    a[i - 1]
                } else if i >= a.len() || clique[j] < a[i] {
                    j += 1;
                    clique[j - 1]
                } else {
                    i += 1;
                    j += 1;
                    a[i - 1]
                };
                if next != u && next != v {
                    merged.push(next);
                }
            }
            std::mem::swap(&mut adj[u], &mut merged);
            heap.push(Reverse((adj[u].len(), u)));
        }
    }
    perm
}
