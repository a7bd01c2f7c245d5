use ndarray::Array2;

use super::EmbeddingSet;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::linalg::{orient, pairwise_squared, symmetric_eigen};
use crate::scalar::Scalar;

/// Undirected weighted graph as adjacency lists.
#[derive(Debug, Clone)]
pub struct Graph<T> {
    pub adjacency: Vec<Vec<(usize, T)>>,
}

impl<T: Scalar> Graph<T> {
    pub fn new(n: usize) -> Self {
        Self { adjacency: vec![Vec::new(); n] }
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    /// Adds the edge between `a` and `b`; a repeated edge keeps the smaller weight.
    pub fn add_edge(&mut self, a: usize, b: usize, w: T) {
        if a == b {
            return;
        }
        if let Some(pos) = self.adjacency[a].iter().position(|&(x, _)| x == b) {
            if w < self.adjacency[a][pos].1 {
                self.adjacency[a][pos].1 = w;
                let back = self.adjacency[b].iter().position(|&(x, _)| x == a).expect("edges are symmetric");
                self.adjacency[b][back].1 = w;
            }
            return;
        }
        self.adjacency[a].push((b, w));
        self.adjacency[b].push((a, w));
    }

    /// Connected components, each sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            let mut comp = vec![s];
            seen[s] = true;
            let mut stack = vec![s];
            while let Some(u) = stack.pop() {
                for &(v, _) in &self.adjacency[u] {
                    if !seen[v] {
                        seen[v] = true;
                        comp.push(v);
                        stack.push(v);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }
}

/// Symmetric k-nearest-neighbour graph with Euclidean edge weights; an edge
/// exists if either endpoint lists the other. Distance ties go to the lower
/// index.
pub fn knn_graph<T: Scalar>(points: &Array2<T>, k: usize) -> Graph<T> {
    let n = points.nrows();
    let d2 = pairwise_squared(points);
    let mut g = Graph::new(n);
    for i in 0..n {
        let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        others.sort_by(|&a, &b| d2[[i, a]].partial_cmp(&d2[[i, b]]).unwrap().then(a.cmp(&b)));
        for &j in others.iter().take(k) {
            g.add_edge(i, j, d2[[i, j]].sqrt());
        }
    }
    g
}

/// All-pairs shortest paths by one dense Dijkstra per source. Errors with the
/// component index lists when the graph is disconnected.
pub fn geodesic_distances<T: Scalar>(graph: &Graph<T>) -> std::result::Result<Array2<T>, Vec<Vec<usize>>> {
    let comps = graph.components();
    if comps.len() > 1 {
        return Err(comps);
    }
    let n = graph.len();
    let mut out = Array2::from_elem((n, n), T::infinity());
    let mut done = vec![false; n];
    for s in 0..n {
        done.fill(false);
        let mut dist = out.row_mut(s);
        dist[s] = T::zero();
        for _ in 0..n {
            let mut u = usize::MAX;
            for v in 0..n {
                if !done[v] && dist[v].is_finite() && (u == usize::MAX || dist[v] < dist[u]) {
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            for &(v, w) in &graph.adjacency[u] {
                let cand = dist[u] + w;
                if cand < dist[v] {
                    dist[v] = cand;
                }
            }
        }
    }
    Ok(out)
}

/// Isomap: k-NN graph geodesics followed by classical MDS.
pub fn isomap<T: Scalar>(matrix: &FeatureMatrix<T>, k_neighbors: usize, out_dims: usize) -> Result<EmbeddingSet<T>> {
    let n = matrix.len();
    if k_neighbors < 1 {
        return Err(Error::InvalidInput("k_neighbors must be at least 1".into()));
    }
    if n < 2 || out_dims < 1 || out_dims > n {
        return Err(Error::DimensionError(format!("out_dims {out_dims} for {n} points")));
    }
    let graph = knn_graph(&matrix.values, k_neighbors);
    let geo = geodesic_distances(&graph).map_err(|comps| Error::DisconnectedGraph {
        components: comps
            .into_iter()
            .map(|c| c.into_iter().map(|i| matrix.ids[i].clone()).collect())
            .collect(),
    })?;
    let coords = classical_mds(&geo, out_dims);
    EmbeddingSet::new(matrix.ids.clone(), coords)
}

/// Top eigenpairs of `B = −½ J D⁽²⁾ J`, coordinates `v·√λ` (negative
/// eigenvalues clamp to zero).
pub fn classical_mds<T: Scalar>(dist: &Array2<T>, out_dims: usize) -> Array2<T> {
    let n = dist.nrows();
    let nt = T::of_usize(n);
    let sq = dist.mapv(|d| d * d);
    let row_means: Vec<T> = (0..n).map(|i| sq.row(i).sum() / nt).collect();
    let grand = row_means.iter().copied().sum::<T>() / nt;
    let half = T::of(0.5);
    let b = Array2::from_shape_fn((n, n), |(i, j)| -half * (sq[[i, j]] - row_means[i] - row_means[j] + grand));
    let eig = symmetric_eigen(&b);
    let mut coords = Array2::zeros((n, out_dims));
    for c in 0..out_dims {
        let mut v = eig.vectors.column(c).to_owned();
        orient(v.view_mut());
        let s = eig.values[c].max(T::zero()).sqrt();
        coords.column_mut(c).assign(&(v * s));
    }
    coords
}
