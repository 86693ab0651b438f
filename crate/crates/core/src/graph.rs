//! Viewing graph, triplet covers and their dual graphs.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{epipole, BifocalTensor, EpipoleSide};
use crate::nview::NViewBifocal;

/// Default score below which a triplet is treated as collinear.
pub const DEFAULT_COLLINEARITY_THRESHOLD: f64 = 0.05;

/// Undirected camera graph with weighted edges `(i, j)`, `i < j`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ViewingGraph {
    pub n: usize,
    edges: BTreeMap<(usize, usize), f64>,
}

impl ViewingGraph {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            edges: BTreeMap::new(),
        }
    }

    pub fn complete(n: usize) -> Self {
        let mut g = Self::new(n);
        for i in 0..n {
            for j in i + 1..n {
                g.edges.insert((i, j), 1.0);
            }
        }
        g
    }

    /// Unit-weight graph over the measured blocks.
    pub fn from_measurements(m: &NViewBifocal) -> Self {
        let mut g = Self::new(m.n);
        for e in m.edges() {
            g.edges.insert(e, 1.0);
        }
        g
    }

    pub fn add_edge(&mut self, i: usize, j: usize, weight: f64) -> Result<()> {
        if i == j {
            return Err(Error::InvalidArgument(format!("self-loop at {i}")));
        }
        for idx in [i, j] {
            if idx >= self.n {
                return Err(Error::IndexOutOfRange { index: idx, n: self.n });
            }
        }
        let key = (i.min(j), i.max(j));
        if self.edges.contains_key(&key) {
            return Err(Error::DuplicateEdge(key.0, key.1));
        }
        self.edges.insert(key, weight);
        Ok(())
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains_key(&(i.min(j), i.max(j)))
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        self.edges.get(&(i.min(j), i.max(j))).copied()
    }

    pub fn edges(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.edges.iter().map(|(k, w)| (*k, *w))
    }

    /// All 3-cliques in lexicographic order.
    pub fn triangles(&self) -> Vec<[usize; 3]> {
        let mut adj = vec![BTreeSet::new(); self.n];
        for &(i, j) in self.edges.keys() {
            adj[i].insert(j);
            adj[j].insert(i);
        }
        let mut out = Vec::new();
        for &(i, j) in self.edges.keys() {
            for &k in adj[i].intersection(&adj[j]) {
                if k > j {
                    out.push([i, j, k]);
                }
            }
        }
        out.sort();
        out
    }
}

/// A virtual camera inserted for a collinear triplet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VirtualNode {
    pub id: usize,
    pub anchor: [usize; 3],
}

/// Triplets of cameras with the dual graph linking triplets that share two
/// cameras.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripletCover {
    pub triplets: Vec<[usize; 3]>,
    pub dual_edges: Vec<(usize, usize)>,
    #[serde(default)]
    pub virtual_nodes: Vec<VirtualNode>,
}

fn sorted3(t: [usize; 3]) -> [usize; 3] {
    let mut t = t;
    t.sort();
    t
}

fn shared(a: &[usize; 3], b: &[usize; 3]) -> usize {
    a.iter().filter(|x| b.contains(x)).count()
}

fn triplet_edges(t: &[usize; 3]) -> [(usize, usize); 3] {
    [(t[0], t[1]), (t[0], t[2]), (t[1], t[2])]
}

impl TripletCover {
    /// Canonicalizes each triplet (ascending ids), drops duplicates keeping
    /// the first occurrence, and computes the dual edges.
    pub fn from_triplets(triplets: Vec<[usize; 3]>) -> Self {
        let mut seen = BTreeSet::new();
        let triplets: Vec<[usize; 3]> = triplets
            .into_iter()
            .map(sorted3)
            .filter(|t| seen.insert(*t))
            .collect();
        let mut dual_edges = Vec::new();
        for a in 0..triplets.len() {
            for b in a + 1..triplets.len() {
                if shared(&triplets[a], &triplets[b]) == 2 {
                    dual_edges.push((a, b));
                }
            }
        }
        Self {
            triplets,
            dual_edges,
            virtual_nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    /// One more than the largest camera id in the cover.
    pub fn num_cameras(&self) -> usize {
        self.triplets.iter().flatten().map(|&c| c + 1).max().unwrap_or(0)
    }

    pub fn is_virtual(&self, camera: usize) -> bool {
        self.virtual_nodes.iter().any(|v| v.id == camera)
    }

    /// Viewing-graph edges used by at least one triplet.
    pub fn covered_edges(&self) -> BTreeSet<(usize, usize)> {
        self.triplets.iter().flat_map(triplet_edges).collect()
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.triplets.len()];
        for &(a, b) in &self.dual_edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for v in &mut adj {
            v.sort();
        }
        adj
    }

    /// Connected components of the dual graph, largest first, ties by
    /// smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let adj = self.adjacency();
        let mut seen = vec![false; self.triplets.len()];
        let mut comps = Vec::new();
        for s in 0..self.triplets.len() {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut comp = vec![s];
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for &w in &adj[u] {
                    if !seen[w] {
                        seen[w] = true;
                        comp.push(w);
                        queue.push_back(w);
                    }
                }
            }
            comp.sort();
            comps.push(comp);
        }
        comps.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
        comps
    }

    pub fn is_connected(&self) -> bool {
        self.triplets.is_empty() || self.components().len() == 1
    }

    /// Breadth-first order of triplets from the lowest id, with the parent of
    /// each visited triplet. Fails when the dual graph is disconnected.
    pub fn bfs_order(&self) -> Result<Vec<(usize, Option<usize>)>> {
        if self.triplets.is_empty() {
            return Ok(Vec::new());
        }
        let adj = self.adjacency();
        let mut seen = vec![false; self.triplets.len()];
        let mut order = vec![(0, None)];
        seen[0] = true;
        let mut queue = VecDeque::from([0]);
        while let Some(u) = queue.pop_front() {
            for &w in &adj[u] {
                if !seen[w] {
                    seen[w] = true;
                    order.push((w, Some(u)));
                    queue.push_back(w);
                }
            }
        }
        if order.len() != self.triplets.len() {
            return Err(Error::NotConnected);
        }
        Ok(order)
    }

    /// Connectivity and shared-two-camera property of every dual edge.
    pub fn check_invariants(&self) -> Result<()> {
        for &(a, b) in &self.dual_edges {
            if shared(&self.triplets[a], &self.triplets[b]) != 2 {
                return Err(Error::InvalidArgument(format!("dual edge ({a}, {b}) does not share two cameras")));
            }
        }
        for t in &self.triplets {
            if t[0] == t[1] || t[1] == t[2] {
                return Err(Error::InvalidArgument(format!("triplet {t:?} repeats a camera")));
            }
        }
        if !self.is_connected() {
            return Err(Error::NotConnected);
        }
        Ok(())
    }
}

/// Consecutive triplets `(i-1, i, i+1)`.
pub fn sequential_cover(n: usize) -> Result<TripletCover> {
    if n < 3 {
        return Err(Error::TooFewCameras(n));
    }
    Ok(TripletCover::from_triplets((1..n - 1).map(|i| [i - 1, i, i + 1]).collect()))
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut y = x;
        while self.0[y] != r {
            let next = self.0[y];
            self.0[y] = r;
            y = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Greedy cover: triangles sorted by minimum edge weight (descending, then
/// lexicographic) are added when they cover a new edge or join two dual
/// components. The result may be disconnected.
pub fn heuristic_cover(g: &ViewingGraph) -> Result<TripletCover> {
    let mut tris = g.triangles();
    if tris.is_empty() {
        return Err(Error::NoTriangles);
    }
    let min_w = |t: &[usize; 3]| {
        triplet_edges(t)
            .iter()
            .map(|&(i, j)| g.weight(i, j).unwrap_or(0.0))
            .fold(f64::INFINITY, f64::min)
    };
    tris.sort_by(|a, b| min_w(b).total_cmp(&min_w(a)).then(a.cmp(b)));
    let mut chosen: Vec<[usize; 3]> = Vec::new();
    let mut covered = BTreeSet::new();
    let mut uf = UnionFind::new(tris.len());
    for t in tris {
        let idx = chosen.len();
        let new_edge = triplet_edges(&t).iter().any(|e| !covered.contains(e));
        let neighbors: Vec<usize> = (0..idx).filter(|&k| shared(&chosen[k], &t) == 2).collect();
        let roots: BTreeSet<usize> = neighbors.iter().map(|&k| uf.find(k)).collect();
        if new_edge || roots.len() > 1 {
            chosen.push(t);
            for &k in &neighbors {
                uf.union(k, idx);
            }
            covered.extend(triplet_edges(&t));
        }
    }
    Ok(TripletCover::from_triplets(chosen))
}

/// Connects the dual graph by repeatedly adding the shortest path (in the
/// dual graph of `full`) between the two largest components.
pub fn enrich_connectivity(cover: &TripletCover, full: &[[usize; 3]]) -> Result<TripletCover> {
    let mut current = cover.clone();
    // node set: the full cover plus the current triplets
    let mut nodes: Vec<[usize; 3]> = full.iter().copied().map(sorted3).collect();
    nodes.extend(current.triplets.iter().copied());
    nodes.sort();
    nodes.dedup();
    let index: BTreeMap<[usize; 3], usize> = nodes.iter().enumerate().map(|(k, t)| (*t, k)).collect();
    let mut by_edge: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (k, t) in nodes.iter().enumerate() {
        for e in triplet_edges(t) {
            by_edge.entry(e).or_default().push(k);
        }
    }
    let neighbors = |k: usize| -> Vec<usize> {
        let mut out: Vec<usize> = triplet_edges(&nodes[k])
            .iter()
            .flat_map(|e| by_edge[e].iter().copied())
            .filter(|&w| w != k)
            .collect();
        out.sort();
        out.dedup();
        out
    };
    loop {
        let comps = current.components();
        if comps.len() <= 1 {
            return Ok(current);
        }
        let src: Vec<usize> = comps[0].iter().map(|&c| index[&current.triplets[c]]).collect();
        let dst: BTreeSet<usize> = comps[1].iter().map(|&c| index[&current.triplets[c]]).collect();
        let mut parent: Vec<Option<usize>> = vec![None; nodes.len()];
        let mut seen = vec![false; nodes.len()];
        let mut queue = VecDeque::new();
        for &s in &src {
            seen[s] = true;
            queue.push_back(s);
        }
        let mut hit = None;
        'bfs: while let Some(u) = queue.pop_front() {
            for w in neighbors(u) {
                if !seen[w] {
                    seen[w] = true;
                    parent[w] = Some(u);
                    if dst.contains(&w) {
                        hit = Some(w);
                        break 'bfs;
                    }
                    queue.push_back(w);
                }
            }
        }
        let end = hit.ok_or(Error::Unconnectable)?;
        let mut path = Vec::new();
        let mut cur = parent[end];
        while let Some(p) = cur {
            if src.contains(&p) {
                break;
            }
            path.push(nodes[p]);
            cur = parent[p];
        }
        path.reverse();
        let virtual_nodes = current.virtual_nodes.clone();
        let mut triplets = current.triplets.clone();
        triplets.extend(path);
        current = TripletCover::from_triplets(triplets);
        current.virtual_nodes = virtual_nodes;
    }
}

/// `sigma_2 / sigma_1` of the centered camera centers; 0 when collinear.
pub fn collinearity_score_centers(centers: &[Vector3<f64>; 3]) -> f64 {
    let mean = (centers[0] + centers[1] + centers[2]) / 3.0;
    let m = Matrix3::from_columns(&[centers[0] - mean, centers[1] - mean, centers[2] - mean]);
    let s = crate::linalg::singular_values3(&m);
    if s[0] == 0.0 {
        return 0.0;
    }
    s[1] / s[0]
}

/// Sine of the angle between the two epipoles in each view, minimized over
/// the views. `f[k]` relates views `(0,1)`, `(0,2)` and `(1,2)` in that order.
pub fn collinearity_score_tensors(f01: &BifocalTensor, f02: &BifocalTensor, f12: &BifocalTensor) -> Result<f64> {
    // view 0 sees centers 1 and 2 as left epipoles of f01 and f02
    let v0 = (epipole(f01, EpipoleSide::Left)?, epipole(f02, EpipoleSide::Left)?);
    let v1 = (epipole(f01, EpipoleSide::Right)?, epipole(f12, EpipoleSide::Left)?);
    let v2 = (epipole(f02, EpipoleSide::Right)?, epipole(f12, EpipoleSide::Right)?);
    Ok([v0, v1, v2]
        .iter()
        .map(|(a, b)| a.cross(b).norm().min(1.0))
        .fold(f64::INFINITY, f64::min))
}

/// Replaces every triplet scoring below `threshold` by the three triplets
/// that pair its edges with a new virtual camera, then drops redundant
/// virtual triplets.
///
/// Virtual ids start at `first_virtual_id` in triplet order. Pruning visits
/// virtual triplets in lexicographic order and removes one when the dual graph
/// stays connected and every required edge stays covered. Required edges are
/// the virtual edges and the edges of triplets that were not replaced.
pub fn insert_virtual_and_prune(
    cover: &TripletCover,
    scores: &[f64],
    threshold: f64,
    first_virtual_id: usize,
) -> Result<TripletCover> {
    if scores.len() != cover.triplets.len() {
        return Err(Error::InvalidArgument(format!(
            "{} scores for {} triplets",
            scores.len(),
            cover.triplets.len()
        )));
    }
    let mut kept = Vec::new();
    let mut virtual_triplets = Vec::new();
    let mut nodes = cover.virtual_nodes.clone();
    let mut next = first_virtual_id;
    for (t, &s) in cover.triplets.iter().zip(scores) {
        if s < threshold && !t.iter().any(|c| cover.is_virtual(*c)) {
            let v = next;
            next += 1;
            nodes.push(VirtualNode { id: v, anchor: *t });
            for (a, b) in triplet_edges(t) {
                virtual_triplets.push([a, b, v]);
            }
        } else {
            kept.push(*t);
        }
    }
    if virtual_triplets.is_empty() {
        return Ok(cover.clone());
    }
    let mut required: BTreeSet<(usize, usize)> = kept.iter().flat_map(triplet_edges).collect();
    for node in &nodes {
        for &c in &node.anchor {
            required.insert((c.min(node.id), c.max(node.id)));
        }
    }
    let build = |kept: &[[usize; 3]], virt: &[[usize; 3]]| {
        let mut all = kept.to_vec();
        all.extend_from_slice(virt);
        let mut c = TripletCover::from_triplets(all);
        c.virtual_nodes = nodes.clone();
        c
    };
    let mut order = virtual_triplets.clone();
    order.sort();
    for t in order {
        let trial: Vec<[usize; 3]> = virtual_triplets.iter().copied().filter(|x| *x != t).collect();
        let candidate = build(&kept, &trial);
        let covered = candidate.covered_edges();
        if candidate.is_connected() && required.is_subset(&covered) {
            virtual_triplets = trial;
        }
    }
    Ok(build(&kept, &virtual_triplets))
}
