//! Undirected agent graphs, connected components and the graph functionals
//! used by the game objectives (group count, agent-group index, edge
//! connectivity).
//!
//! Vertices are labeled `1..=n`. Edges are stored canonically as `(i, j)` with
//! `i < j`, sorted lexicographically, so that every graph has a fixed edge
//! indexing. Solver-side code addresses edge subsets of a base graph through
//! [`EdgeMask`] bitmasks over that indexing.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{GameError, Result};

/// An undirected edge `(i, j)` with `i < j`, 1-indexed.
pub type Edge = (usize, usize);

/// Bit `e` set means edge `e` (canonical index in the base graph) is in the set.
pub type EdgeMask = u64;

/// Largest number of edges addressable by an [`EdgeMask`].
pub const MAX_MASK_EDGES: usize = 64;

/// Undirected simple graph over agents `1..=n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "GraphLiteral", into = "GraphLiteral")]
pub struct Graph {
    n: usize,
    edges: Vec<Edge>,
}

/// On-disk form: `n` plus a list of `[i, j]` pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphLiteral {
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
}

impl TryFrom<GraphLiteral> for Graph {
    type Error = GameError;

    fn try_from(lit: GraphLiteral) -> Result<Self> {
        Graph::from_pairs(lit.n, lit.edges.iter().map(|p| (p[0], p[1])))
    }
}

impl From<Graph> for GraphLiteral {
    fn from(g: Graph) -> Self {
        GraphLiteral {
            n: g.n,
            edges: g.edges.iter().map(|&(i, j)| [i, j]).collect(),
        }
    }
}

/// Disjoint vertex groups covering `1..=n`, ordered by smallest member.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Partition {
    pub groups: Vec<Vec<usize>>,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// `Σ_p |V_p|² − n²`.
    pub fn group_index(&self) -> i64 {
        let n: usize = self.groups.iter().map(Vec::len).sum();
        let sq: i64 = self.groups.iter().map(|g| (g.len() * g.len()) as i64).sum();
        sq - (n * n) as i64
    }

    fn normalized(mut groups: Vec<Vec<usize>>) -> Self {
        for g in &mut groups {
            g.sort_unstable();
        }
        groups.retain(|g| !g.is_empty());
        groups.sort_by_key(|g| g[0]);
        Partition { groups }
    }
}

fn canonical(i: usize, j: usize) -> Edge {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

impl Graph {
    /// Builds a graph, rejecting self-loops, duplicates (in either
    /// orientation) and out-of-range endpoints.
    pub fn from_pairs<I>(n: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut seen = BTreeSet::new();
        for (i, j) in pairs {
            if i == j {
                return Err(GameError::InvalidInput(format!("self-loop on vertex {i}")));
            }
            if i == 0 || j == 0 || i > n || j > n {
                return Err(GameError::InvalidInput(format!(
                    "edge ({i}, {j}) has an endpoint outside 1..={n}"
                )));
            }
            if !seen.insert(canonical(i, j)) {
                return Err(GameError::InvalidInput(format!(
                    "duplicate edge ({i}, {j})"
                )));
            }
        }
        Ok(Graph {
            n,
            edges: seen.into_iter().collect(),
        })
    }

    pub fn empty(n: usize) -> Self {
        Graph {
            n,
            edges: Vec::new(),
        }
    }

    pub fn path(n: usize) -> Self {
        Graph {
            n,
            edges: (1..n).map(|i| (i, i + 1)).collect(),
        }
    }

    pub fn cycle(n: usize) -> Self {
        let mut g = Self::path(n);
        if n >= 3 {
            g.edges.push((1, n));
            g.edges.sort_unstable();
        }
        g
    }

    pub fn complete(n: usize) -> Self {
        let mut edges = Vec::new();
        for i in 1..=n {
            for j in i + 1..=n {
                edges.push((i, j));
            }
        }
        Graph { n, edges }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.binary_search(&canonical(i, j)).is_ok()
    }

    /// Canonical index of an edge, if present.
    pub fn edge_index(&self, e: Edge) -> Option<usize> {
        self.edges.binary_search(&canonical(e.0, e.1)).ok()
    }

    /// Mask with every edge of this graph set.
    pub fn full_mask(&self) -> EdgeMask {
        if self.edges.len() >= 64 {
            u64::MAX
        } else {
            (1u64 << self.edges.len()) - 1
        }
    }

    /// Converts an edge list into a mask over this graph's edge indexing.
    pub fn mask_of(&self, edges: &[Edge]) -> Result<EdgeMask> {
        if self.edges.len() > MAX_MASK_EDGES {
            return Err(GameError::WorkBound(format!(
                "{} edges exceed the {MAX_MASK_EDGES}-edge mask width",
                self.edges.len()
            )));
        }
        let mut mask = 0;
        for &e in edges {
            let idx = self.edge_index(e).ok_or_else(|| {
                GameError::InvalidAction(format!("edge ({}, {}) is not in the graph", e.0, e.1))
            })?;
            mask |= 1 << idx;
        }
        Ok(mask)
    }

    /// Edges selected by `mask`, in canonical order.
    pub fn edges_in(&self, mask: EdgeMask) -> Vec<Edge> {
        self.edges
            .iter()
            .enumerate()
            .filter(|(idx, _)| mask >> idx & 1 == 1)
            .map(|(_, &e)| e)
            .collect()
    }

    /// Subgraph on the same vertices keeping only the masked edges.
    pub fn restrict(&self, mask: EdgeMask) -> Graph {
        Graph {
            n: self.n,
            edges: self.edges_in(mask),
        }
    }

    /// Edges incident to vertex `v`, as a mask.
    pub fn incident_mask(&self, v: usize) -> EdgeMask {
        self.edges
            .iter()
            .enumerate()
            .filter(|(_, &(i, j))| i == v || j == v)
            .fold(0, |m, (idx, _)| m | 1 << idx)
    }

    /// Neighbors of each vertex, index 0 unused.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n + 1];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        adj
    }

    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter_map(|&(i, j)| {
                if i == v {
                    Some(j)
                } else if j == v {
                    Some(i)
                } else {
                    None
                }
            })
            .collect()
    }

    /// Connected components of the subgraph given by `mask`.
    pub fn components_of(&self, mask: EdgeMask) -> Partition {
        let mut parent: Vec<usize> = (0..=self.n).collect();
        fn find(parent: &mut [usize], mut v: usize) -> usize {
            while parent[v] != v {
                parent[v] = parent[parent[v]];
                v = parent[v];
            }
            v
        }
        for (idx, &(i, j)) in self.edges.iter().enumerate() {
            if mask >> idx & 1 == 1 {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); self.n + 1];
        for v in 1..=self.n {
            let r = find(&mut parent, v);
            groups[r].push(v);
        }
        Partition::normalized(groups)
    }

    /// Agent-group index of the subgraph given by `mask`.
    pub fn group_index_of(&self, mask: EdgeMask) -> i64 {
        self.components_of(mask).group_index()
    }
}

/// Connected components, ordered by smallest member label.
pub fn components(g: &Graph) -> Partition {
    let adj = g.adjacency();
    let mut seen = vec![false; g.n + 1];
    let mut groups = Vec::new();
    for start in 1..=g.n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut group = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    group.push(w);
                    queue.push_back(w);
                }
            }
        }
        groups.push(group);
    }
    Partition::normalized(groups)
}

pub fn group_count(g: &Graph) -> usize {
    components(g).len()
}

/// `Σ_p |V_p|² − |V|²` over the connected components; `0` iff connected.
pub fn agent_group_index(g: &Graph) -> i64 {
    components(g).group_index()
}

pub fn is_connected(g: &Graph) -> bool {
    group_count(g) <= 1
}

/// Minimum number of edges whose removal disconnects `g` (0 if it already is).
///
/// Computed as the minimum over `t` of unit-capacity max-flow from vertex 1.
pub fn edge_connectivity(g: &Graph) -> Result<usize> {
    if g.n < 2 {
        return Err(GameError::InvalidInput(
            "edge connectivity needs at least two vertices".into(),
        ));
    }
    if !is_connected(g) {
        return Ok(0);
    }
    let n = g.n;
    let mut best = usize::MAX;
    for t in 2..=n {
        best = best.min(unit_max_flow(g, 1, t));
    }
    Ok(best)
}

fn unit_max_flow(g: &Graph, s: usize, t: usize) -> usize {
    let n = g.n;
    // Undirected unit edges: residual capacity 1 in each direction.
    let mut cap = vec![vec![0i32; n + 1]; n + 1];
    for &(i, j) in &g.edges {
        cap[i][j] += 1;
        cap[j][i] += 1;
    }
    let mut flow = 0;
    loop {
        let mut prev = vec![usize::MAX; n + 1];
        prev[s] = s;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            if v == t {
                break;
            }
            for w in 1..=n {
                if prev[w] == usize::MAX && cap[v][w] > 0 {
                    prev[w] = v;
                    queue.push_back(w);
                }
            }
        }
        if prev[t] == usize::MAX {
            return flow;
        }
        let mut v = t;
        while v != s {
            let u = prev[v];
            cap[u][v] -= 1;
            cap[v][u] += 1;
            v = u;
        }
        flow += 1;
    }
}

/// Graph whose edge set is the union of the inputs' edge sets.
pub fn union_graph(gs: &[Graph]) -> Result<Graph> {
    let first = gs
        .first()
        .ok_or_else(|| GameError::InvalidInput("union of zero graphs".into()))?;
    let mut edges = BTreeSet::new();
    for g in gs {
        if g.n != first.n {
            return Err(GameError::InvalidInput(format!(
                "vertex count mismatch in union: {} vs {}",
                g.n, first.n
            )));
        }
        edges.extend(g.edges.iter().copied());
    }
    Ok(Graph {
        n: first.n,
        edges: edges.into_iter().collect(),
    })
}

/// Applies one step of attacks and recoveries to the base graph.
///
/// Returns the attacked graph (strong and normal edges removed) and the
/// resolved graph, where only edges that are both normally attacked and
/// recovered come back.
pub fn apply_actions(
    g0: &Graph,
    strong: &[Edge],
    normal: &[Edge],
    recover: &[Edge],
) -> Result<(Graph, Graph)> {
    let strong = g0.mask_of(strong)?;
    let normal = g0.mask_of(normal)?;
    let recover = g0.mask_of(recover)?;
    if strong & normal != 0 {
        return Err(GameError::InvalidAction(format!(
            "edges {:?} are attacked both strongly and normally",
            g0.edges_in(strong & normal)
        )));
    }
    let attacked = attacked_mask(g0.full_mask(), strong, normal);
    let resolved = resolved_mask(g0.full_mask(), strong, normal, recover);
    Ok((g0.restrict(attacked), g0.restrict(resolved)))
}

/// Surviving edges after attacks.
#[inline]
pub fn attacked_mask(base: EdgeMask, strong: EdgeMask, normal: EdgeMask) -> EdgeMask {
    base & !(strong | normal)
}

/// Surviving edges after attacks and recoveries.
#[inline]
pub fn resolved_mask(
    base: EdgeMask,
    strong: EdgeMask,
    normal: EdgeMask,
    recover: EdgeMask,
) -> EdgeMask {
    attacked_mask(base, strong, normal) | (recover & normal & !strong)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four_agents() -> Graph {
        Graph::from_pairs(4, [(1, 2), (2, 3), (3, 4), (2, 4)]).unwrap()
    }

    #[test]
    fn components_of_path_is_single_group() {
        let p = components(&Graph::path(3));
        assert_eq!(p.groups, vec![vec![1, 2, 3]]);
    }

    #[test]
    fn components_ordered_by_smallest_member() {
        let g = Graph::from_pairs(4, [(1, 2), (2, 4)]).unwrap();
        assert_eq!(components(&g).groups, vec![vec![1, 2, 4], vec![3]]);
    }

    #[test]
    fn node_three_cut_off_in_four_agent_graph() {
        let (_, resolved) = apply_actions(&four_agents(), &[], &[(2, 3), (3, 4)], &[]).unwrap();
        assert_eq!(components(&resolved).groups, vec![vec![1, 2, 4], vec![3]]);
    }

    #[test]
    fn group_counts() {
        assert_eq!(group_count(&Graph::complete(4)), 1);
        assert_eq!(group_count(&Graph::empty(4)), 4);
        let g = Graph::path(3).restrict(0b01);
        assert_eq!(group_count(&g), 2);
    }

    #[test]
    fn group_index_values() {
        assert_eq!(agent_group_index(&Graph::cycle(5)), 0);
        let g = Graph::from_pairs(4, [(1, 2), (2, 4)]).unwrap();
        assert_eq!(agent_group_index(&g), -6);
        assert_eq!(agent_group_index(&Graph::empty(3)), -6);
    }

    #[test]
    fn edge_connectivity_examples() {
        assert_eq!(edge_connectivity(&Graph::path(3)).unwrap(), 1);
        assert_eq!(edge_connectivity(&Graph::cycle(4)).unwrap(), 2);
        assert_eq!(edge_connectivity(&Graph::complete(4)).unwrap(), 3);
        assert_eq!(edge_connectivity(&Graph::empty(3)).unwrap(), 0);
        assert!(matches!(
            edge_connectivity(&Graph::empty(1)),
            Err(GameError::InvalidInput(_))
        ));
    }

    #[test]
    fn union_examples() {
        let g = Graph::path(3);
        assert_eq!(union_graph(std::slice::from_ref(&g)).unwrap(), g);
        let a = Graph::from_pairs(3, [(1, 2)]).unwrap();
        let b = Graph::from_pairs(3, [(2, 3)]).unwrap();
        assert_eq!(union_graph(&[a.clone(), b]).unwrap(), g);
        assert_eq!(union_graph(&[a.clone(), a.clone()]).unwrap(), a);
        assert!(union_graph(&[a, Graph::path(4)]).is_err());
    }

    #[test]
    fn apply_actions_examples() {
        let g = Graph::path(3);
        let (att, res) = apply_actions(&g, &[], &[], &[]).unwrap();
        assert_eq!((&att, &res), (&g, &g));

        let (att, res) = apply_actions(&g, &[], &[(1, 2)], &[(1, 2)]).unwrap();
        assert_eq!(att.edges(), &[(2, 3)]);
        assert_eq!(res, g);

        let (_, res) = apply_actions(&g, &[(1, 2)], &[], &[(1, 2)]).unwrap();
        assert_eq!(res.edges(), &[(2, 3)]);
    }

    #[test]
    fn apply_actions_rejects_bad_input() {
        let g = Graph::path(3);
        assert!(matches!(
            apply_actions(&g, &[(1, 2)], &[(2, 1)], &[]),
            Err(GameError::InvalidAction(_))
        ));
        assert!(matches!(
            apply_actions(&g, &[(1, 3)], &[], &[]),
            Err(GameError::InvalidAction(_))
        ));
    }

    #[test]
    fn graph_validation() {
        assert!(Graph::from_pairs(3, [(1, 1)]).is_err());
        assert!(Graph::from_pairs(3, [(1, 4)]).is_err());
        assert!(Graph::from_pairs(3, [(1, 2), (2, 1)]).is_err());
        let g = Graph::from_pairs(3, [(3, 2), (2, 1)]).unwrap();
        assert_eq!(g.edges(), &[(1, 2), (2, 3)]);
    }

    #[test]
    fn mask_components_match_graph_components() {
        let g = four_agents();
        for mask in 0..=g.full_mask() {
            assert_eq!(g.components_of(mask), components(&g.restrict(mask)));
        }
    }
}
