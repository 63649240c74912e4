//! Compatibility graphs: neighborhoods, independent sets, bipartiteness and
//! Erdős–Rényi sampling.

use std::collections::{BTreeSet, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sorted set of vertex indices.
pub type VertexSet = BTreeSet<usize>;

/// Finite simple undirected graph on vertices `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphRepr", into = "GraphRepr")]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adj: Vec<Vec<usize>>,
}

/// JSON form: `{"n": 3, "edges": [[0,1],[0,2],[1,2]]}`.
#[derive(Serialize, Deserialize)]
struct GraphRepr {
    n: usize,
    edges: Vec<[usize; 2]>,
}

impl TryFrom<GraphRepr> for Graph {
    type Error = Error;

    fn try_from(r: GraphRepr) -> Result<Self> {
        Graph::new(r.n, r.edges.iter().map(|e| (e[0], e[1])))
    }
}

impl From<Graph> for GraphRepr {
    fn from(g: Graph) -> Self {
        GraphRepr {
            n: g.n,
            edges: g.edges.iter().map(|&(i, j)| [i, j]).collect(),
        }
    }
}

impl Graph {
    /// Builds a graph, rejecting self-loops, duplicates and out-of-range
    /// endpoints. Edge orientation in the input is irrelevant.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Input("graph must have at least one vertex".into()));
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::Input(format!("edge ({a},{b}) out of range for n={n}")));
            }
            if a == b {
                return Err(Error::Input(format!("self-loop at vertex {a}")));
            }
            let e = (a.min(b), a.max(b));
            if !set.insert(e) {
                return Err(Error::Input(format!("duplicate edge ({},{})", e.0, e.1)));
            }
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut adj = vec![Vec::new(); n];
        for &(i, j) in &edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        Ok(Self { n, edges, adj })
    }

    pub fn complete(n: usize) -> Self {
        let edges = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)));
        Self::new(n, edges).expect("complete graph is simple")
    }

    pub fn path(n: usize) -> Self {
        Self::new(n, (1..n).map(|i| (i - 1, i))).expect("path graph is simple")
    }

    pub fn cycle(n: usize) -> Self {
        assert!(n >= 3, "cycle needs at least three vertices");
        Self::new(n, (0..n).map(|i| (i, (i + 1) % n))).expect("cycle graph is simple")
    }

    /// Triangle 0-1-2 with a pendant vertex 3 attached to 0.
    pub fn paw() -> Self {
        Self::new(4, [(0, 1), (0, 2), (1, 2), (0, 3)]).expect("paw graph is simple")
    }

    pub fn n_vertices(&self) -> usize {
        self.n
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Edges as `(i, j)` with `i < j`, sorted lexicographically.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Sorted neighbor list of `v`.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i < self.n && self.adj[i].binary_search(&j).is_ok()
    }

    /// Both orientations `(j, i)` of every edge, sorted.
    pub fn ordered_pairs(&self) -> Vec<(usize, usize)> {
        let mut v: Vec<_> = self
            .edges
            .iter()
            .flat_map(|&(i, j)| [(i, j), (j, i)])
            .collect();
        v.sort_unstable();
        v
    }

    fn check_vertices<'a>(&self, a: impl IntoIterator<Item = &'a usize>) -> Result<()> {
        for &v in a {
            if v >= self.n {
                return Err(Error::Input(format!(
                    "vertex {v} out of range for n={}",
                    self.n
                )));
            }
        }
        Ok(())
    }

    /// `E(A)`: every vertex adjacent to some member of `a`.
    pub fn neighborhood(&self, a: &VertexSet) -> Result<VertexSet> {
        self.check_vertices(a)?;
        Ok(a.iter().flat_map(|&v| self.adj[v].iter().copied()).collect())
    }

    /// True iff no two members of `a` are adjacent. The empty set counts as
    /// independent here; callers that need non-emptiness check it.
    pub fn is_independent(&self, a: &VertexSet) -> bool {
        a.iter()
            .all(|&v| v < self.n && self.adj[v].iter().all(|u| !a.contains(u)))
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &u in &self.adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                    stack.push(u);
                }
            }
        }
        count == self.n
    }

    /// Two-colors the graph by BFS. On failure returns an odd cycle found
    /// from the first monochromatic edge.
    pub fn bipartiteness(&self) -> Bipartiteness {
        let mut color: Vec<Option<bool>> = vec![None; self.n];
        let mut parent = vec![usize::MAX; self.n];
        for root in 0..self.n {
            if color[root].is_some() {
                continue;
            }
            color[root] = Some(false);
            let mut queue = VecDeque::from([root]);
            while let Some(v) = queue.pop_front() {
                let cv = color[v].unwrap();
                for &u in &self.adj[v] {
                    match color[u] {
                        None => {
                            color[u] = Some(!cv);
                            parent[u] = v;
                            queue.push_back(u);
                        }
                        Some(cu) if cu == cv => {
                            return Bipartiteness::OddCycle(odd_cycle(&parent, v, u));
                        }
                        Some(_) => {}
                    }
                }
            }
        }
        let (left, right) = (0..self.n).partition(|&v| color[v] == Some(false));
        Bipartiteness::Bipartite(left, right)
    }

    pub fn is_bipartite(&self) -> bool {
        self.bipartiteness().is_bipartite()
    }

    /// Exact `max { λ(I) − λ(E(I)) : I ⊆ s independent, I ≠ ∅ }` by
    /// depth-first branch-and-bound.
    ///
    /// A partial set `I` with remaining candidates `C` is pruned when
    /// `λ(I) + λ(C) − λ(E(I))` cannot beat the incumbent: candidates can
    /// only add intensity to `I` and neighbors to `E(I)`.
    pub fn max_deficit(&self, lambda: &[f64], s: &VertexSet) -> Result<MaxDeficit> {
        if lambda.len() != self.n {
            return Err(Error::Input(format!(
                "lambda has {} entries, graph has {} vertices",
                lambda.len(),
                self.n
            )));
        }
        if let Some(i) = lambda.iter().position(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::Input(format!("lambda[{i}] must be > 0 and finite")));
        }
        self.check_vertices(s)?;
        if s.is_empty() {
            return Ok(MaxDeficit::vacuous());
        }
        // Heavier vertices first: good incumbents early make pruning bite.
        let mut order: Vec<usize> = s.iter().copied().collect();
        order.sort_by(|&a, &b| {
            let ka = lambda[a] - self.adj[a].iter().map(|&u| lambda[u]).sum::<f64>();
            let kb = lambda[b] - self.adj[b].iter().map(|&u| lambda[u]).sum::<f64>();
            kb.total_cmp(&ka).then(a.cmp(&b))
        });
        let mut search = DeficitSearch {
            g: self,
            lambda,
            order: &order,
            cover: vec![0; self.n],
            current: Vec::new(),
            best: f64::NEG_INFINITY,
            best_set: Vec::new(),
        };
        search.descend(0, 0.0, 0.0);
        Ok(MaxDeficit {
            value: search.best,
            witness: Some(search.best_set.into_iter().collect()),
        })
    }

    /// Samples `G(n, p)`. Pairs `(i, j)`, `i < j`, are visited in
    /// lexicographic order and each consumes exactly one uniform draw.
    pub fn erdos_renyi<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<Self> {
        if n == 0 {
            return Err(Error::Input("n must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Input(format!("p={p} is not a probability")));
        }
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let u: f64 = rng.random();
                if u < p {
                    edges.push((i, j));
                }
            }
        }
        Self::new(n, edges)
    }
}

fn odd_cycle(parent: &[usize], a: usize, b: usize) -> Vec<usize> {
    let chain = |mut v: usize| {
        let mut path = vec![v];
        while parent[v] != usize::MAX {
            v = parent[v];
            path.push(v);
        }
        path
    };
    let pa = chain(a);
    let pb = chain(b);
    // Strip the common suffix down to the lowest common ancestor.
    let mut ia = pa.len();
    let mut ib = pb.len();
    while ia > 1 && ib > 1 && pa[ia - 2] == pb[ib - 2] {
        ia -= 1;
        ib -= 1;
    }
    let mut cycle: Vec<usize> = pa[..ia].to_vec();
    cycle.extend(pb[..ib - 1].iter().rev());
    cycle
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Bipartiteness {
    Bipartite(VertexSet, VertexSet),
    /// Vertices of an odd cycle in traversal order.
    OddCycle(Vec<usize>),
}

impl Bipartiteness {
    pub fn is_bipartite(&self) -> bool {
        matches!(self, Bipartiteness::Bipartite(..))
    }
}

/// Result of [`Graph::max_deficit`].
#[derive(Debug, Clone, PartialEq)]
pub struct MaxDeficit {
    /// `-inf` when the search set was empty.
    pub value: f64,
    pub witness: Option<VertexSet>,
}

impl MaxDeficit {
    fn vacuous() -> Self {
        Self {
            value: f64::NEG_INFINITY,
            witness: None,
        }
    }

    pub fn is_vacuous(&self) -> bool {
        self.witness.is_none()
    }
}

struct DeficitSearch<'a> {
    g: &'a Graph,
    lambda: &'a [f64],
    order: &'a [usize],
    /// Number of members of the current set adjacent to each vertex.
    cover: Vec<u32>,
    current: Vec<usize>,
    best: f64,
    best_set: Vec<usize>,
}

impl DeficitSearch<'_> {
    fn descend(&mut self, from: usize, mass: f64, nbr_mass: f64) {
        if !self.current.is_empty() && mass - nbr_mass > self.best {
            self.best = mass - nbr_mass;
            self.best_set = self.current.clone();
        }
        let remaining: f64 = self.order[from..]
            .iter()
            .filter(|&&v| self.cover[v] == 0)
            .map(|&v| self.lambda[v])
            .sum();
        if mass + remaining - nbr_mass <= self.best {
            return;
        }
        for k in from..self.order.len() {
            let v = self.order[k];
            if self.cover[v] != 0 {
                continue;
            }
            let mut added = 0.0;
            for &u in &self.g.adj[v] {
                if self.cover[u] == 0 {
                    added += self.lambda[u];
                }
                self.cover[u] += 1;
            }
            self.current.push(v);
            self.descend(k + 1, mass + self.lambda[v], nbr_mass + added);
            self.current.pop();
            for &u in &self.g.adj[v] {
                self.cover[u] -= 1;
            }
        }
    }
}
