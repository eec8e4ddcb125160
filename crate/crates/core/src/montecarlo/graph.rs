//! Undirected simple graphs in compressed adjacency form, random generators and a
//! plain edge-list format (`u v` per line, `#` starts a comment).

use std::io::{self, BufRead, Write};

use rand::Rng;

use crate::error::ModelError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl Graph {
    /// Builds the graph from undirected edges, dropping self-loops and duplicates.
    pub fn from_edges(n: usize, edges: &[(u32, u32)]) -> Self {
        let mut degree = vec![0usize; n];
        for &(u, v) in edges {
            if u != v {
                degree[u as usize] += 1;
                degree[v as usize] += 1;
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..n].to_vec();
        let mut targets = vec![0u32; offsets[n]];
        for &(u, v) in edges {
            if u != v {
                targets[fill[u as usize]] = v;
                fill[u as usize] += 1;
                targets[fill[v as usize]] = u;
                fill[v as usize] += 1;
            }
        }
        // sort and dedupe each adjacency list, then compact
        let mut out_offsets = Vec::with_capacity(n + 1);
        out_offsets.push(0);
        let mut out = Vec::with_capacity(targets.len());
        for i in 0..n {
            let row = &mut targets[offsets[i]..offsets[i + 1]];
            row.sort_unstable();
            let mut last = None;
            for &t in row.iter() {
                if last != Some(t) {
                    out.push(t);
                    last = Some(t);
                }
            }
            out_offsets.push(out.len());
        }
        Graph { offsets: out_offsets, targets: out }
    }

    /// Every pair connected.
    pub fn complete(n: usize) -> Self {
        let mut edges = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for u in 0..n as u32 {
            for v in u + 1..n as u32 {
                edges.push((u, v));
            }
        }
        Self::from_edges(n, &edges)
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len() / 2
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn mean_degree(&self) -> f64 {
        self.targets.len() as f64 / self.node_count() as f64
    }

    /// Each undirected edge once, smaller endpoint first.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.node_count()).flat_map(move |u| {
            self.neighbors(u).iter().filter(move |&&v| v as usize > u).map(move |&v| (u as u32, v))
        })
    }

    pub fn write_edge_list<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "# nodes {}", self.node_count())?;
        for (u, v) in self.edges() {
            writeln!(out, "{u} {v}")?;
        }
        Ok(())
    }

    /// Reads an edge list. The node count is `n` when given, otherwise taken from a
    /// `# nodes <n>` header or the largest index plus one.
    pub fn read_edge_list<R: BufRead>(input: R, n: Option<usize>) -> Result<Self, ModelError> {
        let mut edges = Vec::new();
        let mut header = None;
        let mut max_index = None::<u32>;
        for (lineno, line) in input.lines().enumerate() {
            let line = line.map_err(|e| ModelError::Parse(format!("edge list: {e}")))?;
            let text = line.trim();
            if let Some(rest) = text.strip_prefix('#') {
                if let Some(count) = rest.trim().strip_prefix("nodes") {
                    header = count.trim().parse::<usize>().ok();
                }
                continue;
            }
            if text.is_empty() {
                continue;
            }
            let bad = || ModelError::Parse(format!("edge list line {}: expected `u v`, got `{text}`", lineno + 1));
            let mut parts = text.split_whitespace();
            let u: u32 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let v: u32 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            if parts.next().is_some() {
                return Err(bad());
            }
            max_index = Some(max_index.map_or(u.max(v), |m| m.max(u).max(v)));
            edges.push((u, v));
        }
        let inferred = max_index.map_or(0, |m| m as usize + 1);
        let n = n.or(header).unwrap_or(inferred);
        if inferred > n {
            return Err(ModelError::Parse(format!("edge list mentions node {} but the graph has {n} nodes", inferred - 1)));
        }
        Ok(Self::from_edges(n, &edges))
    }
}

/// `G(n, p)` with `p = mean_degree / (n - 1)`, drawn by geometric skipping over the
/// lower triangle.
pub fn erdos_renyi<R: Rng + ?Sized>(n: usize, mean_degree: f64, rng: &mut R) -> Graph {
    let mut edges = Vec::new();
    if n < 2 {
        return Graph::from_edges(n, &edges);
    }
    let p = (mean_degree / (n as f64 - 1.0)).clamp(0.0, 1.0);
    if p >= 1.0 {
        return Graph::complete(n);
    }
    if p > 0.0 {
        edges.reserve((p * n as f64 * (n as f64 - 1.0) / 2.0 * 1.05) as usize);
        let log_q = (1.0 - p).ln();
        let (mut v, mut w): (i64, i64) = (1, -1);
        let n = n as i64;
        while v < n {
            let r: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
            w += 1 + (r.ln() / log_q).floor() as i64;
            while w >= v && v < n {
                w -= v;
                v += 1;
            }
            if v < n {
                edges.push((v as u32, w as u32));
            }
        }
    }
    Graph::from_edges(n, &edges)
}

/// Preferential attachment: a clique on `m + 1` nodes, then every new node links to
/// `m = ceil(mean_degree / 2)` distinct existing nodes picked with probability
/// proportional to their degree.
pub fn barabasi_albert<R: Rng + ?Sized>(n: usize, mean_degree: f64, rng: &mut R) -> Graph {
    let m = ((mean_degree / 2.0).ceil() as usize).max(1);
    let seed = (m + 1).min(n);
    let mut edges = Vec::with_capacity(n * m);
    // every edge endpoint appears once here, so a uniform pick is degree-weighted
    let mut ends: Vec<u32> = Vec::with_capacity(2 * n * m);
    for u in 0..seed as u32 {
        for v in u + 1..seed as u32 {
            edges.push((u, v));
            ends.push(u);
            ends.push(v);
        }
    }
    let mut chosen: Vec<u32> = Vec::with_capacity(m);
    for new in seed..n {
        chosen.clear();
        while chosen.len() < m.min(new) {
            let t = ends[rng.gen_range(0..ends.len())];
            if !chosen.contains(&t) {
                chosen.push(t);
            }
        }
        for &t in &chosen {
            edges.push((new as u32, t));
            ends.push(new as u32);
            ends.push(t);
        }
    }
    Graph::from_edges(n, &edges)
}
