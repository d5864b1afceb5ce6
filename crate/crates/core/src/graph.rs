//! Abelian stacks on small explicit directed graphs.
//!
//! Used to exercise the structural results (exchangeability of rotors below
//! the top, removal of rotor cycles) on graphs other than the lattice.
//!
//! Text format, one item per line, `#` starts a comment:
//!
//! ```text
//! 0 1            # edge from vertex 0 to vertex 1
//! 1 0
//! stack 0: 0 0 1 # stack prefix at vertex 0, as local out-edge indices
//! ```
//!
//! Out-edges of a vertex are numbered in order of appearance. A stack lists
//! `ρ_0, ρ_1, ...`; past the listed prefix it cycles through the out-edges
//! `0, 1, ..., d-1` forever.

use alloc::collections::VecDeque;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SmallGraph {
    /// `out[v]` lists the targets of the out-edges of `v`, by local index.
    out: Vec<Vec<usize>>,
    /// Stack prefix per vertex, as local out-edge indices.
    stacks: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GraphError {
    Parse { line: usize, msg: String },
    NoOutEdges(usize),
    BadStackEntry { vertex: usize, entry: usize },
    NotStronglyConnected,
    TooManyChips,
}

impl fmt::Display for GraphError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphError::Parse { line, msg } => write!(f, "line {line}: {msg}"),
            GraphError::NoOutEdges(v) => write!(f, "vertex {v} has no out-edges"),
            GraphError::BadStackEntry { vertex, entry } => {
                write!(f, "stack at vertex {vertex} names missing out-edge {entry}")
            }
            GraphError::NotStronglyConnected => f.write_str("graph is not strongly connected"),
            GraphError::TooManyChips => f.write_str("more chips than vertices"),
        }
    }
}

/// Final state of a process on a small graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphOutcome {
    pub odometer: Vec<u64>,
    pub chips: Vec<i64>,
    /// `Top_ρ(u)` as a local out-edge index per vertex.
    pub top: Vec<usize>,
}

impl SmallGraph {
    /// Builds a graph from per-vertex target lists and stack prefixes.
    pub fn new(out: Vec<Vec<usize>>, stacks: Vec<Vec<usize>>) -> Result<Self, GraphError> {
        let n = out.len();
        let mut stacks = stacks;
        stacks.resize(n, Vec::new());
        for (v, targets) in out.iter().enumerate() {
            if targets.is_empty() {
                return Err(GraphError::NoOutEdges(v));
            }
            if let Some(&t) = targets.iter().find(|t| **t >= n) {
                return Err(GraphError::Parse { line: 0, msg: alloc::format!("edge {v} -> {t} leaves the graph") });
            }
            if let Some(&e) = stacks[v].iter().find(|e| **e >= targets.len()) {
                return Err(GraphError::BadStackEntry { vertex: v, entry: e });
            }
        }
        let g = SmallGraph { out, stacks };
        if !g.strongly_connected() {
            return Err(GraphError::NotStronglyConnected);
        }
        Ok(g)
    }

    pub fn parse(text: &str) -> Result<Self, GraphError> {
        let mut edges: Vec<(usize, usize)> = Vec::new();
        let mut stack_lines: Vec<(usize, Vec<usize>)> = Vec::new();
        let num = |tok: &str, line: usize| -> Result<usize, GraphError> {
            tok.parse().map_err(|_| GraphError::Parse { line, msg: alloc::format!("expected integer, got {tok:?}") })
        };
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(rest) = body.strip_prefix("stack") {
                let (head, tail) = rest
                    .split_once(':')
                    .ok_or(GraphError::Parse { line, msg: "expected `stack <v>: <indices>`".to_string() })?;
                let v = num(head.trim(), line)?;
                let entries = tail.split_whitespace().map(|t| num(t, line)).collect::<Result<Vec<_>, _>>()?;
                stack_lines.push((v, entries));
            } else {
                let toks: Vec<&str> = body.split_whitespace().collect();
                if toks.len() != 2 {
                    return Err(GraphError::Parse { line, msg: "expected `src dst`".to_string() });
                }
                edges.push((num(toks[0], line)?, num(toks[1], line)?));
            }
        }
        let n = edges.iter().map(|(a, b)| a.max(b) + 1).chain(stack_lines.iter().map(|(v, _)| v + 1)).max().unwrap_or(0);
        let mut out = vec![Vec::new(); n];
        for (a, b) in edges {
            out[a].push(b);
        }
        let mut stacks = vec![Vec::new(); n];
        for (v, s) in stack_lines {
            stacks[v] = s;
        }
        SmallGraph::new(out, stacks)
    }

    /// Serialises to the text format accepted by [`SmallGraph::parse`].
    pub fn to_text(&self) -> String {
        use core::fmt::Write;
        let mut s = String::new();
        for (v, ts) in self.out.iter().enumerate() {
            for t in ts {
                let _ = writeln!(s, "{v} {t}");
            }
        }
        for (v, st) in self.stacks.iter().enumerate() {
            if !st.is_empty() {
                let _ = write!(s, "stack {v}:");
                for e in st {
                    let _ = write!(s, " {e}");
                }
                s.push('\n');
            }
        }
        s
    }

    pub fn num_vertices(&self) -> usize {
        self.out.len()
    }

    pub fn out_degree(&self, v: usize) -> usize {
        self.out[v].len()
    }

    pub fn target(&self, v: usize, edge: usize) -> usize {
        self.out[v][edge]
    }

    pub fn stack_prefix(&self, v: usize) -> &[usize] {
        &self.stacks[v]
    }

    /// `ρ_k(v)` as a local out-edge index.
    pub fn rotor(&self, v: usize, k: u64) -> usize {
        let p = &self.stacks[v];
        if (k as usize) < p.len() {
            p[k as usize]
        } else {
            (k as usize - p.len()) % self.out[v].len()
        }
    }

    /// A copy whose stacks are materialised explicitly up to index `len - 1`
    /// (so that edits to that prefix leave the tail unchanged).
    pub fn with_explicit_prefix(&self, lens: &[usize]) -> SmallGraph {
        let mut g = self.clone();
        for (v, &len) in lens.iter().enumerate() {
            let tail_start = self.stacks[v].len();
            if len > tail_start {
                let d = self.out[v].len();
                // Keep the cyclic continuation aligned with the original.
                let mut st: Vec<usize> = (0..len as u64).map(|k| self.rotor(v, k)).collect();
                let shift = (len - tail_start) % d;
                let extra = (d - shift) % d;
                st.extend((0..extra).map(|i| (shift + i) % d));
                g.stacks[v] = st;
            }
        }
        g
    }

    pub fn set_stack(&mut self, v: usize, stack: Vec<usize>) {
        assert!(stack.iter().all(|e| *e < self.out[v].len()));
        self.stacks[v] = stack;
    }

    fn strongly_connected(&self) -> bool {
        let n = self.out.len();
        if n == 0 {
            return true;
        }
        let reach = |adj: &Vec<Vec<usize>>| {
            let mut seen = vec![false; n];
            let mut q = VecDeque::from([0usize]);
            seen[0] = true;
            while let Some(v) = q.pop_front() {
                for &t in &adj[v] {
                    if !seen[t] {
                        seen[t] = true;
                        q.push_back(t);
                    }
                }
            }
            seen.into_iter().all(|x| x)
        };
        let mut rev = vec![Vec::new(); n];
        for (v, ts) in self.out.iter().enumerate() {
            for &t in ts {
                rev[t].push(v);
            }
        }
        reach(&self.out) && reach(&rev)
    }

    /// `R(e, n)` for every out-edge of `v`.
    pub fn counts(&self, v: usize, n: u64) -> Vec<u64> {
        let mut c = vec![0u64; self.out[v].len()];
        for k in 1..=n {
            c[self.rotor(v, k)] += 1;
        }
        c
    }

    /// `Δ_ρ u`.
    pub fn stack_laplacian(&self, u: &[u64]) -> Vec<i64> {
        let mut out = vec![0i64; self.out.len()];
        for (v, &uv) in u.iter().enumerate() {
            out[v] -= uv as i64;
            for (e, c) in self.counts(v, uv).into_iter().enumerate() {
                out[self.out[v][e]] += c as i64;
            }
        }
        out
    }

    pub fn top(&self, u: &[u64]) -> Vec<usize> {
        u.iter().enumerate().map(|(v, &k)| self.rotor(v, k)).collect()
    }

    /// Step-by-step simulation: fire any vertex holding at least two chips
    /// until none does.
    pub fn oracle(&self, sigma0: &[i64]) -> Result<GraphOutcome, GraphError> {
        let n = self.out.len();
        if sigma0.iter().filter(|v| **v > 0).sum::<i64>() > n as i64 {
            return Err(GraphError::TooManyChips);
        }
        let mut sigma = sigma0.to_vec();
        sigma.resize(n, 0);
        let mut u = vec![0u64; n];
        let mut q: VecDeque<usize> = (0..n).filter(|v| sigma[*v] > 1).collect();
        while let Some(v) = q.pop_front() {
            while sigma[v] > 1 {
                u[v] += 1;
                let t = self.out[v][self.rotor(v, u[v])];
                sigma[v] -= 1;
                sigma[t] += 1;
                if sigma[t] == 2 {
                    q.push_back(t);
                }
            }
        }
        let top = self.top(&u);
        Ok(GraphOutcome { odometer: u, chips: sigma, top })
    }

    /// Checks the three conditions characterising the odometer.
    pub fn verify(&self, u: &[u64], sigma0: &[i64]) -> bool {
        let lap = self.stack_laplacian(u);
        let sigma: Vec<i64> = (0..self.out.len()).map(|v| sigma0.get(v).copied().unwrap_or(0) + lap[v]).collect();
        if sigma.iter().any(|s| *s > 1) {
            return false;
        }
        if (0..u.len()).any(|v| u[v] > 0 && sigma[v] != 1) {
            return false;
        }
        // Acyclicity of the top rotors on supp(u).
        let top = self.top(u);
        let mut state = vec![0u8; u.len()];
        for start in 0..u.len() {
            let mut path = Vec::new();
            let mut v = start;
            while u[v] > 0 && state[v] == 0 {
                state[v] = 1;
                path.push(v);
                v = self.out[v][top[v]];
            }
            if u[v] > 0 && state[v] == 1 {
                return false;
            }
            for p in path {
                state[p] = 2;
            }
        }
        true
    }
}

/// Permutes `ρ_1..ρ_{u(x)-1}` at every vertex (keeping `ρ_0` and the top
/// `ρ_{u(x)}`) and checks that the odometer, final chips and top rotors are
/// unchanged. `perm(v, len)` returns a permutation of `0..len`.
pub fn check_exchangeability(
    g: &SmallGraph,
    sigma: &[i64],
    mut perm: impl FnMut(usize, usize) -> Vec<usize>,
) -> Result<bool, GraphError> {
    let base = g.oracle(sigma)?;
    let lens: Vec<usize> = base.odometer.iter().map(|u| *u as usize + 1).collect();
    let mut g2 = g.with_explicit_prefix(&lens);
    for (v, &u) in base.odometer.iter().enumerate() {
        if u < 2 {
            continue;
        }
        let m = u as usize - 1;
        let p = perm(v, m);
        debug_assert_eq!(p.len(), m);
        let mut st = g2.stack_prefix(v).to_vec();
        let orig: Vec<usize> = st[1..=m].to_vec();
        for (i, &j) in p.iter().enumerate() {
            st[1 + i] = orig[j];
        }
        g2.set_stack(v, st);
    }
    let other = g2.oracle(sigma)?;
    Ok(other == base)
}

/// A rotor `ρ_k(x)` named by vertex and stack index.
pub type RotorRef = (usize, u64);

/// Removes the rotors of a directed cycle from the stacks and checks
/// `u(ρ, σ) = u(ρ', σ) + χ` together with equality of the final chip and
/// rotor configurations. Indices must satisfy `1 <= k_i <= u(x_i) - 1`.
pub fn check_cycle_removal(g: &SmallGraph, sigma: &[i64], cycle: &[RotorRef]) -> Result<bool, GraphError> {
    let base = g.oracle(sigma)?;
    if cycle.is_empty() {
        return Ok(true);
    }
    for (i, &(x, k)) in cycle.iter().enumerate() {
        assert!(k >= 1 && k < base.odometer[x], "rotor ({x}, {k}) not strictly below the final top");
        assert!(!cycle[..i].contains(&(x, k)), "repeated rotor ({x}, {k})");
        let t = g.target(x, g.rotor(x, k));
        let next = cycle[(i + 1) % cycle.len()].0;
        assert_eq!(t, next, "rotors do not form a directed cycle");
    }
    let lens: Vec<usize> = base.odometer.iter().map(|u| *u as usize + 1).collect();
    let mut g2 = g.with_explicit_prefix(&lens);
    let mut chi = vec![0u64; g.num_vertices()];
    for v in 0..g.num_vertices() {
        let mut removed: Vec<u64> = cycle.iter().filter(|(x, _)| *x == v).map(|(_, k)| *k).collect();
        if removed.is_empty() {
            continue;
        }
        chi[v] = removed.len() as u64;
        removed.sort_unstable();
        let st: Vec<usize> = g2
            .stack_prefix(v)
            .iter()
            .enumerate()
            .filter(|(k, _)| removed.binary_search(&(*k as u64)).is_err())
            .map(|(_, e)| *e)
            .collect();
        // The periodic tail restarts right after the prefix, so it shifts
        // along with the removed entries.
        g2.set_stack(v, st);
    }
    let other = g2.oracle(sigma)?;
    let shifted: Vec<u64> = other.odometer.iter().zip(&chi).map(|(a, b)| a + b).collect();
    Ok(shifted == base.odometer && other.chips == base.chips && other.top == base.top)
}

/// Follows available rotors strictly below the final tops at random until a
/// vertex repeats, returning the loop as a rotor cycle. `next(n)` picks an
/// index below `n`.
pub fn random_rotor_cycle(
    g: &SmallGraph,
    odometer: &[u64],
    mut next: impl FnMut(usize) -> usize,
) -> Option<Vec<RotorRef>> {
    let starts: Vec<usize> = (0..g.num_vertices()).filter(|v| odometer[*v] >= 2).collect();
    if starts.is_empty() {
        return None;
    }
    for _attempt in 0..64 {
        let mut v = starts[next(starts.len())];
        let mut path: Vec<RotorRef> = Vec::new();
        let mut visited_at: Vec<Option<usize>> = vec![None; g.num_vertices()];
        loop {
            if let Some(pos) = visited_at[v] {
                return Some(path[pos..].to_vec());
            }
            if odometer[v] < 2 {
                break;
            }
            visited_at[v] = Some(path.len());
            let k = 1 + next(odometer[v] as usize - 1) as u64;
            path.push((v, k));
            v = g.target(v, g.rotor(v, k));
        }
    }
    None
}
