//! Independent reference solution: every branch is discretized into lumped
//! pi-sections, the full nodal admittance matrix is assembled per tone and
//! solved directly. Error is O(segment_len^2).

use std::collections::{HashMap, VecDeque};

use super::cable::CableSpec;
use super::grid::FrequencyGrid;
use super::load::Load;
use super::spectrum::{Quantity, Source, Spectrum};
use super::topology::{NodeId, Piece, Topology};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, C64, ZERO};

pub const DEFAULT_SEGMENT_LEN: f64 = 10.0;

/// End-to-end measurement to reproduce with the oracle.
#[derive(Debug, Clone, Copy)]
pub struct TransferRequest {
    pub tx: NodeId,
    pub rx: NodeId,
    pub zs: f64,
    pub zl: f64,
}

#[derive(Debug, Clone)]
pub struct OracleOutput {
    pub yin: Spectrum,
    pub h: Option<Spectrum>,
}

struct Edge<'a> {
    u: usize,
    v: usize,
    cable: &'a CableSpec,
    dl: f64,
}

struct Lumped<'a> {
    nodes: usize,
    edges: Vec<Edge<'a>>,
    shunts: Vec<(usize, &'a Load)>,
    index: HashMap<NodeId, usize>,
}

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut r = x;
    while parent[r] != r {
        r = parent[r];
    }
    parent[x] = r;
    r
}

/// `refine` multiplies the section count of every line piece, so two
/// discretizations with refine 1 and 2 halve every section exactly.
fn discretize(topo: &Topology, segment_len: f64, refine: usize) -> Result<Lumped<'_>> {
    // zero-length branches merge their endpoints
    let pos: HashMap<NodeId, usize> = topo.nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
    let mut uf: Vec<usize> = (0..topo.nodes.len()).collect();
    for b in &topo.branches {
        if b.length_m == 0.0 {
            let (ra, rb) = (find(&mut uf, pos[&b.a]), find(&mut uf, pos[&b.b]));
            uf[rb] = ra;
        }
    }
    let mut reps: HashMap<usize, usize> = HashMap::new();
    let mut index = HashMap::new();
    for n in &topo.nodes {
        let r = find(&mut uf, pos[&n.id]);
        let next = reps.len();
        let k = *reps.entry(r).or_insert(next);
        index.insert(n.id, k);
    }
    let mut nodes = reps.len();
    let mut edges = Vec::new();
    let mut shunts = Vec::new();
    for (id, load) in &topo.loads {
        shunts.push((index[id], load));
    }
    for b in &topo.branches {
        let pieces = b.pieces(false)?;
        let n_lines = pieces
            .iter()
            .filter(|p| matches!(p, Piece::Line { length, .. } if *length > 0.0))
            .count();
        let mut seen = 0;
        let mut cur = index[&b.a];
        for p in pieces {
            match p {
                Piece::Shunt(load) => shunts.push((cur, load)),
                Piece::Line { cable, length } if length > 0.0 => {
                    seen += 1;
                    let m = ((length / segment_len).ceil() as usize).max(1) * refine;
                    for s in 0..m {
                        let next = if s + 1 == m && seen == n_lines {
                            index[&b.b]
                        } else {
                            nodes += 1;
                            nodes - 1
                        };
                        edges.push(Edge { u: cur, v: next, cable, dl: length / m as f64 });
                        cur = next;
                    }
                }
                Piece::Line { .. } => {}
            }
        }
    }
    Ok(Lumped { nodes, edges, shunts, index })
}

/// Square banded matrix with equal lower/upper bandwidth, row-major band storage.
struct Banded {
    n: usize,
    bw: usize,
    data: Vec<C64>,
}

impl Banded {
    fn new(n: usize, bw: usize) -> Self {
        Self { n, bw, data: vec![ZERO; n * (2 * bw + 1)] }
    }

    fn at(&mut self, i: usize, j: usize) -> &mut C64 {
        debug_assert!(i.abs_diff(j) <= self.bw);
        &mut self.data[i * (2 * self.bw + 1) + (j + self.bw - i)]
    }

    fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * (2 * self.bw + 1) + (j + self.bw - i)]
    }

    /// In-place LU without pivoting, then solve for each right-hand side column.
    fn solve(mut self, rhs: &mut [Vec<C64>], tone: usize) -> Result<()> {
        let (n, bw) = (self.n, self.bw);
        for k in 0..n {
            let pivot = self.get(k, k);
            if pivot.norm() == 0.0 || !pivot.is_finite() {
                return Err(Error::numeric("nodal matrix factorization", tone));
            }
            for i in k + 1..n.min(k + bw + 1) {
                let l = self.get(i, k) / pivot;
                if l == ZERO {
                    continue;
                }
                *self.at(i, k) = l;
                for j in k + 1..n.min(k + bw + 1) {
                    let v = self.get(k, j);
                    *self.at(i, j) -= l * v;
                }
            }
        }
        for b in rhs.iter_mut() {
            for i in 0..n {
                let lo = i.saturating_sub(bw);
                let s: C64 = (lo..i).map(|j| self.get(i, j) * b[j]).sum();
                b[i] -= s;
            }
            for i in (0..n).rev() {
                let hi = n.min(i + bw + 1);
                let s: C64 = (i + 1..hi).map(|j| self.get(i, j) * b[j]).sum();
                b[i] = (b[i] - s) / self.get(i, i);
            }
        }
        Ok(())
    }
}

struct Assembly<'a> {
    lumped: Lumped<'a>,
    perm: Vec<usize>,
    bw_nodes: usize,
    channels: usize,
}

impl<'a> Assembly<'a> {
    fn new(topo: &'a Topology, segment_len: f64, refine: usize, root: NodeId) -> Result<Self> {
        let lumped = discretize(topo, segment_len, refine)?;
        let mut adj = vec![Vec::new(); lumped.nodes];
        for e in &lumped.edges {
            adj[e.u].push(e.v);
            adj[e.v].push(e.u);
        }
        // breadth-first numbering keeps the band narrow on a tree of ladders
        let mut perm = vec![usize::MAX; lumped.nodes];
        let start = lumped.index[&root];
        perm[start] = 0;
        let mut next = 1;
        let mut q = VecDeque::from([start]);
        while let Some(u) = q.pop_front() {
            for &v in &adj[u] {
                if perm[v] == usize::MAX {
                    perm[v] = next;
                    next += 1;
                    q.push_back(v);
                }
            }
        }
        if next != lumped.nodes {
            return Err(Error::domain("lumped network is not connected"));
        }
        let bw_nodes = lumped
            .edges
            .iter()
            .map(|e| perm[e.u].abs_diff(perm[e.v]))
            .max()
            .unwrap_or(0);
        Ok(Self { lumped, perm, bw_nodes, channels: topo.channels })
    }

    fn matrix(&self, f: f64, tone: usize, extra: &[(usize, CMat)]) -> Result<Banded> {
        let n = self.channels;
        let mut m = Banded::new(self.lumped.nodes * n, n * (self.bw_nodes + 1) - 1);
        let stamp = |m: &mut Banded, a: usize, b: usize, y: &CMat, sign: f64| {
            let (pa, pb) = (self.perm[a] * n, self.perm[b] * n);
            for i in 0..n {
                for j in 0..n {
                    *m.at(pa + i, pb + j) += y[(i, j)] * sign;
                }
            }
        };
        for e in &self.lumped.edges {
            let zs = e.cable.impedance(f) * C64::new(e.dl, 0.0);
            let ys = linalg::inverse(&zs).ok_or_else(|| Error::numeric("lumped series admittance", tone))?;
            let ysh = e.cable.admittance(f) * C64::new(0.5 * e.dl, 0.0);
            let diag = &ys + &ysh;
            stamp(&mut m, e.u, e.u, &diag, 1.0);
            stamp(&mut m, e.v, e.v, &diag, 1.0);
            stamp(&mut m, e.u, e.v, &ys, -1.0);
            stamp(&mut m, e.v, e.u, &ys, -1.0);
        }
        for (node, load) in &self.lumped.shunts {
            stamp(&mut m, *node, *node, &load.matrix(n, f), 1.0);
        }
        for (node, y) in extra {
            stamp(&mut m, *node, *node, y, 1.0);
        }
        Ok(m)
    }

    /// Node voltages at `observe` for unit injections (`scale` each) into
    /// every channel at `inject`; returns the `n x n` response block.
    fn response(&self, m: Banded, inject: usize, observe: usize, scale: C64, tone: usize) -> Result<CMat> {
        let n = self.channels;
        let size = self.lumped.nodes * n;
        let (pi, po) = (self.perm[inject] * n, self.perm[observe] * n);
        let mut rhs: Vec<Vec<C64>> = (0..n)
            .map(|c| {
                let mut v = vec![ZERO; size];
                v[pi + c] = scale;
                v
            })
            .collect();
        m.solve(&mut rhs, tone)?;
        Ok(CMat::from_fn(n, n, |i, j| rhs[j][po + i]))
    }
}

/// Lumped-element solution of `Y_in` at `port` and, optionally, the
/// end-to-end transfer function.
pub fn nodal_oracle(
    topo: &Topology,
    grid: &FrequencyGrid,
    segment_len: f64,
    port: NodeId,
    transfer: Option<TransferRequest>,
) -> Result<OracleOutput> {
    let (yin, h) = solve(topo, grid, segment_len, 1, port, transfer)?;
    package(grid, port, transfer, yin, h)
}

/// Richardson extrapolation of two lumped solutions (sections of
/// `segment_len` and exactly half of it). Cancels the O(dl^2) ladder
/// dispersion, leaving O(dl^4).
pub fn nodal_oracle_extrapolated(
    topo: &Topology,
    grid: &FrequencyGrid,
    segment_len: f64,
    port: NodeId,
    transfer: Option<TransferRequest>,
) -> Result<OracleOutput> {
    let (y1, h1) = solve(topo, grid, segment_len, 1, port, transfer)?;
    let (y2, h2) = solve(topo, grid, segment_len, 2, port, transfer)?;
    let combine = |coarse: Vec<CMat>, fine: Vec<CMat>| -> Vec<CMat> {
        coarse
            .into_iter()
            .zip(fine)
            .map(|(c, f)| (f * C64::new(4.0, 0.0) - c) / C64::new(3.0, 0.0))
            .collect()
    };
    package(grid, port, transfer, combine(y1, y2), combine(h1, h2))
}

fn package(
    grid: &FrequencyGrid,
    port: NodeId,
    transfer: Option<TransferRequest>,
    yin: Vec<CMat>,
    h: Vec<CMat>,
) -> Result<OracleOutput> {
    let yin = Spectrum::new(Quantity::Yin, *grid, Source::Port { node: port }, yin)?;
    let h = match transfer {
        Some(t) => Some(Spectrum::new(Quantity::H, *grid, Source::Pair { tx: t.tx, rx: t.rx }, h)?),
        None => None,
    };
    Ok(OracleOutput { yin, h })
}

fn solve(
    topo: &Topology,
    grid: &FrequencyGrid,
    segment_len: f64,
    refine: usize,
    port: NodeId,
    transfer: Option<TransferRequest>,
) -> Result<(Vec<CMat>, Vec<CMat>)> {
    if !(segment_len.is_finite() && segment_len > 0.0) {
        return Err(Error::config("segment_len must be positive"));
    }
    for node in std::iter::once(port).chain(transfer.iter().flat_map(|t| [t.tx, t.rx])) {
        if !topo.has_node(node) {
            return Err(Error::domain(format!("node {node} not in topology")));
        }
    }
    let asm = Assembly::new(topo, segment_len, refine, port)?;
    let n = topo.channels;
    let p = asm.lumped.index[&port];
    let mut yin = Vec::with_capacity(grid.count());
    let mut h = Vec::new();
    for (k, f) in grid.tones().enumerate() {
        let z = asm.response(asm.matrix(f, k, &[])?, p, p, C64::new(1.0, 0.0), k)?;
        yin.push(linalg::inverse(&z).ok_or_else(|| Error::numeric("oracle input impedance inverse", k))?);
        if let Some(t) = transfer {
            let (tx, rx) = (asm.lumped.index[&t.tx], asm.lumped.index[&t.rx]);
            let extra = [
                (tx, linalg::identity(n) * C64::new(1.0 / t.zs, 0.0)),
                (rx, linalg::identity(n) * C64::new(1.0 / t.zl, 0.0)),
            ];
            let m = asm.matrix(f, k, &extra)?;
            h.push(asm.response(m, tx, rx, C64::new(1.0 / t.zs, 0.0), k)?);
        }
    }
    Ok((yin, h))
}
