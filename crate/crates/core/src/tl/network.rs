//! Network reduction: branch chain matrices, input admittance, reflection
//! coefficient and end-to-end transfer function.

use super::cable::{Abcd, LineModel};
use super::grid::FrequencyGrid;
use super::spectrum::{Quantity, Source, Spectrum};
use super::topology::{Branch, NodeId, Piece, RootedTree, Topology};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, C64};

/// Chain matrix of one branch at one tone, walked from `a` to `b` (or `b`
/// to `a` when `reversed`).
pub fn branch_abcd_at(branch: &Branch, f: f64, tone: usize, reversed: bool) -> Result<Abcd> {
    let n = branch.cable.channels();
    let mut acc = Abcd::identity(n);
    for piece in branch.pieces(reversed)? {
        let next = match piece {
            Piece::Line { cable, length } => LineModel::new(cable, f, tone)?.section(length),
            Piece::Shunt(load) => Abcd::shunt(&load.matrix(n, f)),
        };
        acc = acc.cascade(&next);
    }
    Ok(acc)
}

/// Per-tone chain matrices of a branch from `a` to `b`, as `2n x 2n` matrices.
pub fn branch_abcd(branch: &Branch, grid: &FrequencyGrid) -> Result<Vec<CMat>> {
    grid.tones()
        .enumerate()
        .map(|(k, f)| branch_abcd_at(branch, f, k, false).map(|m| m.to_matrix()))
        .collect()
}

fn load_at(topo: &Topology, node: NodeId, f: f64) -> CMat {
    topo.loads
        .get(&node)
        .map(|l| l.matrix(topo.channels, f))
        .unwrap_or_else(|| CMat::zeros(topo.channels, topo.channels))
}

/// Admittance looking from each node into its subtree (node load included),
/// for a tree rooted anywhere. Leaf-to-root reduction.
fn subtree_admittances(topo: &Topology, tree: &RootedTree, f: f64, tone: usize) -> Result<Vec<(NodeId, CMat)>> {
    let mut y: std::collections::HashMap<NodeId, CMat> = std::collections::HashMap::new();
    for &node in tree.order.iter().rev() {
        let mut acc = load_at(topo, node, f);
        if let Some(children) = tree.children.get(&node) {
            for &(bi, child) in children {
                acc += branch_input(topo, bi, node, &y[&child], f, tone)?;
            }
        }
        y.insert(node, acc);
    }
    Ok(tree.order.iter().map(|n| (*n, y.remove(n).unwrap())).collect())
}

/// Admittance seen at `near` looking into branch `bi` terminated by `y_far`.
fn branch_input(topo: &Topology, bi: usize, near: NodeId, y_far: &CMat, f: f64, tone: usize) -> Result<CMat> {
    let branch = &topo.branches[bi];
    let chain = branch_abcd_at(branch, f, tone, near != branch.a)?;
    chain
        .load_admittance(y_far)
        .ok_or_else(|| Error::numeric(format!("reduction through branch {}", branch.id), tone))
}

/// Input admittance seen from `port` into the whole network.
pub fn input_admittance(topo: &Topology, port: NodeId, grid: &FrequencyGrid) -> Result<Spectrum> {
    if topo.port(port).is_none() {
        return Err(Error::domain(format!("node {port} is not a sensor port")));
    }
    let tree = topo.rooted_at(port)?;
    let values = grid
        .tones()
        .enumerate()
        .map(|(k, f)| {
            let ys = subtree_admittances(topo, &tree, f, k)?;
            Ok(ys.into_iter().find(|(n, _)| *n == port).unwrap().1)
        })
        .collect::<Result<Vec<_>>>()?;
    Spectrum::new(Quantity::Yin, *grid, Source::Port { node: port }, values)
}

/// Reference admittance of a sensor port at every tone.
pub fn port_reference(topo: &Topology, port: NodeId, grid: &FrequencyGrid) -> Result<Vec<CMat>> {
    let p = topo
        .port(port)
        .ok_or_else(|| Error::domain(format!("node {port} is not a sensor port")))?;
    if let Some(y0) = &p.y0 {
        return Ok(grid.tones().map(|f| y0.matrix(topo.channels, f)).collect());
    }
    let branch = topo
        .branches
        .iter()
        .find(|b| b.a == port || b.b == port)
        .ok_or_else(|| Error::domain(format!("port {port} has no attached branch")))?;
    grid.tones()
        .enumerate()
        .map(|(k, f)| {
            let yc = LineModel::new(&branch.cable, f, k)?.characteristic_admittance();
            Ok(CMat::from_diagonal(&yc.diagonal()))
        })
        .collect()
}

/// `rho = (I + Y Y0^-1)^-1 (Y Y0^-1 - I)`; +1 for a short, -1 for an open.
pub fn reflection_coefficient(yin: &Spectrum, y0: &[CMat]) -> Result<Spectrum> {
    if y0.len() != yin.values.len() {
        return Err(Error::domain("reference admittance length does not match the spectrum"));
    }
    let n = yin.channels();
    let id = linalg::identity(n);
    let values = yin
        .values
        .iter()
        .zip(y0)
        .enumerate()
        .map(|(k, (y, y0))| {
            let y0_inv = linalg::inverse(y0).ok_or_else(|| Error::numeric("reference admittance inverse", k))?;
            let x = y * y0_inv;
            let den = linalg::inverse(&(&id + &x)).ok_or_else(|| Error::numeric("(I + Y Y0^-1) inverse", k))?;
            Ok(den * (x - &id))
        })
        .collect::<Result<Vec<_>>>()?;
    Spectrum::new(Quantity::Rho, yin.grid, yin.source, values)
}

/// Inverse of [`reflection_coefficient`]: `Y = (I + rho)(I - rho)^-1 Y0`.
pub fn admittance_from_reflection(rho: &Spectrum, y0: &[CMat]) -> Result<Spectrum> {
    let n = rho.channels();
    let id = linalg::identity(n);
    let values = rho
        .values
        .iter()
        .zip(y0)
        .enumerate()
        .map(|(k, (r, y0))| {
            let inv = linalg::inverse(&(&id - r)).ok_or_else(|| Error::numeric("(I - rho) inverse", k))?;
            Ok((&id + r) * inv * y0)
        })
        .collect::<Result<Vec<_>>>()?;
    Spectrum::new(Quantity::Yin, rho.grid, rho.source, values)
}

/// Reflection coefficient at a sensor port using its reference admittance.
pub fn port_reflection(topo: &Topology, port: NodeId, grid: &FrequencyGrid) -> Result<Spectrum> {
    let yin = input_admittance(topo, port, grid)?;
    reflection_coefficient(&yin, &port_reference(topo, port, grid)?)
}

/// Receiver voltage over source voltage, `H = V_rx / V_s`, with source
/// impedance `zs` at `tx` and receiver impedance `zl` at `rx` (ohm).
pub fn transfer_function(
    topo: &Topology,
    tx: NodeId,
    rx: NodeId,
    grid: &FrequencyGrid,
    zs: f64,
    zl: f64,
) -> Result<Spectrum> {
    if tx == rx {
        return Err(Error::domain("transmitter and receiver must differ"));
    }
    if !topo.has_node(rx) {
        return Err(Error::domain(format!("node {rx} not in topology")));
    }
    let n = topo.channels;
    let id = linalg::identity(n);
    let tree = topo.rooted_at(tx)?;
    let path_nodes = tree.nodes_to(rx);
    let path_branches = tree.path_to(rx);
    let values = grid
        .tones()
        .enumerate()
        .map(|(k, f)| {
            let sub: std::collections::HashMap<NodeId, CMat> =
                subtree_admittances(topo, &tree, f, k)?.into_iter().collect();
            // admittance hanging off each path node, excluding the path itself
            let off_path = |i: usize| -> Result<CMat> {
                let node = path_nodes[i];
                let mut acc = load_at(topo, node, f);
                if let Some(children) = tree.children.get(&node) {
                    for &(bi, child) in children {
                        if path_branches.get(i) == Some(&bi) {
                            continue;
                        }
                        acc += branch_input(topo, bi, node, &sub[&child], f, k)?;
                    }
                }
                Ok(acc)
            };
            let mut chain = Abcd::shunt(&off_path(0)?);
            for (i, &bi) in path_branches.iter().enumerate() {
                let b = &topo.branches[bi];
                chain = chain.cascade(&branch_abcd_at(b, f, k, path_nodes[i] != b.a)?);
                if i + 1 < path_branches.len() {
                    chain = chain.cascade(&Abcd::shunt(&off_path(i + 1)?));
                }
            }
            let y_end = off_path(path_nodes.len() - 1)? + &id * C64::new(1.0 / zl, 0.0);
            let zs = C64::new(zs, 0.0);
            let m = &chain.a + &chain.b * &y_end + (&chain.c + &chain.d * &y_end) * zs;
            linalg::inverse(&m).ok_or_else(|| Error::numeric("end-to-end chain inverse", k))
        })
        .collect::<Result<Vec<_>>>()?;
    Spectrum::new(Quantity::H, *grid, Source::Pair { tx, rx }, values)
}
