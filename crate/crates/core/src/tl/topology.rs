//! Tree-structured grid description and its JSON schema.

use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::cable::CableSpec;
use super::load::Load;
use crate::error::{Error, Result};

pub type NodeId = usize;
pub type BranchId = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub x: f64,
    pub y: f64,
}

/// Element placed along a branch, positioned from endpoint `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InlineElement {
    Shunt { offset_m: f64, load: Load },
    Degraded { start_m: f64, end_m: f64, cable: CableSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: BranchId,
    pub a: NodeId,
    pub b: NodeId,
    pub length_m: f64,
    pub cable: CableSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inline: Vec<InlineElement>,
}

/// Sensing port. `y0` is the modem reference admittance; when absent the
/// diagonal of the characteristic admittance of the first attached cable is
/// used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Port {
    pub node: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y0: Option<Load>,
}

/// Piece of a branch walked from one end to the other.
#[derive(Debug, Clone, Copy)]
pub enum Piece<'a> {
    Line { cable: &'a CableSpec, length: f64 },
    Shunt(&'a Load),
}

impl Branch {
    pub fn other(&self, node: NodeId) -> NodeId {
        if node == self.a {
            self.b
        } else {
            self.a
        }
    }

    pub fn validate(&self, channels: usize) -> Result<()> {
        let id = self.id;
        if !(self.length_m.is_finite() && self.length_m >= 0.0) {
            return Err(Error::domain(format!("branch {id}: length must be >= 0")));
        }
        self.cable.validate()?;
        if self.cable.channels() != channels {
            return Err(Error::domain(format!("branch {id}: cable channel count mismatch")));
        }
        let mut spans = Vec::new();
        for el in &self.inline {
            match el {
                InlineElement::Shunt { offset_m, load } => {
                    if !(0.0..=self.length_m).contains(offset_m) {
                        return Err(Error::domain(format!(
                            "branch {id}: shunt offset {offset_m} outside [0, {}]",
                            self.length_m
                        )));
                    }
                    load.validate(channels)?;
                }
                InlineElement::Degraded { start_m, end_m, cable } => {
                    if !(0.0 <= *start_m && start_m < end_m && *end_m <= self.length_m) {
                        return Err(Error::domain(format!(
                            "branch {id}: degraded span [{start_m}, {end_m}] outside [0, {}]",
                            self.length_m
                        )));
                    }
                    cable.validate()?;
                    if cable.channels() != channels {
                        return Err(Error::domain(format!(
                            "branch {id}: degraded cable channel count mismatch"
                        )));
                    }
                    spans.push((*start_m, *end_m));
                }
            }
        }
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        if spans.windows(2).any(|w| w[1].0 < w[0].1) {
            return Err(Error::domain(format!("branch {id}: degraded spans overlap")));
        }
        Ok(())
    }

    /// Ordered pieces from `a` to `b`, or from `b` to `a` when `reversed`.
    pub fn pieces(&self, reversed: bool) -> Result<Vec<Piece<'_>>> {
        let len = self.length_m;
        let mut cuts = vec![0.0, len];
        let mut degraded = Vec::new();
        let mut shunts = Vec::new();
        for el in &self.inline {
            match el {
                InlineElement::Shunt { offset_m, load } => {
                    if !(0.0..=len).contains(offset_m) {
                        return Err(Error::domain(format!(
                            "branch {}: shunt offset {offset_m} outside [0, {len}]",
                            self.id
                        )));
                    }
                    cuts.push(*offset_m);
                    shunts.push((*offset_m, load));
                }
                InlineElement::Degraded { start_m, end_m, cable } => {
                    if !(0.0 <= *start_m && start_m < end_m && *end_m <= len) {
                        return Err(Error::domain(format!(
                            "branch {}: degraded span [{start_m}, {end_m}] outside [0, {len}]",
                            self.id
                        )));
                    }
                    cuts.push(*start_m);
                    cuts.push(*end_m);
                    degraded.push((*start_m, *end_m, cable));
                }
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut pieces = Vec::new();
        for (i, &pos) in cuts.iter().enumerate() {
            for (_, load) in shunts.iter().filter(|(o, _)| *o == pos) {
                pieces.push((pos, Piece::Shunt(load)));
            }
            if let Some(&next) = cuts.get(i + 1) {
                let mid = 0.5 * (pos + next);
                let cable = degraded
                    .iter()
                    .find(|(s, e, _)| *s <= mid && mid <= *e)
                    .map(|(_, _, c)| *c)
                    .unwrap_or(&self.cable);
                pieces.push((
                    pos,
                    Piece::Line {
                        cable,
                        length: next - pos,
                    },
                ));
            }
        }
        let mut out: Vec<Piece<'_>> = pieces.into_iter().map(|(_, p)| p).collect();
        if reversed {
            out.reverse();
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub channels: usize,
    pub nodes: Vec<Node>,
    pub branches: Vec<Branch>,
    #[serde(default)]
    pub loads: BTreeMap<NodeId, Load>,
    #[serde(default)]
    pub ports: Vec<Port>,
}

/// Topology rooted at one node: traversal order plus parent links.
#[derive(Debug, Clone)]
pub struct RootedTree {
    pub root: NodeId,
    /// Nodes in breadth-first order from the root.
    pub order: Vec<NodeId>,
    /// For each non-root node: index of the branch to its parent.
    pub parent_branch: HashMap<NodeId, usize>,
    pub parent: HashMap<NodeId, NodeId>,
    pub children: HashMap<NodeId, Vec<(usize, NodeId)>>,
}

impl RootedTree {
    /// Branch indices on the path from the root down to `node`, root first.
    pub fn path_to(&self, node: NodeId) -> Vec<usize> {
        let mut path = Vec::new();
        let mut cur = node;
        while let Some(&b) = self.parent_branch.get(&cur) {
            path.push(b);
            cur = self.parent[&cur];
        }
        path.reverse();
        path
    }

    /// Nodes on the path from the root to `node`, both included.
    pub fn nodes_to(&self, node: NodeId) -> Vec<NodeId> {
        let mut nodes = vec![node];
        let mut cur = node;
        while let Some(&p) = self.parent.get(&cur) {
            nodes.push(p);
            cur = p;
        }
        nodes.reverse();
        nodes
    }
}

impl Topology {
    pub fn from_json(s: &str) -> Result<Self> {
        let t: Topology = serde_json::from_str(s)?;
        t.validate()?;
        Ok(t)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn has_node(&self, id: NodeId) -> bool {
        self.nodes.iter().any(|n| n.id == id)
    }

    pub fn branch_index(&self, id: BranchId) -> Option<usize> {
        self.branches.iter().position(|b| b.id == id)
    }

    pub fn branch(&self, id: BranchId) -> Option<&Branch> {
        self.branches.iter().find(|b| b.id == id)
    }

    pub fn port(&self, node: NodeId) -> Option<&Port> {
        self.ports.iter().find(|p| p.node == node)
    }

    /// Branch indices incident to each node.
    pub fn adjacency(&self) -> HashMap<NodeId, Vec<usize>> {
        let mut adj: HashMap<NodeId, Vec<usize>> =
            self.nodes.iter().map(|n| (n.id, Vec::new())).collect();
        for (i, b) in self.branches.iter().enumerate() {
            adj.entry(b.a).or_default().push(i);
            adj.entry(b.b).or_default().push(i);
        }
        adj
    }

    pub fn degree(&self, node: NodeId) -> usize {
        self.branches
            .iter()
            .filter(|b| b.a == node || b.b == node)
            .count()
    }

    pub fn leaves(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .map(|n| n.id)
            .filter(|&id| self.degree(id) == 1)
            .collect()
    }

    /// Breadth-first rooting. Fails if the graph is not a connected tree.
    pub fn rooted_at(&self, root: NodeId) -> Result<RootedTree> {
        if !self.has_node(root) {
            return Err(Error::domain(format!("node {root} not in topology")));
        }
        let adj = self.adjacency();
        let mut order = vec![root];
        let mut parent_branch = HashMap::new();
        let mut parent = HashMap::new();
        let mut children: HashMap<NodeId, Vec<(usize, NodeId)>> = HashMap::new();
        let mut queue = VecDeque::from([root]);
        let mut seen = std::collections::HashSet::from([root]);
        while let Some(n) = queue.pop_front() {
            for &bi in &adj[&n] {
                if parent_branch.get(&n) == Some(&bi) {
                    continue;
                }
                let m = self.branches[bi].other(n);
                if !seen.insert(m) {
                    return Err(Error::domain("branch graph contains a cycle"));
                }
                parent_branch.insert(m, bi);
                parent.insert(m, n);
                children.entry(n).or_default().push((bi, m));
                order.push(m);
                queue.push_back(m);
            }
        }
        if order.len() != self.nodes.len() {
            return Err(Error::domain("branch graph is not connected"));
        }
        Ok(RootedTree {
            root,
            order,
            parent_branch,
            parent,
            children,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.channels;
        if !(1..=2).contains(&n) {
            return Err(Error::domain(format!("channels must be 1 or 2, got {n}")));
        }
        if self.nodes.is_empty() {
            return Err(Error::domain("topology has no nodes"));
        }
        let mut ids: Vec<_> = self.nodes.iter().map(|n| n.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::domain("duplicate node id"));
        }
        let mut bids: Vec<_> = self.branches.iter().map(|b| b.id).collect();
        bids.sort_unstable();
        if bids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::domain("duplicate branch id"));
        }
        for b in &self.branches {
            if !self.has_node(b.a) || !self.has_node(b.b) || b.a == b.b {
                return Err(Error::domain(format!("branch {} has invalid endpoints", b.id)));
            }
            b.validate(n)?;
        }
        if self.branches.len() + 1 != self.nodes.len() {
            return Err(Error::domain("branch graph is not a tree"));
        }
        self.rooted_at(self.nodes[0].id)?;
        for (node, load) in &self.loads {
            if !self.has_node(*node) {
                return Err(Error::domain(format!("load on unknown node {node}")));
            }
            load.validate(n)?;
        }
        for p in &self.ports {
            if !self.has_node(p.node) {
                return Err(Error::domain(format!("port on unknown node {}", p.node)));
            }
            if let Some(y0) = &p.y0 {
                y0.validate(n)?;
            }
        }
        for leaf in self.leaves() {
            if !self.loads.contains_key(&leaf) && self.port(leaf).is_none() {
                return Err(Error::domain(format!("leaf node {leaf} has no termination")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tl::load::AdmittanceModel;

    fn chain3() -> Topology {
        let cable = CableSpec::siso();
        Topology {
            channels: 1,
            nodes: (0..3).map(|id| Node { id, x: id as f64, y: 0.0 }).collect(),
            branches: vec![
                Branch { id: 0, a: 0, b: 1, length_m: 100.0, cable: cable.clone(), inline: vec![] },
                Branch { id: 1, a: 1, b: 2, length_m: 200.0, cable, inline: vec![] },
            ],
            loads: BTreeMap::from([(2, Load::shunt(AdmittanceModel::resistor(50.0)))]),
            ports: vec![Port { node: 0, y0: None }],
        }
    }

    #[test]
    fn valid_chain_roots_and_paths() {
        let t = chain3();
        t.validate().unwrap();
        let r = t.rooted_at(0).unwrap();
        assert_eq!(r.order, vec![0, 1, 2]);
        assert_eq!(r.path_to(2), vec![0, 1]);
        assert_eq!(r.nodes_to(2), vec![0, 1, 2]);
    }

    #[test]
    fn rejects_cycles_and_unterminated_leaves() {
        let mut t = chain3();
        t.loads.clear();
        assert!(t.validate().is_err());
        let mut t = chain3();
        t.branches[1].b = 0;
        assert!(t.validate().is_err());
        let mut t = chain3();
        t.branches[0].inline.push(InlineElement::Shunt {
            offset_m: 150.0,
            load: Load::shunt(AdmittanceModel::Open),
        });
        assert!(t.validate().is_err());
    }

    #[test]
    fn overlapping_degraded_spans_rejected() {
        let mut t = chain3();
        let c = CableSpec::siso().degraded(1.5, 1.1);
        t.branches[1].inline = vec![
            InlineElement::Degraded { start_m: 10.0, end_m: 50.0, cable: c.clone() },
            InlineElement::Degraded { start_m: 40.0, end_m: 60.0, cable: c },
        ];
        assert!(t.validate().is_err());
    }

    #[test]
    fn pieces_follow_offsets_in_both_directions() {
        let mut b = chain3().branches[1].clone();
        b.inline = vec![
            InlineElement::Degraded { start_m: 50.0, end_m: 80.0, cable: CableSpec::siso().degraded(2.0, 1.0) },
            InlineElement::Shunt { offset_m: 20.0, load: Load::shunt(AdmittanceModel::Open) },
        ];
        let lens = |ps: &[Piece<'_>]| -> Vec<f64> {
            ps.iter()
                .map(|p| match p {
                    Piece::Line { length, .. } => *length,
                    Piece::Shunt(_) => -1.0,
                })
                .collect()
        };
        assert_eq!(lens(&b.pieces(false).unwrap()), vec![20.0, -1.0, 30.0, 30.0, 120.0]);
        assert_eq!(lens(&b.pieces(true).unwrap()), vec![120.0, 30.0, 30.0, -1.0, 20.0]);
    }

    #[test]
    fn json_round_trip() {
        let t = chain3();
        let back = Topology::from_json(&t.to_json().unwrap()).unwrap();
        assert_eq!(back, t);
    }
}
