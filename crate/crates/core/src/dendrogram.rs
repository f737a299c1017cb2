//! Finite ultrametric measure spaces as height-labelled rooted trees.
//!
//! A [`Dendrogram`] stores atoms as leaves carrying a mass (and an optional
//! mark); the distance between two atoms is the height of their lowest common
//! ancestor. Two dendrograms describe the same space up to measure-preserving
//! isometry iff their canonical forms coincide, which is what
//! [`CanonicalEncoding`] captures.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dec::Dec;
use crate::error::{Error, Result};

/// Mark carried by an atom of a marked space.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Mark {
    Symbol(String),
    Point(Vec<i64>),
}

impl fmt::Display for Mark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mark::Symbol(s) => f.write_str(s),
            Mark::Point(p) => {
                let parts: Vec<String> = p.iter().map(|x| x.to_string()).collect();
                write!(f, "({})", parts.join(","))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Node {
    Leaf { mass: Dec, mark: Option<Mark> },
    Internal { height: Dec, children: Vec<Node> },
}

impl Node {
    pub fn leaf(mass: Dec) -> Node {
        Node::Leaf { mass, mark: None }
    }

    pub fn marked_leaf(mass: Dec, mark: Mark) -> Node {
        Node::Leaf {
            mass,
            mark: Some(mark),
        }
    }

    pub fn internal(height: Dec, children: Vec<Node>) -> Node {
        Node::Internal { height, children }
    }

    /// Height of the node; leaves sit at 0.
    pub fn height(&self) -> Dec {
        match self {
            Node::Leaf { .. } => Dec::ZERO,
            Node::Internal { height, .. } => *height,
        }
    }

    pub fn total_mass(&self) -> Dec {
        match self {
            Node::Leaf { mass, .. } => *mass,
            Node::Internal { children, .. } => children.iter().map(Node::total_mass).sum(),
        }
    }

    pub fn n_atoms(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Internal { children, .. } => children.iter().map(Node::n_atoms).sum(),
        }
    }

    fn visit_leaves<'a>(&'a self, out: &mut Vec<(Dec, Option<&'a Mark>)>) {
        match self {
            Node::Leaf { mass, mark } => out.push((*mass, mark.as_ref())),
            Node::Internal { children, .. } => children.iter().for_each(|c| c.visit_leaves(out)),
        }
    }

    pub(crate) fn map_heights(&self, f: &impl Fn(Dec) -> Dec) -> Node {
        match self {
            Node::Leaf { .. } => self.clone(),
            Node::Internal { height, children } => Node::Internal {
                height: f(*height),
                children: children.iter().map(|c| c.map_heights(f)).collect(),
            },
        }
    }

    pub(crate) fn map_leaves(&self, f: &impl Fn(Dec, Option<&Mark>) -> Node) -> Node {
        match self {
            Node::Leaf { mass, mark } => f(*mass, mark.as_ref()),
            Node::Internal { height, children } => Node::Internal {
                height: *height,
                children: children.iter().map(|c| c.map_leaves(f)).collect(),
            },
        }
    }
}

/// An ultrametric measure space with finitely many atoms. The empty tree is
/// the null space `0`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Dendrogram {
    root: Option<Node>,
}

/// Atom of a dendrogram in depth-first leaf order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Atom<'a> {
    pub mass: Dec,
    pub mark: Option<&'a Mark>,
}

impl Dendrogram {
    pub fn null() -> Dendrogram {
        Dendrogram { root: None }
    }

    /// Wraps a raw tree without validation or canonicalization.
    pub fn from_root(root: Node) -> Dendrogram {
        Dendrogram { root: Some(root) }
    }

    pub fn from_option(root: Option<Node>) -> Dendrogram {
        Dendrogram { root }
    }

    /// Single atom; mass 0 gives the null space.
    pub fn singleton(mass: Dec) -> Dendrogram {
        if mass.is_zero() {
            Dendrogram::null()
        } else {
            Dendrogram::from_root(Node::leaf(mass))
        }
    }

    pub fn root(&self) -> Option<&Node> {
        self.root.as_ref()
    }

    pub fn into_root(self) -> Option<Node> {
        self.root
    }

    pub fn is_null(&self) -> bool {
        self.root.is_none()
    }

    pub fn total_mass(&self) -> Dec {
        self.root.as_ref().map_or(Dec::ZERO, Node::total_mass)
    }

    /// Largest distance between two atoms (the root height).
    pub fn diameter(&self) -> Dec {
        self.root.as_ref().map_or(Dec::ZERO, Node::height)
    }

    pub fn n_atoms(&self) -> usize {
        self.root.as_ref().map_or(0, Node::n_atoms)
    }

    pub fn atoms(&self) -> Vec<Atom<'_>> {
        let mut raw = Vec::new();
        if let Some(r) = &self.root {
            r.visit_leaves(&mut raw);
        }
        raw.into_iter().map(|(mass, mark)| Atom { mass, mark }).collect()
    }

    pub fn masses(&self) -> Vec<Dec> {
        self.atoms().into_iter().map(|a| a.mass).collect()
    }

    /// Distinct positive internal heights, ascending.
    pub fn heights(&self) -> Vec<Dec> {
        fn walk(n: &Node, out: &mut Vec<Dec>) {
            if let Node::Internal { height, children } = n {
                out.push(*height);
                children.iter().for_each(|c| walk(c, out));
            }
        }
        let mut out = Vec::new();
        if let Some(r) = &self.root {
            walk(r, &mut out);
        }
        out.retain(|h| h.is_positive());
        out.sort();
        out.dedup();
        out
    }

    pub fn is_marked(&self) -> bool {
        self.atoms().iter().any(|a| a.mark.is_some())
    }

    pub fn is_canonical(&self) -> bool {
        canonicalize(self).is_ok_and(|c| &c == self)
    }

    pub fn encoding(&self) -> Result<CanonicalEncoding> {
        let c = canonicalize(self)?;
        let mut bytes = Vec::new();
        if let Some(r) = &c.root {
            encode_node(r, &mut bytes);
        }
        Ok(CanonicalEncoding::new(bytes))
    }
}

/// Byte string of a canonical dendrogram plus a stable 64-bit hash.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CanonicalEncoding {
    bytes: Vec<u8>,
    hash: u64,
}

impl CanonicalEncoding {
    fn new(bytes: Vec<u8>) -> Self {
        let digest = Sha256::digest(&bytes);
        let mut h = [0u8; 8];
        h.copy_from_slice(&digest[..8]);
        CanonicalEncoding {
            bytes,
            hash: u64::from_be_bytes(h),
        }
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn hash(&self) -> u64 {
        self.hash
    }
}

impl fmt::Debug for CanonicalEncoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CanonicalEncoding({:016x}, {} bytes)", self.hash, self.bytes.len())
    }
}

const TAG_LEAF: u8 = 1;
const TAG_NODE: u8 = 2;

fn encode_mark(mark: Option<&Mark>, out: &mut Vec<u8>) {
    match mark {
        None => out.push(0),
        Some(Mark::Symbol(s)) => {
            out.push(1);
            out.extend_from_slice(&(s.len() as u32).to_be_bytes());
            out.extend_from_slice(s.as_bytes());
        }
        Some(Mark::Point(p)) => {
            out.push(2);
            out.extend_from_slice(&(p.len() as u32).to_be_bytes());
            for x in p {
                out.extend_from_slice(&x.to_be_bytes());
            }
        }
    }
}

fn encode_node(n: &Node, out: &mut Vec<u8>) {
    match n {
        Node::Leaf { mass, mark } => {
            out.push(TAG_LEAF);
            out.extend_from_slice(&mass.units().to_be_bytes());
            encode_mark(mark.as_ref(), out);
        }
        Node::Internal { height, children } => {
            out.push(TAG_NODE);
            out.extend_from_slice(&height.units().to_be_bytes());
            out.extend_from_slice(&(children.len() as u32).to_be_bytes());
            for c in children {
                encode_node(c, out);
            }
        }
    }
}

/// A single structural problem found by [`validate`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    /// A child node sits at or above its parent.
    HeightsNotDecreasing { parent: Dec, child: Dec },
    NegativeMass(Dec),
    NegativeHeight(Dec),
    UnaryNode { height: Dec },
    EmptyNode { height: Dec },
}

impl Violation {
    /// Violations that no canonical representative can repair.
    pub fn is_fatal(&self) -> bool {
        match self {
            Violation::HeightsNotDecreasing { parent, child } => child > parent,
            Violation::NegativeMass(_) | Violation::NegativeHeight(_) => true,
            Violation::UnaryNode { .. } | Violation::EmptyNode { .. } => false,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::HeightsNotDecreasing { parent, child } => write!(
                f,
                "heights not decreasing: node at height {parent} has child at height {child}"
            ),
            Violation::NegativeMass(m) => write!(f, "negative mass {m}"),
            Violation::NegativeHeight(h) => write!(f, "negative height {h}"),
            Violation::UnaryNode { height } => write!(f, "unary node at height {height}"),
            Violation::EmptyNode { height } => write!(f, "internal node at height {height} has no children"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has_fatal(&self) -> bool {
        self.violations.iter().any(Violation::is_fatal)
    }

    pub fn messages(&self) -> Vec<String> {
        self.violations.iter().map(|v| v.to_string()).collect()
    }
}

/// Reports every structural invariant that `d` violates.
pub fn validate(d: &Dendrogram) -> ValidationReport {
    fn walk(n: &Node, out: &mut Vec<Violation>) {
        match n {
            Node::Leaf { mass, .. } => {
                if mass.is_negative() {
                    out.push(Violation::NegativeMass(*mass));
                }
            }
            Node::Internal { height, children } => {
                if height.is_negative() {
                    out.push(Violation::NegativeHeight(*height));
                }
                match children.len() {
                    0 => out.push(Violation::EmptyNode { height: *height }),
                    1 => out.push(Violation::UnaryNode { height: *height }),
                    _ => {}
                }
                for c in children {
                    if let Node::Internal { height: ch, .. } = c {
                        if ch >= height {
                            out.push(Violation::HeightsNotDecreasing {
                                parent: *height,
                                child: *ch,
                            });
                        }
                    }
                    walk(c, out);
                }
            }
        }
    }
    let mut violations = Vec::new();
    if let Some(r) = &d.root {
        walk(r, &mut violations);
    }
    ValidationReport { violations }
}

struct Canon {
    node: Node,
    enc: Vec<u8>,
    mass: Dec,
}

impl Canon {
    fn leaf(mass: Dec, mark: Option<Mark>) -> Canon {
        let node = Node::Leaf { mass, mark };
        let mut enc = Vec::new();
        encode_node(&node, &mut enc);
        Canon { node, enc, mass }
    }
}

fn canon(n: &Node) -> Option<Canon> {
    match n {
        Node::Leaf { mass, mark } => {
            if mass.is_zero() {
                None
            } else {
                Some(Canon::leaf(*mass, mark.clone()))
            }
        }
        Node::Internal { height, children } => {
            let mut kids: Vec<Canon> = Vec::with_capacity(children.len());
            for c in children.iter().filter_map(canon) {
                match c.node {
                    // equal-height nesting is the same ball structure
                    Node::Internal {
                        height: ch,
                        children: grand,
                    } if ch == *height => {
                        for g in grand {
                            let mut enc = Vec::new();
                            encode_node(&g, &mut enc);
                            let mass = g.total_mass();
                            kids.push(Canon { node: g, enc, mass });
                        }
                    }
                    _ => kids.push(c),
                }
            }
            if height.is_zero() {
                // atoms at distance zero coincide; only equal marks merge
                let mut merged: BTreeMap<Option<Mark>, Dec> = BTreeMap::new();
                for k in kids {
                    if let Node::Leaf { mass, mark } = k.node {
                        *merged.entry(mark).or_insert(Dec::ZERO) += mass;
                    }
                }
                kids = merged
                    .into_iter()
                    .map(|(mark, mass)| Canon::leaf(mass, mark))
                    .collect();
            }
            match kids.len() {
                0 => None,
                1 => kids.pop(),
                _ => {
                    kids.sort_by(|a, b| a.enc.cmp(&b.enc).then(a.mass.cmp(&b.mass)));
                    let mass = kids.iter().map(|k| k.mass).sum();
                    let mut enc = Vec::new();
                    enc.push(TAG_NODE);
                    enc.extend_from_slice(&height.units().to_be_bytes());
                    enc.extend_from_slice(&(kids.len() as u32).to_be_bytes());
                    for k in &kids {
                        enc.extend_from_slice(&k.enc);
                    }
                    let node = Node::Internal {
                        height: *height,
                        children: kids.into_iter().map(|k| k.node).collect(),
                    };
                    Some(Canon { node, enc, mass })
                }
            }
        }
    }
}

/// Canonical representative of the isomorphism class of `d`.
///
/// Zero-mass atoms are dropped, unary and empty nodes collapse, nested nodes
/// of equal height merge, zero-distance atoms with equal marks merge, and
/// siblings are sorted by their canonical encodings.
pub fn canonicalize(d: &Dendrogram) -> Result<Dendrogram> {
    let report = validate(d);
    if report.has_fatal() {
        let msgs = report
            .violations
            .iter()
            .filter(|v| v.is_fatal())
            .map(|v| v.to_string())
            .collect();
        return Err(Error::Malformed(msgs));
    }
    Ok(canonicalize_unchecked(d.root.as_ref()))
}

/// Canonicalizes a tree already known to be free of fatal violations.
pub(crate) fn canonicalize_unchecked(root: Option<&Node>) -> Dendrogram {
    Dendrogram {
        root: root.and_then(canon).map(|c| c.node),
    }
}

/// Joins already-canonical subtrees under a node at `height` and returns the
/// canonical result. Subtrees must have heights at most `height`.
pub(crate) fn join(height: Dec, parts: Vec<Node>) -> Dendrogram {
    canonicalize_unchecked(Some(&Node::Internal {
        height,
        children: parts,
    }))
}

/// True iff `a` and `b` are isomorphic as ultrametric measure spaces.
pub fn is_isomorphic(a: &Dendrogram, b: &Dendrogram) -> Result<bool> {
    Ok(a.encoding()? == b.encoding()?)
}
