//! The depth-indexed concatenation semigroup.
//!
//! For a depth `h > 0`, an h-forest is a space of diameter at most `2h`;
//! concatenation places forests at mutual distance exactly `2h`. Every
//! h-forest splits uniquely into primes, its open `2h`-ball components.

use std::collections::BTreeMap;

use crate::dec::Dec;
use crate::dendrogram::{canonicalize, join, validate, CanonicalEncoding, Dendrogram, Node};
use crate::error::{Error, Result};

fn check_wellformed(d: &Dendrogram) -> Result<()> {
    let report = validate(d);
    if report.has_fatal() {
        return Err(Error::Malformed(
            report
                .violations
                .iter()
                .filter(|v| v.is_fatal())
                .map(|v| v.to_string())
                .collect(),
        ));
    }
    Ok(())
}

fn check_depth(h: Dec) -> Result<()> {
    if h.is_positive() {
        Ok(())
    } else {
        Err(Error::Domain(format!("depth must be positive, got {h}")))
    }
}

/// `⊔^h`: disjoint union of h-forests with all cross-part distances `2h`.
pub fn concat(h: Dec, parts: &[Dendrogram]) -> Result<Dendrogram> {
    check_depth(h)?;
    let cut = h.double();
    let mut children = Vec::new();
    for (i, p) in parts.iter().enumerate() {
        check_wellformed(p)?;
        if p.diameter() > cut {
            return Err(Error::Domain(format!(
                "part {i} has diameter {} > 2h = {cut}; not an h-forest",
                p.diameter()
            )));
        }
        let p = canonicalize(p)?;
        match p.into_root() {
            None => {}
            Some(Node::Internal { height, children: kids }) if height == cut => children.extend(kids),
            Some(root) => children.push(root),
        }
    }
    Ok(join(cut, children))
}

fn cap_heights(n: &Node, cap: Dec) -> Node {
    match n {
        Node::Internal { height, children } if *height > cap => Node::Internal {
            height: cap,
            children: children.iter().map(|c| cap_heights(c, cap)).collect(),
        },
        _ => n.clone(),
    }
}

/// Realizes `r ∧ cap` on the tree.
pub(crate) fn truncate_at(cap: Dec, d: &Dendrogram) -> Result<Dendrogram> {
    check_wellformed(d)?;
    canonicalize(&Dendrogram::from_option(d.root().map(|r| cap_heights(r, cap))))
}

/// `τ(h)`: caps every distance at `2h`; nested nodes that reach `2h` merge.
pub fn truncate(h: Dec, d: &Dendrogram) -> Result<Dendrogram> {
    if h.is_negative() {
        return Err(Error::Domain(format!("truncation depth must be nonnegative, got {h}")));
    }
    truncate_at(h.double(), d)
}

/// Unique prime factorization of the h-top of a space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ForestDecomposition {
    pub depth: Dec,
    /// Nonzero primes of diameter `< 2h`, sorted by canonical encoding.
    pub primes: Vec<Dendrogram>,
    /// Encoding of the decomposed (truncated) forest.
    pub source: CanonicalEncoding,
    /// Whether the input had diameter above `2h` and was truncated first.
    pub truncated: bool,
}

/// Open-ball components at distance threshold `cut`: atoms closer than `cut`
/// stay together, atoms at distance `>= cut` separate.
pub(crate) fn components_at_cut(cut: Dec, d: &Dendrogram) -> Result<Vec<Dendrogram>> {
    let top = truncate_at(cut, d)?;
    Ok(match top.into_root() {
        None => Vec::new(),
        Some(Node::Internal { height, children }) if height == cut => {
            children.into_iter().map(Dendrogram::from_root).collect()
        }
        Some(root) => vec![Dendrogram::from_root(root)],
    })
}

/// Splits the h-top of `d` into its primes (open `2h`-balls). Inputs of
/// diameter above `2h` are truncated first and the fact is recorded.
pub fn decompose(h: Dec, d: &Dendrogram) -> Result<ForestDecomposition> {
    check_depth(h)?;
    let cut = h.double();
    let top = truncate_at(cut, d)?;
    Ok(ForestDecomposition {
        depth: h,
        truncated: d.diameter() > cut,
        source: top.encoding()?,
        primes: components_at_cut(cut, &top)?,
    })
}

/// `#_h`, with the `Infinite` case kept for parity with `ℕ₀ ∪ {∞}`; finite
/// inputs never produce it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum BallCount {
    Finite(u64),
    Infinite,
}

impl std::ops::Add for BallCount {
    type Output = BallCount;
    fn add(self, rhs: BallCount) -> BallCount {
        match (self, rhs) {
            (BallCount::Finite(a), BallCount::Finite(b)) => BallCount::Finite(a + b),
            _ => BallCount::Infinite,
        }
    }
}

pub fn count_balls(h: Dec, d: &Dendrogram) -> Result<BallCount> {
    Ok(BallCount::Finite(decompose(h, d)?.primes.len() as u64))
}

fn trunk_node(n: &Node, cut: Dec) -> Node {
    if n.height() < cut {
        return Node::leaf(n.total_mass());
    }
    match n {
        Node::Internal { height, children } => Node::Internal {
            height: *height - cut,
            children: children.iter().map(|c| trunk_node(c, cut)).collect(),
        },
        Node::Leaf { .. } => unreachable!("leaves sit below any positive cut"),
    }
}

/// The h-trunk: one atom per prime carrying the prime's mass, with distances
/// shifted down by `2h`. Primes at distance exactly `2h` end up at distance
/// 0 and therefore coincide in the canonical form.
pub fn trunk(h: Dec, d: &Dendrogram) -> Result<Dendrogram> {
    check_depth(h)?;
    check_wellformed(d)?;
    let cut = h.double();
    canonicalize(&Dendrogram::from_option(d.root().map(|r| trunk_node(r, cut))))
}

fn prime_multiset(h: Dec, d: &Dendrogram) -> Result<BTreeMap<CanonicalEncoding, usize>> {
    let mut out = BTreeMap::new();
    for p in decompose(h, d)?.primes {
        *out.entry(p.encoding()?).or_insert(0) += 1;
    }
    Ok(out)
}

/// The partial order `u ≤_h v`: the primes of `u(h)` embed into those of
/// `v(h)`, i.e. `v(h) ≅ u(h) ⊔^h w` for some h-forest `w`.
pub fn is_subforest(h: Dec, u: &Dendrogram, v: &Dendrogram) -> Result<bool> {
    let pu = prime_multiset(h, u)?;
    let pv = prime_multiset(h, v)?;
    Ok(pu.iter().all(|(k, n)| pv.get(k).is_some_and(|m| m >= n)))
}

/// Decomposition summary on one depth interval `(low, high]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TopsInterval {
    pub low: Dec,
    /// `None` stands for `+∞`.
    pub high: Option<Dec>,
    pub count: usize,
    /// Prime masses, non-increasing.
    pub masses: Vec<Dec>,
    pub primes: Vec<CanonicalEncoding>,
}

/// Piecewise-constant path `h ↦ decompose(h, d)`.
///
/// Intervals are `(low, high]`: at a breakpoint the summary equals its limit
/// from the left, because atoms at distance exactly `2h` are separate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TopsPath {
    pub breakpoints: Vec<Dec>,
    pub intervals: Vec<TopsInterval>,
}

impl TopsPath {
    /// Summary valid at depth `h > 0`.
    pub fn at(&self, h: Dec) -> Option<&TopsInterval> {
        self.intervals
            .iter()
            .find(|iv| h > iv.low && iv.high.is_none_or(|hi| h <= hi))
    }
}

/// Breakpoints are half the distinct positive heights of `d`. Odd unit
/// counts round at the twelfth digit; the summaries themselves are computed
/// at the exact heights.
pub fn tops_path(d: &Dendrogram) -> Result<TopsPath> {
    check_wellformed(d)?;
    let d = canonicalize(d)?;
    if d.is_null() {
        return Ok(TopsPath {
            breakpoints: Vec::new(),
            intervals: Vec::new(),
        });
    }
    let heights = d.heights();
    let mut intervals = Vec::with_capacity(heights.len() + 1);
    let mut low = Dec::ZERO;
    let mut summarize = |cut: Option<Dec>, low: Dec, high: Option<Dec>| -> Result<()> {
        let comps = match cut {
            Some(c) => components_at_cut(c, &d)?,
            None => vec![d.clone()],
        };
        let mut masses: Vec<Dec> = comps.iter().map(Dendrogram::total_mass).collect();
        masses.sort_by(|a, b| b.cmp(a));
        let mut primes = comps.iter().map(Dendrogram::encoding).collect::<Result<Vec<_>>>()?;
        primes.sort();
        intervals.push(TopsInterval {
            low,
            high,
            count: comps.len(),
            masses,
            primes,
        });
        Ok(())
    };
    for &hgt in &heights {
        let high = hgt.half();
        summarize(Some(hgt), low, Some(high))?;
        low = high;
    }
    summarize(None, low, None)?;
    Ok(TopsPath {
        breakpoints: heights.iter().map(|h| h.half()).collect(),
        intervals,
    })
}

/// `(low, high, masses)` rows of the mass fragmentation of the top.
pub fn mass_fragmentation_path(d: &Dendrogram) -> Result<Vec<(Dec, Option<Dec>, Vec<Dec>)>> {
    Ok(tops_path(d)?
        .intervals
        .into_iter()
        .map(|iv| (iv.low, iv.high, iv.masses))
        .collect())
}

/// `v_δ(d, h)`: total mass of atoms whose open `2h`-ball has mass `< δ`.
pub fn modulus_mass(delta: Dec, h: Dec, d: &Dendrogram) -> Result<Dec> {
    check_depth(h)?;
    if !delta.is_positive() {
        return Err(Error::Domain(format!("delta must be positive, got {delta}")));
    }
    Ok(components_at_cut(h.double(), d)?
        .iter()
        .map(Dendrogram::total_mass)
        .filter(|m| *m < delta)
        .sum())
}
