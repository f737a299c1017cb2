//! Seeded random dendrograms for test corpora and experiments.

use rand::seq::IndexedRandom;
use rand::Rng as _;

use crate::dec::Dec;
use crate::dendrogram::{canonicalize, Dendrogram, Mark, Node};
use crate::error::Result;
use crate::rng::{stream, Rng};

/// Shape parameters of [`random_dendrogram`].
#[derive(Clone, Debug)]
pub struct Shape {
    /// Atom counts are drawn uniformly from `min_atoms..=max_atoms`.
    pub min_atoms: usize,
    pub max_atoms: usize,
    /// Masses are `k / 8` with `k` uniform in `1..=mass_steps`.
    pub mass_steps: u32,
    /// Height increments per merge are `k / 4` with `k` uniform in
    /// `0..=height_steps`; a zero increment produces equal-height merges.
    pub height_steps: u32,
    /// Marks drawn uniformly from this alphabet; empty means unmarked.
    pub marks: Vec<String>,
}

impl Default for Shape {
    fn default() -> Self {
        Shape {
            min_atoms: 1,
            max_atoms: 50,
            mass_steps: 16,
            height_steps: 4,
            marks: Vec::new(),
        }
    }
}

impl Shape {
    pub fn with_max_atoms(mut self, n: usize) -> Self {
        self.max_atoms = n.max(1);
        self
    }

    pub fn with_atoms(mut self, n: usize) -> Self {
        self.min_atoms = n.max(1);
        self.max_atoms = n.max(1);
        self
    }

    pub fn with_marks(mut self, marks: &[&str]) -> Self {
        self.marks = marks.iter().map(|s| s.to_string()).collect();
        self
    }
}

/// Draws a canonical dendrogram by repeatedly merging two or three random
/// clusters above their current heights.
pub fn random_dendrogram(rng: &mut Rng, shape: &Shape) -> Result<Dendrogram> {
    let hi = shape.max_atoms.max(1);
    let n = rng.random_range(shape.min_atoms.clamp(1, hi)..=hi);
    let mut clusters: Vec<(Dec, Node)> = (0..n)
        .map(|_| {
            let mass = Dec::from_units(rng.random_range(1..=shape.mass_steps.max(1)) as i128 * Dec::ONE.units() / 8);
            let leaf = match shape.marks.choose(rng) {
                Some(s) => Node::marked_leaf(mass, Mark::Symbol(s.clone())),
                None => Node::leaf(mass),
            };
            (Dec::ZERO, leaf)
        })
        .collect();
    while clusters.len() > 1 {
        let k = if clusters.len() >= 3 && rng.random_bool(0.3) { 3 } else { 2 };
        let mut picked = Vec::with_capacity(k);
        for _ in 0..k {
            let i = rng.random_range(0..clusters.len());
            picked.push(clusters.swap_remove(i));
        }
        let base = picked.iter().map(|c| c.0).max().unwrap_or(Dec::ZERO);
        let step = rng.random_range(0..=shape.height_steps) as i128;
        let mut height = base + Dec::from_units(step * Dec::ONE.units() / 4);
        if height.is_zero() && shape.marks.is_empty() {
            // unmarked atoms at distance zero would merge
            height = Dec::from_units(Dec::ONE.units() / 4);
        }
        clusters.push((height, Node::internal(height, picked.into_iter().map(|c| c.1).collect())));
    }
    let root = clusters.pop().map(|c| c.1);
    canonicalize(&Dendrogram::from_option(root))
}

/// Depths to probe `d` at: half of each node height (the strict boundary),
/// points between consecutive heights, and one depth above the diameter.
pub fn probe_depths(rng: &mut Rng, d: &Dendrogram, count: usize) -> Vec<Dec> {
    let mut pool: Vec<Dec> = Vec::new();
    let heights = d.heights();
    for h in &heights {
        pool.push(h.half());
    }
    let mut prev = Dec::ZERO;
    for h in &heights {
        pool.push((prev + *h).half().half());
        prev = *h;
    }
    pool.push(d.diameter().half() + Dec::ONE);
    pool.retain(|h| h.is_positive());
    if pool.is_empty() {
        pool.push(Dec::ONE);
    }
    (0..count).map(|_| *pool.choose(rng).unwrap_or(&Dec::ONE)).collect()
}

/// `count` seeded dendrograms, sample `i` drawn from stream `corpus/<i>`.
pub fn corpus(seed: u64, count: usize, shape: &Shape) -> Result<Vec<Dendrogram>> {
    (0..count)
        .map(|i| random_dendrogram(&mut stream(seed, &format!("corpus/{i}")), shape))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dendrogram::validate;

    #[test]
    fn corpus_is_canonical_and_reproducible() {
        let shape = Shape::default().with_max_atoms(20);
        let a = corpus(3, 50, &shape).unwrap();
        let b = corpus(3, 50, &shape).unwrap();
        assert_eq!(a, b);
        for d in &a {
            assert!(d.is_canonical());
            assert!(validate(d).is_clean());
            assert!(d.n_atoms() <= 20);
        }
    }

    #[test]
    fn marked_corpus_keeps_marks() {
        let shape = Shape::default().with_max_atoms(10).with_marks(&["a", "b", "c"]);
        for d in corpus(5, 30, &shape).unwrap() {
            assert!(d.atoms().iter().all(|a| a.mark.is_some()));
        }
    }

    #[test]
    fn probe_depths_are_positive() {
        let mut rng = stream(1, "t");
        for d in corpus(2, 20, &Shape::default()).unwrap() {
            let hs = probe_depths(&mut rng, &d, 5);
            assert_eq!(hs.len(), 5);
            assert!(hs.iter().all(|h| h.is_positive()));
        }
    }
}
