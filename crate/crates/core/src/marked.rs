//! Marked um-spaces over a finite alphabet or a bounded integer box.
//!
//! Marks live on the atoms of a [`Dendrogram`]; an atom carrying several
//! marks is stored as several atoms at distance zero. The genealogical
//! operations act on the tree alone, so marks are carried along unchanged.

use std::collections::BTreeMap;

use num_bigint::BigUint;

use crate::dec::Dec;
use crate::dendrogram::{canonicalize, Dendrogram, Mark, Node};
use crate::error::{Error, Result};
use crate::polynomial::{check_budget, for_each_tuple, AtomTable, MonomialSpec, DEFAULT_BUDGET};
use crate::semigroup::{concat, decompose, truncate};

/// A finite space of marks with a neutral element.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MarkSpace {
    Alphabet { symbols: Vec<String>, neutral: String },
    /// All integer points of `lower ≤ x ≤ upper`; the neutral mark is the origin.
    LatticeBox { lower: Vec<i64>, upper: Vec<i64> },
}

impl MarkSpace {
    /// Alphabet whose first symbol is neutral.
    pub fn alphabet(symbols: &[&str]) -> Result<Self> {
        let neutral = symbols
            .first()
            .ok_or_else(|| Error::MarkSpace("alphabet is empty".into()))?
            .to_string();
        let space = MarkSpace::Alphabet {
            symbols: symbols.iter().map(|s| s.to_string()).collect(),
            neutral,
        };
        space.check()?;
        Ok(space)
    }

    pub fn lattice_box(lower: Vec<i64>, upper: Vec<i64>) -> Result<Self> {
        let space = MarkSpace::LatticeBox { lower, upper };
        space.check()?;
        Ok(space)
    }

    pub fn check(&self) -> Result<()> {
        match self {
            MarkSpace::Alphabet { symbols, neutral } => {
                let mut sorted = symbols.clone();
                sorted.sort();
                sorted.dedup();
                if sorted.len() != symbols.len() {
                    return Err(Error::MarkSpace("alphabet has repeated symbols".into()));
                }
                if !symbols.contains(neutral) {
                    return Err(Error::MarkSpace(format!("neutral mark {neutral:?} is not in the alphabet")));
                }
            }
            MarkSpace::LatticeBox { lower, upper } => {
                if lower.len() != upper.len() || lower.is_empty() {
                    return Err(Error::MarkSpace("box bounds need one equal positive dimension".into()));
                }
                if lower.iter().zip(upper).any(|(l, u)| *l > 0 || *u < 0) {
                    return Err(Error::MarkSpace("box must contain the neutral mark 0".into()));
                }
            }
        }
        Ok(())
    }

    pub fn neutral(&self) -> Mark {
        match self {
            MarkSpace::Alphabet { neutral, .. } => Mark::Symbol(neutral.clone()),
            MarkSpace::LatticeBox { lower, .. } => Mark::Point(vec![0; lower.len()]),
        }
    }

    pub fn contains(&self, mark: &Mark) -> bool {
        match (self, mark) {
            (MarkSpace::Alphabet { symbols, .. }, Mark::Symbol(s)) => symbols.contains(s),
            (MarkSpace::LatticeBox { lower, upper }, Mark::Point(p)) => {
                p.len() == lower.len() && p.iter().zip(lower.iter().zip(upper)).all(|(x, (l, u))| l <= x && x <= u)
            }
            _ => false,
        }
    }

    /// Number of marks, saturating.
    pub fn cardinality(&self) -> u128 {
        match self {
            MarkSpace::Alphabet { symbols, .. } => symbols.len() as u128,
            MarkSpace::LatticeBox { lower, upper } => lower
                .iter()
                .zip(upper)
                .fold(1u128, |acc, (l, u)| acc.saturating_mul((u - l + 1) as u128)),
        }
    }
}

/// A dendrogram all of whose atoms carry marks from `space`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MarkedDendrogram {
    space: MarkSpace,
    tree: Dendrogram,
}

impl MarkedDendrogram {
    /// Checks every mark against `space` and canonicalizes the tree.
    pub fn new(space: MarkSpace, tree: &Dendrogram) -> Result<Self> {
        space.check()?;
        for (i, a) in tree.atoms().iter().enumerate() {
            match a.mark {
                None => return Err(Error::MarkSpace(format!("atom {i} carries no mark"))),
                Some(m) if !space.contains(m) => {
                    return Err(Error::MarkSpace(format!("atom {i}: mark {m} is not in the mark space")))
                }
                _ => {}
            }
        }
        Ok(MarkedDendrogram {
            space,
            tree: canonicalize(tree)?,
        })
    }

    pub fn null(space: MarkSpace) -> Self {
        MarkedDendrogram {
            space,
            tree: Dendrogram::null(),
        }
    }

    pub fn singleton(space: MarkSpace, mass: Dec, mark: Mark) -> Result<Self> {
        Self::new(space, &Dendrogram::from_root(Node::marked_leaf(mass, mark)))
    }

    pub fn space(&self) -> &MarkSpace {
        &self.space
    }

    pub fn tree(&self) -> &Dendrogram {
        &self.tree
    }
}

fn same_space<'a>(parts: &'a [MarkedDendrogram]) -> Result<&'a MarkSpace> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Domain("marked concatenation needs at least one part".into()))?;
    if let Some(i) = parts.iter().position(|p| p.space != first.space) {
        return Err(Error::MarkSpace(format!("part {i} uses a different mark space")));
    }
    Ok(&first.space)
}

pub fn marked_concat(h: Dec, parts: &[MarkedDendrogram]) -> Result<MarkedDendrogram> {
    let space = same_space(parts)?.clone();
    let trees: Vec<Dendrogram> = parts.iter().map(|p| p.tree.clone()).collect();
    Ok(MarkedDendrogram {
        space,
        tree: concat(h, &trees)?,
    })
}

pub fn marked_truncate(h: Dec, d: &MarkedDendrogram) -> Result<MarkedDendrogram> {
    Ok(MarkedDendrogram {
        space: d.space.clone(),
        tree: truncate(h, &d.tree)?,
    })
}

/// Marked primes of the h-top, in the order of the unmarked decomposition.
pub fn marked_decompose(h: Dec, d: &MarkedDendrogram) -> Result<Vec<MarkedDendrogram>> {
    Ok(decompose(h, &d.tree)?
        .primes
        .into_iter()
        .map(|tree| MarkedDendrogram {
            space: d.space.clone(),
            tree,
        })
        .collect())
}

/// `∫ φ(r) g(marks) dν^{m}` over ordered atom tuples, with the strict
/// truncation indicator of `spec` applied to distances.
pub fn marked_monomial_eval(spec: &MonomialSpec, g: &dyn Fn(&[&Mark]) -> f64, d: &MarkedDendrogram) -> Result<f64> {
    let table = AtomTable::new(&d.tree);
    check_budget(table.n, spec.order, DEFAULT_BUDGET)?;
    let atoms = d.tree.atoms();
    let marks: Vec<&Mark> = atoms.iter().filter_map(|a| a.mark).collect();
    let cut = spec.depth.map(Dec::double);
    let mut acc = 0.0;
    let mut tuple_marks: Vec<&Mark> = Vec::with_capacity(spec.order);
    for_each_tuple(&table, spec.order, |tuple, w, view| {
        if let Some(cut) = cut {
            if view.exact().iter().any(|&r| r >= cut) {
                return Ok(());
            }
        }
        tuple_marks.clear();
        tuple_marks.extend(tuple.iter().map(|&i| marks[i]));
        let v = spec.phi.eval(view) * g(&tuple_marks);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("marked monomial term {v}")));
        }
        acc += w * v;
        Ok(())
    })?;
    Ok(acc)
}

/// The marked distance-matrix measure: exact weights (in `10^{-12m}` units)
/// of `(distance matrix, mark tuple)` pairs.
pub fn marked_distance_matrix_measure(m: usize, d: &MarkedDendrogram) -> Result<BTreeMap<(Vec<Dec>, Vec<Mark>), BigUint>> {
    let table = AtomTable::new(&d.tree);
    check_budget(table.n, m, DEFAULT_BUDGET)?;
    let atoms = d.tree.atoms();
    let units: Vec<BigUint> = atoms.iter().map(|a| BigUint::from(a.mass.units().max(0) as u128)).collect();
    let mut out: BTreeMap<(Vec<Dec>, Vec<Mark>), BigUint> = BTreeMap::new();
    for_each_tuple(&table, m, |tuple, _, view| {
        let w = tuple.iter().fold(BigUint::from(1u8), |acc, &i| acc * &units[i]);
        let marks = tuple.iter().filter_map(|&i| atoms[i].mark.cloned()).collect();
        *out.entry((view.exact().to_vec(), marks)).or_default() += w;
        Ok(())
    })?;
    Ok(out)
}

/// Forgets marks; atoms at distance zero then coincide.
pub fn project_to_unmarked(d: &MarkedDendrogram) -> Result<Dendrogram> {
    let stripped = d.tree.root().map(|r| {
        r.map_leaves(&|mass, _| Node::Leaf { mass, mark: None })
    });
    canonicalize(&Dendrogram::from_option(stripped))
}

/// Total mass carried by each mark.
pub fn project_to_mark_measure(d: &MarkedDendrogram) -> BTreeMap<Mark, Dec> {
    let mut out = BTreeMap::new();
    for a in d.tree.atoms() {
        if let Some(m) = a.mark {
            *out.entry(m.clone()).or_insert(Dec::ZERO) += a.mass;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polynomial::{basis, eval_monomial};

    fn d(s: &str) -> Dec {
        s.parse().unwrap()
    }

    fn sym(s: &str) -> Mark {
        Mark::Symbol(s.into())
    }

    fn abc() -> MarkSpace {
        MarkSpace::alphabet(&["a", "b", "c"]).unwrap()
    }

    fn single(mass: &str, mark: &str) -> MarkedDendrogram {
        MarkedDendrogram::singleton(abc(), d(mass), sym(mark)).unwrap()
    }

    #[test]
    fn mark_spaces() {
        let s = abc();
        assert_eq!(s.neutral(), sym("a"));
        assert_eq!(s.cardinality(), 3);
        assert!(!s.contains(&sym("z")));
        assert!(MarkSpace::alphabet(&[]).is_err());
        assert!(MarkSpace::alphabet(&["a", "a"]).is_err());
        let b = MarkSpace::lattice_box(vec![-1, 0], vec![1, 2]).unwrap();
        assert_eq!(b.cardinality(), 9);
        assert_eq!(b.neutral(), Mark::Point(vec![0, 0]));
        assert!(b.contains(&Mark::Point(vec![-1, 2])));
        assert!(!b.contains(&Mark::Point(vec![2, 0])));
        assert!(!b.contains(&sym("a")));
        assert!(MarkSpace::lattice_box(vec![1], vec![2]).is_err());
    }

    #[test]
    fn rejects_foreign_marks() {
        let t = Dendrogram::from_root(Node::marked_leaf(Dec::ONE, sym("z")));
        assert!(MarkedDendrogram::new(abc(), &t).is_err());
        assert!(MarkedDendrogram::new(abc(), &Dendrogram::singleton(Dec::ONE)).is_err());
    }

    #[test]
    fn concat_keeps_marks() {
        let u = marked_concat(Dec::ONE, &[single("1", "a"), single("2", "b")]).unwrap();
        assert_eq!(u.tree().diameter(), d("2"));
        let mm = project_to_mark_measure(&u);
        assert_eq!(mm[&sym("a")], d("1"));
        assert_eq!(mm[&sym("b")], d("2"));
        let with_null = marked_concat(Dec::ONE, &[u.clone(), MarkedDendrogram::null(abc())]).unwrap();
        assert_eq!(with_null, u);
        let other = MarkedDendrogram::null(MarkSpace::alphabet(&["x"]).unwrap());
        assert!(marked_concat(Dec::ONE, &[u, other]).is_err());
    }

    #[test]
    fn zero_distance_merges_equal_marks_only() {
        let t = Dendrogram::from_root(Node::internal(
            Dec::ZERO,
            vec![
                Node::marked_leaf(d("1"), sym("a")),
                Node::marked_leaf(d("1"), sym("b")),
                Node::marked_leaf(d("2"), sym("a")),
            ],
        ));
        let m = MarkedDendrogram::new(abc(), &t).unwrap();
        assert_eq!(m.tree().n_atoms(), 2);
        assert_eq!(project_to_unmarked(&m).unwrap(), Dendrogram::singleton(d("4")));
    }

    #[test]
    fn truncation_and_decomposition() {
        let u = marked_concat(d("2"), &[single("1", "a"), single("2", "b")]).unwrap();
        let top = marked_truncate(Dec::ONE, &u).unwrap();
        assert_eq!(top.tree().diameter(), d("2"));
        assert_eq!(project_to_mark_measure(&top), project_to_mark_measure(&u));
        assert_eq!(marked_truncate(d("5"), &u).unwrap(), u);
        let primes = marked_decompose(Dec::ONE, &u).unwrap();
        assert_eq!(primes.len(), 2);
        assert_eq!(marked_concat(Dec::ONE, &primes).unwrap(), top);
        let shadow: Vec<Dendrogram> = primes.iter().map(|p| project_to_unmarked(p).unwrap()).collect();
        assert_eq!(shadow, decompose(Dec::ONE, &project_to_unmarked(&u).unwrap()).unwrap().primes);
    }

    #[test]
    fn marked_polynomials() {
        let u = marked_concat(Dec::ONE, &[single("1", "a"), single("2", "b"), single("0.5", "a")]).unwrap();
        let one = |_: &[&Mark]| 1.0;
        let spec = MonomialSpec::new(2, basis::SumEntries);
        assert_eq!(
            marked_monomial_eval(&spec, &one, &u).unwrap(),
            eval_monomial(&spec, u.tree()).unwrap()
        );
        let is_a = |m: &[&Mark]| if *m[0] == sym("a") { 1.0 } else { 0.0 };
        let spec1 = MonomialSpec::new(1, basis::Constant(1.0));
        assert_eq!(marked_monomial_eval(&spec1, &is_a, &u).unwrap(), 1.5);
        let nu = marked_distance_matrix_measure(2, &u).unwrap();
        let total: BigUint = nu.values().sum();
        // (3.5)^2 in units of 1e-24
        assert_eq!(total, BigUint::from(1225u32) * BigUint::from(10u32).pow(22));
    }
}
