use std::collections::BTreeMap;

use proptest::prelude::*;

use umspace::generate::{probe_depths, random_dendrogram, Shape};
use umspace::marked::{
    marked_concat, marked_decompose, marked_distance_matrix_measure, marked_monomial_eval, marked_truncate,
    project_to_mark_measure, project_to_unmarked, MarkSpace, MarkedDendrogram,
};
use umspace::polynomial::{basis, MonomialSpec};
use umspace::rng::stream;
use umspace::semigroup::{decompose, truncate};
use umspace::{Dec, Mark};

const MARKS: [&str; 3] = ["a", "b", "c"];

fn marked(seed: u64, atoms: usize) -> MarkedDendrogram {
    let shape = Shape::default().with_max_atoms(atoms).with_marks(&MARKS);
    let t = random_dendrogram(&mut stream(seed, "marked"), &shape).unwrap();
    MarkedDendrogram::new(MarkSpace::alphabet(&MARKS).unwrap(), &t).unwrap()
}

fn add(a: &BTreeMap<Mark, Dec>, b: &BTreeMap<Mark, Dec>) -> BTreeMap<Mark, Dec> {
    let mut out = a.clone();
    for (k, v) in b {
        *out.entry(k.clone()).or_insert(Dec::ZERO) += *v;
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn marked_factorization(seed in any::<u64>()) {
        let d = marked(seed, 30);
        for h in probe_depths(&mut stream(seed, "depths"), d.tree(), 4) {
            let primes = marked_decompose(h, &d).unwrap();
            let top = marked_truncate(h, &d).unwrap();
            prop_assert_eq!(marked_concat(h, &primes).unwrap_or(MarkedDendrogram::null(d.space().clone())), top.clone());
            prop_assert_eq!(project_to_mark_measure(&top), project_to_mark_measure(&d));
            // the genealogical shadow decomposes the same way
            let shadow: Vec<_> = primes.iter().map(|p| project_to_unmarked(p).unwrap()).collect();
            let mut expected = decompose(h, &project_to_unmarked(&d).unwrap()).unwrap().primes;
            let mut got = shadow.clone();
            expected.sort_by_key(|p| p.encoding().unwrap());
            got.sort_by_key(|p| p.encoding().unwrap());
            prop_assert_eq!(got, expected);
            // projection commutes with truncation
            prop_assert_eq!(project_to_unmarked(&top).unwrap(), truncate(h, &project_to_unmarked(&d).unwrap()).unwrap());
        }
    }

    #[test]
    fn marked_homomorphism(s1 in any::<u64>(), s2 in any::<u64>()) {
        let (u, v) = (marked(s1, 6), marked(s2, 6));
        let h = u.tree().diameter().max(v.tree().diameter()).half() + Dec::ONE;
        let w = marked_concat(h, &[u.clone(), v.clone()]).unwrap();
        prop_assert_eq!(
            project_to_mark_measure(&w),
            add(&project_to_mark_measure(&u), &project_to_mark_measure(&v))
        );
        let same = |m: &[&Mark]| if m[0] == m[1] { 1.0 } else { 0.25 };
        let spec = MonomialSpec::new(2, basis::ExpDecay { scale: 1.0 }).truncated(h);
        let lhs = marked_monomial_eval(&spec, &same, &w).unwrap();
        let rhs = marked_monomial_eval(&spec, &same, &u).unwrap() + marked_monomial_eval(&spec, &same, &v).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }
}

/// Non-isomorphic marked spaces with at most 4 atoms and 3 marks are told
/// apart by some product monomial `1[matrix = x] · 1[marks = y]` of order ≤ 4.
#[test]
fn marked_monomials_separate_small_spaces() {
    let family: Vec<MarkedDendrogram> = (0..120).map(|i| marked(i, 4)).collect();
    let mut compared = 0;
    for (i, a) in family.iter().enumerate() {
        for b in &family[i + 1..] {
            if a == b {
                continue;
            }
            compared += 1;
            let mut separated = false;
            for m in 1..=4 {
                let na = marked_distance_matrix_measure(m, a).unwrap();
                let nb = marked_distance_matrix_measure(m, b).unwrap();
                if let Some((key, _)) = na.iter().chain(nb.iter()).find(|(k, _)| na.get(*k) != nb.get(*k)) {
                    let (matrix, marks) = key.clone();
                    let phi = basis::FnTest::new("indicator", move |r| {
                        if r.exact() == matrix.as_slice() { 1.0 } else { 0.0 }
                    });
                    let g = move |ms: &[&Mark]| if ms.iter().zip(&marks).all(|(x, y)| *x == y) { 1.0 } else { 0.0 };
                    let spec = MonomialSpec::new(m, phi);
                    let va = marked_monomial_eval(&spec, &g, a).unwrap();
                    let vb = marked_monomial_eval(&spec, &g, b).unwrap();
                    assert!(va != vb, "indicator monomial failed to separate");
                    separated = true;
                    break;
                }
            }
            assert!(separated, "{a:?} and {b:?} have equal marked measures up to order 4");
        }
    }
    assert!(compared > 1000);
}

#[test]
fn lattice_marks() {
    let space = MarkSpace::lattice_box(vec![-2, -2], vec![2, 2]).unwrap();
    let u = MarkedDendrogram::singleton(space.clone(), Dec::ONE, Mark::Point(vec![1, -1])).unwrap();
    let v = MarkedDendrogram::singleton(space.clone(), Dec::from_int(2), space.neutral()).unwrap();
    let w = marked_concat(Dec::ONE, &[u, v]).unwrap();
    assert_eq!(w.tree().n_atoms(), 2);
    assert_eq!(project_to_mark_measure(&w).values().copied().sum::<Dec>(), w.tree().total_mass());
}
