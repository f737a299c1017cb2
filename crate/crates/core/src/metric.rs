//! Distance-matrix views of a dendrogram and the two scaling maps.

use std::collections::HashMap;

use crate::dec::Dec;
use crate::dendrogram::{canonicalize, Dendrogram, Node};
use crate::error::{Error, Result};

/// Square matrix of pairwise distances, row-major.
pub type DistanceMatrix = Vec<Vec<Dec>>;

/// Distances between atoms in depth-first leaf order, together with their
/// masses. The distance of two atoms is the height of their lowest common
/// ancestor.
pub fn to_distance_matrix(d: &Dendrogram) -> (DistanceMatrix, Vec<Dec>) {
    fn fill(n: &Node, start: usize, r: &mut DistanceMatrix) -> usize {
        match n {
            Node::Leaf { .. } => start + 1,
            Node::Internal { height, children } => {
                let mut ranges = Vec::with_capacity(children.len());
                let mut pos = start;
                for c in children {
                    let end = fill(c, pos, r);
                    ranges.push((pos, end));
                    pos = end;
                }
                for (a, &(s1, e1)) in ranges.iter().enumerate() {
                    for &(s2, e2) in &ranges[a + 1..] {
                        for i in s1..e1 {
                            for j in s2..e2 {
                                r[i][j] = *height;
                                r[j][i] = *height;
                            }
                        }
                    }
                }
                pos
            }
        }
    }
    let masses = d.masses();
    let n = masses.len();
    let mut r = vec![vec![Dec::ZERO; n]; n];
    if let Some(root) = d.root() {
        fill(root, 0, &mut r);
    }
    (r, masses)
}

/// Checks the strong triangle inequality up to `tolerance`, returning the
/// first violating triple.
pub fn check_ultrametric(r: &DistanceMatrix, tolerance: Dec) -> Result<()> {
    let n = r.len();
    for (i, row) in r.iter().enumerate() {
        if row.len() != n {
            return Err(Error::Matrix(format!("row {i} has {} entries, expected {n}", row.len())));
        }
        if !row[i].is_zero() {
            return Err(Error::Matrix(format!("diagonal entry r({i},{i}) = {} is not zero", row[i])));
        }
        for j in 0..n {
            if row[j].is_negative() {
                return Err(Error::Matrix(format!("negative distance r({i},{j}) = {}", row[j])));
            }
            if row[j] != r[j][i] {
                return Err(Error::Matrix(format!("r({i},{j}) != r({j},{i})")));
            }
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            for k in 0..n {
                let bound = r[i][k].max(r[k][j]);
                if r[i][j] > bound + tolerance {
                    return Err(Error::NotUltrametric {
                        i,
                        j,
                        k,
                        rij: r[i][j].to_string(),
                        bound: bound.to_string(),
                    });
                }
            }
        }
    }
    Ok(())
}

/// Builds the canonical dendrogram of an ultrametric distance matrix by
/// single-linkage merging at the distinct values of `r`.
///
/// Violations of the ultrametric inequality up to `tolerance` are accepted;
/// single linkage then realizes the subdominant ultrametric.
pub fn from_distance_matrix(r: &DistanceMatrix, masses: &[Dec], tolerance: Dec) -> Result<Dendrogram> {
    if r.len() != masses.len() {
        return Err(Error::Matrix(format!(
            "{} masses for a {}x{} matrix",
            masses.len(),
            r.len(),
            r.len()
        )));
    }
    if let Some(m) = masses.iter().find(|m| m.is_negative()) {
        return Err(Error::Matrix(format!("negative mass {m}")));
    }
    check_ultrametric(r, tolerance)?;
    let n = r.len();
    if n == 0 {
        return Ok(Dendrogram::null());
    }

    let mut edges: Vec<(Dec, usize, usize)> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            edges.push((r[i][j], i, j));
        }
    }
    edges.sort();

    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut cluster: Vec<Option<Node>> = masses.iter().map(|&m| Some(Node::leaf(m))).collect();

    let mut idx = 0;
    while idx < edges.len() {
        let level = edges[idx].0;
        let mut end = idx;
        while end < edges.len() && edges[end].0 == level {
            end += 1;
        }
        // roots before this level, grouped by their root after it
        let mut touched = Vec::new();
        for &(_, i, j) in &edges[idx..end] {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                touched.push(a);
                touched.push(b);
                parent[a] = b;
            }
        }
        touched.sort_unstable();
        touched.dedup();
        let mut groups: HashMap<usize, Vec<Node>> = HashMap::new();
        for old in touched {
            let new = find(&mut parent, old);
            if let Some(node) = cluster[old].take() {
                groups.entry(new).or_default().push(node);
            }
        }
        let mut keys: Vec<usize> = groups.keys().copied().collect();
        keys.sort_unstable();
        for k in keys {
            let children = groups.remove(&k).unwrap_or_default();
            cluster[k] = Some(Node::internal(level, children));
        }
        idx = end;
    }
    let root = find(&mut parent, 0);
    let tree = cluster[root].take().expect("single linkage ends with one cluster");
    canonicalize(&Dendrogram::from_root(tree))
}

/// `a ⊛ d`: multiplies every distance by `a > 0`.
pub fn scale_metric(a: Dec, d: &Dendrogram) -> Result<Dendrogram> {
    if !a.is_positive() {
        return Err(Error::Domain(format!("metric scale factor must be positive, got {a}")));
    }
    if d.heights().iter().any(|h| h.checked_mul(a).is_none()) {
        return Err(Error::Domain(format!("height overflow scaling by {a}")));
    }
    let scaled = d
        .root()
        .map(|r| r.map_heights(&|h| h.checked_mul(a).unwrap_or_default()));
    canonicalize(&Dendrogram::from_option(scaled))
}

/// Multiplies every mass by `a >= 0`; `a = 0` gives the null space.
pub fn scale_mass(a: Dec, d: &Dendrogram) -> Result<Dendrogram> {
    if a.is_negative() {
        return Err(Error::Domain(format!("mass scale factor must be nonnegative, got {a}")));
    }
    if d.masses().iter().any(|m| m.checked_mul(a).is_none()) {
        return Err(Error::Domain(format!("mass overflow scaling by {a}")));
    }
    let scaled = d.root().map(|r| {
        r.map_leaves(&|mass, mark| Node::Leaf {
            mass: mass.checked_mul(a).unwrap_or_default(),
            mark: mark.cloned(),
        })
    });
    canonicalize(&Dendrogram::from_option(scaled))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dendrogram::is_isomorphic;

    fn d(s: &str) -> Dec {
        s.parse().unwrap()
    }

    fn mat(rows: &[&[&str]]) -> DistanceMatrix {
        rows.iter().map(|r| r.iter().map(|x| d(x)).collect()).collect()
    }

    #[test]
    fn single_atom_matrix() {
        let t = from_distance_matrix(&mat(&[&["0"]]), &[d("2")], Dec::ZERO).unwrap();
        assert_eq!(t, Dendrogram::singleton(d("2")));
        let (r, m) = to_distance_matrix(&t);
        assert_eq!(r, mat(&[&["0"]]));
        assert_eq!(m, vec![d("2")]);
    }

    #[test]
    fn two_atoms() {
        let r = mat(&[&["0", "3"], &["3", "0"]]);
        let t = from_distance_matrix(&r, &[Dec::ONE, Dec::ONE], Dec::ZERO).unwrap();
        assert_eq!(t.diameter(), d("3"));
        assert_eq!(t.n_atoms(), 2);
        assert_eq!(to_distance_matrix(&t).0, r);
    }

    #[test]
    fn three_atoms_single_linkage() {
        let r = mat(&[&["0", "1", "4"], &["1", "0", "4"], &["4", "4", "0"]]);
        let t = from_distance_matrix(&r, &[Dec::ONE; 3], Dec::ZERO).unwrap();
        let expected = Dendrogram::from_root(Node::internal(
            d("4"),
            vec![Node::leaf(Dec::ONE), Node::internal(d("1"), vec![Node::leaf(Dec::ONE), Node::leaf(Dec::ONE)])],
        ));
        assert!(is_isomorphic(&t, &expected).unwrap());
        // leaf order of the canonical tree puts the singleton first
        let (back, _) = to_distance_matrix(&t);
        let mut entries: Vec<Dec> = back.iter().flatten().copied().collect();
        let mut orig: Vec<Dec> = r.iter().flatten().copied().collect();
        entries.sort();
        orig.sort();
        assert_eq!(entries, orig);
        assert_eq!(from_distance_matrix(&back, &[Dec::ONE; 3], Dec::ZERO).unwrap(), t);
    }

    #[test]
    fn non_ultrametric_names_triple() {
        let r = mat(&[&["0", "1", "5"], &["1", "0", "2"], &["5", "2", "0"]]);
        match from_distance_matrix(&r, &[Dec::ONE; 3], Dec::ZERO) {
            Err(Error::NotUltrametric { i: 0, j: 2, k: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        // within tolerance the subdominant ultrametric is built
        assert!(from_distance_matrix(&r, &[Dec::ONE; 3], d("3")).is_ok());
    }

    #[test]
    fn malformed_matrices() {
        assert!(from_distance_matrix(&mat(&[&["1"]]), &[Dec::ONE], Dec::ZERO).is_err());
        assert!(from_distance_matrix(&mat(&[&["0", "1"], &["2", "0"]]), &[Dec::ONE; 2], Dec::ZERO).is_err());
        assert!(from_distance_matrix(&mat(&[&["0"]]), &[Dec::ONE; 2], Dec::ZERO).is_err());
        assert!(from_distance_matrix(&mat(&[&["0"]]), &[d("-1")], Dec::ZERO).is_err());
    }

    #[test]
    fn zero_mass_atoms_leave_the_support() {
        let r = mat(&[&["0", "1", "4"], &["1", "0", "4"], &["4", "4", "0"]]);
        let t = from_distance_matrix(&r, &[Dec::ONE, Dec::ONE, Dec::ZERO], Dec::ZERO).unwrap();
        assert_eq!(t.diameter(), d("1"));
    }

    #[test]
    fn scaling() {
        let t = from_distance_matrix(&mat(&[&["0", "3"], &["3", "0"]]), &[Dec::ONE; 2], Dec::ZERO).unwrap();
        assert_eq!(scale_metric(Dec::ONE, &t).unwrap(), t);
        assert_eq!(scale_metric(d("2"), &t).unwrap().diameter(), d("6"));
        assert!(scale_metric(Dec::ZERO, &t).is_err());
        assert_eq!(scale_mass(Dec::ONE, &t).unwrap(), t);
        assert!(scale_mass(Dec::ZERO, &t).unwrap().is_null());
        assert_eq!(scale_mass(d("2.5"), &t).unwrap().total_mass(), d("5"));
        assert!(scale_mass(d("-1"), &t).is_err());
    }
}
