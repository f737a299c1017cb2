//! A transport distance between um-spaces built from distance-matrix moments.

use crate::dendrogram::Dendrogram;
use crate::error::{Error, Result};
use crate::polynomial::{distance_matrix_measure, DistanceMatrixMeasure};
use crate::transport::transport_cost;

/// `Σ_{m=2}^{m_max} 2^{-m} W1(ν^{m,d1}, ν^{m,d2}) + |ū1 - ū2|`.
///
/// `W1` is the optimal transport cost under the max-norm on distance
/// matrices. When the two measures have different total weight the lighter
/// side gets a sink atom for the difference, reachable from every matrix at
/// cost `max(diam d1, diam d2)`.
pub fn gw_surrogate_distance(d1: &Dendrogram, d2: &Dendrogram, m_max: usize) -> Result<f64> {
    if m_max < 2 {
        return Err(Error::Domain(format!("m_max must be at least 2, got {m_max}")));
    }
    // a fixed argument order makes the float result exactly symmetric
    let (d1, d2) = if d1.encoding()? <= d2.encoding()? { (d1, d2) } else { (d2, d1) };
    let penalty = d1.diameter().max(d2.diameter()).to_f64();
    let mut acc = (d1.total_mass() - d2.total_mass()).abs().to_f64();
    for m in 2..=m_max {
        let a = distance_matrix_measure(m, d1)?;
        let b = distance_matrix_measure(m, d2)?;
        acc += 0.5f64.powi(m as i32) * w1(&a, &b, penalty)?;
    }
    Ok(acc)
}

fn w1(a: &DistanceMatrixMeasure, b: &DistanceMatrixMeasure, penalty: f64) -> Result<f64> {
    let pa: Vec<(Vec<f64>, f64)> = a.iter().map(|(k, w)| (k.iter().map(|x| x.to_f64()).collect(), w)).collect();
    let pb: Vec<(Vec<f64>, f64)> = b.iter().map(|(k, w)| (k.iter().map(|x| x.to_f64()).collect(), w)).collect();
    let mut supply: Vec<f64> = pa.iter().map(|p| p.1).collect();
    let mut demand: Vec<f64> = pb.iter().map(|p| p.1).collect();
    let mut cost: Vec<Vec<f64>> = pa
        .iter()
        .map(|(x, _)| pb.iter().map(|(y, _)| max_norm(x, y)).collect())
        .collect();
    let (ta, tb) = (a.total_weight(), b.total_weight());
    if ta > tb {
        demand.push(ta - tb);
        cost.iter_mut().for_each(|row| row.push(penalty));
    } else if tb > ta {
        supply.push(tb - ta);
        cost.push(vec![penalty; demand.len()]);
    }
    transport_cost(&supply, &demand, &cost)
}

fn max_norm(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dec::Dec;
    use crate::dendrogram::Node;

    fn d(s: &str) -> Dec {
        s.parse().unwrap()
    }

    fn pair(r: &str, m1: &str, m2: &str) -> Dendrogram {
        Dendrogram::from_root(Node::internal(d(r), vec![Node::leaf(d(m1)), Node::leaf(d(m2))]))
    }

    #[test]
    fn singletons_differ_by_mass_gap() {
        let a = Dendrogram::singleton(Dec::ONE);
        let b = Dendrogram::singleton(d("2"));
        assert_eq!(gw_surrogate_distance(&a, &b, 3).unwrap(), 1.0);
        assert_eq!(gw_surrogate_distance(&a, &a, 3).unwrap(), 0.0);
    }

    #[test]
    fn isomorphic_inputs_are_at_distance_zero() {
        let a = pair("3", "1", "2");
        let b = Dendrogram::from_root(Node::internal(d("3"), vec![Node::leaf(d("2")), Node::leaf(d("1"))]));
        assert_eq!(gw_surrogate_distance(&a, &b, 3).unwrap(), 0.0);
    }

    #[test]
    fn symmetric_and_positive_on_distinct_pairs() {
        let a = pair("3", "1", "1");
        let b = pair("1", "1", "1");
        let x = gw_surrogate_distance(&a, &b, 3).unwrap();
        let y = gw_surrogate_distance(&b, &a, 3).unwrap();
        assert_eq!(x, y);
        // ν² moves off-diagonal weight 2 by distance 2; ν³ moves weight 6
        let expected = 0.25 * 2.0 * 2.0 + 0.125 * 6.0 * 2.0;
        assert!((x - expected).abs() < 1e-12, "{x}");
    }

    #[test]
    fn budget_is_reported() {
        let leaves: Vec<Node> = (0..200).map(|_| Node::leaf(Dec::ONE)).collect();
        let big = Dendrogram::from_root(Node::internal(Dec::ONE, leaves));
        assert!(matches!(
            gw_surrogate_distance(&big, &big, 4),
            Err(Error::Budget { .. })
        ));
        assert!(gw_surrogate_distance(&big, &big, 1).is_err());
    }
}
