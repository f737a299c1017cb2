//! Exact discrete optimal transport by successive shortest paths.

use crate::error::{Error, Result};

/// Minimal cost of moving `supply` onto `demand` under `cost[i][j]`.
///
/// Total supply and demand must agree up to a relative `1e-9`. Costs must be
/// nonnegative.
pub fn transport_cost(supply: &[f64], demand: &[f64], cost: &[Vec<f64>]) -> Result<f64> {
    let n = supply.len();
    let k = demand.len();
    if cost.len() != n || cost.iter().any(|row| row.len() != k) {
        return Err(Error::Domain("cost matrix shape does not match supply and demand".into()));
    }
    if supply.iter().chain(demand).any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::Domain("supplies and demands must be finite and nonnegative".into()));
    }
    if cost.iter().flatten().any(|c| !c.is_finite() || *c < 0.0) {
        return Err(Error::Domain("costs must be finite and nonnegative".into()));
    }
    let total_s: f64 = supply.iter().sum();
    let total_d: f64 = demand.iter().sum();
    let scale = total_s.max(total_d).max(f64::MIN_POSITIVE);
    if (total_s - total_d).abs() > 1e-9 * scale {
        return Err(Error::Domain(format!("unbalanced transport: supply {total_s} vs demand {total_d}")));
    }
    if n == 0 || k == 0 {
        return Ok(0.0);
    }
    let eps = 1e-13 * scale;

    let mut left = supply.to_vec();
    let mut need = demand.to_vec();
    let mut flow = vec![vec![0.0f64; k]; n];
    // potentials keep reduced costs nonnegative
    let mut pot = vec![0.0f64; n + k];

    loop {
        if need.iter().all(|&d| d <= eps) || left.iter().all(|&s| s <= eps) {
            break;
        }
        // Dijkstra over supply nodes 0..n and demand nodes n..n+k
        let mut dist = vec![f64::INFINITY; n + k];
        let mut prev = vec![usize::MAX; n + k];
        let mut done = vec![false; n + k];
        for i in 0..n {
            if left[i] > eps {
                dist[i] = 0.0;
            }
        }
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..n + k {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            if u < n {
                for j in 0..k {
                    let v = n + j;
                    let rc = cost[u][j] + pot[u] - pot[v];
                    let nd = dist[u] + rc.max(0.0);
                    if nd < dist[v] {
                        dist[v] = nd;
                        prev[v] = u;
                    }
                }
            } else {
                let j = u - n;
                for i in 0..n {
                    if flow[i][j] > eps {
                        let rc = -cost[i][j] + pot[u] - pot[i];
                        let nd = dist[u] + rc.max(0.0);
                        if nd < dist[i] {
                            dist[i] = nd;
                            prev[i] = u;
                        }
                    }
                }
            }
        }
        let target = (0..k)
            .filter(|&j| need[j] > eps && dist[n + j].is_finite())
            .min_by(|&a, &b| dist[n + a].total_cmp(&dist[n + b]));
        let Some(j) = target else {
            return Err(Error::Domain("transport problem has no feasible augmenting path".into()));
        };
        let reach = dist[n + j];
        for v in 0..n + k {
            pot[v] += dist[v].min(reach);
        }
        // walk back to the originating supply node
        let mut path = vec![n + j];
        let mut v = n + j;
        while prev[v] != usize::MAX {
            v = prev[v];
            path.push(v);
        }
        let src = v;
        let mut amount = need[j].min(left[src]);
        for w in path.windows(2) {
            let (to, from) = (w[0], w[1]);
            if from >= n {
                // backward edge demand(from) -> supply(to)
                amount = amount.min(flow[to][from - n]);
            }
        }
        for w in path.windows(2) {
            let (to, from) = (w[0], w[1]);
            if from < n {
                flow[from][to - n] += amount;
            } else {
                flow[to][from - n] -= amount;
            }
        }
        left[src] -= amount;
        need[j] -= amount;
    }
    Ok(flow
        .iter()
        .zip(cost)
        .map(|(f, c)| f.iter().zip(c).map(|(x, y)| x.max(0.0) * y).sum::<f64>())
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// W1 between two weighted point sets on the line, via `∫ |F - G|`.
    fn w1_line(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
        let mut xs: Vec<f64> = a.iter().chain(b).map(|p| p.0).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        let cdf = |s: &[(f64, f64)], x: f64| s.iter().filter(|p| p.0 <= x).map(|p| p.1).sum::<f64>();
        xs.windows(2).map(|w| (cdf(a, w[0]) - cdf(b, w[0])).abs() * (w[1] - w[0])).sum()
    }

    fn solve_line(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
        let cost: Vec<Vec<f64>> = a.iter().map(|p| b.iter().map(|q| (p.0 - q.0).abs()).collect()).collect();
        let s: Vec<f64> = a.iter().map(|p| p.1).collect();
        let d: Vec<f64> = b.iter().map(|p| p.1).collect();
        transport_cost(&s, &d, &cost).unwrap()
    }

    #[test]
    fn hand_example() {
        // two sources, two sinks: the crossing assignment is optimal
        let c = vec![vec![4.0, 1.0], vec![1.0, 4.0]];
        assert_eq!(transport_cost(&[1.0, 1.0], &[1.0, 1.0], &c).unwrap(), 2.0);
    }

    #[test]
    fn matches_line_oracle() {
        let cases: Vec<(Vec<(f64, f64)>, Vec<(f64, f64)>)> = vec![
            (vec![(0.0, 1.0)], vec![(3.0, 1.0)]),
            (vec![(0.0, 0.5), (2.0, 0.5)], vec![(1.0, 1.0)]),
            (
                vec![(0.0, 0.2), (1.0, 0.3), (4.0, 0.5)],
                vec![(0.5, 0.1), (2.0, 0.6), (3.0, 0.3)],
            ),
            (
                vec![(0.0, 1.0), (1.0, 2.0), (2.0, 3.0), (7.0, 0.5)],
                vec![(0.0, 3.0), (5.0, 3.0), (6.0, 0.25), (6.5, 0.25)],
            ),
        ];
        for (a, b) in cases {
            let exact = w1_line(&a, &b);
            let got = solve_line(&a, &b);
            assert!((exact - got).abs() < 1e-12, "{exact} vs {got}");
            assert!((solve_line(&b, &a) - got).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_unbalanced() {
        assert!(transport_cost(&[1.0], &[2.0], &[vec![0.0]]).is_err());
        assert!(transport_cost(&[1.0], &[1.0], &[vec![-1.0]]).is_err());
    }

    #[test]
    fn pseudo_random_line_instances() {
        // deterministic LCG so the oracle comparison covers many shapes
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..200 {
            let na = 1 + (next() * 6.0) as usize;
            let nb = 1 + (next() * 6.0) as usize;
            let mut a: Vec<(f64, f64)> = (0..na).map(|_| ((next() * 10.0).round(), next() + 0.01)).collect();
            let mut b: Vec<(f64, f64)> = (0..nb).map(|_| ((next() * 10.0).round(), next() + 0.01)).collect();
            let ta: f64 = a.iter().map(|p| p.1).sum();
            let tb: f64 = b.iter().map(|p| p.1).sum();
            a.iter_mut().for_each(|p| p.1 /= ta);
            b.iter_mut().for_each(|p| p.1 /= tb);
            let exact = w1_line(&a, &b);
            let got = solve_line(&a, &b);
            assert!((exact - got).abs() < 1e-9, "{exact} vs {got}");
        }
    }
}
