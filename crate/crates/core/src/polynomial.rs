//! Distance-matrix measures and the polynomials built on them.
//!
//! A monomial of order `m` with test function `φ` evaluates
//! `Φ(u) = ∫ φ((r(x_i, x_j))_{i<j}) μ^{⊗m}(dx)`; on a finite space the
//! integral is a sum over ordered `m`-tuples of atoms. Truncation at depth
//! `h` multiplies `φ` by `∏ 1[r_ij < 2h]` (strict), which makes the monomial
//! additive over `h`-concatenation.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use rand::Rng as _;
use rayon::prelude::*;

use crate::dec::Dec;
use crate::dendrogram::Dendrogram;
use crate::error::{Error, Result};
use crate::metric::to_distance_matrix;
use crate::rng::{map_samples, stream, Estimate, Sampler};
use crate::semigroup::decompose;

/// Default cap on the number of enumerated atom tuples.
pub const DEFAULT_BUDGET: u128 = 10_000_000;

/// Index of entry `(i, j)`, `i < j`, in the row-major upper triangle of an
/// `m × m` matrix.
pub fn pair_index(m: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < m);
    i * (2 * m - i - 1) / 2 + (j - i - 1)
}

pub fn n_pairs(m: usize) -> usize {
    m * m.saturating_sub(1) / 2
}

/// Borrowed distance matrix of an `m`-sample, stored as its upper triangle.
#[derive(Clone, Copy, Debug)]
pub struct MatrixView<'a> {
    order: usize,
    values: &'a [f64],
    exact: &'a [Dec],
}

impl<'a> MatrixView<'a> {
    /// `values` and `exact` are the same upper triangle, as floats and as
    /// exact decimals.
    pub fn new(order: usize, values: &'a [f64], exact: &'a [Dec]) -> Self {
        assert_eq!(values.len(), n_pairs(order));
        assert_eq!(exact.len(), values.len());
        MatrixView { order, values, exact }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Symmetric access; the diagonal is 0.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => 0.0,
            std::cmp::Ordering::Less => self.values[pair_index(self.order, i, j)],
            std::cmp::Ordering::Greater => self.values[pair_index(self.order, j, i)],
        }
    }

    pub fn get_exact(&self, i: usize, j: usize) -> Dec {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => Dec::ZERO,
            std::cmp::Ordering::Less => self.exact[pair_index(self.order, i, j)],
            std::cmp::Ordering::Greater => self.exact[pair_index(self.order, j, i)],
        }
    }

    pub fn values(&self) -> &[f64] {
        self.values
    }

    pub fn exact(&self) -> &[Dec] {
        self.exact
    }

    /// Sub-matrix of the indices in `block`.
    pub fn restrict(&self, block: std::ops::Range<usize>) -> (Vec<f64>, Vec<Dec>) {
        let mut v = Vec::with_capacity(n_pairs(block.len()));
        let mut e = Vec::with_capacity(v.capacity());
        for i in block.clone() {
            for j in (i + 1)..block.end {
                v.push(self.get(i, j));
                e.push(self.get_exact(i, j));
            }
        }
        (v, e)
    }
}

/// Builds a view from a full symmetric float matrix, for probing test
/// functions outside of an enumeration.
pub fn upper_triangle(full: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Dec>)> {
    let m = full.len();
    let mut v = Vec::with_capacity(n_pairs(m));
    let mut e = Vec::with_capacity(n_pairs(m));
    for i in 0..m {
        for j in (i + 1)..m {
            v.push(full[i][j]);
            e.push(Dec::from_f64(full[i][j])?);
        }
    }
    Ok((v, e))
}

/// A bounded test function on distance matrices of a fixed order.
pub trait TestFunction: Send + Sync + fmt::Debug {
    fn eval(&self, r: &MatrixView<'_>) -> f64;

    /// Writes `∂φ/∂r_ij` in upper-triangle order. Returns `false` when no
    /// gradient is available.
    fn gradient(&self, _r: &MatrixView<'_>, _out: &mut [f64]) -> bool {
        false
    }

    fn has_gradient(&self) -> bool {
        false
    }

    /// Declared bound on `|φ|` over the relevant compact, when known.
    fn bound(&self) -> Option<f64> {
        None
    }
}

/// Built-in test functions.
pub mod basis {
    use super::*;

    /// `φ ≡ c`.
    #[derive(Clone, Debug)]
    pub struct Constant(pub f64);

    impl TestFunction for Constant {
        fn eval(&self, _r: &MatrixView<'_>) -> f64 {
            self.0
        }
        fn gradient(&self, _r: &MatrixView<'_>, out: &mut [f64]) -> bool {
            out.fill(0.0);
            true
        }
        fn has_gradient(&self) -> bool {
            true
        }
        fn bound(&self) -> Option<f64> {
            Some(self.0.abs())
        }
    }

    /// `φ(r) = r_ij^k` (zero-based `i < j`).
    #[derive(Clone, Debug)]
    pub struct Power {
        pub i: usize,
        pub j: usize,
        pub k: i32,
    }

    impl TestFunction for Power {
        fn eval(&self, r: &MatrixView<'_>) -> f64 {
            r.get(self.i, self.j).powi(self.k)
        }
        fn gradient(&self, r: &MatrixView<'_>, out: &mut [f64]) -> bool {
            out.fill(0.0);
            let x = r.get(self.i, self.j);
            out[pair_index(r.order(), self.i, self.j)] = if self.k == 0 {
                0.0
            } else {
                self.k as f64 * x.powi(self.k - 1)
            };
            true
        }
        fn has_gradient(&self) -> bool {
            true
        }
    }

    /// `φ(r) = Σ_{i<j} r_ij`.
    #[derive(Clone, Debug)]
    pub struct SumEntries;

    impl TestFunction for SumEntries {
        fn eval(&self, r: &MatrixView<'_>) -> f64 {
            r.values().iter().sum()
        }
        fn gradient(&self, _r: &MatrixView<'_>, out: &mut [f64]) -> bool {
            out.fill(1.0);
            true
        }
        fn has_gradient(&self) -> bool {
            true
        }
    }

    /// `φ(r) = exp(-Σ_{i<j} r_ij / scale)`, bounded by 1.
    #[derive(Clone, Debug)]
    pub struct ExpDecay {
        pub scale: f64,
    }

    impl TestFunction for ExpDecay {
        fn eval(&self, r: &MatrixView<'_>) -> f64 {
            (-r.values().iter().sum::<f64>() / self.scale).exp()
        }
        fn gradient(&self, r: &MatrixView<'_>, out: &mut [f64]) -> bool {
            let g = -self.eval(r) / self.scale;
            out.fill(g);
            true
        }
        fn has_gradient(&self) -> bool {
            true
        }
        fn bound(&self) -> Option<f64> {
            Some(1.0)
        }
    }

    /// Smooth bump `(1 - ((r_ij - center)/width)^2)^2` on `|r_ij - center| < width`.
    #[derive(Clone, Debug)]
    pub struct Bump {
        pub i: usize,
        pub j: usize,
        pub center: f64,
        pub width: f64,
    }

    impl TestFunction for Bump {
        fn eval(&self, r: &MatrixView<'_>) -> f64 {
            let t = (r.get(self.i, self.j) - self.center) / self.width;
            if t.abs() < 1.0 {
                (1.0 - t * t).powi(2)
            } else {
                0.0
            }
        }
        fn gradient(&self, r: &MatrixView<'_>, out: &mut [f64]) -> bool {
            out.fill(0.0);
            let t = (r.get(self.i, self.j) - self.center) / self.width;
            if t.abs() < 1.0 {
                out[pair_index(r.order(), self.i, self.j)] = -4.0 * t * (1.0 - t * t) / self.width;
            }
            true
        }
        fn has_gradient(&self) -> bool {
            true
        }
        fn bound(&self) -> Option<f64> {
            Some(1.0)
        }
    }

    /// `φ(r) = 1[r_ij < threshold]`.
    #[derive(Clone, Debug)]
    pub struct Below {
        pub i: usize,
        pub j: usize,
        pub threshold: Dec,
    }

    impl TestFunction for Below {
        fn eval(&self, r: &MatrixView<'_>) -> f64 {
            f64::from(u8::from(r.get_exact(self.i, self.j) < self.threshold))
        }
        fn bound(&self) -> Option<f64> {
            Some(1.0)
        }
    }

    /// `φ(r) = 1[r_ij > 0]`: the two sampled atoms are distinct.
    #[derive(Clone, Debug)]
    pub struct Distinct {
        pub i: usize,
        pub j: usize,
    }

    impl TestFunction for Distinct {
        fn eval(&self, r: &MatrixView<'_>) -> f64 {
            f64::from(u8::from(r.get_exact(self.i, self.j).is_positive()))
        }
        fn bound(&self) -> Option<f64> {
            Some(1.0)
        }
    }

    /// Test function backed by closures.
    #[derive(Clone)]
    pub struct FnTest {
        pub name: String,
        pub f: Arc<dyn Fn(&MatrixView<'_>) -> f64 + Send + Sync>,
        pub grad: Option<Arc<dyn Fn(&MatrixView<'_>, &mut [f64]) + Send + Sync>>,
        pub bound: Option<f64>,
    }

    impl FnTest {
        pub fn new(name: &str, f: impl Fn(&MatrixView<'_>) -> f64 + Send + Sync + 'static) -> Self {
            FnTest {
                name: name.to_string(),
                f: Arc::new(f),
                grad: None,
                bound: None,
            }
        }
    }

    impl fmt::Debug for FnTest {
        fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            write!(f, "FnTest({})", self.name)
        }
    }

    impl TestFunction for FnTest {
        fn eval(&self, r: &MatrixView<'_>) -> f64 {
            (self.f)(r)
        }
        fn gradient(&self, r: &MatrixView<'_>, out: &mut [f64]) -> bool {
            match &self.grad {
                Some(g) => {
                    g(r, out);
                    true
                }
                None => false,
            }
        }
        fn has_gradient(&self) -> bool {
            self.grad.is_some()
        }
        fn bound(&self) -> Option<f64> {
            self.bound
        }
    }
}

/// `Φ^{m,φ}`, optionally truncated at depth `h`.
#[derive(Clone, Debug)]
pub struct MonomialSpec {
    pub order: usize,
    pub phi: Arc<dyn TestFunction>,
    pub depth: Option<Dec>,
}

impl MonomialSpec {
    pub fn new(order: usize, phi: impl TestFunction + 'static) -> Self {
        MonomialSpec {
            order,
            phi: Arc::new(phi),
            depth: None,
        }
    }

    /// `φ ≡ 1`: the monomial is `ū^m`.
    pub fn total_mass_power(order: usize) -> Self {
        MonomialSpec::new(order, basis::Constant(1.0))
    }

    /// Upper truncation `φ_h = φ · ∏ 1[r_ij < 2h]`; a second truncation keeps
    /// the smaller depth.
    pub fn truncated(&self, h: Dec) -> Self {
        MonomialSpec {
            order: self.order,
            phi: self.phi.clone(),
            depth: Some(self.depth.map_or(h, |d| d.min(h))),
        }
    }

    fn check(&self) -> Result<()> {
        if self.order == 0 {
            return Err(Error::Domain("monomial order must be at least 1".into()));
        }
        if let Some(h) = self.depth {
            if h.is_negative() {
                return Err(Error::Domain(format!("truncation depth must be nonnegative, got {h}")));
            }
        }
        Ok(())
    }

    /// Compares the supplied gradient with central finite differences (step
    /// `1e-5`) on each probe; returns the worst relative error.
    pub fn gradient_error(&self, probes: &[Vec<Vec<f64>>]) -> Result<f64> {
        if !self.phi.has_gradient() {
            return Err(Error::MissingGradient);
        }
        let step = 1e-5;
        let mut worst: f64 = 0.0;
        for full in probes {
            let (vals, exact) = upper_triangle(full)?;
            let view = MatrixView::new(self.order, &vals, &exact);
            let mut grad = vec![0.0; vals.len()];
            self.phi.gradient(&view, &mut grad);
            for p in 0..vals.len() {
                let mut plus = vals.clone();
                let mut minus = vals.clone();
                plus[p] += step;
                minus[p] -= step;
                let fp = self.phi.eval(&MatrixView::new(self.order, &plus, &exact));
                let fm = self.phi.eval(&MatrixView::new(self.order, &minus, &exact));
                let fd = (fp - fm) / (2.0 * step);
                let err = (fd - grad[p]).abs() / fd.abs().max(grad[p].abs()).max(1.0);
                worst = worst.max(err);
            }
        }
        Ok(worst)
    }
}

/// Linear combination of monomials plus a constant.
#[derive(Clone, Debug, Default)]
pub struct PolynomialSpec {
    pub constant: f64,
    pub terms: Vec<(f64, MonomialSpec)>,
}

impl PolynomialSpec {
    pub fn monomial(spec: MonomialSpec) -> Self {
        PolynomialSpec {
            constant: 0.0,
            terms: vec![(1.0, spec)],
        }
    }

    pub fn plus(mut self, coef: f64, spec: MonomialSpec) -> Self {
        self.terms.push((coef, spec));
        self
    }

    pub fn truncated(&self, h: Dec) -> Self {
        PolynomialSpec {
            constant: self.constant,
            terms: self.terms.iter().map(|(c, m)| (*c, m.truncated(h))).collect(),
        }
    }
}

/// Atom data of a space prepared for tuple enumeration.
pub(crate) struct AtomTable {
    pub n: usize,
    pub masses: Vec<f64>,
    pub total: f64,
    pub dist: Vec<f64>,
    pub exact: Vec<Dec>,
}

impl AtomTable {
    pub fn new(d: &Dendrogram) -> Self {
        let (r, m) = to_distance_matrix(d);
        let n = m.len();
        let exact: Vec<Dec> = r.into_iter().flatten().collect();
        let masses: Vec<f64> = m.iter().map(|x| x.to_f64()).collect();
        AtomTable {
            n,
            total: d.total_mass().to_f64(),
            dist: exact.iter().map(|x| x.to_f64()).collect(),
            exact,
            masses,
        }
    }

    fn fill(&self, tuple: &[usize], vals: &mut [f64], exact: &mut [Dec]) {
        let m = tuple.len();
        let mut p = 0;
        for i in 0..m {
            for j in (i + 1)..m {
                let k = tuple[i] * self.n + tuple[j];
                vals[p] = self.dist[k];
                exact[p] = self.exact[k];
                p += 1;
            }
        }
    }
}

fn tuple_count(n: usize, m: usize) -> u128 {
    (n as u128).checked_pow(m as u32).unwrap_or(u128::MAX)
}

pub(crate) fn check_budget(n: usize, m: usize, budget: u128) -> Result<()> {
    let needed = tuple_count(n, m);
    if needed > budget {
        Err(Error::Budget { needed, budget })
    } else {
        Ok(())
    }
}

/// Visits every ordered `m`-tuple of atoms with its product weight and
/// distance matrix.
pub(crate) fn for_each_tuple(
    table: &AtomTable,
    m: usize,
    mut f: impl FnMut(&[usize], f64, &MatrixView<'_>) -> Result<()>,
) -> Result<()> {
    if table.n == 0 {
        return Ok(());
    }
    let mut tuple = vec![0usize; m];
    let mut vals = vec![0.0; n_pairs(m)];
    let mut exact = vec![Dec::ZERO; n_pairs(m)];
    loop {
        table.fill(&tuple, &mut vals, &mut exact);
        let w: f64 = tuple.iter().map(|&i| table.masses[i]).product();
        f(&tuple, w, &MatrixView::new(m, &vals, &exact))?;
        let mut pos = m;
        loop {
            if pos == 0 {
                return Ok(());
            }
            pos -= 1;
            tuple[pos] += 1;
            if tuple[pos] < table.n {
                break;
            }
            tuple[pos] = 0;
        }
    }
}

fn within_depth(view: &MatrixView<'_>, depth: Option<Dec>) -> bool {
    match depth {
        None => true,
        Some(h) => {
            let cut = h.double();
            view.exact().iter().all(|&r| r < cut)
        }
    }
}

fn finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("test function returned {v}")))
    }
}

/// Exact value of a monomial by enumeration of atom tuples.
pub fn eval_monomial(spec: &MonomialSpec, d: &Dendrogram) -> Result<f64> {
    eval_monomial_budget(spec, d, DEFAULT_BUDGET)
}

pub fn eval_monomial_budget(spec: &MonomialSpec, d: &Dendrogram, budget: u128) -> Result<f64> {
    spec.check()?;
    let table = AtomTable::new(d);
    check_budget(table.n, spec.order, budget)?;
    let mut acc = 0.0;
    for_each_tuple(&table, spec.order, |_, w, view| {
        if within_depth(view, spec.depth) {
            acc += w * finite(spec.phi.eval(view))?;
        }
        Ok(())
    })?;
    Ok(acc)
}

/// How a monomial is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalMode {
    Exact,
    /// i.i.d. mass-proportional atom draws; worker `w` uses the stream
    /// labelled `mc/<w>`, so results depend on `(seed, workers)` only.
    MonteCarlo { samples: usize, seed: u64, workers: usize },
}

/// Monte-Carlo estimate of a monomial: draws `m` atoms proportionally to mass
/// and scales by `ū^m`.
pub fn eval_monomial_mc(spec: &MonomialSpec, d: &Dendrogram, samples: usize, seed: u64, workers: usize) -> Result<Estimate> {
    spec.check()?;
    if samples < 2 {
        return Err(Error::Domain("Monte-Carlo evaluation needs at least 2 samples".into()));
    }
    let table = AtomTable::new(d);
    if table.n == 0 {
        return Ok(Estimate::exact(0.0));
    }
    let workers = workers.max(1);
    let mut cumulative = Vec::with_capacity(table.n);
    let mut acc = 0.0;
    for &m in &table.masses {
        acc += m;
        cumulative.push(acc);
    }
    let scale = table.total.powi(spec.order as i32);
    let m = spec.order;
    let chunks: Vec<Result<Vec<f64>>> = (0..workers)
        .into_par_iter()
        .map(|w| {
            let count = samples / workers + usize::from(w < samples % workers);
            let mut rng = stream(seed, &format!("mc/{w}"));
            let mut tuple = vec![0usize; m];
            let mut vals = vec![0.0; n_pairs(m)];
            let mut exact = vec![Dec::ZERO; n_pairs(m)];
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                for t in tuple.iter_mut() {
                    let u = rng.random::<f64>() * acc;
                    *t = cumulative.partition_point(|&c| c <= u).min(table.n - 1);
                }
                table.fill(&tuple, &mut vals, &mut exact);
                let view = MatrixView::new(m, &vals, &exact);
                let v = if within_depth(&view, spec.depth) {
                    finite(spec.phi.eval(&view))?
                } else {
                    0.0
                };
                out.push(scale * v);
            }
            Ok(out)
        })
        .collect();
    let mut values = Vec::with_capacity(samples);
    for c in chunks {
        values.extend(c?);
    }
    Ok(Estimate::from_values(&values))
}

pub fn eval_monomial_with(spec: &MonomialSpec, d: &Dendrogram, mode: EvalMode) -> Result<Estimate> {
    match mode {
        EvalMode::Exact => eval_monomial(spec, d).map(Estimate::exact),
        EvalMode::MonteCarlo { samples, seed, workers } => eval_monomial_mc(spec, d, samples, seed, workers),
    }
}

pub fn eval_polynomial(spec: &PolynomialSpec, d: &Dendrogram) -> Result<f64> {
    let mut acc = spec.constant;
    for (c, m) in &spec.terms {
        acc += c * eval_monomial(m, d)?;
    }
    Ok(acc)
}

/// The distance-matrix measure `ν^{m,u}`: push-forward of `μ^{⊗m}` under the
/// map sending a tuple to its distance matrix.
///
/// Weights are exact: a weight is stored as an integer count of
/// `10^{-12m}` units.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DistanceMatrixMeasure {
    pub order: usize,
    pub support: BTreeMap<Vec<Dec>, BigUint>,
}

impl DistanceMatrixMeasure {
    pub fn new(order: usize) -> Self {
        DistanceMatrixMeasure {
            order,
            support: BTreeMap::new(),
        }
    }

    fn unit(&self) -> f64 {
        10f64.powi(-(12 * self.order as i32))
    }

    /// Adds `weight` (in units of `10^{-12m}`) at the upper-triangle `matrix`.
    pub fn add_atom(&mut self, matrix: Vec<Dec>, weight: BigUint) {
        if weight.is_zero() {
            return;
        }
        *self.support.entry(matrix).or_default() += weight;
    }

    pub fn add(&mut self, other: &DistanceMatrixMeasure) {
        for (k, w) in &other.support {
            self.add_atom(k.clone(), w.clone());
        }
    }

    pub fn weight(&self, matrix: &[Dec]) -> f64 {
        self.support
            .get(matrix)
            .map_or(0.0, |w| w.to_f64().unwrap_or(f64::INFINITY) * self.unit())
    }

    pub fn total_weight(&self) -> f64 {
        let total: BigUint = self.support.values().sum();
        total.to_f64().unwrap_or(f64::INFINITY) * self.unit()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[Dec], f64)> + '_ {
        let unit = self.unit();
        self.support
            .iter()
            .map(move |(k, w)| (k.as_slice(), w.to_f64().unwrap_or(f64::INFINITY) * unit))
    }

    /// Weight of the set of matrices where `pred` holds.
    pub fn mass_where(&self, pred: impl Fn(&[Dec]) -> bool) -> f64 {
        let total: BigUint = self.support.iter().filter(|(k, _)| pred(k)).map(|(_, w)| w).sum();
        total.to_f64().unwrap_or(f64::INFINITY) * self.unit()
    }
}

fn mass_units(m: Dec) -> BigUint {
    BigUint::from(m.units().max(0) as u128)
}

/// Exact `ν^{m,d}` by enumeration of ordered atom tuples (with repetition).
pub fn distance_matrix_measure(m: usize, d: &Dendrogram) -> Result<DistanceMatrixMeasure> {
    distance_matrix_measure_budget(m, d, DEFAULT_BUDGET)
}

pub fn distance_matrix_measure_budget(m: usize, d: &Dendrogram, budget: u128) -> Result<DistanceMatrixMeasure> {
    if m == 0 {
        return Err(Error::Domain("order must be at least 1".into()));
    }
    let table = AtomTable::new(d);
    check_budget(table.n, m, budget)?;
    let units: Vec<BigUint> = d.masses().into_iter().map(mass_units).collect();
    let mut out = DistanceMatrixMeasure::new(m);
    for_each_tuple(&table, m, |tuple, _, view| {
        let w = tuple.iter().fold(BigUint::from(1u8), |acc, &i| acc * &units[i]);
        out.add_atom(view.exact().to_vec(), w);
        Ok(())
    })?;
    Ok(out)
}

/// `Σ_i Φ_h(u_i)^n` over the primes `u_i` of the h-top of `d`, where `spec`
/// must carry the depth `h`.
pub fn power_sum_monomial(spec: &MonomialSpec, n: u32, d: &Dendrogram) -> Result<f64> {
    let h = spec
        .depth
        .ok_or_else(|| Error::Domain("power-sum monomials need a truncation depth".into()))?;
    if n == 0 {
        return Err(Error::Domain("power must be at least 1".into()));
    }
    let mut acc = 0.0;
    for p in decompose(h, d)?.primes {
        acc += eval_monomial(spec, &p)?.powi(n as i32);
    }
    Ok(acc)
}

/// The lifted test function `φ^{(n)}` of order `m·n`: `φ` on each of the `n`
/// consecutive blocks of `m` sample points, times `1[r_{pm, pm+1} < 2h]`
/// linking consecutive blocks.
#[derive(Debug, Clone)]
pub struct LiftedTest {
    pub inner: MonomialSpec,
    pub n: usize,
}

impl TestFunction for LiftedTest {
    fn eval(&self, r: &MatrixView<'_>) -> f64 {
        let m = self.inner.order;
        let cut = self.inner.depth.map(Dec::double);
        let mut acc = 1.0;
        for p in 0..self.n {
            let (vals, exact) = r.restrict(p * m..(p + 1) * m);
            let block = MatrixView::new(m, &vals, &exact);
            if !within_depth(&block, self.inner.depth) {
                return 0.0;
            }
            acc *= self.inner.phi.eval(&block);
            if p + 1 < self.n {
                if let Some(cut) = cut {
                    if r.get_exact((p + 1) * m - 1, (p + 1) * m) >= cut {
                        return 0.0;
                    }
                }
            }
        }
        acc
    }
}

/// Second route to [`power_sum_monomial`]: evaluates the order-`mn` lifted
/// monomial on the h-top of `d` directly.
pub fn power_sum_lifted(spec: &MonomialSpec, n: u32, d: &Dendrogram) -> Result<f64> {
    let h = spec
        .depth
        .ok_or_else(|| Error::Domain("power-sum monomials need a truncation depth".into()))?;
    if n == 0 {
        return Err(Error::Domain("power must be at least 1".into()));
    }
    let lifted = MonomialSpec {
        order: spec.order * n as usize,
        phi: Arc::new(LiftedTest {
            inner: spec.clone(),
            n: n as usize,
        }),
        depth: None,
    };
    let top = crate::semigroup::truncate(h, d)?;
    eval_monomial(&lifted, &top)
}

/// Monte-Carlo Laplace functional `E[exp(-Φ(U))]` over `samples` draws.
pub fn laplace_estimate<S: Sampler + ?Sized>(sampler: &S, spec: &PolynomialSpec, samples: usize, seed: u64) -> Result<Estimate> {
    if samples < 2 {
        return Err(Error::Domain("Laplace estimation needs at least 2 samples".into()));
    }
    let values = map_samples(sampler, seed, samples, |d| Ok((-eval_polynomial(spec, d)?).exp()))?;
    Ok(Estimate::from_values(&values))
}

/// `Ω↑Φ^{n,φ}(u) = Φ^{n,2∇̄φ}(u) + a·n·Φ^{n,φ}(u) + (b/ū) Σ_{k<l} Φ^{n,φ∘θ_{k,l}}(u)`,
/// the generator of the tree-valued Feller diffusion applied to a monomial.
///
/// `θ_{k,l}` replaces sample point `l` by a copy of sample point `k`.
pub fn generator_apply(spec: &MonomialSpec, d: &Dendrogram, a: f64, b: f64) -> Result<f64> {
    spec.check()?;
    if !spec.phi.has_gradient() {
        return Err(Error::MissingGradient);
    }
    if b < 0.0 {
        return Err(Error::Domain(format!("branching rate b must be nonnegative, got {b}")));
    }
    if d.total_mass().is_zero() {
        return Ok(0.0);
    }
    let n = spec.order;
    let table = AtomTable::new(d);
    check_budget(table.n, n, DEFAULT_BUDGET)?;
    let mut grad = vec![0.0; n_pairs(n)];
    let mut tv = vec![0.0; n_pairs(n)];
    let mut te = vec![Dec::ZERO; n_pairs(n)];
    let (mut growth, mut plain, mut resample) = (0.0, 0.0, 0.0);
    for_each_tuple(&table, n, |_, w, view| {
        if !within_depth(view, spec.depth) {
            return Ok(());
        }
        spec.phi.gradient(view, &mut grad);
        growth += w * finite(grad.iter().sum())?;
        plain += w * finite(spec.phi.eval(view))?;
        for l in 1..n {
            for k in 0..l {
                let sigma = |i: usize| if i == l { k } else { i };
                let mut p = 0;
                for i in 0..n {
                    for j in (i + 1)..n {
                        tv[p] = view.get(sigma(i), sigma(j));
                        te[p] = view.get_exact(sigma(i), sigma(j));
                        p += 1;
                    }
                }
                resample += w * finite(spec.phi.eval(&MatrixView::new(n, &tv, &te)))?;
            }
        }
        Ok(())
    })?;
    Ok(2.0 * growth + a * n as f64 * plain + b / table.total * resample)
}

#[cfg(test)]
mod tests {
    use super::basis::*;
    use super::*;
    use crate::dendrogram::Node;
    use crate::semigroup::concat;

    fn d(s: &str) -> Dec {
        s.parse().unwrap()
    }

    fn two_atoms(r: &str) -> Dendrogram {
        Dendrogram::from_root(Node::internal(d(r), vec![Node::leaf(Dec::ONE), Node::leaf(Dec::ONE)]))
    }

    #[test]
    fn pair_indexing() {
        let m = 4;
        let mut seen = Vec::new();
        for i in 0..m {
            for j in (i + 1)..m {
                seen.push(pair_index(m, i, j));
            }
        }
        assert_eq!(seen, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn measure_of_order_one_is_total_mass() {
        let nu = distance_matrix_measure(1, &two_atoms("3")).unwrap();
        assert_eq!(nu.total_weight(), 2.0);
        assert_eq!(nu.support.len(), 1);
    }

    #[test]
    fn measure_of_order_two_enumerates_pairs() {
        let nu = distance_matrix_measure(2, &two_atoms("3")).unwrap();
        assert_eq!(nu.support.len(), 2);
        assert_eq!(nu.weight(&[Dec::ZERO]), 2.0);
        assert_eq!(nu.weight(&[d("3")]), 2.0);
    }

    #[test]
    fn budget_is_enforced() {
        let err = distance_matrix_measure_budget(3, &two_atoms("1"), 7).unwrap_err();
        assert!(matches!(err, Error::Budget { needed: 8, budget: 7 }));
        let spec = MonomialSpec::total_mass_power(3);
        assert!(eval_monomial_budget(&spec, &two_atoms("1"), 7).is_err());
    }

    #[test]
    fn constant_one_gives_mass_power() {
        let t = two_atoms("3");
        for m in 1..4 {
            assert_eq!(eval_monomial(&MonomialSpec::total_mass_power(m), &t).unwrap(), 2f64.powi(m as i32));
        }
    }

    #[test]
    fn coordinate_monomial_and_truncation() {
        let spec = MonomialSpec::new(2, Power { i: 0, j: 1, k: 1 });
        assert_eq!(eval_monomial(&spec, &two_atoms("3")).unwrap(), 6.0);
        assert_eq!(eval_monomial(&spec.truncated(Dec::ONE), &two_atoms("3")).unwrap(), 0.0);
        // strict: r = 2h is cut off
        let one = MonomialSpec::total_mass_power(2).truncated(Dec::ONE);
        assert_eq!(eval_monomial(&one, &two_atoms("2")).unwrap(), 2.0);
    }

    #[test]
    fn non_finite_values_are_errors() {
        let spec = MonomialSpec::new(2, Power { i: 0, j: 1, k: -1 });
        assert!(matches!(eval_monomial(&spec, &two_atoms("3")), Err(Error::NonFinite(_))));
    }

    #[test]
    fn polynomial_is_linear() {
        let t = two_atoms("3");
        let a = MonomialSpec::total_mass_power(1);
        let b = MonomialSpec::new(2, Power { i: 0, j: 1, k: 1 });
        let p = PolynomialSpec::monomial(a.clone()).plus(2.0, b.clone());
        assert_eq!(eval_polynomial(&p, &t).unwrap(), 2.0 + 12.0);
        assert_eq!(eval_polynomial(&PolynomialSpec::default(), &t).unwrap(), 0.0);
        assert_eq!(eval_polynomial(&PolynomialSpec::monomial(b.clone()), &t).unwrap(), eval_monomial(&b, &t).unwrap());
    }

    #[test]
    fn power_sum_on_two_equal_primes() {
        let p = two_atoms("0.5");
        let u = concat(Dec::ONE, &[p.clone(), p.clone()]).unwrap();
        let spec = MonomialSpec::new(2, ExpDecay { scale: 1.0 }).truncated(Dec::ONE);
        let single = eval_monomial(&spec, &p).unwrap();
        for n in 1..4 {
            let expected = 2.0 * single.powi(n as i32);
            assert!((power_sum_monomial(&spec, n, &u).unwrap() - expected).abs() < 1e-12);
            assert!((power_sum_lifted(&spec, n, &u).unwrap() - expected).abs() < 1e-12);
        }
        assert!((power_sum_monomial(&spec, 1, &u).unwrap() - eval_monomial(&spec, &u).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn laplace_of_constant_sampler() {
        let t = two_atoms("3");
        let spec = PolynomialSpec::monomial(MonomialSpec::total_mass_power(1));
        let e = laplace_estimate(&crate::rng::Constant(t), &spec, 10, 1).unwrap();
        assert_eq!(e.mean, (-2.0f64).exp());
        assert_eq!(e.stderr, 0.0);
        let zero = laplace_estimate(&crate::rng::Constant(two_atoms("1")), &PolynomialSpec::default(), 5, 1).unwrap();
        assert_eq!(zero.mean, 1.0);
        assert!(laplace_estimate(&crate::rng::Constant(Dendrogram::null()), &PolynomialSpec::default(), 1, 1).is_err());
    }

    #[test]
    fn generator_examples() {
        // φ ≡ 1, n = 2, b = 1, ū = 4: (b/2) n(n-1) ū^{n-1} = 4
        let four = Dendrogram::from_root(Node::internal(d("1"), vec![Node::leaf(d("1")), Node::leaf(d("3"))]));
        let one2 = MonomialSpec::total_mass_power(2);
        assert!((generator_apply(&one2, &four, 0.0, 1.0).unwrap() - 4.0).abs() < 1e-12);
        // n = 1, a = 1, ū = 3 -> 3
        let three = Dendrogram::singleton(d("3"));
        let one1 = MonomialSpec::total_mass_power(1);
        assert!((generator_apply(&one1, &three, 1.0, 0.0).unwrap() - 3.0).abs() < 1e-12);
        // φ = r_12: growth term only, 2·ū² = 8
        let r12 = MonomialSpec::new(2, Power { i: 0, j: 1, k: 1 });
        assert!((generator_apply(&r12, &two_atoms("3"), 0.0, 0.0).unwrap() - 8.0).abs() < 1e-12);
        assert_eq!(generator_apply(&r12, &Dendrogram::null(), 1.0, 1.0).unwrap(), 0.0);
        let no_grad = MonomialSpec::new(2, Distinct { i: 0, j: 1 });
        assert_eq!(generator_apply(&no_grad, &two_atoms("3"), 0.0, 1.0), Err(Error::MissingGradient));
    }

    #[test]
    fn resampling_term_for_coordinate_function() {
        // θ_{0,1} makes the pair coincide, so φ(θ r) = r_00 = 0
        let r12 = MonomialSpec::new(2, Power { i: 0, j: 1, k: 1 });
        let g = generator_apply(&r12, &two_atoms("3"), 0.0, 1.0).unwrap();
        assert!((g - 8.0).abs() < 1e-12);
    }

    #[test]
    fn built_in_gradients_match_finite_differences() {
        let probes = vec![
            vec![vec![0.0, 1.3, 2.0], vec![1.3, 0.0, 2.0], vec![2.0, 2.0, 0.0]],
            vec![vec![0.0, 0.7, 0.7], vec![0.7, 0.0, 0.4], vec![0.7, 0.4, 0.0]],
        ];
        let specs = [
            MonomialSpec::new(3, Constant(2.0)),
            MonomialSpec::new(3, Power { i: 0, j: 2, k: 3 }),
            MonomialSpec::new(3, SumEntries),
            MonomialSpec::new(3, ExpDecay { scale: 1.5 }),
            MonomialSpec::new(3, Bump { i: 1, j: 2, center: 1.0, width: 1.5 }),
        ];
        for s in &specs {
            assert!(s.gradient_error(&probes).unwrap() < 1e-6, "{:?}", s.phi);
        }
        assert!(MonomialSpec::new(3, Distinct { i: 0, j: 1 }).gradient_error(&probes).is_err());
    }

    #[test]
    fn monte_carlo_matches_exact() {
        let t = Dendrogram::from_root(Node::internal(
            d("3"),
            vec![Node::leaf(d("0.5")), Node::internal(d("1"), vec![Node::leaf(d("1")), Node::leaf(d("2"))])],
        ));
        let spec = MonomialSpec::new(2, Power { i: 0, j: 1, k: 1 });
        let exact = eval_monomial(&spec, &t).unwrap();
        let est = eval_monomial_mc(&spec, &t, 20_000, 11, 1).unwrap();
        assert!(est.z_against(exact).abs() < 4.0, "{est:?} vs {exact}");
        let again = eval_monomial_mc(&spec, &t, 20_000, 11, 1).unwrap();
        assert_eq!(est, again);
        let par = eval_monomial_mc(&spec, &t, 20_000, 11, 4).unwrap();
        assert_eq!(par, eval_monomial_mc(&spec, &t, 20_000, 11, 4).unwrap());
    }
}
