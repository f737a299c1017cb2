//! Seeded random forests: compound Poisson forests and their Lévy measures,
//! star forests from real Lévy measures, and Galton–Watson genealogies.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, Exp, Poisson};

use crate::dec::Dec;
use crate::dendrogram::{canonicalize, CanonicalEncoding, Dendrogram, Mark, Node};
use crate::error::{Error, Result};
use crate::polynomial::{eval_polynomial, PolynomialSpec};
use crate::rng::{derive_seed, map_samples, stream, Estimate, Rng, Sampler};
use crate::semigroup::{concat, truncate};

fn poisson(rng: &mut Rng, mean: f64) -> Result<u64> {
    if mean == 0.0 {
        return Ok(0);
    }
    let dist = Poisson::new(mean).map_err(|e| Error::Model(format!("Poisson({mean}): {e}")))?;
    Ok(dist.sample(rng) as u64)
}

/// A compound Poisson forest law: `M ~ Poisson(θ)` i.i.d. atoms drawn from
/// the probability weights, concatenated at `depth`.
///
/// Read as a Lévy measure it is `θ·λ` on nonzero `depth`-forests.
#[derive(Clone, Debug, PartialEq)]
pub struct LevyModel {
    pub theta: f64,
    pub atoms: Vec<(Dec, Dendrogram)>,
    pub depth: Dec,
}

impl LevyModel {
    /// Validates and canonicalizes the atoms.
    pub fn new(theta: f64, atoms: Vec<(Dec, Dendrogram)>, depth: Dec) -> Result<Self> {
        if !theta.is_finite() || theta < 0.0 {
            return Err(Error::Model(format!("intensity must be finite and nonnegative, got {theta}")));
        }
        if !depth.is_positive() {
            return Err(Error::Model(format!("depth must be positive, got {depth}")));
        }
        if atoms.is_empty() {
            return Err(Error::Model("at least one atom is required".into()));
        }
        let mut total = Dec::ZERO;
        let mut canon = Vec::with_capacity(atoms.len());
        for (i, (w, d)) in atoms.into_iter().enumerate() {
            if !w.is_positive() {
                return Err(Error::Model(format!("atom {i}: weight {w} is not positive")));
            }
            let d = canonicalize(&d)?;
            if d.is_null() {
                return Err(Error::Model(format!("atom {i} is the null space")));
            }
            if d.diameter() > depth.double() {
                return Err(Error::Model(format!(
                    "atom {i}: diameter {} exceeds 2·depth = {}",
                    d.diameter(),
                    depth.double()
                )));
            }
            total += w;
            canon.push((w, d));
        }
        if (total - Dec::ONE).abs() > Dec::from_units(1) {
            return Err(Error::Model(format!("weights sum to {total}, not 1")));
        }
        Ok(LevyModel {
            theta,
            atoms: canon,
            depth,
        })
    }

    /// One atom drawn exactly in proportion to the decimal weights.
    fn draw_atom(&self, rng: &mut Rng) -> &Dendrogram {
        let total: i128 = self.atoms.iter().map(|a| a.0.units()).sum();
        let mut x = rng.random_range(0..total);
        for (w, d) in &self.atoms {
            if x < w.units() {
                return d;
            }
            x -= w.units();
        }
        &self.atoms[self.atoms.len() - 1].1
    }

    /// A sample together with its Poisson count `M`.
    pub fn sample_counted(&self, rng: &mut Rng) -> Result<(Dendrogram, u64)> {
        let m = poisson(rng, self.theta)?;
        let parts: Vec<Dendrogram> = (0..m).map(|_| self.draw_atom(rng).clone()).collect();
        Ok((concat(self.depth, &parts)?, m))
    }
}

impl Sampler for LevyModel {
    fn sample(&self, seed: u64, index: u64) -> Result<Dendrogram> {
        Ok(self.sample_counted(&mut stream(seed, &format!("cpf/{index}")))?.0)
    }
}

/// A single CPF draw.
pub fn sample_cpf(model: &LevyModel, seed: u64) -> Result<Dendrogram> {
    model.sample(seed, 0)
}

/// The Poisson cluster representation: a Poisson number of forests drawn
/// from the depth-`h` Lévy measure, concatenated at `h`.
pub fn sample_poisson_cluster(levy: &LevyModel, seed: u64) -> Result<Dendrogram> {
    sample_cpf(levy, seed)
}

fn check_depth(model: &LevyModel, h: Dec) -> Result<()> {
    if !h.is_positive() || h > model.depth {
        return Err(Error::Domain(format!("depth {h} must lie in (0, {}]", model.depth)));
    }
    Ok(())
}

/// `-log E[exp(-Φ_h(P))]` in closed form: `c + θ Σ_k w_k (1 - exp(-(Φ_h(U_k) - c)))`,
/// where `c` is the constant term of `spec`.
pub fn cpf_log_laplace_exact(model: &LevyModel, spec: &PolynomialSpec, h: Dec) -> Result<f64> {
    check_depth(model, h)?;
    let spec = spec.truncated(h);
    let mut acc = 0.0;
    for (w, d) in &model.atoms {
        let phi = eval_polynomial(&spec, d)? - spec.constant;
        acc += w.to_f64() * (1.0 - (-phi).exp());
    }
    Ok(spec.constant + model.theta * acc)
}

/// The Lévy measure at depth `h ≤ t`: every atom truncated at `h`,
/// isomorphic results merged with summed weights.
pub fn cpf_levy_at_depth(model: &LevyModel, h: Dec) -> Result<LevyModel> {
    check_depth(model, h)?;
    let mut merged: BTreeMap<CanonicalEncoding, (Dec, Dendrogram)> = BTreeMap::new();
    for (w, d) in &model.atoms {
        let top = truncate(h, d)?;
        let entry = merged.entry(top.encoding()?).or_insert((Dec::ZERO, top));
        entry.0 += *w;
    }
    Ok(LevyModel {
        theta: model.theta,
        atoms: merged.into_values().collect(),
        depth: h,
    })
}

/// The i.i.d. factor of an `n`-fold decomposition: intensity `θ/n`.
pub fn nth_root_cpf(model: &LevyModel, n: u32) -> Result<LevyModel> {
    if n == 0 {
        return Err(Error::Domain("root order must be positive".into()));
    }
    Ok(LevyModel {
        theta: model.theta / n as f64,
        ..model.clone()
    })
}

/// `n · mean(1 - exp(-Φ_h(V)))` over `samples` draws `V` of the `n`-th root.
/// The constant term of `spec` is ignored.
pub fn estimate_levy_functional(
    model: &LevyModel,
    n: u32,
    spec: &PolynomialSpec,
    h: Dec,
    samples: usize,
    seed: u64,
) -> Result<Estimate> {
    check_depth(model, h)?;
    if samples < 2 {
        return Err(Error::Domain("need at least 2 samples".into()));
    }
    let root = nth_root_cpf(model, n)?;
    let mut spec = spec.truncated(h);
    spec.constant = 0.0;
    let values = map_samples(&root, seed, samples, |d| Ok(1.0 - (-eval_polynomial(&spec, d)?).exp()))?;
    Ok(Estimate::from_values(&values).scale(n as f64))
}

/// `∫ (1 - e^{-Φ_h}) dλ_h` for a CPF model; the limit of
/// [`estimate_levy_functional`] as `n` grows.
pub fn levy_functional_exact(model: &LevyModel, spec: &PolynomialSpec, h: Dec) -> Result<f64> {
    let mut spec = spec.clone();
    spec.constant = 0.0;
    cpf_log_laplace_exact(model, &spec, h)
}

/// A Lévy measure on `(0, ∞)` with finite activity.
#[derive(Clone)]
pub enum RealLevySpec {
    /// `(location, rate)` pairs.
    Atoms(Vec<(f64, f64)>),
    /// A density on `[threshold, upper]`, bounded there by `bound`. Without a
    /// threshold the small jumps have infinite activity and sampling fails.
    Density {
        density: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        threshold: Option<f64>,
        upper: f64,
        bound: f64,
    },
}

impl fmt::Debug for RealLevySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RealLevySpec::Atoms(a) => f.debug_tuple("Atoms").field(a).finish(),
            RealLevySpec::Density {
                threshold,
                upper,
                bound,
                ..
            } => f
                .debug_struct("Density")
                .field("threshold", threshold)
                .field("upper", upper)
                .field("bound", bound)
                .finish_non_exhaustive(),
        }
    }
}

impl RealLevySpec {
    fn check(&self) -> Result<()> {
        match self {
            RealLevySpec::Atoms(atoms) => {
                for &(x, rate) in atoms {
                    if !(x.is_finite() && x > 0.0 && rate.is_finite() && rate >= 0.0) {
                        return Err(Error::Model(format!("invalid atom (location {x}, rate {rate})")));
                    }
                }
                Ok(())
            }
            RealLevySpec::Density {
                threshold,
                upper,
                bound,
                ..
            } => {
                let lo = threshold.ok_or(Error::InfiniteActivity)?;
                if !(lo > 0.0 && upper.is_finite() && *upper > lo && bound.is_finite() && *bound >= 0.0) {
                    return Err(Error::Model(format!("invalid density support [{lo}, {upper}] or bound {bound}")));
                }
                Ok(())
            }
        }
    }

    /// `∫ (1 - e^{-s x}) ν(dx)`; densities use composite Simpson quadrature.
    pub fn log_laplace(&self, s: f64) -> Result<f64> {
        self.check()?;
        Ok(match self {
            RealLevySpec::Atoms(atoms) => atoms.iter().map(|&(x, r)| r * (1.0 - (-s * x).exp())).sum(),
            RealLevySpec::Density {
                density,
                threshold,
                upper,
                ..
            } => {
                let lo = threshold.unwrap_or_default();
                let steps = 20_000;
                let dx = (upper - lo) / steps as f64;
                let g = |x: f64| (1.0 - (-s * x).exp()) * density(x);
                let mut acc = g(lo) + g(*upper);
                for i in 1..steps {
                    let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                    acc += w * g(lo + i as f64 * dx);
                }
                acc * dx / 3.0
            }
        })
    }

    /// Points of the Poisson point process with intensity `ν`.
    fn jumps(&self, rng: &mut Rng) -> Result<Vec<f64>> {
        self.check()?;
        let mut out = Vec::new();
        match self {
            RealLevySpec::Atoms(atoms) => {
                for &(x, rate) in atoms {
                    let k = poisson(rng, rate)?;
                    out.extend(std::iter::repeat_n(x, k as usize));
                }
            }
            RealLevySpec::Density {
                density,
                threshold,
                upper,
                bound,
            } => {
                let lo = threshold.unwrap_or_default();
                let k = poisson(rng, bound * (upper - lo))?;
                for _ in 0..k {
                    let x = rng.random_range(lo..*upper);
                    let f = density(x);
                    if !(f.is_finite() && f >= 0.0 && f <= bound * (1.0 + 1e-9)) {
                        return Err(Error::Model(format!("density {f} at {x} is outside [0, {bound}]")));
                    }
                    if rng.random::<f64>() * bound < f {
                        out.push(x);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// The `h`-forest of singletons whose masses are the points of a Poisson
/// point process with intensity `ν`, at mutual distance `2h`.
#[derive(Clone, Debug)]
pub struct StarForest {
    pub depth: Dec,
    pub nu: RealLevySpec,
}

impl Sampler for StarForest {
    fn sample(&self, seed: u64, index: u64) -> Result<Dendrogram> {
        let jumps = self.nu.jumps(&mut stream(seed, &format!("star/{index}")))?;
        let leaves = jumps
            .into_iter()
            .map(|x| Dec::from_f64(x).map(Dendrogram::singleton))
            .collect::<Result<Vec<_>>>()?;
        concat(self.depth, &leaves)
    }
}

pub fn star_forest_from_levy(h: Dec, nu: &RealLevySpec, seed: u64) -> Result<Dendrogram> {
    StarForest {
        depth: h,
        nu: nu.clone(),
    }
    .sample(seed, 0)
}

/// Independent draws of two samplers concatenated at `depth`.
pub struct Convolution<'a, A: ?Sized, B: ?Sized> {
    pub first: &'a A,
    pub second: &'a B,
    pub depth: Dec,
}

impl<A: Sampler + ?Sized, B: Sampler + ?Sized> Sampler for Convolution<'_, A, B> {
    fn sample(&self, seed: u64, index: u64) -> Result<Dendrogram> {
        let a = self.first.sample(derive_seed(seed, "conv/first"), index)?;
        let b = self.second.sample(derive_seed(seed, "conv/second"), index)?;
        concat(self.depth, &[a, b])
    }
}

pub fn branching_convolution_sample<A, B>(first: &A, second: &B, h: Dec, seed: u64) -> Result<Dendrogram>
where
    A: Sampler + ?Sized,
    B: Sampler + ?Sized,
{
    Convolution { first, second, depth: h }.sample(seed, 0)
}

/// Critical binary branching in continuous time: each individual lives an
/// `Exp(rate)` time, then dies or splits in two with probability 1/2 each.
/// Every individual carries mass `mass`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GwProcess {
    pub rate: f64,
    pub mass: Dec,
}

/// Population cap across all families of one run.
pub const GW_POPULATION_LIMIT: usize = 10_000_000;

#[derive(Clone, Debug)]
struct Individual {
    end: f64,
    children: Option<(usize, usize)>,
}

/// Every individual descended from one founder born at time 0.
#[derive(Clone, Debug)]
struct Family {
    people: Vec<Individual>,
}

impl Family {
    fn simulate(rate: f64, horizon: f64, rng: &mut Rng, budget: &mut usize) -> Result<Family> {
        let life = if rate > 0.0 {
            Some(Exp::new(rate).map_err(|e| Error::Model(e.to_string()))?)
        } else {
            None
        };
        let mut people = Vec::new();
        let mut queue = vec![0.0f64];
        let mut head = 0;
        while head < queue.len() {
            if *budget == 0 {
                return Err(Error::Model(format!("population exceeded {GW_POPULATION_LIMIT} individuals")));
            }
            *budget -= 1;
            let birth = queue[head];
            head += 1;
            let end = match &life {
                Some(e) => birth + e.sample(rng),
                None => f64::INFINITY,
            };
            let mut ind = Individual { end, children: None };
            if end <= horizon && rng.random_bool(0.5) {
                let first = queue.len();
                queue.push(end);
                queue.push(end);
                ind.children = Some((first, first + 1));
            }
            people.push(ind);
        }
        Ok(Family { people })
    }

    /// The founder's descendants alive at `s` as a subtree, or `None` when
    /// the family is extinct by then.
    fn at(&self, idx: usize, s: f64, mass: Dec, mark: Option<&Mark>) -> Result<Option<Node>> {
        let ind = &self.people[idx];
        if ind.end > s {
            return Ok(Some(Node::Leaf {
                mass,
                mark: mark.cloned(),
            }));
        }
        let Some((a, b)) = ind.children else {
            return Ok(None);
        };
        let kids: Vec<Node> = [a, b]
            .into_iter()
            .map(|c| self.at(c, s, mass, mark))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        Ok(match kids.len() {
            0 => None,
            1 => kids.into_iter().next(),
            _ => Some(Node::internal(Dec::from_f64(2.0 * (s - ind.end))?, kids)),
        })
    }
}

/// An initial dendrogram whose atoms have been replaced by simulated families.
#[derive(Clone, Debug)]
enum Seedling {
    Atom { mark: Option<Mark>, families: Vec<Family> },
    Node { height: Dec, children: Vec<Seedling> },
}

impl Seedling {
    fn plant(node: &Node, process: &GwProcess, horizon: f64, seed: u64, label: &str, next: &mut usize, budget: &mut usize) -> Result<Seedling> {
        match node {
            Node::Leaf { mass, mark } => {
                let unit = process.mass.units();
                if mass.units() % unit != 0 {
                    return Err(Error::Model(format!("atom mass {mass} is not a multiple of {}", process.mass)));
                }
                let k = (mass.units() / unit) as usize;
                let mut families = Vec::with_capacity(k);
                for _ in 0..k {
                    let mut rng = stream(seed, &format!("{label}/{next}"));
                    *next += 1;
                    families.push(Family::simulate(process.rate, horizon, &mut rng, budget)?);
                }
                Ok(Seedling::Atom {
                    mark: mark.clone(),
                    families,
                })
            }
            Node::Internal { height, children } => Ok(Seedling::Node {
                height: *height,
                children: children
                    .iter()
                    .map(|c| Seedling::plant(c, process, horizon, seed, label, next, budget))
                    .collect::<Result<_>>()?,
            }),
        }
    }

    fn at(&self, s: f64, two_s: Dec, mass: Dec) -> Result<Node> {
        Ok(match self {
            Seedling::Atom { mark, families } => {
                let kids = families
                    .iter()
                    .map(|f| f.at(0, s, mass, mark.as_ref()))
                    .collect::<Result<Vec<_>>>()?;
                Node::internal(two_s, kids.into_iter().flatten().collect())
            }
            Seedling::Node { height, children } => Node::internal(
                *height + two_s,
                children.iter().map(|c| c.at(s, two_s, mass)).collect::<Result<_>>()?,
            ),
        })
    }
}

impl GwProcess {
    pub fn new(rate: f64, mass: Dec) -> Result<Self> {
        if !rate.is_finite() || rate < 0.0 {
            return Err(Error::Model(format!("branching rate must be finite and nonnegative, got {rate}")));
        }
        if !mass.is_positive() {
            return Err(Error::Model(format!("mass per individual must be positive, got {mass}")));
        }
        Ok(GwProcess { rate, mass })
    }

    fn check_times(times: &[f64]) -> Result<f64> {
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::Domain("observation times must be finite and nonnegative".into()));
        }
        Ok(times.iter().copied().fold(0.0, f64::max))
    }

    fn plant(&self, initial: &Dendrogram, horizon: f64, seed: u64, label: &str) -> Result<Option<Seedling>> {
        let initial = canonicalize(initial)?;
        let mut next = 0;
        let mut budget = GW_POPULATION_LIMIT;
        initial
            .root()
            .map(|r| Seedling::plant(r, self, horizon, seed, label, &mut next, &mut budget))
            .transpose()
    }

    fn observe(&self, seedling: Option<&Seedling>, s: f64) -> Result<Dendrogram> {
        let root = seedling.map(|sd| sd.at(s, Dec::from_f64(2.0 * s)?, self.mass)).transpose()?;
        canonicalize(&Dendrogram::from_option(root))
    }

    /// The genealogy at each of `times`, started from `initial` whose atom
    /// masses must be multiples of `mass`. Families are simulated from
    /// streams `<label>/<k>`, one per initial individual.
    pub fn evolve(&self, initial: &Dendrogram, times: &[f64], seed: u64, label: &str) -> Result<Vec<Dendrogram>> {
        let horizon = Self::check_times(times)?;
        let seedling = self.plant(initial, horizon, seed, label)?;
        times.iter().map(|&s| self.observe(seedling.as_ref(), s)).collect()
    }

    /// Jointly realized runs from `u` and from `u ⊔^h w`: the `u`-part of the
    /// second run reuses the families of the first. Returns `(U_s, V_s)` for
    /// every `s` in `times`.
    pub fn coupled(
        &self,
        u: &Dendrogram,
        w: &Dendrogram,
        h: Dec,
        times: &[f64],
        seed: u64,
        label: &str,
    ) -> Result<Vec<(Dendrogram, Dendrogram)>> {
        let horizon = Self::check_times(times)?;
        // validates the depth and the diameters
        concat(h, &[u.clone(), w.clone()])?;
        let su = self.plant(u, horizon, seed, &format!("{label}/u"))?;
        let sw = self.plant(w, horizon, seed, &format!("{label}/w"))?;
        let joint = Seedling::Node {
            height: h.double(),
            children: su.iter().chain(sw.iter()).cloned().collect(),
        };
        times
            .iter()
            .map(|&s| Ok((self.observe(su.as_ref(), s)?, self.observe(Some(&joint), s)?)))
            .collect()
    }
}

/// GW run from a fixed initial state, observed at `time`; sample `i` uses
/// family streams `gw/<i>/<k>`.
#[derive(Clone, Debug)]
pub struct GwSampler {
    pub process: GwProcess,
    pub initial: Dendrogram,
    pub time: f64,
}

impl Sampler for GwSampler {
    fn sample(&self, seed: u64, index: u64) -> Result<Dendrogram> {
        let mut out = self
            .process
            .evolve(&self.initial, &[self.time], seed, &format!("gw/{index}"))?;
        Ok(out.pop().unwrap_or_default())
    }
}

/// `initial` individuals at one site, evolved for `horizon`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GwConfig {
    pub initial: u64,
    pub rate: f64,
    pub horizon: f64,
    pub mass: Dec,
}

impl GwConfig {
    pub fn initial_state(&self) -> Result<Dendrogram> {
        if self.initial == 0 {
            return Err(Error::Model("initial population must be positive".into()));
        }
        Ok(Dendrogram::singleton(self.mass.mul_int(self.initial as i64)))
    }

    pub fn sampler(&self) -> Result<GwSampler> {
        Ok(GwSampler {
            process: GwProcess::new(self.rate, self.mass)?,
            initial: self.initial_state()?,
            time: self.horizon,
        })
    }
}

pub fn gw_genealogy(config: &GwConfig, seed: u64) -> Result<Dendrogram> {
    config.sampler()?.sample(seed, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polynomial::{basis, MonomialSpec};
    use crate::semigroup::{count_balls, is_subforest, BallCount};

    fn d(s: &str) -> Dec {
        s.parse().unwrap()
    }

    fn single() -> Dendrogram {
        Dendrogram::singleton(Dec::ONE)
    }

    fn pair(r: &str) -> Dendrogram {
        Dendrogram::from_root(Node::internal(d(r), vec![Node::leaf(Dec::ONE), Node::leaf(Dec::ONE)]))
    }

    fn mass_spec(scale: f64) -> PolynomialSpec {
        PolynomialSpec::default().plus(scale, MonomialSpec::total_mass_power(1))
    }

    #[test]
    fn model_validation() {
        assert!(LevyModel::new(1.0, vec![(Dec::ONE, single())], Dec::ONE).is_ok());
        assert!(LevyModel::new(-1.0, vec![(Dec::ONE, single())], Dec::ONE).is_err());
        assert!(LevyModel::new(1.0, vec![(d("0.5"), single())], Dec::ONE).is_err());
        assert!(LevyModel::new(1.0, vec![(Dec::ONE, Dendrogram::null())], Dec::ONE).is_err());
        assert!(LevyModel::new(1.0, vec![(Dec::ONE, pair("3"))], Dec::ONE).is_err());
        assert!(LevyModel::new(1.0, vec![(Dec::ONE, pair("2"))], Dec::ONE).is_ok());
    }

    #[test]
    fn zero_intensity_is_null() {
        let m = LevyModel::new(0.0, vec![(Dec::ONE, single())], Dec::ONE).unwrap();
        for i in 0..20 {
            assert!(m.sample(1, i).unwrap().is_null());
        }
    }

    #[test]
    fn samples_count_their_atoms() {
        let m = LevyModel::new(3.0, vec![(d("0.5"), single()), (d("0.5"), pair("1"))], Dec::ONE).unwrap();
        for i in 0..200 {
            let (s, k) = m.sample_counted(&mut stream(9, &format!("t/{i}"))).unwrap();
            assert!(s.diameter() <= d("2"));
            assert_eq!(count_balls(Dec::ONE, &s).unwrap(), BallCount::Finite(k));
        }
        assert_eq!(sample_cpf(&m, 4).unwrap(), sample_cpf(&m, 4).unwrap());
        assert_eq!(sample_poisson_cluster(&m, 4).unwrap(), sample_cpf(&m, 4).unwrap());
    }

    #[test]
    fn poisson_total_mass_mean() {
        let m = LevyModel::new(2.0, vec![(Dec::ONE, single())], Dec::ONE).unwrap();
        let v = map_samples(&m, 11, 20_000, |s| Ok(s.total_mass().to_f64())).unwrap();
        let e = Estimate::from_values(&v);
        assert!(e.z_against(2.0).abs() < 3.0, "{e:?}");
    }

    #[test]
    fn closed_form_laplace() {
        let m = LevyModel::new(2.0, vec![(Dec::ONE, single())], Dec::ONE).unwrap();
        let v = cpf_log_laplace_exact(&m, &mass_spec(std::f64::consts::LN_2), Dec::ONE).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
        assert_eq!(cpf_log_laplace_exact(&m, &PolynomialSpec::default(), Dec::ONE).unwrap(), 0.0);
        assert!(cpf_log_laplace_exact(&m, &mass_spec(1.0), d("2")).is_err());
    }

    #[test]
    fn levy_at_depth() {
        let m = LevyModel::new(1.0, vec![(Dec::ONE, pair("5"))], d("3")).unwrap();
        let l = cpf_levy_at_depth(&m, Dec::ONE).unwrap();
        assert_eq!(l.atoms, vec![(Dec::ONE, pair("2"))]);
        // two atoms collapsing to the same top
        let m = LevyModel::new(1.0, vec![(d("0.25"), pair("5")), (d("0.75"), pair("4"))], d("3")).unwrap();
        let l = cpf_levy_at_depth(&m, Dec::ONE).unwrap();
        assert_eq!(l.atoms, vec![(Dec::ONE, pair("2"))]);
        let full = cpf_levy_at_depth(&m, d("3")).unwrap();
        assert_eq!(full.atoms.len(), 2);
        let nested = cpf_levy_at_depth(&cpf_levy_at_depth(&m, d("2")).unwrap(), Dec::ONE).unwrap();
        assert_eq!(nested, l);
    }

    #[test]
    fn roots() {
        let m = LevyModel::new(2.0, vec![(Dec::ONE, single())], Dec::ONE).unwrap();
        assert_eq!(nth_root_cpf(&m, 1).unwrap(), m);
        assert_eq!(nth_root_cpf(&m, 2).unwrap().theta, 1.0);
        assert!(nth_root_cpf(&m, 0).is_err());
    }

    #[test]
    fn levy_functional() {
        let m = LevyModel::new(2.0, vec![(Dec::ONE, single())], Dec::ONE).unwrap();
        let zero = estimate_levy_functional(&m, 4, &PolynomialSpec::default(), Dec::ONE, 10, 1).unwrap();
        assert_eq!(zero.mean, 0.0);
        let exact = levy_functional_exact(&m, &mass_spec(1.0), Dec::ONE).unwrap();
        assert!((exact - 2.0 * (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        let est = estimate_levy_functional(&m, 64, &mass_spec(1.0), Dec::ONE, 50_000, 3).unwrap();
        assert!((est.mean - exact).abs() <= (3.0 * est.stderr).max(exact * 2.0 / 64.0), "{est:?}");
    }

    #[test]
    fn star_forests() {
        let h = Dec::ONE;
        assert!(star_forest_from_levy(h, &RealLevySpec::Atoms(vec![]), 1).unwrap().is_null());
        let nu = RealLevySpec::Atoms(vec![(1.0, 2.0)]);
        for i in 0..50 {
            let s = StarForest { depth: h, nu: nu.clone() }.sample(5, i).unwrap();
            let m = s.total_mass();
            assert_eq!(m, Dec::from_int(s.n_atoms() as i64));
        }
        let dens = RealLevySpec::Density {
            density: Arc::new(|x: f64| 1.0 / x),
            threshold: None,
            upper: 1.0,
            bound: 1.0,
        };
        assert_eq!(star_forest_from_levy(h, &dens, 1), Err(Error::InfiniteActivity));
        let dens = RealLevySpec::Density {
            density: Arc::new(|_| 2.0),
            threshold: Some(0.5),
            upper: 1.5,
            bound: 2.0,
        };
        // ∫_{0.5}^{1.5} 2(1 - e^{-x}) dx
        let exact = 2.0 * (1.0 + (-1.5f64).exp() - (-0.5f64).exp());
        assert!((dens.log_laplace(1.0).unwrap() - exact).abs() < 1e-12);
        assert!(star_forest_from_levy(h, &dens, 2).unwrap().diameter() <= d("2"));
    }

    #[test]
    fn convolution_of_constants_is_concat() {
        use crate::rng::Constant;
        let a = Constant(single());
        let b = Constant(pair("1"));
        let c = branching_convolution_sample(&a, &b, d("2"), 1).unwrap();
        assert_eq!(c, concat(d("2"), &[single(), pair("1")]).unwrap());
        let n = Constant(Dendrogram::null());
        assert_eq!(branching_convolution_sample(&n, &b, d("2"), 1).unwrap(), pair("1"));
    }

    #[test]
    fn gw_without_events() {
        let cfg = GwConfig {
            initial: 3,
            rate: 0.0,
            horizon: 1.5,
            mass: d("0.5"),
        };
        let g = gw_genealogy(&cfg, 1).unwrap();
        let expected = Dendrogram::from_root(Node::internal(d("3"), vec![Node::leaf(d("0.5")); 3]));
        assert_eq!(g, canonicalize(&expected).unwrap());
    }

    #[test]
    fn gw_structure() {
        let cfg = GwConfig {
            initial: 5,
            rate: 2.0,
            horizon: 1.0,
            mass: d("0.1"),
        };
        let s = cfg.sampler().unwrap();
        for i in 0..100 {
            let g = s.sample(3, i).unwrap();
            assert!(g.diameter() <= d("2"));
            for m in g.masses() {
                assert_eq!(m.units() % d("0.1").units(), 0);
            }
            assert_eq!(g, s.sample(3, i).unwrap());
        }
        assert!(Family::simulate(1.0, 1.0, &mut stream(1, "x"), &mut 0).is_err());
    }

    #[test]
    fn gw_roots_at_distance_2t() {
        // two initial atoms at distance 2: descendants of different atoms sit at 2 + 2t
        let p = GwProcess::new(3.0, Dec::ONE).unwrap();
        let init = pair("2");
        for i in 0..50 {
            let g = p.evolve(&init, &[0.5], 7, &format!("r/{i}")).unwrap().pop().unwrap();
            assert!(g.diameter() <= d("3"));
            let (r, _) = crate::metric::to_distance_matrix(&g);
            let n = r.len();
            for a in 0..n {
                for b in 0..n {
                    assert!(r[a][b] <= d("3"));
                }
            }
        }
        assert!(p.evolve(&Dendrogram::singleton(d("1.5")), &[1.0], 1, "x").is_err());
    }

    #[test]
    fn gw_mean_mass_is_conserved() {
        let cfg = GwConfig {
            initial: 10,
            rate: 1.0,
            horizon: 1.0,
            mass: d("0.1"),
        };
        let v = map_samples(&cfg.sampler().unwrap(), 2, 5_000, |g| Ok(g.total_mass().to_f64())).unwrap();
        let e = Estimate::from_values(&v);
        assert!(e.z_against(1.0).abs() < 3.5, "{e:?}");
    }

    #[test]
    fn coupled_runs_are_ordered() {
        let p = GwProcess::new(2.0, d("0.5")).unwrap();
        let u = pair("1");
        let w = Dendrogram::singleton(d("1.5"));
        let times: Vec<f64> = (0..5).map(|k| 0.2 * k as f64).collect();
        for i in 0..20 {
            let runs = p.coupled(&u, &w, Dec::ONE, &times, 5, &format!("c/{i}")).unwrap();
            for (s, (us, vs)) in times.iter().zip(&runs) {
                let depth = Dec::ONE + Dec::from_f64(*s).unwrap();
                assert!(is_subforest(depth, us, vs).unwrap());
            }
            let alone = p.evolve(&u, &times, 5, &format!("c/{i}/u")).unwrap();
            assert_eq!(alone, runs.iter().map(|r| r.0.clone()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn atom_laplace_spec_uses_exact_truncation() {
        // Below with threshold keeps working through the Lévy helpers
        let spec = PolynomialSpec::default().plus(1.0, MonomialSpec::new(2, basis::SumEntries));
        let m = LevyModel::new(1.0, vec![(Dec::ONE, pair("2"))], Dec::ONE).unwrap();
        // r = 2 = 2h is cut by the strict indicator, so only the diagonal counts
        assert_eq!(cpf_log_laplace_exact(&m, &spec, Dec::ONE).unwrap(), 0.0);
    }
}
