//! Statistical experiments against closed-form oracles.

use umspace::forest::{
    cpf_levy_at_depth, cpf_log_laplace_exact, estimate_levy_functional, levy_functional_exact, nth_root_cpf,
    Convolution, GwProcess, GwSampler, LevyModel, RealLevySpec, StarForest,
};
use umspace::polynomial::{basis, eval_polynomial, generator_apply, MonomialSpec, PolynomialSpec};
use umspace::rng::{derive_seed, map_samples, Estimate, Sampler};
use umspace::semigroup::{concat, is_subforest};
use umspace::{Dec, Dendrogram, Node, Result};

use crate::report::{ExperimentReport, ReportRow};

pub const DEFAULT_SIGMA: f64 = 3.0;

pub(crate) fn dec(s: &str) -> Dec {
    s.parse().expect("literal decimal")
}

fn leaf(m: &str) -> Node {
    Node::leaf(dec(m))
}

/// A polynomial evaluated at a fixed truncation depth.
#[derive(Clone, Debug)]
pub struct NamedSpec {
    pub name: &'static str,
    pub spec: PolynomialSpec,
    /// `None` evaluates untruncated.
    pub depth: Option<Dec>,
}

impl NamedSpec {
    fn new(name: &'static str, spec: PolynomialSpec, depth: Option<&str>) -> Self {
        let depth = depth.map(dec);
        let spec = match depth {
            Some(h) => spec.truncated(h),
            None => spec,
        };
        NamedSpec { name, spec, depth }
    }

    pub fn eval(&self, d: &Dendrogram) -> Result<f64> {
        eval_polynomial(&self.spec, d)
    }
}

/// Two-atom CPF at depth 2: a pair at distance 3 and a three-atom tree of
/// diameter 4.
pub fn reference_model(theta: f64) -> Result<LevyModel> {
    let a = Dendrogram::from_root(Node::internal(dec("3"), vec![leaf("1"), leaf("0.5")]));
    let b = Dendrogram::from_root(Node::internal(
        dec("4"),
        vec![leaf("0.75"), Node::internal(dec("1"), vec![leaf("0.5"), leaf("0.25")])],
    ));
    LevyModel::new(theta, vec![(dec("0.4"), a), (dec("0.6"), b)], dec("2"))
}

/// Probe specs for the Laplace experiments at depths 2, 1.5 and 1.
pub fn reference_specs() -> Vec<NamedSpec> {
    vec![
        NamedSpec::new(
            "0.7*mass@h=2",
            PolynomialSpec::default().plus(0.7, MonomialSpec::total_mass_power(1)),
            Some("2"),
        ),
        NamedSpec::new(
            "pair-decay@h=1.5",
            PolynomialSpec::monomial(MonomialSpec::new(2, basis::ExpDecay { scale: 2.0 })),
            Some("1.5"),
        ),
        NamedSpec::new(
            "0.5*pair-sum+0.3*mass^3@h=1",
            PolynomialSpec::default()
                .plus(0.5, MonomialSpec::new(2, basis::SumEntries))
                .plus(0.3, MonomialSpec::total_mass_power(3)),
            Some("1"),
        ),
    ]
}

/// Laplace estimates `E[exp(-Φ)]` of every spec from the same draws.
pub fn laplace_many<S: Sampler + ?Sized>(sampler: &S, specs: &[NamedSpec], samples: usize, seed: u64) -> Result<Vec<Estimate>> {
    let rows = map_samples(sampler, seed, samples, |d| {
        specs.iter().map(|s| Ok((-s.eval(d)?).exp())).collect::<Result<Vec<f64>>>()
    })?;
    Ok((0..specs.len())
        .map(|k| Estimate::from_values(&rows.iter().map(|r| r[k]).collect::<Vec<_>>()))
        .collect())
}

/// Monte-Carlo `-log L(Φ_h)` of CPF samples against the closed form, plus
/// exact depth consistency of the Lévy measures.
pub fn verify_lk(theta: f64, samples: usize, seed: u64, sigma: f64) -> Result<ExperimentReport> {
    let model = reference_model(theta)?;
    let specs = reference_specs();
    let mut report = ExperimentReport::new("verify-lk", seed)
        .with("theta", theta)
        .with("samples", samples)
        .with("sigma", sigma)
        .with("depth", model.depth);
    let est = laplace_many(&model, &specs, samples, seed)?;
    for (s, e) in specs.iter().zip(est) {
        let h = s.depth.unwrap_or(model.depth);
        let exact = cpf_log_laplace_exact(&model, &s.spec, h)?;
        report.push(ReportRow::statistical(&format!("-log L[{}]", s.name), e.neg_log(), exact, sigma));
        // the same value through the depth-h Lévy measure
        let via_h = cpf_log_laplace_exact(&cpf_levy_at_depth(&model, h)?, &s.spec, h)?;
        report.push(ReportRow::tolerance(
            &format!("lambda_h closed form [{}]", s.name),
            Estimate::exact(via_h),
            exact,
            1e-12,
        ));
    }
    let depths: Vec<Dec> = ["2", "1.75", "1.5", "1", "0.5", "0.25"].iter().map(|s| dec(s)).collect();
    let (mut failures, mut checked) = (0, 0);
    for (i, &h) in depths.iter().enumerate() {
        for &lo in &depths[i + 1..] {
            checked += 1;
            if cpf_levy_at_depth(&cpf_levy_at_depth(&model, h)?, lo)? != cpf_levy_at_depth(&model, lo)? {
                failures += 1;
            }
        }
    }
    report.push(ReportRow::exact("lambda_h pushforward consistency", failures, checked));
    Ok(report)
}

/// `n · E[1 - e^{-Φ_h}]` under the `n`-th root against `∫(1 - e^{-Φ_h}) dλ_h`,
/// accepted within `max(σ·stderr, (2/n)·exact)`.
pub fn verify_excursion(theta: f64, n: u32, samples: usize, seed: u64, sigma: f64) -> Result<ExperimentReport> {
    let model = reference_model(theta)?;
    let mut report = ExperimentReport::new("verify-excursion", seed)
        .with("theta", theta)
        .with("n_roots", n)
        .with("samples", samples)
        .with("sigma", sigma);
    for s in reference_specs() {
        let h = s.depth.unwrap_or(model.depth);
        let exact = levy_functional_exact(&model, &s.spec, h)?;
        let est = estimate_levy_functional(&model, n, &s.spec, h, samples, derive_seed(seed, s.name))?;
        let tol = (sigma * est.stderr).max(2.0 / n as f64 * exact.abs());
        report.push(ReportRow::tolerance(&format!("n*E[1-exp(-Phi)] [{}]", s.name), est, exact, tol));
    }
    Ok(report)
}

/// Concatenation of `n` independent root samples.
pub struct RootConcat {
    pub root: LevyModel,
    pub n: u32,
}

impl Sampler for RootConcat {
    fn sample(&self, seed: u64, index: u64) -> Result<Dendrogram> {
        let parts = (0..self.n)
            .map(|k| self.root.sample(derive_seed(seed, &format!("root/{k}")), index))
            .collect::<Result<Vec<_>>>()?;
        concat(self.root.depth, &parts)
    }
}

/// `⊔` of `n` i.i.d. root samples against direct CPF samples.
pub fn verify_root(theta: f64, n: u32, samples: usize, seed: u64, sigma: f64) -> Result<ExperimentReport> {
    let model = reference_model(theta)?;
    let specs = reference_specs();
    let mut report = ExperimentReport::new("verify-root", seed)
        .with("theta", theta)
        .with("n_roots", n)
        .with("samples", samples)
        .with("sigma", sigma);
    let roots = RootConcat {
        root: nth_root_cpf(&model, n)?,
        n,
    };
    let a = laplace_many(&roots, &specs, samples, derive_seed(seed, "roots"))?;
    let b = laplace_many(&model, &specs, samples, derive_seed(seed, "direct"))?;
    for ((s, ea), eb) in specs.iter().zip(a).zip(b) {
        report.push(ReportRow::between(&format!("L[{}] roots vs direct", s.name), ea, eb, sigma));
    }
    Ok(report)
}

/// The two-atom Lévy measure `1.5·δ_1 + 4·δ_{0.25}` on `(0, ∞)`.
pub fn reference_real_levy() -> RealLevySpec {
    RealLevySpec::Atoms(vec![(1.0, 1.5), (0.25, 4.0)])
}

/// `-log E[e^{-s ū}]` of star forests against `∫(1 - e^{-sx}) ν(dx)`.
pub fn verify_star_mass(samples: usize, seed: u64, sigma: f64) -> Result<ExperimentReport> {
    let nu = reference_real_levy();
    let star = StarForest { depth: dec("1"), nu: nu.clone() };
    let mut report = ExperimentReport::new("verify-star-mass", seed)
        .with("samples", samples)
        .with("sigma", sigma)
        .with("nu", "1.5*delta_1 + 4*delta_0.25");
    let ss = [0.5, 1.0, 2.0];
    let specs: Vec<NamedSpec> = ss
        .iter()
        .map(|&s| NamedSpec {
            name: "s*mass",
            spec: PolynomialSpec::default().plus(s, MonomialSpec::total_mass_power(1)),
            depth: None,
        })
        .collect();
    let est = laplace_many(&star, &specs, samples, seed)?;
    for (s, e) in ss.iter().zip(est) {
        report.push(ReportRow::statistical(
            &format!("-log E[exp(-{s}*mass)]"),
            e.neg_log(),
            nu.log_laplace(*s)?,
            sigma,
        ));
    }
    Ok(report)
}

/// Initial states and process of the branching experiments.
pub struct BranchingSetup {
    pub process: GwProcess,
    pub u: Dendrogram,
    pub v: Dendrogram,
    pub h: Dec,
    pub time: f64,
}

pub fn branching_setup() -> Result<BranchingSetup> {
    Ok(BranchingSetup {
        process: GwProcess::new(1.0, dec("0.25"))?,
        u: Dendrogram::from_root(Node::internal(dec("1"), vec![leaf("0.5"), leaf("0.25")])),
        v: Dendrogram::singleton(dec("0.75")),
        h: dec("1"),
        time: 0.5,
    })
}

/// GW from `u ⊔^h v` against the `*^{h+t}`-convolution of GW from `u` and
/// from `v`.
pub fn verify_branching(samples: usize, seed: u64, sigma: f64) -> Result<ExperimentReport> {
    let s = branching_setup()?;
    let mut report = ExperimentReport::new("verify-branching", seed)
        .with("samples", samples)
        .with("sigma", sigma)
        .with("rate", s.process.rate)
        .with("mass", s.process.mass)
        .with("h", s.h)
        .with("t", s.time);
    let specs = vec![
        NamedSpec::new("0.5*mass", PolynomialSpec::default().plus(0.5, MonomialSpec::total_mass_power(1)), None),
        NamedSpec::new(
            "0.5*pair-sum@h=1.25",
            PolynomialSpec::default().plus(0.5, MonomialSpec::new(2, basis::SumEntries)),
            Some("1.25"),
        ),
        NamedSpec::new(
            "triple-decay",
            PolynomialSpec::monomial(MonomialSpec::new(3, basis::ExpDecay { scale: 1.0 })),
            None,
        ),
    ];
    let joint = GwSampler {
        process: s.process,
        initial: concat(s.h, &[s.u.clone(), s.v.clone()])?,
        time: s.time,
    };
    let first = GwSampler {
        process: s.process,
        initial: s.u.clone(),
        time: s.time,
    };
    let second = GwSampler {
        process: s.process,
        initial: s.v.clone(),
        time: s.time,
    };
    let conv = Convolution {
        first: &first,
        second: &second,
        depth: s.h + Dec::from_f64(s.time)?,
    };
    let a = laplace_many(&joint, &specs, samples, derive_seed(seed, "joint"))?;
    let b = laplace_many(&conv, &specs, samples, derive_seed(seed, "convolution"))?;
    for ((sp, ea), eb) in specs.iter().zip(a).zip(b) {
        report.push(ReportRow::between(&format!("L[{}] joint vs convolution", sp.name), ea, eb, sigma));
    }
    Ok(report)
}

/// Coupled runs from `u` and `u ⊔^h w` checked for `U_s ≼ V_s` at depth
/// `h + s` on every checkpoint.
pub fn verify_coupling(paths: usize, checkpoints: usize, seed: u64) -> Result<ExperimentReport> {
    let process = GwProcess::new(2.0, dec("0.25"))?;
    let u = Dendrogram::from_root(Node::internal(dec("1"), vec![leaf("0.5"), leaf("0.25")]));
    let w = Dendrogram::from_root(Node::internal(dec("0.5"), vec![leaf("0.25"), leaf("0.25")]));
    let h = dec("1");
    let times: Vec<f64> = (1..=checkpoints).map(|k| 0.1 * k as f64).collect();
    let mut report = ExperimentReport::new("verify-coupling", seed)
        .with("paths", paths)
        .with("checkpoints", checkpoints)
        .with("rate", process.rate)
        .with("mass", process.mass);
    let (mut failures, mut checked) = (0, 0);
    for i in 0..paths {
        let runs = process.coupled(&u, &w, h, &times, seed, &format!("couple/{i}"))?;
        for (s, (us, vs)) in times.iter().zip(&runs) {
            checked += 1;
            if !is_subforest(h + Dec::from_f64(*s)?, us, vs)? {
                failures += 1;
            }
        }
    }
    report.push(ReportRow::exact("U_s is a subforest of V_s", failures, checked));
    Ok(report)
}

/// Parameters of the GW martingale check: `K` individuals of mass `1/K`
/// branching at rate `K`, observed over `[t, t + Δ]`.
pub struct MartingaleSetup {
    pub k: u64,
    pub t: f64,
    pub delta: f64,
}

impl Default for MartingaleSetup {
    fn default() -> Self {
        MartingaleSetup {
            k: 200,
            t: 0.25,
            delta: 0.01,
        }
    }
}

/// `(E[ū(t+Δ)^n] - ū(t)^n)/Δ` from GW continuations of a fixed state `u_t`
/// against the generator with drift 0 and `b = a·β`; soft between 4σ and 5σ.
pub fn verify_generator_martingale(setup: &MartingaleSetup, samples: usize, seed: u64) -> Result<ExperimentReport> {
    let mass = Dec::from_units(Dec::ONE.units() / setup.k as i128);
    let process = GwProcess::new(setup.k as f64, mass)?;
    let start = Dendrogram::singleton(mass.mul_int(setup.k as i64));
    let state = process
        .evolve(&start, &[setup.t], seed, "martingale/start")?
        .pop()
        .unwrap_or_default();
    let b = mass.to_f64() * process.rate;
    let mut report = ExperimentReport::new("verify-generator", seed)
        .with("K", setup.k)
        .with("t", setup.t)
        .with("delta", setup.delta)
        .with("samples", samples)
        .with("b", b)
        .with("state_mass", state.total_mass());
    let cont = GwSampler {
        process,
        initial: state.clone(),
        time: setup.delta,
    };
    let u0 = state.total_mass().to_f64();
    let rows = map_samples(&cont, derive_seed(seed, "martingale/continue"), samples, |d| {
        let u = d.total_mass().to_f64();
        Ok([(u - u0) / setup.delta, (u * u - u0 * u0) / setup.delta])
    })?;
    for n in 1..=2usize {
        let est = Estimate::from_values(&rows.iter().map(|r| r[n - 1]).collect::<Vec<_>>());
        let spec = MonomialSpec::new(n, basis::Constant(1.0));
        let gen = generator_apply(&spec, &state, 0.0, b)?;
        report.push(ReportRow::soft(&format!("generator of mass^{n}"), est, gen, 4.0, 5.0));
    }
    Ok(report)
}
