//! `umspace`: command-line access to the semigroup calculus and the
//! experiments.

use std::fs;
use std::io::{self, Read as _, Write as _};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use umspace::forest::{sample_cpf, GwConfig};
use umspace::io::{parse_batch, parse_dendrogram, parse_marked, write_batch, write_dendrogram, write_marked};
use umspace::marked::{marked_concat, marked_decompose, marked_truncate, MarkedDendrogram};
use umspace::polynomial::{basis, eval_monomial, eval_monomial_mc, MonomialSpec, PolynomialSpec};
use umspace::rng::{derive_seed, Estimate};
use umspace::semigroup::{concat, count_balls, decompose, mass_fragmentation_path, trunk, truncate, BallCount};
use umspace::{canonicalize, validate, Dec, Dendrogram, Error};
use umspace_harness::acceptance::{criteria, run_criterion, DEFAULT_SEED};
use umspace_harness::experiments::{
    reference_model, verify_branching, verify_excursion, verify_lk, verify_root, verify_star_mass, DEFAULT_SIGMA,
};
use umspace_harness::path::emit_path_csv;
use umspace_harness::{ExperimentReport, Status};

const EXIT_INVALID: u8 = 2;
const EXIT_EXPERIMENT: u8 = 3;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "umspace", version, about = "Ultrametric measure spaces: semigroup operations and experiments")]
struct Cli {
    /// Worker threads for sampling; defaults to all cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Doc)]
    format: Format,
    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Doc,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Report structural problems of a document.
    Validate(Input),
    /// Canonical form of a document.
    Canon(Input),
    /// Concatenate documents at depth h.
    Concat {
        #[arg(long)]
        h: Dec,
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Upper truncation at depth h.
    Truncate(DepthInput),
    /// Primes of the h-top, one document per line.
    Decompose(DepthInput),
    /// The h-trunk.
    Trunk(DepthInput),
    /// Number of open 2h-balls.
    Count(DepthInput),
    /// Mass fragmentation path as CSV.
    FragmentationPath(Input),
    /// Evaluate a built-in monomial.
    Eval {
        #[command(flatten)]
        phi: PhiArgs,
        /// Monte-Carlo with this many samples instead of enumeration.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[command(flatten)]
        input: Input,
    },
    /// Empirical Laplace transform E[exp(-Φ)] over a batch of documents.
    Laplace {
        #[command(flatten)]
        phi: PhiArgs,
        #[command(flatten)]
        input: Input,
    },
    /// Samples of the reference compound Poisson forest.
    SampleCpf {
        #[arg(long, default_value_t = 2.0)]
        theta: f64,
        #[arg(long, default_value_t = 1)]
        samples: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Galton-Watson genealogies from `atoms` individuals at one site.
    Gw {
        #[arg(long, default_value_t = 10)]
        atoms: u64,
        #[arg(long, default_value_t = 1.0)]
        rate: f64,
        /// Mass of one individual.
        #[arg(long, default_value = "0.1")]
        mass: Dec,
        /// Observation time.
        #[arg(long, default_value_t = 1.0)]
        time: f64,
        #[arg(long, default_value_t = 1)]
        samples: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Monte-Carlo Laplace transform of the reference CPF against its
    /// closed form.
    VerifyLk {
        #[arg(long, default_value_t = 2.0)]
        theta: f64,
        /// Also compare the n-th root excursion approximant.
        #[arg(long)]
        n_roots: Option<u32>,
        #[command(flatten)]
        stat: StatArgs,
    },
    /// Concatenated n-th roots against direct CPF samples.
    VerifyRoot {
        #[arg(long, default_value_t = 2.0)]
        theta: f64,
        #[arg(long, default_value_t = 4)]
        n_roots: u32,
        #[command(flatten)]
        stat: StatArgs,
    },
    /// GW from a concatenation against the convolution of GW runs.
    VerifyBranching {
        #[command(flatten)]
        stat: StatArgs,
    },
    /// Total mass of star forests against the Lévy-Khintchine exponent.
    VerifyStarMass {
        #[command(flatten)]
        stat: StatArgs,
    },
    /// Run the acceptance battery.
    Suite {
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
}

#[derive(Args)]
struct Input {
    /// Document path; stdin when absent or `-`.
    file: Option<PathBuf>,
}

#[derive(Args)]
struct DepthInput {
    #[arg(long, alias = "depth")]
    h: Dec,
    #[command(flatten)]
    input: Input,
}

#[derive(Args)]
struct StatArgs {
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    sigma: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Phi {
    /// φ ≡ 1, so Φ = ū^m.
    One,
    /// Sum of the distance-matrix entries.
    Sum,
    /// exp(-sum of entries).
    Exp,
    /// Indicator that the first two sampled atoms differ.
    Distinct,
}

#[derive(Args)]
struct PhiArgs {
    #[arg(long, value_enum)]
    phi: Phi,
    #[arg(long, default_value_t = 1)]
    order: usize,
    /// Truncation depth.
    #[arg(long, alias = "depth")]
    h: Option<Dec>,
}

impl PhiArgs {
    fn spec(&self) -> Result<MonomialSpec, Failure> {
        let m = self.order;
        let spec = match self.phi {
            Phi::One => MonomialSpec::new(m, basis::Constant(1.0)),
            Phi::Sum => MonomialSpec::new(m, basis::SumEntries),
            Phi::Exp => MonomialSpec::new(m, basis::ExpDecay { scale: 1.0 }),
            Phi::Distinct if m < 2 => return Err(Failure::usage("--phi distinct needs --order of at least 2")),
            Phi::Distinct => MonomialSpec::new(m, basis::Distinct { i: 0, j: 1 }),
        };
        Ok(match self.h {
            Some(h) => spec.truncated(h),
            None => spec,
        })
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(msg: &str) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: msg.to_string(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Decimal(_)
            | Error::Malformed(_)
            | Error::NotUltrametric { .. }
            | Error::Matrix(_)
            | Error::Format(_)
            | Error::MarkSpace(_) => EXIT_INVALID,
            Error::Domain(_) | Error::Model(_) | Error::InfiniteActivity | Error::MissingGradient => EXIT_USAGE,
            Error::Budget { .. } | Error::NonFinite(_) | Error::Sampler(_) => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure {
            code: 1,
            message: e.to_string(),
        }
    }
}

/// What a command produced.
struct Output {
    text: String,
    code: u8,
}

impl Output {
    fn ok(text: String) -> Self {
        Output { text, code: 0 }
    }
}

fn read_input(input: &Input) -> Result<String, Failure> {
    match &input.file {
        Some(p) if p.as_os_str() != "-" => Ok(fs::read_to_string(p)?),
        _ => {
            let mut s = String::new();
            io::stdin().read_to_string(&mut s)?;
            Ok(s)
        }
    }
}

/// A document with or without a mark space.
enum Doc {
    Plain(Dendrogram),
    Marked(MarkedDendrogram),
}

fn is_marked(text: &str) -> bool {
    serde_json::from_str::<serde_json::Value>(text).is_ok_and(|v| v.get("mark_space").is_some())
}

fn read_doc(input: &Input) -> Result<Doc, Failure> {
    let text = read_input(input)?;
    if is_marked(&text) {
        Ok(Doc::Marked(parse_marked(&text)?))
    } else {
        Ok(Doc::Plain(parse_dendrogram(&text)?))
    }
}

fn read_tree(input: &Input) -> Result<Dendrogram, Failure> {
    Ok(canonicalize(&parse_dendrogram(&read_input(input)?)?)?)
}

fn doc_line(d: &Dendrogram) -> Result<String, Failure> {
    Ok(write_dendrogram(d)? + "\n")
}

fn marked_line(d: &MarkedDendrogram) -> String {
    write_marked(d) + "\n"
}

fn estimate_text(e: &Estimate, format: Format) -> String {
    match format {
        Format::Doc => json!({ "mean": e.mean, "stderr": e.stderr, "n": e.n }).to_string() + "\n",
        Format::Csv => format!("mean,stderr,n\n{},{},{}\n", e.mean, e.stderr, e.n),
    }
}

fn report_output(report: &ExperimentReport, format: Format) -> Output {
    let text = match format {
        Format::Doc => report.to_json(),
        Format::Csv => report.to_csv(),
    };
    let code = if report.status() == Status::Fail { EXIT_EXPERIMENT } else { 0 };
    Output { text, code }
}

fn run(cli: &Cli) -> Result<Output, Failure> {
    let format = cli.format;
    Ok(match &cli.command {
        Command::Validate(input) => {
            let report = validate(&parse_dendrogram(&read_input(input)?)?);
            let messages = report.messages();
            let text = match format {
                Format::Doc => {
                    json!({ "valid": !report.has_fatal(), "canonical": report.is_clean(), "violations": messages })
                        .to_string()
                        + "\n"
                }
                Format::Csv => {
                    let mut s = String::from("violation\n");
                    for m in &messages {
                        s.push_str(&format!("\"{}\"\n", m.replace('"', "\"\"")));
                    }
                    s
                }
            };
            Output {
                text,
                code: if report.has_fatal() { EXIT_INVALID } else { 0 },
            }
        }
        Command::Canon(input) => Output::ok(match read_doc(input)? {
            Doc::Plain(d) => doc_line(&d)?,
            Doc::Marked(d) => marked_line(&d),
        }),
        Command::Concat { h, files } => {
            let docs = files
                .iter()
                .map(|f| read_doc(&Input { file: Some(f.clone()) }))
                .collect::<Result<Vec<_>, _>>()?;
            if docs.iter().all(|d| matches!(d, Doc::Marked(_))) {
                let parts: Vec<MarkedDendrogram> = docs
                    .into_iter()
                    .filter_map(|d| match d {
                        Doc::Marked(m) => Some(m),
                        Doc::Plain(_) => None,
                    })
                    .collect();
                Output::ok(marked_line(&marked_concat(*h, &parts)?))
            } else {
                let parts: Vec<Dendrogram> = docs
                    .into_iter()
                    .map(|d| match d {
                        Doc::Plain(p) => p,
                        Doc::Marked(m) => m.tree().clone(),
                    })
                    .collect();
                Output::ok(doc_line(&concat(*h, &parts)?)?)
            }
        }
        Command::Truncate(DepthInput { h, input }) => Output::ok(match read_doc(input)? {
            Doc::Plain(d) => doc_line(&truncate(*h, &d)?)?,
            Doc::Marked(d) => marked_line(&marked_truncate(*h, &d)?),
        }),
        Command::Decompose(DepthInput { h, input }) => Output::ok(match read_doc(input)? {
            Doc::Plain(d) => write_batch(&decompose(*h, &d)?.primes)?,
            Doc::Marked(d) => marked_decompose(*h, &d)?.iter().map(marked_line).collect(),
        }),
        Command::Trunk(DepthInput { h, input }) => Output::ok(doc_line(&trunk(*h, &read_tree(input)?)?)?),
        Command::Count(DepthInput { h, input }) => {
            let n = match count_balls(*h, &read_tree(input)?)? {
                BallCount::Finite(n) => n.to_string(),
                BallCount::Infinite => "infinite".to_string(),
            };
            Output::ok(n + "\n")
        }
        Command::FragmentationPath(input) => {
            Output::ok(emit_path_csv(&mass_fragmentation_path(&read_tree(input)?)?))
        }
        Command::Eval {
            phi,
            samples,
            seed,
            input,
        } => {
            let spec = phi.spec()?;
            let d = read_tree(input)?;
            let est = match samples {
                Some(n) => eval_monomial_mc(&spec, &d, *n, *seed, rayon::current_num_threads())?,
                None => Estimate::exact(eval_monomial(&spec, &d)?),
            };
            Output::ok(estimate_text(&est, format))
        }
        Command::Laplace { phi, input } => {
            let spec = PolynomialSpec::monomial(phi.spec()?);
            let batch = parse_batch(&read_input(input)?)?;
            if batch.len() < 2 {
                return Err(Failure::usage("laplace needs a batch of at least 2 documents"));
            }
            let values = batch
                .iter()
                .map(|d| Ok((-umspace::polynomial::eval_polynomial(&spec, d)?).exp()))
                .collect::<Result<Vec<f64>, Error>>()?;
            Output::ok(estimate_text(&Estimate::from_values(&values), format))
        }
        Command::SampleCpf { theta, samples, seed } => {
            let model = reference_model(*theta)?;
            let draws = (0..*samples)
                .map(|i| sample_cpf(&model, derive_seed(*seed, &format!("sample/{i}"))))
                .collect::<Result<Vec<_>, _>>()?;
            Output::ok(write_batch(&draws)?)
        }
        Command::Gw {
            atoms,
            rate,
            mass,
            time,
            samples,
            seed,
        } => {
            let sampler = GwConfig {
                initial: *atoms,
                rate: *rate,
                horizon: *time,
                mass: *mass,
            }
            .sampler()?;
            let draws = umspace::rng::map_samples(&sampler, *seed, *samples, |d| Ok(d.clone()))?;
            Output::ok(write_batch(&draws)?)
        }
        Command::VerifyLk { theta, n_roots, stat } => {
            let mut report = verify_lk(*theta, stat.samples, stat.seed, stat.sigma)?;
            if let Some(n) = n_roots {
                let exc = verify_excursion(*theta, *n, stat.samples, stat.seed, stat.sigma)?;
                report.config.insert("n_roots".into(), n.to_string());
                report.rows.extend(exc.rows);
            }
            report_output(&report, format)
        }
        Command::VerifyRoot { theta, n_roots, stat } => {
            report_output(&verify_root(*theta, *n_roots, stat.samples, stat.seed, stat.sigma)?, format)
        }
        Command::VerifyBranching { stat } => {
            report_output(&verify_branching(stat.samples, stat.seed, stat.sigma)?, format)
        }
        Command::VerifyStarMass { stat } => {
            report_output(&verify_star_mass(stat.samples, stat.seed, stat.sigma)?, format)
        }
        Command::Suite { seed } => {
            let mut failed = 0;
            let mut reports = Vec::new();
            let mut lines = String::new();
            for c in criteria() {
                let o = run_criterion(&c, *seed);
                eprintln!("{}", o.line());
                lines.push_str(&format!("{},{},{}\n", o.id, o.status.label(), c.title));
                if o.status == Status::Fail {
                    failed += 1;
                }
                reports.push(json!({
                    "criterion": o.id,
                    "title": o.title,
                    "status": o.status,
                    "error": o.error,
                    "report": o.report,
                }));
            }
            let text = match format {
                Format::Doc => serde_json::to_string_pretty(&reports).expect("reports serialize") + "\n",
                Format::Csv => format!("criterion,status,title\n{lines}"),
            };
            Output {
                text,
                code: if failed > 0 { EXIT_EXPERIMENT } else { 0 },
            }
        }
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("umspace: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    let start = Instant::now();
    let result = run(&cli);
    eprintln!("umspace: wall clock {:.3} s", start.elapsed().as_secs_f64());
    match result {
        Ok(out) => {
            let written = match &cli.out {
                Some(p) => fs::write(p, &out.text),
                None => io::stdout().write_all(out.text.as_bytes()),
            };
            if let Err(e) = written {
                eprintln!("umspace: {e}");
                return ExitCode::from(1);
            }
            ExitCode::from(out.code)
        }
        Err(f) => {
            eprintln!("umspace: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
