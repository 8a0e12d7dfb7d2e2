//! `coarse-embed`: generate spaces, build dyadic embeddings, certify
//! Poincaré lower bounds and bracket least distortions from the command
//! line.
//!
//! Every command prints a short human-readable summary on stdout and writes
//! its reports under the output directory. Audit failures are listed on
//! stdout as `FAIL,<check>,<detail>` lines and in `failures.csv`, and make
//! the process exit with status 1.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use coarse_embed::embed::{
    analyze, audit, build_distortion_embedding, build_uniform_embedding_on, distortion, distortion_kmax,
    empirical_rate, Embedding, RateFunction,
};
use coarse_embed::generators::{gen, GenKind, GenSpec};
use coarse_embed::oracle::{bracket_csv, exact_c2, numeric_cp_upper, DistortionBracket};
use coarse_embed::poincare::{
    compression_constraint, cumulative_certificate, cumulative_constraint, diametral_certificate,
    expander_certificate, laakso_cp_check, optimal_constant_general, optimal_constant_p2, parse_measures,
    skew_cube_certificate, tree_cp_certificate, MeasurePair, PoincareCertificate, SearchBudget,
};
use coarse_embed::property_a::{
    doubling_family, dyadic_scales, measure_profile, normalize, p_convert, subexp_family, tree_ray_family, uniform_volume_family,
    WitnessFamily,
};
use coarse_embed::space::{read_space, write_space_edges};
use coarse_embed::util::fmt_g17;
use coarse_embed::FiniteSpace;

/// Environment variable capping the number of worker threads.
const THREADS_ENV: &str = "COARSE_EMBED_THREADS";

#[derive(Parser, Debug)]
#[command(name = "coarse-embed", version, about = "Coarse embeddings of finite metric spaces into L^p")]
struct Cli {
    /// Output directory for reports (created if missing).
    #[arg(short = 'o', long = "out", global = true, default_value = ".")]
    out: PathBuf,

    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a space and write it in the space file format.
    Gen {
        /// Generator spec such as `binary_tree:3` or `random_regular:64,3,seed=7`.
        spec: String,
        /// File name inside the output directory; `-o` may also name a
        /// `.space` file directly.
        #[arg(long)]
        name: Option<String>,
    },
    /// Build a uniform dyadic embedding and audit it.
    Embed {
        #[command(flatten)]
        family: FamilyArgs,
        /// Compression rate `f(t) = t^a log(e+t)^-b` as `a,b` (`b` may be `inf`).
        #[arg(long, default_value = "0.5,0")]
        rate: String,
        /// Base point.
        #[arg(long, default_value_t = 0)]
        base: usize,
    },
    /// Certify a Poincaré-type lower bound on the L^p distortion.
    Certify {
        /// Space file or generator spec.
        space: String,
        #[arg(long, value_enum)]
        kind: CertKind,
        #[arg(short = 'p', long = "p", default_value_t = 2.0)]
        p: f64,
        /// Measures file for `--kind custom`.
        #[arg(long)]
        measures: Option<PathBuf>,
        /// Cube corners for `--kind skew-cube`, indexed by bitmask.
        #[arg(long, value_delimiter = ',')]
        corners: Vec<usize>,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Sandwich the least distortion between certificates, the exact
    /// Hilbert-space oracle, numeric search and the dyadic construction.
    Bracket {
        /// Space file or generator spec.
        space: String,
        #[arg(short = 'p', long = "p", default_value_t = 2.0)]
        p: f64,
        /// Width of the exact bracket, and slack allowed between the layers.
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
        /// Restarts of the numeric search.
        #[arg(long, default_value_t = 4)]
        restarts: usize,
        /// Dimension of the numeric search (default `n - 1`).
        #[arg(long)]
        dim: Option<usize>,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Measure the A-profile `n ↦ J(n)` of a witness family.
    Profile {
        #[command(flatten)]
        family: FamilyArgs,
        /// Report the family before normalization to 1-Lipschitz.
        #[arg(long)]
        raw: bool,
    },
}

#[derive(Args, Debug)]
struct FamilyArgs {
    /// Space file or generator spec.
    space: String,
    #[arg(long, value_enum, default_value_t = FamilyKind::Doubling)]
    family: FamilyKind,
    #[arg(short = 'p', long = "p", default_value_t = 2.0)]
    p: f64,
    /// Comma-separated powers of two; default `1, 2, ..., 2^⌊log₂(Diam/2)⌋`.
    #[arg(long, value_delimiter = ',')]
    scales: Vec<u32>,
}

#[derive(Args, Debug)]
struct SearchArgs {
    /// Restarts of the Poincaré constant search (used when p ≠ 2).
    #[arg(long, default_value_t = SearchBudget::default().restarts)]
    search_restarts: usize,
    /// Ascent iterations per restart.
    #[arg(long, default_value_t = SearchBudget::default().iterations)]
    search_iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum FamilyKind {
    Subexp,
    UniformVolume,
    Doubling,
    /// Tent functions along root-directed walks; trees only, rooted at point 0.
    TreeRay,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum CertKind {
    Expander,
    TreeCp,
    LaaksoCp,
    SkewCube,
    Diametral,
    Custom,
}

/// Audit outcomes collected while running a command.
#[derive(Default)]
struct Failures(Vec<(String, String)>);

impl Failures {
    fn push(&mut self, check: &str, detail: String) {
        self.0.push((check.to_string(), detail));
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    match run(&cli) {
        Ok(failures) if failures.0.is_empty() => ExitCode::SUCCESS,
        Ok(failures) => {
            for (check, detail) in &failures.0 {
                println!("FAIL,{check},{detail}");
            }
            let mut csv = String::from("check,detail\n");
            for (check, detail) in &failures.0 {
                let _ = writeln!(csv, "{check},{detail}");
            }
            if let Err(e) = write_report(&cli.out, "failures.csv", &csv) {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let threads: usize = v
        .trim()
        .parse()
        .with_context(|| format!("{THREADS_ENV} must be a positive integer, got {v:?}"))?;
    if threads == 0 {
        bail!("{THREADS_ENV} must be a positive integer");
    }
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    Ok(())
}

fn run(cli: &Cli) -> Result<Failures> {
    match &cli.command {
        Command::Gen { spec, name } => cmd_gen(cli, spec, name.as_deref()),
        Command::Embed { family, rate, base } => cmd_embed(cli, family, rate, *base),
        Command::Certify { space, kind, p, measures, corners, search } => {
            cmd_certify(cli, space, *kind, *p, measures.as_deref(), corners, search)
        }
        Command::Bracket { space, p, tol, restarts, dim, search } => {
            cmd_bracket(cli, space, *p, *tol, *restarts, *dim, search)
        }
        Command::Profile { family, raw } => cmd_profile(cli, family, *raw),
    }
}

/// A space argument: an existing file, otherwise a generator spec.
fn load_space(arg: &str) -> Result<FiniteSpace> {
    if Path::new(arg).is_file() {
        return read_space(arg).with_context(|| format!("reading {arg}"));
    }
    let spec: GenSpec = arg.parse().with_context(|| format!("{arg:?} is neither a file nor a generator spec"))?;
    Ok(FiniteSpace::from_graph(&gen(&spec)?)?)
}

fn write_report(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn budget(cli: &Cli, search: &SearchArgs) -> SearchBudget {
    SearchBudget {
        restarts: search.search_restarts,
        iterations: search.search_iterations,
        seed: cli.seed,
    }
}

fn cmd_gen(cli: &Cli, spec: &str, name: Option<&str>) -> Result<Failures> {
    let spec: GenSpec = spec.parse()?;
    let g = gen(&spec)?;
    let space = FiniteSpace::from_graph(&g)?;
    let text = write_space_edges(&g, None);
    let path = if cli.out.extension().is_some_and(|e| e == "space") {
        if let Some(dir) = cli.out.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(&cli.out, &text).with_context(|| format!("writing {}", cli.out.display()))?;
        cli.out.clone()
    } else {
        let default = spec.to_string().replace([':', ',', '='], "_") + ".space";
        write_report(&cli.out, name.unwrap_or(&default), &text)?
    };
    println!("space {spec}");
    println!("n {}", space.len());
    println!("edges {}", g.edges().len());
    println!("diameter {}", fmt_g17(space.diameter()));
    println!("doubling_constant {}", fmt_g17(space.doubling_constant_auto()));
    println!("wrote {}", path.display());
    Ok(Failures::default())
}

fn scales_for(space: &FiniteSpace, requested: &[u32]) -> Result<Vec<u32>> {
    if requested.is_empty() {
        return Ok(dyadic_scales(distortion_kmax(space)));
    }
    if let Some(bad) = requested.iter().find(|s| !s.is_power_of_two()) {
        bail!("scale {bad} is not a power of two");
    }
    Ok(requested.to_vec())
}

/// The requested family at exponent `p`, before normalization.
fn raw_family(space: &FiniteSpace, kind: FamilyKind, p: f64, scales: &[u32]) -> Result<WitnessFamily> {
    Ok(match kind {
        FamilyKind::Subexp => {
            let fam = subexp_family(space, scales)?;
            if p > 1.0 {
                p_convert(space, &fam, p)?
            } else {
                fam
            }
        }
        FamilyKind::UniformVolume => uniform_volume_family(space, p, scales)?,
        FamilyKind::Doubling => doubling_family(space, p, scales)?,
        FamilyKind::TreeRay => tree_ray_family(space, p, scales)?,
    })
}

fn normalized_family(space: &FiniteSpace, args: &FamilyArgs) -> Result<(WitnessFamily, Vec<u32>)> {
    let scales = scales_for(space, &args.scales)?;
    let fam = raw_family(space, args.family, args.p, &scales)?;
    Ok((normalize(space, &fam)?.0, scales))
}

fn cmd_embed(cli: &Cli, args: &FamilyArgs, rate: &str, base: usize) -> Result<Failures> {
    let space = load_space(&args.space)?;
    let f: RateFunction = rate.parse()?;
    let (fam, scales) = normalized_family(&space, args)?;
    let ks: Vec<u32> = scales.iter().map(|s| s.trailing_zeros()).collect();
    let emb = build_uniform_embedding_on(&space, &fam, &f, base, &ks)?;
    let analysis = analyze(&space, &emb);
    let checks = audit(&emb, &analysis.table);

    write_report(&cli.out, "profiles.csv", &analysis.to_csv())?;
    write_report(&cli.out, "embedding.txt", &emb.dump())?;
    println!("space n={} diameter={}", space.len(), fmt_g17(space.diameter()));
    println!("family {:?} p={} rate={f} base={base}", args.family, fmt_g17(args.p));
    println!("scales {}", join(&scales));
    match empirical_rate(&analysis.compression) {
        Ok(r) => println!("empirical_rate {}", fmt_g17(r)),
        Err(e) => println!("empirical_rate unavailable ({e})"),
    }
    match analysis.distortion {
        Some(d) => println!("distortion {}", fmt_g17(d)),
        None => println!("distortion unbounded"),
    }
    let mut failures = Failures::default();
    for check in [&checks.disjoint_support, &checks.lipschitz] {
        println!(
            "audit {} {} checked={} violations={} min_slack={}",
            check.name,
            if check.passed() { "pass" } else { "fail" },
            check.checked,
            check.violations,
            fmt_g17(check.min_slack)
        );
        if !check.passed() {
            let pair = check.worst_pair.map(|(x, y)| format!("{x}-{y}")).unwrap_or_default();
            failures.push(
                check.name,
                format!("violations={} min_slack={} worst_pair={pair}", check.violations, fmt_g17(check.min_slack)),
            );
        }
    }
    Ok(failures)
}

fn cmd_profile(cli: &Cli, args: &FamilyArgs, raw: bool) -> Result<Failures> {
    let space = load_space(&args.space)?;
    let scales = scales_for(&space, &args.scales)?;
    let fam = raw_family(&space, args.family, args.p, &scales)?;
    let profile = if raw { measure_profile(&space, &fam)? } else { normalize(&space, &fam)?.1 };
    let csv = profile.to_csv();
    write_report(&cli.out, "profile.csv", &csv)?;
    print!("{csv}");
    Ok(Failures::default())
}

/// Largest power-of-two exponent `k` with `2^k <= t`.
fn floor_log2(t: f64) -> Option<u32> {
    (t >= 1.0).then(|| t.log2().floor() as u32)
}

fn laakso_level(arg: &str) -> Result<u32> {
    let spec: GenSpec = arg.parse().context("laakso-cp needs a `laakso:L` generator spec")?;
    if spec.kind != GenKind::Laakso {
        bail!("laakso-cp needs a `laakso:L` generator spec, got {spec}");
    }
    Ok(spec.params[0] as u32)
}

fn single_scale(space: &FiniteSpace, mp: &MeasurePair, p: f64, budget: &SearchBudget) -> Result<PoincareCertificate> {
    Ok(if p == 2.0 {
        optimal_constant_p2(space, mp)?
    } else {
        optimal_constant_general(space, mp, p, budget)?
    })
}

fn cmd_certify(
    cli: &Cli,
    space_arg: &str,
    kind: CertKind,
    p: f64,
    measures: Option<&Path>,
    corners: &[usize],
    search: &SearchArgs,
) -> Result<Failures> {
    let budget = budget(cli, search);
    let mut failures = Failures::default();
    let single = |cert: PoincareCertificate| -> Result<(String, String, f64, String)> {
        let cons = compression_constraint(&cert)?;
        let mut summary = format!("J {}\nr {}\nmethod {}", fmt_g17(cert.j), fmt_g17(cert.r()), cert.method);
        if let Some(a) = &cons.advisory {
            summary.push_str(&format!("\nadvisory {a}"));
        }
        Ok((cert.to_text(), cons.to_csv(), cons.lower_bound, summary))
    };
    let cumulative = |cert: coarse_embed::poincare::CumulativeCertificate| -> Result<(String, String, f64, String)> {
        let cons = cumulative_constraint(&cert)?;
        let mut summary = format!("c {}\nmethod {}", fmt_g17(cert.c), cert.method);
        for s in &cert.scales {
            summary.push_str(&format!("\nscale k={} J={} isolated_J={}", s.k, fmt_g17(s.j), fmt_g17(s.isolated_j)));
        }
        if cons.q_differs() {
            summary.push_str(&format!("\nnote exponent q={} differs from p", fmt_g17(cons.q)));
        }
        if let Some(a) = &cons.advisory {
            summary.push_str(&format!("\nadvisory {a}"));
        }
        Ok((cert.to_text(), cons.to_csv(), cons.lower_bound, summary))
    };

    let (text, csv, lower, summary) = match kind {
        CertKind::LaaksoCp => {
            let report = laakso_cp_check(laakso_level(space_arg)?, p, &budget)?;
            let ratios: Vec<String> = report.ratios.iter().map(|&r| fmt_g17(r)).collect();
            println!("ratios {}", ratios.join(","));
            println!("fitted_c {}", fmt_g17(report.fitted_c));
            println!("spread {}", fmt_g17(report.spread));
            if !report.linear_within_limit() {
                failures.push("laakso_linear_profile", format!("spread={}", fmt_g17(report.spread)));
            }
            cumulative(report.certificate)?
        }
        _ => {
            let space = load_space(space_arg)?;
            match kind {
                CertKind::Expander => single(expander_certificate(&space)?)?,
                CertKind::Diametral => single(diametral_certificate(&space)?)?,
                CertKind::SkewCube => single(skew_cube_certificate(&space, corners)?)?,
                CertKind::TreeCp => cumulative(tree_cp_certificate(&space, p, &budget)?)?,
                CertKind::Custom => {
                    let path = measures.context("--kind custom needs --measures FILE")?;
                    let parsed = parse_measures(&fs::read_to_string(path)?)?;
                    let tagged = parsed.far.iter().any(|(k, _)| k.is_some());
                    if tagged || parsed.far.len() > 1 {
                        let scales = parsed
                            .far
                            .into_iter()
                            .map(|(k, far)| {
                                let k = match k {
                                    Some(k) => k,
                                    None => floor_log2(far.iter().map(|w| space.d(w.x, w.y)).fold(f64::INFINITY, f64::min))
                                        .context("far pairs must be at distance >= 1")?,
                                };
                                Ok((k, far))
                            })
                            .collect::<Result<Vec<_>>>()?;
                        let r = parsed.r.unwrap_or_else(|| space.diameter());
                        cumulative(cumulative_certificate(&space, p, r, scales, parsed.near, &budget)?)?
                    } else {
                        let (_, far) = parsed.far.into_iter().next().context("measures file has no P section")?;
                        let r = parsed
                            .r
                            .unwrap_or_else(|| far.iter().map(|w| space.d(w.x, w.y)).fold(f64::INFINITY, f64::min));
                        let mp = MeasurePair::new(&space, r, far, parsed.near)?;
                        single(single_scale(&space, &mp, p, &budget)?)?
                    }
                }
                CertKind::LaaksoCp => unreachable!(),
            }
        }
    };
    write_report(&cli.out, "certificate.txt", &text)?;
    write_report(&cli.out, "constraint.csv", &csv)?;
    println!("{summary}");
    println!("lower_bound {}", fmt_g17(lower));
    Ok(failures)
}

fn cmd_bracket(
    cli: &Cli,
    space_arg: &str,
    p: f64,
    tol: f64,
    restarts: usize,
    dim: Option<usize>,
    search: &SearchArgs,
) -> Result<Failures> {
    let space = load_space(space_arg)?;
    let budget = budget(cli, search);
    let n = space.len();

    // Certificates that apply to every space; the tree recipe when it fits.
    let mut lower = 1.0f64;
    let mut lower_method = String::from("trivial");
    let mut consider = |value: f64, method: String| {
        if value > lower {
            lower = value;
            lower_method = method;
        }
    };
    if n >= 2 && p > 1.0 {
        for (name, cert) in [("diametral", diametral_certificate(&space)), ("expander", expander_certificate(&space))] {
            let cert = match cert {
                Ok(c) if p == 2.0 => c,
                Ok(c) => optimal_constant_general(&space, &c.measures, p, &budget)?,
                Err(e) => {
                    log::info!("{name} certificate unavailable: {e}");
                    continue;
                }
            };
            let cons = compression_constraint(&cert)?;
            if cons.certified {
                consider(cons.lower_bound, format!("{name}_{}", cert.method));
            }
        }
        if let Ok(cert) = tree_cp_certificate(&space, p, &budget) {
            let cons = cumulative_constraint(&cert)?;
            if cons.certified {
                consider(cons.lower_bound, format!("tree_cp_{}", cert.method));
            }
        }
    }
    let certificate = DistortionBracket {
        lower,
        upper: f64::INFINITY,
        certified_lower: lower,
        realized_upper: f64::INFINITY,
        method: lower_method,
    };

    let exact = if p == 2.0 { Some(exact_c2(&space, tol)?) } else { None };
    let dim = dim.unwrap_or(n.saturating_sub(1).max(1));
    let numeric = numeric_cp_upper(&space, p, dim, restarts, cli.seed)?;
    let numeric = DistortionBracket {
        lower: 1.0,
        upper: numeric,
        certified_lower: 1.0,
        realized_upper: numeric,
        method: format!("numeric_dim{dim}"),
    };
    let construction = if n >= 2 {
        let fam = normalize(&space, &doubling_family(&space, p, &dyadic_scales(distortion_kmax(&space)))?)?.0;
        let emb: Embedding = build_distortion_embedding(&space, &fam, 0)?;
        distortion(&space, &emb)?
    } else {
        1.0
    };
    let construction = DistortionBracket {
        lower: 1.0,
        upper: construction,
        certified_lower: 1.0,
        realized_upper: construction,
        method: "dyadic_doubling".into(),
    };

    let name = space_arg.to_string();
    let mut rows = vec![(name.as_str(), p, &certificate)];
    if let Some(e) = &exact {
        rows.push((name.as_str(), p, e));
    }
    rows.push((name.as_str(), p, &numeric));
    rows.push((name.as_str(), p, &construction));
    write_report(&cli.out, "bracket.csv", &bracket_csv(rows))?;

    println!("certificate_lower {} ({})", fmt_g17(certificate.lower), certificate.method);
    if let Some(e) = &exact {
        println!("exact_c2 [{}, {}]", fmt_g17(e.lower), fmt_g17(e.upper));
    }
    println!("numeric_upper {}", fmt_g17(numeric.upper));
    println!("construction_upper {}", fmt_g17(construction.upper));

    // Chain of inequalities that must hold up to `tol`.
    let mut chain = vec![("certificate", certificate.lower)];
    if let Some(e) = &exact {
        chain.push(("exact_lower", e.lower));
        chain.push(("exact_upper", e.upper));
    }
    chain.push(("numeric", numeric.upper));
    chain.push(("construction", construction.upper));
    let mut failures = Failures::default();
    for w in chain.windows(2) {
        let ((a, va), (b, vb)) = (w[0], w[1]);
        if va > vb + tol {
            failures.push("sandwich", format!("{a}={} > {b}={}", fmt_g17(va), fmt_g17(vb)));
        }
    }
    println!("verdict {}", if failures.0.is_empty() { "consistent" } else { "inconsistent" });
    Ok(failures)
}

fn join(v: &[u32]) -> String {
    v.iter().map(u32::to_string).collect::<Vec<_>>().join(",")
}
