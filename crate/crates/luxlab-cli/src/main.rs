//! Command-line front end for the luxlab numerical laboratory.
//!
//! Exit codes: 0 on success (including a bounded experiment verdict), 1 when
//! an experiment's verdict reports an inequality violation, 2 on usage,
//! configuration, hypothesis, or data errors.

use clap::{Args, Parser, Subcommand};
use luxlab::carleson::{carleson_constant, CarlesonSequence};
use luxlab::field::{make_field, FieldGenerator, FieldKind, MeshField};
use luxlab::growth::{classify, GrowthFunction, GrowthProperty};
use luxlab::harness::{
    parse_cube_set, parse_ini, run_experiment, validate_report, write_report, ExperimentConfig,
    ReportFormat, Sections,
};
use luxlab::maximal::{
    fractional_multilinear_maximal, log_maximal, multilinear_weighted_maximal, MaximalResult,
};
use luxlab::numerics::log_spaced;
use luxlab::orlicz::{luxemburg_norm, NORM_TOL};
use luxlab::weights::{
    muckenhoupt_constant, pair_class_constant, w_class_constant, ClassKind, WeightSystem,
};
use luxlab::{Error, Result};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "luxlab",
    version,
    about = "Numerical laboratory for two-weight Orlicz-norm inequalities \
             of multilinear maximal operators on dyadic meshes"
)]
struct Cli {
    /// Worker threads for parallel trials (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify a growth function against a named property on a log grid.
    Classify(ClassifyArgs),
    /// Luxemburg norm of a field (CSV) against a weight (CSV or Lebesgue).
    Norm(NormArgs),
    /// Evaluate a maximal operator on CSV fields.
    Maximal(MaximalArgs),
    /// Compute a weight-class constant and print it as one JSON row.
    Constant(ConstantArgs),
    /// Carleson constant of a sequence file against a weight field.
    Carleson(CarlesonArgs),
    /// Run a seeded experiment from a config file and/or flags.
    Experiment(ExperimentArgs),
    /// Validate a previously written report file.
    Report(ReportArgs),
}

#[derive(Args)]
struct ClassifyArgs {
    /// Growth-function descriptor, e.g. `power:p=2` or `powerlog:a=2,b=1`.
    #[arg(long = "fn")]
    function: String,
    /// Property: delta2, delta-prime, nabla2, upper-type:q=<q>,
    /// u-tilde:q=<q>, quotient-bound, or ratio-monotone.
    #[arg(long)]
    property: String,
    /// Second growth function for the two-function properties.
    #[arg(long)]
    aux: Option<String>,
    /// Lower end of the audit grid.
    #[arg(long, default_value_t = 1e-3)]
    lo: f64,
    /// Upper end of the audit grid.
    #[arg(long, default_value_t = 1e3)]
    hi: f64,
    /// Number of grid points.
    #[arg(long, default_value_t = 49)]
    points: usize,
}

#[derive(Args)]
struct NormArgs {
    /// Growth-function descriptor.
    #[arg(long = "fn")]
    function: String,
    /// Field CSV (as written by `maximal --out` or the library).
    #[arg(long)]
    field: PathBuf,
    /// Weight CSV on the same mesh; Lebesgue measure when omitted.
    #[arg(long)]
    weight: Option<PathBuf>,
    /// Relative bisection tolerance.
    #[arg(long, default_value_t = NORM_TOL)]
    tol: f64,
}

#[derive(Args)]
struct MaximalArgs {
    /// Operator: weighted, fractional, or log.
    #[arg(long)]
    kind: String,
    /// Weight CSVs (one per input slot, weighted kind only).
    #[arg(long)]
    sigma: Vec<PathBuf>,
    /// Function CSVs (one per input slot).
    #[arg(long)]
    field: Vec<PathBuf>,
    /// Fractional order for the fractional kind.
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    /// Cube family: standard, all-grids, mesh-aligned, or shifted:<desc>.
    #[arg(long, default_value = "standard")]
    cube_set: String,
    /// Write the resulting mesh field to this CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConstantArgs {
    /// Class kind: ap, a1, a-inf-fw, a-inf-exp, doubling, m, k, s-alpha,
    /// l-alpha, a-alpha, a-tilde-alpha, b-alpha, or w.
    #[arg(long)]
    kind: String,
    /// Exponent for `ap`.
    #[arg(long)]
    p: Option<f64>,
    /// Fractional order for the alpha kinds.
    #[arg(long)]
    alpha: Option<f64>,
    /// Weight CSV for the single-weight kinds.
    #[arg(long)]
    weight: Option<PathBuf>,
    /// Input weight CSVs for the pair kinds (one per slot).
    #[arg(long)]
    sigma: Vec<PathBuf>,
    /// Target weight CSV for the pair kinds.
    #[arg(long)]
    omega: Option<PathBuf>,
    /// Growth descriptors, one per sigma (default power:p=2).
    #[arg(long)]
    phi: Vec<String>,
    /// Target growth descriptor (default power:p=2).
    #[arg(long, default_value = "power:p=2")]
    psi: String,
    /// Cube family to take the supremum over.
    #[arg(long, default_value = "standard")]
    cube_set: String,
}

#[derive(Args)]
struct CarlesonArgs {
    /// Sequence file: one `cube-descriptor,value` line per cube.
    #[arg(long)]
    sequence: PathBuf,
    /// Reference weight CSV (the measure whose reciprocal feeds theta).
    #[arg(long)]
    nu: PathBuf,
    /// Target growth descriptor; theta = psi ∘ phi⁻¹.
    #[arg(long, default_value = "power:p=2")]
    psi: String,
    /// Source growth descriptor; theta = psi ∘ phi⁻¹.
    #[arg(long, default_value = "power:p=2")]
    phi: String,
}

#[derive(Args)]
struct ExperimentArgs {
    /// INI config file with [experiment], [growth], [fields], [output].
    #[arg(long)]
    config: Option<PathBuf>,
    /// Inequality to exercise (overrides the config).
    #[arg(long)]
    theorem: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    level: Option<u32>,
    /// Output directory (overrides the config and LUXLAB_OUT_DIR).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Report format: json or csv.
    #[arg(long)]
    format: Option<String>,
    /// Report file name.
    #[arg(long)]
    report: Option<String>,
    /// Extra overrides as `section.key=value`, repeatable.
    #[arg(long = "set")]
    sets: Vec<String>,
}

#[derive(Args)]
struct ReportArgs {
    /// Report file to check.
    #[arg(long)]
    validate: PathBuf,
    /// Expected format; inferred from the extension when omitted.
    #[arg(long)]
    format: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        // A second build_global in one process is harmless: the first pool
        // wins and the experiment stays deterministic either way.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<u8> {
    match command {
        Command::Classify(args) => cmd_classify(args),
        Command::Norm(args) => cmd_norm(args),
        Command::Maximal(args) => cmd_maximal(args),
        Command::Constant(args) => cmd_constant(args),
        Command::Carleson(args) => cmd_carleson(args),
        Command::Experiment(args) => cmd_experiment(args),
        Command::Report(args) => cmd_report(args),
    }
}

fn parse_property(text: &str) -> Result<GrowthProperty> {
    let t = text.trim().to_ascii_lowercase();
    let with_q = |rest: &str, build: fn(f64) -> GrowthProperty| {
        rest.strip_prefix("q=")
            .and_then(|v| v.parse::<f64>().ok())
            .map(build)
            .ok_or_else(|| Error::Usage(format!("property `{text}` needs `:q=<number>`")))
    };
    match t.as_str() {
        "delta2" => Ok(GrowthProperty::Delta2),
        "delta-prime" => Ok(GrowthProperty::DeltaPrime),
        "nabla2" => Ok(GrowthProperty::Nabla2),
        "quotient-bound" => Ok(GrowthProperty::QuotientBound),
        "ratio-monotone" => Ok(GrowthProperty::RatioMonotone),
        other => {
            if let Some(rest) = other.strip_prefix("upper-type:") {
                with_q(rest, GrowthProperty::UpperType)
            } else if let Some(rest) = other.strip_prefix("u-tilde:") {
                with_q(rest, GrowthProperty::UTilde)
            } else {
                Err(Error::Usage(format!(
                    "unknown property `{text}`; expected delta2, delta-prime, \
                     nabla2, upper-type:q=<q>, u-tilde:q=<q>, quotient-bound, \
                     or ratio-monotone"
                )))
            }
        }
    }
}

fn cmd_classify(args: ClassifyArgs) -> Result<u8> {
    let phi = GrowthFunction::from_descriptor(&args.function)?;
    let property = parse_property(&args.property)?;
    let aux = match &args.aux {
        Some(desc) => Some(GrowthFunction::from_descriptor(desc)?),
        None => None,
    };
    let grid = log_spaced(args.lo, args.hi, args.points);
    if grid.is_empty() {
        return Err(Error::Usage(
            "audit grid needs 0 < lo < hi and at least 2 points".into(),
        ));
    }
    let report = classify(&phi, property, &grid, aux.as_ref())?;
    println!("function: {}", phi.descriptor());
    println!("property: {}", args.property.trim());
    println!("estimate: {}", report.estimate);
    println!("verdict: {}", report.verdict);
    Ok(0)
}

fn load_field(path: &Path) -> Result<MeshField> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Usage(format!("cannot read {}: {e}", path.display())))?;
    MeshField::from_csv(&text)
}

fn lebesgue_like(field: &MeshField) -> Result<MeshField> {
    make_field(
        &field.window,
        field.resolution,
        FieldKind::Weight,
        &FieldGenerator::Constant(1.0),
    )
}

fn cmd_norm(args: NormArgs) -> Result<u8> {
    let phi = GrowthFunction::from_descriptor(&args.function)?;
    let field = load_field(&args.field)?;
    let weight = match &args.weight {
        Some(path) => load_field(path)?,
        None => lebesgue_like(&field)?,
    };
    let result = luxemburg_norm(&phi, &field, &weight, args.tol)?;
    println!("norm = {}", result.value);
    println!(
        "iterations = {}, residual = {:e}",
        result.iterations, result.residual
    );
    Ok(0)
}

fn load_fields(paths: &[PathBuf]) -> Result<Vec<MeshField>> {
    paths.iter().map(|p| load_field(p)).collect()
}

fn cmd_maximal(args: MaximalArgs) -> Result<u8> {
    if args.field.is_empty() {
        return Err(Error::Usage("--field is required at least once".into()));
    }
    let fields = load_fields(&args.field)?;
    let window = fields[0].window.clone();
    let cube_set = parse_cube_set(&args.cube_set, window.d())?;
    let f_refs: Vec<&MeshField> = fields.iter().collect();
    let result: MaximalResult = match args.kind.trim() {
        "weighted" => {
            let sigmas = load_fields(&args.sigma)?;
            let s_refs: Vec<&MeshField> = sigmas.iter().collect();
            multilinear_weighted_maximal(&s_refs, &f_refs, &cube_set, &window)?
        }
        "fractional" => {
            fractional_multilinear_maximal(&f_refs, args.alpha, &cube_set, &window)?
        }
        "log" => {
            if fields.len() != 1 {
                return Err(Error::Usage(
                    "the log kind takes exactly one --field".into(),
                ));
            }
            log_maximal(&fields[0], &cube_set, &window)?
        }
        other => {
            return Err(Error::Usage(format!(
                "unknown maximal kind `{other}`; expected weighted, fractional, or log"
            )));
        }
    };
    let sup = result
        .field
        .values()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    println!("sup = {sup}");
    println!("cells = {}", result.field.cell_count());
    if let Some(out) = &args.out {
        std::fs::write(out, result.field.to_csv())?;
        println!("wrote {}", out.display());
    }
    Ok(0)
}

fn cmd_constant(args: ConstantArgs) -> Result<u8> {
    let kind = ClassKind::parse(args.kind.trim(), args.p, args.alpha)?;
    let single = matches!(
        kind,
        ClassKind::Ap(_)
            | ClassKind::A1
            | ClassKind::AInfFw
            | ClassKind::AInfExp
            | ClassKind::Doubling
    );
    let constant = if single {
        let path = args.weight.as_ref().ok_or_else(|| {
            Error::Usage(format!("kind `{}` needs --weight <csv>", args.kind))
        })?;
        let weight = load_field(path)?;
        let window = weight.window.clone();
        let cube_set = parse_cube_set(&args.cube_set, window.d())?;
        muckenhoupt_constant(kind, &weight, &cube_set, &window)?
    } else {
        if args.sigma.is_empty() {
            return Err(Error::Usage(format!(
                "kind `{}` needs --sigma <csv> (repeatable)",
                args.kind
            )));
        }
        let sigmas = load_fields(&args.sigma)?;
        let window = sigmas[0].window.clone();
        let cube_set = parse_cube_set(&args.cube_set, window.d())?;
        let mut phis = Vec::with_capacity(sigmas.len());
        for i in 0..sigmas.len() {
            let desc = args.phi.get(i).map(String::as_str).unwrap_or("power:p=2");
            phis.push(GrowthFunction::from_descriptor(desc)?);
        }
        let psi = GrowthFunction::from_descriptor(&args.psi)?;
        let ws = WeightSystem::new(sigmas, phis)?;
        if kind == ClassKind::W {
            w_class_constant(&ws, &psi, &cube_set, &window)?
        } else {
            let omega_path = args.omega.as_ref().ok_or_else(|| {
                Error::Usage(format!("kind `{}` needs --omega <csv>", args.kind))
            })?;
            let omega = load_field(omega_path)?;
            pair_class_constant(kind, &ws, &omega, &psi, &cube_set, &window)?
        }
    };
    println!("{}", constant.json_row());
    Ok(0)
}

fn cmd_carleson(args: CarlesonArgs) -> Result<u8> {
    let text = std::fs::read_to_string(&args.sequence)
        .map_err(|e| Error::Usage(format!("cannot read {}: {e}", args.sequence.display())))?;
    let seq = CarlesonSequence::from_text(&text)?;
    let nu = load_field(&args.nu)?;
    let psi = GrowthFunction::from_descriptor(&args.psi)?;
    let phi = GrowthFunction::from_descriptor(&args.phi)?;
    let theta = GrowthFunction::of_inverse(psi, phi);
    let window = nu.window.clone();
    let result = carleson_constant(&seq, &nu, &theta, &window)?;
    println!("constant = {}", result.value);
    match &result.argmax {
        Some(cube) => println!("argmax = {}", cube.descriptor()),
        None => println!("argmax = none"),
    }
    Ok(0)
}

fn apply_override(sections: &mut Sections, section: &str, key: &str, value: String) {
    sections
        .entry(section.to_string())
        .or_default()
        .insert(key.to_string(), value);
}

fn cmd_experiment(args: ExperimentArgs) -> Result<u8> {
    let mut sections: Sections = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Usage(format!("cannot read {}: {e}", path.display())))?;
            parse_ini(&text)?
        }
        None => Sections::new(),
    };
    if let Some(theorem) = &args.theorem {
        apply_override(&mut sections, "experiment", "theorem", theorem.clone());
    }
    if let Some(seed) = args.seed {
        apply_override(&mut sections, "experiment", "seed", seed.to_string());
    }
    if let Some(trials) = args.trials {
        apply_override(&mut sections, "experiment", "trials", trials.to_string());
    }
    if let Some(level) = args.level {
        apply_override(&mut sections, "experiment", "level", level.to_string());
    }
    if let Some(dir) = &args.out_dir {
        apply_override(&mut sections, "output", "dir", dir.display().to_string());
    }
    if let Some(format) = &args.format {
        apply_override(&mut sections, "output", "format", format.clone());
    }
    if let Some(report) = &args.report {
        apply_override(&mut sections, "output", "report", report.clone());
    }
    for set in &args.sets {
        let (lhs, value) = set.split_once('=').ok_or_else(|| {
            Error::Usage(format!("--set needs `section.key=value`, got `{set}`"))
        })?;
        let (section, key) = lhs.split_once('.').ok_or_else(|| {
            Error::Usage(format!("--set needs `section.key=value`, got `{set}`"))
        })?;
        apply_override(&mut sections, section.trim(), key.trim(), value.trim().into());
    }
    let cfg = ExperimentConfig::from_sections(&sections)?;
    let report = run_experiment(&cfg)?;

    std::fs::create_dir_all(&cfg.out_dir)?;
    let path = cfg.report_path();
    write_report(&report, cfg.format, &path)?;

    println!("theorem: {}", report.theorem_id);
    println!(
        "trials: {} at level {} (refined at level {})",
        report.trials.len(),
        report.summary.refinement.coarse_level,
        report.summary.refinement.fine_level
    );
    println!(
        "max ratio: {:e}   median ratio: {:e}",
        report.summary.max_ratio, report.summary.median_ratio
    );
    if let Some(floor) = report.summary.min_lower_ratio {
        println!("indicator floor: {floor:e}");
    }
    println!(
        "refinement factor: {:.6} ({})",
        report.summary.refinement.factor,
        if report.summary.refinement.flagged {
            "flagged"
        } else {
            "stable"
        }
    );
    println!("verdict: {}", report.verdict);
    println!("report: {}", path.display());
    Ok(if report.is_bounded() { 0 } else { 1 })
}

fn cmd_report(args: ReportArgs) -> Result<u8> {
    let format = match &args.format {
        Some(text) => ReportFormat::parse(text)?,
        None => match args.validate.extension().and_then(|e| e.to_str()) {
            Some("json") => ReportFormat::Json,
            Some("csv") => ReportFormat::Csv,
            other => {
                return Err(Error::Usage(format!(
                    "cannot infer the format from extension {other:?}; pass --format"
                )));
            }
        },
    };
    let text = std::fs::read_to_string(&args.validate)
        .map_err(|e| Error::Usage(format!("cannot read {}: {e}", args.validate.display())))?;
    let rows = validate_report(&text, format)?;
    println!(
        "valid {} report: {} trial record(s)",
        format.extension(),
        rows
    );
    Ok(0)
}
