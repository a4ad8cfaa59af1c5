//! Batch front end for the library: JSON in, JSON out.
//!
//! Every command is deterministic given its inputs and seed; re-running
//! produces byte-identical output apart from the timestamp field in the
//! envelope.  Exit codes: 0 on success, 2 for usage and domain errors,
//! 3 for internal consistency failures.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use opuc::ensemble::{empirical_vs_eta, ks_report, EnsembleSpec, Sampler};
use opuc::error::{Error, Result};
use opuc::measures::{
    measure_from_json, EtaSpec, MeasureSpec, SingularPoint, TrigPoly, GRID_LOG2_DEFAULT,
};
use opuc::seqcond::{classify, gagliardo_nirenberg_check, Scheme};
use opuc::sumrules::{
    gem_verdict, sum_rule_check, szego_sum_rule, LadderOpts, SumRuleCase, SumRuleReport,
    DEFAULT_BASE,
};
use opuc::tracepoly::expand_trace_ggt;
use opuc::verblunsky::{coeffs_from_measure, measure_from_coeffs, sequence_from_json, CoeffSequence};

#[derive(Parser)]
#[command(
    name = "opuc",
    version,
    about = "Spectral measures on the unit circle: coefficients, sum rules, classifiers, sampling",
    after_help = "Set RAYON_NUM_THREADS to bound worker threads for batch sampling."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Extract recursion coefficients from a measure description.
    Coeffs(CoeffsArgs),
    /// Reconstruct a truncated spectral measure from coefficients.
    Measure(MeasureArgs),
    /// Evaluate both sides of a sum rule on a coefficient sequence.
    Sumrule(SumruleArgs),
    /// Classify each coefficient-side term of a case as finite or divergent.
    Gem(GemArgs),
    /// Run a decay-condition scheme against a singular-point list.
    Classify(ClassifyArgs),
    /// Expand the trace of a matrix power into coefficient monomials.
    TraceExpand(TraceExpandArgs),
    /// Check the discrete interpolation inequality on a finite sequence.
    GnCheck(GnCheckArgs),
    /// Sample random coefficient batches and summarize their statistics.
    Ensemble(EnsembleArgs),
}

#[derive(Args)]
struct CoeffsArgs {
    /// Measure JSON: a density spec, or a singular-point list under
    /// "singular_points".
    input: PathBuf,
    /// Number of coefficients to extract.
    #[arg(long, default_value_t = 32)]
    count: usize,
}

#[derive(Args)]
struct MeasureArgs {
    /// Coefficient sequence JSON.
    input: PathBuf,
    /// Recursion depth for the truncated density.
    #[arg(short = 'n', long, default_value_t = 64)]
    steps: usize,
    /// log2 grid resolution of the reconstructed density.
    #[arg(long, default_value_t = GRID_LOG2_DEFAULT)]
    grid: u32,
}

#[derive(Args)]
struct LadderArgs {
    /// Base truncation length; rungs are base, 2 base, 4 base.
    #[arg(long, default_value_t = DEFAULT_BASE)]
    base: usize,
    /// log2 grid resolution for density reconstruction.
    #[arg(long, default_value_t = GRID_LOG2_DEFAULT)]
    grid: u32,
}

impl LadderArgs {
    fn opts(&self) -> LadderOpts {
        LadderOpts { base: self.base, grid_log2: self.grid }
    }
}

#[derive(Args)]
struct SumruleArgs {
    /// Case id: szego, single_K, roots_K, pair_11, mixed_21.
    #[arg(long)]
    case: String,
    /// Coefficient sequence JSON; optional for szego when --measure is given.
    input: Option<PathBuf>,
    /// Measure JSON to take the entropy side from (szego only).
    #[arg(long)]
    measure: Option<PathBuf>,
    #[command(flatten)]
    ladder: LadderArgs,
    /// Print the truncation ladder as CSV instead of the JSON report.
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct GemArgs {
    /// Case id: szego, single_K, roots_K, pair_11, mixed_21.
    #[arg(long)]
    case: String,
    /// Coefficient sequence JSON.
    input: PathBuf,
    #[command(flatten)]
    ladder: LadderArgs,
    /// Print per-term ladder partials as CSV instead of the JSON report.
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct ClassifyArgs {
    /// Coefficient sequence JSON.
    sequence: PathBuf,
    /// Singular-point list JSON: [{"theta": T, "m": M}, ...].
    points: PathBuf,
    /// uniform | decomposed | leave-one-out | reduced | relaxed.
    #[arg(long, default_value = "uniform")]
    scheme: String,
}

#[derive(Args)]
struct TraceExpandArgs {
    /// Trace power q >= 1.
    #[arg(short = 'q', long = "power")]
    power: usize,
}

#[derive(Args)]
struct GnCheckArgs {
    /// Coefficient sequence JSON (finite support required).
    input: PathBuf,
}

#[derive(Args)]
struct EnsembleArgs {
    /// Optional spec JSON with n / draws / seed / potential / sampler fields.
    spec: Option<PathBuf>,
    /// Matrix size.
    #[arg(long = "N", visible_alias = "matrix-size")]
    n: Option<usize>,
    /// Number of draws.
    #[arg(long)]
    draws: Option<usize>,
    /// RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Tilt potential JSON, inline or @file: {"cosine": [r1, ...]} or
    /// {"coeffs": [c_{-d}, ..., c_d]}.
    #[arg(long)]
    potential: Option<String>,
    /// cue | tilted; defaults to cue, or tilted when a potential is given.
    #[arg(long)]
    sampler: Option<String>,
    /// Singular-point list JSON for a binned distance report.
    #[arg(long)]
    eta: Option<PathBuf>,
    /// Bin count for the distance report.
    #[arg(long, default_value_t = 16)]
    bins: usize,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli.cmd) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Coeffs(a) => cmd_coeffs(a),
        Cmd::Measure(a) => cmd_measure(a),
        Cmd::Sumrule(a) => cmd_sumrule(a),
        Cmd::Gem(a) => cmd_gem(a),
        Cmd::Classify(a) => cmd_classify(a),
        Cmd::TraceExpand(a) => cmd_trace_expand(a),
        Cmd::GnCheck(a) => cmd_gn_check(a),
        Cmd::Ensemble(a) => cmd_ensemble(a),
    }
}

/// Write to stdout, exiting quietly when the reader closed the pipe.
fn print_out(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout();
    if out.write_all(text.as_bytes()).and_then(|_| out.flush()).is_err() {
        std::process::exit(0);
    }
}

/// Wrap a payload in the common envelope and print it.  Keys are emitted
/// in sorted order, so output is reproducible apart from the timestamp.
fn emit(command: &str, payload: Value) {
    let out = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "timestamp": chrono::Utc::now().to_rfc3339(),
        "command": command,
        "result": payload,
    });
    let text = serde_json::to_string_pretty(&out).expect("serializable output");
    print_out(&text);
    print_out("\n");
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// A sequence file holds either a full coefficient-sequence object or a
/// reference to a named closed form: {"closed_form": "zero"}.
fn read_sequence(path: &Path) -> Result<CoeffSequence> {
    sequence_from_json(&read_json(path)?)
}

/// A measure file holds either a density spec or a singular-point list
/// in the "singular_points" key.
fn read_measure(path: &Path) -> Result<MeasureSpec> {
    measure_from_json(&read_json(path)?)
}

fn read_points(path: &Path) -> Result<Vec<SingularPoint>> {
    let v = read_json(path)?;
    Ok(serde_json::from_value(v)?)
}

fn cmd_coeffs(a: CoeffsArgs) -> Result<()> {
    let mu = read_measure(&a.input)?;
    let ex = coeffs_from_measure(&mu, a.count)?;
    emit(
        "coeffs",
        json!({
            "coefficients": ex.seq.to_json(),
            "conditioning_warning": ex.conditioning_warning,
            "norms": ex.norms,
        }),
    );
    Ok(())
}

fn cmd_measure(a: MeasureArgs) -> Result<()> {
    let seq = read_sequence(&a.input)?;
    // Exact finitely supported measure when the sequence terminates inside
    // the window, reciprocal-square density otherwise.
    let mu = match seq.len() {
        Some(len) if len <= a.steps => measure_from_coeffs(&seq, len)?,
        _ => opuc::verblunsky::truncated_density_of(&seq, a.steps, a.grid)?,
    };
    emit(
        "measure",
        json!({
            "measure": serde_json::to_value(&mu)?,
            "steps": a.steps,
        }),
    );
    Ok(())
}

fn ext_csv(x: &opuc::measures::ExtReal) -> String {
    match x.finite() {
        Some(v) => format!("{v:.12e}"),
        None => "inf".to_string(),
    }
}

fn ladder_csv(report: &SumRuleReport) -> String {
    let mut out = String::from("n,measure_side,coeff_total\n");
    for rung in &report.ladder {
        out.push_str(&format!(
            "{},{},{}\n",
            rung.n,
            ext_csv(&rung.measure_side),
            ext_csv(&rung.coeff_total)
        ));
    }
    out
}

fn cmd_sumrule(a: SumruleArgs) -> Result<()> {
    let case = SumRuleCase::by_id(&a.case)?;
    let opts = a.ladder.opts();
    let report = match (&a.input, &a.measure) {
        (Some(path), None) => sum_rule_check(&case, &read_sequence(path)?, &opts)?,
        (seq_path, Some(mu_path)) => {
            if case.id() != "szego" {
                return Err(Error::domain("only the szego case accepts a measure input"));
            }
            let seq = seq_path.as_deref().map(read_sequence).transpose()?;
            let mu = read_measure(mu_path)?;
            szego_sum_rule(seq.as_ref(), Some(&mu), &opts)?
        }
        (None, None) => {
            return Err(Error::domain("need a sequence file or --measure"));
        }
    };
    if a.csv {
        print_out(&ladder_csv(&report));
    } else {
        emit("sumrule", report.to_json());
    }
    Ok(())
}

fn cmd_gem(a: GemArgs) -> Result<()> {
    let case = SumRuleCase::by_id(&a.case)?;
    let seq = read_sequence(&a.input)?;
    let report = gem_verdict(&case, &seq, &a.ladder.opts())?;
    if a.csv {
        let mut out = String::from("n");
        for term in &report.terms {
            out.push(',');
            out.push_str(&term.name);
        }
        out.push('\n');
        for (i, n) in report.rungs.iter().enumerate() {
            out.push_str(&n.to_string());
            for term in &report.terms {
                out.push(',');
                out.push_str(&ext_csv(&term.partials[i]));
            }
            out.push('\n');
        }
        print_out(&out);
    } else {
        emit("gem", serde_json::to_value(&report)?);
    }
    Ok(())
}

fn cmd_classify(a: ClassifyArgs) -> Result<()> {
    let scheme: Scheme = a.scheme.parse()?;
    let seq = read_sequence(&a.sequence)?;
    let points = read_points(&a.points)?;
    let report = classify(&seq, &points, scheme)?;
    emit("classify", report.to_json());
    Ok(())
}

fn cmd_trace_expand(a: TraceExpandArgs) -> Result<()> {
    let decomp = expand_trace_ggt(a.power)?;
    emit("trace-expand", decomp.to_json());
    Ok(())
}

fn cmd_gn_check(a: GnCheckArgs) -> Result<()> {
    let seq = read_sequence(&a.input)?;
    let report = gagliardo_nirenberg_check(&seq)?;
    emit("gn-check", serde_json::to_value(&report)?);
    Ok(())
}

/// Inline potential JSON, or @path to read it from a file.
fn potential_from_arg(arg: &str) -> Result<TrigPoly> {
    let text = match arg.strip_prefix('@') {
        Some(path) => fs::read_to_string(path)?,
        None => arg.to_string(),
    };
    let v: Value = serde_json::from_str(&text)?;
    TrigPoly::from_json(&v)
}

fn cmd_ensemble(a: EnsembleArgs) -> Result<()> {
    let spec_json = a.spec.as_deref().map(read_json).transpose()?;
    let field = |name: &str| spec_json.as_ref().and_then(|s| s.get(name)).cloned();

    let n = match (a.n, field("n")) {
        (Some(n), _) => n,
        (None, Some(v)) => serde_json::from_value(v)?,
        (None, None) => 8,
    };
    let draws = match (a.draws, field("draws")) {
        (Some(m), _) => m,
        (None, Some(v)) => serde_json::from_value(v)?,
        (None, None) => 100,
    };
    let seed = match (a.seed, field("seed")) {
        (Some(s), _) => s,
        (None, Some(v)) => serde_json::from_value(v)?,
        (None, None) => 0,
    };
    let potential = match (&a.potential, field("potential")) {
        (Some(arg), _) => Some(potential_from_arg(arg)?),
        (None, Some(v)) if !v.is_null() => Some(TrigPoly::from_json(&v)?),
        _ => None,
    };
    let sampler_name = match (&a.sampler, field("sampler")) {
        (Some(s), _) => Some(s.clone()),
        (None, Some(v)) => Some(serde_json::from_value::<String>(v)?),
        (None, None) => None,
    };
    let sampler = match sampler_name {
        Some(name) => name.parse::<Sampler>()?,
        None if potential.is_some() => Sampler::ImportanceTilted,
        None => Sampler::DirectCue,
    };

    let spec = EnsembleSpec {
        n,
        potential: potential.unwrap_or_else(|| TrigPoly::constant(0.0)),
        sampler,
        seed,
    };
    let batch = spec.sample(draws)?;

    let mut payload = json!({
        "summary": serde_json::to_value(batch.summary())?,
        "ks": serde_json::to_value(ks_report(&batch))?,
    });
    if let Some(eta_path) = &a.eta {
        let eta = EtaSpec::from_json(&read_json(eta_path)?)?;
        let dist = empirical_vs_eta(&batch, &eta, a.bins)?;
        payload["distance"] = serde_json::to_value(&dist)?;
    }
    emit("ensemble", payload);
    Ok(())
}
