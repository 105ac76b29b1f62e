//! `qudit-ghz`: simulate the heralded GHZ scheme and emit tables.

use std::fs;
use std::io::Write;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};

use qudit_ghz::ghz::{self, identity1_check, identity2_check, psuc_formula, psuc_table, ztl_comparison};
use qudit_ghz::herald::{herald_report, solve_correction};
use qudit_ghz::permanent::conditional_via_permanent;
use qudit_ghz::probe::{probe_with, ProbeOptions};
use qudit_ghz::{build_ghz_circuit, compile_multirail, plan_report, Error, ModeId, MultirailCircuit, Occupation};

/// Largest `dN` the Fock expansion engine accepts.
const EXPAND_LIMIT: usize = 12;
/// Largest `dN` the permanent engine accepts.
const PERMANENT_LIMIT: usize = 16;

#[derive(Parser, Debug)]
#[command(name = "qudit-ghz", version, about = "Heralded linear-optical qudit GHZ simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Number of parties. Lists are accepted by `table`.
    #[arg(long = "N", global = true, value_delimiter = ',')]
    n: Vec<usize>,
    /// Qudit dimension. Lists are accepted by `table` and `compare-ztl`.
    #[arg(long = "d", global = true, value_delimiter = ',')]
    d: Vec<usize>,
    /// Beam-splitter transmissivity; defaults to 1/sqrt(d).
    #[arg(long = "t", global = true)]
    t: Option<f64>,
    /// Photon count for `probe-min`.
    #[arg(long = "M", global = true)]
    m: Option<usize>,
    #[arg(long, global = true, default_value_t = 100)]
    restarts: usize,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Engine::Expand)]
    engine: Engine,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<std::path::PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Herald report for GHZ(N, d) at transmissivity t.
    Simulate {
        /// Simulate a circuit written by `compile-multirail` instead.
        #[arg(long)]
        circuit: Option<std::path::PathBuf>,
    },
    /// Closed-form success probabilities over the given N and d lists.
    Table,
    /// Success probability and fidelity as t varies.
    SweepT {
        #[arg(long, default_value_t = 11)]
        steps: usize,
    },
    /// Against the two-party zero-transmission scheme.
    CompareZtl,
    /// Path-encoded version of the circuit.
    CompileMultirail {
        /// Print the line-oriented netlist instead of JSON.
        #[arg(long)]
        netlist: bool,
    },
    /// Search for heralded GHZ generation with M photons.
    ProbeMin {
        #[arg(long, default_value_t = 120)]
        iterations: usize,
        /// Stop after this many seconds and flag the result as partial.
        #[arg(long)]
        budget_secs: Option<f64>,
    },
    /// Residuals of the two annihilation identities.
    CheckIdentities,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Engine {
    Expand,
    Permanent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

enum Output {
    Json(Value),
    Table(Vec<String>, Vec<Vec<String>>),
    Text(String),
}

#[derive(Debug)]
enum CliError {
    Param(String),
    Capacity(String),
    Io(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Capacity(_) => CliError::Capacity(e.to_string()),
            other => CliError::Param(other.to_string()),
        }
    }
}

/// Probabilities and other reals with 12 significant digits.
fn num(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    format!("{x:.11e}")
}

fn single(list: &[usize], name: &str, default: Option<usize>) -> Result<usize, CliError> {
    match (list, default) {
        ([v], _) => Ok(*v),
        ([], Some(v)) => Ok(v),
        ([], None) => Err(CliError::Param(format!("--{name} is required"))),
        _ => Err(CliError::Param(format!("--{name} takes one value for this command"))),
    }
}

fn check_nd(n: usize, d: usize) -> Result<(), CliError> {
    if n < 2 || d < 2 {
        return Err(CliError::Param(format!("need N >= 2 and d >= 2, got N={n}, d={d}")));
    }
    Ok(())
}

fn transmissivity(cli: &Cli, d: usize) -> Result<f64, CliError> {
    let t = cli.t.unwrap_or(1.0 / (d as f64).sqrt());
    if !(0.0..=1.0).contains(&t) {
        return Err(CliError::Param(format!("--t must lie in [0, 1], got {t}")));
    }
    Ok(t)
}

fn simulate(cli: &Cli, circuit: Option<&std::path::Path>) -> Result<Output, CliError> {
    if let Some(path) = circuit {
        return simulate_file(path);
    }
    let (n, d) = (single(&cli.n, "N", None)?, single(&cli.d, "d", None)?);
    check_nd(n, d)?;
    let t = transmissivity(cli, d)?;
    let header = json!({ "N": n, "d": d, "t": t });
    match cli.engine {
        Engine::Expand => {
            if n * d > EXPAND_LIMIT {
                return Err(CliError::Capacity(format!(
                    "dN = {} exceeds the expansion engine limit of {EXPAND_LIMIT}; try --engine=permanent",
                    n * d
                )));
            }
            let report = plan_report(&build_ghz_circuit(n, d, t)?)?;
            Ok(Output::Json(merge(header, report.to_json(), "expand")))
        }
        Engine::Permanent => {
            if n * d > PERMANENT_LIMIT {
                return Err(CliError::Capacity(format!(
                    "dN = {} exceeds the permanent engine limit of {PERMANENT_LIMIT}",
                    n * d
                )));
            }
            Ok(Output::Json(merge(header, permanent_zero_pattern(n, d, t)?, "permanent")))
        }
    }
}

fn merge(header: Value, body: Value, engine: &str) -> Value {
    let mut out = header;
    out["engine"] = json!(engine);
    if let (Some(o), Value::Object(b)) = (out.as_object_mut(), body) {
        o.extend(b);
    }
    out
}

/// The all-zero herald outcome, from permanents of the flattened circuit.
fn permanent_zero_pattern(n: usize, d: usize, t: f64) -> Result<Value, CliError> {
    let plan = build_ghz_circuit(n, d, t)?;
    let input = plan.initial_state().terms()[0].0.clone();
    let outs: Vec<ModeId> = plan.output_wires.iter().flatten().copied().collect();
    let pattern = vec![0; plan.circuit.detector_groups.len()];
    let cond = conditional_via_permanent(&plan.circuit, &input, &pattern, &outs)?;
    let p_single = cond.norm_sqr();
    let (correction, fid) = solve_correction(&cond.normalized(), &plan.target(None)?, &plan.output_wires)?;
    let amps: Vec<Value> = (0..d)
        .map(|k| {
            let a: Complex64 = cond.amplitude(&Occupation::from_modes(plan.output_wires.iter().map(|w| w[k])));
            json!([a.re, a.im])
        })
        .collect();
    Ok(json!({
        "pattern": pattern,
        "p_single": p_single,
        "eq7_value": psuc_formula(n, d),
        "corrected_fidelity": fid,
        "correction": correction,
        "correlated_amplitudes": amps,
    }))
}

fn simulate_file(path: &std::path::Path) -> Result<Output, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mr: MultirailCircuit =
        serde_json::from_str(&text).map_err(|e| CliError::Param(format!("{}: {e}", path.display())))?;
    mr.circuit.validate()?;
    let (n, d) = (mr.circuit.n, mr.circuit.d);
    check_nd(n, d)?;
    if n * d > EXPAND_LIMIT {
        return Err(CliError::Capacity(format!("dN = {} exceeds the expansion engine limit of {EXPAND_LIMIT}", n * d)));
    }
    let input = mr.lift_state(&ghz::initial_state(n, d)?)?;
    let target = ghz::ghz_target(&mr.circuit.registry, &mr.output_wires, None)?;
    let report = herald_report(&mr.circuit, &input, &mr.output_wires, &target, Some(psuc_formula(n, d)))?;
    Ok(Output::Json(merge(json!({ "N": n, "d": d }), report.to_json(), "expand")))
}

fn table(cli: &Cli) -> Result<Output, CliError> {
    let ds = if cli.d.is_empty() { vec![3, 4, 5] } else { cli.d.clone() };
    let ns = if cli.n.is_empty() { (2..=6).collect() } else { cli.n.clone() };
    let rows = psuc_table(&ds, &ns)?;
    Ok(Output::Table(
        ["N", "d", "photons", "p_suc", "log10_p_suc"].map(String::from).to_vec(),
        rows.iter()
            .map(|r| vec![r.n.to_string(), r.d.to_string(), r.photons.to_string(), num(r.p_suc), num(r.log10_p_suc)])
            .collect(),
    ))
}

fn sweep_t(cli: &Cli, steps: usize) -> Result<Output, CliError> {
    let (n, d) = (single(&cli.n, "N", None)?, single(&cli.d, "d", None)?);
    check_nd(n, d)?;
    if n * d > EXPAND_LIMIT {
        return Err(CliError::Capacity(format!("dN = {} exceeds the expansion engine limit of {EXPAND_LIMIT}", n * d)));
    }
    if steps < 2 {
        return Err(CliError::Param("--steps must be at least 2".into()));
    }
    let mut rows = Vec::with_capacity(steps);
    for i in 0..steps {
        let t = i as f64 / (steps - 1) as f64;
        let report = plan_report(&build_ghz_circuit(n, d, t)?)?;
        let zero = report.outcome(&vec![0; n * (d - 1)]);
        rows.push(vec![
            num(t),
            num(report.p_single),
            num(report.p_aggregate),
            num(report.p_herald),
            num(zero.map_or(0.0, |o| o.corrected_fidelity)),
        ]);
    }
    Ok(Output::Table(
        ["t", "p_single", "p_aggregate", "p_herald", "corrected_fidelity"].map(String::from).to_vec(),
        rows,
    ))
}

fn compare_ztl(cli: &Cli) -> Result<Output, CliError> {
    let n = single(&cli.n, "N", Some(2))?;
    let ds = if cli.d.is_empty() { (2..=8).collect() } else { cli.d.clone() };
    let rows = ztl_comparison(n, &ds)?;
    let opt = |x: Option<f64>| x.map_or(String::new(), num);
    Ok(Output::Table(
        ["d", "ours_photons", "ours_psuc", "ztl_photons", "ztl_psuc_or_cited", "ratio"].map(String::from).to_vec(),
        rows.iter()
            .map(|r| {
                vec![
                    r.d.to_string(),
                    r.ours_photons.to_string(),
                    num(r.ours_psuc),
                    if r.ztl_photons == 0 { String::new() } else { r.ztl_photons.to_string() },
                    opt(r.ztl_psuc_or_cited),
                    opt(r.ratio),
                ]
            })
            .collect(),
    ))
}

fn compile(cli: &Cli, netlist: bool) -> Result<Output, CliError> {
    let (n, d) = (single(&cli.n, "N", None)?, single(&cli.d, "d", None)?);
    check_nd(n, d)?;
    let t = transmissivity(cli, d)?;
    let mr = compile_multirail(&build_ghz_circuit(n, d, t)?)?;
    if netlist {
        return Ok(Output::Text(mr.netlist()));
    }
    Ok(Output::Json(serde_json::to_value(&mr).map_err(|e| CliError::Io(e.to_string()))?))
}

fn probe_min(cli: &Cli, iterations: usize, budget: Option<f64>) -> Result<Output, CliError> {
    let (n, d) = (single(&cli.n, "N", None)?, single(&cli.d, "d", None)?);
    if n < 1 || d < 2 {
        return Err(CliError::Param(format!("need N >= 1 and d >= 2, got N={n}, d={d}")));
    }
    let m = cli.m.unwrap_or(n * d);
    if n * d > 8 {
        return Err(CliError::Capacity(format!("the probe supports dN <= 8, got {}", n * d)));
    }
    let time_budget = match budget {
        Some(s) if s.is_finite() && s >= 0.0 => Some(Duration::from_secs_f64(s)),
        Some(s) => return Err(CliError::Param(format!("--budget-secs must be non-negative, got {s}"))),
        None => None,
    };
    let result = probe_with(n, d, m, cli.restarts, cli.seed, &ProbeOptions { iterations, time_budget })?;
    Ok(Output::Json(serde_json::to_value(&result).map_err(|e| CliError::Io(e.to_string()))?))
}

#[derive(Serialize)]
struct IdentityRow {
    identity: u8,
    d: usize,
    index: usize,
    residual: f64,
}

fn check_identities(cli: &Cli) -> Result<Output, CliError> {
    let max_d = single(&cli.d, "d", Some(6))?;
    if !(2..=8).contains(&max_d) {
        return Err(CliError::Param(format!("--d must lie in [2, 8], got {max_d}")));
    }
    let mut rows = Vec::new();
    for d in 2..=max_d {
        for l in 0..d {
            rows.push(IdentityRow { identity: 1, d, index: l, residual: identity1_check(d, l)? });
        }
        for m in 1..d {
            rows.push(IdentityRow { identity: 2, d, index: m, residual: identity2_check(d, m)?.abs() });
        }
    }
    match cli.format {
        Format::Json => Ok(Output::Json(serde_json::to_value(&rows).map_err(|e| CliError::Io(e.to_string()))?)),
        Format::Csv => Ok(Output::Table(
            ["identity", "d", "index", "residual"].map(String::from).to_vec(),
            rows.iter()
                .map(|r| vec![r.identity.to_string(), r.d.to_string(), r.index.to_string(), num(r.residual)])
                .collect(),
        )),
    }
}

fn render(output: Output, format: Format) -> Result<String, CliError> {
    match output {
        Output::Text(s) => Ok(s),
        Output::Json(v) => Ok(serde_json::to_string_pretty(&v).map_err(|e| CliError::Io(e.to_string()))? + "\n"),
        Output::Table(header, rows) => match format {
            Format::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(&header).map_err(|e| CliError::Io(e.to_string()))?;
                for r in &rows {
                    w.write_record(r).map_err(|e| CliError::Io(e.to_string()))?;
                }
                let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
                String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
            }
            Format::Json => {
                let objs: Vec<Value> = rows
                    .iter()
                    .map(|r| {
                        let fields = header.iter().zip(r).map(|(h, v)| {
                            let val = v.parse::<f64>().map_or_else(|_| json!(v), |x| json!(x));
                            let val = if v.is_empty() { Value::Null } else { val };
                            (h.clone(), val)
                        });
                        Value::Object(fields.collect())
                    })
                    .collect();
                Ok(serde_json::to_string_pretty(&objs).map_err(|e| CliError::Io(e.to_string()))? + "\n")
            }
        },
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let output = match &cli.command {
        Command::Simulate { circuit } => simulate(cli, circuit.as_deref())?,
        Command::Table => table(cli)?,
        Command::SweepT { steps } => sweep_t(cli, *steps)?,
        Command::CompareZtl => compare_ztl(cli)?,
        Command::CompileMultirail { netlist } => compile(cli, *netlist)?,
        Command::ProbeMin { iterations, budget_secs } => probe_min(cli, *iterations, *budget_secs)?,
        Command::CheckIdentities => check_identities(cli)?,
    };
    let text = render(output, cli.format)?;
    match &cli.out {
        Some(path) => fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::Io(e.to_string())),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Param(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Capacity(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
        Err(CliError::Io(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
