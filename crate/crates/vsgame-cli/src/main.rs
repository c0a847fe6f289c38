//! `vsgame` — voltage-stability security-investment analysis CLI.
//!
//! Subcommands: `delta`, `limits`, `rank`, `solve`, `sweep`, `oracle`.
//! Exit codes: 0 success, 1 assertion/verification failure, 2 input error,
//! 3 resource cap exceeded.

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use vsgame::case_model::{parse_matpower_case, parse_native_case, validate_case, PowerSystemCase};
use vsgame::game::{ActionVector, GameError, GameSpec};
use vsgame::solver::{
    audit_monotonicity, cost_sweep, enumerate_all_ses, importance_ranking, min_cost_best_response,
    best_response_set, select_subset, solve_cbse_with, Equilibrium, Execution, SweepResult,
    COST_TOL, VALUE_TOL,
};
use vsgame::stability::{
    covert_limit, verify_voltage_range, CovertOptions, PowerFlowOptions, StabilityModel,
};

const ENV_CASE_DIR: &str = "VSGAME_CASE_DIR";
const SCHEMA_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// Error type carrying the exit-code contract
// ---------------------------------------------------------------------------

enum CliError {
    /// Bad input (missing file, parse failure, invalid parameter) — exit 2.
    Input(String),
    /// A verification or assertion failed — exit 1.
    Verify(String),
    /// Enumeration/resource cap exceeded — exit 3.
    Cap(String),
}

type CliResult<T> = Result<T, CliError>;

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Verify(_) => 1,
            CliError::Input(_) => 2,
            CliError::Cap(_) => 3,
        }
    }
    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Verify(m) | CliError::Cap(m) => m,
        }
    }
}

fn input<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Input(e.to_string())
}

fn game_err(e: GameError) -> CliError {
    match e {
        GameError::ActionSpaceCap { .. } => CliError::Cap(format!(
            "{e}; reduce the load set with --subset N or lower the level counts"
        )),
        GameError::PairCap { .. } => CliError::Cap(e.to_string()),
        GameError::InvalidSpec(_) => CliError::Input(e.to_string()),
    }
}

// ---------------------------------------------------------------------------
// Command line
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "vsgame",
    version,
    about = "Voltage instability index and cost-based Stackelberg security-investment games"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CaseFormat {
    Auto,
    Native,
    Matpower,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Emit {
    Csv,
    Json,
    Both,
}

#[derive(Args)]
struct CaseArgs {
    /// Case file (JSON or MATPOWER-style). Relative paths are also tried
    /// under $VSGAME_CASE_DIR.
    #[arg(long)]
    case: PathBuf,
    /// Input format; `auto` keys off the file extension (.m = matpower).
    #[arg(long, value_enum, default_value = "auto")]
    format: CaseFormat,
}

#[derive(Args)]
struct BandArgs {
    /// Lower voltage-band override, pu (default: per-bus v_min).
    #[arg(long)]
    vmin: Option<f64>,
    /// Upper voltage-band override, pu (default: per-bus v_max).
    #[arg(long)]
    vmax: Option<f64>,
    /// Covert-limit bisection tolerance, pu.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
}

#[derive(Args)]
struct OutputArgs {
    /// Output path stem; artifacts are written as <out>.csv / <out>.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Which artifacts to write when --out is given.
    #[arg(long, value_enum, default_value = "both")]
    emit: Emit,
}

#[derive(Args)]
struct GameArgs {
    /// Attacker unit cost gamma_a.
    #[arg(long = "gamma-a")]
    gamma_a: Option<f64>,
    /// Defender unit cost gamma_d.
    #[arg(long = "gamma-d")]
    gamma_d: Option<f64>,
    /// Attacker investment levels L_a (grid 0, 1/(L-1), ..., 1).
    #[arg(long = "levels-a")]
    levels_a: Option<usize>,
    /// Defender investment levels L_d.
    #[arg(long = "levels-d")]
    levels_d: Option<usize>,
    /// Restrict the game to the union of each player's top-N loads.
    #[arg(long)]
    subset: Option<usize>,
    /// Per-load compensation cap, pu.
    #[arg(long = "qd-max")]
    qd_max: Option<f64>,
    /// Worker threads (1 = sequential).
    #[arg(long)]
    jobs: Option<usize>,
    /// JSON config file supplying defaults for any omitted game flag.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Nominal voltage instability index and stiffness diagnostics.
    Delta {
        #[command(flatten)]
        case: CaseArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Per-load covert attack limits (cached to a sidecar file).
    Limits {
        #[command(flatten)]
        case: CaseArgs,
        #[command(flatten)]
        band: BandArgs,
        #[command(flatten)]
        output: OutputArgs,
        /// Verify that deploying this compensation everywhere stays in band.
        #[arg(long = "qd-max")]
        qd_max: Option<f64>,
        /// Ignore the sidecar cache and recompute.
        #[arg(long)]
        no_cache: bool,
    },
    /// Importance ranking of loads for both players.
    Rank {
        #[command(flatten)]
        case: CaseArgs,
        #[command(flatten)]
        band: BandArgs,
        #[command(flatten)]
        output: OutputArgs,
        /// Defender probe magnitude, pu.
        #[arg(long = "qd-probe", default_value_t = 0.8)]
        qd_probe: f64,
    },
    /// Solve one cost-based Stackelberg equilibrium.
    Solve {
        #[command(flatten)]
        case: CaseArgs,
        #[command(flatten)]
        band: BandArgs,
        #[command(flatten)]
        game: GameArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// CBSE surface over a (gamma_a, gamma_d) grid.
    Sweep {
        #[command(flatten)]
        case: CaseArgs,
        #[command(flatten)]
        band: BandArgs,
        #[command(flatten)]
        game: GameArgs,
        #[command(flatten)]
        output: OutputArgs,
        /// Attacker cost grid as lo:hi:step.
        #[arg(long = "grid-a", default_value = "0.05:1.0:0.05")]
        grid_a: String,
        /// Defender cost grid as lo:hi:step.
        #[arg(long = "grid-d", default_value = "0.05:1.0:0.05")]
        grid_d: String,
    },
    /// Exhaustive Stackelberg-equilibrium verification on a small instance.
    Oracle {
        #[command(flatten)]
        case: CaseArgs,
        #[command(flatten)]
        band: BandArgs,
        #[command(flatten)]
        game: GameArgs,
        /// Deliberately corrupt the solved equilibrium (negative-test mode).
        #[arg(long, hide = true)]
        inject_corrupt: bool,
    },
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

fn resolve_case_path(path: &Path) -> CliResult<PathBuf> {
    if path.exists() {
        return Ok(path.to_path_buf());
    }
    if path.is_relative() {
        if let Ok(dir) = std::env::var(ENV_CASE_DIR) {
            let candidate = Path::new(&dir).join(path);
            if candidate.exists() {
                return Ok(candidate);
            }
        }
    }
    Err(CliError::Input(format!(
        "case file not found: {}",
        path.display()
    )))
}

struct LoadedCase {
    case: PowerSystemCase,
    path: PathBuf,
    sha256: String,
}

fn load_case(args: &CaseArgs) -> CliResult<LoadedCase> {
    let path = resolve_case_path(&args.case)?;
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let format = match args.format {
        CaseFormat::Auto => {
            if path.extension().is_some_and(|e| e == "m") {
                CaseFormat::Matpower
            } else {
                CaseFormat::Native
            }
        }
        f => f,
    };
    let case = match format {
        CaseFormat::Matpower => parse_matpower_case(&text).map_err(input)?,
        _ => parse_native_case(&text).map_err(input)?,
    };
    let report = validate_case(&case);
    if !report.is_valid() {
        return Err(CliError::Input(format!(
            "case validation failed: {}",
            report.violations.join("; ")
        )));
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let sha256 = format!("{:x}", Sha256::digest(text.as_bytes()));
    Ok(LoadedCase { case, path, sha256 })
}

fn covert_options(band: &BandArgs) -> CovertOptions {
    CovertOptions {
        v_min: band.vmin,
        v_max: band.vmax,
        tol: band.tol,
        ..CovertOptions::default()
    }
}

/// Sidecar cache for covert limits, keyed by case hash, band, and tolerance.
#[derive(Serialize, Deserialize, PartialEq)]
struct LimitsCache {
    schema_version: u32,
    case_sha256: String,
    v_min: Option<f64>,
    v_max: Option<f64>,
    tol: f64,
    limits: Vec<f64>,
}

fn sidecar_path(case_path: &Path) -> PathBuf {
    let mut name = case_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "case".into());
    name.push_str(".limits.json");
    case_path.with_file_name(name)
}

fn compute_limits(
    loaded: &LoadedCase,
    band: &BandArgs,
    use_cache: bool,
) -> CliResult<Vec<f64>> {
    let sidecar = sidecar_path(&loaded.path);
    if use_cache {
        if let Ok(text) = fs::read_to_string(&sidecar) {
            if let Ok(cache) = serde_json::from_str::<LimitsCache>(&text) {
                if cache.schema_version == SCHEMA_VERSION
                    && cache.case_sha256 == loaded.sha256
                    && cache.v_min == band.vmin
                    && cache.v_max == band.vmax
                    && cache.tol == band.tol
                    && cache.limits.len() == loaded.case.n_loads()
                {
                    return Ok(cache.limits);
                }
            }
        }
    }
    let opts = covert_options(band);
    let limits: Vec<f64> = (0..loaded.case.n_loads())
        .map(|k| covert_limit(&loaded.case, k, &opts))
        .collect::<Result<_, _>>()
        .map_err(input)?;
    let cache = LimitsCache {
        schema_version: SCHEMA_VERSION,
        case_sha256: loaded.sha256.clone(),
        v_min: band.vmin,
        v_max: band.vmax,
        tol: band.tol,
        limits: limits.clone(),
    };
    // cache write failures are non-fatal (read-only data directories)
    let _ = fs::write(&sidecar, serde_json::to_string_pretty(&cache).unwrap());
    Ok(limits)
}

/// Provenance block embedded in every JSON artifact.
#[derive(Serialize)]
struct Provenance {
    tool: &'static str,
    version: &'static str,
    schema_version: u32,
    case_path: String,
    case_sha256: String,
    value_tol: f64,
    cost_tol: f64,
    bisection_tol: f64,
    power_flow_tol: f64,
}

fn provenance(loaded: &LoadedCase, band: &BandArgs) -> Provenance {
    Provenance {
        tool: "vsgame",
        version: env!("CARGO_PKG_VERSION"),
        schema_version: SCHEMA_VERSION,
        case_path: loaded.path.display().to_string(),
        case_sha256: loaded.sha256.clone(),
        value_tol: VALUE_TOL,
        cost_tol: COST_TOL,
        bisection_tol: band.tol,
        power_flow_tol: PowerFlowOptions::default().tol,
    }
}

fn write_artifact(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::Input(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    fs::write(path, contents)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

fn emit_json(output: &OutputArgs, value: &serde_json::Value) -> CliResult<()> {
    if let Some(out) = &output.out {
        if matches!(output.emit, Emit::Json | Emit::Both) {
            let mut text = serde_json::to_string_pretty(value).unwrap();
            text.push('\n');
            write_artifact(&out.with_extension("json"), &text)?;
        }
    }
    Ok(())
}

fn emit_csv(output: &OutputArgs, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    if let Some(out) = &output.out {
        if matches!(output.emit, Emit::Csv | Emit::Both) {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(header).map_err(input)?;
            for row in rows {
                w.write_record(row).map_err(input)?;
            }
            let bytes = w.into_inner().map_err(input)?;
            write_artifact(&out.with_extension("csv"), &String::from_utf8(bytes).unwrap())?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Game-spec assembly (flags + optional config file)
// ---------------------------------------------------------------------------

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    gamma_a: Option<f64>,
    gamma_d: Option<f64>,
    levels_a: Option<usize>,
    levels_d: Option<usize>,
    subset: Option<usize>,
    qd_max: Option<f64>,
    jobs: Option<usize>,
}

struct GameParams {
    gamma_a: f64,
    gamma_d: f64,
    levels_a: usize,
    levels_d: usize,
    subset: Option<usize>,
    qd_max: f64,
    execution: Execution,
}

fn game_params(args: &GameArgs) -> CliResult<GameParams> {
    let file: FileConfig = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Input(format!("bad config {}: {e}", path.display())))?
        }
        None => FileConfig::default(),
    };
    let jobs = args.jobs.or(file.jobs);
    let execution = match jobs {
        Some(0) => return Err(CliError::Input("--jobs must be at least 1".into())),
        Some(1) => Execution::Sequential,
        Some(_n) => {
            #[cfg(feature = "parallel")]
            {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(_n)
                    .build_global();
            }
            Execution::default()
        }
        None => Execution::default(),
    };
    let params = GameParams {
        gamma_a: args.gamma_a.or(file.gamma_a).unwrap_or(0.1),
        gamma_d: args.gamma_d.or(file.gamma_d).unwrap_or(0.1),
        levels_a: args.levels_a.or(file.levels_a).unwrap_or(3),
        levels_d: args.levels_d.or(file.levels_d).unwrap_or(3),
        subset: args.subset.or(file.subset),
        qd_max: args.qd_max.or(file.qd_max).unwrap_or(2.0),
        execution,
    };
    if !(params.gamma_a > 0.0 && params.gamma_d > 0.0) {
        return Err(CliError::Input("gamma-a and gamma-d must be positive".into()));
    }
    if params.levels_a < 2 || params.levels_d < 2 {
        return Err(CliError::Input("levels must be at least 2".into()));
    }
    if params.qd_max < 0.0 {
        return Err(CliError::Input("qd-max must be nonnegative".into()));
    }
    Ok(params)
}

struct PreparedGame {
    model: StabilityModel,
    /// Indices into the model's load vector, ascending.
    subset: Vec<usize>,
    qa_sub: Vec<f64>,
}

fn prepare_game(
    loaded: &LoadedCase,
    band: &BandArgs,
    params: &GameParams,
) -> CliResult<PreparedGame> {
    let model = StabilityModel::from_case(&loaded.case).map_err(input)?;
    let limits = compute_limits(loaded, band, true)?;
    let subset: Vec<usize> = match params.subset {
        Some(n) => {
            let ranking = importance_ranking(&model, &limits, 0.8);
            select_subset(&ranking, n)
        }
        None => (0..model.n_loads()).collect(),
    };
    let qa_sub: Vec<f64> = subset.iter().map(|&i| limits[i]).collect();
    Ok(PreparedGame {
        model,
        subset,
        qa_sub,
    })
}

fn action_json(model: &StabilityModel, subset: &[usize], a: &ActionVector) -> serde_json::Value {
    serde_json::json!({
        "numerators": a.numerators,
        "denominator": a.denom,
        "levels": a.levels(),
        "l1_cost": a.l1(),
        "bus_ids": subset.iter().map(|&i| model.load_ids[i]).collect::<Vec<_>>(),
    })
}

fn equilibrium_json(
    model: &StabilityModel,
    subset: &[usize],
    eq: &Equilibrium,
) -> serde_json::Value {
    serde_json::json!({
        "attacker": action_json(model, subset, &eq.attacker_action),
        "defender": action_json(model, subset, &eq.defender_action),
        "attacker_utility": eq.attacker_utility,
        "post_attack_delta_max": eq.post_attack_delta_max,
        "attacker_cost": eq.attacker_cost,
        "defender_cost": eq.defender_cost,
        "defender_candidates": eq.defender_candidates,
    })
}

fn print_equilibrium(model: &StabilityModel, subset: &[usize], eq: &Equilibrium) {
    let buses: Vec<String> = subset
        .iter()
        .map(|&i| model.load_ids[i].to_string())
        .collect();
    println!("loads (bus ids):     {}", buses.join(" "));
    println!(
        "attacker action:     {}  (cost {:.4})",
        eq.attacker_action.numerator_string(),
        eq.attacker_cost
    );
    println!(
        "defender action:     {}  (cost {:.4})",
        eq.defender_action.numerator_string(),
        eq.defender_cost
    );
    println!("attacker utility:    {:.10}", eq.attacker_utility);
    println!("post-attack delta:   {:.10}", eq.post_attack_delta_max);
}

fn parse_grid(text: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(CliError::Input(format!(
            "grid must be lo:hi:step, got '{text}'"
        )));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Input(format!("bad grid '{text}': {e}")))?;
    let (lo, hi, step) = (nums[0], nums[1], nums[2]);
    if !(lo > 0.0 && hi >= lo && step > 0.0) {
        return Err(CliError::Input(format!(
            "grid '{text}' must satisfy 0 < lo <= hi, step > 0"
        )));
    }
    let mut grid = Vec::new();
    let mut i = 0u32;
    loop {
        let v = lo + f64::from(i) * step;
        if v > hi + 1e-9 {
            break;
        }
        grid.push(v);
        i += 1;
    }
    Ok(grid)
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn cmd_delta(case: &CaseArgs, output: &OutputArgs) -> CliResult<()> {
    let loaded = load_case(case)?;
    let model = StabilityModel::from_case(&loaded.case).map_err(input)?;
    let (delta0, argmax) = model.delta(&model.q_nominal);
    let cond = model.q_crit.as_ref().map(|q| {
        let svd = q.clone().svd(false, false);
        let max = svd.singular_values.max();
        let min = svd.singular_values.min();
        max / min
    });
    println!("case:                {}", loaded.case.name);
    println!("loads / generators:  {} / {}", model.n_loads(), model.v_gen.len());
    println!("delta0:              {delta0:.10}");
    println!("stability margin:    {:.10}", 1.0 - delta0);
    println!("most stressed load:  bus {}", model.load_ids[argmax]);
    if let Some(c) = cond {
        println!("Q_crit condition:    {c:.3e}");
    }
    let mut voltages = String::new();
    for (i, v) in model.v_open.iter().enumerate() {
        let _ = write!(voltages, "{}:{v:.6} ", model.load_ids[i]);
    }
    println!("open-circuit V_L*:   {}", voltages.trim_end());
    let band = BandArgs {
        vmin: None,
        vmax: None,
        tol: 1e-4,
    };
    let artifact = serde_json::json!({
        "provenance": provenance(&loaded, &band),
        "command": "delta",
        "delta0": delta0,
        "stability_margin": 1.0 - delta0,
        "most_stressed_bus": model.load_ids[argmax],
        "q_crit_condition": cond,
        "load_bus_ids": model.load_ids,
        "open_circuit_voltages": model.v_open,
    });
    emit_json(output, &artifact)?;
    let rows: Vec<Vec<String>> = model
        .load_ids
        .iter()
        .zip(&model.v_open)
        .map(|(id, v)| vec![id.to_string(), format!("{v:.10}")])
        .collect();
    emit_csv(output, &["bus_id", "v_open"], &rows)
}

fn cmd_limits(
    case: &CaseArgs,
    band: &BandArgs,
    output: &OutputArgs,
    qd_max: Option<f64>,
    no_cache: bool,
) -> CliResult<()> {
    let loaded = load_case(case)?;
    let model = StabilityModel::from_case(&loaded.case).map_err(input)?;
    let limits = compute_limits(&loaded, band, !no_cache)?;
    println!("per-load covert limits (pu):");
    for (i, q) in limits.iter().enumerate() {
        println!("  bus {:>3}: {q:.4}", model.load_ids[i]);
    }
    let mut verification = serde_json::Value::Null;
    let mut verify_failure: Option<String> = None;
    if let Some(qd) = qd_max {
        let comp = vec![qd; model.n_loads()];
        let (ok, worst) = verify_voltage_range(&loaded.case, &comp, PowerFlowOptions::default());
        match &worst {
            Some(w) => {
                println!(
                    "qd_max = {qd} verification: {} (worst bus {} at {:.4} pu, margin {:+.4})",
                    if ok { "in band" } else { "OUT OF BAND" },
                    w.bus_id,
                    w.v,
                    w.margin
                );
                verification = serde_json::json!({
                    "qd_max": qd,
                    "in_band": ok,
                    "worst_bus": w.bus_id,
                    "voltage": w.v,
                    "margin": w.margin,
                });
                if !ok {
                    verify_failure = Some(format!(
                        "full deployment of qd_max = {qd} leaves bus {} at {:.4} pu (out of band)",
                        w.bus_id, w.v
                    ));
                }
            }
            None => {
                println!("qd_max = {qd} verification: power flow diverged");
                verification = serde_json::json!({
                    "qd_max": qd,
                    "in_band": false,
                    "diverged": true,
                });
                verify_failure = Some(format!(
                    "power flow diverged with qd_max = {qd} deployed at every load"
                ));
            }
        }
    }
    let artifact = serde_json::json!({
        "provenance": provenance(&loaded, band),
        "command": "limits",
        "band": { "v_min": band.vmin, "v_max": band.vmax },
        "load_bus_ids": model.load_ids,
        "limits": limits,
        "qd_verification": verification,
    });
    emit_json(output, &artifact)?;
    let rows: Vec<Vec<String>> = model
        .load_ids
        .iter()
        .zip(&limits)
        .map(|(id, q)| vec![id.to_string(), format!("{q:.10}")])
        .collect();
    emit_csv(output, &["bus_id", "qa_max"], &rows)?;
    match verify_failure {
        Some(msg) => Err(CliError::Verify(msg)),
        None => Ok(()),
    }
}

fn cmd_rank(
    case: &CaseArgs,
    band: &BandArgs,
    output: &OutputArgs,
    qd_probe: f64,
) -> CliResult<()> {
    if qd_probe <= 0.0 {
        return Err(CliError::Input("qd-probe must be positive".into()));
    }
    let loaded = load_case(case)?;
    let model = StabilityModel::from_case(&loaded.case).map_err(input)?;
    let limits = compute_limits(&loaded, band, true)?;
    let r = importance_ranking(&model, &limits, qd_probe);
    let k = model.n_loads();
    // rank[i] = 1-based rank of load i in the given order
    let ranks = |order: &[usize]| -> Vec<usize> {
        let mut out = vec![0; k];
        for (pos, &i) in order.iter().enumerate() {
            out[i] = pos + 1;
        }
        out
    };
    let att_rank = ranks(&r.attacker_order);
    let def_rank = ranks(&r.defender_order);
    println!("bus   attacker score  rank   defender score  rank");
    for i in 0..k {
        println!(
            "{:>4}      {:>10.4}  {:>4}       {:>10.4}  {:>4}",
            model.load_ids[i], r.attacker_scores[i], att_rank[i], r.defender_scores[i], def_rank[i]
        );
    }
    let order_ids = |order: &[usize]| -> Vec<u32> {
        order.iter().map(|&i| model.load_ids[i]).collect()
    };
    println!(
        "attacker order: {}",
        order_ids(&r.attacker_order)
            .iter()
            .map(u32::to_string)
            .collect::<Vec<_>>()
            .join(" > ")
    );
    println!(
        "defender order: {}",
        order_ids(&r.defender_order)
            .iter()
            .map(u32::to_string)
            .collect::<Vec<_>>()
            .join(" > ")
    );
    let artifact = serde_json::json!({
        "provenance": provenance(&loaded, band),
        "command": "rank",
        "qd_probe": qd_probe,
        "load_bus_ids": model.load_ids,
        "attacker_scores": r.attacker_scores,
        "defender_scores": r.defender_scores,
        "attacker_order_bus_ids": order_ids(&r.attacker_order),
        "defender_order_bus_ids": order_ids(&r.defender_order),
    });
    emit_json(output, &artifact)?;
    let rows: Vec<Vec<String>> = (0..k)
        .map(|i| {
            vec![
                model.load_ids[i].to_string(),
                format!("{:.10}", r.attacker_scores[i]),
                att_rank[i].to_string(),
                format!("{:.10}", r.defender_scores[i]),
                def_rank[i].to_string(),
            ]
        })
        .collect();
    emit_csv(
        output,
        &["bus_id", "attacker_score", "attacker_rank", "defender_score", "defender_rank"],
        &rows,
    )
}

fn cmd_solve(
    case: &CaseArgs,
    band: &BandArgs,
    game: &GameArgs,
    output: &OutputArgs,
) -> CliResult<()> {
    let loaded = load_case(case)?;
    let params = game_params(game)?;
    let prep = prepare_game(&loaded, band, &params)?;
    let spec = GameSpec::new(
        &prep.model,
        prep.subset.clone(),
        params.gamma_a,
        params.gamma_d,
        params.levels_a,
        params.levels_d,
        prep.qa_sub.clone(),
        vec![params.qd_max; prep.subset.len()],
    )
    .map_err(game_err)?;
    let eq = solve_cbse_with(&spec, params.execution).map_err(game_err)?;
    println!(
        "CBSE at gamma_a = {}, gamma_d = {}, L_a = {}, L_d = {}",
        params.gamma_a, params.gamma_d, params.levels_a, params.levels_d
    );
    print_equilibrium(&prep.model, &prep.subset, &eq);
    let artifact = serde_json::json!({
        "provenance": provenance(&loaded, band),
        "command": "solve",
        "config": {
            "gamma_a": params.gamma_a,
            "gamma_d": params.gamma_d,
            "levels_a": params.levels_a,
            "levels_d": params.levels_d,
            "qd_max": params.qd_max,
            "subset_bus_ids": prep.subset.iter().map(|&i| prep.model.load_ids[i]).collect::<Vec<_>>(),
            "qa_max": prep.qa_sub,
        },
        "delta0": prep.model.delta0,
        "equilibrium": equilibrium_json(&prep.model, &prep.subset, &eq),
    });
    emit_json(output, &artifact)?;
    let row = sweep_row(&SweepRowInput {
        gamma_a: params.gamma_a,
        gamma_d: params.gamma_d,
        levels_a: params.levels_a,
        levels_d: params.levels_d,
        eq: Some(&eq),
    });
    emit_csv(output, SWEEP_HEADER, &[row])
}

const SWEEP_HEADER: &[&str] = &[
    "gamma_a",
    "gamma_d",
    "L_a",
    "L_d",
    "u_attacker",
    "delta_max",
    "attacker_cost",
    "defender_cost",
    "a_levels",
    "d_levels",
];

struct SweepRowInput<'a> {
    gamma_a: f64,
    gamma_d: f64,
    levels_a: usize,
    levels_d: usize,
    eq: Option<&'a Equilibrium>,
}

fn sweep_row(input: &SweepRowInput) -> Vec<String> {
    let mut row = vec![
        format!("{}", input.gamma_a),
        format!("{}", input.gamma_d),
        input.levels_a.to_string(),
        input.levels_d.to_string(),
    ];
    match input.eq {
        Some(eq) => row.extend([
            format!("{:.12}", eq.attacker_utility),
            format!("{:.12}", eq.post_attack_delta_max),
            format!("{:.6}", eq.attacker_cost),
            format!("{:.6}", eq.defender_cost),
            eq.attacker_action.numerator_string(),
            eq.defender_action.numerator_string(),
        ]),
        None => row.extend(["", "", "", "", "", ""].map(String::from)),
    }
    row
}

fn cmd_sweep(
    case: &CaseArgs,
    band: &BandArgs,
    game: &GameArgs,
    output: &OutputArgs,
    grid_a: &str,
    grid_d: &str,
) -> CliResult<()> {
    let loaded = load_case(case)?;
    let params = game_params(game)?;
    let prep = prepare_game(&loaded, band, &params)?;
    let ga_grid = parse_grid(grid_a)?;
    let gd_grid = parse_grid(grid_d)?;
    let template = GameSpec::new(
        &prep.model,
        prep.subset.clone(),
        ga_grid[0],
        gd_grid[0],
        params.levels_a,
        params.levels_d,
        prep.qa_sub.clone(),
        vec![params.qd_max; prep.subset.len()],
    )
    .map_err(game_err)?;
    let sweep: SweepResult = cost_sweep(
        &template,
        &ga_grid,
        &gd_grid,
        &loaded.case.name,
        params.execution,
    );
    let mut rows = Vec::with_capacity(sweep.cells.len());
    let mut failed = 0usize;
    for cell in &sweep.cells {
        rows.push(sweep_row(&SweepRowInput {
            gamma_a: cell.gamma_a,
            gamma_d: cell.gamma_d,
            levels_a: cell.levels_a,
            levels_d: cell.levels_d,
            eq: cell.outcome.as_ref().ok(),
        }));
        if cell.outcome.is_err() {
            failed += 1;
        }
    }
    let audit = audit_monotonicity(&sweep);
    println!(
        "sweep: {} x {} cells solved ({failed} failed cells)",
        ga_grid.len(),
        gd_grid.len()
    );
    match &audit {
        Ok(()) => println!("monotonicity audit:  pass"),
        Err(e) => println!("monotonicity audit:  FAIL — {e}"),
    }
    let cells_json: Vec<serde_json::Value> = sweep
        .cells
        .iter()
        .map(|cell| match &cell.outcome {
            Ok(eq) => serde_json::json!({
                "gamma_a": cell.gamma_a,
                "gamma_d": cell.gamma_d,
                "equilibrium": equilibrium_json(&prep.model, &prep.subset, eq),
            }),
            Err(msg) => serde_json::json!({
                "gamma_a": cell.gamma_a,
                "gamma_d": cell.gamma_d,
                "error": msg,
            }),
        })
        .collect();
    let artifact = serde_json::json!({
        "provenance": provenance(&loaded, band),
        "command": "sweep",
        "config": {
            "levels_a": params.levels_a,
            "levels_d": params.levels_d,
            "qd_max": params.qd_max,
            "subset_bus_ids": prep.subset.iter().map(|&i| prep.model.load_ids[i]).collect::<Vec<_>>(),
            "gamma_a_grid": sweep.gamma_a_grid,
            "gamma_d_grid": sweep.gamma_d_grid,
        },
        "delta0": prep.model.delta0,
        "cells": cells_json,
        "failed_cells": failed,
        "monotonicity_audit": match &audit {
            Ok(()) => serde_json::json!("pass"),
            Err(e) => serde_json::json!({ "violation": e }),
        },
    });
    emit_json(output, &artifact)?;
    emit_csv(output, SWEEP_HEADER, &rows)?;
    match audit {
        Ok(()) => Ok(()),
        Err(e) => Err(CliError::Verify(format!("monotonicity audit failed: {e}"))),
    }
}

fn cmd_oracle(
    case: &CaseArgs,
    band: &BandArgs,
    game: &GameArgs,
    inject_corrupt: bool,
) -> CliResult<()> {
    let loaded = load_case(case)?;
    let params = game_params(game)?;
    let prep = prepare_game(&loaded, band, &params)?;
    let spec = GameSpec::new(
        &prep.model,
        prep.subset.clone(),
        params.gamma_a,
        params.gamma_d,
        params.levels_a,
        params.levels_d,
        prep.qa_sub.clone(),
        vec![params.qd_max; prep.subset.len()],
    )
    .map_err(game_err)?;
    let ses = enumerate_all_ses(&spec).map_err(game_err)?;
    if ses.is_empty() {
        return Err(CliError::Verify("empty Stackelberg-equilibrium set".into()));
    }
    let mut eq = solve_cbse_with(&spec, params.execution).map_err(game_err)?;
    if inject_corrupt {
        // flip the first defender coordinate to fabricate a wrong equilibrium
        let n = &mut eq.defender_action.numerators[0];
        *n = if *n == 0 { 1 } else { *n - 1 };
    }
    let v0 = ses[0].2;
    for (a, d, v) in &ses {
        if (v - v0).abs() > VALUE_TOL {
            return Err(CliError::Verify(format!(
                "SE payoffs differ: {v0} vs {v} at attacker {} / defender {}",
                a.numerator_string(),
                d.numerator_string()
            )));
        }
    }
    println!("SE set: {} pairs, common payoff {v0:.10}", ses.len());
    if (eq.attacker_utility - v0).abs() > VALUE_TOL {
        return Err(CliError::Verify(format!(
            "CBSE payoff {} differs from SE payoff {v0}",
            eq.attacker_utility
        )));
    }
    if !ses
        .iter()
        .any(|(a, d, _)| *a == eq.attacker_action && *d == eq.defender_action)
    {
        return Err(CliError::Verify(format!(
            "CBSE pair (attacker {} / defender {}) is not in the enumerated SE set",
            eq.attacker_action.numerator_string(),
            eq.defender_action.numerator_string()
        )));
    }
    let min_d = ses
        .iter()
        .map(|(_, d, _)| d.l1())
        .fold(f64::INFINITY, f64::min);
    if eq.defender_action.l1() > min_d + COST_TOL {
        return Err(CliError::Verify(format!(
            "CBSE defender cost {} exceeds the minimal SE defender cost {min_d}",
            eq.defender_action.l1()
        )));
    }
    let min_a = ses
        .iter()
        .filter(|(_, d, _)| d.l1() <= min_d + COST_TOL)
        .map(|(a, _, _)| a.l1())
        .fold(f64::INFINITY, f64::min);
    if eq.attacker_action.l1() > min_a + COST_TOL {
        return Err(CliError::Verify(format!(
            "CBSE attacker cost {} exceeds the minimal induced attacker cost {min_a}",
            eq.attacker_action.l1()
        )));
    }
    // cross-check the per-defender best-response machinery on the CBSE defense
    let brs = best_response_set(&spec, &eq.defender_action).map_err(game_err)?;
    let cheapest = min_cost_best_response(&brs);
    if (brs.best_value - v0).abs() > VALUE_TOL || cheapest.l1() > eq.attacker_action.l1() + COST_TOL
    {
        return Err(CliError::Verify(
            "best-response set disagrees with the CBSE attacker action".into(),
        ));
    }
    println!("oracle verification: pass (CBSE is a minimal-cost SE)");
    print_equilibrium(&prep.model, &prep.subset, &eq);
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match &cli.command {
        Command::Delta { case, output } => cmd_delta(case, output),
        Command::Limits {
            case,
            band,
            output,
            qd_max,
            no_cache,
        } => cmd_limits(case, band, output, *qd_max, *no_cache),
        Command::Rank {
            case,
            band,
            output,
            qd_probe,
        } => cmd_rank(case, band, output, *qd_probe),
        Command::Solve {
            case,
            band,
            game,
            output,
        } => cmd_solve(case, band, game, output),
        Command::Sweep {
            case,
            band,
            game,
            output,
            grid_a,
            grid_d,
        } => cmd_sweep(case, band, game, output, grid_a, grid_d),
        Command::Oracle {
            case,
            band,
            game,
            inject_corrupt,
        } => cmd_oracle(case, band, game, *inject_corrupt),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
