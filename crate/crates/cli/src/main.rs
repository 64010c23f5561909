//! `treecalc`: reproducible experiments on cable systems and tree-like
//! fractals. Every subcommand writes one artifact and a JSON manifest next to
//! it; `run --config` replays a manifest's `config` block.

mod commands;
mod error;
mod inputs;
mod output;
mod parse;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};
use crate::inputs::Context;
use crate::output::{input_hash, json_bytes, manifest_path, write_atomic};
use crate::parse::{FunctionSpec, Grid, PointSpec, SetSpec};

/// Directory for cached spectral decompositions.
pub const CACHE_ENV: &str = "TREECALC_CACHE_DIR";

#[derive(Parser, Debug)]
#[command(name = "treecalc", version, about = "Calculus, energies and heat kernels on metric trees")]
struct Cli {
    /// Worker threads for internal parallelism; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize, Debug)]
#[serde(tag = "command", content = "args", rename_all = "kebab-case")]
enum Command {
    /// Generate a space and its measure.
    Build(BuildArgs),
    /// Ball volumes over a radius grid and the fitted volume profile.
    Volume(VolumeArgs),
    /// Korevaar–Schoen energy E_{p,Ψ_p}(f, r) over a radius grid.
    Ks(KsArgs),
    /// Besov energy E_{p,α}(f, r), or the heat-kernel functional N_p(f, t).
    Besov(BesovArgs),
    /// Largest α for which E_{p,α}(f, ·) stays bounded.
    Critical(CriticalArgs),
    /// Partition-of-unity clauses at sampled points.
    PouCheck(PouArgs),
    /// Total variation of a set indicator by ramp relaxation.
    Bv(BvArgs),
    /// K-functional bracket between L^p and W^{1,p}.
    Kfunc(KfuncArgs),
    /// Nash ratio of one or more functions.
    Nash(NashArgs),
    /// Heat kernel values p_t(x, y), optionally with the off-diagonal fit.
    HeatKernel(HeatKernelArgs),
    /// On-diagonal decay t ↦ p_t(x, x).
    HeatProfile(HeatProfileArgs),
    /// Heat mass escaping balls B(x, r).
    Escape(EscapeArgs),
    /// Expected exit times from balls.
    ExitTime(ExitTimeArgs),
    /// Semigroup gradient bounds, or the kernel gradient bound at a point.
    GradBound(GradArgs),
    /// Lipschitz regularity of harmonic functions with random boundary data.
    HarmonicLip(HarmonicArgs),
    /// Gnuplot script plotting CSV artifacts.
    GnuplotScript(GnuplotArgs),
    /// Run a JSON config (a manifest's `config` block works as is).
    Run(RunArgs),
}

#[derive(Args, Serialize, Debug)]
#[serde(rename_all = "kebab-case")]
struct SpaceArgs {
    /// Space file written by `build`.
    #[arg(long)]
    space: PathBuf,
    /// Measure file written by `build`; the length measure when omitted.
    #[arg(long)]
    measure: Option<PathBuf>,
}

#[derive(Args, Serialize, Debug)]
#[serde(rename_all = "kebab-case")]
struct ProfileArg {
    /// Volume profile: a `volume` JSON report or a bare profile. Defaults to
    /// the profile stored in the space file.
    #[arg(long)]
    profile: Option<PathBuf>,
}

#[derive(Args, Serialize, Debug)]
#[serde(rename_all = "kebab-case")]
struct FunctionArgs {
    /// Test function, e.g. `linear`, `distance:@0.5,0.5`, `random:7`,
    /// `ramp:subtree:0:4:0.01`.
    #[arg(long, conflicts_with = "f_file")]
    f: Option<FunctionSpec>,
    /// Function file with values keyed by vertex label.
    #[arg(long)]
    f_file: Option<PathBuf>,
}

#[derive(Args, Serialize, Debug)]
#[serde(rename_all = "kebab-case")]
struct HeatArgs {
    /// Largest edge length of the assembly mesh; the space as given when omitted.
    #[arg(long)]
    h: Option<f64>,
    /// Modes kept by the partial eigensolver.
    #[arg(long)]
    modes: Option<usize>,
    /// Degrees of freedom above which the partial eigensolver is used.
    #[arg(long)]
    dense_limit: Option<usize>,
    /// Give massless vertices this fraction of the mean mass instead of
    /// condensing them.
    #[arg(long)]
    mass_floor: Option<f64>,
}

#[derive(ValueEnum, Serialize, Clone, Copy, Debug)]
#[serde(rename_all = "kebab-case")]
enum Kind {
    Interval,
    Star,
    RandomTree,
    UniformCable,
    Vicsek,
    VicsekIrregular,
    SierpinskiCable,
}

#[derive(Args, Serialize, Debug)]
#[serde(rename_all = "kebab-case")]
struct BuildArgs {
    #[arg(long)]
    kind: Kind,
    /// Interval length, or arm length of a star.
    #[arg(long, default_value_t = 1.0)]
    length: f64,
    #[arg(long, default_value_t = 3)]
    arms: usize,
    /// Vertex count of a random tree.
    #[arg(long, default_value_t = 32)]
    vertices: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Branching of a uniform cable tree (first entry), or the subdivision
    /// sequence of an irregular Vicsek set.
    #[arg(long, num_args = 1.., default_values_t = [2u32])]
    branching: Vec<u32>,
    #[arg(long, default_value_t = 4)]
    depth: usize,
    #[arg(long, default_value_t = 1.0)]
    edge_length: f64,
    #[arg(long, default_value_t = 3)]
    level: u32,
    /// Refuse to build spaces with more vertices than this.
    #[arg(long)]
    max_vertices: Option<usize>,
    /// Output paths of the space and the measure.
    #[arg(long, num_args = 2, value_names = ["SPACE", "MEASURE"], required = true)]
    out: Vec<PathBuf>,
}

#[derive(Args, Serialize, Debug)]
#[serde(rename_all = "kebab-case")]
struct VolumeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    space: SpaceArgs,
    #[arg(long)]
    rgrid: Grid,
    /// Number of random ball centres.
    #[arg(long, default_value_t = 32)]
    centers: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Flag a violation when C/c exceeds this.
    #[arg(long, default_value_t = 50.0)]
    ratio_bound: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize, Debug)]
#[serde(rename_all = "kebab-case")]
struct KsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    space: SpaceArgs,
    #[command(flatten)]
    #[serde(flatten)]
    profile: ProfileArg,
    #[command(flatten)]
    #[serde(flatten)]
    f: FunctionArgs,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long)]
    rgrid: Grid,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize, Debug)]
#[serde(rename_all = "kebab-case")]
struct BesovArgs {
    #[command(flatten)]
    #[serde(flatten)]
    space: SpaceArgs,
    #[command(flatten)]
    #[serde(flatten)]
    profile: ProfileArg,
    #[command(flatten)]
    #[serde(flatten)]
    f: FunctionArgs,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    /// Smoothness exponent; defaults to the critical α_p of the profile.
    #[arg(long)]
    alpha: Option<f64>,
    /// Radii for E_{p,α}.
    #[arg(long, required_unless_present = "heat")]
    rgrid: Option<Grid>,
    /// Use the heat-kernel functional N_p over `--tgrid` instead.
    #[arg(long, requires = "tgrid")]
    heat: bool,
    #[arg(long)]
    tgrid: Option<Grid>,
    #[command(flatten)]
    #[serde(flatten)]
    assembly: HeatArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize, Debug)]
#[serde(rename_all = "kebab-case")]
struct CriticalArgs {
    #[command(flatten)]
    #[serde(flatten)]
    space: SpaceArgs,
    #[command(flatten)]
    #[serde(flatten)]
    f: FunctionArgs,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long)]
    agrid: Grid,
    #[arg(long)]
    rgrid: Grid,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize, Debug)]
#[serde(rename_all = "kebab-case")]
struct PouArgs {
    #[command(flatten)]
    #[serde(flatten)]
    space: SpaceArgs,
    /// Scales ε.
    #[arg(long, num_args = 1.., required = true)]
    eps: Vec<f64>,
    /// Exponents of the scaled member energies.
    #[arg(long, num_args = 1.., default_values_t = [1.0, 2.0])]
    p: Vec<f64>,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize, Debug)]
#[serde(rename_all = "kebab-case")]
struct BvArgs {
    #[command(flatten)]
    #[serde(flatten)]
    space: SpaceArgs,
    /// `segment:A:B`, `subtree:ROOT:TOWARD` or `whole`.
    #[arg(long)]
    set: SetSpec,
    /// Ramp widths.
    #[arg(long)]
    widths: Grid,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize, Debug)]
#[serde(rename_all = "kebab-case")]
struct KfuncArgs {
    #[command(flatten)]
    #[serde(flatten)]
    space: SpaceArgs,
    #[command(flatten)]
    #[serde(flatten)]
    profile: ProfileArg,
    #[command(flatten)]
    #[serde(flatten)]
    f: FunctionArgs,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long)]
    tgrid: Grid,
    /// Discrete-convolution scales tried for the splitting.
    #[arg(long)]
    eps_grid: Grid,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize, Debug)]
#[serde(rename_all = "kebab-case")]
struct NashArgs {
    #[command(flatten)]
    #[serde(flatten)]
    space: SpaceArgs,
    #[command(flatten)]
    #[serde(flatten)]
    profile: ProfileArg,
    #[arg(long, num_args = 1.., required = true)]
    f: Vec<FunctionSpec>,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize, Debug)]
#[serde(rename_all = "kebab-case")]
struct HeatKernelArgs {
    #[command(flatten)]
    #[serde(flatten)]
    space: SpaceArgs,
    #[command(flatten)]
    #[serde(flatten)]
    profile: ProfileArg,
    #[command(flatten)]
    #[serde(flatten)]
    assembly: HeatArgs,
    /// Source point of the explicit pairs.
    #[arg(long, requires = "y")]
    x: Option<PointSpec>,
    /// Targets paired with `--x`.
    #[arg(long, num_args = 1.., requires = "x")]
    y: Vec<PointSpec>,
    /// Additional random pairs of degrees of freedom at distance <= r₀/2.
    #[arg(long, default_value_t = 0)]
    random_pairs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    tgrid: Grid,
    /// Regress the normalized kernel against the sub-Gaussian abscissa.
    #[arg(long)]
    fit: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize, Debug)]
#[serde(rename_all = "kebab-case")]
struct HeatProfileArgs {
    #[command(flatten)]
    #[serde(flatten)]
    space: SpaceArgs,
    #[command(flatten)]
    #[serde(flatten)]
    profile: ProfileArg,
    #[command(flatten)]
    #[serde(flatten)]
    assembly: HeatArgs,
    #[arg(long)]
    x: PointSpec,
    #[arg(long)]
    tgrid: Grid,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize, Debug)]
#[serde(rename_all = "kebab-case")]
struct EscapeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    space: SpaceArgs,
    #[command(flatten)]
    #[serde(flatten)]
    profile: ProfileArg,
    #[command(flatten)]
    #[serde(flatten)]
    assembly: HeatArgs,
    #[arg(long)]
    x: PointSpec,
    #[arg(long, num_args = 1.., required = true)]
    radii: Vec<f64>,
    #[arg(long)]
    tgrid: Grid,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize, Debug)]
#[serde(rename_all = "kebab-case")]
struct ExitTimeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    space: SpaceArgs,
    #[command(flatten)]
    #[serde(flatten)]
    profile: ProfileArg,
    #[command(flatten)]
    #[serde(flatten)]
    assembly: HeatArgs,
    /// Ball centres.
    #[arg(long, num_args = 1.., required = true)]
    x: Vec<PointSpec>,
    #[arg(long, num_args = 1.., required = true)]
    radii: Vec<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize, Debug)]
#[serde(rename_all = "kebab-case")]
struct GradArgs {
    #[command(flatten)]
    #[serde(flatten)]
    space: SpaceArgs,
    #[command(flatten)]
    #[serde(flatten)]
    profile: ProfileArg,
    #[command(flatten)]
    #[serde(flatten)]
    assembly: HeatArgs,
    #[command(flatten)]
    #[serde(flatten)]
    f: FunctionArgs,
    /// Exponents of the semigroup bound; `inf` is accepted.
    #[arg(long, num_args = 1.., default_values_t = [2.0])]
    p: Vec<f64>,
    /// Bound the kernel gradient y ↦ ∂p_t(x, y) at this point instead.
    #[arg(long, requires = "c2")]
    kernel_at: Option<PointSpec>,
    /// Decay constant C₂ of the off-diagonal fit.
    #[arg(long)]
    c2: Option<f64>,
    #[arg(long)]
    tgrid: Grid,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize, Debug)]
#[serde(rename_all = "kebab-case")]
struct HarmonicArgs {
    #[command(flatten)]
    #[serde(flatten)]
    space: SpaceArgs,
    #[command(flatten)]
    #[serde(flatten)]
    assembly: HeatArgs,
    #[arg(long)]
    x: PointSpec,
    #[arg(long, num_args = 1.., required = true)]
    radii: Vec<f64>,
    /// Ratio A of the Dirichlet ball to the inner ball.
    #[arg(long, default_value_t = 3.0)]
    dilation: f64,
    #[arg(long, default_value_t = 8)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize, Debug)]
#[serde(rename_all = "kebab-case")]
struct GnuplotArgs {
    /// CSV artifacts; each is plotted column by column against its first column.
    #[arg(long, num_args = 1.., required = true)]
    csv: Vec<PathBuf>,
    #[arg(long)]
    logx: bool,
    #[arg(long)]
    logy: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize, Debug)]
#[serde(rename_all = "kebab-case")]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
}

/// Flags reconstructed from a config object `{command, args, threads}`.
fn config_argv(config: &Value) -> CliResult<Vec<OsString>> {
    let bad = |msg: &str| CliError { kind: "input", message: format!("config: {msg}") };
    let obj = config.as_object().ok_or_else(|| bad("expected a JSON object"))?;
    if let Some(key) = obj.keys().find(|k| !["command", "args", "threads"].contains(&k.as_str())) {
        return Err(bad(&format!("unknown key '{key}'")));
    }
    let command = obj.get("command").and_then(Value::as_str).ok_or_else(|| bad("missing string 'command'"))?;
    if command == "run" {
        return Err(bad("a config cannot run another config"));
    }
    let mut argv: Vec<OsString> = vec!["treecalc".into()];
    if let Some(t) = obj.get("threads").filter(|t| !t.is_null()) {
        let t = t.as_u64().ok_or_else(|| bad("'threads' must be a positive integer"))?;
        argv.extend(["--threads".into(), t.to_string().into()]);
    }
    argv.push(command.into());
    let scalar = |v: &Value, key: &str| -> CliResult<OsString> {
        match v {
            Value::String(s) => Ok(s.into()),
            Value::Number(n) => Ok(n.to_string().into()),
            _ => Err(bad(&format!("'{key}' must hold strings, numbers or booleans"))),
        }
    };
    let empty = serde_json::Map::new();
    let args = match obj.get("args") {
        None | Some(Value::Null) => &empty,
        Some(Value::Object(a)) => a,
        Some(_) => return Err(bad("'args' must be an object")),
    };
    for (key, value) in args {
        let flag = OsString::from(format!("--{key}"));
        match value {
            Value::Null | Value::Bool(false) => {}
            Value::Bool(true) => argv.push(flag),
            Value::Array(items) if items.is_empty() => {}
            Value::Array(items) => {
                argv.push(flag);
                for item in items {
                    argv.push(scalar(item, key)?);
                }
            }
            other => argv.extend([flag, scalar(other, key)?]),
        }
    }
    Ok(argv)
}

fn parse(argv: Vec<OsString>) -> CliResult<Cli> {
    Cli::try_parse_from(argv).map_err(|e| {
        use clap::error::ErrorKind::*;
        if matches!(e.kind(), DisplayHelp | DisplayVersion | DisplayHelpOnMissingArgumentOrSubcommand) {
            let _ = e.print();
            std::process::exit(0);
        }
        CliError::usage(e.render().to_string().trim().to_string())
    })
}

fn execute(cli: Cli) -> CliResult<()> {
    let cli = match cli.command {
        Command::Run(run) => {
            let text = std::fs::read(&run.config)?;
            let config: Value = serde_json::from_slice(&text)?;
            let inner = parse(config_argv(&config)?)?;
            Cli { threads: inner.threads.or(cli.threads), command: inner.command }
        }
        _ => cli,
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError { kind: "resource", message: e.to_string() })?;
    }
    let config = serde_json::to_value(&cli.command)?;
    let start = Instant::now();
    let mut ctx = Context::default();
    let produced = commands::dispatch(&cli.command, &mut ctx)?;
    for (path, bytes) in &produced.files {
        write_atomic(path, bytes)?;
    }
    let inputs: Vec<Value> = ctx
        .inputs
        .iter()
        .map(|(path, bytes)| json!({ "path": path, "sha256": output::sha256(bytes) }))
        .collect();
    let manifest = json!({
        "tool": "treecalc",
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "threads": cli.threads,
        "inputs": inputs,
        "input_hash": input_hash(&config, &ctx.inputs)?,
        "outputs": produced.files.iter().map(|(p, _)| p.display().to_string()).collect::<Vec<_>>(),
        "summary": produced.summary,
        "notes": ctx.notes,
        "wall_time_s": start.elapsed().as_secs_f64(),
    });
    if let Some((first, _)) = produced.files.first() {
        write_atomic(&manifest_path(first), &json_bytes(&manifest)?)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    match parse(std::env::args_os().collect()).and_then(execute) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn serialized_commands_parse_back() {
        let argv = [
            "treecalc", "ks", "--space", "s.json", "--f", "distance:@0.5,0.5", "--rgrid", "log:0.01..0.3:8", "--out",
            "c.csv",
        ];
        let cli = Cli::try_parse_from(argv).unwrap();
        let config = serde_json::to_value(&cli.command).unwrap();
        assert_eq!(config["command"], "ks");
        assert_eq!(config["args"]["rgrid"], "log:0.01..0.3:8");
        let again = parse(config_argv(&config).unwrap()).unwrap();
        assert_eq!(serde_json::to_value(&again.command).unwrap(), config);
    }

    #[test]
    fn config_rejects_unknown_keys_and_nesting() {
        assert!(config_argv(&json!({ "command": "ks", "extra": 1 })).is_err());
        assert!(config_argv(&json!({ "command": "run", "args": { "config": "x" } })).is_err());
        assert!(config_argv(&json!({ "args": {} })).is_err());
    }
}
