use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use qpart::bench::{self, BenchSpec, Family, Method};
use qpart::circuit::{parse_circuit_named, Circuit, GenSpec};
use qpart::environment::{CircuitSource, EnvConfig};
use qpart::envserver::{self, TcpServer};
use qpart::partition::{self, fgp_roee, oracle_optimal, FgpParams, DEFAULT_ORACLE_BOUND};
use qpart::policies::run_policy;
use qpart::{Assignment, CoreConfig, Env};

#[derive(Parser)]
#[command(
    name = "qpart",
    version,
    about = "Partition quantum circuits across multi-core architectures"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Place every timeslice of a circuit and report the movement cost.
    Map(MapArgs),
    /// Run a paired benchmark and write bench.csv and bench.json.
    Bench(BenchArgs),
    /// Serve environments over the line-delimited JSON protocol.
    Serve(ServeArgs),
    /// Generate a circuit as gate-list text.
    Gen(GenArgs),
    /// Print the minimum total movement of a small instance.
    Oracle(OracleArgs),
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Input {
    /// Gate-list file.
    #[arg(long)]
    circuit: Option<PathBuf>,
    /// Generator, e.g. `random:16:50:0.5:3`, `qaoa:32:2:3:0` or `cuccaro:15`.
    #[arg(long = "gen")]
    generate: Option<GenSpec>,
}

impl Input {
    fn load(&self) -> Result<Circuit> {
        if let Some(spec) = &self.generate {
            return Ok(spec.generate()?);
        }
        let path = self.circuit.as_ref().expect("clap enforces one input");
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let name = path
            .file_stem()
            .map_or_else(String::new, |s| s.to_string_lossy().into_owned());
        parse_circuit_named(&text, &name).with_context(|| format!("parsing {}", path.display()))
    }
}

#[derive(Args)]
struct MapArgs {
    #[command(flatten)]
    input: Input,
    #[arg(long)]
    cores: usize,
    /// fgp-roee, greedy-hard, greedy-soft, random-hard, random-soft or random-none.
    #[arg(long, default_value = "fgp-roee")]
    method: Method,
    #[arg(long, default_value_t = 0.5)]
    decay: f64,
    /// Lookahead depth in slices; unlimited by default.
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long, env = "QPART_SEED", default_value_t = 0)]
    seed: u64,
    /// Actions per slice for policy methods; defaults to the qubit count.
    #[arg(long)]
    budget: Option<usize>,
    /// Write the trajectory as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct MapOutput<'a> {
    circuit: &'a str,
    num_qubits: usize,
    num_cores: usize,
    method: Method,
    completed: bool,
    assignments: Vec<&'a [usize]>,
    moves_per_step: &'a [usize],
    total_moves: usize,
    avg_moves: f64,
}

fn map(args: MapArgs) -> Result<()> {
    let circuit = args.input.load()?;
    let cores = CoreConfig::new(circuit.num_qubits, args.cores)?;
    let slices = circuit.timeslices();
    let (assignments, moves, total, avg, completed): (
        Vec<Assignment>,
        Vec<usize>,
        usize,
        f64,
        bool,
    ) = match args.method.policy() {
        None if args.method == Method::FgpRoee => {
            let params = FgpParams {
                decay: args.decay,
                horizon: args.horizon,
                seed: args.seed,
                ..FgpParams::default()
            };
            let t = fgp_roee::<f64>(&slices, &cores, &params)?;
            (
                t.assignments,
                t.moves_per_step,
                t.total_moves,
                t.avg_moves,
                true,
            )
        }
        None => bail!("method `{}` cannot map a circuit", args.method),
        Some((kind, mask)) => {
            let mut config = EnvConfig::new(
                CircuitSource::Gates {
                    num_qubits: circuit.num_qubits,
                    gates: circuit.gates.iter().map(|g| (g.a, g.b)).collect(),
                },
                args.cores,
            )
            .with_mask(mask);
            config.budget_per_slice = args.budget;
            config.decay = args.decay;
            config.horizon = args.horizon;
            config.seed = args.seed;
            let mut env = Env::new(config)?;
            let mut policy = kind.build::<f64>(args.seed);
            let trace = run_policy(&mut env, policy.as_mut())?;
            let s = trace.stats;
            (
                trace.committed,
                trace.moves_per_step,
                s.total_moves,
                s.avg_moves,
                s.completed,
            )
        }
    };
    if let Some(path) = &args.out {
        let out = MapOutput {
            circuit: &circuit.name,
            num_qubits: circuit.num_qubits,
            num_cores: args.cores,
            method: args.method,
            completed,
            assignments: assignments.iter().map(Assignment::cores).collect(),
            moves_per_step: &moves,
            total_moves: total,
            avg_moves: avg,
        };
        let mut text = serde_json::to_string_pretty(&out)?;
        text.push('\n');
        write_file(path, text.as_bytes())?;
    }
    if !completed {
        eprintln!(
            "warning: episode truncated after {} of {} slices",
            assignments.len(),
            slices.len()
        );
    }
    println!("{avg}");
    Ok(())
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyName {
    Random,
    Qaoa,
    Cuccaro,
}

#[derive(Args)]
struct BenchArgs {
    /// JSON bench spec; the flags below are ignored when given.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Output directory; overrides the spec's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; all cores by default.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, value_enum, default_value = "random")]
    family: FamilyName,
    #[arg(long, value_delimiter = ',', default_value = "16")]
    qubits: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "4")]
    cores: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "fgp-roee,greedy-hard")]
    methods: Vec<Method>,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    instances: usize,
    #[arg(long, env = "QPART_SEED", default_value_t = 0)]
    seed: u64,
    /// Random family: timeslices per circuit.
    #[arg(long, default_value_t = 50)]
    slices: usize,
    /// Random family: fraction of qubits interacting per slice.
    #[arg(long, default_value_t = 1.0)]
    density: f64,
    /// QAOA family.
    #[arg(long, default_value_t = 2)]
    layers: usize,
    /// QAOA family.
    #[arg(long, default_value_t = 3)]
    degree: usize,
    #[arg(long, default_value_t = 0.5)]
    decay: f64,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    budget: Option<usize>,
    /// Record wall time per run (makes output vary between runs).
    #[arg(long)]
    timing: bool,
    /// CSV with `remote` rows to merge.
    #[arg(long)]
    remote_csv: Option<PathBuf>,
}

impl BenchArgs {
    fn to_spec(&self) -> Result<BenchSpec> {
        if let Some(path) = &self.spec {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            return serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", path.display()));
        }
        let family = match self.family {
            FamilyName::Random => Family::Random {
                slices: self.slices,
                density: self.density,
            },
            FamilyName::Qaoa => Family::Qaoa {
                layers: self.layers,
                degree: self.degree,
            },
            FamilyName::Cuccaro => Family::Cuccaro,
        };
        let mut spec = BenchSpec::new(
            family,
            self.qubits.clone(),
            self.cores.clone(),
            self.methods.clone(),
        );
        spec.trials = self.trials;
        spec.instances = self.instances;
        spec.seed = self.seed;
        spec.decay = self.decay;
        spec.horizon = self.horizon;
        spec.budget_per_slice = self.budget;
        spec.timing = self.timing;
        spec.remote_csv = self.remote_csv.clone();
        if spec.remote_csv.is_some() && !spec.methods.contains(&Method::Remote) {
            spec.methods.push(Method::Remote);
        }
        Ok(spec)
    }
}

fn run_bench(args: BenchArgs) -> Result<()> {
    let spec = args.to_spec()?;
    let Some(dir) = args.out.clone().or_else(|| spec.output.clone()) else {
        bail!("no output directory: pass --out or set `output` in the spec");
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = args.jobs {
        pool = pool.num_threads(jobs);
    }
    let report = pool.build()?.install(|| bench::run_benchmark(&spec))?;
    let (csv, json) = bench::write_report_files(&report, &dir)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    writeln!(
        out,
        "method,qubits,cores,completed/runs,avg_moves_mean,avg_moves_std,mean_ratio"
    )?;
    for s in &report.summaries {
        let (mean, std) = s.avg_moves.map_or((String::new(), String::new()), |m| {
            (format!("{:.4}", m.mean), format!("{:.4}", m.std))
        });
        let ratio = s.mean_ratio.map_or(String::new(), |r| format!("{r:.4}"));
        writeln!(
            out,
            "{},{},{},{}/{},{mean},{std},{ratio}",
            s.method, s.qubits, s.cores, s.completed, s.runs
        )?;
    }
    eprintln!("wrote {} and {}", csv.display(), json.display());
    Ok(())
}

#[derive(Clone, Copy, ValueEnum)]
enum Transport {
    Stdio,
    Tcp,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, value_enum, default_value = "stdio")]
    transport: Transport,
    /// TCP port on 127.0.0.1; 0 picks a free one.
    #[arg(long, default_value_t = 7878)]
    port: u16,
}

fn serve(args: ServeArgs) -> Result<()> {
    match args.transport {
        Transport::Stdio => {
            envserver::serve_stdio()?;
        }
        Transport::Tcp => {
            let server = TcpServer::localhost(args.port)?;
            eprintln!("listening on {}", server.local_addr()?);
            server.run()?;
        }
    }
    Ok(())
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    family: FamilyName,
    #[arg(long)]
    qubits: Option<usize>,
    /// Random family.
    #[arg(long, default_value_t = 50)]
    slices: usize,
    /// Random family.
    #[arg(long, default_value_t = 1.0)]
    density: f64,
    /// QAOA family.
    #[arg(long, default_value_t = 2)]
    layers: usize,
    /// QAOA family.
    #[arg(long, default_value_t = 3)]
    degree: usize,
    /// Cuccaro family: adder width.
    #[arg(long)]
    bits: Option<usize>,
    #[arg(long, env = "QPART_SEED", default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn gen(args: GenArgs) -> Result<()> {
    let qubits = || args.qubits.context("--qubits is required for this family");
    let spec = match args.family {
        FamilyName::Random => GenSpec::Random {
            qubits: qubits()?,
            slices: args.slices,
            density: args.density,
            seed: args.seed,
        },
        FamilyName::Qaoa => GenSpec::Qaoa {
            qubits: qubits()?,
            layers: args.layers,
            degree: args.degree,
            seed: args.seed,
        },
        FamilyName::Cuccaro => GenSpec::Cuccaro {
            bits: args.bits.context("--bits is required for cuccaro")?,
        },
    };
    let text = spec.generate()?.to_text();
    match &args.out {
        Some(path) => write_file(path, text.as_bytes()),
        None => Ok(std::io::stdout().lock().write_all(text.as_bytes())?),
    }
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    input: Input,
    #[arg(long)]
    cores: usize,
    /// Largest number of balanced assignments to enumerate.
    #[arg(long, default_value_t = DEFAULT_ORACLE_BOUND)]
    bound: usize,
}

fn oracle(args: OracleArgs) -> Result<()> {
    let circuit = args.input.load()?;
    let cores = CoreConfig::new(circuit.num_qubits, args.cores)?;
    let t = oracle_optimal(&circuit.timeslices(), &cores, args.bound).map_err(|e| match e {
        partition::PartitionError::InstanceTooLarge { count, bound } => anyhow::anyhow!(
            "instance too large: {count} balanced assignments exceed the bound {bound}"
        ),
        e => e.into(),
    })?;
    println!("{}", t.total_moves);
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors and 0 for --help/--version
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Map(a) => map(a),
        Command::Bench(a) => run_bench(a),
        Command::Serve(a) => serve(a),
        Command::Gen(a) => gen(a),
        Command::Oracle(a) => oracle(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
