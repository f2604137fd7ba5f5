use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde_json::json;

use effseg::metrics::{evaluate_case, MetricsReport, Score, DEFAULT_NSD_TOLERANCE_MM};
use effseg::netdef::{count_flops, count_params, NetKind, NetworkSpec};
use effseg::pipeline::{preprocess, resampled_geometry, run_pipeline, PipelineConfig, SegSummary};
use effseg::voxgrid::{read_volume, write_volume, Volume};
use effseg::weights::{kaiming_init, save_eswt};
use effseg::{Error, Result};

#[derive(Parser)]
#[command(name = "effseg", version, about = "Coarse-to-fine abdominal organ segmentation on CPU")]
struct Cli {
    /// Worker threads for tensor operators (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment a CT volume with the coarse and fine networks.
    Segment(SegmentArgs),
    /// Score a predicted label volume against a reference.
    Evaluate(EvaluateArgs),
    /// Print parameter and FLOP counts of a network.
    Inspect(InspectArgs),
    /// Write deterministic Kaiming-initialized weights.
    InitWeights(InitArgs),
    /// Run reorientation, resampling and normalization and write the result.
    Preprocess(PreprocessArgs),
}

#[derive(Args)]
struct SegmentArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    coarse_weights: PathBuf,
    #[arg(long)]
    fine_weights: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Pipeline configuration JSON; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the run summary JSON here instead of to stdout.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Surface-distance tolerance in millimetres.
    #[arg(long, default_value_t = DEFAULT_NSD_TOLERANCE_MM)]
    nsd_tol: f64,
    /// Write the JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct NetArgs {
    #[arg(long, value_parser = parse_kind)]
    model: NetKind,
    /// Network spec JSON; replaces the built-in architecture.
    #[arg(long, conflicts_with_all = ["base_channels", "levels", "channel_cap"])]
    spec: Option<PathBuf>,
    #[arg(long)]
    base_channels: Option<usize>,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    channel_cap: Option<usize>,
    /// Pipeline configuration JSON supplying the default network knobs.
    #[arg(long, conflicts_with = "spec")]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    #[command(flatten)]
    net: NetArgs,
    #[arg(long, num_args = 3, value_names = ["D", "H", "W"])]
    input_size: Option<Vec<usize>>,
    /// Emit JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct InitArgs {
    #[command(flatten)]
    net: NetArgs,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Use this stage's input size from the configuration.
    #[arg(long, value_parser = parse_kind, default_value = "coarse", conflicts_with = "size")]
    stage: NetKind,
    #[arg(long, num_args = 3, value_names = ["D", "H", "W"])]
    size: Option<Vec<usize>>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn parse_kind(s: &str) -> std::result::Result<NetKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::from_json(&read_text(p)?),
        None => Ok(PipelineConfig::default()),
    }
}

fn size3(v: &[usize]) -> [usize; 3] {
    [v[0], v[1], v[2]]
}

fn pretty(value: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(value).expect("serializable")
}

impl NetArgs {
    fn resolve(&self) -> Result<NetworkSpec> {
        if let Some(path) = &self.spec {
            let spec = NetworkSpec::from_json(&read_text(path)?)?;
            if spec.name != self.model {
                return Err(Error::InvalidArgument(format!(
                    "spec {} describes the {} network, not {}",
                    path.display(),
                    spec.name,
                    self.model
                )));
            }
            return Ok(spec);
        }
        let mut cfg = load_config(self.config.as_deref())?;
        let net = match self.model {
            NetKind::Coarse => &mut cfg.coarse_net,
            NetKind::Fine => &mut cfg.fine_net,
        };
        if let Some(b) = self.base_channels {
            net.base_channels = b;
        }
        if let Some(l) = self.levels {
            net.levels = l;
        }
        if let Some(c) = self.channel_cap {
            net.channel_cap = c;
        }
        match self.model {
            NetKind::Coarse => cfg.coarse_spec(),
            NetKind::Fine => cfg.fine_spec(),
        }
    }
}

fn segment(args: &SegmentArgs) -> Result<()> {
    let cfg = load_config(args.config.as_deref())?;
    let summary = run_pipeline(&args.input, &args.coarse_weights, &args.fine_weights, &cfg, &args.output)?;
    match &args.summary {
        Some(path) => {
            write_text(path, &pretty(&summary))?;
            print_summary(&summary);
        }
        None => println!("{}", pretty(&summary)),
    }
    Ok(())
}

fn print_summary(s: &SegSummary) {
    println!("effective config: {}", serde_json::to_string(&s.config_echo).expect("serializable"));
    println!("wrote {}", s.output);
    println!("roi: {:?}..{:?}", s.roi.lo, s.roi.hi);
    for (class, n) in &s.per_class_voxels {
        println!("  {class:<10} {n:>12} voxels");
    }
    for (stage, ms) in &s.timings_ms {
        println!("  {stage:<12} {ms:>10.1} ms");
    }
    println!("total {:.1} ms", s.total_ms);
    if let Some(mb) = s.peak_rss_mb {
        println!("peak resident memory {mb:.0} MB");
    }
}

fn fmt_score(s: Score) -> String {
    match s.0 {
        Some(v) => format!("{v:.6}"),
        None => "undefined".to_string(),
    }
}

fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let report: MetricsReport = evaluate_case(&args.pred, &args.gt, args.nsd_tol)?;
    if let Some(path) = &args.report {
        write_text(path, &pretty(&report))?;
    }
    println!("case {}  (nsd tolerance {} mm)", report.case, report.tol_mm);
    println!("{:<10} {:>10} {:>10}", "class", "dsc", "nsd");
    for (name, s) in &report.per_class {
        println!("{name:<10} {:>10} {:>10}", fmt_score(s.dsc), fmt_score(s.nsd));
    }
    println!("{:<10} {:>10} {:>10}", "average", fmt_score(report.average.dsc), fmt_score(report.average.nsd));
    Ok(())
}

fn inspect(args: &InspectArgs) -> Result<()> {
    let spec = args.net.resolve()?;
    let size = args.input_size.as_deref().map(size3).unwrap_or(spec.input_size);
    let stats = count_flops(&spec, size)?;
    if args.json {
        let doc = json!({
            "model": spec.name,
            "base_channels": spec.base_channels,
            "levels": spec.levels,
            "channel_cap": spec.channel_cap,
            "input_size": size,
            "param_count": stats.param_count,
            "macs": stats.macs,
            "flops": stats.flops,
            "layers": stats.layers,
        });
        println!("{}", pretty(&doc));
        return Ok(());
    }
    println!("model: {}", spec.name);
    println!("base channels: {}", spec.base_channels);
    println!("levels: {}", spec.levels);
    println!("channel cap: {}", spec.channel_cap);
    println!("input size: {} x {} x {}", size[0], size[1], size[2]);
    println!();
    println!("{:<28} {:<16} {:>22} {:>12} {:>18}", "layer", "op", "output", "params", "MACs");
    for l in &stats.layers {
        let out = format!("{}x{}x{}x{}", l.output[0], l.output[1], l.output[2], l.output[3]);
        println!("{:<28} {:<16} {:>22} {:>12} {:>18}", l.name, l.op, out, l.params, l.macs);
    }
    println!();
    println!("parameters: {} ({:.3e})", stats.param_count, stats.param_count as f64);
    println!("MACs: {} ({:.3e})", stats.macs, stats.macs as f64);
    println!("FLOPs: {} ({:.3e})", stats.flops, stats.flops as f64);
    Ok(())
}

fn init_weights(args: &InitArgs) -> Result<()> {
    let spec = args.net.resolve()?;
    let store = kaiming_init(&spec, args.seed);
    save_eswt(&store, &args.out)?;
    println!(
        "model {} base channels {} levels {} channel cap {} seed {}",
        spec.name, spec.base_channels, spec.levels, spec.channel_cap, args.seed
    );
    println!(
        "wrote {} arrays, {} elements to {}",
        store.len(),
        store.element_count(),
        args.out.display()
    );
    debug_assert_eq!(store.element_count() as u64, count_params(&spec));
    Ok(())
}

fn preprocess_cmd(args: &PreprocessArgs) -> Result<()> {
    let cfg = load_config(args.config.as_deref())?;
    let size = match (&args.size, args.stage) {
        (Some(s), _) => size3(s),
        (None, NetKind::Coarse) => cfg.coarse_size,
        (None, NetKind::Fine) => cfg.fine_size,
    };
    if size.contains(&0) {
        return Err(Error::InvalidArgument(format!("size {size:?} has a zero extent")));
    }
    let vol = read_volume(&args.input)?;
    let p = preprocess(&vol, &cfg, size)?;
    let geometry = resampled_geometry(&p.native, size);
    let out = Volume::new(geometry, p.tensor.into_data())?;
    write_volume(&out, &args.output)?;
    println!(
        "effective config: {}",
        json!({ "size": size, "clip_range": cfg.clip_range, "target_orientation": cfg.target_orientation })
    );
    println!("wrote {}", args.output.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidArgument("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    }
    info!("using {} threads", rayon::current_num_threads());
    match &cli.command {
        Command::Segment(a) => segment(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Inspect(a) => inspect(a),
        Command::InitWeights(a) => init_weights(a),
        Command::Preprocess(a) => preprocess_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
