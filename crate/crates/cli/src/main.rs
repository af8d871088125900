use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use eaglemine::graph::{load_edge_list, FeatureTable, GraphMode, Side};
use eaglemine::histogram::{Binning, Histogram};
use eaglemine::mdl::{summary_mdl, EliasCode, MdlReport};
use eaglemine::mine::{MineConfig, MineEcho, Summary};
use eaglemine::pipeline::{self, Input, PipelineConfig, TreeEcho, HISTOGRAM_FILE, NODES_FILE, SUMMARY_FILE};
use eaglemine::tree::{water_level_tree, TreeConfig};
use eaglemine::Error;

#[derive(Parser)]
#[command(name = "eaglemine", version, about = "Micro-cluster mining in 2D feature histograms of graphs")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "EAGLEMINE_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compute node features from an edge list.
    Features(FeaturesArgs),
    /// Build the histogram, mine it and write the run files.
    Mine(MineArgs),
    /// Description length of a mined summary.
    Mdl(MdlArgs),
    /// Water-level tree of a histogram.
    Tree(TreeArgs),
    /// Most suspicious nodes of a run.
    Score(ScoreArgs),
}

#[derive(Args)]
struct FeaturesArgs {
    /// Edge list: `src dst [weight]` per line.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "homogeneous")]
    mode: GraphMode,
    #[arg(long)]
    out: PathBuf,
    /// Comma separated: degree, in_degree, out_degree, pagerank, hubness,
    /// authority, triangles.
    #[arg(long, value_delimiter = ',', required = true)]
    compute: Vec<String>,
    /// Side of a bipartite graph to describe.
    #[arg(long, default_value = "left", value_parser = parse_side)]
    side: Side,
}

#[derive(Args)]
struct TreeOpts {
    /// Water-level step (default: ln(h_max) / num-levels).
    #[arg(long)]
    step: Option<f64>,
    #[arg(long, default_value_t = 20)]
    num_levels: usize,
}

impl TreeOpts {
    fn echo(&self) -> TreeEcho {
        TreeEcho { step: self.step, levels: self.num_levels }
    }
}

#[derive(Args)]
struct MineArgs {
    /// Feature TSV to bucket into a histogram.
    #[arg(long, conflicts_with = "histogram", required_unless_present = "histogram", requires_all = ["x", "y"])]
    features: Option<PathBuf>,
    /// Feature on histogram rows.
    #[arg(long)]
    x: Option<String>,
    /// Feature on histogram columns.
    #[arg(long)]
    y: Option<String>,
    /// `log[:base[:bins_per_decade]]`, `linear:bins` or `index`.
    #[arg(long, default_value = "log", value_parser = parse_binning)]
    x_binning: Binning,
    #[arg(long, default_value = "log", value_parser = parse_binning)]
    y_binning: Binning,
    /// Feature breaking score ties in the node ranking (e.g. hubness).
    #[arg(long)]
    tie: Option<String>,
    /// Saved histogram to mine instead of features.
    #[arg(long)]
    histogram: Option<PathBuf>,
    /// Node → cell map for a saved histogram.
    #[arg(long, requires = "histogram")]
    cellmap: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    tree: TreeOpts,
    /// Critical value of the adjusted Anderson–Darling statistic.
    #[arg(long)]
    critical: Option<f64>,
    #[arg(long)]
    outlier_prob: Option<f64>,
    #[arg(long)]
    stitch_margin: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    grad_tol: Option<f64>,
    #[arg(long, default_value = "gamma")]
    code: EliasCode,
    /// Also write heatmap.csv and labels.csv.
    #[arg(long)]
    export_plot: bool,
}

#[derive(Args)]
struct RunFiles {
    /// Output directory of a `mine` run.
    #[arg(long)]
    run: Option<PathBuf>,
    #[arg(long)]
    summary: Option<PathBuf>,
    #[arg(long)]
    histogram: Option<PathBuf>,
}

impl RunFiles {
    fn pick(&self, explicit: &Option<PathBuf>, name: &str) -> Result<PathBuf, Error> {
        explicit
            .clone()
            .or_else(|| self.run.as_ref().map(|d| d.join(name)))
            .ok_or_else(|| Error::Invalid(format!("pass --run or the path of {name}")))
    }
}

#[derive(Args)]
struct MdlArgs {
    #[command(flatten)]
    files: RunFiles,
    #[arg(long, default_value = "gamma")]
    code: EliasCode,
    /// Print only the JSON record.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct TreeArgs {
    #[command(flatten)]
    files: RunFiles,
    #[command(flatten)]
    tree: TreeOpts,
    /// One line per water level: level, island count.
    #[arg(long)]
    levels: bool,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long, default_value_t = 10)]
    top: usize,
}

fn parse_side(s: &str) -> Result<Side, String> {
    match s {
        "left" | "source" => Ok(Side::Left),
        "right" | "target" => Ok(Side::Right),
        _ => Err(format!("unknown side `{s}` (left or right)")),
    }
}

fn parse_binning(s: &str) -> Result<Binning, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |i: usize, default: f64| -> Result<f64, String> {
        parts.get(i).map_or(Ok(default), |p| p.parse().map_err(|_| format!("bad number `{p}` in `{s}`")))
    };
    match parts[0] {
        "log" if parts.len() <= 3 => {
            Ok(Binning::Log { base: num(1, 10.0)?, bins_per_decade: num(2, 10.0)? as u32, v_min: None })
        }
        "linear" if parts.len() == 2 => Ok(Binning::Linear { bins: num(1, 0.0)? as u32, min: None, max: None }),
        "index" if parts.len() == 1 => Ok(Binning::Index),
        _ => Err(format!("bad binning `{s}` (log[:base[:bins]], linear:bins or index)")),
    }
}

fn features(a: &FeaturesArgs) -> Result<(), Error> {
    let g = load_edge_list(&a.input, a.mode)?;
    let names: Vec<&str> = a.compute.iter().map(String::as_str).collect();
    let table = FeatureTable::compute(&g, a.side, &names)?;
    table.write(&a.out)?;
    let remap = a.out.with_extension("remap.tsv");
    g.write_remap(&remap)?;
    println!("{} nodes, {} features -> {}", table.len(), names.len(), a.out.display());
    Ok(())
}

fn mine(a: &MineArgs) -> Result<(), Error> {
    let input = match (&a.features, &a.histogram) {
        (Some(path), _) => Input::Features {
            path: path.clone(),
            x: a.x.clone().unwrap_or_default(),
            y: a.y.clone().unwrap_or_default(),
            x_binning: a.x_binning,
            y_binning: a.y_binning,
            tie: a.tie.clone(),
        },
        (None, Some(path)) => Input::Histogram { path: path.clone(), cellmap: a.cellmap.clone() },
        (None, None) => return Err(Error::Invalid("pass --features or --histogram".into())),
    };
    let mut cfg = PipelineConfig::new(input, &a.out);
    cfg.tree = a.tree.echo();
    let mut echo = MineEcho::from(&MineConfig::default());
    echo.critical = a.critical.unwrap_or(echo.critical);
    echo.outlier_prob = a.outlier_prob.unwrap_or(echo.outlier_prob);
    echo.stitch_margin = a.stitch_margin.unwrap_or(echo.stitch_margin);
    echo.max_iters = a.max_iters.unwrap_or(echo.max_iters);
    echo.grad_tol = a.grad_tol.unwrap_or(echo.grad_tol);
    cfg.mine = echo;
    cfg.code = a.code;
    cfg.export_plot = a.export_plot;

    let run = pipeline::run(&cfg)?;
    let s = &run.summary;
    println!("{} models, {} outlier cells, {} stitches", s.models.len(), s.outliers.len(), s.stitches.len());
    for (i, m) in s.models.iter().enumerate() {
        let main = if s.main == Some(i) { " main" } else { "" };
        let forced = if m.forced { " forced" } else { "" };
        println!(
            "  {i}: {} island {} N={} cells={} score={:.4}{main}{forced}",
            m.kind(),
            m.model.island,
            m.model.n,
            m.cells.len(),
            s.suspiciousness[i]
        );
    }
    for p in &run.written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn print_report(r: &MdlReport) {
    println!("{:<10} {:>6} {:>12} {:>10}", "island", "kind", "N", "bits");
    for m in &r.per_model {
        let n: u64 = m.counts.iter().sum();
        println!("{:<10} {:>6} {:>12} {:>10}", m.island, m.kind.to_string(), n, m.bits);
    }
    println!("components     {}", r.components);
    println!("model bits     {}", r.model_bits);
    println!("error bits     {} over {} cells", r.error_bits, r.error_cells);
    println!("total bits     {}", r.total);
}

fn mdl(a: &MdlArgs) -> Result<(), Error> {
    let summary = Summary::read(&a.files.pick(&a.files.summary, SUMMARY_FILE)?)?;
    let h = Histogram::read(&a.files.pick(&a.files.histogram, HISTOGRAM_FILE)?)?;
    let report = summary_mdl(&summary, &h, a.code)?;
    if !a.json {
        print_report(&report);
    }
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn tree(a: &TreeArgs) -> Result<(), Error> {
    let h = Histogram::read(&a.files.pick(&a.files.histogram, HISTOGRAM_FILE)?)?;
    let t = water_level_tree(&h, &TreeConfig::from(&a.tree.echo()))?;
    if a.levels {
        for l in &t.levels {
            println!("{}\t{}", l.level, l.islands);
        }
    } else {
        println!("{}", serde_json::to_string_pretty(&t.dump())?);
    }
    Ok(())
}

fn score(a: &ScoreArgs) -> Result<(), Error> {
    // Refuses runs written under another summary schema.
    Summary::read(&a.run.join(SUMMARY_FILE))?;
    let nodes = pipeline::read_nodes(&a.run.join(NODES_FILE))?;
    println!("rank\tnode_id\tlabel\tscore\ttie");
    for (i, n) in nodes.iter().take(a.top).enumerate() {
        println!("{}\t{}\t{}\t{}\t{}", i + 1, n.node, n.label, n.score, n.tie);
    }
    Ok(())
}

/// 2 for bad input or I/O, 1 when the pipeline itself fails.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. }
        | Error::Parse { .. }
        | Error::Schema { .. }
        | Error::MissingFeature(_)
        | Error::Invalid(_)
        | Error::Json(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    let result = match &cli.cmd {
        Cmd::Features(a) => features(a),
        Cmd::Mine(a) => mine(a),
        Cmd::Mdl(a) => mdl(a),
        Cmd::Tree(a) => tree(a),
        Cmd::Score(a) => score(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
