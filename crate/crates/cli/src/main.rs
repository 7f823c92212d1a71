use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fracheat::harness::datasets::{two_moon, TwoMoonConfig};
use fracheat::harness::report::ResultsDocument;
use fracheat::harness::split::accuracy;
use fracheat::harness::stats::{anova_oneway, pairwise_bonferroni, t_test};
use fracheat::harness::{load_preset, preset_names, run_trials, DatasetConfig};
use fracheat::refine::{refine_and_diffuse, Combiner, EmbeddingSet, RefineConfig};
use fracheat::selftrain::{self_train, ConfidenceKind, SelfTrainConfig, ThetaSchedule};
use fracheat::solver::{build_source, integrate, one_hot, predict, run_scheme, Scheme, SourceVariant, StepOptions, Stepper};
use fracheat::{Error, Graph, KernelOperator, LaplacianKind, Result, Strategy};
use nalgebra::DMatrix;

mod io;

#[derive(Parser)]
#[command(name = "fracheat", version, about = "Fractional heat-kernel label propagation on graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a Two-Moon point set, its labels and kNN graph.
    Generate(GenerateArgs),
    /// Propagate labels with one of the three schemes.
    Propagate(PropagateArgs),
    /// Confidence-driven self-training; logs one JSON object per iteration.
    Selftrain(SelftrainArgs),
    /// Rebuild the graph from embeddings, then diffuse.
    Refine(RefineArgs),
    /// Run a seeded multi-trial experiment from a preset or config file.
    Bench(BenchArgs),
    /// ANOVA and pairwise t-tests on accuracy files, or a saved results document.
    Stats(StatsArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0.15)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Bandwidth as a multiple of the mean kNN distance.
    #[arg(long, default_value_t = 1.0)]
    sigma_scale: f64,
    /// Output directory for points.csv, labels.csv and edges.txt.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GraphArgs {
    /// Edge list `i j [w]`.
    #[arg(long)]
    graph: PathBuf,
    /// Node count when trailing nodes are isolated.
    #[arg(long)]
    nodes: Option<usize>,
    /// Labeled nodes as `node,label` lines.
    #[arg(long)]
    labels: PathBuf,
    /// Class count; defaults to one past the largest label.
    #[arg(long)]
    classes: Option<usize>,
    /// Ground truth for every node; accuracy goes to stderr.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, value_parser = parse_kind)]
    laplacian: LaplacianKind,
    #[arg(long, default_value_t = 1.0)]
    s: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyName {
    Spectral,
    Truncated,
    Chebyshev,
    Subordination,
}

#[derive(Args)]
struct StrategyArgs {
    #[arg(long, value_enum, default_value = "spectral")]
    strategy: StrategyName,
    /// Eigenmodes kept by the truncated strategy.
    #[arg(long, default_value_t = 50)]
    modes: usize,
    /// Chebyshev degree (default 30 for s = 1, 80 otherwise).
    #[arg(long)]
    cheb_degree: Option<usize>,
    /// Pick the Chebyshev degree from the coefficient-decay estimate.
    #[arg(long, value_name = "TOL")]
    cheb_auto_degree: Option<f64>,
    /// Quadrature nodes for subordination.
    #[arg(long, default_value_t = fracheat::subordination::DEFAULT_NODES)]
    quad_nodes: usize,
}

impl StrategyArgs {
    fn strategy(&self) -> Strategy {
        match self.strategy {
            StrategyName::Spectral => Strategy::SpectralExact,
            StrategyName::Truncated => Strategy::TruncatedSpectral { modes: self.modes },
            StrategyName::Chebyshev => Strategy::Chebyshev { degree: self.cheb_degree, tolerance: self.cheb_auto_degree },
            StrategyName::Subordination => Strategy::Subordination { nodes: self.quad_nodes },
        }
    }
}

#[derive(Args)]
struct PropagateArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[command(flatten)]
    strategy: StrategyArgs,
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u8).range(1..=3))]
    scheme: u8,
    /// Integrate with a time stepper instead of the closed form.
    #[arg(long, value_parser = parse_stepper, requires = "dt")]
    stepper: Option<Stepper>,
    #[arg(long)]
    dt: Option<f64>,
    /// Permit forward Euler steps beyond the stability bound.
    #[arg(long)]
    allow_unstable: bool,
    /// Write the Laplacian eigenvalues, one per line.
    #[arg(long)]
    dump_eigenvalues: Option<PathBuf>,
    /// Predictions CSV (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SelftrainArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long, default_value_t = 0.1)]
    dt: f64,
    #[command(flatten)]
    loop_args: LoopArgs,
    /// Iteration log (stdout when absent).
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LoopArgs {
    /// Initial confidence threshold.
    #[arg(long = "theta", alias = "theta0", default_value_t = 0.4)]
    theta: f64,
    /// Maximum number of iterations.
    #[arg(long = "tmax", alias = "t-max", default_value_t = 20)]
    tmax: usize,
    #[arg(long, value_enum, default_value = "constant")]
    schedule: ScheduleName,
    #[arg(long, value_enum, default_value = "base")]
    confidence: ConfidenceName,
}

impl LoopArgs {
    fn config(&self, s: f64, dt: f64) -> SelfTrainConfig {
        SelfTrainConfig {
            s,
            dt,
            theta0: self.theta,
            t_max: self.tmax,
            schedule: match self.schedule {
                ScheduleName::Constant => ThetaSchedule::Constant,
                ScheduleName::LinearDecay => ThetaSchedule::LinearDecay,
            },
            confidence: match self.confidence {
                ConfidenceName::Base => ConfidenceKind::Base,
                ConfidenceName::Entropy => ConfidenceKind::Entropy,
            },
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CombineName {
    Gat,
    Similarity,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScheduleName {
    Constant,
    LinearDecay,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConfidenceName {
    Base,
    Entropy,
}

#[derive(Args)]
struct RefineArgs {
    #[command(flatten)]
    graph: GraphArgs,
    /// Node embeddings, one comma-separated row per node.
    #[arg(long)]
    embeddings: PathBuf,
    /// Attention coefficients `i j a`.
    #[arg(long)]
    attention: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "gat")]
    combine: CombineName,
    /// gat: weights of cosine similarity, attention and original edges.
    #[arg(long, value_parser = parse_triple, default_value = "0.4,0.3,0.3")]
    alpha: [f64; 3],
    /// similarity: weights of cosine, heat-kernel and structural similarity.
    #[arg(long, value_parser = parse_triple, default_value = "0.4,0.3,0.3")]
    weights: [f64; 3],
    #[arg(long, default_value_t = 1.0)]
    heat_time: f64,
    /// Sparsification threshold.
    #[arg(long, default_value_t = 0.1)]
    tau: f64,
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    /// Skip the self-training loop after the closed-form diffusion.
    #[arg(long)]
    no_self_train: bool,
    #[command(flatten)]
    loop_args: LoopArgs,
    /// Self-training step size.
    #[arg(long, default_value_t = 0.1)]
    dt: f64,
    /// Write the refined edge list.
    #[arg(long)]
    refined_graph: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Bundled preset name or path to a preset/config JSON file.
    #[arg(long, default_value = "two-moon-benchmark")]
    preset: String,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (all cores by default); results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Cora directory for Cora presets (or set FRACHEAT_CORA_DIR).
    #[arg(long)]
    cora_dir: Option<PathBuf>,
    /// Read label counts as totals instead of per class.
    #[arg(long)]
    labels_total: bool,
    /// Results document path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// List bundled presets and exit.
    #[arg(long)]
    list: bool,
}

#[derive(Args)]
struct StatsArgs {
    /// Files with one accuracy per line, one file per group.
    #[arg(long, num_args = 1.., conflicts_with = "results")]
    groups: Vec<PathBuf>,
    /// Saved results document.
    #[arg(long)]
    results: Option<PathBuf>,
}

fn parse_kind(s: &str) -> std::result::Result<LaplacianKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_triple(s: &str) -> std::result::Result<[f64; 3], String> {
    let v: Vec<f64> = s.split(',').map(|x| x.trim().parse::<f64>().map_err(|e| format!("'{x}': {e}"))).collect::<std::result::Result<_, _>>()?;
    v.try_into().map_err(|v: Vec<f64>| format!("expected three comma-separated numbers, got {}", v.len()))
}

fn parse_stepper(s: &str) -> std::result::Result<Stepper, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

struct Loaded {
    graph: Graph,
    labels: Vec<usize>,
    labeled: Vec<usize>,
    classes: usize,
    truth: Option<Vec<usize>>,
}

fn load(args: &GraphArgs) -> Result<Loaded> {
    let graph = Graph::read_edge_list(&args.graph, args.nodes)?;
    let pairs = io::read_labels(&args.labels)?;
    let (labels, labeled) = io::label_vector(&pairs, graph.n())?;
    if labeled.is_empty() {
        return Err(Error::InvalidArgument("no labeled nodes".into()));
    }
    let inferred = pairs.iter().map(|p| p.1 + 1).max().unwrap_or(1);
    let classes = args.classes.unwrap_or(inferred);
    let truth = match &args.truth {
        Some(p) => {
            let (t, covered) = io::label_vector(&io::read_labels(p)?, graph.n())?;
            if covered.len() != graph.n() {
                return Err(Error::InvalidArgument(format!("truth covers {} of {} nodes", covered.len(), graph.n())));
            }
            Some(t)
        }
        None => None,
    };
    Ok(Loaded { graph, labels, labeled, classes, truth })
}

fn report_accuracy(data: &Loaded, pred: &[usize]) -> Result<()> {
    if let Some(truth) = &data.truth {
        let mask: Vec<usize> = (0..data.graph.n()).filter(|i| data.labeled.binary_search(i).is_err()).collect();
        eprintln!("accuracy (unlabeled nodes): {:.4}", accuracy(pred, truth, &mask)?);
    }
    Ok(())
}

fn generate(args: GenerateArgs) -> Result<()> {
    let config = TwoMoonConfig { n: args.n, noise: args.noise, seed: args.seed, k: args.k, sigma_scale: args.sigma_scale };
    let moon = two_moon(&config)?;
    std::fs::create_dir_all(&args.out)?;
    let mut points = std::io::BufWriter::new(std::fs::File::create(args.out.join("points.csv"))?);
    writeln!(points, "x,y,label")?;
    for i in 0..config.n {
        writeln!(points, "{},{},{}", moon.points[(i, 0)], moon.points[(i, 1)], moon.labels[i])?;
    }
    points.flush()?;
    let mut labels = std::io::BufWriter::new(std::fs::File::create(args.out.join("labels.csv"))?);
    for (i, l) in moon.labels.iter().enumerate() {
        writeln!(labels, "{i},{l}")?;
    }
    labels.flush()?;
    io::write_edges(&args.out.join("edges.txt"), &moon.graph)?;
    eprintln!(
        "wrote {} points, {} edges (sigma {:.4}, connected: {})",
        config.n,
        moon.graph.edge_count(),
        moon.sigma,
        moon.graph.is_connected()
    );
    Ok(())
}

fn propagate(args: PropagateArgs) -> Result<()> {
    let data = load(&args.graph)?;
    let s = args.graph.s;
    let op = KernelOperator::new(&data.graph, args.graph.laplacian, args.strategy.strategy())?;
    if let Some(path) = &args.dump_eigenvalues {
        let spec = match op.spectral() {
            Some(spec) => spec.clone(),
            None => std::sync::Arc::new(fracheat::SpectralDecomposition::from_sparse(op.laplacian())?),
        };
        let text: String = spec.eigenvalues().iter().map(|v| format!("{v}\n")).collect();
        std::fs::write(path, text)?;
    }
    let scheme = Scheme::from_number(args.scheme)?;
    let u0 = one_hot(&data.labels, &data.labeled, data.classes)?;
    let scores = match args.stepper {
        None => run_scheme(&op, scheme, s, args.t, &u0, &data.labeled, data.graph.degrees())?,
        Some(stepper) => {
            let f = build_source(&u0, &data.labeled, SourceVariant::DegreeScaled, data.graph.degrees())?;
            let zero = DMatrix::zeros(u0.nrows(), u0.ncols());
            let (start, source) = match scheme {
                Scheme::Diffusion => (u0, zero),
                Scheme::ScaledSource => (f, zero),
                Scheme::DiffusionWithSource => (u0, f),
            };
            let dt = args.dt.expect("clap requires dt with a stepper");
            let options = StepOptions { allow_unstable: args.allow_unstable };
            integrate(&op, s, stepper, dt, args.t, &start, &source, options, |_, _| {})?
        }
    };
    let pred = predict(&scores);
    report_accuracy(&data, &pred)?;
    io::write_predictions(&mut *io::open_output(args.out.as_deref())?, &scores, &pred)
}

fn selftrain(args: SelftrainArgs) -> Result<()> {
    let data = load(&args.graph)?;
    let op = KernelOperator::new(&data.graph, args.graph.laplacian, Strategy::SpectralExact)?;
    let config = args.loop_args.config(args.graph.s, args.dt);
    let u0 = one_hot(&data.labels, &data.labeled, data.classes)?;
    let f0 = build_source(&u0, &data.labeled, SourceVariant::DegreeScaled, data.graph.degrees())?;
    let outcome = self_train(&op, &u0, &f0, &config, data.truth.as_deref())?;
    let mut log = io::open_output(args.log.as_deref())?;
    for record in &outcome.history {
        writeln!(log, "{}", serde_json::to_string(record)?)?;
    }
    log.flush()?;
    drop(log);
    eprintln!("{} iterations, converged: {}", outcome.history.len(), outcome.converged);
    let pred = outcome.predictions();
    report_accuracy(&data, &pred)?;
    match &args.out {
        Some(path) => io::write_predictions(&mut *io::open_output(Some(path))?, &outcome.u, &pred),
        None => Ok(()),
    }
}

fn refine(args: RefineArgs) -> Result<()> {
    let data = load(&args.graph)?;
    let emb = EmbeddingSet::load(&args.embeddings, args.attention.as_deref())?;
    let combiner = match args.combine {
        CombineName::Gat => Combiner::Gat { alpha: args.alpha },
        CombineName::Similarity => {
            Combiner::Similarity { weights: args.weights, heat_time: args.heat_time }
        }
    };
    let config = RefineConfig {
        combiner,
        tau: args.tau,
        kind: args.graph.laplacian,
        s: args.graph.s,
        t: args.t,
        source: SourceVariant::DegreeScaled,
        self_train: (!args.no_self_train).then(|| args.loop_args.config(args.graph.s, args.dt)),
    };
    let outcome = refine_and_diffuse(&data.graph, &emb, &config, &data.labels, &data.labeled, data.classes)?;
    eprintln!("refined graph: {} edges, connected: {}", outcome.graph.edge_count(), outcome.connected);
    if let Some(path) = &args.refined_graph {
        io::write_edges(path, &outcome.graph)?;
    }
    report_accuracy(&data, &outcome.predictions)?;
    io::write_predictions(&mut *io::open_output(args.out.as_deref())?, &outcome.scores, &outcome.predictions)
}

fn bench(args: BenchArgs) -> Result<()> {
    if args.list {
        for name in preset_names() {
            println!("{name}");
        }
        return Ok(());
    }
    let mut preset = load_preset(&args.preset)?;
    let config = &mut preset.config;
    if let Some(t) = args.trials {
        config.trials = t;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if args.labels_total {
        config.labels_total = true;
    }
    if let DatasetConfig::Cora { dir } = &mut config.dataset {
        match args.cora_dir.clone().or_else(|| std::env::var_os("FRACHEAT_CORA_DIR").map(PathBuf::from)) {
            Some(d) => *dir = d,
            None if !dir.join("cora.content").is_file() => {
                return Err(Error::InvalidArgument(
                    "Cora preset needs --cora-dir or FRACHEAT_CORA_DIR (directory with cora.content and cora.cites)".into(),
                ))
            }
            None => {}
        }
    }
    let start = Instant::now();
    let results = run_trials(config, args.threads)?;
    let elapsed = start.elapsed();
    let doc = ResultsDocument::new(config, results, preset.reference);
    print!("{}", doc.text_table());
    if let Some(c) = doc.connected_trials {
        println!("connected graphs: {c}/{} trials", config.trials);
    }
    eprintln!("elapsed: {:.1}s", elapsed.as_secs_f64());
    if let Some(path) = &args.out {
        doc.write(path)?;
    }
    Ok(())
}

fn stats(args: StatsArgs) -> Result<()> {
    if let Some(path) = &args.results {
        print!("{}", ResultsDocument::read(path)?.text_table());
        return Ok(());
    }
    if args.groups.len() < 2 {
        return Err(Error::InvalidArgument("need --groups with at least two files, or --results".into()));
    }
    let groups = args.groups.iter().map(|p| io::read_column(p)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&[f64]> = groups.iter().map(|g| g.as_slice()).collect();
    let name = |k: usize| args.groups[k].display().to_string();
    if refs.len() == 2 {
        let t = t_test(refs[0], refs[1])?;
        println!("t({}) = {:.4}, p = {:.4e}", t.df, t.t, t.p);
    }
    let a = anova_oneway(&refs)?;
    println!("ANOVA F({}, {}) = {:.4}, p = {:.4e}", a.df_between, a.df_within, a.f, a.p);
    if refs.len() > 2 {
        println!("pairwise t-tests, Bonferroni-corrected (in place of Tukey HSD):");
        for p in pairwise_bonferroni(&refs)? {
            println!("  {} vs {}: t({}) = {:.4}, p = {:.4e}, adjusted p = {:.4e}", name(p.a), name(p.b), p.df, p.t, p.p, p.p_adjusted);
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Propagate(a) => propagate(a),
        Command::Selftrain(a) => selftrain(a),
        Command::Refine(a) => refine(a),
        Command::Bench(a) => bench(a),
        Command::Stats(a) => stats(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
