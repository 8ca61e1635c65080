use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use choicerank::choice_models::{
    ChoiceSampler, ChoiceTable, NoiseFamily, ParametricChoiceModel, PartworthVector,
    TabularChoiceModel,
};
use choicerank::harness::{run_experiment, Algorithm, ExperimentConfig};
use choicerank::preflib::{empirical_choice_probs, ground_truth_ordering, RankingDataset};
use choicerank::rankers::{
    borda_count, borda_from_table, mle_fit, spectral_scores, ChainMode, MleOptions, ScoreVector,
    StationaryOptions,
};
use choicerank::sampling::{simulate_dataset, ChoiceDataset, SamplingConfig};
use choicerank::theory::{
    borda_scores_exact, borda_scores_mc, theory_csv, theory_row, GapConvention,
};
use choicerank::verify::{run_all, VerifyOptions};
use choicerank::{io, rng, Error, ErrorKind};

#[derive(Debug, Parser)]
#[command(name = "choice-rank", version, about = "Top-K recovery from discrete choice data")]
struct Cli {
    /// Worker thread cap (falls back to CHOICE_RANK_THREADS, then all cores).
    #[arg(long, global = true, env = "CHOICE_RANK_THREADS")]
    threads: Option<usize>,

    /// Print progress counters to stderr.
    #[arg(long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a choice dataset under the multi-round uniform sampling model.
    Simulate(SimulateArgs),
    /// Score items with a ranking algorithm and print the top K.
    Rank(RankArgs),
    /// Generalized Borda scores, gaps and sample-complexity bounds per menu size.
    Theory(TheoryArgs),
    /// Convert a ranking corpus into a tabular choice model and a ground-truth ordering.
    Ingest(IngestArgs),
    /// Run an accuracy experiment from a key=value config file.
    Experiment(ExperimentArgs),
    /// Run the numerical self-check suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false, id = "model_source")]
struct ModelArgs {
    /// MNL weights, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, group = "model_source")]
    mnl_weights: Option<Vec<f64>>,

    /// Partworths, comma separated (noise chosen with --noise).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, group = "model_source")]
    partworths: Option<Vec<f64>>,

    /// Tabular choice model file.
    #[arg(long, group = "model_source")]
    tabular: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NoiseArg {
    Gumbel,
    Normal,
    Exponential,
}

impl From<NoiseArg> for NoiseFamily {
    fn from(n: NoiseArg) -> Self {
        match n {
            NoiseArg::Gumbel => NoiseFamily::GumbelStandard,
            NoiseArg::Normal => NoiseFamily::NormalStandard,
            NoiseArg::Exponential => NoiseFamily::ExponentialUnit,
        }
    }
}

enum Model {
    Parametric(ParametricChoiceModel),
    Tabular(TabularChoiceModel),
}

impl Model {
    fn load(args: &ModelArgs, noise: NoiseArg) -> choicerank::Result<Model> {
        if let Some(w) = &args.mnl_weights {
            return Ok(Model::Parametric(ParametricChoiceModel::mnl_from_weights(w)?));
        }
        if let Some(u) = &args.partworths {
            return Ok(Model::Parametric(ParametricChoiceModel::new(
                PartworthVector::new(u.clone())?,
                noise.into(),
            )));
        }
        let path = args.tabular.as_ref().expect("clap enforces one model source");
        Ok(Model::Tabular(TabularChoiceModel::read(path)?))
    }

    fn n(&self) -> usize {
        match self {
            Model::Parametric(p) => p.n(),
            Model::Tabular(t) => t.n(),
        }
    }

    fn sampler(&self) -> &dyn ChoiceSampler {
        match self {
            Model::Parametric(p) => p,
            Model::Tabular(t) => t,
        }
    }

    fn describe(&self, args: &ModelArgs) -> String {
        match self {
            Model::Parametric(p) => {
                let vals: Vec<String> = p.partworths.values().iter().map(|x| x.to_string()).collect();
                match &args.mnl_weights {
                    Some(w) => format!(
                        "mnl-weights={}",
                        w.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
                    ),
                    None => format!("partworths={} noise={}", vals.join(","), p.noise),
                }
            }
            Model::Tabular(_) => format!(
                "tabular={}",
                args.tabular.as_deref().unwrap_or(Path::new("?")).display()
            ),
        }
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum, default_value = "gumbel")]
    noise: NoiseArg,
    /// Menu size.
    #[arg(long)]
    m: usize,
    /// Probability that a menu is offered in a round.
    #[arg(long)]
    p: f64,
    /// Number of rounds.
    #[arg(long = "R", alias = "rounds", default_value_t = 1)]
    rounds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file (`.gz` compresses); stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Allow more than 10^9 candidate (round, menu) trials.
    #[arg(long)]
    allow_large: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Borda,
    Mle,
    Spectral,
}

#[derive(Debug, Args)]
struct RankArgs {
    #[arg(long, value_enum)]
    algorithm: AlgorithmArg,
    /// Dataset file or tabular model file (detected from the line layout).
    input: PathBuf,
    #[arg(long = "K")]
    k: usize,
    /// Scores CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 100_000)]
    mle_max_iters: usize,
    #[arg(long, default_value_t = 1e-8)]
    mle_tolerance: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ConventionArg {
    KMinusH,
    KMinusHMinusOne,
}

#[derive(Debug, Args)]
struct TheoryArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum, default_value = "gumbel")]
    noise: NoiseArg,
    /// Menu sizes, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    m: Vec<usize>,
    #[arg(long = "K")]
    k: usize,
    /// Slack for the approximate-recovery bound.
    #[arg(long, default_value_t = 0)]
    h: usize,
    #[arg(long, value_enum, default_value = "k-minus-h")]
    gap_convention: ConventionArg,
    /// Use Monte Carlo scores (required for non-Gumbel noise).
    #[arg(long)]
    monte_carlo: bool,
    #[arg(long, default_value_t = 2000)]
    mc_menus: usize,
    #[arg(long, default_value_t = 2000)]
    mc_draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Ranking corpus.
    input: PathBuf,
    #[arg(long)]
    m: usize,
    /// Tabular model output.
    #[arg(long)]
    out_model: PathBuf,
    /// Ground-truth `rank,item` output.
    #[arg(long)]
    out_truth: PathBuf,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// key=value config file.
    config: PathBuf,
    /// Results CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Scale the compact KL value by (1 + eps); for checking that the suite can fail.
    #[arg(long, hide = true, default_value_t = 0.0)]
    perturb_kl: f64,
}

fn emit(out: Option<&Path>, text: &str) -> choicerank::Result<()> {
    match out {
        Some(p) => io::write_string(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn out_name(out: &Option<PathBuf>) -> String {
    out.as_ref().map_or("-".into(), |p| p.display().to_string())
}

fn simulate(a: &SimulateArgs) -> choicerank::Result<()> {
    let model = Model::load(&a.model, a.noise)?;
    let mut cfg = SamplingConfig::new(model.n(), a.m, a.p, a.rounds, a.seed)?;
    cfg.allow_large = a.allow_large;
    eprintln!(
        "simulate: {} n={} m={} p={} R={} seed={} round_seed=derive(seed,round) out={}",
        model.describe(&a.model),
        cfg.n,
        cfg.m,
        cfg.p,
        cfg.rounds,
        cfg.seed,
        out_name(&a.out)
    );
    let ds = simulate_dataset(model.sampler(), &cfg)?;
    match &a.out {
        Some(p) => ds.write(p),
        None => emit(None, &ds.to_text()),
    }
}

enum RankInput {
    Dataset(ChoiceDataset),
    Table(ChoiceTable),
}

fn load_rank_input(path: &Path) -> choicerank::Result<RankInput> {
    let text = io::read_to_string(path)?;
    let fields = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .map_or(0, |l| l.split(';').count());
    match fields {
        4 => Ok(RankInput::Dataset(ChoiceDataset::from_text(&text)?)),
        3 => Ok(RankInput::Table(ChoiceTable::from_text(&text)?)),
        _ => Err(Error::Validation(format!(
            "{} is neither a dataset nor a tabular model file",
            path.display()
        ))),
    }
}

fn rank(a: &RankArgs) -> choicerank::Result<()> {
    let input = load_rank_input(&a.input)?;
    let algorithm = match a.algorithm {
        AlgorithmArg::Borda => Algorithm::Borda,
        AlgorithmArg::Mle => Algorithm::Mle,
        AlgorithmArg::Spectral => Algorithm::Spectral,
    };
    let mle = MleOptions {
        max_iters: a.mle_max_iters,
        gradient_tolerance: a.mle_tolerance,
        ..MleOptions::default()
    };
    let (kind, table, m) = match &input {
        RankInput::Dataset(ds) => ("dataset", ds.to_table(), ds.m()),
        RankInput::Table(t) => {
            let m = t.iter().next().map_or(2, |(s, _)| s.len());
            ("tabular", t.clone(), m)
        }
    };
    eprintln!(
        "rank: algorithm={algorithm} input={} ({kind}, n={}, m={m}) K={} mle_max_iters={} mle_tolerance={} out={}",
        a.input.display(),
        table.n(),
        a.k,
        mle.max_iters,
        mle.gradient_tolerance,
        out_name(&a.out)
    );
    let scores: ScoreVector = match algorithm {
        Algorithm::Borda => match &input {
            RankInput::Dataset(ds) => borda_count(ds),
            RankInput::Table(t) => borda_from_table(t),
        },
        Algorithm::Mle => {
            let fit = mle_fit(&table, &mle)?;
            eprintln!("mle: iterations={} residual={:.3e}", fit.iterations, fit.residual);
            fit.scores
        }
        Algorithm::Spectral => {
            let mode = match input {
                RankInput::Dataset(_) => ChainMode::Empirical,
                RankInput::Table(_) => ChainMode::Exact,
            };
            let (pi, chain) = spectral_scores(&table, m, mode, &StationaryOptions::default())?;
            if let Some(c) = chain.damping {
                eprintln!("spectral: off-diagonal mass damped by {c}");
            }
            pi
        }
    };
    let top = scores.top_k(a.k)?;
    let best_first: Vec<String> = scores
        .ordering()
        .into_iter()
        .filter(|&i| top.contains(i))
        .map(|i| (i + 1).to_string())
        .collect();
    emit(a.out.as_deref(), &scores.to_csv())?;
    println!("top-{}: {}", a.k, best_first.join(" "));
    Ok(())
}

fn theory(a: &TheoryArgs) -> choicerank::Result<()> {
    let model = Model::load(&a.model, a.noise)?;
    let convention = match a.gap_convention {
        ConventionArg::KMinusH => GapConvention::KMinusH,
        ConventionArg::KMinusHMinusOne => GapConvention::KMinusHMinusOne,
    };
    eprintln!(
        "theory: {} n={} m={:?} K={} h={} gap_convention={:?} mode={} seed={}",
        model.describe(&a.model),
        model.n(),
        a.m,
        a.k,
        a.h,
        convention,
        if a.monte_carlo {
            format!("monte-carlo(menus={}, draws={})", a.mc_menus, a.mc_draws)
        } else {
            "exact".into()
        },
        a.seed
    );
    let mut r = rng::seeded(a.seed);
    let mut rows = Vec::new();
    for &m in &a.m {
        let taus = match (&model, a.monte_carlo) {
            (Model::Parametric(p), true) => borda_scores_mc(p, m, a.mc_menus, a.mc_draws, &mut r)?,
            (Model::Parametric(p), false) => borda_scores_exact(p, m)?,
            (Model::Tabular(t), false) => borda_scores_exact(t, m)?,
            (Model::Tabular(_), true) => {
                return Err(Error::Validation("Monte Carlo needs a parametric model".into()))
            }
        };
        rows.push(theory_row(&taus, a.k, a.h, convention)?);
    }
    emit(a.out.as_deref(), &theory_csv(&rows))
}

fn ingest(a: &IngestArgs) -> choicerank::Result<()> {
    let corpus = RankingDataset::read(&a.input)?;
    eprintln!(
        "ingest: input={} n={} records={} rankings={} m={} out_model={} out_truth={} unranked=bottom-tier",
        a.input.display(),
        corpus.n,
        corpus.records.len(),
        corpus.total_rankings(),
        a.m,
        a.out_model.display(),
        a.out_truth.display()
    );
    let truth = ground_truth_ordering(&corpus)?;
    let model = empirical_choice_probs(&corpus, a.m)?;
    model.write(&a.out_model)?;
    io::write_string(&a.out_truth, &truth.to_csv())
}

fn experiment(a: &ExperimentArgs, verbose: bool) -> choicerank::Result<()> {
    let cfg = ExperimentConfig::read(&a.config)?;
    eprintln!("experiment: config={} out={}", a.config.display(), out_name(&a.out));
    for line in cfg.describe().lines() {
        eprintln!("  {line}");
    }
    let result = run_experiment(&cfg)?;
    if verbose {
        eprintln!("experiment: {} rows", result.rows.len());
    }
    emit(a.out.as_deref(), &result.to_csv())
}

fn verify(a: &VerifyArgs) -> choicerank::Result<bool> {
    let mut opts = VerifyOptions::default();
    if let Some(s) = a.seed {
        opts.seed = s;
    }
    opts.kl_perturbation = a.perturb_kl;
    eprintln!("verify: seed={} kl_perturbation={}", opts.seed, opts.kl_perturbation);
    let results = run_all(&opts)?;
    for r in &results {
        println!("{r}");
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} checks, {} failed", results.len(), failed);
    Ok(failed == 0)
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Validation => 2,
        ErrorKind::Numerical => 3,
        ErrorKind::Io => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.unwrap_or(0);
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        eprintln!("error: cannot configure thread pool: {e}");
        return ExitCode::from(2);
    }
    eprintln!("threads={}", rayon::current_num_threads());
    let outcome = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Rank(a) => rank(a),
        Command::Theory(a) => theory(a),
        Command::Ingest(a) => ingest(a),
        Command::Experiment(a) => experiment(a, cli.verbose),
        Command::Verify(a) => match verify(a) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(3),
            Err(e) => Err(e),
        },
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
