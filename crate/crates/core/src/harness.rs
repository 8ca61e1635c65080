//! Accuracy and timing experiments.
//!
//! One experiment fixes a model, menu sizes, a grid of expected sample sizes and a set of
//! algorithms. Each trial draws a single dataset at the largest budget with `R` rounds;
//! smaller budgets are the nested sub-datasets obtained by lowering the offer probability
//! (see [`KeyedDataset`](crate::sampling::KeyedDataset)). A trial succeeds for an
//! algorithm when its top-K set equals the true top-K set.

use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::choice_models::{
    ChoiceSampler, NoiseFamily, ParametricChoiceModel, PartworthVector, TabularChoiceModel,
};
use crate::error::{Error, Result};
use crate::io;
use crate::menu::binomial;
use crate::preflib::read_truth_csv;
use crate::rankers::{
    borda_count, mle_fit, ordering, spectral_scores, ChainMode, MleOptions, ScoreVector,
    StationaryOptions, TopKSet,
};
use crate::rng;
use crate::sampling::{simulate_keyed, ChoiceDataset, SamplingConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Borda,
    Mle,
    Spectral,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Borda, Algorithm::Mle, Algorithm::Spectral];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Borda => "borda",
            Algorithm::Mle => "mle",
            Algorithm::Spectral => "spectral",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "borda" => Ok(Algorithm::Borda),
            "mle" => Ok(Algorithm::Mle),
            "spectral" => Ok(Algorithm::Spectral),
            other => Err(Error::validation(format!("unknown algorithm {other:?}"))),
        }
    }
}

/// Scores a dataset with one algorithm.
///
/// MLE runs that stop short of the residual target still return their last iterate.
/// `None` means the algorithm has no answer on this dataset (a disconnected comparison
/// graph for MLE, a pair of items never compared for the spectral chain).
pub fn score_dataset(
    algorithm: Algorithm,
    dataset: &ChoiceDataset,
    mle: &MleOptions,
) -> Result<Option<ScoreVector>> {
    match algorithm {
        Algorithm::Borda => Ok(Some(borda_count(dataset))),
        Algorithm::Mle => match mle_fit(&dataset.to_table(), mle) {
            Ok(fit) => Ok(Some(fit.scores)),
            Err(Error::NonConvergence { estimate, .. }) => Ok(Some(ScoreVector::new(estimate)?)),
            Err(Error::Disconnected { .. }) => Ok(None),
            Err(e) => Err(e),
        },
        Algorithm::Spectral => {
            match spectral_scores(
                &dataset.to_table(),
                dataset.m(),
                ChainMode::Empirical,
                &StationaryOptions::default(),
            ) {
                Ok((pi, _)) => Ok(Some(pi)),
                Err(Error::Validation(_) | Error::Reducible { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        }
    }
}

/// `K - |est ∩ truth|`.
pub fn edit_distance(est: &TopKSet, truth: &TopKSet) -> Result<usize> {
    if est.k() != truth.k() {
        return Err(Error::domain(format!(
            "sets have different sizes {} and {}",
            est.k(),
            truth.k()
        )));
    }
    let common = est.items().iter().filter(|&&i| truth.contains(i)).count();
    Ok(truth.k() - common)
}

pub fn exact_topk_accuracy(successes: usize, trials: usize) -> Result<f64> {
    if trials == 0 {
        return Err(Error::domain("trials must be at least 1"));
    }
    if successes > trials {
        return Err(Error::domain("successes exceed trials"));
    }
    Ok(successes as f64 / trials as f64)
}

/// Where the choice model comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSource {
    /// Partworths drawn i.i.d. standard normal from their own seed.
    RandomNormal { n: usize, seed: u64, noise: NoiseFamily },
    /// MNL with the given positive weights.
    Weights(Vec<f64>),
    Partworths { values: Vec<f64>, noise: NoiseFamily },
    /// Explicit per-menu probabilities with a ground-truth ordering file.
    Tabular { model: PathBuf, truth: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelSource,
    pub ms: Vec<usize>,
    pub ks: Vec<usize>,
    /// Expected sample sizes `p R C(n, m)`, strictly increasing.
    pub budgets: Vec<f64>,
    pub rounds: usize,
    pub trials: usize,
    pub algorithms: Vec<Algorithm>,
    pub seed: u64,
    pub mle: MleOptions,
}

/// Keys accepted in experiment config files.
pub const CONFIG_KEYS: &[&str] = &[
    "model",
    "n",
    "partworth_seed",
    "noise",
    "weights",
    "partworths",
    "tabular",
    "truth",
    "m",
    "K",
    "budgets",
    "rounds",
    "trials",
    "algorithms",
    "seed",
    "mle_max_iters",
    "mle_tolerance",
];

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| Error::validation(format!("bad value {t:?} for key {key}")))
        })
        .collect()
}

fn parse_one<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::validation(format!("bad value {v:?} for key {key}")))
}

impl ExperimentConfig {
    /// Parses flat `key = value` text; `#` starts a comment. Relative paths resolve
    /// against `base_dir`.
    pub fn from_text(text: &str, base_dir: &Path) -> Result<Self> {
        let mut kv = std::collections::BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(idx + 1, "expected `key = value`"))?;
            let k = k.trim();
            if !CONFIG_KEYS.contains(&k) {
                return Err(Error::parse(idx + 1, format!("unknown key {k:?}")));
            }
            if kv.insert(k.to_owned(), v.trim().to_owned()).is_some() {
                return Err(Error::parse(idx + 1, format!("key {k:?} given twice")));
            }
        }
        let get = |k: &str| kv.get(k).map(String::as_str);
        let need = |k: &str| get(k).ok_or_else(|| Error::validation(format!("missing key {k:?}")));
        let noise = get("noise").map(NoiseFamily::from_str).transpose()?;
        let path = |k: &str| -> Result<PathBuf> { Ok(base_dir.join(need(k)?)) };
        let model = match need("model")? {
            "normal" => ModelSource::RandomNormal {
                n: parse_one("n", need("n")?)?,
                seed: get("partworth_seed").map_or(Ok(0), |v| parse_one("partworth_seed", v))?,
                noise: noise.unwrap_or(NoiseFamily::GumbelStandard),
            },
            "weights" => ModelSource::Weights(parse_list("weights", need("weights")?)?),
            "partworths" => ModelSource::Partworths {
                values: parse_list("partworths", need("partworths")?)?,
                noise: noise.unwrap_or(NoiseFamily::GumbelStandard),
            },
            "tabular" => ModelSource::Tabular {
                model: path("tabular")?,
                truth: path("truth")?,
            },
            other => return Err(Error::validation(format!("unknown model kind {other:?}"))),
        };
        let mut mle = MleOptions::default();
        if let Some(v) = get("mle_max_iters") {
            mle.max_iters = parse_one("mle_max_iters", v)?;
        }
        if let Some(v) = get("mle_tolerance") {
            mle.gradient_tolerance = parse_one("mle_tolerance", v)?;
        }
        let cfg = ExperimentConfig {
            model,
            ms: parse_list("m", need("m")?)?,
            ks: parse_list("K", need("K")?)?,
            budgets: parse_list("budgets", need("budgets")?)?,
            rounds: get("rounds").map_or(Ok(100), |v| parse_one("rounds", v))?,
            trials: get("trials").map_or(Ok(100), |v| parse_one("trials", v))?,
            algorithms: match get("algorithms") {
                Some(v) => parse_list("algorithms", v)?,
                None => Algorithm::ALL.to_vec(),
            },
            seed: get("seed").map_or(Ok(0), |v| parse_one("seed", v))?,
            mle,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let base = path.parent().unwrap_or(Path::new("."));
        ExperimentConfig::from_text(&io::read_to_string(path)?, base)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::validation("trials must be at least 1"));
        }
        if self.rounds == 0 {
            return Err(Error::validation("rounds must be at least 1"));
        }
        if self.ms.is_empty() || self.ks.is_empty() || self.algorithms.is_empty() {
            return Err(Error::validation("m, K and algorithm lists must be nonempty"));
        }
        if self.budgets.is_empty() || self.budgets.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
            return Err(Error::validation("budgets must be positive and finite"));
        }
        if self.budgets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::validation("budgets must be strictly increasing"));
        }
        Ok(())
    }

    /// Human-readable resolved configuration, one `key = value` per line.
    pub fn describe(&self) -> String {
        let list = |v: &[String]| v.join(",");
        let mut s = String::new();
        match &self.model {
            ModelSource::RandomNormal { n, seed, noise } => {
                let _ = writeln!(s, "model = normal\nn = {n}\npartworth_seed = {seed}\nnoise = {noise}");
            }
            ModelSource::Weights(w) => {
                let _ = writeln!(s, "model = weights\nweights = {}", list(&w.iter().map(f64::to_string).collect::<Vec<_>>()));
            }
            ModelSource::Partworths { values, noise } => {
                let _ = writeln!(
                    s,
                    "model = partworths\npartworths = {}\nnoise = {noise}",
                    list(&values.iter().map(f64::to_string).collect::<Vec<_>>())
                );
            }
            ModelSource::Tabular { model, truth } => {
                let _ = writeln!(s, "model = tabular\ntabular = {}\ntruth = {}", model.display(), truth.display());
            }
        }
        let strs = |v: &[usize]| list(&v.iter().map(usize::to_string).collect::<Vec<_>>());
        let _ = writeln!(s, "m = {}", strs(&self.ms));
        let _ = writeln!(s, "K = {}", strs(&self.ks));
        let _ = writeln!(s, "budgets = {}", list(&self.budgets.iter().map(f64::to_string).collect::<Vec<_>>()));
        let _ = writeln!(s, "rounds = {}\ntrials = {}\nseed = {}", self.rounds, self.trials, self.seed);
        let _ = writeln!(s, "algorithms = {}", list(&self.algorithms.iter().map(|a| a.name().to_owned()).collect::<Vec<_>>()));
        let _ = writeln!(s, "mle_max_iters = {}\nmle_tolerance = {}", self.mle.max_iters, self.mle.gradient_tolerance);
        s
    }
}

/// Standard-normal partworths from a dedicated seed.
pub fn normal_partworths(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::seeded(seed);
    (0..n).map(|_| rng::standard_normal(&mut r)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub algorithm: Algorithm,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub expected_samples: f64,
    pub trials: usize,
    pub successes: usize,
    pub accuracy: f64,
    pub median_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
}

impl ExperimentResult {
    pub const CSV_HEADER: &'static str =
        "algorithm,n,m,K,expected_samples,trials,successes,accuracy,median_time_s";

    pub fn to_csv(&self) -> String {
        self.csv(true)
    }

    /// CSV without wall times (the time column is left empty), for byte-stable output.
    pub fn to_csv_without_times(&self) -> String {
        self.csv(false)
    }

    fn csv(&self, times: bool) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            let _ = write!(
                s,
                "{},{},{},{},{},{},{},{},",
                r.algorithm, r.n, r.m, r.k, r.expected_samples, r.trials, r.successes, r.accuracy
            );
            if times {
                let _ = write!(s, "{:.6e}", r.median_time_s);
            }
            s.push('\n');
        }
        s
    }

    pub fn row(&self, algorithm: Algorithm, m: usize, k: usize, budget: f64) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.algorithm == algorithm && r.m == m && r.k == k && r.expected_samples == budget)
    }
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

/// Runs the trial protocol for an arbitrary sampler with a known best-first ordering.
pub fn run_protocol(
    sampler: &dyn ChoiceSampler,
    truth: &[usize],
    config: &ExperimentConfig,
) -> Result<ExperimentResult> {
    config.validate()?;
    let n = sampler.n();
    if truth.len() != n {
        return Err(Error::validation(format!(
            "truth ordering has {} items, model has {n}",
            truth.len()
        )));
    }
    for &k in &config.ks {
        if k < 1 || k > n {
            return Err(Error::validation(format!("K = {k} outside 1..={n}")));
        }
    }
    let truths: Vec<TopKSet> = config
        .ks
        .iter()
        .map(|&k| TopKSet::new(truth[..k].to_vec()))
        .collect();
    let mut rows = Vec::new();
    for &m in &config.ms {
        let capacity = binomial(n, m) as f64 * config.rounds as f64;
        let p_of = |b: f64| b / capacity;
        let p_max = p_of(*config.budgets.last().expect("nonempty grid"));
        if p_max > 1.0 {
            return Err(Error::validation(format!(
                "budget {} exceeds R * C(n, m) = {capacity} for m = {m}",
                config.budgets.last().unwrap()
            )));
        }
        let m_seed = rng::derive_seed(config.seed, m as u64);
        // outcome[trial][alg][budget][k] = (success, seconds)
        type Outcome = Vec<Vec<Vec<(bool, f64)>>>;
        let per_trial: Vec<Outcome> = (0..config.trials)
            .into_par_iter()
            .map(|t| -> Result<Outcome> {
                let mut sc = SamplingConfig::new(n, m, p_max, config.rounds, rng::derive_seed(m_seed, t as u64))?;
                sc.allow_large = true;
                let keyed = simulate_keyed(sampler, &sc)?;
                let mut out = vec![vec![Vec::new(); config.budgets.len()]; config.algorithms.len()];
                for (bi, &b) in config.budgets.iter().enumerate() {
                    let ds = keyed.at(p_of(b).min(p_max))?;
                    for (ai, &alg) in config.algorithms.iter().enumerate() {
                        let start = Instant::now();
                        let scores = score_dataset(alg, &ds, &config.mle)?;
                        let secs = start.elapsed().as_secs_f64();
                        out[ai][bi] = truths
                            .iter()
                            .map(|truth| {
                                let ok = match &scores {
                                    Some(s) => s.top_k(truth.k()).map(|e| &e == truth).unwrap_or(false),
                                    None => false,
                                };
                                (ok, secs)
                            })
                            .collect();
                    }
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        for (ai, &alg) in config.algorithms.iter().enumerate() {
            for (ki, &k) in config.ks.iter().enumerate() {
                for (bi, &b) in config.budgets.iter().enumerate() {
                    let successes = per_trial.iter().filter(|o| o[ai][bi][ki].0).count();
                    let mut times: Vec<f64> = per_trial.iter().map(|o| o[ai][bi][ki].1).collect();
                    rows.push(ResultRow {
                        algorithm: alg,
                        n,
                        m,
                        k,
                        expected_samples: b,
                        trials: config.trials,
                        successes,
                        accuracy: exact_topk_accuracy(successes, config.trials)?,
                        median_time_s: median(&mut times),
                    });
                }
            }
        }
    }
    rows.sort_by(|a, b| {
        (a.algorithm, a.m, a.k)
            .cmp(&(b.algorithm, b.m, b.k))
            .then(a.expected_samples.total_cmp(&b.expected_samples))
    });
    Ok(ExperimentResult { rows })
}

/// Synthetic experiment on a parametric model; the truth is the partworth order.
pub fn run_synthetic(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let model = match &config.model {
        ModelSource::RandomNormal { n, seed, noise } => {
            ParametricChoiceModel::new(PartworthVector::new(normal_partworths(*n, *seed))?, *noise)
        }
        ModelSource::Weights(w) => ParametricChoiceModel::mnl_from_weights(w)?,
        ModelSource::Partworths { values, noise } => {
            ParametricChoiceModel::new(PartworthVector::new(values.clone())?, *noise)
        }
        ModelSource::Tabular { .. } => {
            return Err(Error::validation("tabular models run through run_real"))
        }
    };
    let truth = ordering(model.partworths.values());
    run_protocol(&model, &truth, config)
}

/// Experiment on an explicit tabular model scored against a given ordering.
pub fn run_real(
    model: &TabularChoiceModel,
    truth: &[usize],
    config: &ExperimentConfig,
) -> Result<ExperimentResult> {
    let n = model.n();
    for &m in &config.ms {
        let have = model.table().iter().filter(|(s, _)| s.len() == m).count() as u128;
        if have != binomial(n, m) {
            return Err(Error::validation(format!(
                "tabular model covers {have} of the {} menus of size {m}",
                binomial(n, m)
            )));
        }
    }
    run_protocol(model, truth, config)
}

/// Dispatches on the model source.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    match &config.model {
        ModelSource::Tabular { model, truth } => {
            let model = TabularChoiceModel::read(model)?;
            let truth = read_truth_csv(&io::read_to_string(truth)?)?;
            run_real(&model, &truth, config)
        }
        _ => run_synthetic(config),
    }
}

/// Median wall time over `runs` sequential repetitions of each algorithm on one dataset.
pub fn time_algorithms(
    dataset: &ChoiceDataset,
    algorithms: &[Algorithm],
    runs: usize,
    mle: &MleOptions,
) -> Result<Vec<(Algorithm, f64)>> {
    let runs = runs.max(5);
    algorithms
        .iter()
        .map(|&alg| {
            let mut times = Vec::with_capacity(runs);
            for _ in 0..runs {
                let start = Instant::now();
                let scores = score_dataset(alg, dataset, mle)?;
                times.push(start.elapsed().as_secs_f64());
                std::hint::black_box(scores);
            }
            Ok((alg, median(&mut times)))
        })
        .collect()
}
