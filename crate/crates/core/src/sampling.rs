//! The multi-round uniform sampling model and choice datasets.
//!
//! In each of `R` rounds every size-`m` menu is offered independently with probability
//! `p`; each offered menu yields one choice from the model.

use std::path::Path;

use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::choice_models::{ChoiceSampler, ChoiceTable};
use crate::error::{Error, Result};
use crate::io;
use crate::menu::{binomial, check_menu_size, Combinations, Menu};
use crate::rng::{self, SimRng};

/// Largest number of candidate (round, menu) trials simulated without an explicit override.
pub const MAX_CANDIDATE_TRIALS: u128 = 1_000_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingConfig {
    pub n: usize,
    pub m: usize,
    pub p: f64,
    pub rounds: usize,
    pub seed: u64,
    /// Lifts the [`MAX_CANDIDATE_TRIALS`] guard.
    pub allow_large: bool,
}

impl SamplingConfig {
    pub fn new(n: usize, m: usize, p: f64, rounds: usize, seed: u64) -> Result<Self> {
        let cfg = SamplingConfig {
            n,
            m,
            p,
            rounds,
            seed,
            allow_large: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_menu_size(self.n, self.m)?;
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::domain(format!(
                "offer probability must lie in (0, 1], got {}",
                self.p
            )));
        }
        if self.rounds == 0 {
            return Err(Error::domain("at least one round is required"));
        }
        Ok(())
    }

    /// `R * C(n, m)`, the number of (round, menu) inclusion trials.
    pub fn candidate_trials(&self) -> u128 {
        binomial(self.n, self.m).saturating_mul(self.rounds as u128)
    }
}

/// `p * R * C(n, m)`.
pub fn expected_sample_size(config: &SamplingConfig) -> Result<f64> {
    config.validate()?;
    Ok(config.p * config.rounds as f64 * binomial(config.n, config.m) as f64)
}

/// One observation: the round (0-based), the offered menu and the chosen item.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation<'a> {
    pub round: u32,
    pub menu: &'a [usize],
    pub choice: usize,
}

/// Observations of a single menu size, stored flat in (round, menu) order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChoiceDataset {
    n: usize,
    m: usize,
    rounds: Vec<u32>,
    items: Vec<usize>,
    choices: Vec<usize>,
}

impl ChoiceDataset {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        check_menu_size(n, m)?;
        Ok(ChoiceDataset {
            n,
            m,
            rounds: Vec::new(),
            items: Vec::new(),
            choices: Vec::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.choices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.choices.is_empty()
    }

    /// Appends an observation; `menu` may be in any order.
    pub fn push(&mut self, round: u32, menu: &[usize], choice: usize) -> Result<()> {
        if menu.len() != self.m {
            return Err(Error::validation(format!(
                "menu has {} items, dataset menu size is {}",
                menu.len(),
                self.m
            )));
        }
        let menu = Menu::new(menu.to_vec(), self.n)?;
        if !menu.contains(choice) {
            return Err(Error::validation(format!(
                "chosen item {} is not in menu {menu}",
                choice + 1
            )));
        }
        self.push_unchecked(round, menu.items(), choice);
        Ok(())
    }

    fn push_unchecked(&mut self, round: u32, menu: &[usize], choice: usize) {
        self.rounds.push(round);
        self.items.extend_from_slice(menu);
        self.choices.push(choice);
    }

    pub fn get(&self, idx: usize) -> Observation<'_> {
        Observation {
            round: self.rounds[idx],
            menu: &self.items[idx * self.m..(idx + 1) * self.m],
            choice: self.choices[idx],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Observation<'_>> + '_ {
        (0..self.len()).map(move |k| self.get(k))
    }

    pub fn choices(&self) -> &[usize] {
        &self.choices
    }

    /// Keeps the observations whose index satisfies `keep`.
    pub fn filter_indices(&self, mut keep: impl FnMut(usize) -> bool) -> ChoiceDataset {
        let mut out = ChoiceDataset {
            n: self.n,
            m: self.m,
            rounds: Vec::new(),
            items: Vec::new(),
            choices: Vec::new(),
        };
        for k in 0..self.len() {
            if keep(k) {
                let o = self.get(k);
                out.push_unchecked(o.round, o.menu, o.choice);
            }
        }
        out
    }

    /// Choice counts aggregated per observed menu.
    pub fn to_table(&self) -> ChoiceTable {
        let mut table = ChoiceTable::new(self.n);
        for o in self.iter() {
            table.add(&Menu::from_sorted(o.menu), o.choice, 1.0);
        }
        table
    }

    /// Text form: `# n=<n>` then one `r;m;i1,...,im;y` line per observation, 1-based.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(16 + self.len() * (4 + 3 * self.m));
        s.push_str(&format!("# n={}\n", self.n));
        for o in self.iter() {
            s.push_str(&format!(
                "{};{};{};{}\n",
                o.round + 1,
                self.m,
                io::join_items(o.menu),
                o.choice + 1
            ));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut declared_n = None;
        let mut parsed: Vec<(usize, u32, Vec<usize>, usize)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('#') {
                if let Some(n) = io::header_item_count(line, lineno)? {
                    declared_n = Some(n);
                }
                continue;
            }
            let fields: Vec<&str> = line.split(';').collect();
            if fields.len() != 4 {
                return Err(Error::parse(lineno, "expected `r;m;items;choice`"));
            }
            let round: u32 = fields[0]
                .trim()
                .parse()
                .ok()
                .filter(|&r: &u32| r >= 1)
                .ok_or_else(|| Error::parse(lineno, format!("bad round {:?}", fields[0])))?;
            let m: usize = fields[1]
                .trim()
                .parse()
                .map_err(|_| Error::parse(lineno, format!("bad menu size {:?}", fields[1])))?;
            let items = io::parse_items(fields[2], lineno)?;
            if items.len() != m {
                return Err(Error::parse(
                    lineno,
                    format!("menu size {m} but {} items listed", items.len()),
                ));
            }
            let choice = io::parse_items(fields[3], lineno)?;
            if choice.len() != 1 {
                return Err(Error::parse(lineno, "exactly one chosen item expected"));
            }
            parsed.push((lineno, round - 1, items, choice[0]));
        }
        let max_item = parsed
            .iter()
            .flat_map(|(_, _, items, _)| items.iter().copied())
            .max()
            .map_or(0, |i| i + 1);
        let n = declared_n.unwrap_or(max_item);
        let m = match parsed.first() {
            Some((_, _, items, _)) => items.len(),
            None => {
                return Err(Error::validation(
                    "dataset has no observations, so its menu size is unknown",
                ))
            }
        };
        let mut ds = ChoiceDataset::new(n, m).map_err(|e| Error::parse(parsed[0].0, e))?;
        for (lineno, round, items, choice) in parsed {
            ds.push(round, &items, choice)
                .map_err(|e| Error::parse(lineno, e))?;
        }
        Ok(ds)
    }

    pub fn read(path: &Path) -> Result<Self> {
        ChoiceDataset::from_text(&io::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        io::write_string(path, &self.to_text())
    }
}

/// A dataset drawn at some offer probability, with the uniform inclusion key of each
/// observation. Filtering `key < p` for `p` below the draw probability yields a dataset
/// distributed exactly as one simulated at `p`, and datasets for increasing `p` are nested.
#[derive(Debug, Clone)]
pub struct KeyedDataset {
    pub dataset: ChoiceDataset,
    pub keys: Vec<f64>,
    pub p_max: f64,
}

impl KeyedDataset {
    pub fn at(&self, p: f64) -> Result<ChoiceDataset> {
        if !(p > 0.0 && p <= self.p_max) {
            return Err(Error::domain(format!(
                "offer probability {p} outside (0, {}]",
                self.p_max
            )));
        }
        Ok(self.dataset.filter_indices(|k| self.keys[k] < p))
    }
}

fn check_model(model: &dyn ChoiceSampler, config: &SamplingConfig) -> Result<()> {
    config.validate()?;
    if model.n() != config.n {
        return Err(Error::domain(format!(
            "model has {} items but the sampling config has n = {}",
            model.n(),
            config.n
        )));
    }
    if !config.allow_large && config.candidate_trials() > MAX_CANDIDATE_TRIALS {
        return Err(Error::domain(format!(
            "R * C(n, m) = {} candidate trials exceeds the limit of {MAX_CANDIDATE_TRIALS}; \
             set the large-run override to proceed",
            config.candidate_trials()
        )));
    }
    Ok(())
}

type RoundDraws = (Vec<usize>, Vec<usize>, Vec<f64>);

fn simulate_round(
    model: &dyn ChoiceSampler,
    config: &SamplingConfig,
    round: usize,
) -> Result<RoundDraws> {
    let mut rng: SimRng = rng::seeded(rng::derive_seed(config.seed, round as u64));
    let mut combos = Combinations::new((0..config.n).collect(), config.m);
    let mut menu = Vec::with_capacity(config.m);
    let (mut items, mut choices, mut keys) = (Vec::new(), Vec::new(), Vec::new());
    while combos.next_slice(&mut menu) {
        let key = rng::open_unit(&mut rng);
        if key < config.p {
            choices.push(model.draw(&menu, &mut rng)?);
            items.extend_from_slice(&menu);
            keys.push(key);
        }
    }
    Ok((items, choices, keys))
}

/// Simulates `R` rounds with `config.p` as the offer probability and keeps the keys.
pub fn simulate_keyed(model: &dyn ChoiceSampler, config: &SamplingConfig) -> Result<KeyedDataset> {
    check_model(model, config)?;
    let per_round: Vec<RoundDraws> = (0..config.rounds)
        .into_par_iter()
        .map(|r| simulate_round(model, config, r))
        .collect::<Result<_>>()?;
    let mut dataset = ChoiceDataset::new(config.n, config.m)?;
    let mut all_keys = Vec::new();
    for (r, (items, choices, keys)) in per_round.into_iter().enumerate() {
        dataset.rounds.extend(std::iter::repeat_n(r as u32, choices.len()));
        dataset.items.extend(items);
        dataset.choices.extend(choices);
        all_keys.extend(keys);
    }
    Ok(KeyedDataset {
        dataset,
        keys: all_keys,
        p_max: config.p,
    })
}

/// Simulates a choice dataset under the multi-round uniform sampling model.
pub fn simulate_dataset(model: &dyn ChoiceSampler, config: &SamplingConfig) -> Result<ChoiceDataset> {
    Ok(simulate_keyed(model, config)?.dataset)
}

/// Pearson chi-square statistic and its 1-degree-of-freedom p-value for independence of
/// two paired indicator sequences.
pub fn chi_square_independence(a: &[bool], b: &[bool]) -> (f64, f64) {
    assert_eq!(a.len(), b.len());
    let mut table = [[0f64; 2]; 2];
    for (&x, &y) in a.iter().zip(b) {
        table[x as usize][y as usize] += 1.0;
    }
    let total = a.len() as f64;
    let rows = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
    let cols = [table[0][0] + table[1][0], table[0][1] + table[1][1]];
    let mut stat = 0.0;
    for r in 0..2 {
        for c in 0..2 {
            let expected = rows[r] * cols[c] / total;
            if expected > 0.0 {
                stat += (table[r][c] - expected).powi(2) / expected;
            }
        }
    }
    let dist = ChiSquared::new(1.0).expect("one degree of freedom");
    (stat, dist.sf(stat))
}
