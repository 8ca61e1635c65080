//! Spectral ranking: the stationary distribution of a Markov chain built from choices.
//!
//! From state `i` the chain moves to `j` at rate `(1 / C(n-1, m-1)) * sum_{S ni i,j} rho(j|S)`.
//! The stationary probabilities rank the items.

use crate::choice_models::ChoiceTable;
use crate::error::{Error, Result};
use crate::menu::{binomial, binomial_f64, check_menu_size};

use super::{top_k, ScoreVector, TopKSet};

/// How per-menu masses become the probabilities `rho(j|S)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainMode {
    /// Masses are used as given and every size-`m` menu must be present.
    Exact,
    /// Masses of each observed menu are normalized to frequencies; unobserved menus
    /// contribute nothing, but every pair of items must appear together somewhere.
    Empirical,
}

/// A row-stochastic `n x n` matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain {
    n: usize,
    entries: Vec<f64>,
    /// `Some(c)` when off-diagonal mass was scaled by `c` to keep the diagonal nonnegative.
    pub damping: Option<f64>,
}

impl MarkovChain {
    /// Wraps a row-stochastic matrix given as rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::domain("transition matrix must be square and nonempty"));
        }
        let entries: Vec<f64> = rows.iter().flatten().copied().collect();
        let chain = MarkovChain {
            n,
            entries,
            damping: None,
        };
        for i in 0..n {
            let row = chain.row(i);
            if row.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
                return Err(Error::domain(format!("row {} has a negative or non-finite entry", i + 1)));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::domain(format!("row {} sums to {sum}", i + 1)));
            }
        }
        Ok(chain)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    /// `out = pi * M`.
    fn left_multiply(&self, pi: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for (i, &p) in pi.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (o, &m) in out.iter_mut().zip(self.row(i)) {
                *o += p * m;
            }
        }
    }

    fn reachable(&self, start: usize, forward: bool) -> Vec<bool> {
        let mut seen = vec![false; self.n];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(s) = stack.pop() {
            for t in 0..self.n {
                let w = if forward { self.get(s, t) } else { self.get(t, s) };
                if w > 0.0 && !seen[t] {
                    seen[t] = true;
                    stack.push(t);
                }
            }
        }
        seen
    }

    /// Checks that every state reaches every other along positive transitions.
    pub fn check_irreducible(&self) -> Result<()> {
        if let Some(state) = self.reachable(0, true).iter().position(|&r| !r) {
            return Err(Error::Reducible { state, from: 0 });
        }
        if let Some(from) = self.reachable(0, false).iter().position(|&r| !r) {
            return Err(Error::Reducible { state: 0, from });
        }
        Ok(())
    }
}

/// Builds the choice Markov chain from per-menu masses over menus of size `m`.
pub fn build_markov_chain(table: &ChoiceTable, m: usize, mode: ChainMode) -> Result<MarkovChain> {
    let n = table.n();
    check_menu_size(n, m)?;
    let mut off = vec![0.0; n * n];
    let mut menus = 0u128;
    let mut co_observed = vec![false; n * n];
    for (menu, masses) in table.iter() {
        if menu.len() != m {
            return Err(Error::validation(format!(
                "menu {menu} has size {}, expected {m}",
                menu.len()
            )));
        }
        menus += 1;
        let scale = match mode {
            ChainMode::Exact => 1.0,
            ChainMode::Empirical => {
                let total: f64 = masses.iter().sum();
                if total <= 0.0 {
                    continue;
                }
                1.0 / total
            }
        };
        let items = menu.items();
        for &i in items {
            for (&j, &x) in items.iter().zip(masses) {
                if i != j {
                    off[i * n + j] += x * scale;
                    co_observed[i * n + j] = true;
                }
            }
        }
    }
    match mode {
        ChainMode::Exact => {
            if menus != binomial(n, m) {
                return Err(Error::validation(format!(
                    "exact mode needs all {} menus of size {m}, got {menus}",
                    binomial(n, m)
                )));
            }
        }
        ChainMode::Empirical => {
            for i in 0..n {
                for j in i + 1..n {
                    if !co_observed[i * n + j] {
                        return Err(Error::validation(format!(
                            "items {} and {} never appear in an observed menu together",
                            i + 1,
                            j + 1
                        )));
                    }
                }
            }
        }
    }
    let norm = binomial_f64(n - 1, m - 1);
    off.iter_mut().for_each(|x| *x /= norm);
    let row_off = |off: &[f64], i: usize| -> f64 {
        (0..n).filter(|&j| j != i).map(|j| off[i * n + j]).sum()
    };
    let max_row = (0..n).map(|i| row_off(&off, i)).fold(0.0, f64::max);
    let mut damping = None;
    if max_row > 1.0 {
        match mode {
            ChainMode::Exact => {
                let i = (0..n).find(|&i| row_off(&off, i) > 1.0).unwrap_or(0);
                return Err(Error::Construction(format!(
                    "diagonal entry of row {} would be {:.6}; input masses are inconsistent",
                    i + 1,
                    1.0 - row_off(&off, i)
                )));
            }
            ChainMode::Empirical => {
                // Uniform scaling of off-diagonal mass keeps the stationary distribution.
                let c = 1.0 / (2.0 * max_row);
                off.iter_mut().for_each(|x| *x *= c);
                damping = Some(c);
            }
        }
    }
    for i in 0..n {
        off[i * n + i] = 0.0;
        off[i * n + i] = 1.0 - row_off(&off, i);
    }
    Ok(MarkovChain {
        n,
        entries: off,
        damping,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryOptions {
    /// Stop when `||pi M - pi||_1 <= tolerance`.
    pub tolerance: f64,
    pub max_iters: usize,
}

impl Default for StationaryOptions {
    fn default() -> Self {
        StationaryOptions {
            tolerance: 1e-13,
            max_iters: 1_000_000,
        }
    }
}

/// Stationary distribution by power iteration on the lazy chain `(I + M) / 2` from the
/// uniform vector; the lazy chain has the same stationary distribution and is aperiodic.
pub fn stationary_distribution(chain: &MarkovChain, options: &StationaryOptions) -> Result<ScoreVector> {
    if !(options.tolerance > 0.0) || options.max_iters == 0 {
        return Err(Error::domain("tolerance must be positive and max_iters at least 1"));
    }
    chain.check_irreducible()?;
    let n = chain.n;
    let mut pi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..options.max_iters {
        chain.left_multiply(&pi, &mut next);
        residual = pi.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        if residual <= options.tolerance {
            break;
        }
        let mut total = 0.0;
        for (p, q) in pi.iter_mut().zip(&next) {
            *p = 0.5 * (*p + q);
            total += *p;
        }
        pi.iter_mut().for_each(|p| *p /= total);
    }
    if residual > options.tolerance {
        return Err(Error::PowerIteration {
            iterations: options.max_iters,
            residual,
        });
    }
    Ok(ScoreVector(pi))
}

/// Stationary scores of the choice chain, together with the chain itself.
pub fn spectral_scores(
    table: &ChoiceTable,
    m: usize,
    mode: ChainMode,
    options: &StationaryOptions,
) -> Result<(ScoreVector, MarkovChain)> {
    let chain = build_markov_chain(table, m, mode)?;
    let pi = stationary_distribution(&chain, options)?;
    Ok((pi, chain))
}

/// Top-K items by stationary probability.
pub fn spectral_rank(table: &ChoiceTable, m: usize, mode: ChainMode, k: usize) -> Result<TopKSet> {
    let (pi, _) = spectral_scores(table, m, mode, &StationaryOptions::default())?;
    top_k(pi.values(), k)
}
