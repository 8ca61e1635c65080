//! Self-check suite: numerical identities and equivalences that must hold exactly (up to
//! floating point) on exact choice probabilities.

use std::fmt;

use rand::Rng;

use crate::choice_models::{ChoiceTable, ExactChoiceModel, MnlWeights, TabularChoiceModel};
use crate::error::Result;
use crate::menu::enumerate_menus;
use crate::rankers::{
    borda_from_table, mle_fit, ordering, spectral_scores, ChainMode, MleOptions,
    StationaryOptions,
};
use crate::rng::{self, SimRng};
use crate::theory::{
    borda_scores_exact, kl_special_pair, mnl_gap_sandwich, simple_inequality, HardPair,
};

/// Four-item pairwise win-rate matrix with `P[i][j]` read as the choice mass of `j` in the
/// menu `{i, j}`. Its rows are not complementary (`P[i][j] + P[j][i] != 1`), so it is used
/// as raw masses.
pub const COUNTEREXAMPLE_P: [[f64; 4]; 4] = [
    [0.5, 0.6, 0.55, 0.55],
    [0.2, 0.5, 0.85, 0.6],
    [0.45, 0.4, 0.5, 0.95],
    [0.45, 0.45, 0.15, 0.5],
];

/// A consistent pairwise model (`Q[i][j] = p(j | {i, j})`, complementary entries) on which
/// Borda/MLE pick top-2 `{2, 4}` while the spectral ranker picks `{3, 4}` (1-based).
pub const DIVERGENCE_Q: [[f64; 4]; 4] = [
    [0.5, 0.94, 0.47, 0.94],
    [0.06, 0.5, 0.42, 0.93],
    [0.53, 0.58, 0.5, 0.5],
    [0.06, 0.07, 0.5, 0.5],
];

pub fn matrix_rows<const N: usize>(p: &[[f64; N]; N]) -> Vec<Vec<f64>> {
    p.iter().map(|r| r.to_vec()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Worst deviation observed (0 for order comparisons that matched).
    pub residual: f64,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<28} residual={:.3e}  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.residual,
            self.detail
        )
    }
}

fn check(name: &'static str, passed: bool, residual: f64, detail: String) -> CheckResult {
    CheckResult {
        name,
        passed,
        residual,
        detail,
    }
}

/// Knobs for the suite; `kl_perturbation` scales the compact KL value by `1 + eps` to
/// confirm that the identity check can fail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    pub kl_perturbation: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            seed: 20_240_601,
            kl_perturbation: 0.0,
        }
    }
}

fn random_weights(r: &mut SimRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng::standard_normal(r).exp()).collect()
}

/// Exact-probability table over all size-`m` menus.
pub fn exact_table(model: &dyn ExactChoiceModel, m: usize) -> Result<ChoiceTable> {
    let mut t = ChoiceTable::new(model.n());
    let mut buf = Vec::new();
    for s in enumerate_menus(model.n(), m)? {
        model.menu_probs(s.items(), &mut buf)?;
        t.insert(s, buf.clone())?;
    }
    Ok(t)
}

/// Random tabular model: each menu's probabilities are normalized uniform draws.
pub fn random_tabular(r: &mut SimRng, n: usize, m: usize) -> Result<TabularChoiceModel> {
    let mut t = ChoiceTable::new(n);
    for s in enumerate_menus(n, m)? {
        let raw: Vec<f64> = (0..m).map(|_| r.random_range(0.05..1.0)).collect();
        let z: f64 = raw.iter().sum();
        t.insert(s, raw.iter().map(|x| x / z).collect())?;
    }
    t.normalized()
}

pub fn check_kl_identity(instances: usize, seed: u64, perturbation: f64) -> Result<CheckResult> {
    let mut r = rng::seeded(seed);
    let mut worst: f64 = 0.0;
    let mut nontrivial = 0;
    for _ in 0..instances {
        let n = r.random_range(4..=10usize);
        let m = r.random_range(2..=4usize.min(n - 1));
        let k = r.random_range(1..n - 1);
        let a = r.random_range(k - 1..n);
        let mut b = r.random_range(k - 1..n);
        if b == a {
            b = if a + 1 < n { a + 1 } else { k - 1 };
        }
        let pair = HardPair {
            n,
            m,
            k,
            v: r.random_range(0.5..2.0),
            delta: r.random_range(0.05..1.5),
            p: r.random_range(0.05..1.0),
            rounds: r.random_range(1..200),
            a,
            b,
        };
        let (compact, brute) = kl_special_pair(&pair)?;
        let compact = compact * (1.0 + perturbation);
        if brute > 0.0 {
            nontrivial += 1;
        }
        worst = worst.max((compact - brute).abs() / (1.0 + brute));
    }
    Ok(check(
        "kl_compact_identity",
        worst <= 1e-9 && nontrivial > 0,
        worst,
        format!("{instances} hard-instance pairs, |compact-brute|/(1+brute) <= 1e-9"),
    ))
}

pub fn check_sandwich(instances: usize, seed: u64) -> Result<CheckResult> {
    let mut r = rng::seeded(seed);
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let n = r.random_range(4..=10usize);
        let m = r.random_range(2..n);
        let w = random_weights(&mut r, n);
        let ord = ordering(&w);
        let x = r.random_range(0..n - 1);
        let y = r.random_range(x + 1..n);
        let s = mnl_gap_sandwich(&w, ord[x], ord[y], m)?;
        let slack = 1e-12 * s.exact.abs();
        if s.lower > s.exact + slack || s.exact > s.upper + slack {
            violations += 1;
            worst = worst.max((s.lower - s.exact).max(s.exact - s.upper));
        }
    }
    Ok(check(
        "mnl_gap_sandwich",
        violations == 0,
        worst,
        format!("{violations} violations in {instances} MNL instances"),
    ))
}

pub fn check_simple_inequality(instances: usize, seed: u64) -> Result<CheckResult> {
    let mut r = rng::seeded(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let n = r.random_range(3..=9usize);
        let m = r.random_range(2..=n.min(5));
        let k = r.random_range(1..n);
        let taus = borda_scores_exact(&MnlWeights::new(random_weights(&mut r, n))?, m)?.taus;
        let (lhs, max) = simple_inequality(&taus, k)?;
        worst = worst.max((lhs - max).abs() / lhs.max(1.0));
    }
    Ok(check(
        "simple_inequality_max",
        worst <= 1e-12,
        worst,
        format!("{instances} exact score vectors, relative error <= 1e-12"),
    ))
}

pub fn check_borda_mle(instances: usize, seed: u64) -> Result<CheckResult> {
    let mut r = rng::seeded(seed);
    let mut mismatches = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let n = r.random_range(4..=8usize);
        let m = r.random_range(2..=3usize);
        let model = random_tabular(&mut r, n, m)?;
        let taus = borda_scores_exact(&model, m)?.taus;
        let fit = mle_fit(model.table(), &MleOptions::default())?;
        worst = worst.max(fit.residual);
        if ordering(fit.scores.values()) != ordering(&taus) {
            mismatches += 1;
        }
    }
    Ok(check(
        "borda_mle_equivalence",
        mismatches == 0 && worst <= 1e-8,
        worst,
        format!("{mismatches} order mismatches in {instances} tabular models (residual shown)"),
    ))
}

pub fn check_spectral_consistency(instances: usize, seed: u64) -> Result<CheckResult> {
    let mut r = rng::seeded(seed);
    let mut mismatches = 0;
    for _ in 0..instances {
        let n = r.random_range(3..=8usize);
        let m = r.random_range(2..=3usize.min(n));
        let w = random_weights(&mut r, n);
        let table = exact_table(&MnlWeights::new(w.clone())?, m)?;
        let (pi, _) = spectral_scores(&table, m, ChainMode::Exact, &StationaryOptions::default())?;
        if ordering(pi.values()) != ordering(&w) {
            mismatches += 1;
        }
    }
    Ok(check(
        "spectral_consistency",
        mismatches == 0,
        mismatches as f64,
        format!("{mismatches} order mismatches in {instances} exact MNL chains"),
    ))
}

pub fn check_borda_sum(instances: usize, seed: u64) -> Result<CheckResult> {
    let mut r = rng::seeded(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let n = r.random_range(3..=10usize);
        let m = r.random_range(2..=n);
        let taus = borda_scores_exact(&MnlWeights::new(random_weights(&mut r, n))?, m)?.taus;
        worst = worst.max((taus.iter().sum::<f64>() - n as f64 / m as f64).abs());
    }
    Ok(check(
        "borda_sum_identity",
        worst <= 1e-10,
        worst,
        format!("sum of scores equals n/m on {instances} models"),
    ))
}

fn one_based(v: &[usize]) -> String {
    v.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(",")
}

/// Orderings (1-based, best first) of Borda, MLE and spectral ranking on the raw
/// counterexample masses.
pub fn counterexample_orderings() -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let table = ChoiceTable::from_pairwise_matrix_raw(&matrix_rows(&COUNTEREXAMPLE_P))?;
    let borda = ordering(borda_from_table(&table).values());
    let mle = ordering(mle_fit(&table, &MleOptions::default())?.scores.values());
    let (pi, _) = spectral_scores(&table, 2, ChainMode::Exact, &StationaryOptions::default())?;
    Ok((borda, mle, ordering(pi.values())))
}

/// Borda, MLE and spectral top-2 sets on the consistent divergence model.
pub fn divergence_top2() -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let model = crate::choice_models::tabular_from_matrix(&matrix_rows(&DIVERGENCE_Q))?;
    let table = model.table();
    let top2 = |s: &[f64]| -> Result<Vec<usize>> { Ok(crate::rankers::top_k(s, 2)?.items().to_vec()) };
    let borda = top2(borda_from_table(table).values())?;
    let mle = top2(mle_fit(table, &MleOptions::default())?.scores.values())?;
    let (pi, _) = spectral_scores(table, 2, ChainMode::Exact, &StationaryOptions::default())?;
    Ok((borda, mle, top2(pi.values())?))
}

pub fn check_counterexample() -> Result<CheckResult> {
    let (borda, _, spectral) = counterexample_orderings()?;
    let (b2, m2, s2) = divergence_top2()?;
    let passed = borda == [3, 2, 1, 0]
        && spectral == [3, 1, 2, 0]
        && b2 == m2
        && b2 != s2;
    Ok(check(
        "counterexample_divergence",
        passed,
        0.0,
        format!(
            "raw P: borda {} spectral {}; consistent Q top-2: borda {{{}}} mle {{{}}} spectral {{{}}}",
            one_based(&borda),
            one_based(&spectral),
            one_based(&b2),
            one_based(&m2),
            one_based(&s2)
        ),
    ))
}

/// Runs every check in a fixed order.
pub fn run_all(options: &VerifyOptions) -> Result<Vec<CheckResult>> {
    let s = options.seed;
    Ok(vec![
        check_kl_identity(30, rng::derive_seed(s, 1), options.kl_perturbation)?,
        check_sandwich(200, rng::derive_seed(s, 2))?,
        check_simple_inequality(100, rng::derive_seed(s, 3))?,
        check_borda_mle(50, rng::derive_seed(s, 4))?,
        check_spectral_consistency(20, rng::derive_seed(s, 5))?,
        check_borda_sum(20, rng::derive_seed(s, 6))?,
        check_counterexample()?,
    ])
}
