//! Generalized Borda scores and the sample-complexity quantities built from them.
//!
//! The generalized Borda score of item `i` for menu size `m` is the average probability
//! that `i` is chosen from a uniformly random size-`m` menu containing it:
//! `tau_i = (1 / C(n-1, m-1)) * sum_{S ni i} p(i | S)`.

use std::fmt::Write as _;

use rand::seq::index;
use rand::RngCore;
use rayon::prelude::*;

use crate::choice_models::{
    hard_instance_mnl, mc_choice_prob, ExactChoiceModel, MnlWeights, ParametricChoiceModel,
};
use crate::error::{Error, Result};
use crate::menu::{binomial, binomial_f64, check_menu_size, par_fold_menus};
use crate::rankers::ordering;
use crate::rng;

/// Largest menu count evaluated by exact enumeration.
pub const MAX_EXACT_MENUS: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub enum BordaMode {
    Exact,
    MonteCarlo {
        menus_sampled: usize,
        draws_per_menu: usize,
        /// Standard error of each score.
        se: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BordaScoreVector {
    pub taus: Vec<f64>,
    pub m: usize,
    pub mode: BordaMode,
}

impl BordaScoreVector {
    /// Scores sorted in descending order.
    pub fn sorted_desc(&self) -> Vec<f64> {
        sorted_desc(&self.taus)
    }

    pub fn se(&self) -> Option<&[f64]> {
        match &self.mode {
            BordaMode::Exact => None,
            BordaMode::MonteCarlo { se, .. } => Some(se),
        }
    }
}

fn sorted_desc(taus: &[f64]) -> Vec<f64> {
    let mut t = taus.to_vec();
    t.sort_by(|a, b| b.total_cmp(a));
    t
}

fn check_enumerable(n: usize, m: usize) -> Result<()> {
    check_menu_size(n, m)?;
    if binomial(n, m) > MAX_EXACT_MENUS {
        return Err(Error::domain(format!(
            "C({n},{m}) = {} menus exceeds the exact-enumeration limit of {MAX_EXACT_MENUS}; use Monte Carlo",
            binomial(n, m)
        )));
    }
    Ok(())
}

/// Exact generalized Borda scores by enumerating all size-`m` menus.
pub fn borda_scores_exact(model: &dyn ExactChoiceModel, m: usize) -> Result<BordaScoreVector> {
    let n = model.n();
    check_enumerable(n, m)?;
    type Acc = (Vec<f64>, Vec<f64>, Option<Error>);
    let groups: Vec<Acc> = par_fold_menus(
        n,
        m,
        || (vec![0.0; n], Vec::with_capacity(m), None),
        |acc: &mut Acc, menu| {
            if acc.2.is_some() {
                return;
            }
            match model.menu_probs(menu, &mut acc.1) {
                Ok(()) => {
                    for (&i, &p) in menu.iter().zip(&acc.1) {
                        acc.0[i] += p;
                    }
                }
                Err(e) => acc.2 = Some(e),
            }
        },
    )?;
    let mut sums = vec![0.0; n];
    for (part, _, err) in groups {
        if let Some(e) = err {
            return Err(e);
        }
        for (s, p) in sums.iter_mut().zip(part) {
            *s += p;
        }
    }
    let norm = binomial_f64(n - 1, m - 1);
    Ok(BordaScoreVector {
        taus: sums.into_iter().map(|s| s / norm).collect(),
        m,
        mode: BordaMode::Exact,
    })
}

/// Monte-Carlo generalized Borda scores.
///
/// For each item, `menus_sampled` menus are drawn uniformly from those containing it and
/// `p(i | S)` is estimated from `draws_per_menu` simulated choices per menu. The standard
/// error is the sample deviation of the per-menu estimates over `sqrt(menus_sampled)`, so it
/// covers both sources of noise. Items run in parallel on streams derived from one draw of
/// `rng`.
pub fn borda_scores_mc<R: RngCore + ?Sized>(
    model: &ParametricChoiceModel,
    m: usize,
    menus_sampled: usize,
    draws_per_menu: usize,
    rng: &mut R,
) -> Result<BordaScoreVector> {
    let n = model.n();
    check_menu_size(n, m)?;
    if menus_sampled == 0 || draws_per_menu == 0 {
        return Err(Error::domain("menu and draw counts must be at least 1"));
    }
    let base = rng.next_u64();
    let per_item: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<(f64, f64)> {
            let mut r = rng::seeded(rng::derive_seed(base, i as u64));
            let mut menu = Vec::with_capacity(m);
            let mut est = Vec::with_capacity(menus_sampled);
            for _ in 0..menus_sampled {
                menu.clear();
                menu.extend(
                    index::sample(&mut r, n - 1, m - 1)
                        .into_iter()
                        .map(|k| if k >= i { k + 1 } else { k }),
                );
                menu.push(i);
                menu.sort_unstable();
                est.push(mc_choice_prob(model, &menu, i, draws_per_menu, &mut r)?.0);
            }
            let k = est.len() as f64;
            let mean = est.iter().sum::<f64>() / k;
            let se = if est.len() > 1 {
                let var = est.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
                (var / k).sqrt()
            } else {
                (mean * (1.0 - mean) / draws_per_menu as f64).sqrt()
            };
            Ok((mean, se))
        })
        .collect::<Result<_>>()?;
    Ok(BordaScoreVector {
        taus: per_item.iter().map(|x| x.0).collect(),
        m,
        mode: BordaMode::MonteCarlo {
            menus_sampled,
            draws_per_menu,
            se: per_item.iter().map(|x| x.1).collect(),
        },
    })
}

/// Which sorted positions bound the approximate-recovery gap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GapConvention {
    /// `tau_(K-h) - tau_(K+h+1)`; reduces to the exact gap at `h = 0`.
    #[default]
    KMinusH,
    /// `tau_(K-h-1) - tau_(K+h+1)`.
    KMinusHMinusOne,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub k: usize,
    /// `tau_(K) - tau_(K+1)` on descending-sorted scores.
    pub delta_k: f64,
    pub h: Option<usize>,
    pub delta_k_h: Option<f64>,
    /// `1 / (m * delta_k)`.
    pub factor_one: f64,
    /// `tau_(K+1) / delta_k`.
    pub factor_two: f64,
    /// Set when `delta_k <= 0`; the factors are then infinite.
    pub nonpositive_gap: bool,
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k < 1 || k >= n {
        return Err(Error::domain(format!("K must satisfy 1 <= K < n, got K={k}, n={n}")));
    }
    Ok(())
}

/// `tau_(K-h) - tau_(K+h+1)` (or the `K-h-1` variant) on descending-sorted scores.
pub fn gap_k_h(sorted: &[f64], k: usize, h: usize, convention: GapConvention) -> Result<f64> {
    let n = sorted.len();
    check_k(n, k)?;
    let upper = match convention {
        GapConvention::KMinusH => k.checked_sub(h),
        GapConvention::KMinusHMinusOne => k.checked_sub(h + 1),
    }
    .filter(|&u| u >= 1);
    let lower = k + h + 1;
    match upper {
        Some(u) if lower <= n => Ok(sorted[u - 1] - sorted[lower - 1]),
        _ => Err(Error::domain(format!(
            "h={h} puts a gap index outside 1..={n} for K={k}"
        ))),
    }
}

pub fn gap_report(
    taus: &BordaScoreVector,
    k: usize,
    h: Option<usize>,
    convention: GapConvention,
) -> Result<GapReport> {
    let sorted = taus.sorted_desc();
    check_k(sorted.len(), k)?;
    let delta_k = sorted[k - 1] - sorted[k];
    let delta_k_h = h.map(|h| gap_k_h(&sorted, k, h, convention)).transpose()?;
    let nonpositive_gap = delta_k <= 0.0;
    let (factor_one, factor_two) = if nonpositive_gap {
        (f64::INFINITY, f64::INFINITY)
    } else {
        (1.0 / (taus.m as f64 * delta_k), sorted[k] / delta_k)
    };
    Ok(GapReport {
        k,
        delta_k,
        h,
        delta_k_h,
        factor_one,
        factor_two,
        nonpositive_gap,
    })
}

fn check_bound_inputs(taus: &[f64], n: usize, m: usize) -> Result<()> {
    if taus.len() != n {
        return Err(Error::domain(format!("{} scores for n = {n}", taus.len())));
    }
    check_menu_size(n, m)
}

/// Expected sample count `pR C(n,m)` sufficient for exact top-K recovery:
/// `(8 n ln n / (m delta_K^2)) * (delta_K + 2 tau_(K+1))`.
pub fn exact_recovery_bound(taus: &[f64], k: usize, n: usize, m: usize) -> Result<f64> {
    check_bound_inputs(taus, n, m)?;
    check_k(n, k)?;
    let sorted = sorted_desc(taus);
    let delta = sorted[k - 1] - sorted[k];
    if delta <= 0.0 {
        return Err(Error::domain(format!("gap at K={k} is not positive ({delta})")));
    }
    let n_f = n as f64;
    Ok(8.0 * n_f * n_f.ln() / (m as f64 * delta * delta) * (delta + 2.0 * sorted[k]))
}

/// Expected sample count sufficient for approximate top-K recovery with slack `h`:
/// `(8 n ln n / (m delta_{K,h})) * (1 + tau_(K+h+1) / delta_{K,h})`.
pub fn approx_recovery_bound(
    taus: &[f64],
    k: usize,
    h: usize,
    n: usize,
    m: usize,
    convention: GapConvention,
) -> Result<f64> {
    check_bound_inputs(taus, n, m)?;
    let sorted = sorted_desc(taus);
    let gap = gap_k_h(&sorted, k, h, convention)?;
    if gap <= 0.0 {
        return Err(Error::domain(format!("gap at K={k}, h={h} is not positive ({gap})")));
    }
    let n_f = n as f64;
    Ok(8.0 * n_f * n_f.ln() / (m as f64 * gap) * (1.0 + sorted[k + h] / gap))
}

/// Bounds on `m * (tau_i - tau_j)` under MNL.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapSandwich {
    pub lower: f64,
    pub exact: f64,
    pub upper: f64,
}

/// Lower bound, exact value and upper bound of `m * (tau_i - tau_j)` for MNL weights.
///
/// `m * Delta_ij` is invariant to rescaling the weights, so each bound is evaluated under
/// its own normalization: the lower bound with the mean of the other `n - 2` weights at 1,
/// the upper bound with the smallest weight at 1.
pub fn mnl_gap_sandwich(weights: &[f64], i: usize, j: usize, m: usize) -> Result<GapSandwich> {
    let n = weights.len();
    check_menu_size(n, m)?;
    if n < 3 {
        return Err(Error::domain("the sandwich bounds need at least 3 items"));
    }
    if i >= n || j >= n {
        return Err(Error::domain("item index out of range"));
    }
    let model = MnlWeights::new(weights.to_vec())?;
    if !(weights[i] > weights[j]) {
        return Err(Error::domain(format!(
            "need w_i > w_j, got w_{} = {} and w_{} = {}",
            i + 1,
            weights[i],
            j + 1,
            weights[j]
        )));
    }
    let taus = borda_scores_exact(&model, m)?.taus;
    let exact = m as f64 * (taus[i] - taus[j]);

    let n_f = n as f64;
    let mf = m as f64;
    let lead = n_f / (n_f - 1.0);

    let rest_mean = (weights.iter().sum::<f64>() - weights[i] - weights[j]) / (n_f - 2.0);
    let w: Vec<f64> = weights.iter().map(|x| x / rest_mean).collect();
    let w_min = w.iter().copied().fold(f64::INFINITY, f64::min);
    let xj = w[j] / w_min;
    let lower =
        (w[i] - w[j]) * lead * (1.0 - w[i] / (mf - 1.0 + w[i])) * (1.0 - xj / (mf - 1.0 + xj));

    let raw_min = weights.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = weights.iter().map(|x| x / raw_min).collect();
    let w_max = w.iter().copied().fold(0.0, f64::max);
    let xj = w[j];
    let yi = w[i] / w_max;
    let upper = (w[i] - w[j])
        * lead
        * (1.0 - (xj - 1.0) / (mf - 1.0 + xj))
        * (1.0 - yi / (mf - 1.0 + yi));

    Ok(GapSandwich {
        lower,
        exact,
        upper,
    })
}

/// Parameters of the two-hypothesis hard instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HardPair {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub v: f64,
    pub delta: f64,
    pub p: f64,
    pub rounds: usize,
    /// 0-based items in `[K-1, n-1]`.
    pub a: usize,
    pub b: usize,
}

/// Weights of the hard model whose top set is `{0, ..., K-2, a}`.
pub fn hard_pair_weights(n: usize, k: usize, v: f64, delta: f64, a: usize) -> Result<Vec<f64>> {
    let mut top: Vec<usize> = (0..k.saturating_sub(1)).collect();
    top.push(a);
    hard_instance_mnl(n, k, v, delta, &top)
}

/// KL divergence between the sample distributions of two hard models, two ways:
/// the compact closed form `pR ln((v+delta)/v) C(n-1,m-1) Delta_K` and the brute-force
/// sum of per-menu KL divergences times `pR`.
pub fn kl_special_pair(pair: &HardPair) -> Result<(f64, f64)> {
    let HardPair {
        n,
        m,
        k,
        v,
        delta,
        p,
        rounds,
        a,
        b,
    } = *pair;
    check_enumerable(n, m)?;
    check_k(n, k)?;
    for (name, x) in [("a", a), ("b", b)] {
        if x + 1 < k || x >= n {
            return Err(Error::domain(format!(
                "{name} = {} must lie in [K, n] = [{k}, {n}]",
                x + 1
            )));
        }
    }
    if !(p > 0.0 && p <= 1.0) || rounds == 0 {
        return Err(Error::domain("need 0 < p <= 1 and R >= 1"));
    }
    if a == b {
        return Ok((0.0, 0.0));
    }
    let wa = MnlWeights::new(hard_pair_weights(n, k, v, delta, a)?)?;
    let wb = MnlWeights::new(hard_pair_weights(n, k, v, delta, b)?)?;
    let pr = p * rounds as f64;

    let sorted = borda_scores_exact(&wa, m)?.sorted_desc();
    let delta_k = sorted[k - 1] - sorted[k];
    let compact = pr * ((v + delta) / v).ln() * binomial_f64(n - 1, m - 1) * delta_k;

    type Acc = (f64, Vec<f64>, Vec<f64>);
    let groups = par_fold_menus(
        n,
        m,
        || (0.0, Vec::new(), Vec::new()),
        |acc: &mut Acc, menu| {
            wa.menu_probs(menu, &mut acc.1).expect("MNL menus are valid");
            wb.menu_probs(menu, &mut acc.2).expect("MNL menus are valid");
            acc.0 += acc
                .1
                .iter()
                .zip(&acc.2)
                .map(|(x, y)| x * (x / y).ln())
                .sum::<f64>();
        },
    )?;
    let brute = pr * groups.iter().map(|g| g.0).sum::<f64>();
    Ok((compact, brute))
}

/// Outcome of comparing the Borda-score order with a declared partworth order.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    /// Pairs `(i, j)` with `U_i > U_j` that were checked.
    pub adjudicated: usize,
    /// Pairs `(i, j)` with `U_i > U_j` but `tau_i <= tau_j` (exact) or clearly below (MC).
    pub violations: Vec<(usize, usize)>,
}

impl ConsistencyReport {
    pub fn is_consistent(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that higher partworth means higher Borda score.
///
/// In Monte-Carlo mode only pairs whose scores differ by more than four pooled standard
/// errors are judged.
pub fn check_borda_consistency(taus: &BordaScoreVector, partworths: &[f64]) -> Result<ConsistencyReport> {
    let n = taus.taus.len();
    if partworths.len() != n {
        return Err(Error::domain(format!(
            "{} partworths for {n} scores",
            partworths.len()
        )));
    }
    let t = &taus.taus;
    let mut adjudicated = 0;
    let mut violations = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if partworths[i] <= partworths[j] {
                continue;
            }
            match taus.se() {
                None => {
                    adjudicated += 1;
                    if t[i] <= t[j] {
                        violations.push((i, j));
                    }
                }
                Some(se) => {
                    let pooled = (se[i].powi(2) + se[j].powi(2)).sqrt();
                    if (t[i] - t[j]).abs() > 4.0 * pooled {
                        adjudicated += 1;
                        if t[i] < t[j] {
                            violations.push((i, j));
                        }
                    }
                }
            }
        }
    }
    Ok(ConsistencyReport {
        adjudicated,
        violations,
    })
}

/// `(tau_(K) + tau_(K+1)) / delta_K^2` and `max_{i <= K < j} (tau_i + tau_j) / (tau_i - tau_j)^2`
/// over sorted positions; the two agree whenever the gap is positive.
pub fn simple_inequality(taus: &[f64], k: usize) -> Result<(f64, f64)> {
    check_k(taus.len(), k)?;
    let s = sorted_desc(taus);
    let delta = s[k - 1] - s[k];
    if delta <= 0.0 {
        return Err(Error::domain("gap must be positive"));
    }
    let lhs = (s[k - 1] + s[k]) / (delta * delta);
    let mut best = f64::NEG_INFINITY;
    for i in 0..k {
        for j in k..s.len() {
            let d = s[i] - s[j];
            best = best.max((s[i] + s[j]) / (d * d));
        }
    }
    Ok((lhs, best))
}

/// One row of the theory CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryRow {
    pub m: usize,
    pub k: usize,
    pub delta_k: f64,
    pub factor_one: f64,
    pub factor_two: f64,
    pub bound_exact: Option<f64>,
    pub bound_approx: Option<f64>,
}

/// Gap, factors and bounds from one score vector.
pub fn theory_row(taus: &BordaScoreVector, k: usize, h: usize, convention: GapConvention) -> Result<TheoryRow> {
    let n = taus.taus.len();
    let m = taus.m;
    let gap = gap_report(taus, k, None, convention)?;
    Ok(TheoryRow {
        m,
        k,
        delta_k: gap.delta_k,
        factor_one: gap.factor_one,
        factor_two: gap.factor_two,
        bound_exact: exact_recovery_bound(&taus.taus, k, n, m).ok(),
        bound_approx: approx_recovery_bound(&taus.taus, k, h, n, m, convention).ok(),
    })
}

/// Gap, factors and bounds for each menu size in `ms`, from exact Borda scores.
pub fn theory_rows(
    model: &dyn ExactChoiceModel,
    ms: &[usize],
    k: usize,
    h: usize,
    convention: GapConvention,
) -> Result<Vec<TheoryRow>> {
    ms.iter()
        .map(|&m| theory_row(&borda_scores_exact(model, m)?, k, h, convention))
        .collect()
}

/// CSV with header `m,K,delta_K,factor_one,factor_two,bound_exact,bound_approx`;
/// undefined bounds are written as `NaN`.
pub fn theory_csv(rows: &[TheoryRow]) -> String {
    let mut s = String::from("m,K,delta_K,factor_one,factor_two,bound_exact,bound_approx\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.m,
            r.k,
            r.delta_k,
            r.factor_one,
            r.factor_two,
            r.bound_exact.unwrap_or(f64::NAN),
            r.bound_approx.unwrap_or(f64::NAN)
        );
    }
    s
}

/// Items ordered by descending Borda score (ties to the lower index).
pub fn borda_ordering(taus: &BordaScoreVector) -> Vec<usize> {
    ordering(&taus.taus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::choice_models::{tabular_from_matrix, ChoiceTable, NoiseFamily, PartworthVector};
    use crate::menu::{menus_containing, Menu};
    use approx::assert_relative_eq;
    use num_rational::Ratio;
    use proptest::prelude::*;
    use rand::Rng;

    fn mnl(w: &[f64]) -> MnlWeights {
        MnlWeights::new(w.to_vec()).unwrap()
    }

    fn random_weights(seed: u64, n: usize) -> Vec<f64> {
        let mut r = rng::seeded(seed);
        (0..n).map(|_| r.random_range(0.2..5.0)).collect()
    }

    #[test]
    fn uniform_scores() {
        let t = borda_scores_exact(&mnl(&[1.0; 6]), 3).unwrap();
        for &x in &t.taus {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn three_item_hand_enumeration() {
        // Exact rational oracle: tau_1 = (2/3 + 2/3)/2, tau_2 = (1/3 + 1/2)/2.
        let r = |a, b| Ratio::new(a, b);
        let tau1 = (r(2i64, 3) + r(2, 3)) / r(2, 1);
        let tau2 = (r(1i64, 3) + r(1, 2)) / r(2, 1);
        assert_eq!(tau1, r(2, 3));
        assert_eq!(tau2, r(5, 12));
        let t = borda_scores_exact(&mnl(&[2.0, 1.0, 1.0]), 2).unwrap();
        assert_relative_eq!(t.taus[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(t.taus[1], 5.0 / 12.0, epsilon = 1e-15);
        assert_relative_eq!(t.taus[2], 5.0 / 12.0, epsilon = 1e-15);
    }

    #[test]
    fn sum_identity_with_independent_order() {
        let w = random_weights(8, 8);
        let t = borda_scores_exact(&mnl(&w), 3).unwrap();
        // Oracle: iterate item by item over menus containing it, a different summation order.
        let model = mnl(&w);
        let mut buf = Vec::new();
        let mut total = 0.0;
        for i in 0..8 {
            let mut s = 0.0;
            for menu in menus_containing(8, 3, i).unwrap() {
                model.menu_probs(menu.items(), &mut buf).unwrap();
                s += buf[menu.position(i).unwrap()];
            }
            let tau = s / binomial_f64(7, 2);
            assert!((tau - t.taus[i]).abs() < 1e-14);
            total += tau;
        }
        assert!((total - 8.0 / 3.0).abs() < 1e-10);
        assert!((t.taus.iter().sum::<f64>() - 8.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn missing_menu_is_named() {
        let mut t = ChoiceTable::new(3);
        t.insert(Menu::new(vec![0, 1], 3).unwrap(), vec![0.5, 0.5]).unwrap();
        let err = borda_scores_exact(&t, 2).unwrap_err().to_string();
        assert!(err.contains("{1,3}"), "{err}");
    }

    #[test]
    fn enumeration_limit() {
        assert!(borda_scores_exact(&mnl(&[1.0; 40]), 20).is_err());
    }

    #[test]
    fn monte_carlo_tracks_exact() {
        let w = [3.0, 1.0, 2.0, 0.5, 1.5, 1.0];
        let model = ParametricChoiceModel::mnl_from_weights(&w).unwrap();
        let exact = borda_scores_exact(&mnl(&w), 3).unwrap();
        let mut r = rng::seeded(21);
        let mc = borda_scores_mc(&model, 3, 400, 200, &mut r).unwrap();
        let se = mc.se().unwrap();
        for i in 0..6 {
            assert!((mc.taus[i] - exact.taus[i]).abs() <= 4.0 * se[i], "item {i}");
        }
        let uniform = ParametricChoiceModel::mnl_from_weights(&[1.0; 5]).unwrap();
        let mc = borda_scores_mc(&uniform, 2, 200, 200, &mut r).unwrap();
        let se = mc.se().unwrap();
        for i in 0..5 {
            assert!((mc.taus[i] - 0.5).abs() <= 4.0 * se[i].max(1e-3));
        }
        assert!(borda_scores_mc(&uniform, 2, 0, 10, &mut r).is_err());
    }

    #[test]
    fn gap_examples() {
        let t = BordaScoreVector {
            taus: vec![0.6, 0.3, 0.1],
            m: 2,
            mode: BordaMode::Exact,
        };
        let g = gap_report(&t, 1, Some(0), GapConvention::KMinusH).unwrap();
        assert_relative_eq!(g.delta_k, 0.3);
        assert_relative_eq!(g.factor_one, 1.0 / 0.6);
        assert_relative_eq!(g.factor_two, 1.0);
        assert_eq!(g.delta_k_h, Some(g.delta_k));
        assert!(!g.nonpositive_gap);
        assert!(gap_report(&t, 3, None, GapConvention::KMinusH).is_err());
        assert!(gap_report(&t, 1, Some(1), GapConvention::KMinusH).is_err());
        assert!(gap_report(&t, 1, Some(0), GapConvention::KMinusHMinusOne).is_err());
        let flat = BordaScoreVector {
            taus: vec![0.5, 0.5, 0.5],
            m: 2,
            mode: BordaMode::Exact,
        };
        let g = gap_report(&flat, 1, None, GapConvention::KMinusH).unwrap();
        assert!(g.nonpositive_gap);
    }

    #[test]
    fn gap_conventions_differ() {
        let s = [0.9, 0.7, 0.5, 0.3, 0.1];
        assert_relative_eq!(gap_k_h(&s, 2, 1, GapConvention::KMinusH).unwrap(), 0.9 - 0.3);
        assert!(gap_k_h(&s, 2, 1, GapConvention::KMinusHMinusOne).is_err());
        assert_relative_eq!(gap_k_h(&s, 3, 1, GapConvention::KMinusHMinusOne).unwrap(), 0.9 - 0.1);
    }

    #[test]
    fn exact_bound_value() {
        let mut taus = vec![0.1; 10];
        taus[0] = 0.6;
        taus[1] = 0.4;
        let b = exact_recovery_bound(&taus, 1, 10, 2).unwrap();
        // Second path: tau_K + tau_{K+1} replaces delta + 2 tau_{K+1}.
        let second = 8.0 * 10.0 * 10f64.ln() * (0.6 + 0.4) / (2.0 * 0.2 * 0.2);
        assert_relative_eq!(b, second, max_relative = 1e-12);
        assert_relative_eq!(b, 1000.0 * 10f64.ln(), max_relative = 1e-12);
        assert!(exact_recovery_bound(&[0.5, 0.5], 1, 2, 2).is_err());
    }

    #[test]
    fn doubling_gap_more_than_halves_bound() {
        let a = exact_recovery_bound(&[0.5, 0.4, 0.1], 1, 3, 2).unwrap();
        let b = exact_recovery_bound(&[0.6, 0.4, 0.1], 1, 3, 2).unwrap();
        assert!(a > 2.0 * b);
    }

    #[test]
    fn approx_bound_relations() {
        let w = random_weights(3, 9);
        let t = borda_scores_exact(&mnl(&w), 3).unwrap().taus;
        let s = sorted_desc(&t);
        let (n, m, k) = (9, 3, 4);
        let nl = 8.0 * 9.0 * 9f64.ln();
        let a0 = approx_recovery_bound(&t, k, 0, n, m, GapConvention::KMinusH).unwrap();
        let d = s[k - 1] - s[k];
        // At h = 0 the slack bound uses tau_(K+1) once where the exact bound uses it twice.
        assert_relative_eq!(a0, nl / (3.0 * d * d) * (d + s[k]), max_relative = 1e-12);
        assert!(a0 <= exact_recovery_bound(&t, k, n, m).unwrap());
        let mut last = a0;
        for h in 1..=3 {
            let g = s[k - h - 1] - s[k + h];
            let b = approx_recovery_bound(&t, k, h, n, m, GapConvention::KMinusH).unwrap();
            assert_relative_eq!(b, nl / (3.0 * g) * (1.0 + s[k + h] / g), max_relative = 1e-12);
            assert!(b <= last);
            last = b;
        }
    }

    #[test]
    fn sandwich_on_extreme_pair() {
        let w = random_weights(17, 7);
        let ord = ordering(&w);
        let (i, j) = (ord[0], ord[6]);
        for m in 2..7 {
            let s = mnl_gap_sandwich(&w, i, j, m).unwrap();
            assert!(s.lower <= s.exact && s.exact <= s.upper, "m={m}: {s:?}");
        }
        assert!(mnl_gap_sandwich(&w, j, i, 3).is_err());
    }

    #[test]
    fn sandwich_vanishes_with_gap() {
        let mut w = vec![1.0, 1.3, 0.8, 2.0, 1.1];
        let mut prev: Option<GapSandwich> = None;
        for eps in [1e-2, 1e-3, 1e-4] {
            w[0] = 1.3 + eps;
            let s = mnl_gap_sandwich(&w, 0, 1, 3).unwrap();
            if let Some(p) = prev {
                for (a, b) in [(s.lower, p.lower), (s.exact, p.exact), (s.upper, p.upper)] {
                    assert!((a / b - 0.1).abs() < 0.02, "{a} vs {b}");
                }
            }
            prev = Some(s);
        }
    }

    #[test]
    fn kl_identity_example() {
        let pair = HardPair {
            n: 6,
            m: 2,
            k: 2,
            v: 1.0,
            delta: 0.5,
            p: 0.3,
            rounds: 10,
            a: 1,
            b: 3,
        };
        let (compact, brute) = kl_special_pair(&pair).unwrap();
        assert!(brute > 0.0);
        assert!((compact - brute).abs() <= 1e-9 * (1.0 + brute));
        assert_eq!(kl_special_pair(&HardPair { b: 1, ..pair }).unwrap(), (0.0, 0.0));
        assert!(kl_special_pair(&HardPair { a: 0, ..pair }).is_err());
        let tiny = kl_special_pair(&HardPair { delta: 1e-6, ..pair }).unwrap();
        assert!(tiny.1 < 1e-9);
    }

    #[test]
    fn consistency_checks() {
        let w = random_weights(5, 6);
        let u: Vec<f64> = w.iter().map(|x| x.ln()).collect();
        let t = borda_scores_exact(&mnl(&w), 3).unwrap();
        let rep = check_borda_consistency(&t, &u).unwrap();
        assert!(rep.is_consistent());
        assert_eq!(rep.adjudicated, 15);

        let probit = ParametricChoiceModel::new(
            PartworthVector::new(vec![0.8, 0.0, 0.4, -0.5, 1.2, 0.1]).unwrap(),
            NoiseFamily::NormalStandard,
        );
        let mut r = rng::seeded(606);
        let mc = borda_scores_mc(&probit, 3, 300, 300, &mut r).unwrap();
        let rep = check_borda_consistency(&mc, probit.partworths.values()).unwrap();
        assert!(rep.is_consistent() && rep.adjudicated > 0, "{rep:?}");

        // Item 3 wins every pair although item 1 is declared best.
        let p = vec![
            vec![0.5, 0.4, 0.9],
            vec![0.6, 0.5, 0.9],
            vec![0.1, 0.1, 0.5],
        ];
        let table = tabular_from_matrix(&p).unwrap();
        let t = borda_scores_exact(&table, 2).unwrap();
        let rep = check_borda_consistency(&t, &[3.0, 2.0, 1.0]).unwrap();
        assert!(rep.violations.contains(&(0, 2)));
    }

    #[test]
    fn theory_csv_header() {
        let rows = theory_rows(&mnl(&[3.0, 2.0, 1.0, 0.5]), &[2, 3], 1, 0, GapConvention::KMinusH).unwrap();
        let csv = theory_csv(&rows);
        assert!(csv.starts_with("m,K,delta_K,factor_one,factor_two,bound_exact,bound_approx\n2,1,"));
        assert_eq!(csv.lines().count(), 3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn simple_inequality_holds(seed in 0u64..100_000, n in 4usize..9, m_off in 0usize..6, k_off in 0usize..8) {
            let m = 2 + m_off % (n - 2);
            let k = 1 + k_off % (n - 1);
            let t = borda_scores_exact(&mnl(&random_weights(seed, n)), m).unwrap().taus;
            let (lhs, rhs) = simple_inequality(&t, k).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.max(1.0), "{} vs {}", lhs, rhs);
        }

        #[test]
        fn sandwich_brackets_exact_gap(seed in 0u64..100_000, n in 4usize..11, m_off in 0usize..9, pick in 0usize..1000) {
            let m = 2 + m_off % (n - 2);
            let w = random_weights(seed, n);
            let ord = ordering(&w);
            let a = pick % n;
            let b = (pick / n) % n;
            prop_assume!(a != b);
            let (i, j) = (ord[a.min(b)], ord[a.max(b)]);
            prop_assume!(w[i] > w[j]);
            let s = mnl_gap_sandwich(&w, i, j, m).unwrap();
            prop_assert!(s.lower <= s.exact * (1.0 + 1e-12) && s.exact <= s.upper * (1.0 + 1e-12), "{:?}", s);
        }

        #[test]
        fn kl_compact_matches_brute(n in 4usize..8, m_off in 0usize..5, k_off in 0usize..5, seed in 0u64..1000) {
            let m = 2 + m_off % (n - 2);
            let k = 1 + k_off % (n - 2);
            let mut r = rng::seeded(seed);
            let a = r.random_range(k - 1..n);
            let b = r.random_range(k - 1..n);
            let pair = HardPair { n, m, k, v: r.random_range(0.5..2.0), delta: r.random_range(0.05..1.0), p: 0.4, rounds: 7, a, b };
            let (c, bf) = kl_special_pair(&pair).unwrap();
            prop_assert!((c - bf).abs() <= 1e-9 * (1.0 + bf), "{} vs {}", c, bf);
        }
    }

}
