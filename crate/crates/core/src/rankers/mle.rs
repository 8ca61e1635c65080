//! Maximum likelihood under the multinomial logit model.
//!
//! The likelihood is weighted by choice mass, so the same code fits raw counts and
//! exact (fractional) probabilities. The optimizer is Armijo-backtracked ascent along the
//! Newton direction (diagonally preconditioned gradient for large `n` or when the
//! factorization fails), re-centred to `sum U = 0` after each step.

use crate::choice_models::ChoiceTable;
use crate::error::{Error, Result};

use super::ScoreVector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleOptions {
    pub max_iters: usize,
    /// Convergence when `max_i |grad_i| / max(N_i, 1) <= gradient_tolerance`, where `N_i`
    /// is the total mass of the menus containing `i`.
    pub gradient_tolerance: f64,
    /// Backtracking shrink factor.
    pub backtrack: f64,
    /// Armijo sufficient-increase constant.
    pub armijo_c: f64,
}

impl Default for MleOptions {
    fn default() -> Self {
        MleOptions {
            max_iters: 100_000,
            gradient_tolerance: 1e-8,
            backtrack: 0.5,
            armijo_c: 1e-4,
        }
    }
}

impl MleOptions {
    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::domain("max_iters must be at least 1"));
        }
        if !(self.gradient_tolerance > 0.0) {
            return Err(Error::domain("gradient tolerance must be positive"));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::domain("backtracking factor must lie in (0, 1)"));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return Err(Error::domain("Armijo constant must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Result of a converged fit.
#[derive(Debug, Clone, PartialEq)]
pub struct MleFit {
    pub scores: ScoreVector,
    pub iterations: usize,
    /// Final value of `max_i |grad_i| / max(N_i, 1)`.
    pub residual: f64,
    pub log_likelihood: f64,
}

/// Menus with positive total mass, flattened for fast repeated passes.
struct Flat {
    n: usize,
    /// Start offsets into `items`/`mass`, one per menu plus a sentinel.
    offsets: Vec<usize>,
    items: Vec<usize>,
    mass: Vec<f64>,
    totals: Vec<f64>,
}

impl Flat {
    fn new(table: &ChoiceTable) -> Self {
        let mut flat = Flat {
            n: table.n(),
            offsets: vec![0],
            items: Vec::new(),
            mass: Vec::new(),
            totals: Vec::new(),
        };
        for (menu, masses) in table.iter() {
            let total: f64 = masses.iter().sum();
            if total > 0.0 {
                flat.items.extend_from_slice(menu.items());
                flat.mass.extend_from_slice(masses);
                flat.totals.push(total);
                flat.offsets.push(flat.items.len());
            }
        }
        flat
    }

    fn menus(&self) -> impl Iterator<Item = (&[usize], &[f64], f64)> + '_ {
        self.offsets.windows(2).zip(&self.totals).map(|(w, &t)| {
            (&self.items[w[0]..w[1]], &self.mass[w[0]..w[1]], t)
        })
    }

    fn value(&self, u: &[f64]) -> f64 {
        self.menus()
            .map(|(items, mass, _)| {
                let lse = log_sum_exp(items, u);
                items
                    .iter()
                    .zip(mass)
                    .map(|(&k, &c)| if c > 0.0 { c * (u[k] - lse) } else { 0.0 })
                    .sum::<f64>()
            })
            .sum()
    }

    fn value_and_gradient(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut value = 0.0;
        for (items, mass, total) in self.menus() {
            let lse = log_sum_exp(items, u);
            for (&k, &c) in items.iter().zip(mass) {
                if c > 0.0 {
                    value += c * (u[k] - lse);
                }
                grad[k] += c - total * (u[k] - lse).exp();
            }
        }
        value
    }

    /// Negative Hessian `sum_S n_S (diag(q) - q q^T)` with `q` the menu softmax, plus
    /// `mean(diag) / n` times the all-ones matrix to pin the shift direction. Row-major.
    fn curvature(&self, u: &[f64], out: &mut [f64]) {
        let n = self.n;
        out.iter_mut().for_each(|x| *x = 0.0);
        let mut q = Vec::new();
        for (items, _, total) in self.menus() {
            let lse = log_sum_exp(items, u);
            q.clear();
            q.extend(items.iter().map(|&k| (u[k] - lse).exp()));
            for (a, &i) in items.iter().enumerate() {
                out[i * n + i] += total * q[a];
                for (b, &j) in items.iter().enumerate() {
                    out[i * n + j] -= total * q[a] * q[b];
                }
            }
        }
        let shift = (0..n).map(|i| out[i * n + i]).sum::<f64>() / (n * n) as f64;
        out.iter_mut().for_each(|x| *x += shift);
    }

    /// Total mass of the menus containing each item.
    fn exposure(&self) -> Vec<f64> {
        let mut n_i = vec![0.0; self.n];
        for (items, _, total) in self.menus() {
            for &k in items {
                n_i[k] += total;
            }
        }
        n_i
    }

    /// Connected components of the co-occurrence graph via union-find.
    fn check_connected(&self) -> Result<()> {
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for (items, _, _) in self.menus() {
            let a = find(&mut parent, items[0]);
            for &k in &items[1..] {
                let b = find(&mut parent, k);
                if a != b {
                    parent[b] = a;
                }
            }
        }
        let root0 = find(&mut parent, 0);
        let stray: Vec<usize> = (0..self.n)
            .filter(|&i| find(&mut parent, i) != root0)
            .collect();
        if stray.is_empty() {
            return Ok(());
        }
        let root = find(&mut parent, stray[0]);
        let component = (0..self.n)
            .filter(|&i| find(&mut parent, i) == root)
            .collect();
        Err(Error::Disconnected {
            component,
            anchor: 0,
        })
    }
}

fn log_sum_exp(items: &[usize], u: &[f64]) -> f64 {
    let top = items.iter().map(|&k| u[k]).fold(f64::NEG_INFINITY, f64::max);
    top + items.iter().map(|&k| (u[k] - top).exp()).sum::<f64>().ln()
}

/// Weighted MNL log-likelihood `sum_S sum_{k in S} c_S(k) log softmax_k(U; S)` and its
/// gradient `sum_{S ni i} (c_S(i) - n_S softmax_i)`, with `n_S` the mass of menu `S`.
pub fn mnl_log_likelihood(u: &[f64], table: &ChoiceTable) -> Result<(f64, Vec<f64>)> {
    if u.len() != table.n() {
        return Err(Error::domain(format!(
            "partworth vector has {} entries for {} items",
            u.len(),
            table.n()
        )));
    }
    if u.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain("partworths must be finite"));
    }
    let flat = Flat::new(table);
    let mut grad = vec![0.0; u.len()];
    let value = flat.value_and_gradient(u, &mut grad);
    Ok((value, grad))
}

/// Solves `a x = b` in place for symmetric positive definite `a` (overwritten by its
/// Cholesky factor). Returns false if `a` is not numerically positive definite.
fn cholesky_solve(a: &mut [f64], b: &mut [f64]) -> bool {
    let n = b.len();
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) {
            return false;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * n + k] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= a[k * n + i] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    b.iter().all(|x| x.is_finite())
}

/// Largest `n` for which the dense Newton direction is used.
const NEWTON_MAX_ITEMS: usize = 400;

fn centre(u: &mut [f64]) {
    let mean = u.iter().sum::<f64>() / u.len() as f64;
    u.iter_mut().for_each(|x| *x -= mean);
}

/// Fits MNL partworths by maximum likelihood, normalized to `sum U = 0`.
///
/// Fails with [`Error::Disconnected`] when the menus split the items into separate
/// groups, and with [`Error::NonConvergence`] (carrying the last iterate) when the
/// residual target is not met, which is the norm when some item is never chosen and the
/// likelihood has no finite maximizer.
pub fn mle_fit(table: &ChoiceTable, options: &MleOptions) -> Result<MleFit> {
    options.validate()?;
    let flat = Flat::new(table);
    let n = flat.n;
    flat.check_connected()?;
    let exposure = flat.exposure();
    let scale: Vec<f64> = exposure.iter().map(|&x| x.max(1.0)).collect();
    let residual_of = |g: &[f64]| {
        g.iter()
            .zip(&scale)
            .map(|(gi, s)| gi.abs() / s)
            .fold(0.0, f64::max)
    };

    let mut u = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let mut value = flat.value_and_gradient(&u, &mut grad);
    let mut residual = residual_of(&grad);
    let mut step: f64 = 1.0;
    let mut trial = vec![0.0; n];
    let mut dir = vec![0.0; n];
    let newton = n <= NEWTON_MAX_ITEMS;
    let mut hess = if newton { vec![0.0; n * n] } else { Vec::new() };

    for iter in 0..options.max_iters {
        if residual <= options.gradient_tolerance {
            return Ok(MleFit {
                scores: ScoreVector(u),
                iterations: iter,
                residual,
                log_likelihood: value,
            });
        }
        let mut used_newton = false;
        if newton {
            flat.curvature(&u, &mut hess);
            dir.copy_from_slice(&grad);
            used_newton = cholesky_solve(&mut hess, &mut dir);
        }
        if !used_newton {
            for i in 0..n {
                dir[i] = grad[i] / exposure[i].max(f64::MIN_POSITIVE);
            }
        }
        let slope: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
        // Newton steps start at the full step; gradient steps may grow after easy iterations.
        step = if used_newton { 1.0 } else { (step * 4.0).min(16.0) };
        let mut accepted = false;
        while step > 1e-20 {
            for i in 0..n {
                trial[i] = u[i] + step * dir[i];
            }
            let v = flat.value(&trial);
            if v >= value + options.armijo_c * step * slope {
                accepted = true;
                break;
            }
            step *= options.backtrack;
        }
        if !accepted {
            // No representable ascent left; the iterate is as good as floating point allows.
            break;
        }
        centre(&mut trial);
        std::mem::swap(&mut u, &mut trial);
        value = flat.value_and_gradient(&u, &mut grad);
        residual = residual_of(&grad);
    }
    if residual <= options.gradient_tolerance {
        return Ok(MleFit {
            scores: ScoreVector(u),
            iterations: options.max_iters,
            residual,
            log_likelihood: value,
        });
    }
    Err(Error::NonConvergence {
        iterations: options.max_iters,
        residual,
        estimate: u,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::choice_models::{ExactChoiceModel, MnlWeights, ParametricChoiceModel};
    use crate::menu::{enumerate_menus, Menu};
    use crate::rankers::ordering;
    use crate::rng;
    use crate::sampling::{simulate_dataset, SamplingConfig};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn pair_table(n: usize, rows: &[(usize, usize, f64, f64)]) -> ChoiceTable {
        let mut t = ChoiceTable::new(n);
        for &(i, j, a, b) in rows {
            t.insert(Menu::new(vec![i, j], n).unwrap(), vec![a, b]).unwrap();
        }
        t
    }

    fn exact_table(w: &[f64], m: usize) -> ChoiceTable {
        let model = MnlWeights::new(w.to_vec()).unwrap();
        let mut t = ChoiceTable::new(w.len());
        let mut buf = Vec::new();
        for s in enumerate_menus(w.len(), m).unwrap() {
            model.menu_probs(s.items(), &mut buf).unwrap();
            t.insert(s, buf.clone()).unwrap();
        }
        t
    }

    #[test]
    fn single_observation_value_and_gradient() {
        let t = pair_table(2, &[(0, 1, 1.0, 0.0)]);
        let (v, g) = mnl_log_likelihood(&[0.0, 0.0], &t).unwrap();
        assert_relative_eq!(v, 0.5f64.ln());
        assert_relative_eq!(g[0], 0.5);
        assert_relative_eq!(g[1], -0.5);
    }

    #[test]
    fn logistic_inversion() {
        let t = pair_table(2, &[(0, 1, 2.0, 1.0)]);
        let fit = mle_fit(&t, &MleOptions::default()).unwrap();
        let u = fit.scores.values();
        assert!((u[0] - u[1] - 2f64.ln()).abs() < 1e-6);
        assert!(u.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn exact_mnl_data_recovers_order() {
        let w = [0.9, 2.5, 1.1, 3.0, 0.4, 1.7];
        let fit = mle_fit(&exact_table(&w, 3), &MleOptions::default()).unwrap();
        assert!(fit.residual <= 1e-8);
        assert_eq!(ordering(fit.scores.values()), ordering(&w));
        // With exact data the maximizer is ln w itself, centred.
        let lw: Vec<f64> = w.iter().map(|x| x.ln()).collect();
        let mean = lw.iter().sum::<f64>() / 6.0;
        for (a, b) in fit.scores.values().iter().zip(&lw) {
            assert!((a - (b - mean)).abs() < 1e-6);
        }
    }

    #[test]
    fn disconnected_graph_names_component() {
        let t = pair_table(4, &[(0, 1, 1.0, 1.0), (2, 3, 1.0, 1.0)]);
        match mle_fit(&t, &MleOptions::default()) {
            Err(Error::Disconnected { component, anchor }) => {
                assert_eq!(component, vec![2, 3]);
                assert_eq!(anchor, 0);
            }
            other => panic!("unexpected {other:?}"),
        }
        let t = pair_table(3, &[(0, 1, 1.0, 1.0)]);
        assert!(matches!(mle_fit(&t, &MleOptions::default()), Err(Error::Disconnected { .. })));
    }

    #[test]
    fn never_chosen_item_is_pushed_to_the_bottom() {
        // No finite maximizer: the fit either meets the residual far out along the ray or
        // stops with its last iterate.
        let t = pair_table(2, &[(0, 1, 3.0, 0.0)]);
        let opts = MleOptions {
            max_iters: 200,
            ..MleOptions::default()
        };
        let u = match mle_fit(&t, &opts) {
            Ok(fit) => fit.scores.values().to_vec(),
            Err(Error::NonConvergence { estimate, .. }) => estimate,
            other => panic!("unexpected {other:?}"),
        };
        assert!(u[0] - u[1] > 10.0, "{u:?}");
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let t = pair_table(2, &[(0, 1, 3.0, 0.0)]);
        let opts = MleOptions {
            max_iters: 1,
            ..MleOptions::default()
        };
        assert!(matches!(mle_fit(&t, &opts), Err(Error::NonConvergence { .. })));
    }

    #[test]
    fn stationarity_at_convergence() {
        let model = ParametricChoiceModel::mnl_from_weights(&[1.0, 2.0, 0.5, 3.0, 1.5]).unwrap();
        let ds = simulate_dataset(&model, &SamplingConfig::new(5, 3, 1.0, 30, 4).unwrap()).unwrap();
        let table = ds.to_table();
        let fit = mle_fit(&table, &MleOptions::default()).unwrap();
        let u = fit.scores.values();
        let mut fitted = [0.0; 5];
        let mut wins = [0.0; 5];
        let mut exposure = [0.0; 5];
        for (menu, counts) in table.iter() {
            let total: f64 = counts.iter().sum();
            let z: f64 = menu.items().iter().map(|&k| u[k].exp()).sum();
            for (&k, &c) in menu.items().iter().zip(counts) {
                fitted[k] += total * u[k].exp() / z;
                wins[k] += c;
                exposure[k] += total;
            }
        }
        for i in 0..5 {
            assert!((fitted[i] - wins[i]).abs() <= 1e-8 * exposure[i]);
        }
        // Larger partworth means larger fitted expected wins.
        for i in 0..5 {
            for j in 0..5 {
                if u[i] > u[j] {
                    assert!(fitted[i] > fitted[j]);
                }
            }
        }
    }

    #[test]
    fn invalid_options() {
        let t = pair_table(2, &[(0, 1, 1.0, 1.0)]);
        let bad = MleOptions {
            gradient_tolerance: 0.0,
            ..MleOptions::default()
        };
        assert!(mle_fit(&t, &bad).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn gradient_matches_finite_differences(seed in 0u64..10_000) {
            let mut r = rng::seeded(seed);
            let n = r.random_range(2..6usize);
            let u: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
            let mut t = ChoiceTable::new(n);
            for s in enumerate_menus(n, 2).unwrap() {
                let masses = vec![r.random_range(0.0..3.0), r.random_range(0.0..3.0)];
                t.insert(s, masses).unwrap();
            }
            let (_, g) = mnl_log_likelihood(&u, &t).unwrap();
            let h = 1e-6;
            for i in 0..n {
                let mut up = u.clone();
                let mut dn = u.clone();
                up[i] += h;
                dn[i] -= h;
                let fd = (mnl_log_likelihood(&up, &t).unwrap().0 - mnl_log_likelihood(&dn, &t).unwrap().0) / (2.0 * h);
                prop_assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1.0), "{} vs {}", fd, g[i]);
            }
        }

        #[test]
        fn value_is_shift_invariant(seed in 0u64..10_000, c in -50.0f64..50.0) {
            let mut r = rng::seeded(seed);
            let u: Vec<f64> = (0..4).map(|_| r.random_range(-2.0..2.0)).collect();
            let t = pair_table(4, &[(0, 1, 1.0, 2.0), (1, 2, 0.5, 0.5), (2, 3, 3.0, 0.0), (0, 3, 1.0, 1.0)]);
            let shifted: Vec<f64> = u.iter().map(|x| x + c).collect();
            let a = mnl_log_likelihood(&u, &t).unwrap().0;
            let b = mnl_log_likelihood(&shifted, &t).unwrap().0;
            prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
        }
    }
}
