//! Choice models: parametric IID random utility models and explicit per-menu tables.
//!
//! A parametric model holds partworths `U` and a noise family; the chooser picks the
//! argmax of `U_k + eps_k` over the menu. With standard Gumbel noise this is the
//! multinomial logit (MNL), whose choice probabilities have the closed form
//! `w_i / sum_{k in S} w_k` with `w = exp(U)`.
//!
//! A [`ChoiceTable`] stores nonnegative choice mass per menu. A [`TabularChoiceModel`]
//! is a table whose every row is a probability vector.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::io;
use crate::menu::Menu;
use crate::rng;

/// Tolerance on the per-menu sum of a probability table.
pub const TABLE_SUM_TOLERANCE: f64 = 1e-12;

/// Deterministic utilities `U_1..U_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartworthVector(Vec<f64>);

impl PartworthVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::domain("at least two partworths are required"));
        }
        if let Some(k) = values.iter().position(|u| !u.is_finite()) {
            return Err(Error::domain(format!("partworth of item {} is not finite", k + 1)));
        }
        Ok(PartworthVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// True iff all partworths are pairwise distinct.
    pub fn is_non_degenerate(&self) -> bool {
        let mut sorted = self.0.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.windows(2).all(|w| w[0] != w[1])
    }

    /// MNL weights `exp(U_i)`.
    pub fn weights(&self) -> Vec<f64> {
        self.0.iter().map(|u| u.exp()).collect()
    }
}

/// Distribution of the i.i.d. perceived-utility noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseFamily {
    /// Standard Gumbel; yields the MNL model.
    GumbelStandard,
    /// Standard normal; yields the probit model.
    NormalStandard,
    /// Unit exponential, supported on `[0, inf)`.
    ExponentialUnit,
}

impl NoiseFamily {
    #[inline]
    pub fn sample<R: RngCore + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            NoiseFamily::GumbelStandard => rng::gumbel(rng),
            NoiseFamily::NormalStandard => rng::standard_normal(rng),
            NoiseFamily::ExponentialUnit => rng::exponential(rng),
        }
    }
}

impl FromStr for NoiseFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gumbel" | "mnl" => Ok(NoiseFamily::GumbelStandard),
            "normal" | "probit" => Ok(NoiseFamily::NormalStandard),
            "exponential" | "exp" => Ok(NoiseFamily::ExponentialUnit),
            other => Err(Error::validation(format!("unknown noise family {other:?}"))),
        }
    }
}

impl fmt::Display for NoiseFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseFamily::GumbelStandard => "gumbel",
            NoiseFamily::NormalStandard => "normal",
            NoiseFamily::ExponentialUnit => "exponential",
        })
    }
}

/// An IID random utility model.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricChoiceModel {
    pub partworths: PartworthVector,
    pub noise: NoiseFamily,
}

impl ParametricChoiceModel {
    pub fn new(partworths: PartworthVector, noise: NoiseFamily) -> Self {
        ParametricChoiceModel { partworths, noise }
    }

    /// MNL model with the given positive weights (`U = ln w`).
    pub fn mnl_from_weights(weights: &[f64]) -> Result<Self> {
        check_weights(weights)?;
        let u = weights.iter().map(|w| w.ln()).collect();
        Ok(ParametricChoiceModel::new(
            PartworthVector::new(u)?,
            NoiseFamily::GumbelStandard,
        ))
    }

    pub fn n(&self) -> usize {
        self.partworths.len()
    }
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if let Some(k) = weights.iter().position(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(Error::domain(format!(
            "weight of item {} must be positive and finite, got {}",
            k + 1,
            weights[k]
        )));
    }
    Ok(())
}

fn check_menu(menu: &[usize], n: usize) -> Result<()> {
    if menu.len() < 2 {
        return Err(Error::domain(format!(
            "menu must hold at least 2 items, got {}",
            menu.len()
        )));
    }
    if let Some(&k) = menu.iter().find(|&&k| k >= n) {
        return Err(Error::domain(format!("menu item {} exceeds item count {n}", k + 1)));
    }
    Ok(())
}

/// Closed-form MNL choice probability `w_item / sum_{k in menu} w_k`.
pub fn mnl_choice_prob(weights: &[f64], menu: &[usize], item: usize) -> Result<f64> {
    check_weights(weights)?;
    check_menu(menu, weights.len())?;
    if !menu.contains(&item) {
        return Err(Error::domain(format!("item {} is not in the menu", item + 1)));
    }
    let total: f64 = menu.iter().map(|&k| weights[k]).sum();
    Ok(weights[item] / total)
}

/// Draws one choice: the argmax of `U_k + eps_k` over the menu.
///
/// Noise is drawn in menu order. Exact ties go to the lowest item index.
pub fn sample_choice<R: RngCore + ?Sized>(
    model: &ParametricChoiceModel,
    menu: &[usize],
    rng: &mut R,
) -> Result<usize> {
    check_menu(menu, model.n())?;
    Ok(sample_choice_unchecked(model, menu, rng))
}

#[inline]
fn sample_choice_unchecked<R: RngCore + ?Sized>(
    model: &ParametricChoiceModel,
    menu: &[usize],
    rng: &mut R,
) -> usize {
    let u = model.partworths.values();
    let mut best = menu[0];
    let mut best_val = f64::NEG_INFINITY;
    for &k in menu {
        let x = u[k] + model.noise.sample(rng);
        if x > best_val {
            best_val = x;
            best = k;
        }
    }
    best
}

/// Monte-Carlo estimate of `p(item | menu)` and its binomial standard error.
pub fn mc_choice_prob<R: RngCore + ?Sized>(
    model: &ParametricChoiceModel,
    menu: &[usize],
    item: usize,
    num_samples: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if num_samples == 0 {
        return Err(Error::domain("num_samples must be at least 1"));
    }
    check_menu(menu, model.n())?;
    if !menu.contains(&item) {
        return Err(Error::domain(format!("item {} is not in the menu", item + 1)));
    }
    let hits = (0..num_samples)
        .filter(|_| sample_choice_unchecked(model, menu, rng) == item)
        .count();
    let p = hits as f64 / num_samples as f64;
    Ok((p, (p * (1.0 - p) / num_samples as f64).sqrt()))
}

/// Weights of the hard MNL instance: `v + delta` on `topset`, `v` elsewhere.
pub fn hard_instance_mnl(
    n: usize,
    k: usize,
    v: f64,
    delta: f64,
    topset: &[usize],
) -> Result<Vec<f64>> {
    if k < 1 || k >= n {
        return Err(Error::domain(format!("K must satisfy 1 <= K < n, got K={k}, n={n}")));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::domain(format!("delta must be positive, got {delta}")));
    }
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::domain(format!("v must be positive, got {v}")));
    }
    let mut top = topset.to_vec();
    top.sort_unstable();
    top.dedup();
    if top.len() != k || topset.len() != k {
        return Err(Error::domain(format!(
            "top set must hold exactly K={k} distinct items"
        )));
    }
    if let Some(&i) = top.iter().find(|&&i| i >= n) {
        return Err(Error::domain(format!("top-set item {} out of range", i + 1)));
    }
    let mut w = vec![v; n];
    for &i in &top {
        w[i] = v + delta;
    }
    Ok(w)
}

/// Models that can report exact per-menu choice probabilities (or masses).
pub trait ExactChoiceModel: Sync {
    fn n(&self) -> usize;

    /// Writes the choice mass of each menu member, in menu order, into `out`.
    fn menu_probs(&self, menu: &[usize], out: &mut Vec<f64>) -> Result<()>;
}

/// Models that can draw a choice from a menu.
pub trait ChoiceSampler: Sync {
    fn n(&self) -> usize;

    /// Returns the chosen item; `menu` is assumed valid for the model.
    fn draw(&self, menu: &[usize], rng: &mut rng::SimRng) -> Result<usize>;
}

/// Closed-form MNL over positive weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MnlWeights(Vec<f64>);

impl MnlWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::domain("at least two weights are required"));
        }
        check_weights(&weights)?;
        Ok(MnlWeights(weights))
    }

    pub fn from_partworths(u: &PartworthVector) -> Result<Self> {
        MnlWeights::new(u.weights())
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }
}

impl ExactChoiceModel for MnlWeights {
    fn n(&self) -> usize {
        self.0.len()
    }

    fn menu_probs(&self, menu: &[usize], out: &mut Vec<f64>) -> Result<()> {
        out.clear();
        let total: f64 = menu.iter().map(|&k| self.0[k]).sum();
        out.extend(menu.iter().map(|&k| self.0[k] / total));
        Ok(())
    }
}

impl ExactChoiceModel for ParametricChoiceModel {
    fn n(&self) -> usize {
        self.partworths.len()
    }

    fn menu_probs(&self, menu: &[usize], out: &mut Vec<f64>) -> Result<()> {
        if self.noise != NoiseFamily::GumbelStandard {
            return Err(Error::domain(format!(
                "no closed-form choice probabilities for {} noise; use Monte Carlo",
                self.noise
            )));
        }
        // Softmax with max subtraction.
        let u = self.partworths.values();
        let top = menu.iter().map(|&k| u[k]).fold(f64::NEG_INFINITY, f64::max);
        out.clear();
        out.extend(menu.iter().map(|&k| (u[k] - top).exp()));
        let total: f64 = out.iter().sum();
        out.iter_mut().for_each(|p| *p /= total);
        Ok(())
    }
}

impl ChoiceSampler for ParametricChoiceModel {
    fn n(&self) -> usize {
        self.partworths.len()
    }

    fn draw(&self, menu: &[usize], rng: &mut rng::SimRng) -> Result<usize> {
        Ok(sample_choice_unchecked(self, menu, rng))
    }
}

/// Nonnegative choice mass per menu, not necessarily normalized.
///
/// This is what the rankers consume: aggregated counts from a dataset, exact
/// probabilities from a model, or a raw win-rate table.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChoiceTable {
    n: usize,
    rows: BTreeMap<Menu, Vec<f64>>,
}

impl ChoiceTable {
    pub fn new(n: usize) -> Self {
        ChoiceTable {
            n,
            rows: BTreeMap::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Inserts (or replaces) the masses of `menu`, given in menu order.
    pub fn insert(&mut self, menu: Menu, masses: Vec<f64>) -> Result<()> {
        if menu.len() != masses.len() {
            return Err(Error::validation(format!(
                "menu {menu} has {} items but {} masses",
                menu.len(),
                masses.len()
            )));
        }
        if menu.items().iter().any(|&i| i >= self.n) {
            return Err(Error::validation(format!("menu {menu} exceeds item count {}", self.n)));
        }
        if let Some(x) = masses.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(Error::validation(format!(
                "menu {menu} has invalid mass {x}"
            )));
        }
        self.rows.insert(menu, masses);
        Ok(())
    }

    /// Adds mass to one member of a menu, creating the row when absent.
    pub fn add(&mut self, menu: &Menu, item: usize, mass: f64) {
        let pos = menu.position(item).expect("item belongs to menu");
        let row = self
            .rows
            .entry(menu.clone())
            .or_insert_with(|| vec![0.0; menu.len()]);
        row[pos] += mass;
    }

    pub fn get(&self, menu: &Menu) -> Option<&[f64]> {
        self.rows.get(menu).map(Vec::as_slice)
    }

    /// Rows in canonical (lexicographic menu) order.
    pub fn iter(&self) -> impl Iterator<Item = (&Menu, &[f64])> {
        self.rows.iter().map(|(s, p)| (s, p.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Raw pairwise table from a matrix with `P[i][j] = p(j | {i, j})`; no consistency check.
    pub fn from_pairwise_matrix_raw(p: &[Vec<f64>]) -> Result<Self> {
        let n = check_square(p)?;
        let mut table = ChoiceTable::new(n);
        for i in 0..n {
            for j in i + 1..n {
                table.insert(Menu::from_sorted(&[i, j]), vec![p[j][i], p[i][j]])?;
            }
        }
        Ok(table)
    }

    /// Every menu rescaled to sum to one.
    pub fn normalized(&self) -> Result<TabularChoiceModel> {
        let mut out = ChoiceTable::new(self.n);
        for (menu, row) in self.iter() {
            let total: f64 = row.iter().sum();
            if total <= 0.0 {
                return Err(Error::validation(format!("menu {menu} has zero total mass")));
            }
            out.rows
                .insert(menu.clone(), row.iter().map(|x| x / total).collect());
        }
        TabularChoiceModel::from_table(out)
    }

    /// Text form: a `# n=<n>` header then one `m;i1,...,im;p1,...,pm` line per menu.
    pub fn to_text(&self) -> String {
        let mut s = format!("# n={}\n", self.n);
        for (menu, row) in self.iter() {
            let probs: Vec<String> = row.iter().map(|&x| io::fmt_prob(x)).collect();
            s.push_str(&format!(
                "{};{};{}\n",
                menu.len(),
                io::join_items(menu.items()),
                probs.join(",")
            ));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut declared_n = None;
        let mut rows = Vec::new();
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
            if fields.len() != 3 {
                return Err(Error::parse(lineno, "expected `m;items;probabilities`"));
            }
            let m: usize = fields[0]
                .trim()
                .parse()
                .map_err(|_| Error::parse(lineno, format!("bad menu size {:?}", fields[0])))?;
            let items = io::parse_items(fields[1], lineno)?;
            let probs: Vec<f64> = fields[2]
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::parse(lineno, format!("bad probability {t:?}")))
                })
                .collect::<Result<_>>()?;
            if items.len() != m || probs.len() != m {
                return Err(Error::parse(
                    lineno,
                    format!("menu size {m} disagrees with {} items / {} probabilities", items.len(), probs.len()),
                ));
            }
            if items.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::parse(lineno, "menu items must be strictly increasing"));
            }
            rows.push((lineno, items, probs));
        }
        let max_item = rows
            .iter()
            .flat_map(|(_, items, _)| items.iter().copied())
            .max()
            .map_or(0, |i| i + 1);
        let n = declared_n.unwrap_or(max_item);
        if max_item > n {
            return Err(Error::validation(format!(
                "item {max_item} exceeds declared item count {n}"
            )));
        }
        let mut table = ChoiceTable::new(n);
        for (lineno, items, probs) in rows {
            let menu = Menu::new(items, n).map_err(|e| Error::parse(lineno, e))?;
            if table.rows.contains_key(&menu) {
                return Err(Error::parse(lineno, format!("menu {menu} listed twice")));
            }
            table
                .insert(menu, probs)
                .map_err(|e| Error::parse(lineno, e))?;
        }
        Ok(table)
    }

    pub fn read(path: &Path) -> Result<Self> {
        ChoiceTable::from_text(&io::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        io::write_string(path, &self.to_text())
    }
}

impl ExactChoiceModel for ChoiceTable {
    fn n(&self) -> usize {
        self.n
    }

    fn menu_probs(&self, menu: &[usize], out: &mut Vec<f64>) -> Result<()> {
        let key = Menu::from_sorted(menu);
        let row = self
            .rows
            .get(&key)
            .ok_or_else(|| Error::validation(format!("table has no entry for menu {key}")))?;
        out.clear();
        out.extend_from_slice(row);
        Ok(())
    }
}

/// Explicit per-menu choice probabilities; each row sums to one within 1e-12.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularChoiceModel {
    table: ChoiceTable,
}

impl TabularChoiceModel {
    pub fn from_table(table: ChoiceTable) -> Result<Self> {
        for (menu, row) in table.iter() {
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > TABLE_SUM_TOLERANCE {
                return Err(Error::validation(format!(
                    "probabilities of menu {menu} sum to {total}, not 1"
                )));
            }
        }
        Ok(TabularChoiceModel { table })
    }

    pub fn n(&self) -> usize {
        self.table.n
    }

    pub fn table(&self) -> &ChoiceTable {
        &self.table
    }

    pub fn into_table(self) -> ChoiceTable {
        self.table
    }

    /// `p(item | menu)`; the menu is canonicalized first.
    pub fn prob(&self, menu: &[usize], item: usize) -> Result<f64> {
        let key = Menu::new(menu.to_vec(), self.n())?;
        let row = self
            .table
            .get(&key)
            .ok_or_else(|| Error::validation(format!("model has no entry for menu {key}")))?;
        let pos = key
            .position(item)
            .ok_or_else(|| Error::domain(format!("item {} is not in menu {key}", item + 1)))?;
        Ok(row[pos])
    }

    pub fn read(path: &Path) -> Result<Self> {
        TabularChoiceModel::from_table(ChoiceTable::read(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.table.write(path)
    }
}

impl ExactChoiceModel for TabularChoiceModel {
    fn n(&self) -> usize {
        self.table.n
    }

    fn menu_probs(&self, menu: &[usize], out: &mut Vec<f64>) -> Result<()> {
        self.table.menu_probs(menu, out)
    }
}

impl ChoiceSampler for TabularChoiceModel {
    fn n(&self) -> usize {
        self.table.n
    }

    fn draw(&self, menu: &[usize], rng: &mut rng::SimRng) -> Result<usize> {
        let key = Menu::from_sorted(menu);
        let row = self
            .table
            .get(&key)
            .ok_or_else(|| Error::validation(format!("model has no entry for menu {key}")))?;
        let u = rng::open_unit(rng);
        let mut acc = 0.0;
        for (pos, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return Ok(menu[pos]);
            }
        }
        // Rounding left u above the running sum: take the last item with positive mass.
        let pos = row.iter().rposition(|&p| p > 0.0).unwrap_or(row.len() - 1);
        Ok(menu[pos])
    }
}

fn check_square(p: &[Vec<f64>]) -> Result<usize> {
    let n = p.len();
    if n < 2 {
        return Err(Error::validation("pairwise matrix needs at least 2 items"));
    }
    if let Some(r) = p.iter().position(|row| row.len() != n) {
        return Err(Error::validation(format!("row {} of the matrix is not length {n}", r + 1)));
    }
    Ok(n)
}

/// Pairwise model from `P[i][j] = p(j | {i, j})`; the matrix must be consistent.
pub fn tabular_from_matrix(p: &[Vec<f64>]) -> Result<TabularChoiceModel> {
    const TOL: f64 = 1e-9;
    let n = check_square(p)?;
    for i in 0..n {
        for j in 0..n {
            let x = p[i][j];
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::validation(format!(
                    "entry P[{},{}] = {x} is outside [0, 1]",
                    i + 1,
                    j + 1
                )));
            }
        }
        if (p[i][i] - 0.5).abs() > TOL {
            return Err(Error::validation(format!(
                "diagonal entry P[{0},{0}] = {1} must be 0.5",
                i + 1,
                p[i][i]
            )));
        }
        for j in i + 1..n {
            let s = p[i][j] + p[j][i];
            if (s - 1.0).abs() > TOL {
                return Err(Error::validation(format!(
                    "P[{0},{1}] + P[{1},{0}] = {s}, expected 1",
                    i + 1,
                    j + 1
                )));
            }
        }
    }
    ChoiceTable::from_pairwise_matrix_raw(p)?.normalized()
}
