//! Ranking corpora in the PrefLib text layout.
//!
//! ```text
//! # NUMBER ALTERNATIVES: 3
//! # ALTERNATIVE NAME 1: alpha
//! 2: 1,2,3
//! 1: 1,{2,3}
//! ```
//!
//! Each data line is `count: ranking`, best first, with braces around tied groups. Items a
//! ballot leaves out are treated as tied with each other below everything it ranks.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::choice_models::{ChoiceTable, TabularChoiceModel};
use crate::error::{Error, Result};
use crate::io;
use crate::menu::{check_menu_size, par_fold_menus, Menu};

/// One distinct ballot and how many voters cast it. Tiers are 0-based and sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankingRecord {
    pub tiers: Vec<Vec<usize>>,
    pub multiplicity: u64,
}

impl RankingRecord {
    /// Tier index of every item; items not ranked get `tiers.len()`.
    fn positions(&self, n: usize) -> Vec<usize> {
        let mut pos = vec![self.tiers.len(); n];
        for (t, tier) in self.tiers.iter().enumerate() {
            for &i in tier {
                pos[i] = t;
            }
        }
        pos
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankingDataset {
    pub n: usize,
    /// Comment lines (without the newline), reproduced verbatim on output.
    pub header: Vec<String>,
    pub names: BTreeMap<usize, String>,
    pub records: Vec<RankingRecord>,
}

impl RankingDataset {
    pub fn total_rankings(&self) -> u64 {
        self.records.iter().map(|r| r.multiplicity).sum()
    }

    /// Canonical text: header lines, then `count: ranking` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for h in &self.header {
            s.push_str(h);
            s.push('\n');
        }
        for r in &self.records {
            let tiers: Vec<String> = r
                .tiers
                .iter()
                .map(|t| {
                    if t.len() == 1 {
                        (t[0] + 1).to_string()
                    } else {
                        format!("{{{}}}", io::join_items(t))
                    }
                })
                .collect();
            let _ = writeln!(s, "{}: {}", r.multiplicity, tiers.join(","));
        }
        s
    }

    pub fn read(path: &Path) -> Result<Self> {
        parse_rankings(&io::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        io::write_string(path, &self.to_text())
    }
}

fn header_value<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    let body = line.trim_start_matches('#').trim();
    let rest = body.strip_prefix(key)?;
    Some(rest.trim_start_matches(':').trim())
}

fn parse_ranking(text: &str, n: usize, lineno: usize) -> Result<Vec<Vec<usize>>> {
    let mut tiers = Vec::new();
    let mut seen = vec![false; n];
    let mut rest = text.trim();
    while !rest.is_empty() {
        let (group, tail) = if let Some(inner) = rest.strip_prefix('{') {
            let close = inner
                .find('}')
                .ok_or_else(|| Error::parse(lineno, "unclosed `{`"))?;
            (&inner[..close], &inner[close + 1..])
        } else {
            match rest.find(',') {
                Some(c) => (&rest[..c], &rest[c..]),
                None => (rest, ""),
            }
        };
        let mut tier = Vec::new();
        for tok in group.split(',') {
            let tok = tok.trim();
            let id: usize = tok
                .parse()
                .map_err(|_| Error::parse(lineno, format!("bad item id {tok:?}")))?;
            if id == 0 || id > n {
                return Err(Error::parse(lineno, format!("unknown item {id} (n = {n})")));
            }
            if std::mem::replace(&mut seen[id - 1], true) {
                return Err(Error::parse(lineno, format!("item {id} appears twice")));
            }
            tier.push(id - 1);
        }
        tier.sort_unstable();
        tiers.push(tier);
        rest = tail.trim_start();
        if let Some(t) = rest.strip_prefix(',') {
            rest = t.trim_start();
            if rest.is_empty() {
                return Err(Error::parse(lineno, "trailing comma"));
            }
        } else if !rest.is_empty() {
            return Err(Error::parse(lineno, format!("unexpected text {rest:?}")));
        }
    }
    if tiers.is_empty() {
        return Err(Error::parse(lineno, "empty ranking"));
    }
    Ok(tiers)
}

/// Parses a ranking corpus; the header must declare `NUMBER ALTERNATIVES`.
pub fn parse_rankings(text: &str) -> Result<RankingDataset> {
    let mut n = None;
    let mut header = Vec::new();
    let mut names = BTreeMap::new();
    let mut records = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim_end();
        if line.trim().is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if let Some(v) = header_value(line, "NUMBER ALTERNATIVES") {
                let count: usize = v
                    .parse()
                    .map_err(|_| Error::parse(lineno, format!("bad item count {v:?}")))?;
                n = Some(count);
            } else if let Some(v) = header_value(line, "ALTERNATIVE NAME") {
                let (id, name) = v
                    .split_once(':')
                    .ok_or_else(|| Error::parse(lineno, "expected `ALTERNATIVE NAME i: name`"))?;
                let id: usize = id
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(lineno, format!("bad item id {id:?}")))?;
                names.insert(id, name.trim().to_owned());
            }
            header.push(line.to_owned());
            continue;
        }
        let n = n.ok_or_else(|| {
            Error::parse(lineno, "ranking before the `NUMBER ALTERNATIVES` header")
        })?;
        let (count, ranking) = line
            .split_once(':')
            .ok_or_else(|| Error::parse(lineno, "expected `count: ranking`"))?;
        let multiplicity: u64 = count
            .trim()
            .parse()
            .ok()
            .filter(|&c| c >= 1)
            .ok_or_else(|| Error::parse(lineno, format!("bad count {:?}", count.trim())))?;
        records.push(RankingRecord {
            tiers: parse_ranking(ranking, n, lineno)?,
            multiplicity,
        });
    }
    let n = n.ok_or_else(|| Error::validation("missing `NUMBER ALTERNATIVES` header"))?;
    if let Some((&id, _)) = names.iter().find(|(&id, _)| id == 0 || id > n) {
        return Err(Error::validation(format!("name given for unknown item {id}")));
    }
    Ok(RankingDataset {
        n,
        header,
        names,
        records,
    })
}

fn lcm_upto(m: usize) -> u128 {
    fn gcd(a: u128, b: u128) -> u128 {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    (1..=m as u128).fold(1, |acc, k| acc / gcd(acc, k) * k)
}

/// Integer win units per menu: each record splits `multiplicity * lcm(1..=m)` units
/// evenly among the menu members in its best tier present in the menu.
pub fn menu_win_units(rankings: &RankingDataset, m: usize) -> Result<(Vec<(Menu, Vec<u128>)>, u128)> {
    let n = rankings.n;
    check_menu_size(n, m)?;
    if rankings.records.is_empty() {
        return Err(Error::validation("corpus has no rankings"));
    }
    let unit = lcm_upto(m);
    let positions: Vec<(Vec<usize>, u128)> = rankings
        .records
        .iter()
        .map(|r| (r.positions(n), r.multiplicity as u128))
        .collect();
    type Acc = Vec<(Menu, Vec<u128>)>;
    let groups = par_fold_menus(n, m, Vec::new, |acc: &mut Acc, menu| {
        let mut wins = vec![0u128; m];
        for (pos, mult) in &positions {
            let best = menu.iter().map(|&i| pos[i]).min().expect("menu is nonempty");
            let l = menu.iter().filter(|&&i| pos[i] == best).count() as u128;
            for (w, &i) in wins.iter_mut().zip(menu) {
                if pos[i] == best {
                    *w += mult * unit / l;
                }
            }
        }
        acc.push((Menu::from_sorted(menu), wins));
    })?;
    let per_menu = rankings.total_rankings() as u128 * unit;
    Ok((groups.into_iter().flatten().collect(), per_menu))
}

/// Empirical choice probabilities over all size-`m` menus with fractional wins for ties.
pub fn empirical_choice_probs(rankings: &RankingDataset, m: usize) -> Result<TabularChoiceModel> {
    let (menus, per_menu) = menu_win_units(rankings, m)?;
    let mut table = ChoiceTable::new(rankings.n);
    for (menu, wins) in menus {
        let total: u128 = wins.iter().sum();
        if total == 0 {
            return Err(Error::validation(format!("menu {menu} has no win mass")));
        }
        debug_assert_eq!(total, per_menu);
        let denom = total as f64;
        table.insert(menu, wins.iter().map(|&w| w as f64 / denom).collect())?;
    }
    TabularChoiceModel::from_table(table)
}

/// Majority-relation ordering and the pairwise matrix it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Items best first.
    pub ordering: Vec<usize>,
    /// `pairwise[i][j]` = share of rankings preferring `i` to `j` (ties split evenly).
    pub pairwise: Vec<Vec<f64>>,
}

impl GroundTruth {
    /// `rank,item` CSV, 1-based.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("rank,item\n");
        for (r, &i) in self.ordering.iter().enumerate() {
            let _ = writeln!(s, "{},{}", r + 1, i + 1);
        }
        s
    }
}

/// Parses a `rank,item` file into items ordered best first.
pub fn read_truth_csv(text: &str) -> Result<Vec<usize>> {
    let mut rows = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || (lineno == 1 && line.starts_with("rank")) {
            continue;
        }
        let (r, i) = line
            .split_once(',')
            .ok_or_else(|| Error::parse(lineno, "expected `rank,item`"))?;
        let r: usize = r
            .trim()
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad rank {r:?}")))?;
        let item = io::parse_items(i, lineno)?;
        rows.push((r, item[0], lineno));
    }
    rows.sort_by_key(|x| x.0);
    let n = rows.len();
    let mut seen = vec![false; n];
    for (k, &(r, i, lineno)) in rows.iter().enumerate() {
        if r != k + 1 {
            return Err(Error::parse(lineno, "ranks must be 1..n without gaps"));
        }
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(Error::parse(lineno, format!("item {} repeated or out of range", i + 1)));
        }
    }
    Ok(rows.into_iter().map(|x| x.1).collect())
}

/// Ground-truth ordering from the pairwise majority relation.
///
/// Fails when the relation has a cycle; a strict three-item cycle is named when present.
pub fn ground_truth_ordering(rankings: &RankingDataset) -> Result<GroundTruth> {
    let n = rankings.n;
    let (menus, per_menu) = menu_win_units(rankings, 2)?;
    let mut units = vec![vec![0u128; n]; n];
    for (menu, wins) in &menus {
        let (a, b) = (menu.items()[0], menu.items()[1]);
        units[a][b] = wins[0];
        units[b][a] = wins[1];
    }
    let half = per_menu / 2;
    // Exact integer comparison against one half (per_menu is even: lcm(1, 2) = 2).
    let beats = |i: usize, j: usize| i != j && units[i][j] > half;
    for i in 0..n {
        for j in 0..n {
            if !beats(i, j) {
                continue;
            }
            for k in 0..n {
                if beats(j, k) && beats(k, i) {
                    let mut t = [i, j, k];
                    t.sort_unstable();
                    return Err(Error::validation(format!(
                        "majority preferences are not transitive on items ({},{},{})",
                        t[0] + 1,
                        t[1] + 1,
                        t[2] + 1
                    )));
                }
            }
        }
    }
    // Kahn's algorithm, always releasing the lowest-index available item.
    let mut indeg: Vec<usize> = (0..n).map(|j| (0..n).filter(|&i| beats(i, j)).count()).collect();
    let mut done = vec![false; n];
    let mut ordering = Vec::with_capacity(n);
    while ordering.len() < n {
        let next = (0..n).find(|&i| !done[i] && indeg[i] == 0);
        let Some(i) = next else {
            let rest: Vec<String> = (0..n).filter(|&i| !done[i]).map(|i| (i + 1).to_string()).collect();
            return Err(Error::validation(format!(
                "majority preferences contain a cycle among items ({})",
                rest.join(",")
            )));
        };
        done[i] = true;
        ordering.push(i);
        for j in 0..n {
            if beats(i, j) {
                indeg[j] -= 1;
            }
        }
    }
    let pairwise = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { 0.5 } else { units[i][j] as f64 / per_menu as f64 })
                .collect()
        })
        .collect();
    Ok(GroundTruth { ordering, pairwise })
}
