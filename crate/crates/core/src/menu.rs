//! Menus (offered subsets) and their lexicographic enumeration.

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// A menu of size `m >= 2`: strictly increasing, 0-based item indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Menu(Vec<usize>);

impl Menu {
    /// Canonicalizes (sorts) and validates a menu over `n` items.
    pub fn new(mut items: Vec<usize>, n: usize) -> Result<Self> {
        items.sort_unstable();
        if items.len() < 2 {
            return Err(Error::domain(format!(
                "menu must hold at least 2 items, got {}",
                items.len()
            )));
        }
        if items.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::domain("menu contains a duplicate item"));
        }
        if let Some(&last) = items.last() {
            if last >= n {
                return Err(Error::domain(format!(
                    "menu item {} exceeds item count {n}",
                    last + 1
                )));
            }
        }
        Ok(Menu(items))
    }

    /// Wraps an already sorted, duplicate-free slice without re-validating it.
    pub(crate) fn from_sorted(items: &[usize]) -> Self {
        debug_assert!(items.windows(2).all(|w| w[0] < w[1]));
        Menu(items.to_vec())
    }

    pub fn items(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, item: usize) -> bool {
        self.0.binary_search(&item).is_ok()
    }

    /// Position of `item` inside the menu.
    pub fn position(&self, item: usize) -> Option<usize> {
        self.0.binary_search(&item).ok()
    }
}

impl fmt::Display for Menu {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", i + 1)?;
        }
        write!(f, "}}")
    }
}

/// Exact binomial coefficient; saturates at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is always divisible by (i + 1) at this point.
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Binomial coefficient as `f64`, used in normalizations.
pub fn binomial_f64(n: usize, k: usize) -> f64 {
    binomial(n, k) as f64
}

pub(crate) fn check_menu_size(n: usize, m: usize) -> Result<()> {
    if m < 2 || m > n {
        return Err(Error::domain(format!(
            "menu size must satisfy 2 <= m <= n, got m={m}, n={n}"
        )));
    }
    Ok(())
}

/// Lexicographic iterator over the `k`-subsets of `universe` (which must be sorted).
#[derive(Debug, Clone)]
pub struct Combinations {
    universe: Vec<usize>,
    idx: Vec<usize>,
    done: bool,
}

impl Combinations {
    pub fn new(universe: Vec<usize>, k: usize) -> Self {
        let done = k > universe.len();
        Combinations {
            idx: (0..k).collect(),
            universe,
            done,
        }
    }

    /// Advances in place and returns the current combination, avoiding an allocation.
    pub fn next_slice(&mut self, buf: &mut Vec<usize>) -> bool {
        if self.done {
            return false;
        }
        buf.clear();
        buf.extend(self.idx.iter().map(|&j| self.universe[j]));
        self.advance();
        true
    }

    fn advance(&mut self) {
        let k = self.idx.len();
        let len = self.universe.len();
        let mut pos = k;
        while pos > 0 {
            pos -= 1;
            if self.idx[pos] < len - k + pos {
                self.idx[pos] += 1;
                for q in pos + 1..k {
                    self.idx[q] = self.idx[q - 1] + 1;
                }
                return;
            }
        }
        self.done = true;
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let mut buf = Vec::with_capacity(self.idx.len());
        if self.next_slice(&mut buf) {
            Some(buf)
        } else {
            None
        }
    }
}

/// All `C(n, m)` menus of size `m`, in lexicographic order.
pub fn enumerate_menus(n: usize, m: usize) -> Result<impl Iterator<Item = Menu>> {
    check_menu_size(n, m)?;
    Ok(Combinations::new((0..n).collect(), m).map(Menu))
}

/// The `C(n-1, m-1)` menus of size `m` that contain `item`, in lexicographic order.
pub fn menus_containing(n: usize, m: usize, item: usize) -> Result<impl Iterator<Item = Menu>> {
    check_menu_size(n, m)?;
    if item >= n {
        return Err(Error::domain(format!("item {} out of range 1..={n}", item + 1)));
    }
    let others: Vec<usize> = (0..n).filter(|&k| k != item).collect();
    Ok(Combinations::new(others, m - 1).map(move |mut rest| {
        let at = rest.partition_point(|&k| k < item);
        rest.insert(at, item);
        Menu(rest)
    }))
}

/// Calls `f` on every size-`m` menu without allocating per menu.
pub fn visit_menus(n: usize, m: usize, mut f: impl FnMut(&[usize])) -> Result<()> {
    check_menu_size(n, m)?;
    let mut combos = Combinations::new((0..n).collect(), m);
    let mut buf = Vec::with_capacity(m);
    while combos.next_slice(&mut buf) {
        f(&buf);
    }
    Ok(())
}

/// Parallel fold over all size-`m` menus.
///
/// Menus are grouped by their smallest item; each group is folded sequentially and the
/// group results are returned in item order, so callers that combine them left to right
/// get bit-identical sums regardless of the thread count.
pub fn par_fold_menus<T, I, F>(n: usize, m: usize, init: I, fold: F) -> Result<Vec<T>>
where
    T: Send,
    I: Fn() -> T + Sync,
    F: Fn(&mut T, &[usize]) + Sync,
{
    check_menu_size(n, m)?;
    let groups: Vec<T> = (0..=n - m)
        .into_par_iter()
        .map(|first| {
            let mut acc = init();
            let mut combos = Combinations::new((first + 1..n).collect(), m - 1);
            let mut rest = Vec::with_capacity(m - 1);
            let mut menu = Vec::with_capacity(m);
            while combos.next_slice(&mut rest) {
                menu.clear();
                menu.push(first);
                menu.extend_from_slice(&rest);
                fold(&mut acc, &menu);
            }
            acc
        })
        .collect();
    Ok(groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_based(menus: impl Iterator<Item = Menu>) -> Vec<Vec<usize>> {
        menus
            .map(|s| s.items().iter().map(|i| i + 1).collect())
            .collect()
    }

    #[test]
    fn three_choose_two_in_order() {
        let got = one_based(enumerate_menus(3, 2).unwrap());
        assert_eq!(got, vec![vec![1, 2], vec![1, 3], vec![2, 3]]);
    }

    #[test]
    fn five_choose_three_count() {
        assert_eq!(enumerate_menus(5, 3).unwrap().count(), 10);
    }

    #[test]
    fn twenty_choose_ten() {
        // C(20,10) by the multiplicative formula in exact integers.
        let oracle: u128 = (11..=20u128).product::<u128>() / (1..=10u128).product::<u128>();
        assert_eq!(oracle, 184_756);
        let mut it = enumerate_menus(20, 10).unwrap();
        let first = it.next().unwrap();
        assert_eq!(first.items(), &(0..10).collect::<Vec<_>>()[..]);
        assert_eq!(1 + it.count() as u128, oracle);
        assert_eq!(binomial(20, 10), oracle);
    }

    #[test]
    fn invalid_sizes_are_rejected() {
        assert!(enumerate_menus(3, 4).is_err());
        assert!(enumerate_menus(3, 1).is_err());
        assert!(menus_containing(3, 2, 3).is_err());
    }

    #[test]
    fn containing_item_one() {
        let got = one_based(menus_containing(3, 2, 0).unwrap());
        assert_eq!(got, vec![vec![1, 2], vec![1, 3]]);
        assert_eq!(menus_containing(4, 3, 1).unwrap().count(), 3);
    }

    #[test]
    fn double_counting_identity() {
        for n in 2..9 {
            for m in 2..=n {
                let total: usize = (0..n)
                    .map(|i| menus_containing(n, m, i).unwrap().count())
                    .sum();
                assert_eq!(total as u128, m as u128 * binomial(n, m));
            }
        }
    }

    #[test]
    fn menu_validation() {
        assert!(Menu::new(vec![1, 1], 3).is_err());
        assert!(Menu::new(vec![0], 3).is_err());
        assert!(Menu::new(vec![0, 3], 3).is_err());
        let s = Menu::new(vec![2, 0], 3).unwrap();
        assert_eq!(s.items(), &[0, 2]);
        assert_eq!(s.to_string(), "{1,3}");
    }

    #[test]
    fn par_fold_covers_every_menu_once() {
        let groups = par_fold_menus(9, 4, Vec::new, |acc: &mut Vec<Vec<usize>>, s| {
            acc.push(s.to_vec())
        })
        .unwrap();
        let flat: Vec<Vec<usize>> = groups.into_iter().flatten().collect();
        let seq: Vec<Vec<usize>> = enumerate_menus(9, 4).unwrap().map(|s| s.0).collect();
        assert_eq!(flat, seq);
    }

    proptest! {
        #[test]
        fn enumeration_is_strictly_lexicographic(n in 2usize..11, m_off in 0usize..9) {
            let m = 2 + m_off % (n - 1);
            let all: Vec<Menu> = enumerate_menus(n, m).unwrap().collect();
            prop_assert_eq!(all.len() as u128, binomial(n, m));
            for w in all.windows(2) {
                prop_assert!(w[0] < w[1]);
            }
        }
    }
}
