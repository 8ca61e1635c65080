use crate::choice_models::ChoiceTable;
use crate::sampling::ChoiceDataset;

use super::ScoreVector;

/// Win counts: how many observations chose each item.
pub fn borda_count(dataset: &ChoiceDataset) -> ScoreVector {
    let mut wins = vec![0.0; dataset.n()];
    for &y in dataset.choices() {
        wins[y] += 1.0;
    }
    ScoreVector(wins)
}

/// Total choice mass of each item summed over all menus of the table.
///
/// On exact probabilities over all size-`m` menus this is the generalized Borda score
/// up to the factor `1 / C(n-1, m-1)`.
pub fn borda_from_table(table: &ChoiceTable) -> ScoreVector {
    let mut wins = vec![0.0; table.n()];
    for (menu, masses) in table.iter() {
        for (&i, &x) in menu.items().iter().zip(masses) {
            wins[i] += x;
        }
    }
    ScoreVector(wins)
}
