//! Task-shuffling diagnostic: how often is a sample still assigned to its own
//! class when that class's description is swapped for another class's?
//!
//! The label space is every class. For a donor `d`, the target column carries
//! `d`'s description and `d`'s own column is dropped, so a sample counts as
//! correct when the swapped-in description outscores every remaining class.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::TafeNet;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShuffleMode {
    InGroup,
    OutOfGroup,
}

/// Whether sample row `row` of `scores` (columns = class ids) picks `target`
/// once its column takes `donor`'s score and `donor` leaves the label space.
fn correct_with_donor(row: &[f64], target: usize, donor: usize) -> bool {
    let swapped = row[donor];
    row.iter().enumerate().all(|(c, &v)| {
        if c == target || (c == donor && donor != target) {
            true
        } else if c < target {
            v < swapped
        } else {
            v <= swapped
        }
    })
}

fn accuracy_with_donors(scores: &Tensor, target: usize, donors: &[Vec<usize>]) -> f64 {
    let mut hits = 0usize;
    let mut total = 0usize;
    for (i, ds) in donors.iter().enumerate() {
        for &d in ds {
            total += 1;
            if correct_with_donor(scores.row_slice(i), target, d) {
                hits += 1;
            }
        }
    }
    hits as f64 / total as f64
}

/// Mean top-1 accuracy of `target`'s test samples over `repeats` random donor
/// draws per sample.
pub fn shuffled_task_eval(
    net: &TafeNet,
    dataset: &Dataset,
    target: usize,
    mode: ShuffleMode,
    repeats: usize,
    seed: u64,
) -> Result<f64> {
    if repeats == 0 {
        return Err(Error::invalid("shuffled_task_eval", "repeats must be at least 1"));
    }
    let groups = dataset
        .tasks
        .groups()
        .ok_or_else(|| Error::invalid("shuffled_task_eval", "task table has no class hierarchy"))?;
    if target >= groups.len() {
        return Err(Error::Unknown {
            kind: "class id",
            id: target.to_string(),
        });
    }
    let pool: Vec<usize> = (0..groups.len())
        .filter(|&c| c != target && (groups[c] == groups[target]) == (mode == ShuffleMode::InGroup))
        .collect();
    if pool.is_empty() {
        return Err(Error::invalid(
            "shuffled_task_eval",
            format!("no donor class for `{}` in {mode:?} mode", dataset.tasks.name(target)),
        ));
    }
    let rows = dataset.test_rows_of(&[target]);
    if rows.is_empty() {
        return Err(Error::invalid(
            "shuffled_task_eval",
            format!("class `{}` has no test samples", dataset.tasks.name(target)),
        ));
    }
    let all: Vec<usize> = (0..groups.len()).collect();
    let scores = net.score_matrix(&dataset.store.gather(&rows), &dataset.tasks.gather(&all))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let donors: Vec<Vec<usize>> = rows
        .iter()
        .map(|_| {
            (0..repeats)
                .map(|_| *pool.choose(&mut rng).expect("non-empty pool"))
                .collect()
        })
        .collect();
    Ok(accuracy_with_donors(&scores, target, &donors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::tests::fixture;
    use crate::eval::{per_class_top1, predict};

    #[test]
    fn own_description_matches_plain_accuracy() {
        let (net, ds) = fixture();
        let all: Vec<usize> = (0..ds.tasks.len()).collect();
        for target in [0, 5, 9] {
            let rows = ds.test_rows_of(&[target]);
            let scores = net
                .score_matrix(&ds.store.gather(&rows), &ds.tasks.gather(&all))
                .unwrap();
            let own = accuracy_with_donors(&scores, target, &vec![vec![target]; rows.len()]);
            let predicted = predict(&scores, &all).unwrap();
            let plain = per_class_top1(&predicted, &vec![target; rows.len()], &[target]).unwrap();
            assert_eq!(own, plain);
        }
    }

    #[test]
    fn donor_column_is_dropped() {
        // target 1 takes donor 2's score 5.0; class 2 leaves, class 0 scores 4.0
        assert!(correct_with_donor(&[4.0, 0.0, 5.0], 1, 2));
        assert!(!correct_with_donor(&[6.0, 0.0, 5.0], 1, 2));
        // ties go to the lower class id
        assert!(!correct_with_donor(&[5.0, 0.0, 5.0], 1, 2));
        assert!(correct_with_donor(&[0.0, 0.0, 5.0, 5.0], 1, 2));
    }

    #[test]
    fn singleton_group_rejected_in_group() {
        let (net, mut ds) = fixture();
        let n = ds.tasks.len();
        let groups: Vec<usize> = (0..n).map(|c| if c == 0 { 99 } else { 1 }).collect();
        ds.tasks = crate::data::TaskTable::new(
            ds.tasks.kind(),
            ds.tasks.names().to_vec(),
            ds.tasks.vectors().clone(),
            Some(groups),
        )
        .unwrap();
        assert!(shuffled_task_eval(&net, &ds, 0, ShuffleMode::InGroup, 3, 0).is_err());
        assert!(shuffled_task_eval(&net, &ds, 0, ShuffleMode::OutOfGroup, 3, 0).is_ok());
        assert!(shuffled_task_eval(&net, &ds, 1, ShuffleMode::InGroup, 0, 0).is_err());
    }

    #[test]
    fn seeded_and_bounded() {
        let (net, ds) = fixture();
        let a = shuffled_task_eval(&net, &ds, 2, ShuffleMode::InGroup, 5, 11).unwrap();
        assert_eq!(
            a,
            shuffled_task_eval(&net, &ds, 2, ShuffleMode::InGroup, 5, 11).unwrap()
        );
        assert!((0.0..=1.0).contains(&a));
    }
}
