use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::seed;

/// One randomised train/test partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub trial_index: usize,
    pub seed: u64,
    pub train_items: Vec<String>,
    pub test_items: Vec<String>,
}

/// `n_trials` independent uniform splits.
///
/// Test size is `floor(n · test / (train + test))`; the remainder goes to train.
/// Trial `t` shuffles the sorted item ids with a ChaCha8 stream seeded from
/// `(master_seed, t)`, so plans do not depend on input order, thread count or
/// platform.
pub fn generate_splits(
    item_ids: &[String],
    ratio: (u32, u32),
    n_trials: usize,
    master_seed: u64,
) -> Result<Vec<SplitPlan>, HarnessError> {
    let (train, test) = ratio;
    if train == 0 || test == 0 {
        return Err(HarnessError::InvalidRatio(train, test));
    }
    let needed = (train + test) as usize;
    let mut sorted: Vec<String> = item_ids.to_vec();
    sorted.sort();
    sorted.dedup();
    if sorted.len() < needed {
        return Err(HarnessError::TooFewItems {
            got: sorted.len(),
            needed,
            train,
            test,
        });
    }
    let n_test = sorted.len() * test as usize / needed;

    Ok((0..n_trials)
        .map(|t| {
            let trial_seed = seed::derive(master_seed, t as u64);
            let mut shuffled = sorted.clone();
            shuffled.shuffle(&mut seed::rng(trial_seed));
            let mut test_items = shuffled.split_off(shuffled.len() - n_test);
            let mut train_items = shuffled;
            train_items.sort();
            test_items.sort();
            SplitPlan {
                trial_index: t,
                seed: trial_seed,
                train_items,
                test_items,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("v{i}")).collect()
    }

    #[test]
    fn ten_items_four_to_one() {
        let plans = generate_splits(&ids(10), (4, 1), 1, 0).unwrap();
        assert_eq!(plans[0].train_items.len(), 8);
        assert_eq!(plans[0].test_items.len(), 2);
    }

    #[test]
    fn full_dataset_sizes() {
        let plans = generate_splits(&ids(3857), (4, 1), 2, 1).unwrap();
        for p in &plans {
            assert_eq!((p.train_items.len(), p.test_items.len()), (3086, 771));
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = generate_splits(&ids(40), (4, 1), 10, 123).unwrap();
        assert_eq!(a, generate_splits(&ids(40), (4, 1), 10, 123).unwrap());
        let mut reversed = ids(40);
        reversed.reverse();
        assert_eq!(a, generate_splits(&reversed, (4, 1), 10, 123).unwrap());
        assert_ne!(a, generate_splits(&ids(40), (4, 1), 10, 124).unwrap());
        assert_ne!(a[0].test_items, a[1].test_items);
    }

    #[test]
    fn too_few_items() {
        assert!(matches!(
            generate_splits(&ids(4), (4, 1), 1, 0),
            Err(HarnessError::TooFewItems { got: 4, needed: 5, .. })
        ));
        assert!(matches!(
            generate_splits(&ids(10), (0, 1), 1, 0),
            Err(HarnessError::InvalidRatio(0, 1))
        ));
    }

    proptest::proptest! {
        #[test]
        fn disjoint_and_covering(n in 5usize..200, train in 1u32..6, test in 1u32..4, seed in proptest::num::u64::ANY) {
            proptest::prop_assume!(n >= (train + test) as usize);
            let all = ids(n);
            for p in generate_splits(&all, (train, test), 3, seed).unwrap() {
                let tr: HashSet<&String> = p.train_items.iter().collect();
                let te: HashSet<&String> = p.test_items.iter().collect();
                proptest::prop_assert!(tr.is_disjoint(&te));
                proptest::prop_assert_eq!(tr.len() + te.len(), n);
                proptest::prop_assert_eq!(te.len(), n * test as usize / (train + test) as usize);
            }
        }
    }
}
