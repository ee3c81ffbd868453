use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Shuffles `0..n_items` with `seed` and deals it into `k` sorted groups
/// whose sizes differ by at most one, larger groups first.
pub fn kfold_split(n_items: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k == 0 || n_items < k {
        return Err(Error::InvalidArgument(format!(
            "cannot split {n_items} items into {k} folds"
        )));
    }
    let mut order: Vec<usize> = (0..n_items).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut groups = vec![Vec::with_capacity(n_items / k + 1); k];
    for (i, item) in order.into_iter().enumerate() {
        groups[i % k].push(item);
    }
    groups.iter_mut().for_each(|g| g.sort_unstable());
    Ok(groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sixty_scans_make_four_groups_of_fifteen() {
        let g = kfold_split(60, 4, 0).unwrap();
        assert!(g.iter().all(|g| g.len() == 15));
    }

    #[test]
    fn five_items_over_four_folds() {
        let sizes: Vec<usize> = kfold_split(5, 4, 1).unwrap().iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![2, 1, 1, 1]);
        assert!(kfold_split(3, 4, 0).is_err());
        assert!(kfold_split(3, 0, 0).is_err());
    }

    proptest! {
        #[test]
        fn groups_partition_the_items(n in 1usize..200, k in 1usize..10, seed in any::<u64>()) {
            prop_assume!(n >= k);
            let groups = kfold_split(n, k, seed).unwrap();
            prop_assert_eq!(&groups, &kfold_split(n, k, seed).unwrap());
            let mut all: Vec<usize> = groups.concat();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            let (lo, hi) = (groups.iter().map(Vec::len).min().unwrap(), groups.iter().map(Vec::len).max().unwrap());
            prop_assert!(hi - lo <= 1);
        }
    }
}
