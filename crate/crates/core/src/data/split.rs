use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DataError, Dataset, PartitionedDataset};

/// Row indices of a seeded train/test split, each in increasing order.
/// The test set has `round(fraction * n)` rows.
pub fn split_indices(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), DataError> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(DataError::Split(format!("test fraction {test_fraction} outside [0, 1)")));
    }
    let n_test = (test_fraction * n as f64).round() as usize;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test = perm[..n_test].to_vec();
    let mut train = perm[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

pub fn split(data: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset), DataError> {
    let (tr, te) = split_indices(data.n_rows, test_fraction, seed)?;
    Ok((data.select_rows(&tr), data.select_rows(&te)))
}

/// Splits every block with the same row selection.
pub fn split_partitioned(
    data: &PartitionedDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(PartitionedDataset, PartitionedDataset), DataError> {
    let (tr, te) = split_indices(data.n_rows, test_fraction, seed)?;
    Ok((data.select_rows(&tr), data.select_rows(&te)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Column;

    fn table(n: usize) -> Dataset {
        Dataset::new(vec![
            Column::Continuous((0..n).map(|i| i as f64 / n as f64).collect()),
            Column::Categorical((0..n).map(|i| (i % 3) as u32).collect()),
        ])
        .unwrap()
    }

    #[test]
    fn sizes_and_determinism() {
        let d = table(101);
        let (tr, te) = split(&d, 0.2, 9).unwrap();
        assert_eq!(tr.n_rows + te.n_rows, 101);
        assert_eq!(te.n_rows, 20);
        assert_eq!(split(&d, 0.2, 9).unwrap(), (tr.clone(), te));
        assert_ne!(split(&d, 0.2, 10).unwrap().0, tr);
        let (tr, te) = split(&d, 0.0, 1).unwrap();
        assert_eq!((tr.n_rows, te.n_rows), (101, 0));
        assert_eq!(tr, d);
        assert!(split(&d, 1.0, 1).is_err());
    }

    #[test]
    fn indices_are_disjoint_and_exhaustive() {
        let (mut tr, te) = split_indices(50, 0.3, 4).unwrap();
        tr.extend(te);
        tr.sort_unstable();
        assert_eq!(tr, (0..50).collect::<Vec<_>>());
    }
}
