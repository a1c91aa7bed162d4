//! Row-major run-length encoding of binary masks.
//!
//! Runs alternate background/foreground and always start with a background
//! run, which is zero-length when the first cell is set. The run lengths sum
//! to the number of cells. The encoder emits no zero-length runs other than
//! that leading one; the decoder tolerates them anywhere.

use crate::error::{Error, Result};

pub fn encode(cells: &[bool]) -> Vec<u64> {
    let mut runs = Vec::new();
    let mut current = false;
    let mut len = 0u64;
    for &c in cells {
        if c == current {
            len += 1;
        } else {
            runs.push(len);
            current = c;
            len = 1;
        }
    }
    if len > 0 || runs.is_empty() {
        runs.push(len);
    }
    runs
}

pub fn decode(runs: &[u64], total: usize) -> Result<Vec<bool>> {
    let sum: u64 = runs.iter().sum();
    if sum != total as u64 {
        return Err(Error::Malformed(format!("run lengths sum to {sum}, expected {total}")));
    }
    let mut cells = Vec::with_capacity(total);
    for (i, &len) in runs.iter().enumerate() {
        let value = i % 2 == 1;
        cells.extend(std::iter::repeat_n(value, len as usize));
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn leading_foreground_gets_empty_background_run() {
        assert_eq!(encode(&[true, true, false]), vec![0, 2, 1]);
    }

    #[test]
    fn all_background_is_single_run() {
        assert_eq!(encode(&[false; 6]), vec![6]);
        assert_eq!(decode(&[6], 6).unwrap(), vec![false; 6]);
    }

    #[test]
    fn bad_sum_rejected() {
        assert!(decode(&[2, 3], 6).is_err());
    }

    #[test]
    fn tolerates_interior_zero_runs() {
        assert_eq!(decode(&[1, 0, 2], 3).unwrap(), vec![false, false, false]);
    }

    proptest! {
        #[test]
        fn round_trip(cells in proptest::collection::vec(any::<bool>(), 1..300)) {
            let runs = encode(&cells);
            prop_assert_eq!(runs.iter().sum::<u64>(), cells.len() as u64);
            prop_assert!(runs.iter().skip(1).all(|&r| r > 0));
            prop_assert_eq!(decode(&runs, cells.len()).unwrap(), cells);
        }
    }
}
