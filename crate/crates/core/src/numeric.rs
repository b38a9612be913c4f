//! Deterministic reductions.

const LEAF: usize = 64;

/// Pairwise summation with a fixed split order, so the result does not depend
/// on how the caller parallelizes the producer of `values`.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(values) / values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_naive_on_small_and_large() {
        let small: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&small), 45.0);
        let big = vec![1.0; 1000];
        assert_eq!(pairwise_sum(&big), 1000.0);
        assert_eq!(mean(&big), 1.0);
        assert!(mean(&[]).is_nan());
    }
}
