//! Tiny descriptive-statistics helpers shared across modules.

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population (divisor-n) standard deviation.
pub(crate) fn population_std(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn mean_and_std_reference() {
        assert_eq!(mean(&[1.0, 2.0, 3.0]), 2.0);
        assert_abs_diff_eq!(
            population_std(&[-1.0, 0.0, 1.0]),
            (2.0f64 / 3.0).sqrt(),
            epsilon = 1e-12
        );
        assert_eq!(population_std(&[5.0, 5.0, 5.0]), 0.0);
    }
}
