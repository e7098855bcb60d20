use crate::{Error, Result};

/// Systematic resampling with offset `u` in `[0, 1)`.
///
/// Returns `n_out` zero-based ancestor indices in non-decreasing order.
/// Weights must be non-negative and sum to one within `1e-9`.
pub fn systematic_resample(weights: &[f64], n_out: usize, u: f64) -> Result<Vec<usize>> {
    if weights.is_empty() {
        return Err(Error::Contract("cannot resample from an empty weight vector".into()));
    }
    if !(0.0..1.0).contains(&u) {
        return Err(Error::Contract(format!("resampling offset {u} outside [0, 1)")));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::Contract("weights must be finite and non-negative".into()));
    }
    // Kahan-compensated running sum keeps the last cumulative value near 1.
    let mut cum = Vec::with_capacity(weights.len());
    let (mut s, mut c) = (0.0_f64, 0.0_f64);
    for w in weights {
        let y = w - c;
        let t = s + y;
        c = (t - s) - y;
        s = t;
        cum.push(s);
    }
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::Contract(format!("weights sum to {s}, not 1")));
    }
    let last = weights.len() - 1;
    let mut out = Vec::with_capacity(n_out);
    let mut j = 0;
    for i in 0..n_out {
        let p = (i as f64 + u) / n_out as f64;
        while j < last && cum[j] <= p {
            j += 1;
        }
        out.push(j);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn counts(idx: &[usize], k: usize) -> Vec<usize> {
        let mut c = vec![0; k];
        for &i in idx {
            c[i] += 1;
        }
        c
    }

    #[test]
    fn worked_example() {
        let idx = systematic_resample(&[0.5, 0.3, 0.2], 10, 0.05).unwrap();
        assert_eq!(counts(&idx, 3), vec![5, 3, 2]);
    }

    #[test]
    fn degenerate_weight() {
        let idx = systematic_resample(&[0.0, 1.0, 0.0], 7, 0.9).unwrap();
        assert!(idx.iter().all(|&i| i == 1));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(systematic_resample(&[0.5, 0.4], 4, 0.1).is_err());
        assert!(systematic_resample(&[0.5, 0.5], 4, 1.0).is_err());
        assert!(systematic_resample(&[1.5, -0.5], 4, 0.1).is_err());
        assert!(systematic_resample(&[], 4, 0.1).is_err());
    }

    proptest! {
        #[test]
        fn counts_within_one_of_expectation(
            raw in prop::collection::vec(0.0f64..1.0, 1..40),
            n in 1usize..300,
            u in 0.0f64..1.0,
        ) {
            let total: f64 = raw.iter().sum();
            prop_assume!(total > 1e-6);
            let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let idx = systematic_resample(&w, n, u).unwrap();
            prop_assert_eq!(idx.len(), n);
            prop_assert!(idx.windows(2).all(|p| p[0] <= p[1]));
            for (k, c) in counts(&idx, w.len()).into_iter().enumerate() {
                let expected = n as f64 * w[k];
                prop_assert!((c as f64 - expected).abs() < 1.0 + 1e-9, "{} vs {}", c, expected);
            }
        }
    }
}
