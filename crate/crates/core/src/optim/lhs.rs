use rand::seq::SliceRandom;
use rand::Rng;

use crate::models::SearchBox;

/// `n` points of a Latin hypercube design over `bbox`: each coordinate hits
/// every one of its `n` equal-width strata exactly once.
pub fn latin_hypercube<R: Rng + ?Sized>(n: usize, bbox: &SearchBox, rng: &mut R) -> Vec<Vec<f64>> {
    let d = bbox.dim();
    let mut unit = vec![vec![0.0; d]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    for j in 0..d {
        perm.shuffle(rng);
        for (i, p) in perm.iter().enumerate() {
            let u: f64 = rng.random();
            unit[i][j] = (*p as f64 + u) / n as f64;
        }
    }
    unit.iter().map(|u| bbox.from_unit(u)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::RngStream;
    use proptest::prelude::*;

    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        for (k, i) in idx.into_iter().enumerate() {
            r[i] = k as f64;
        }
        r
    }

    #[test]
    fn single_point() {
        let bbox = SearchBox::from_pairs(&[(2.0, 3.0)]).unwrap();
        let pts = latin_hypercube(1, &bbox, &mut RngStream::new(1));
        assert_eq!(pts.len(), 1);
        assert!(bbox.contains(&pts[0]));
    }

    #[test]
    fn weak_rank_correlation_between_dimensions() {
        let bbox = SearchBox::unit(3);
        for seed in 0..100 {
            let pts = latin_hypercube(50, &bbox, &mut RngStream::new(seed));
            let r0 = ranks(&pts.iter().map(|p| p[0]).collect::<Vec<_>>());
            let r1 = ranks(&pts.iter().map(|p| p[1]).collect::<Vec<_>>());
            let m = 24.5;
            let num: f64 = r0.iter().zip(&r1).map(|(a, b)| (a - m) * (b - m)).sum();
            let den: f64 = r0.iter().map(|a| (a - m).powi(2)).sum();
            assert!((num / den).abs() < 0.5, "seed {seed}");
        }
    }

    proptest! {
        #[test]
        fn one_point_per_stratum(n in 1usize..60, seed in any::<u64>()) {
            let bbox = SearchBox::from_pairs(&[(-1.0, 3.0), (0.0, 0.5), (10.0, 20.0)]).unwrap();
            let pts = latin_hypercube(n, &bbox, &mut RngStream::new(seed));
            prop_assert_eq!(pts.len(), n);
            for j in 0..3 {
                let mut seen = vec![false; n];
                for p in &pts {
                    prop_assert!(bbox.contains(p));
                    let u = bbox.to_unit(p)[j];
                    let k = ((u * n as f64).floor() as usize).min(n - 1);
                    prop_assert!(!seen[k]);
                    seen[k] = true;
                }
            }
        }
    }
}
