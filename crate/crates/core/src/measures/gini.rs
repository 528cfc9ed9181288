use crate::error::{usage, Result};

/// Above this size the sorted identity replaces the pairwise sum.
pub const PAIRWISE_LIMIT: usize = 10_000;

/// Gini coefficient of nonnegative values; `0` when the mean is zero.
pub fn gini(values: &[f64]) -> Result<f64> {
    check(values)?;
    if values.len() <= PAIRWISE_LIMIT {
        Ok(gini_pairwise(values))
    } else {
        Ok(gini_sorted(values))
    }
}

pub fn gini_i64(values: &[i64]) -> Result<f64> {
    let v: Vec<f64> = values.iter().map(|&x| x as f64).collect();
    gini(&v)
}

fn check(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return usage("Gini of an empty sample");
    }
    if let Some(x) = values.iter().find(|x| !(**x >= 0.0)) {
        return usage(format!("Gini needs nonnegative values, found {x}"));
    }
    Ok(())
}

/// `Σ_i Σ_j |x_i - x_j| / (2 N² ⟨x⟩)`.
pub fn gini_pairwise(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let sum: f64 = values.iter().sum();
    if sum == 0.0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for (i, a) in values.iter().enumerate() {
        for b in &values[i + 1..] {
            acc += (a - b).abs();
        }
    }
    // Each unordered pair appears twice in the double sum.
    2.0 * acc / (2.0 * n * sum)
}

/// `Σ_i (2i - N - 1) x_(i) / (N Σ x)` over ascending order statistics.
pub fn gini_sorted(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let sum: f64 = v.iter().sum();
    if sum == 0.0 {
        return 0.0;
    }
    let acc: f64 = v
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * (i + 1) as f64 - n - 1.0) * x)
        .sum();
    acc / (n * sum)
}

/// Gini of weighted data, `(value, weight)` pairs with nonnegative weights.
pub fn gini_weighted(points: &[(f64, f64)]) -> Result<f64> {
    let values: Vec<f64> = points.iter().map(|p| p.0).collect();
    check(&values)?;
    let mut v = points.to_vec();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let w_total: f64 = v.iter().map(|p| p.1).sum();
    let mass: f64 = v.iter().map(|p| p.0 * p.1).sum();
    if mass == 0.0 || w_total == 0.0 {
        return Ok(0.0);
    }
    let mut below = 0.0;
    let mut acc = 0.0;
    for &(x, w) in &v {
        let above = w_total - below - w;
        acc += w * x * (below - above);
        below += w;
    }
    Ok(acc / (w_total * mass))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn equal_and_extreme() {
        assert_eq!(gini(&[3.0; 10]).unwrap(), 0.0);
        assert!((gini(&[0.0, 0.0, 0.0, 12.0]).unwrap() - 0.75).abs() < 1e-15);
        assert_eq!(gini(&[0.0; 4]).unwrap(), 0.0);
    }

    #[test]
    fn rejects_negative_and_empty() {
        assert!(gini(&[1.0, -1.0]).is_err());
        assert!(gini(&[]).is_err());
    }

    #[test]
    fn sorted_matches_pairwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v: Vec<f64> = (0..2000).map(|_| rng.random_range(0..500) as f64).collect();
        assert!((gini_pairwise(&v) - gini_sorted(&v)).abs() < 1e-12);
        let w: Vec<(f64, f64)> = v.iter().map(|&x| (x, 1.0)).collect();
        assert!((gini_weighted(&w).unwrap() - gini_sorted(&v)).abs() < 1e-12);
    }

    #[test]
    fn scale_invariant() {
        let v = [1.0, 4.0, 4.0, 9.0, 20.0];
        let scaled: Vec<f64> = v.iter().map(|x| x * 7.5).collect();
        assert!((gini(&v).unwrap() - gini(&scaled).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn weights_equal_repetition() {
        let w = gini_weighted(&[(10.0, 5.0), (20.0, 5.0)]).unwrap();
        let mut rep = vec![10.0; 5];
        rep.extend([20.0; 5]);
        assert!((w - gini(&rep).unwrap()).abs() < 1e-15);
    }
}
