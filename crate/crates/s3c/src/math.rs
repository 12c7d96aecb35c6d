//! Small numeric helpers shared across the crate.

/// ln(2π), the normalizing constant of the standard Gaussian log-density.
pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Logistic sigmoid σ(x) = 1 / (1 + e^{-x}).
///
/// Saturates cleanly to 0.0 / 1.0 in f64 for very large |x|.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse sigmoid: σ⁻¹(p) = ln(p / (1 - p)).
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Numerically stable ln(1 + e^x).
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Binary entropy −p ln p − (1−p) ln(1−p), with the 0·ln0 := 0 convention.
pub fn binary_entropy(p: f64) -> f64 {
    let mut h = 0.0;
    if p > 0.0 {
        h -= p * p.ln();
    }
    if p < 1.0 {
        h -= (1.0 - p) * (1.0 - p).ln();
    }
    h
}

/// log Σ exp(xᵢ) without overflow.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sigmoid_midpoint_and_saturation() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) == 0.0);
        assert!(sigmoid(800.0) == 1.0);
        assert_relative_eq!(sigmoid(2.0) + sigmoid(-2.0), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn logit_inverts_sigmoid() {
        for &p in &[0.01, 0.3, 0.5, 0.97] {
            assert_relative_eq!(sigmoid(logit(p)), p, epsilon = 1e-12);
        }
    }

    #[test]
    fn softplus_stable_at_extremes() {
        assert_relative_eq!(softplus(0.0), 2f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(softplus(100.0), 100.0, epsilon = 1e-12);
        assert!(softplus(-50.0) > 0.0);
    }

    #[test]
    fn logsumexp_matches_direct_sum() {
        let xs = [-1.0f64, 0.5, 2.0];
        let direct: f64 = xs.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
        assert_relative_eq!(logsumexp(&xs), direct, epsilon = 1e-12);
        assert_eq!(logsumexp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn entropy_endpoints_are_zero() {
        assert_eq!(binary_entropy(0.0), 0.0);
        assert_eq!(binary_entropy(1.0), 0.0);
        assert_relative_eq!(binary_entropy(0.5), 2f64.ln(), epsilon = 1e-15);
    }
}
