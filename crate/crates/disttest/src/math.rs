//! Small numeric helpers shared across modules.

/// ln(k!) accurate to ~1e-12.
///
/// Exact (via u64 factorials) for k <= 20; Stirling series beyond, whose
/// error is below 1e-12 already at k = 10.
pub fn ln_factorial(k: u64) -> f64 {
    const EXACT: [u64; 21] = [
        1,
        1,
        2,
        6,
        24,
        120,
        720,
        5040,
        40320,
        362880,
        3628800,
        39916800,
        479001600,
        6227020800,
        87178291200,
        1307674368000,
        20922789888000,
        355687428096000,
        6402373705728000,
        121645100408832000,
        2432902008176640000,
    ];
    if k <= 20 {
        (EXACT[k as usize] as f64).ln()
    } else {
        let x = k as f64;
        // Stirling: ln k! = k ln k - k + 0.5 ln(2 pi k) + 1/(12k) - 1/(360k^3) + 1/(1260k^5)
        let inv = 1.0 / x;
        let inv2 = inv * inv;
        x * x.ln() - x
            + 0.5 * (2.0 * std::f64::consts::PI * x).ln()
            + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 / 1260.0))
    }
}

/// Compensated (Kahan) accumulator for long float sums.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let y = value - self.compensation;
        let t = self.sum + y;
        self.compensation = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_factorial_small_values() {
        assert_eq!(ln_factorial(0), 0.0);
        assert_eq!(ln_factorial(1), 0.0);
        assert!((ln_factorial(5) - 120f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn ln_factorial_continuous_at_switchover() {
        // Recurrence check across the exact/Stirling boundary.
        for k in 15..40u64 {
            let lhs = ln_factorial(k + 1);
            let rhs = ln_factorial(k) + ((k + 1) as f64).ln();
            assert!(
                (lhs - rhs).abs() < 1e-11,
                "k={k}: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn kahan_beats_naive_on_small_increments() {
        let mut kahan = KahanSum::new();
        for _ in 0..1_000_000 {
            kahan.add(0.1);
        }
        assert!((kahan.value() - 100_000.0).abs() < 1e-7);
    }
}
