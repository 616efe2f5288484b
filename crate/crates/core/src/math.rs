//! Small numeric helpers shared by the kernel and the dynamic programs.

/// Kahan-Babuska (Neumaier) compensated accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Self::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Compensated sum of a slice, accumulating from the smallest magnitude up.
pub fn sum_ascending(values: &[f64]) -> f64 {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    sorted.into_iter().collect::<CompensatedSum>().value()
}

/// `ln(n!)`.
#[inline]
pub fn ln_factorial(n: usize) -> f64 {
    if n < 2 {
        0.0
    } else {
        libm::lgamma(n as f64 + 1.0)
    }
}

/// `ln C(n, k)`; `-inf` outside `0 <= k <= n`.
#[inline]
pub fn ln_binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    if k == 0 || k == n {
        return 0.0;
    }
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// `1 - (1 - p)^n` without cancellation for small `p`.
pub fn prob_at_least_one(n: usize, p: f64) -> f64 {
    if p >= 1.0 {
        return 1.0;
    }
    -libm::expm1(n as f64 * libm::log1p(-p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut acc = CompensatedSum::new();
        acc.add(1.0);
        for _ in 0..10 {
            acc.add(1e-17);
        }
        assert!((acc.value() - (1.0 + 1e-16)).abs() < 1e-30 + f64::EPSILON * 1e-1);
    }

    #[test]
    fn ln_binomial_small_values() {
        assert!((ln_binomial(4, 2) - 6f64.ln()).abs() < 1e-14);
        assert!((ln_binomial(10, 3) - 120f64.ln()).abs() < 1e-13);
        assert_eq!(ln_binomial(3, 4), f64::NEG_INFINITY);
    }

    #[test]
    fn at_least_one_is_stable_for_tiny_rates() {
        let v = prob_at_least_one(100, 1e-12);
        assert!((v / 1e-10 - 1.0).abs() < 1e-9);
        assert_eq!(prob_at_least_one(3, 0.5), 0.875);
    }
}
