//! Log-space numerical primitives shared by the likelihood, prior, and
//! sampling code.
//!
//! Everything that multiplies probabilities works on log values instead, so
//! the likelihood of a several-thousand-animal dataset never leaves the
//! representable range. The two building blocks that need care are
//! [`log_add_exp`] (used by the marginalization recurrences) and the normal
//! CDF, which is evaluated through `erfc` so that cell masses far out in a
//! tail keep full relative accuracy instead of cancelling to zero.

pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Largest `f64` strictly below 1.
pub const ONE_MINUS_EPS: f64 = 1.0 - f64::EPSILON / 2.0;

/// `log(exp(a) + exp(b))` computed without leaving log space.
///
/// Either argument may be `-inf` (an impossible branch); the other value is
/// returned unchanged. Not meant for `+inf` or NaN inputs.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    if a > b {
        a + (b - a).exp().ln_1p()
    } else {
        b + (a - b).exp().ln_1p()
    }
}

/// `log(sum(exp(xs)))` over a slice, two-pass (max shift then sum).
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let mx = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = xs.iter().map(|&x| (x - mx).exp()).sum();
    mx + s.ln()
}

/// Standard normal CDF via the complementary error function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Mass a Normal(mean, sd) assigns to `(lo, hi]`.
///
/// The difference is taken between two same-side tail probabilities so a
/// cell sitting far out in either tail keeps its relative accuracy; the
/// naive `cdf(hi) - cdf(lo)` would cancel to zero there.
pub fn normal_cell_mass(mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    debug_assert!(sd > 0.0 && lo <= hi);
    let a = (lo - mean) / (sd * std::f64::consts::SQRT_2);
    let b = (hi - mean) / (sd * std::f64::consts::SQRT_2);
    let mass = if a + b >= 0.0 {
        0.5 * (libm::erfc(a) - libm::erfc(b))
    } else {
        0.5 * (libm::erfc(-b) - libm::erfc(-a))
    };
    mass.max(0.0)
}

pub fn normal_logpdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * LN_2PI - sd.ln() - 0.5 * z * z
}

/// Logistic function, overflow-safe for any finite argument and clamped to
/// the open interval (0, 1) so downstream `ln(1 - p)` never hits `ln(0)`.
pub fn inv_logit(x: f64) -> f64 {
    let v = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    v.clamp(f64::MIN_POSITIVE, ONE_MINUS_EPS)
}

/// `ln(inv_logit(x))`, exact in the tails where `inv_logit` itself would
/// round to 0 or 1.
pub fn ln_inv_logit(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// `ln(n choose k)` through the log-gamma function.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Log of the Binomial(n, p) probability mass at `k`.
///
/// Degenerate success probabilities follow the point-mass convention:
/// `p = 0` puts all mass on `k = 0`, `p = 1` on `k = n`.
pub fn ln_binomial_pmf(k: u64, n: u64, p: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p));
    if k > n {
        return f64::NEG_INFINITY;
    }
    if p == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if p == 1.0 {
        return if k == n { 0.0 } else { f64::NEG_INFINITY };
    }
    ln_choose(n, k) + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; zero for slices shorter than two.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Linear-interpolation quantile of an ascending-sorted slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    assert!((0.0..=1.0).contains(&q));
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
    }
}
