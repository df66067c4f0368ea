//! Small statistical diagnostics for noise-injection checks.

/// P-value of a chi-squared goodness-of-fit test of `counts` against the
/// uniform distribution over its cells (df = cells - 1).
pub fn chi_squared_uniform_pvalue(counts: &[usize]) -> f64 {
    let cells = counts.len();
    assert!(cells >= 2, "need at least two cells");
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 1.0;
    }
    let expected = total as f64 / cells as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum();
    let df = (cells - 1) as f64;
    // Survival function of chi-squared(df) at stat: Q(df/2, stat/2).
    regularized_gamma_upper(df / 2.0, stat / 2.0)
}

/// Regularized upper incomplete gamma Q(s, x) = Gamma(s, x) / Gamma(s),
/// via the lower series for x < s + 1 and the Lentz continued fraction
/// otherwise (Numerical Recipes style).
fn regularized_gamma_upper(s: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < s + 1.0 {
        1.0 - lower_series(s, x)
    } else {
        upper_continued_fraction(s, x)
    }
}

fn lower_series(s: f64, x: f64) -> f64 {
    let mut term = 1.0 / s;
    let mut sum = term;
    let mut a = s;
    for _ in 0..500 {
        a += 1.0;
        term *= x / a;
        sum += term;
        if term.abs() < sum.abs() * 1e-15 {
            break;
        }
    }
    sum * (-x + s * x.ln() - ln_gamma(s)).exp()
}

fn upper_continued_fraction(s: f64, x: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = x + 1.0 - s;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - s);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-15 {
            break;
        }
    }
    h * (-x + s * x.ln() - ln_gamma(s)).exp()
}

/// Lanczos approximation of ln Gamma.
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 6] = [
        76.18009172947146,
        -86.50532032941677,
        24.01409824083091,
        -1.231739572450155,
        0.1208650973866179e-2,
        -0.5395239384953e-5,
    ];
    let mut y = x;
    let tmp = x + 5.5;
    let tmp = tmp - (x + 0.5) * tmp.ln();
    let mut ser = 1.000000000190015;
    for c in COEFFS {
        y += 1.0;
        ser += c / y;
    }
    -tmp + (2.5066282746310005 * ser / x).ln()
}
