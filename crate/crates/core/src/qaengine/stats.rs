//! Statistics behind ground-truth answers, including the chi-square upper
//! tail via the regularized incomplete gamma function.

use std::collections::BTreeMap;

pub fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    Some(xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Middle value, or the average of the two middle values for even counts.
pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

/// Sample variance with divisor `n - 1`; needs two values.
pub fn sample_variance(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs)?;
    Some(xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64)
}

/// Most frequent item; ties go to the lexicographically smallest.
pub fn mode<'a>(items: impl IntoIterator<Item = &'a str>) -> Option<(&'a str, usize)> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for s in items {
        *counts.entry(s).or_default() += 1;
    }
    // BTreeMap iterates in ascending order, so the first maximum wins ties.
    let mut best: Option<(&str, usize)> = None;
    for (k, c) in counts {
        if best.is_none_or(|(_, b)| c > b) {
            best = Some((k, c));
        }
    }
    best
}

/// Pearson correlation; `None` with fewer than two pairs or a constant side.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    assert_eq!(xs.len(), ys.len());
    if xs.len() < 2 {
        return None;
    }
    let mx = mean(xs)?;
    let my = mean(ys)?;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChiSquare {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Pearson's chi-square test of independence over observed level pairs.
/// Levels are those present in the data; `None` when `df` would be zero.
pub fn chi_square_independence<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Option<ChiSquare> {
    let mut table: BTreeMap<(&str, &str), f64> = BTreeMap::new();
    let mut rows: BTreeMap<&str, f64> = BTreeMap::new();
    let mut cols: BTreeMap<&str, f64> = BTreeMap::new();
    let mut n = 0.0;
    for (a, b) in pairs {
        *table.entry((a, b)).or_default() += 1.0;
        *rows.entry(a).or_default() += 1.0;
        *cols.entry(b).or_default() += 1.0;
        n += 1.0;
    }
    if rows.len() < 2 || cols.len() < 2 {
        return None;
    }
    let mut x = 0.0;
    for (a, ra) in &rows {
        for (b, cb) in &cols {
            let e = ra * cb / n;
            let o = table.get(&(*a, *b)).copied().unwrap_or(0.0);
            x += (o - e) * (o - e) / e;
        }
    }
    let df = (rows.len() - 1) * (cols.len() - 1);
    Some(ChiSquare {
        statistic: x,
        df,
        p_value: chi_square_sf(df as f64, x),
    })
}

/// Upper tail `P(X > x)` for a chi-square variable with `df` degrees of
/// freedom: `Q(df / 2, x / 2)`.
pub fn chi_square_sf(df: f64, x: f64) -> f64 {
    assert!(df > 0.0, "df must be positive");
    if x <= 0.0 {
        return 1.0;
    }
    gamma_q(df / 2.0, x / 2.0)
}

const EPS: f64 = 1e-15;
const MAX_ITER: usize = 100_000;

/// `ln Γ(a)` for `a > 0`. Integers and half-integers (every chi-square
/// shape) use exact products; other arguments use a Lanczos approximation.
pub fn ln_gamma(a: f64) -> f64 {
    assert!(a > 0.0);
    let twice = 2.0 * a;
    if twice.fract() == 0.0 && a <= 1.0e4 {
        let (mut z, mut acc) = if a.fract() == 0.0 {
            (1.0, 0.0)
        } else {
            (0.5, 0.5 * std::f64::consts::PI.ln())
        };
        while z < a {
            acc += z.ln();
            z += 1.0;
        }
        return acc;
    }
    lanczos_ln_gamma(a)
}

fn lanczos_ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - lanczos_ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized upper incomplete gamma `Q(a, x)`: the series for `P` when
/// `x < a + 1`, otherwise a modified Lentz continued fraction for `Q`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_continued_fraction(a, x)
    }
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x < a + 1.0 {
        gamma_p_series(a, x)
    } else {
        1.0 - gamma_q_continued_fraction(a, x)
    }
}

fn prefactor(a: f64, x: f64) -> f64 {
    (a * x.ln() - x - ln_gamma(a)).exp()
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut ap = a;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum * prefactor(a, x)
}

fn gamma_q_continued_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    prefactor(a, x) * h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn variance_uses_n_minus_one() {
        assert_eq!(sample_variance(&[1.0, 2.0, 3.0, 4.0]), Some(5.0 / 3.0));
        assert_eq!(sample_variance(&[1.0]), None);
    }

    #[test]
    fn mode_ties_pick_smallest() {
        assert_eq!(mode(["b", "a", "b", "a", "c"]), Some(("a", 2)));
        assert_eq!(mode(["10", "9", "9", "10"]), Some(("10", 2)));
    }

    #[test]
    fn pearson_degenerate() {
        assert_eq!(pearson(&[1.0, 1.0], &[2.0, 3.0]), None);
        let r = pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.5]).unwrap();
        assert!(r > 0.99 && r <= 1.0);
    }

    #[test]
    fn independent_table_has_zero_statistic() {
        let pairs = [("a", "x"), ("a", "y"), ("b", "x"), ("b", "y")];
        let c = chi_square_independence(pairs.iter().copied()).unwrap();
        assert_eq!(c.statistic, 0.0);
        assert_eq!(c.df, 1);
        assert_eq!(c.p_value, 1.0);
        assert!(chi_square_independence([("a", "x"), ("a", "y")]).is_none());
    }

    #[test]
    fn critical_values() {
        assert!((chi_square_sf(1.0, 3.841) - 0.05).abs() < 5e-5);
        assert!((chi_square_sf(2.0, 5.991) - 0.05).abs() < 5e-5);
        // df = 2 has the closed form exp(-x/2).
        for x in [0.1, 1.0, 7.5, 40.0] {
            let exact = (-x / 2.0f64).exp();
            assert!((chi_square_sf(2.0, x) / exact - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn ln_gamma_paths_agree() {
        for a in [0.5, 1.0, 1.5, 4.0, 10.5, 30.0] {
            assert!((ln_gamma(a) - lanczos_ln_gamma(a)).abs() < 1e-12, "{a}");
        }
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-15);
    }
}
