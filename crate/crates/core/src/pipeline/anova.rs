use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    /// `+inf` when the within-group variance is zero but the means differ.
    pub f_stat: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub p_value: f64,
    pub infinite_f: bool,
}

/// Two-group one-way ANOVA.
pub fn one_way_anova(a: &[f64], b: &[f64]) -> Result<AnovaResult> {
    one_way_anova_groups(&[a, b])
}

/// One-way ANOVA over any number of groups, each of size at least 2.
pub fn one_way_anova_groups(groups: &[&[f64]]) -> Result<AnovaResult> {
    if groups.len() < 2 {
        return Err(Error::InvalidArgument(
            "ANOVA needs at least two groups".into(),
        ));
    }
    if groups.iter().any(|g| g.len() < 2) {
        return Err(Error::InvalidArgument(
            "every ANOVA group needs at least two values".into(),
        ));
    }
    if groups.iter().flat_map(|g| g.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "non-finite value in ANOVA input".into(),
        ));
    }
    let n_total: usize = groups.iter().map(|g| g.len()).sum();
    let means: Vec<f64> = groups
        .iter()
        .map(|g| g.iter().sum::<f64>() / g.len() as f64)
        .collect();
    // pairwise form: exactly zero when all group means coincide
    let mut ss_between = 0.0;
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            let d = means[i] - means[j];
            ss_between += (groups[i].len() * groups[j].len()) as f64 * d * d;
        }
    }
    ss_between /= n_total as f64;
    let ss_within: f64 = groups
        .iter()
        .zip(&means)
        .map(|(g, m)| g.iter().map(|v| (v - m) * (v - m)).sum::<f64>())
        .sum();
    let df_between = groups.len() - 1;
    let df_within = n_total - groups.len();
    if ss_within == 0.0 {
        let infinite = ss_between > 0.0;
        return Ok(AnovaResult {
            f_stat: if infinite { f64::INFINITY } else { 0.0 },
            df_between,
            df_within,
            p_value: if infinite { 0.0 } else { 1.0 },
            infinite_f: infinite,
        });
    }
    let f = (ss_between / df_between as f64) / (ss_within / df_within as f64);
    Ok(AnovaResult {
        f_stat: f,
        df_between,
        df_within,
        p_value: f_survival(f, df_between as f64, df_within as f64),
        infinite_f: false,
    })
}

/// `P(F > f)` for an F(d1, d2) variable.
pub fn f_survival(f: f64, d1: f64, d2: f64) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    let denom = d2 + d1 * f;
    // the survival function is I_x(d2/2, d1/2) with x = d2 / (d2 + d1 f)
    regularized_beta(d2 / 2.0, d1 / 2.0, d2 / denom, d1 * f / denom)
}

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
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
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized incomplete beta `I_x(a, b)`, given `x` and `y = 1 - x`
/// separately to avoid cancellation.
pub fn regularized_beta(a: f64, b: f64, x: f64, y: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if y <= 0.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * y.ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, y) / b
    }
}

/// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    const MAX_ITER: usize = 100_000;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_example() {
        let r = one_way_anova(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap();
        assert!((r.f_stat - 1.5).abs() < 1e-12);
        assert_eq!((r.df_between, r.df_within), (1, 4));
        // F(1, 4) survival at 1.5 equals the two-sided t(4) tail at sqrt(1.5):
        // 1 - I_{t²/(t²+4)}(1/2, 2) in closed form for 4 degrees of freedom
        let t2: f64 = 1.5;
        let u = (t2 / (t2 + 4.0)).sqrt();
        let oracle = 1.0 - (1.5 * u - 0.5 * u.powi(3));
        assert!(
            (r.p_value - oracle).abs() < 1e-12,
            "{} vs {oracle}",
            r.p_value
        );
        assert!((r.p_value - 0.2879).abs() < 1e-4);
    }

    #[test]
    fn identical_groups() {
        let a = [0.3, 1.7, 2.2, 9.1];
        let r = one_way_anova(&a, &a).unwrap();
        assert_eq!(r.f_stat, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn zero_within_variance() {
        let r = one_way_anova(&[1.0, 1.0], &[2.0, 2.0]).unwrap();
        assert!(r.infinite_f && r.f_stat.is_infinite());
        assert_eq!(r.p_value, 0.0);
        let r = one_way_anova(&[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert!(!r.infinite_f);
        assert_eq!((r.f_stat, r.p_value), (0.0, 1.0));
    }

    #[test]
    fn rejects_small_groups() {
        assert!(one_way_anova(&[1.0], &[1.0, 2.0]).is_err());
        assert!(one_way_anova(&[1.0, f64::NAN], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn ln_gamma_values() {
        assert!(ln_gamma(1.0).abs() < 1e-14);
        assert!(ln_gamma(2.0).abs() < 1e-14);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
        assert!((ln_gamma(10.0) - 362_880f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn beta_symmetry() {
        for &(a, b, x) in &[(0.5, 2.0, 0.3), (3.0, 7.5, 0.8), (120.0, 0.5, 0.99)] {
            let i = regularized_beta(a, b, x, 1.0 - x);
            let j = regularized_beta(b, a, 1.0 - x, x);
            assert!((i + j - 1.0).abs() < 1e-13);
        }
    }
}
