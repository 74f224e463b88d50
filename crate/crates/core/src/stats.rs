//! Statistical primitives used by the probe evaluations: Spearman rank
//! correlation, the paired Student t-test, paired Cohen's d, percentile
//! bootstrap intervals and cosine similarity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, norm, rankdata};

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_sd(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return f64::NAN;
    }
    let m = mean(x);
    let ss: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (x.len() - 1) as f64).sqrt()
}

/// Pearson correlation; `None` when either input has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(Error::TooFewSamples {
            needed: 3,
            got: x.len(),
        });
    }
    let rx = rankdata(x)?;
    let ry = rankdata(y)?;
    pearson(&rx, &ry).ok_or(Error::ConstantInput)
}

/// Outcome of a paired (one-sample on differences) Student t-test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub mean_diff: f64,
    pub t: f64,
    pub df: f64,
    /// Two-sided p-value.
    pub p: f64,
    /// Natural log of `p`, finite even when `p` underflows.
    pub ln_p: f64,
}

/// Paired t-test of `a - b`.
pub fn paired_t(a: &[f64], b: &[f64]) -> Result<TTest> {
    let diffs = paired_diffs(a, b)?;
    one_sample_t(&diffs)
}

pub fn one_sample_t(diffs: &[f64]) -> Result<TTest> {
    let n = diffs.len();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let m = mean(diffs);
    let sd = sample_sd(diffs);
    if !(sd > 0.0) || diffs.iter().all(|d| *d == diffs[0]) {
        return Err(Error::ZeroVariance);
    }
    let t = m / (sd / (n as f64).sqrt());
    let df = (n - 1) as f64;
    let ln_p = student_t_ln_two_sided(t, df);
    Ok(TTest {
        mean_diff: m,
        t,
        df,
        p: ln_p.exp(),
        ln_p,
    })
}

fn paired_diffs(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("paired samples"));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x - y).collect())
}

/// Cohen's d of paired samples: mean difference over the sample sd of the
/// differences.
pub fn cohens_d_paired(a: &[f64], b: &[f64]) -> Result<f64> {
    let diffs = paired_diffs(a, b)?;
    if diffs.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: diffs.len(),
        });
    }
    let sd = sample_sd(&diffs);
    if !(sd > 0.0) || diffs.iter().all(|d| *d == diffs[0]) {
        return Err(Error::ZeroVariance);
    }
    Ok(mean(&diffs) / sd)
}

pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch(u.len(), v.len()));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Statistic resampled by [`bootstrap_ci`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootStat {
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub low: f64,
    pub high: f64,
    pub b: usize,
    pub confidence: f64,
    pub seed: u64,
}

/// Percentile bootstrap interval. Resample `i` draws from its own ChaCha
/// stream, so the interval depends only on `seed`.
pub fn bootstrap_ci(
    samples: &[f64],
    stat: BootStat,
    b: usize,
    confidence: f64,
    seed: u64,
) -> Result<BootstrapCi> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    if b < 100 {
        return Err(Error::InvalidArgument(format!(
            "bootstrap needs at least 100 resamples, got {b}"
        )));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "confidence {confidence} outside (0, 1)"
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("bootstrap samples"));
    }
    let mut stats: Vec<f64> = (0..b)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            match stat {
                BootStat::Mean => {
                    let s: f64 = (0..n).map(|_| samples[rng.random_range(0..n)]).sum();
                    s / n as f64
                }
            }
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let tail = (1.0 - confidence) / 2.0;
    Ok(BootstrapCi {
        low: quantile_sorted(&stats, tail),
        high: quantile_sorted(&stats, 1.0 - tail),
        b,
        confidence,
        seed,
    })
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = h - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Natural log of the gamma function for `x > 0` (Lanczos, g = 7).
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
    let mut acc = COEF[0];
    let t = x + 7.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
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
    for m in 1..10_000 {
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
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// `ln I_x(a, b)`, the log regularized incomplete beta function, given both
/// `x` and `1 - x` so callers can avoid cancellation.
fn ln_beta_inc(a: f64, b: f64, x: f64, one_minus_x: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if one_minus_x <= 0.0 {
        return 0.0;
    }
    let ln_front = a * x.ln() + b * one_minus_x.ln() - ln_beta(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front + beta_cf(a, b, x).ln() - a.ln()
    } else {
        let comp = (ln_front + beta_cf(b, a, one_minus_x).ln() - b.ln()).exp();
        (-comp).ln_1p()
    }
}

/// Log of the two-sided tail probability `P(|T| >= |t|)` for Student's t
/// with `df` degrees of freedom.
pub fn student_t_ln_two_sided(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    if !t.is_finite() {
        return f64::NEG_INFINITY;
    }
    let t2 = t * t;
    let x = df / (df + t2);
    let one_minus_x = t2 / (df + t2);
    ln_beta_inc(df / 2.0, 0.5, x, one_minus_x).min(0.0)
}

pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    student_t_ln_two_sided(t, df).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    // Independent t-tail oracle: adaptive Simpson on the unnormalized density,
    // with the normalizer integrated the same way (no gamma functions).
    fn t_kernel(s: f64, df: f64) -> f64 {
        (1.0 + s * s / df).powf(-(df + 1.0) / 2.0)
    }

    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, eps: f64, whole: f64, fa: f64, fm: f64, fb: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * eps {
            left + right + delta / 15.0
        } else {
            simpson(f, a, m, eps / 2.0, left, fa, flm, fm, depth - 1)
                + simpson(f, m, b, eps / 2.0, right, fm, frm, fb, depth - 1)
        }
    }

    fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, eps: f64) -> f64 {
        let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        simpson(f, a, b, eps, whole, fa, fm, fb, 60)
    }

    // integral of the kernel over [c, inf) via s = c / v, v in (0, 1]
    fn tail_from(c: f64, df: f64) -> f64 {
        let g = |v: f64| {
            if v <= 0.0 {
                0.0
            } else {
                t_kernel(c / v, df) * c / (v * v)
            }
        };
        let rough = integrate(&g, 0.0, 1.0, 1e-6);
        integrate(&g, 0.0, 1.0, rough.abs() * 1e-13)
    }

    pub(crate) fn oracle_two_sided_p(t: f64, df: f64) -> f64 {
        let c = t.abs();
        let core = |s: f64| t_kernel(s, df);
        let half_total = integrate(&core, 0.0, 1.0, 1e-15) + tail_from(1.0, df);
        let tail = if c >= 1.0 {
            tail_from(c, df)
        } else {
            integrate(&core, c, 1.0, 1e-15) + tail_from(1.0, df)
        };
        tail / half_total
    }

    #[test]
    fn spearman_examples() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert!((spearman(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        let rev: Vec<f64> = x.iter().rev().copied().collect();
        assert!((spearman(&x, &rev).unwrap() + 1.0).abs() < 1e-15);
        // 1 - 6 * (0+1+1+1+1) / (5 * 24) = 0.8
        let y = [1.0, 3.0, 2.0, 5.0, 4.0];
        assert!((spearman(&x, &y).unwrap() - 0.8).abs() < 1e-14);
    }

    #[test]
    fn spearman_errors() {
        assert!(matches!(
            spearman(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]),
            Err(Error::ConstantInput)
        ));
        assert!(matches!(
            spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0]),
            Err(Error::LengthMismatch(3, 2))
        ));
    }

    #[test]
    fn paired_t_hand_example() {
        let a = [1.0, 2.0, 3.0];
        let b = [0.0, 0.0, 0.0];
        let r = paired_t(&a, &b).unwrap();
        assert!((r.t - 2.0 * 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(r.df, 2.0);
        let oracle = oracle_two_sided_p(r.t, 2.0);
        assert!((r.p - oracle).abs() <= 1e-9 * oracle, "{} vs {}", r.p, oracle);
        // df = 2 has the closed form p = 1 - t / sqrt(t^2 + 2)
        let closed = 1.0 - r.t / (r.t * r.t + 2.0).sqrt();
        assert!((r.p - closed).abs() < 1e-13);
        assert!((r.p - 0.0742).abs() < 5e-5);

        let swapped = paired_t(&b, &a).unwrap();
        assert_eq!(swapped.t, -r.t);
        assert_eq!(swapped.p, r.p);
    }

    #[test]
    fn paired_t_zero_variance() {
        assert!(matches!(
            paired_t(&[2.0, 3.0, 4.0], &[1.0, 2.0, 3.0]),
            Err(Error::ZeroVariance)
        ));
    }

    #[test]
    fn tiny_p_values_do_not_underflow() {
        let ln_p = student_t_ln_two_sided(400.0, 29.0);
        assert!(ln_p.is_finite() && ln_p < (1e-40f64).ln());
        let ln_p_huge = student_t_ln_two_sided(1e80, 29.0);
        assert!(ln_p_huge.is_finite() && ln_p_huge < -700.0);
    }

    #[test]
    fn t_tail_matches_oracle_across_df() {
        for &df in &[1.0, 2.0, 5.0, 29.0, 100.0] {
            for &t in &[0.1, 0.7, 1.0, 2.5, 6.0, 15.0] {
                let p = student_t_two_sided(t, df);
                if p < 1e-12 {
                    continue;
                }
                let o = oracle_two_sided_p(t, df);
                assert!((p - o).abs() <= 1e-9 * o, "df={df} t={t}: {p} vs {o}");
            }
        }
    }

    #[test]
    fn cohens_d_examples() {
        let d = cohens_d_paired(&[1.0, 2.0, 3.0], &[0.0; 3]).unwrap();
        assert!((d - 2.0).abs() < 1e-14);
        let a = [0.3, 0.9, 0.2, 0.5];
        let b = [0.1, 0.2, 0.25, 0.05];
        let scaled_a: Vec<f64> = a.iter().map(|v| v * 3.7).collect();
        let scaled_b: Vec<f64> = b.iter().map(|v| v * 3.7).collect();
        let d1 = cohens_d_paired(&a, &b).unwrap();
        let d2 = cohens_d_paired(&scaled_a, &scaled_b).unwrap();
        assert!((d1 - d2).abs() < 1e-12);
        assert!(matches!(
            cohens_d_paired(&[1.0, 1.0], &[0.0, 0.0]),
            Err(Error::ZeroVariance)
        ));
    }

    #[test]
    fn bootstrap_constant_and_deterministic() {
        let c = bootstrap_ci(&[2.5; 10], BootStat::Mean, 500, 0.95, 3).unwrap();
        assert_eq!((c.low, c.high), (2.5, 2.5));
        let s = [0.1, 0.4, -0.3, 0.9, 0.2, 0.0];
        let a = bootstrap_ci(&s, BootStat::Mean, 1000, 0.95, 9).unwrap();
        let b = bootstrap_ci(&s, BootStat::Mean, 1000, 0.95, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.low <= a.high);
        assert!(matches!(
            bootstrap_ci(&[1.0], BootStat::Mean, 1000, 0.95, 1),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn bootstrap_matches_normal_theory() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let s: Vec<f64> = (0..100).map(|_| StandardNormal.sample(&mut rng)).collect();
        let ci = bootstrap_ci(&s, BootStat::Mean, 10_000, 0.95, 1).unwrap();
        let m = mean(&s);
        let half = 1.96 / 10.0;
        assert!(((ci.low - (m - half)).abs()) < 0.3 * half);
        assert!(((ci.high - (m + half)).abs()) < 0.3 * half);
    }

    #[test]
    fn bootstrap_covers_point_statistic() {
        let mut misses = 0;
        for trial in 0..1000u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
            let s: Vec<f64> = (0..30).map(|_| StandardNormal.sample(&mut rng)).collect();
            let ci = bootstrap_ci(&s, BootStat::Mean, 1000, 0.95, trial).unwrap();
            let m = mean(&s);
            if !(ci.low <= m && m <= ci.high) {
                misses += 1;
            }
        }
        assert!(misses < 10, "{misses} misses");
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine(&[1.0, 2.0], &[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroVector)));
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-14);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
    }

    proptest! {
        #[test]
        fn spearman_monotone_invariant(v in proptest::collection::vec(-100.0f64..100.0, 3..30), w in proptest::collection::vec(-100.0f64..100.0, 3..30)) {
            let n = v.len().min(w.len());
            let (x, y) = (&v[..n], &w[..n]);
            if let Ok(r) = spearman(x, y) {
                let tx: Vec<f64> = x.iter().map(|a| a.powi(3) + 2.0).collect();
                let r2 = spearman(&tx, y).unwrap();
                prop_assert!((r - r2).abs() < 1e-12);
                prop_assert!((-1.0..=1.0).contains(&r));
            }
        }

        #[test]
        fn cosine_scaling(u in proptest::collection::vec(-10.0f64..10.0, 4), v in proptest::collection::vec(-10.0f64..10.0, 4), c in 0.1f64..50.0) {
            if let Ok(base) = cosine(&u, &v) {
                let su: Vec<f64> = u.iter().map(|a| a * c).collect();
                let nu: Vec<f64> = u.iter().map(|a| -a).collect();
                prop_assert!((cosine(&su, &v).unwrap() - base).abs() < 1e-12);
                prop_assert!((cosine(&nu, &v).unwrap() + base).abs() < 1e-12);
            }
        }
    }
}
