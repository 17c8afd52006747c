use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignificanceReport {
    pub statistic: f64,
    pub p_value: f64,
    pub degrees_of_freedom: f64,
    pub n_a: usize,
    pub n_b: usize,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, ss / (n - 1.0))
}

fn bits(v: &[bool]) -> Vec<f64> {
    v.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
}

fn upper_tail(t: f64, df: f64) -> Result<f64> {
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Evaluation(e.to_string()))?;
    Ok(dist.sf(t).clamp(0.0, 1.0))
}

/// Welch two-sample t-test on per-sample correctness, two-sided.
///
/// When both samples have zero variance the p-value is 1 for equal means
/// and 0 otherwise.
pub fn t_test(a: &[bool], b: &[bool]) -> Result<SignificanceReport> {
    welch(&bits(a), &bits(b))
}

/// [`t_test`] on real-valued samples.
pub fn welch(a: &[f64], b: &[f64]) -> Result<SignificanceReport> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Argument("t-test needs two non-empty samples".into()));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let ((ma, va), (mb, vb)) = (mean_var(a), mean_var(b));
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    let report = |statistic, p_value, degrees_of_freedom| SignificanceReport {
        statistic,
        p_value,
        degrees_of_freedom,
        n_a: a.len(),
        n_b: b.len(),
    };
    if se2 == 0.0 {
        return Ok(if ma == mb {
            report(0.0, 1.0, f64::NAN)
        } else {
            report((ma - mb).signum() * f64::INFINITY, 0.0, f64::NAN)
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let mut df_den = 0.0;
    if na > 1.0 {
        df_den += sa * sa / (na - 1.0);
    }
    if nb > 1.0 {
        df_den += sb * sb / (nb - 1.0);
    }
    let df = se2 * se2 / df_den;
    Ok(report(t, (2.0 * upper_tail(t.abs(), df)?).min(1.0), df))
}

/// One-sided paired t-test of `mean(a - b) > 0`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<SignificanceReport> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Argument(format!(
            "paired t-test needs two equal samples of size >= 2, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = diff.len() as f64;
    let (m, v) = mean_var(&diff);
    let df = n - 1.0;
    let (t, p) = if v == 0.0 {
        match m.partial_cmp(&0.0) {
            Some(std::cmp::Ordering::Greater) => (f64::INFINITY, 0.0),
            Some(std::cmp::Ordering::Less) => (f64::NEG_INFINITY, 1.0),
            _ => (0.0, 1.0),
        }
    } else {
        let t = m / (v / n).sqrt();
        (t, upper_tail(t, df)?)
    };
    Ok(SignificanceReport {
        statistic: t,
        p_value: p,
        degrees_of_freedom: df,
        n_a: a.len(),
        n_b: b.len(),
    })
}
