//! Ensemble estimators with jackknife standard errors.

use serde::Serialize;

use crate::gibbs::ObservableMoments;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased (n - 1) sample variance.
pub fn unbiased_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    if xs.iter().all(|&x| x == xs[0]) {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64
}

/// Jackknife standard error of `estimate`, which receives the index to leave out
/// (`None` for the full-sample estimate).
pub fn jackknife_se(n: usize, estimate: impl Fn(Option<usize>) -> f64) -> f64 {
    if n < 2 {
        return f64::NAN;
    }
    let loo: Vec<f64> = (0..n).map(|i| estimate(Some(i))).collect();
    let m = mean(&loo);
    let ss: f64 = loo.iter().map(|t| (t - m).powi(2)).sum();
    ((n - 1) as f64 / n as f64 * ss).sqrt()
}

/// Copy of `xs` without index `skip`.
pub fn without(xs: &[f64], skip: Option<usize>) -> Vec<f64> {
    match skip {
        None => xs.to_vec(),
        Some(i) => xs
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &x)| x)
            .collect(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    pub fn of_mean(xs: &[f64]) -> Self {
        Self {
            value: mean(xs),
            se: jackknife_se(xs.len(), |skip| mean(&without(xs, skip))),
        }
    }

    pub fn of_variance(xs: &[f64]) -> Self {
        Self {
            value: unbiased_variance(xs),
            se: jackknife_se(xs.len(), |skip| unbiased_variance(&without(xs, skip))),
        }
    }
}

/// `E<(A - E<A>)^2> = E<(A - <A>)^2> + E(<A> - E<A>)^2` from per-sample moments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VarianceDecomposition {
    /// `E<A>`.
    pub mean: Estimate,
    /// `E<(A - <A>)^2>`.
    pub gibbs: Estimate,
    /// `E(<A> - E<A>)^2`, unbiased.
    pub sample: Estimate,
    /// `E<(A - E<A>)^2>` computed by centring each sample's second moment on the ensemble mean.
    pub total: Estimate,
}

fn total_variance(moments: &[ObservableMoments]) -> f64 {
    let n = moments.len() as f64;
    let means: Vec<f64> = moments.iter().map(|m| m.mean).collect();
    let centre = mean(&means);
    let centred: f64 = moments
        .iter()
        .map(|m| m.second - 2.0 * centre * m.mean + centre * centre)
        .sum::<f64>()
        / n;
    // plug-in centring on the sample mean underestimates by Var/n
    centred + unbiased_variance(&means) / n
}

fn leave_out(moments: &[ObservableMoments], skip: Option<usize>) -> Vec<ObservableMoments> {
    match skip {
        None => moments.to_vec(),
        Some(i) => moments
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, m)| *m)
            .collect(),
    }
}

impl VarianceDecomposition {
    pub fn from_moments(moments: &[ObservableMoments]) -> Self {
        let means: Vec<f64> = moments.iter().map(|m| m.mean).collect();
        let gibbs: Vec<f64> = moments.iter().map(|m| m.gibbs_variance().max(0.0)).collect();
        Self {
            mean: Estimate::of_mean(&means),
            gibbs: Estimate::of_mean(&gibbs),
            sample: Estimate::of_variance(&means),
            total: Estimate {
                value: total_variance(moments),
                se: jackknife_se(moments.len(), |skip| total_variance(&leave_out(moments, skip))),
            },
        }
    }

    /// `|total - (gibbs + sample)|`.
    pub fn additivity_defect(&self) -> f64 {
        (self.total.value - self.gibbs.value - self.sample.value).abs()
    }

    /// Combined standard error of the three terms.
    pub fn combined_se(&self) -> f64 {
        (self.total.se.powi(2) + self.gibbs.se.powi(2) + self.sample.se.powi(2)).sqrt()
    }

    /// Additivity within `4 * combined_se`, with a rounding floor.
    pub fn additive(&self) -> bool {
        self.additivity_defect() <= 4.0 * self.combined_se() + 1e-12 * self.total.value.abs().max(1e-3)
    }

    /// Gibbs term over total, absent when the total vanishes.
    pub fn gibbs_fraction(moments: &[ObservableMoments]) -> Option<Estimate> {
        let ratio = |ms: &[ObservableMoments]| {
            let gibbs = mean(&ms.iter().map(|m| m.gibbs_variance().max(0.0)).collect::<Vec<_>>());
            let total = total_variance(ms);
            if total.abs() <= 1e-14 {
                f64::NAN
            } else {
                gibbs / total
            }
        };
        let value = ratio(moments);
        if value.is_nan() {
            return None;
        }
        Some(Estimate {
            value,
            se: jackknife_se(moments.len(), |skip| ratio(&leave_out(moments, skip))),
        })
    }
}

/// Least-squares slope of `ln y` against `ln x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    /// Residual and propagated point errors combined in quadrature.
    pub slope_se: f64,
}

pub fn log_log_fit(xs: &[f64], ys: &[f64], y_se: &[f64]) -> Option<LogLogFit> {
    if xs.len() < 2 || xs.len() != ys.len() || ys.iter().any(|&y| !(y > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = mean(&lx);
    let my = mean(&ly);
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / sxx;
    let intercept = my - slope * mx;
    let k = lx.len();
    let resid_var = if k > 2 {
        lx.iter()
            .zip(&ly)
            .map(|(x, y)| (y - intercept - slope * x).powi(2))
            .sum::<f64>()
            / (k - 2) as f64
            / sxx
    } else {
        0.0
    };
    // d ln y = se / y for each point
    let prop_var: f64 = lx
        .iter()
        .zip(ys.iter().zip(y_se))
        .map(|(x, (y, se))| {
            let rel = if se.is_finite() { se / y } else { 0.0 };
            ((x - mx) / sxx).powi(2) * rel * rel
        })
        .sum();
    Some(LogLogFit {
        slope,
        intercept,
        slope_se: (resid_var + prop_var).sqrt(),
    })
}
