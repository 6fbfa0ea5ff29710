//! Time-indexed run records shared by all engines.

use nalgebra::DVector;

/// Errors at or below this value are excluded from the rate fit; they sit
/// on the floating-point floor and carry no rate information.
pub const RATE_FIT_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: u64,
    pub states: Vec<DVector<f64>>,
    pub per_agent_error: Vec<f64>,
    pub disagreement: f64,
    pub residual: f64,
}

impl StepRecord {
    pub fn max_error(&self) -> f64 {
        self.per_agent_error.iter().copied().fold(0.0, f64::max)
    }

    /// Two-norm of the stacked error vector.
    pub fn error_norm(&self) -> f64 {
        self.per_agent_error.iter().map(|e| e * e).sum::<f64>().sqrt()
    }
}

/// Reference point used to turn states into errors.
#[derive(Debug, Clone)]
pub enum ErrorReference {
    /// A known solution.
    Known(DVector<f64>),
    /// The agent average at the last recorded step.
    FinalConsensus,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub steps: Vec<StepRecord>,
    pub converged: bool,
    pub converged_at: Option<u64>,
    /// Per-step slope of `ln(max_i error)` fitted over the last half of the run.
    pub empirical_rate: Option<f64>,
}

impl Trace {
    pub fn last(&self) -> Option<&StepRecord> {
        self.steps.last()
    }

    /// Agent average at the final step.
    pub fn final_average(&self) -> Option<DVector<f64>> {
        self.last().map(|r| average(&r.states))
    }

    /// Fill `per_agent_error` for every step against `reference`, then fit
    /// the empirical rate.
    pub fn assign_errors(&mut self, reference: &ErrorReference) {
        let point = match reference {
            ErrorReference::Known(x) => Some(x.clone()),
            ErrorReference::FinalConsensus => self.final_average(),
        };
        let Some(point) = point else { return };
        for rec in &mut self.steps {
            rec.per_agent_error = rec.states.iter().map(|x| (x - &point).norm()).collect();
        }
        self.empirical_rate = self.rate_fit().map(|f| f.slope);
    }

    /// Least-squares line through `(t, ln max_error)` on the last half.
    pub fn rate_fit(&self) -> Option<LinearFit> {
        let start = self.steps.len() / 2;
        let (ts, ys): (Vec<f64>, Vec<f64>) = self.steps[start..]
            .iter()
            .filter(|r| r.max_error() > RATE_FIT_FLOOR && r.max_error().is_finite())
            .map(|r| (r.t as f64, r.max_error().ln()))
            .unzip();
        fit_line(&ts, &ys)
    }
}

pub fn average(states: &[DVector<f64>]) -> DVector<f64> {
    let mut acc = DVector::zeros(states.first().map_or(0, |s| s.len()));
    for s in states {
        acc += s;
    }
    acc / states.len().max(1) as f64
}

/// Largest pairwise distance between agent states.
pub fn disagreement(states: &[DVector<f64>]) -> f64 {
    let mut worst = 0.0_f64;
    for (i, a) in states.iter().enumerate() {
        for b in &states[i + 1..] {
            worst = worst.max((a - b).norm());
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least-squares line fit; `None` with fewer than two points.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Some(LinearFit {
        slope,
        intercept,
        r2,
    })
}
