use serde::{Deserialize, Serialize};

use crate::error::{Result, SrlError};

/// Mean return as a function of action-sequence length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreCurve {
    pub asl_grid: Vec<usize>,
    pub mean_returns: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub episodes_per_point: usize,
}

impl ScoreCurve {
    pub fn new(asl_grid: Vec<usize>, mean_returns: Vec<f64>, std_errors: Vec<f64>, episodes_per_point: usize) -> Result<Self> {
        let c = Self {
            asl_grid,
            mean_returns,
            std_errors,
            episodes_per_point,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.asl_grid.len();
        if self.mean_returns.len() != n || self.std_errors.len() != n {
            return Err(SrlError::InvalidArgument("score curve columns differ in length".into()));
        }
        if self.asl_grid.first() == Some(&0) || self.asl_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SrlError::InvalidArgument("ASL grid must be positive and strictly increasing".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.asl_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.asl_grid.is_empty()
    }

    /// Highest mean return on the curve.
    pub fn best(&self) -> f64 {
        self.mean_returns.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Tidy CSV: `asl,mean_return,std_error,episodes`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("asl,mean_return,std_error,episodes\n");
        for i in 0..self.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.asl_grid[i], self.mean_returns[i], self.std_errors[i], self.episodes_per_point
            ));
        }
        out
    }

    /// Pointwise mean and standard error across curves on the same grid
    /// (e.g. independent training seeds).
    pub fn aggregate(curves: &[ScoreCurve]) -> Result<ScoreCurve> {
        let first = curves
            .first()
            .ok_or_else(|| SrlError::InvalidArgument("no curves to aggregate".into()))?;
        if curves.iter().any(|c| c.asl_grid != first.asl_grid) {
            return Err(SrlError::InvalidArgument("curves use different ASL grids".into()));
        }
        let n = curves.len() as f64;
        let mut means = Vec::with_capacity(first.len());
        let mut errs = Vec::with_capacity(first.len());
        for i in 0..first.len() {
            let xs: Vec<f64> = curves.iter().map(|c| c.mean_returns[i]).collect();
            let (m, se) = mean_and_se(&xs);
            means.push(m);
            errs.push(if n > 1.0 { se } else { first.std_errors[i] });
        }
        ScoreCurve::new(first.asl_grid.clone(), means, errs, first.episodes_per_point)
    }
}

/// Sample mean and standard error of the mean (zero for a single value).
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Horizontal axis for the area under the curve.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FasAxis {
    /// Action-sequence length, as plotted.
    #[default]
    Asl,
    /// Decision frequency `1 / ASL`.
    Frequency,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FasReport {
    pub fas: f64,
    pub min_score: f64,
    pub max_score: f64,
    pub axis: FasAxis,
    pub curve: ScoreCurve,
}

/// Frequency-averaged score on the ASL axis.
pub fn fas(curve: &ScoreCurve, min_score: f64, max_score: f64) -> Result<FasReport> {
    fas_with_axis(curve, min_score, max_score, FasAxis::Asl)
}

/// Trapezoid area under `clamp((y - min) / (max - min), 0, 1)` divided by
/// the span of the axis.
pub fn fas_with_axis(curve: &ScoreCurve, min_score: f64, max_score: f64, axis: FasAxis) -> Result<FasReport> {
    curve.validate()?;
    if curve.len() < 2 {
        return Err(SrlError::InvalidArgument("FAS needs at least two grid points".into()));
    }
    if !(min_score.is_finite() && max_score.is_finite() && min_score < max_score) {
        return Err(SrlError::InvalidArgument(format!(
            "FAS anchors must be finite with min < max, got [{min_score}, {max_score}]"
        )));
    }
    let mut pts: Vec<(f64, f64)> = curve
        .asl_grid
        .iter()
        .zip(&curve.mean_returns)
        .map(|(&k, &y)| {
            let x = match axis {
                FasAxis::Asl => k as f64,
                FasAxis::Frequency => 1.0 / k as f64,
            };
            (x, ((y - min_score) / (max_score - min_score)).clamp(0.0, 1.0))
        })
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let area: f64 = pts.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum();
    let span = pts.last().unwrap().0 - pts[0].0;
    Ok(FasReport {
        fas: area / span,
        min_score,
        max_score,
        axis,
        curve: curve.clone(),
    })
}

/// Pearson product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(SrlError::InvalidArgument(format!("pearson: lengths {} and {} differ", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(SrlError::InvalidArgument("pearson needs at least three pairs".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(SrlError::ZeroVariance("pearson x"));
    }
    if syy == 0.0 {
        return Err(SrlError::ZeroVariance("pearson y"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}
