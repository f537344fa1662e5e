//! Gaussian naive Bayes over nine difficulty levels, with temperature
//! calibration and confidence-based filtering.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const LEVELS: usize = 9;

/// Difficulty level in `1..=9`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Level(u8);

impl Level {
    pub fn new(v: u8) -> Result<Level, ClassifierError> {
        if (1..=LEVELS as u8).contains(&v) {
            Ok(Level(v))
        } else {
            Err(ClassifierError::InvalidLevel(v))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn all() -> impl Iterator<Item = Level> {
        (1..=LEVELS as u8).map(Level)
    }
}

impl TryFrom<u8> for Level {
    type Error = ClassifierError;

    fn try_from(v: u8) -> Result<Level, ClassifierError> {
        Level::new(v)
    }
}

impl From<Level> for u8 {
    fn from(l: Level) -> u8 {
        l.0
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ClassifierError {
    #[error("level {0} outside 1..=9")]
    InvalidLevel(u8),
    #[error("no training samples")]
    Empty,
    #[error("{features} feature vectors but {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("expected {expected} features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("level {level} has {count} sample(s); at least 2 are needed")]
    UnderSupportedClass { level: Level, count: usize },
    #[error("feature {index} is not finite")]
    NonFinite { index: usize },
    #[error("drop fraction {0} outside [0, 1)")]
    InvalidFraction(f64),
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

/// Lower bound on every class-conditional variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VarianceFloor {
    /// This multiple of the mean per-feature variance of the training set.
    Relative(f64),
    Absolute(f64),
}

impl Default for VarianceFloor {
    fn default() -> VarianceFloor {
        VarianceFloor::Relative(1e-6)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnbModel {
    /// Class priors, level 1 first. Levels absent from training have prior 0.
    pub priors: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    pub floor: f64,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyPosterior {
    pub probs: [f64; LEVELS],
    pub label: Level,
    pub confidence: f64,
}

fn ml_mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Maximum-likelihood class means and variances, empirical priors, variance
/// floor applied, temperature 1.
pub fn fit<F: AsRef<[f64]>>(features: &[F], labels: &[Level], floor: VarianceFloor) -> Result<GnbModel, ClassifierError> {
    if features.len() != labels.len() {
        return Err(ClassifierError::LengthMismatch { features: features.len(), labels: labels.len() });
    }
    if features.is_empty() {
        return Err(ClassifierError::Empty);
    }
    let dim = features[0].as_ref().len();
    for f in features {
        let f = f.as_ref();
        if f.len() != dim {
            return Err(ClassifierError::DimensionMismatch { expected: dim, found: f.len() });
        }
        if let Some(index) = f.iter().position(|x| !x.is_finite()) {
            return Err(ClassifierError::NonFinite { index });
        }
    }
    let mut counts = [0usize; LEVELS];
    for l in labels {
        counts[l.index()] += 1;
    }
    for level in Level::all() {
        let count = counts[level.index()];
        if count == 1 {
            return Err(ClassifierError::UnderSupportedClass { level, count });
        }
    }

    let floor = match floor {
        VarianceFloor::Absolute(v) => v,
        VarianceFloor::Relative(scale) => {
            let mean_var = (0..dim)
                .map(|i| ml_mean_var(&features.iter().map(|f| f.as_ref()[i]).collect::<Vec<_>>()).1)
                .sum::<f64>()
                / dim.max(1) as f64;
            if mean_var > 0.0 {
                scale * mean_var
            } else {
                scale
            }
        }
    };
    if !(floor > 0.0 && floor.is_finite()) {
        return Err(ClassifierError::InvalidModel(format!("variance floor {floor}")));
    }

    let n = labels.len() as f64;
    let mut model = GnbModel {
        priors: counts.iter().map(|&c| c as f64 / n).collect(),
        means: vec![vec![0.0; dim]; LEVELS],
        variances: vec![vec![floor; dim]; LEVELS],
        floor,
        temperature: 1.0,
    };
    for level in Level::all() {
        let k = level.index();
        if counts[k] == 0 {
            continue;
        }
        for i in 0..dim {
            let xs: Vec<f64> = features.iter().zip(labels).filter(|(_, l)| **l == level).map(|(f, _)| f.as_ref()[i]).collect();
            let (mean, var) = ml_mean_var(&xs);
            model.means[k][i] = mean;
            model.variances[k][i] = var.max(floor);
        }
    }
    Ok(model)
}

impl GnbModel {
    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    /// Checks shapes, non-negative priors and the variance floor.
    pub fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |m: &str| Err(ClassifierError::InvalidModel(m.into()));
        if self.priors.len() != LEVELS || self.means.len() != LEVELS || self.variances.len() != LEVELS {
            return bad("expected 9 classes");
        }
        let dim = self.dim();
        if self.means.iter().chain(&self.variances).any(|r| r.len() != dim) {
            return bad("ragged class parameters");
        }
        if self.priors.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || self.priors.iter().all(|&p| p == 0.0) {
            return bad("priors must be non-negative and not all zero");
        }
        if self.variances.iter().flatten().any(|&v| !(v >= self.floor && v > 0.0 && v.is_finite())) {
            return bad("variance below floor");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be positive");
        }
        Ok(())
    }

    /// Unscaled log joint `ln prior + Σ ln N(f_i; μ, σ²)` per level; absent
    /// levels are `-inf`.
    pub fn log_joint(&self, f: &[f64]) -> Result<[f64; LEVELS], ClassifierError> {
        if f.len() != self.dim() {
            return Err(ClassifierError::DimensionMismatch { expected: self.dim(), found: f.len() });
        }
        if let Some(index) = f.iter().position(|x| !x.is_finite()) {
            return Err(ClassifierError::NonFinite { index });
        }
        let mut out = [f64::NEG_INFINITY; LEVELS];
        for (k, o) in out.iter_mut().enumerate() {
            if self.priors[k] <= 0.0 {
                continue;
            }
            let mut lj = self.priors[k].ln();
            for (i, &x) in f.iter().enumerate() {
                let var = self.variances[k][i];
                let d = x - self.means[k][i];
                lj -= 0.5 * ((2.0 * std::f64::consts::PI * var).ln() + d * d / var);
            }
            *o = lj;
        }
        Ok(out)
    }

    pub fn posterior(&self, f: &[f64]) -> Result<DifficultyPosterior, ClassifierError> {
        Ok(posterior_from_log_joint(&self.log_joint(f)?, self.temperature))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<GnbModel, ClassifierError> {
        let m: GnbModel = serde_json::from_str(text).map_err(|e| ClassifierError::InvalidModel(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }
}

/// Softmax of `log_joint / temperature`, computed with the max subtracted.
pub fn posterior_from_log_joint(lj: &[f64; LEVELS], temperature: f64) -> DifficultyPosterior {
    let scaled = lj.map(|x| x / temperature);
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps = scaled.map(|x| if x == f64::NEG_INFINITY { 0.0 } else { (x - max).exp() });
    let z: f64 = exps.iter().sum();
    let probs = exps.map(|e| e / z);
    let mut best = 0;
    for k in 1..LEVELS {
        if lj[k] > lj[best] {
            best = k;
        }
    }
    DifficultyPosterior { probs, label: Level(best as u8 + 1), confidence: probs[best] }
}

/// Mean negative log-likelihood of the true labels at a given temperature.
fn nll(log_joints: &[[f64; LEVELS]], labels: &[Level], temperature: f64) -> f64 {
    log_joints
        .iter()
        .zip(labels)
        .map(|(lj, l)| -posterior_from_log_joint(lj, temperature).probs[l.index()].max(1e-300).ln())
        .sum::<f64>()
        / labels.len() as f64
}

pub const TEMPERATURE_RANGE: (f64, f64) = (0.05, 20.0);

/// Sets the temperature that minimizes held-out negative log-likelihood,
/// found by golden-section search over [`TEMPERATURE_RANGE`].
pub fn fit_temperature<F: AsRef<[f64]>>(
    model: &GnbModel,
    features: &[F],
    labels: &[Level],
) -> Result<GnbModel, ClassifierError> {
    if features.len() != labels.len() {
        return Err(ClassifierError::LengthMismatch { features: features.len(), labels: labels.len() });
    }
    if features.is_empty() {
        return Err(ClassifierError::Empty);
    }
    let log_joints: Vec<[f64; LEVELS]> = features.iter().map(|f| model.log_joint(f.as_ref())).collect::<Result<_, _>>()?;
    let objective = |t: f64| nll(&log_joints, labels, t);

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = TEMPERATURE_RANGE;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (objective(c), objective(d));
    while b - a > 1e-6 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = objective(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = objective(d);
        }
    }
    let mut out = model.clone();
    out.temperature = (a + b) / 2.0;
    Ok(out)
}

fn drop_count(n: usize, drop_fraction: f64) -> Result<usize, ClassifierError> {
    if !(0.0..1.0).contains(&drop_fraction) {
        return Err(ClassifierError::InvalidFraction(drop_fraction));
    }
    Ok(((drop_fraction * n as f64) + 1e-9).floor() as usize)
}

/// Drops the `floor(drop_fraction · N)` least confident items. Among equal
/// confidences the later item is dropped first. Returns kept indices in
/// ascending order.
pub fn confidence_filter(confidences: &[f64], drop_fraction: f64) -> Result<Vec<usize>, ClassifierError> {
    let drop = drop_count(confidences.len(), drop_fraction)?;
    let mut order: Vec<usize> = (0..confidences.len()).collect();
    order.sort_by(|&i, &j| confidences[i].total_cmp(&confidences[j]).then(j.cmp(&i)));
    let mut kept: Vec<usize> = order[drop..].to_vec();
    kept.sort_unstable();
    Ok(kept)
}

pub fn confidence_filter_posteriors(
    posteriors: &[DifficultyPosterior],
    drop_fraction: f64,
) -> Result<Vec<usize>, ClassifierError> {
    let conf: Vec<f64> = posteriors.iter().map(|p| p.confidence).collect();
    confidence_filter(&conf, drop_fraction)
}

/// Keeps items whose confidence is at least `min_confidence`.
pub fn threshold_filter(confidences: &[f64], min_confidence: f64) -> Vec<usize> {
    (0..confidences.len()).filter(|&i| confidences[i] >= min_confidence).collect()
}

/// Stand-in labels when no annotated data is available: items are ranked by
/// their mean z-score across features and cut into equal-size bins spread
/// over levels 1 to 9. Uses at most `N / 2` bins so every used level has at
/// least two members.
pub fn synthetic_labels<F: AsRef<[f64]>>(features: &[F]) -> Result<Vec<Level>, ClassifierError> {
    let n = features.len();
    if n < 2 {
        return Err(ClassifierError::Empty);
    }
    let dim = features[0].as_ref().len();
    let mut composite = vec![0.0; n];
    for i in 0..dim {
        let col: Vec<f64> = features.iter().map(|f| f.as_ref()[i]).collect();
        let (mean, var) = ml_mean_var(&col);
        if var <= 0.0 {
            continue;
        }
        let sd = var.sqrt();
        for (c, x) in composite.iter_mut().zip(&col) {
            *c += (x - mean) / sd;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| composite[a].total_cmp(&composite[b]).then(a.cmp(&b)));
    let bins = (n / 2).min(LEVELS);
    let mut labels = vec![Level(1); n];
    for (rank, &i) in order.iter().enumerate() {
        let bin = rank * bins / n;
        let level = if bins == 1 { 1 } else { 1 + (bin * (LEVELS - 1) + (bins - 1) / 2) / (bins - 1) };
        labels[i] = Level(level as u8);
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lv(v: u8) -> Level {
        Level::new(v).unwrap()
    }

    #[test]
    fn two_point_classes() {
        let x = [[0.0], [0.0], [10.0], [10.0]];
        let m = fit(&x, &[lv(1), lv(1), lv(2), lv(2)], VarianceFloor::Absolute(1.0)).unwrap();
        assert_eq!(m.means[0], vec![0.0]);
        assert_eq!(m.means[1], vec![10.0]);
        assert_eq!(m.variances[0], vec![1.0]);
        assert_eq!(m.priors[0], 0.5);
        assert_eq!(m.priors[2], 0.0);
    }

    #[test]
    fn constant_feature_gets_the_floor() {
        let x = [[1.0, 5.0], [2.0, 5.0], [3.0, 5.0], [4.0, 5.0]];
        let m = fit(&x, &[lv(1), lv(1), lv(2), lv(2)], VarianceFloor::default()).unwrap();
        assert_eq!(m.variances[0][1], m.floor);
        assert!(m.floor > 0.0);
        assert_eq!(m.variances[0][0], 0.25);
    }

    #[test]
    fn single_sample_class_is_rejected() {
        let x = [[0.0], [1.0], [2.0]];
        let err = fit(&x, &[lv(1), lv(1), lv(3)], VarianceFloor::default()).unwrap_err();
        assert_eq!(err, ClassifierError::UnderSupportedClass { level: lv(3), count: 1 });
    }

    #[test]
    fn symmetric_classes_split_evenly() {
        let x = [[-1.5], [-0.5], [0.5], [1.5]];
        let m = fit(&x, &[lv(4), lv(4), lv(6), lv(6)], VarianceFloor::default()).unwrap();
        let p = m.posterior(&[0.0]).unwrap();
        assert!((p.probs[3] - 0.5).abs() < 1e-12 && (p.probs[5] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn high_temperature_flattens() {
        let x = [[0.0], [1.0], [9.0], [10.0]];
        let mut m = fit(&x, &[lv(1), lv(1), lv(2), lv(2)], VarianceFloor::default()).unwrap();
        m.temperature = 1e9;
        let p = m.posterior(&[0.0]).unwrap();
        assert!((p.probs[0] - 0.5).abs() < 1e-6);
        assert_eq!(p.label, lv(1));
    }

    #[test]
    fn non_finite_input_errors() {
        let m = fit(&[[0.0], [1.0]], &[lv(1), lv(1)], VarianceFloor::default()).unwrap();
        assert_eq!(m.posterior(&[f64::NAN]), Err(ClassifierError::NonFinite { index: 0 }));
    }

    #[test]
    fn filter_ties_keep_earlier() {
        assert_eq!(confidence_filter(&[0.5; 4], 0.25).unwrap(), vec![0, 1, 2]);
        assert_eq!(confidence_filter(&[0.9, 0.1, 0.5, 0.3], 0.5).unwrap(), vec![0, 2]);
        assert!(confidence_filter(&[0.5], 1.0).is_err());
        assert_eq!(threshold_filter(&[0.9, 0.1, 0.5], 0.5), vec![0, 2]);
    }

    #[test]
    fn json_round_trip() {
        let m = fit(&[[0.0, 1.0], [1.0, 3.0]], &[lv(2), lv(2)], VarianceFloor::default()).unwrap();
        assert_eq!(GnbModel::from_json(&m.to_json()).unwrap(), m);
        assert!(GnbModel::from_json("{}").is_err());
        assert!(serde_json::from_str::<Level>("10").is_err());
    }

    #[test]
    fn synthetic_labels_cover_levels() {
        let x: Vec<[f64; 2]> = (0..36).map(|i| [i as f64, (i * 2) as f64]).collect();
        let labels = synthetic_labels(&x).unwrap();
        assert_eq!(labels[0], lv(1));
        assert_eq!(labels[35], lv(9));
        for l in Level::all() {
            assert_eq!(labels.iter().filter(|&&x| x == l).count(), 4);
        }
        let few = synthetic_labels(&x[..6]).unwrap();
        assert_eq!(few.iter().map(|l| l.get()).collect::<Vec<_>>(), vec![1, 1, 5, 5, 9, 9]);
    }
}
