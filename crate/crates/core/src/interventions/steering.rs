//! Latent steering vectors, a logistic latent classifier, and accuracy-vs-alpha curves.

use ndarray::{Array1, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::sae::LatentCodes;
use crate::Authenticity;

pub const DEFAULT_ALPHAS: [f64; 9] = [-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Construction {
    ClassMeanDiff,
    TopSelectivity,
}

impl Construction {
    pub fn as_str(self) -> &'static str {
        match self {
            Construction::ClassMeanDiff => "class_mean_diff",
            Construction::TopSelectivity => "top_selectivity",
        }
    }
}

/// The five (construction, top_k) settings behind the steering curves.
pub const CURVE_SETTINGS: [(Construction, usize); 5] = [
    (Construction::ClassMeanDiff, 16),
    (Construction::ClassMeanDiff, 64),
    (Construction::ClassMeanDiff, 256),
    (Construction::TopSelectivity, 16),
    (Construction::TopSelectivity, 64),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringVector {
    /// Unit norm.
    pub v: Vec<f64>,
    pub construction: Construction,
    pub top_k: usize,
}

impl SteeringVector {
    pub fn id(&self) -> String {
        format!("{}_k{}", self.construction.as_str(), self.top_k)
    }
}

fn class_means(codes: &LatentCodes, labels: &[Authenticity]) -> Result<(Array1<f64>, Array1<f64>)> {
    let m = codes.matrix();
    if labels.len() != m.nrows() {
        return Err(Error::Argument(format!(
            "{} labels for {} code rows",
            labels.len(),
            m.nrows()
        )));
    }
    let fake: Vec<usize> = (0..labels.len()).filter(|i| labels[*i].is_fake()).collect();
    let real: Vec<usize> = (0..labels.len())
        .filter(|i| !labels[*i].is_fake())
        .collect();
    if fake.is_empty() || real.is_empty() {
        return Err(Error::Argument(
            "both real and fake rows are required".into(),
        ));
    }
    let mf = m
        .select(Axis(0), &fake)
        .mean_axis(Axis(0))
        .expect("non-empty");
    let mr = m
        .select(Axis(0), &real)
        .mean_axis(Axis(0))
        .expect("non-empty");
    Ok((mf, mr))
}

/// Indices of the `k` largest |score|, ties broken by lower index.
fn top_indices(score: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..score.len()).collect();
    idx.sort_by(|a, b| score[*b].abs().total_cmp(&score[*a].abs()).then(a.cmp(b)));
    idx.truncate(k);
    idx
}

/// Builds a unit steering direction in latent space pointing from real towards fake.
///
/// `class_mean_diff` keeps the `top_k` coordinates ranked by |rho| when rho is
/// given and by |difference| otherwise. `top_selectivity` uses rho on its
/// `top_k` coordinates, signed so it agrees with the class difference.
pub fn steering_vector(
    codes: &LatentCodes,
    labels: &[Authenticity],
    rho: Option<&[f64]>,
    construction: Construction,
    top_k: usize,
) -> Result<SteeringVector> {
    let d = codes.latent_width();
    if top_k == 0 || top_k > d {
        return Err(Error::Argument(format!(
            "top_k must lie in 1..={d}, got {top_k}"
        )));
    }
    if let Some(r) = rho {
        if r.len() != d {
            return Err(Error::Argument(format!(
                "rho has length {} but codes have width {d}",
                r.len()
            )));
        }
    }
    let (mf, mr) = class_means(codes, labels)?;
    let diff = &mf - &mr;
    let mut v = Array1::zeros(d);
    match construction {
        Construction::ClassMeanDiff => {
            let rank: Vec<f64> = match rho {
                Some(r) => r.to_vec(),
                None => diff.to_vec(),
            };
            for j in top_indices(&rank, top_k) {
                v[j] = diff[j];
            }
        }
        Construction::TopSelectivity => {
            let r = rho.ok_or_else(|| Error::Argument("top_selectivity needs rho".into()))?;
            for j in top_indices(r, top_k) {
                v[j] = r[j];
            }
            if v.dot(&diff) < 0.0 {
                v.mapv_inplace(|x: f64| -x);
            }
        }
    }
    let norm = v.dot(&v).sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::Degenerate(format!(
            "{} steering direction with top_k {top_k} is zero",
            construction.as_str()
        )));
    }
    Ok(SteeringVector {
        v: (v / norm).to_vec(),
        construction,
        top_k,
    })
}

/// h + alpha * v.
pub fn apply_steering(
    h: ArrayView1<'_, f64>,
    v: &SteeringVector,
    alpha: f64,
) -> Result<Array1<f64>> {
    if h.len() != v.v.len() {
        return Err(Error::Argument(format!(
            "code width {} does not match steering width {}",
            h.len(),
            v.v.len()
        )));
    }
    Ok(h.iter().zip(&v.v).map(|(a, b)| a + alpha * b).collect())
}

/// Logistic regression on standardized latent codes; positive class is fake.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticHead {
    pub mean: Vec<f64>,
    /// Per-feature standard deviation, 1 where a feature is constant.
    pub scale: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LogisticHead {
    pub const STEPS: usize = 200;
    pub const LEARNING_RATE: f64 = 0.1;

    /// Full-batch gradient descent from zero weights.
    pub fn fit(codes: &LatentCodes, labels: &[Authenticity]) -> Result<Self> {
        class_means(codes, labels)?;
        let m = codes.matrix();
        let (n, d) = m.dim();
        let mean = m.mean_axis(Axis(0)).expect("non-empty");
        let scale = m
            .std_axis(Axis(0), 0.0)
            .mapv(|s| if s > 0.0 { s } else { 1.0 });
        let z = (m - &mean) / &scale;
        let y: Array1<f64> = labels
            .iter()
            .map(|l| if l.is_fake() { 1.0 } else { 0.0 })
            .collect();
        let mut w = Array1::<f64>::zeros(d);
        let mut b = 0.0;
        for _ in 0..Self::STEPS {
            let logits = z.dot(&w) + b;
            let err: Array1<f64> = logits
                .iter()
                .zip(&y)
                .map(|(s, t)| sigmoid(*s) - t)
                .collect();
            let gw = z.t().dot(&err) / n as f64;
            let gb = err.sum() / n as f64;
            w.scaled_add(-Self::LEARNING_RATE, &gw);
            b -= Self::LEARNING_RATE * gb;
        }
        Ok(LogisticHead {
            mean: mean.to_vec(),
            scale: scale.to_vec(),
            weights: w.to_vec(),
            bias: b,
        })
    }

    pub fn decision(&self, h: ArrayView1<'_, f64>) -> f64 {
        h.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .zip(&self.weights)
            .map(|(((x, m), s), w)| (x - m) / s * w)
            .sum::<f64>()
            + self.bias
    }

    pub fn predict(&self, h: ArrayView1<'_, f64>) -> Authenticity {
        if self.decision(h) >= 0.0 {
            Authenticity::Fake
        } else {
            Authenticity::Real
        }
    }

    pub fn accuracy(&self, codes: &LatentCodes, labels: &[Authenticity]) -> Result<f64> {
        let m = codes.matrix();
        if m.nrows() == 0 || m.nrows() != labels.len() {
            return Err(Error::Argument(
                "accuracy needs one label per non-empty code row".into(),
            ));
        }
        let hits = m
            .rows()
            .into_iter()
            .zip(labels)
            .filter(|(h, l)| self.predict(*h) == **l)
            .count();
        Ok(hits as f64 / labels.len() as f64)
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringCurve {
    pub vector_id: String,
    pub construction: Construction,
    pub top_k: usize,
    pub alphas: Vec<f64>,
    /// Same length as `alphas`, each in [0, 1].
    pub accuracy: Vec<f64>,
}

/// Accuracy of `head` when fake-class codes are shifted by alpha * v.
pub fn steering_curve(
    head: &LogisticHead,
    codes: &LatentCodes,
    labels: &[Authenticity],
    v: &SteeringVector,
    alphas: &[f64],
    exec: Execution,
) -> Result<SteeringCurve> {
    let m = codes.matrix();
    if m.nrows() == 0 {
        return Err(Error::Argument(
            "steering curve needs a non-empty evaluation set".into(),
        ));
    }
    if labels.len() != m.nrows() {
        return Err(Error::Argument("one label per code row is required".into()));
    }
    if v.v.len() != m.ncols() {
        return Err(Error::Argument(
            "steering width does not match codes".into(),
        ));
    }
    let accuracy = exec.map(alphas, |alpha| -> Result<f64> {
        let mut hits = 0usize;
        for (h, l) in m.rows().into_iter().zip(labels) {
            let pred = if l.is_fake() {
                head.predict(apply_steering(h, v, *alpha)?.view())
            } else {
                head.predict(h)
            };
            hits += usize::from(pred == *l);
        }
        Ok(hits as f64 / labels.len() as f64)
    });
    Ok(SteeringCurve {
        vector_id: v.id(),
        construction: v.construction,
        top_k: v.top_k,
        alphas: alphas.to_vec(),
        accuracy: accuracy.into_iter().collect::<Result<_>>()?,
    })
}
