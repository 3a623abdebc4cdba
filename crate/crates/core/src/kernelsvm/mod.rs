//! Soft-margin SVM dual solved by SMO over a precomputed Gram matrix, and a
//! question-pair classifier built on it (tree kernel or linear kernel over
//! lexical feature vectors).

mod pair;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusError;
use crate::treekernel::{GramMatrix, KernelError};

pub use pair::{label_corpus, label_dataset, LabelReport, PairKernel, PairSvm, MODEL_FORMAT_VERSION};

#[derive(Debug, Error)]
pub enum SvmError {
    #[error("degenerate labels: both classes are required")]
    DegenerateLabels,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid label {0}: must be +1 or -1")]
    InvalidLabel(f64),
    #[error("invalid svm config: {0}")]
    Config(String),
    #[error("pair has no label")]
    Unlabeled,
    #[error("dataset split must be `unlabeled`, got `{0}`")]
    NotUnlabeled(crate::corpus::Split),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("model file: {0}")]
    Format(String),
}

pub type Result<T, E = SvmError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmTrainConfig {
    #[serde(rename = "C")]
    pub c: f64,
    pub tol: f64,
    pub max_passes: usize,
    /// Hard cap on full sweeps over the training set.
    pub max_sweeps: usize,
    pub seed: u64,
}

impl Default for SvmTrainConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            tol: 1e-3,
            max_passes: 10,
            max_sweeps: 10_000,
            seed: 0,
        }
    }
}

impl SvmTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(SvmError::Config(format!("C must be positive, got {}", self.c)));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(SvmError::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_passes == 0 || self.max_sweeps == 0 {
            return Err(SvmError::Config("max_passes and max_sweeps must be positive".into()));
        }
        Ok(())
    }
}

/// Dual solution; `f(x) = Σ α_i y_i K(x_i, x) + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub alphas: Vec<f64>,
    pub bias: f64,
    pub labels: Vec<f64>,
    pub support_indices: Vec<usize>,
    pub c: f64,
}

impl SvmModel {
    /// `α_i y_i` for each support index, aligned with `support_indices`.
    pub fn support_coefficients(&self) -> Vec<f64> {
        self.support_indices
            .iter()
            .map(|&i| self.alphas[i] * self.labels[i])
            .collect()
    }

    /// Largest KKT violation of the training points under `gram`.
    pub fn kkt_violation(&self, gram: &GramMatrix) -> f64 {
        let n = self.alphas.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let f: f64 = self
                .support_indices
                .iter()
                .map(|&j| self.alphas[j] * self.labels[j] * gram.get(i, j))
                .sum::<f64>()
                + self.bias;
            let margin = self.labels[i] * f;
            let a = self.alphas[i];
            let v = if a <= 0.0 {
                (1.0 - margin).max(0.0)
            } else if a >= self.c {
                (margin - 1.0).max(0.0)
            } else {
                (margin - 1.0).abs()
            };
            worst = worst.max(v);
        }
        worst
    }

    /// `|Σ α_i y_i|`.
    pub fn equality_residual(&self) -> f64 {
        self.alphas
            .iter()
            .zip(&self.labels)
            .map(|(a, y)| a * y)
            .sum::<f64>()
            .abs()
    }

    /// Dual objective `Σ α − ½ Σ α_i α_j y_i y_j K_ij`.
    pub fn dual_objective(&self, gram: &GramMatrix) -> f64 {
        dual_objective(&self.alphas, &self.labels, gram)
    }
}

pub fn dual_objective(alphas: &[f64], labels: &[f64], gram: &GramMatrix) -> f64 {
    let mut quad = 0.0;
    for i in 0..alphas.len() {
        if alphas[i] == 0.0 {
            continue;
        }
        for j in 0..alphas.len() {
            quad += alphas[i] * alphas[j] * labels[i] * labels[j] * gram.get(i, j);
        }
    }
    alphas.iter().sum::<f64>() - 0.5 * quad
}

/// `Σ_s α_s y_s K_s + b` with `kernel_row` aligned to `support_indices`.
pub fn decision_value(model: &SvmModel, kernel_row: &[f64]) -> Result<f64> {
    if kernel_row.len() != model.support_indices.len() {
        return Err(SvmError::DimensionMismatch {
            expected: model.support_indices.len(),
            got: kernel_row.len(),
        });
    }
    Ok(model
        .support_indices
        .iter()
        .zip(kernel_row)
        .map(|(&i, k)| model.alphas[i] * model.labels[i] * k)
        .sum::<f64>()
        + model.bias)
}

/// 1 when the decision value is non-negative.
pub fn predict_label(model: &SvmModel, kernel_row: &[f64]) -> Result<bool> {
    Ok(decision_value(model, kernel_row)? >= 0.0)
}

/// Dual objective after every accepted update.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SmoTrace {
    pub objective: Vec<f64>,
    pub sweeps: usize,
}

pub fn train_smo(gram: &GramMatrix, labels: &[f64], cfg: &SvmTrainConfig) -> Result<SvmModel> {
    Smo::new(gram, labels, cfg, false)?.run().map(|(m, _)| m)
}

pub fn train_smo_traced(
    gram: &GramMatrix,
    labels: &[f64],
    cfg: &SvmTrainConfig,
) -> Result<(SvmModel, SmoTrace)> {
    Smo::new(gram, labels, cfg, true)?.run()
}

struct Smo<'a> {
    k: &'a GramMatrix,
    y: &'a [f64],
    c: f64,
    tol: f64,
    cfg: SvmTrainConfig,
    alpha: Vec<f64>,
    /// `g_i = Σ_j α_j y_j K_ij`, so `f(x_i) = g_i + b`.
    g: Vec<f64>,
    b: f64,
    rng: ChaCha8Rng,
    trace: Option<SmoTrace>,
}

const ALPHA_EPS: f64 = 1e-12;

impl<'a> Smo<'a> {
    fn new(k: &'a GramMatrix, y: &'a [f64], cfg: &SvmTrainConfig, trace: bool) -> Result<Self> {
        cfg.validate()?;
        if k.n() != y.len() {
            return Err(SvmError::DimensionMismatch {
                expected: k.n(),
                got: y.len(),
            });
        }
        if let Some(&bad) = y.iter().find(|&&v| v != 1.0 && v != -1.0) {
            return Err(SvmError::InvalidLabel(bad));
        }
        if !(y.contains(&1.0) && y.contains(&-1.0)) {
            return Err(SvmError::DegenerateLabels);
        }
        let n = y.len();
        Ok(Self {
            k,
            y,
            c: cfg.c,
            tol: cfg.tol,
            cfg: *cfg,
            alpha: vec![0.0; n],
            g: vec![0.0; n],
            b: 0.0,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            trace: trace.then(|| SmoTrace {
                objective: vec![0.0],
                sweeps: 0,
            }),
        })
    }

    fn error(&self, i: usize) -> f64 {
        self.g[i] + self.b - self.y[i]
    }

    fn violates(&self, i: usize) -> bool {
        let r = self.y[i] * self.error(i);
        (r < -self.tol && self.alpha[i] < self.c) || (r > self.tol && self.alpha[i] > 0.0)
    }

    fn run(mut self) -> Result<(SvmModel, SmoTrace)> {
        let n = self.y.len();
        let mut idle = 0;
        let mut sweeps = 0;
        while idle < self.cfg.max_passes && sweeps < self.cfg.max_sweeps {
            sweeps += 1;
            let mut violators = 0;
            let mut changed = 0;
            for i in 0..n {
                if !self.violates(i) {
                    continue;
                }
                violators += 1;
                let j = self.rng.gen_range(0..n - 1);
                let j = if j >= i { j + 1 } else { j };
                if self.take_step(i, j) {
                    changed += 1;
                    continue;
                }
                let offset = self.rng.gen_range(0..n);
                for t in 0..n {
                    let j = (offset + t) % n;
                    if j != i && self.take_step(i, j) {
                        changed += 1;
                        break;
                    }
                }
            }
            if violators == 0 {
                break;
            }
            if changed == 0 {
                // Remaining violations that no pair step can reduce come from
                // the bias alone; move it to the centre of its feasible range.
                self.refit_bias();
                idle += 1;
            } else {
                idle = 0;
            }
        }
        let support_indices = (0..n).filter(|&i| self.alpha[i] > 0.0).collect();
        let mut trace = self.trace.take().unwrap_or_default();
        trace.sweeps = sweeps;
        Ok((
            SvmModel {
                alphas: self.alpha,
                bias: self.b,
                labels: self.y.to_vec(),
                support_indices,
                c: self.c,
            },
            trace,
        ))
    }

    fn refit_bias(&mut self) {
        let n = self.y.len();
        let free: Vec<usize> = (0..n)
            .filter(|&i| self.alpha[i] > 0.0 && self.alpha[i] < self.c)
            .collect();
        if !free.is_empty() {
            self.b = free.iter().map(|&i| self.y[i] - self.g[i]).sum::<f64>() / free.len() as f64;
            return;
        }
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in 0..n {
            let bound = self.y[i] - self.g[i];
            // α = 0 needs y f ≥ 1, α = C needs y f ≤ 1
            if (self.alpha[i] == 0.0) == (self.y[i] > 0.0) {
                lo = lo.max(bound);
            } else {
                hi = hi.min(bound);
            }
        }
        self.b = match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (true, false) => lo,
            (false, true) => hi,
            (false, false) => self.b,
        };
    }

    /// Change of the dual objective when `α_i += di`, `α_j += dj`.
    fn delta_objective(&self, i: usize, j: usize, di: f64, dj: f64) -> f64 {
        let (yi, yj) = (self.y[i], self.y[j]);
        di + dj
            - (di * yi * self.g[i] + dj * yj * self.g[j])
            - 0.5
                * (di * di * self.k.get(i, i)
                    + dj * dj * self.k.get(j, j)
                    + 2.0 * di * dj * yi * yj * self.k.get(i, j))
    }

    fn take_step(&mut self, i: usize, j: usize) -> bool {
        let (yi, yj) = (self.y[i], self.y[j]);
        let (ai, aj) = (self.alpha[i], self.alpha[j]);
        let s = yi * yj;
        let (lo, hi) = if yi != yj {
            ((aj - ai).max(0.0), (self.c + aj - ai).min(self.c))
        } else {
            ((ai + aj - self.c).max(0.0), (ai + aj).min(self.c))
        };
        if hi - lo < ALPHA_EPS {
            return false;
        }
        let (kii, kjj, kij) = (self.k.get(i, i), self.k.get(j, j), self.k.get(i, j));
        let (ei, ej) = (self.error(i), self.error(j));
        let eta = kii + kjj - 2.0 * kij;
        let mut aj_new = if eta > 0.0 {
            (aj + yj * (ei - ej) / eta).clamp(lo, hi)
        } else {
            let w_lo = self.delta_objective(i, j, -s * (lo - aj), lo - aj);
            let w_hi = self.delta_objective(i, j, -s * (hi - aj), hi - aj);
            if w_lo > w_hi + 1e-12 {
                lo
            } else if w_hi > w_lo + 1e-12 {
                hi
            } else {
                aj
            }
        };
        if aj_new < ALPHA_EPS {
            aj_new = 0.0;
        } else if aj_new > self.c - ALPHA_EPS {
            aj_new = self.c;
        }
        if (aj_new - aj).abs() < 1e-10 * (aj_new + aj + 1e-10) {
            return false;
        }
        let mut ai_new = ai + s * (aj - aj_new);
        if ai_new < ALPHA_EPS {
            ai_new = 0.0;
        } else if ai_new > self.c - ALPHA_EPS {
            ai_new = self.c;
        }
        let (di, dj) = (ai_new - ai, aj_new - aj);

        let b1 = self.b - ei - yi * di * kii - yj * dj * kij;
        let b2 = self.b - ej - yi * di * kij - yj * dj * kjj;
        self.b = if ai_new > 0.0 && ai_new < self.c {
            b1
        } else if aj_new > 0.0 && aj_new < self.c {
            b2
        } else {
            0.5 * (b1 + b2)
        };
        self.alpha[i] = ai_new;
        self.alpha[j] = aj_new;
        let (ci, cj) = (yi * di, yj * dj);
        let (ri, rj) = (self.k.row(i), self.k.row(j));
        for (t, g) in self.g.iter_mut().enumerate() {
            *g += ci * ri[t] + cj * rj[t];
        }
        if let Some(trace) = self.trace.as_mut() {
            let quad: f64 = (0..self.alpha.len())
                .map(|t| self.alpha[t] * self.y[t] * self.g[t])
                .sum();
            let w = self.alpha.iter().sum::<f64>() - 0.5 * quad;
            trace.objective.push(w);
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop, prop_assert, proptest, ProptestConfig};

    fn toy() -> (GramMatrix, Vec<f64>) {
        let k = GramMatrix::from_rows(vec![vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        (k, vec![1.0, -1.0])
    }

    #[test]
    fn analytic_two_point_solution() {
        let (k, y) = toy();
        let cfg = SvmTrainConfig { c: 10.0, ..Default::default() };
        let m = train_smo(&k, &y, &cfg).unwrap();
        assert!((m.alphas[0] - 0.5).abs() < 1e-6 && (m.alphas[1] - 0.5).abs() < 1e-6, "{m:?}");
        assert!(m.bias.abs() < 1e-6);
        assert!((decision_value(&m, &[1.0, -1.0]).unwrap() - 1.0).abs() < 1e-6);
        assert!((decision_value(&m, &[-1.0, 1.0]).unwrap() + 1.0).abs() < 1e-6);
    }

    #[test]
    fn decision_rules() {
        let m = SvmModel {
            alphas: vec![],
            bias: -0.2,
            labels: vec![],
            support_indices: vec![],
            c: 1.0,
        };
        assert_eq!(decision_value(&m, &[]).unwrap(), -0.2);
        assert!(!predict_label(&m, &[]).unwrap());
        let m = SvmModel { bias: 0.0, ..m };
        assert!(predict_label(&m, &[]).unwrap());
        assert!(matches!(decision_value(&m, &[1.0]), Err(SvmError::DimensionMismatch { .. })));
        let (k, y) = toy();
        let m = train_smo(&k, &y, &SvmTrainConfig { c: 10.0, ..Default::default() }).unwrap();
        let row = [0.3, -0.7];
        let neg = [-0.3, 0.7];
        let (a, b) = (decision_value(&m, &row).unwrap(), decision_value(&m, &neg).unwrap());
        assert!((a + b).abs() < 1e-6);
    }

    #[test]
    fn degenerate_and_mismatched_inputs() {
        let (k, _) = toy();
        let cfg = SvmTrainConfig::default();
        assert!(matches!(train_smo(&k, &[1.0, 1.0], &cfg), Err(SvmError::DegenerateLabels)));
        assert!(matches!(train_smo(&k, &[1.0], &cfg), Err(SvmError::DimensionMismatch { .. })));
        assert!(matches!(train_smo(&k, &[1.0, 0.0], &cfg), Err(SvmError::InvalidLabel(_))));
        assert!(train_smo(&k, &[1.0, -1.0], &SvmTrainConfig { c: 0.0, ..cfg }).is_err());
    }

    pub(crate) fn separable(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        while xs.len() < n {
            let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let m = x[0] + 0.5 * x[1] - 0.1;
            if m.abs() < 0.1 {
                continue;
            }
            ys.push(if m > 0.0 { 1.0 } else { -1.0 });
            xs.push(x);
        }
        (xs, ys)
    }

    #[test]
    fn separable_points_fit_exactly() {
        for n in [20, 40] {
            let (xs, ys) = separable(n, 5);
            let k = GramMatrix::linear(&xs);
            let cfg = SvmTrainConfig { c: 100.0, seed: 1, ..Default::default() };
            let (m, trace) = train_smo_traced(&k, &ys, &cfg).unwrap();
            for i in 0..n {
                let row: Vec<f64> = m.support_indices.iter().map(|&s| k.get(i, s)).collect();
                assert_eq!(predict_label(&m, &row).unwrap(), ys[i] > 0.0);
            }
            assert!(m.kkt_violation(&k) <= cfg.tol);
            assert!(m.equality_residual() <= 1e-6);
            assert!(trace.objective.windows(2).all(|w| w[1] >= w[0] - 1e-12));
            let last = *trace.objective.last().unwrap();
            assert!((last - m.dual_objective(&k)).abs() < 1e-8);
        }
    }

    #[test]
    fn same_seed_same_alphas() {
        let (xs, ys) = separable(30, 8);
        let k = GramMatrix::linear(&xs);
        let cfg = SvmTrainConfig { seed: 4, ..Default::default() };
        let a = train_smo(&k, &ys, &cfg).unwrap();
        let b = train_smo(&k, &ys, &cfg).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn dual_feasibility_on_noisy_data(
            seed in 0u64..1000,
            n in 4usize..40,
            c in prop::sample::select(vec![0.1, 1.0, 10.0]),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            let mut ys: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
            ys[0] = 1.0;
            ys[1] = -1.0;
            let k = GramMatrix::linear(&xs);
            let cfg = SvmTrainConfig { c, seed, ..Default::default() };
            let (m, trace) = train_smo_traced(&k, &ys, &cfg).unwrap();
            prop_assert!(m.alphas.iter().all(|&a| (0.0..=c).contains(&a)));
            prop_assert!(m.equality_residual() <= 1e-6);
            prop_assert!(m.kkt_violation(&k) <= cfg.tol, "kkt {}", m.kkt_violation(&k));
            prop_assert!(trace.objective.windows(2).all(|w| w[1] >= w[0] - 1e-10));
        }
    }
}
