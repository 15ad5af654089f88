//! Disjoint-arm LinUCB with ridge statistics per arm.
//!
//! Each arm `k` keeps `A_k = I + sum(x x^T)` and `b_k = sum(r x)` over the
//! observations it has absorbed. Scoring an observation uses the
//! l2-normalized ridge solution `theta = A^-1 b / ||A^-1 b||` for the mean
//! `mu = theta . x` and the exploration width `sigma = alpha *
//! sqrt(x^T A^-1 x)`. The inverse is maintained incrementally by
//! Sherman-Morrison rank-1 updates, which the tests hold to the dense
//! inverse.
//!
//! Feedback semantics follow the partially rewarded protocol: a correct
//! prediction reveals the true class, so every arm learns from the
//! observation (reward 1 for the predicted arm, 0 elsewhere); an incorrect
//! prediction only tells us the predicted arm earned 0; missing feedback
//! teaches the baseline nothing. A `classic_update` switch restricts the
//! correct-prediction rule to the predicted arm for comparison against
//! textbook LinUCB.

use ndarray::{Array1, Array2, ArrayView1};

use crate::linalg::norm2;
use crate::{OprError, Result};

/// Mean and exploration width of one arm for one observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub mu: f64,
    pub sigma: f64,
}

impl Score {
    pub fn ucb(&self) -> f64 {
        self.mu + self.sigma
    }

    /// Lower edge of the confidence interval, `mu - sigma`.
    pub fn lower(&self) -> f64 {
        self.mu - self.sigma
    }

    /// Upper edge of the confidence interval, `mu + sigma`.
    pub fn upper(&self) -> f64 {
        self.mu + self.sigma
    }
}

/// Ridge statistics of a single arm.
#[derive(Debug, Clone)]
pub struct ArmState {
    /// Inverse of `A = I + sum(x x^T)`, kept current by Sherman-Morrison.
    a_inv: Array2<f64>,
    b: Array1<f64>,
}

impl ArmState {
    pub fn new(dim: usize) -> Self {
        Self {
            a_inv: Array2::eye(dim),
            b: Array1::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// The l2-normalized ridge solution; the zero vector stays zero while
    /// the arm has seen no reward.
    pub fn theta(&self) -> Array1<f64> {
        let raw = self.a_inv.dot(&self.b);
        let norm = norm2(raw.view());
        if norm > 0.0 {
            raw / norm
        } else {
            raw
        }
    }

    /// `x^T A^-1 x`, clamped at zero against rounding.
    pub fn quad_form(&self, x: ArrayView1<'_, f64>) -> f64 {
        self.a_inv.dot(&x).dot(&x).max(0.0)
    }

    /// Read-only view of `b` (for logging and replay checks).
    pub fn b(&self) -> ArrayView1<'_, f64> {
        self.b.view()
    }

    /// Read-only view of the maintained `A^-1` (for logging and replay
    /// checks).
    pub fn a_inv(&self) -> ndarray::ArrayView2<'_, f64> {
        self.a_inv.view()
    }

    pub fn score(&self, x: ArrayView1<'_, f64>, alpha: f64) -> Score {
        Score {
            mu: self.theta().dot(&x),
            sigma: alpha * self.quad_form(x).sqrt(),
        }
    }

    /// Absorb `(x, reward)`: `A += x x^T`, `b += reward * x`.
    pub fn observe(&mut self, x: ArrayView1<'_, f64>, reward: f64) {
        let u = self.a_inv.dot(&x);
        let denom = 1.0 + u.dot(&x);
        // a_inv -= (u u^T) / denom
        let n = u.len();
        for i in 0..n {
            let ui = u[i] / denom;
            if ui == 0.0 {
                continue;
            }
            let mut row = self.a_inv.row_mut(i);
            for j in 0..n {
                row[j] -= ui * u[j];
            }
        }
        self.b.scaled_add(reward, &x);
    }
}

/// Index of the largest selection score; ties go to the lowest index.
pub fn select_arm(scores: &[f64]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, &u) in scores.iter().enumerate() {
        if !u.is_finite() {
            return Err(OprError::NonFinite("selection score"));
        }
        if best.map_or(true, |(_, bu)| u > bu) {
            best = Some((k, u));
        }
    }
    best.map(|(k, _)| k).ok_or(OprError::NoScores)
}

/// A bank of arms sharing the exploration weight `alpha`.
#[derive(Debug, Clone)]
pub struct LinUcbCore {
    arms: Vec<ArmState>,
    alpha: f64,
    classic_update: bool,
}

impl LinUcbCore {
    pub fn new(num_arms: usize, dim: usize, alpha: f64) -> Result<Self> {
        if num_arms < 2 {
            return Err(OprError::TooFewClasses(num_arms));
        }
        if dim == 0 || !alpha.is_finite() || alpha < 0.0 {
            return Err(OprError::Config(format!(
                "LinUCB needs dim >= 1 and alpha >= 0, got dim {dim}, alpha {alpha}"
            )));
        }
        Ok(Self {
            arms: (0..num_arms).map(|_| ArmState::new(dim)).collect(),
            alpha,
            classic_update: false,
        })
    }

    /// Restrict the correct-prediction update to the predicted arm.
    pub fn with_classic_update(mut self, classic: bool) -> Self {
        self.classic_update = classic;
        self
    }

    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn dim(&self) -> usize {
        self.arms[0].dim()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn arm(&self, k: usize) -> &ArmState {
        &self.arms[k]
    }

    fn check_x(&self, x: ArrayView1<'_, f64>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(OprError::ShapeMismatch(format!(
                "observation has {} features, arms expect {}",
                x.len(),
                self.dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(OprError::NonFinite("observation features"));
        }
        Ok(())
    }

    pub fn scores(&self, x: ArrayView1<'_, f64>) -> Result<Vec<Score>> {
        self.check_x(x)?;
        Ok(self.arms.iter().map(|arm| arm.score(x, self.alpha)).collect())
    }

    /// Index of the highest upper confidence bound; ties go to the lowest
    /// index.
    pub fn choose(scores: &[Score]) -> Result<usize> {
        let ucbs: Vec<f64> = scores.iter().map(Score::ucb).collect();
        select_arm(&ucbs)
    }

    pub fn predict(&self, x: ArrayView1<'_, f64>) -> Result<(usize, Vec<Score>)> {
        let scores = self.scores(x)?;
        let chosen = Self::choose(&scores)?;
        Ok((chosen, scores))
    }

    /// Absorb a warm-start observation with a known label: every arm's `A`
    /// gains `x x^T` and the label's arm gains `x` in `b`, regardless of the
    /// `classic_update` switch (which only concerns the online h=1 rule).
    pub fn warm_init(&mut self, x: ArrayView1<'_, f64>, label: usize) -> Result<()> {
        self.check_x(x)?;
        self.check_arm(label)?;
        for (k, arm) in self.arms.iter_mut().enumerate() {
            arm.observe(x, if k == label { 1.0 } else { 0.0 });
        }
        Ok(())
    }

    /// The prediction was right: the true class is `chosen`, so the reward
    /// of every arm is revealed. All arms absorb the observation, reward 1
    /// for `chosen` and 0 for the rest — unless `classic_update` limits
    /// this to `chosen`.
    pub fn update_correct(&mut self, x: ArrayView1<'_, f64>, chosen: usize) -> Result<()> {
        self.check_x(x)?;
        self.check_arm(chosen)?;
        if self.classic_update {
            self.arms[chosen].observe(x, 1.0);
            return Ok(());
        }
        for (k, arm) in self.arms.iter_mut().enumerate() {
            arm.observe(x, if k == chosen { 1.0 } else { 0.0 });
        }
        Ok(())
    }

    /// The prediction was wrong: only the predicted arm's zero reward is
    /// revealed, so only it absorbs the observation.
    pub fn update_incorrect(&mut self, x: ArrayView1<'_, f64>, chosen: usize) -> Result<()> {
        self.check_x(x)?;
        self.check_arm(chosen)?;
        self.arms[chosen].observe(x, 0.0);
        Ok(())
    }

    /// Feedback was withheld but an imputer estimated the predicted arm's
    /// reward: that arm alone absorbs `(x, reward)`.
    pub fn update_imputed(&mut self, x: ArrayView1<'_, f64>, chosen: usize, reward: f64) -> Result<()> {
        self.check_x(x)?;
        self.check_arm(chosen)?;
        if !reward.is_finite() {
            return Err(OprError::NonFinite("imputed reward"));
        }
        self.arms[chosen].observe(x, reward);
        Ok(())
    }

    fn check_arm(&self, k: usize) -> Result<()> {
        if k >= self.arms.len() {
            return Err(OprError::PredictionOutOfRange {
                pred: k,
                num_classes: self.arms.len(),
            });
        }
        Ok(())
    }
}
