//! Missing-reward imputers and the bounded clipping rule.
//!
//! An imputer estimates, for the current observation, a class-probability
//! vector that stands in for the withheld reward. All imputers follow the
//! same step protocol: [`Imputer::absorb`] once per observation in stream
//! order, then optionally one reward reading ([`Imputer::record_label`] when
//! the true class became known, [`Imputer::record_incorrect`] when only a
//! zero reward did) or a query ([`Imputer::impute`]) for that observation.

use ndarray::{Array1, ArrayView1};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Dirichlet, Distribution};

use crate::gcn::OnlineGcnModel;
use crate::{OprError, Result};

/// Clip an imputed reward into one standard deviation of the arm's expected
/// reward: `max(mu - sigma, min(imputed, mu + sigma))`.
pub fn bounded_clip(imputed: f64, mu: f64, sigma: f64) -> f64 {
    debug_assert!(sigma >= 0.0, "negative sigma");
    (mu - sigma).max(imputed.min(mu + sigma))
}

/// A missing-reward estimator fed by the policy's step cycle.
pub trait Imputer: Send {
    /// Absorb the next observation (its feature vector and dataset row).
    fn absorb(&mut self, x: ArrayView1<'_, f64>, dataset_row: usize) -> Result<()>;
    /// The current observation's true class became known (h = 1 with the
    /// predicted class, or a warm-start label).
    fn record_label(&mut self, label: usize) -> Result<()>;
    /// Arm `arm` earned zero reward on the current observation (h = 0).
    fn record_incorrect(&mut self, arm: usize) -> Result<()>;
    /// Class-probability estimate for the current observation.
    fn impute(&mut self) -> Result<Vec<f64>>;
}

/// Scale a non-negative vector to the simplex; all-zero input falls back to
/// the uniform distribution.
fn to_simplex(mut raw: Vec<f64>) -> Vec<f64> {
    let sum: f64 = raw.iter().sum();
    if sum > 0.0 {
        for v in &mut raw {
            *v /= sum;
        }
    } else {
        let k = raw.len() as f64;
        raw.fill(1.0 / k);
    }
    raw
}

/// Mini-batch k-means over observations with per-cluster, per-arm reward
/// averages.
///
/// The first `num_clusters` distinct observations seed the centroids; every
/// later observation moves its nearest centroid toward itself with step
/// `1 / count`. Reward readings land in the current observation's cluster.
/// Imputation returns the cluster's per-arm average rewards (empty cells
/// read 0) normalized to the simplex, uniform when the cluster has no
/// readings at all.
#[derive(Debug, Clone)]
pub struct KMeansImputer {
    num_clusters: usize,
    num_arms: usize,
    centroids: Vec<Array1<f64>>,
    counts: Vec<u64>,
    reward_sum: Vec<Vec<f64>>,
    reward_count: Vec<Vec<u64>>,
    current: Option<usize>,
}

impl KMeansImputer {
    pub fn new(num_clusters: usize, num_arms: usize) -> Result<Self> {
        if num_clusters == 0 || num_arms < 2 {
            return Err(OprError::Config(format!(
                "k-means imputer needs clusters >= 1 and arms >= 2, got {num_clusters} / {num_arms}"
            )));
        }
        Ok(Self {
            num_clusters,
            num_arms,
            centroids: Vec::new(),
            counts: Vec::new(),
            reward_sum: Vec::new(),
            reward_count: Vec::new(),
            current: None,
        })
    }

    fn nearest(&self, x: ArrayView1<'_, f64>) -> usize {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (j, c) in self.centroids.iter().enumerate() {
            let d: f64 = c
                .iter()
                .zip(x.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        best
    }

    fn cluster_mut(&mut self) -> Result<usize> {
        self.current
            .ok_or(OprError::Protocol("imputer reading before any observation"))
    }

    pub fn num_centroids(&self) -> usize {
        self.centroids.len()
    }
}

impl Imputer for KMeansImputer {
    fn absorb(&mut self, x: ArrayView1<'_, f64>, _dataset_row: usize) -> Result<()> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(OprError::NonFinite("imputer observation"));
        }
        if let Some(first) = self.centroids.first() {
            if first.len() != x.len() {
                return Err(OprError::ShapeMismatch(format!(
                    "observation has {} features, centroids have {}",
                    x.len(),
                    first.len()
                )));
            }
        }
        let is_duplicate = self.centroids.iter().any(|c| c.view() == x);
        if self.centroids.len() < self.num_clusters && !is_duplicate {
            self.centroids.push(x.to_owned());
            self.counts.push(1);
            self.reward_sum.push(vec![0.0; self.num_arms]);
            self.reward_count.push(vec![0; self.num_arms]);
            self.current = Some(self.centroids.len() - 1);
            return Ok(());
        }
        let j = self.nearest(x);
        self.counts[j] += 1;
        let lr = 1.0 / self.counts[j] as f64;
        let c = &mut self.centroids[j];
        for (ci, &xi) in c.iter_mut().zip(x.iter()) {
            *ci += lr * (xi - *ci);
        }
        self.current = Some(j);
        Ok(())
    }

    fn record_label(&mut self, label: usize) -> Result<()> {
        if label >= self.num_arms {
            return Err(OprError::PredictionOutOfRange {
                pred: label,
                num_classes: self.num_arms,
            });
        }
        let j = self.cluster_mut()?;
        self.reward_sum[j][label] += 1.0;
        self.reward_count[j][label] += 1;
        Ok(())
    }

    fn record_incorrect(&mut self, arm: usize) -> Result<()> {
        if arm >= self.num_arms {
            return Err(OprError::PredictionOutOfRange {
                pred: arm,
                num_classes: self.num_arms,
            });
        }
        let j = self.cluster_mut()?;
        self.reward_count[j][arm] += 1;
        Ok(())
    }

    fn impute(&mut self) -> Result<Vec<f64>> {
        let j = self
            .current
            .ok_or(OprError::Protocol("imputer queried before any observation"))?;
        let raw: Vec<f64> = (0..self.num_arms)
            .map(|k| {
                let n = self.reward_count[j][k];
                if n == 0 {
                    0.0
                } else {
                    self.reward_sum[j][k] / n as f64
                }
            })
            .collect();
        Ok(to_simplex(raw))
    }
}

/// Imputation by a rewarded online GCN: the estimate for the current
/// observation is its node's softmax row.
pub struct GcnImputer {
    model: OnlineGcnModel,
    current: Option<usize>,
}

impl GcnImputer {
    pub fn new(model: OnlineGcnModel) -> Result<Self> {
        if !model.is_empty() {
            return Err(OprError::Config("GCN imputer needs a fresh model".into()));
        }
        Ok(Self {
            model,
            current: None,
        })
    }

    pub fn model(&self) -> &OnlineGcnModel {
        &self.model
    }
}

impl Imputer for GcnImputer {
    fn absorb(&mut self, x: ArrayView1<'_, f64>, dataset_row: usize) -> Result<()> {
        let node = self.model.absorb(x, dataset_row)?;
        self.current = Some(node);
        Ok(())
    }

    fn record_label(&mut self, label: usize) -> Result<()> {
        let node = self
            .current
            .ok_or(OprError::Protocol("imputer reading before any observation"))?;
        self.model.set_label(node, label)
    }

    fn record_incorrect(&mut self, _arm: usize) -> Result<()> {
        // A zero reward does not identify the class; the node stays
        // unlabeled, exactly as in the rewarded online GCN policy.
        self.current
            .map(|_| ())
            .ok_or(OprError::Protocol("imputer reading before any observation"))
    }

    fn impute(&mut self) -> Result<Vec<f64>> {
        let node = self
            .current
            .ok_or(OprError::Protocol("imputer queried before any observation"))?;
        self.model.probs_of(node)
    }
}

/// Seeded draws from the flat Dirichlet distribution over the simplex; the
/// weakest possible imputer, used as an ablation.
#[derive(Debug, Clone)]
pub struct RandomImputer {
    num_arms: usize,
    rng: ChaCha8Rng,
}

impl RandomImputer {
    pub fn new(num_arms: usize, seed: u64) -> Result<Self> {
        if num_arms < 2 {
            return Err(OprError::TooFewClasses(num_arms));
        }
        Ok(Self {
            num_arms,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }
}

impl Imputer for RandomImputer {
    fn absorb(&mut self, _x: ArrayView1<'_, f64>, _dataset_row: usize) -> Result<()> {
        Ok(())
    }

    fn record_label(&mut self, _label: usize) -> Result<()> {
        Ok(())
    }

    fn record_incorrect(&mut self, _arm: usize) -> Result<()> {
        Ok(())
    }

    fn impute(&mut self) -> Result<Vec<f64>> {
        let dirichlet = Dirichlet::new(&vec![1.0; self.num_arms])
            .map_err(|e| OprError::Config(format!("Dirichlet: {e}")))?;
        Ok(dirichlet.sample(&mut self.rng))
    }
}

/// Diagnostic imputer that answers with the one-hot true class. It receives
/// the truth per stream position up front (the experiment harness knows it),
/// so policies cannot tell it apart from a learned imputer.
#[derive(Debug, Clone)]
pub struct OracleImputer {
    /// True 0-based class per stream position.
    truth: Vec<usize>,
    num_arms: usize,
    cursor: Option<usize>,
}

impl OracleImputer {
    pub fn new(truth: Vec<usize>, num_arms: usize) -> Result<Self> {
        if num_arms < 2 {
            return Err(OprError::TooFewClasses(num_arms));
        }
        if let Some(&bad) = truth.iter().find(|&&y| y >= num_arms) {
            return Err(OprError::PredictionOutOfRange {
                pred: bad,
                num_classes: num_arms,
            });
        }
        Ok(Self {
            truth,
            num_arms,
            cursor: None,
        })
    }
}

impl Imputer for OracleImputer {
    fn absorb(&mut self, _x: ArrayView1<'_, f64>, _dataset_row: usize) -> Result<()> {
        let next = self.cursor.map_or(0, |c| c + 1);
        if next >= self.truth.len() {
            return Err(OprError::StepOutOfRange(next));
        }
        self.cursor = Some(next);
        Ok(())
    }

    fn record_label(&mut self, _label: usize) -> Result<()> {
        Ok(())
    }

    fn record_incorrect(&mut self, _arm: usize) -> Result<()> {
        Ok(())
    }

    fn impute(&mut self) -> Result<Vec<f64>> {
        let pos = self
            .cursor
            .ok_or(OprError::Protocol("imputer queried before any observation"))?;
        let mut out = vec![0.0; self.num_arms];
        out[self.truth[pos]] = 1.0;
        Ok(out)
    }
}
