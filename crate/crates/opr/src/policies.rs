//! The online policies: a LinUCB baseline, the rewarded online GCN, LinUCB
//! with bounded reward imputation, and the multi-GCN embedded UCB.
//!
//! Every policy follows the same step cycle. Warm-start observations (one
//! per class, labels known) are fed first through [`Policy::warm_start`];
//! each online step is one [`Policy::predict`] followed by exactly one
//! [`Policy::feedback`] carrying the environment's `h ∈ {-1, 0, 1}`.
//!
//! The imputing policies honor a warmup window: for the first `warmup`
//! online steps they predict exactly like the baseline (the bandit arms are
//! either shared or mirrored) while their own machinery — graph growth, GCN
//! training, context sets, imputer state — keeps absorbing observations,
//! so the switch after the window is seamless.

use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;

use crate::environment::Response;
use crate::gcn::{Gcn, GcnConfig, GcnOutput, OnlineGcnModel};
use crate::graph::GrowingGraph;
use crate::imputation::{bounded_clip, Imputer};
use crate::linalg::{norm2, Cholesky};
use crate::linucb::{select_arm, LinUcbCore, Score};
use crate::{derive_seed, OprError, Result};

/// One prediction plus the per-arm selection scores behind it (upper
/// confidence bounds for the bandit policies, class probabilities for the
/// rewarded online GCN). Exposed for tracing.
#[derive(Debug, Clone)]
pub struct Prediction {
    /// Predicted class in `1..=K`.
    pub class: usize,
    pub scores: Vec<f64>,
}

/// Uniform step contract shared by all policies.
pub trait Policy: Send {
    /// Absorb a pre-stream observation with a known label in `1..=K`.
    fn warm_start(&mut self, x: ArrayView1<'_, f64>, dataset_row: usize, label: usize)
        -> Result<()>;
    /// Receive `x_t`, commit to a prediction.
    fn predict(&mut self, x: ArrayView1<'_, f64>, dataset_row: usize) -> Result<Prediction>;
    /// Receive the environment's response to the pending prediction.
    fn feedback(&mut self, response: Response) -> Result<()>;
}

fn check_label(label: usize, num_classes: usize) -> Result<usize> {
    if label < 1 || label > num_classes {
        return Err(OprError::PredictionOutOfRange {
            pred: label,
            num_classes,
        });
    }
    Ok(label - 1)
}

/// Baseline LinUCB: scores raw feature vectors, learns from revealed
/// rewards, and ignores observations whose feedback is withheld.
pub struct LinUcbPolicy {
    core: LinUcbCore,
    pending: Option<(Array1<f64>, usize)>,
}

impl LinUcbPolicy {
    pub fn new(num_classes: usize, dim: usize, alpha: f64) -> Result<Self> {
        Ok(Self {
            core: LinUcbCore::new(num_classes, dim, alpha)?,
            pending: None,
        })
    }

    pub fn core(&self) -> &LinUcbCore {
        &self.core
    }
}

impl Policy for LinUcbPolicy {
    fn warm_start(&mut self, x: ArrayView1<'_, f64>, _row: usize, label: usize) -> Result<()> {
        if self.pending.is_some() {
            return Err(OprError::FeedbackPending);
        }
        let y = check_label(label, self.core.num_arms())?;
        self.core.warm_init(x, y)
    }

    fn predict(&mut self, x: ArrayView1<'_, f64>, _row: usize) -> Result<Prediction> {
        if self.pending.is_some() {
            return Err(OprError::FeedbackPending);
        }
        let (chosen, scores) = self.core.predict(x)?;
        self.pending = Some((x.to_owned(), chosen));
        Ok(Prediction {
            class: chosen + 1,
            scores: scores.iter().map(Score::ucb).collect(),
        })
    }

    fn feedback(&mut self, response: Response) -> Result<()> {
        let (x, chosen) = self
            .pending
            .take()
            .ok_or(OprError::FeedbackBeforePrediction)?;
        match response {
            Response::Correct => self.core.update_correct(x.view(), chosen),
            Response::Incorrect => self.core.update_incorrect(x.view(), chosen),
            Response::Missing => Ok(()),
        }
    }
}

/// Rewarded online GCN: every observation becomes a graph node, the network
/// retrains a few steps, and the prediction is the node's most probable
/// class. Only confirmed predictions (`h = 1`) yield labels.
pub struct RogcnPolicy {
    model: OnlineGcnModel,
    pending: Option<(usize, usize)>,
}

impl RogcnPolicy {
    pub fn new(model: OnlineGcnModel) -> Result<Self> {
        if !model.is_empty() {
            return Err(OprError::Config("policy needs a fresh model".into()));
        }
        Ok(Self {
            model,
            pending: None,
        })
    }

    pub fn model(&self) -> &OnlineGcnModel {
        &self.model
    }
}

impl Policy for RogcnPolicy {
    fn warm_start(&mut self, x: ArrayView1<'_, f64>, row: usize, label: usize) -> Result<()> {
        if self.pending.is_some() {
            return Err(OprError::FeedbackPending);
        }
        let y = check_label(label, self.model.num_outputs())?;
        let node = self.model.absorb(x, row)?;
        self.model.set_label(node, y)
    }

    fn predict(&mut self, x: ArrayView1<'_, f64>, row: usize) -> Result<Prediction> {
        if self.pending.is_some() {
            return Err(OprError::FeedbackPending);
        }
        let node = self.model.absorb(x, row)?;
        let probs = self.model.probs_of(node)?;
        let chosen = select_arm(&probs)?;
        self.pending = Some((node, chosen));
        Ok(Prediction {
            class: chosen + 1,
            scores: probs,
        })
    }

    fn feedback(&mut self, response: Response) -> Result<()> {
        let (node, chosen) = self
            .pending
            .take()
            .ok_or(OprError::FeedbackBeforePrediction)?;
        match response {
            Response::Correct => self.model.set_label(node, chosen),
            // Neither a zero reward nor silence identifies the class.
            Response::Incorrect | Response::Missing => Ok(()),
        }
    }
}

/// LinUCB with reward imputation: behaves like the baseline except that a
/// withheld reward is replaced by the imputer's estimate for the predicted
/// arm — clipped into `mu ± sigma` of that arm's prediction-time score when
/// `bounded` is set (the unbounded variant is the ILINUCB ablation).
pub struct BiLinUcbPolicy {
    core: LinUcbCore,
    imputer: Box<dyn Imputer>,
    bounded: bool,
    warmup_remaining: usize,
    pending: Option<BiLinUcbPending>,
}

struct BiLinUcbPending {
    x: Array1<f64>,
    chosen: usize,
    score: Score,
}

impl BiLinUcbPolicy {
    pub fn new(
        num_classes: usize,
        dim: usize,
        alpha: f64,
        imputer: Box<dyn Imputer>,
        bounded: bool,
        warmup: usize,
    ) -> Result<Self> {
        Ok(Self {
            core: LinUcbCore::new(num_classes, dim, alpha)?,
            imputer,
            bounded,
            warmup_remaining: warmup,
            pending: None,
        })
    }

    pub fn core(&self) -> &LinUcbCore {
        &self.core
    }
}

impl Policy for BiLinUcbPolicy {
    fn warm_start(&mut self, x: ArrayView1<'_, f64>, row: usize, label: usize) -> Result<()> {
        if self.pending.is_some() {
            return Err(OprError::FeedbackPending);
        }
        let y = check_label(label, self.core.num_arms())?;
        self.core.warm_init(x, y)?;
        self.imputer.absorb(x, row)?;
        self.imputer.record_label(y)
    }

    fn predict(&mut self, x: ArrayView1<'_, f64>, row: usize) -> Result<Prediction> {
        if self.pending.is_some() {
            return Err(OprError::FeedbackPending);
        }
        self.imputer.absorb(x, row)?;
        let (chosen, scores) = self.core.predict(x)?;
        self.pending = Some(BiLinUcbPending {
            x: x.to_owned(),
            chosen,
            score: scores[chosen],
        });
        Ok(Prediction {
            class: chosen + 1,
            scores: scores.iter().map(Score::ucb).collect(),
        })
    }

    fn feedback(&mut self, response: Response) -> Result<()> {
        let p = self
            .pending
            .take()
            .ok_or(OprError::FeedbackBeforePrediction)?;
        match response {
            Response::Correct => {
                self.core.update_correct(p.x.view(), p.chosen)?;
                self.imputer.record_label(p.chosen)?;
            }
            Response::Incorrect => {
                self.core.update_incorrect(p.x.view(), p.chosen)?;
                self.imputer.record_incorrect(p.chosen)?;
            }
            Response::Missing => {
                // During warmup the baseline rule applies: learn nothing.
                if self.warmup_remaining == 0 {
                    let estimate = self.imputer.impute()?[p.chosen];
                    let reward = if self.bounded {
                        bounded_clip(estimate, p.score.mu, p.score.sigma)
                    } else {
                        estimate
                    };
                    self.core.update_imputed(p.x.view(), p.chosen, reward)?;
                }
            }
        }
        self.warmup_remaining = self.warmup_remaining.saturating_sub(1);
        Ok(())
    }
}

/// One bandit arm of the multi-GCN policy: a binary GCN whose embedding
/// supplies the arm's contexts, plus the context/reward history behind its
/// ridge statistics.
struct GcnUcbArm {
    gcn: Gcn,
    /// Per-node binary labels for this arm's GCN: -1 unknown, 0 "not this
    /// class", 1 "this class".
    labels: Vec<i32>,
    /// Node indices whose (possibly imputed) rewards this arm has absorbed.
    contexts: Vec<usize>,
    /// Rewards aligned with `contexts`.
    rewards: Vec<f64>,
}

/// Multi-GCN embedded UCB: one binary GCN per class embeds the observation
/// graph; each arm scores the current node's embedding with ridge
/// statistics rebuilt every step from its context set, so earlier contexts
/// follow the embedding as it evolves. Missing feedback is self-imputed
/// with the predicted arm's positive-class probability.
pub struct GcnUcbPolicy {
    shared: GrowingGraph,
    arms: Vec<GcnUcbArm>,
    alpha: f64,
    train_steps: usize,
    warmup_core: LinUcbCore,
    warmup_remaining: usize,
    pending: Option<GcnUcbPending>,
}

struct GcnUcbPending {
    node: usize,
    chosen: usize,
    x: Array1<f64>,
    /// Positive-class probability of each arm's GCN at `node`, cached at
    /// prediction time.
    positive_probs: Vec<f64>,
    in_warmup: bool,
}

impl GcnUcbPolicy {
    /// `cfg.num_outputs` is forced to 2: the arms' networks are binary.
    pub fn new(
        num_classes: usize,
        shared: GrowingGraph,
        cfg: GcnConfig,
        train_steps: usize,
        alpha: f64,
        warmup: usize,
        seed: u64,
    ) -> Result<Self> {
        if num_classes < 2 {
            return Err(OprError::TooFewClasses(num_classes));
        }
        if !shared.is_empty() {
            return Err(OprError::Config("policy needs an empty starting graph".into()));
        }
        let arm_cfg = GcnConfig {
            num_outputs: 2,
            ..cfg
        };
        let arms = (0..num_classes)
            .map(|k| {
                Ok(GcnUcbArm {
                    gcn: Gcn::new(shared.num_features(), arm_cfg.clone(), derive_seed(seed, k as u64))?,
                    labels: Vec::new(),
                    contexts: Vec::new(),
                    rewards: Vec::new(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let warmup_core = LinUcbCore::new(num_classes, shared.num_features(), alpha)?;
        Ok(Self {
            shared,
            arms,
            alpha,
            train_steps,
            warmup_core,
            warmup_remaining: warmup,
            pending: None,
        })
    }

    /// Append the node to the shared graph (unlabeled in every arm) and give
    /// each arm's GCN its training steps. Returns the per-arm eval outputs.
    fn absorb(&mut self, x: ArrayView1<'_, f64>, row: usize) -> Result<(usize, Vec<GcnOutput>)> {
        let node = self.shared.append(x, row)?;
        for arm in &mut self.arms {
            arm.labels.push(-1);
        }
        let a_hat = self.shared.normalized()?;
        let features = self.shared.features();
        let train_steps = self.train_steps;
        let outputs: Vec<GcnOutput> = self
            .arms
            .par_iter_mut()
            .map(|arm| {
                if arm.labels.iter().any(|&y| y >= 0) {
                    for _ in 0..train_steps {
                        arm.gcn.train_step(features, &a_hat, &arm.labels)?;
                    }
                }
                arm.gcn.forward(features, &a_hat)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((node, outputs))
    }

    /// Ridge statistics of Eq. 2-3 over the arm's context set, evaluated at
    /// the current node's context.
    fn arm_score(arm: &GcnUcbArm, contexts: &Array2<f64>, node: usize, alpha: f64) -> Result<Score> {
        let dim = contexts.ncols();
        let mut a = Array2::<f64>::eye(dim);
        let mut rb = Array1::<f64>::zeros(dim);
        for (&t, &r) in arm.contexts.iter().zip(&arm.rewards) {
            let g = contexts.row(t);
            for i in 0..dim {
                let gi = g[i];
                if gi == 0.0 {
                    continue;
                }
                for j in 0..dim {
                    a[[i, j]] += gi * g[j];
                }
            }
            rb.scaled_add(r, &g);
        }
        let chol = Cholesky::new(a.view())?;
        let theta_raw = chol.solve(rb.view());
        let norm = norm2(theta_raw.view());
        let theta = if norm > 0.0 { theta_raw / norm } else { theta_raw };
        let g_node = contexts.row(node);
        Ok(Score {
            mu: theta.dot(&g_node),
            sigma: alpha * chol.inv_quad_form(g_node).max(0.0).sqrt(),
        })
    }

    #[cfg(test)]
    fn arm_bookkeeping(&self, k: usize) -> (&[i32], &[usize], &[f64]) {
        let arm = &self.arms[k];
        (&arm.labels, &arm.contexts, &arm.rewards)
    }
}

/// Scale every row to unit l2 norm; zero rows stay zero.
fn l2_normalize_rows(m: &Array2<f64>) -> Array2<f64> {
    let mut out = m.clone();
    for mut row in out.rows_mut() {
        let norm = norm2(row.view());
        if norm > 0.0 {
            row.mapv_inplace(|v| v / norm);
        }
    }
    out
}

impl Policy for GcnUcbPolicy {
    fn warm_start(&mut self, x: ArrayView1<'_, f64>, row: usize, label: usize) -> Result<()> {
        if self.pending.is_some() {
            return Err(OprError::FeedbackPending);
        }
        let y = check_label(label, self.arms.len())?;
        let (node, _) = self.absorb(x, row)?;
        for (k, arm) in self.arms.iter_mut().enumerate() {
            let hit = k == y;
            arm.labels[node] = i32::from(hit);
            arm.contexts.push(node);
            arm.rewards.push(f64::from(hit));
        }
        self.warmup_core.warm_init(x, y)
    }

    fn predict(&mut self, x: ArrayView1<'_, f64>, row: usize) -> Result<Prediction> {
        if self.pending.is_some() {
            return Err(OprError::FeedbackPending);
        }
        let (node, outputs) = self.absorb(x, row)?;
        let positive_probs: Vec<f64> = outputs.iter().map(|o| o.probs[[node, 1]]).collect();
        let in_warmup = self.warmup_remaining > 0;
        let (chosen, scores) = if in_warmup {
            let (chosen, scores) = self.warmup_core.predict(x)?;
            (chosen, scores.iter().map(Score::ucb).collect::<Vec<_>>())
        } else {
            let alpha = self.alpha;
            let ucbs: Vec<f64> = self
                .arms
                .par_iter()
                .zip(&outputs)
                .map(|(arm, out)| {
                    let contexts = l2_normalize_rows(&out.embedding);
                    Ok(Self::arm_score(arm, &contexts, node, alpha)?.ucb())
                })
                .collect::<Result<Vec<_>>>()?;
            (select_arm(&ucbs)?, ucbs)
        };
        self.pending = Some(GcnUcbPending {
            node,
            chosen,
            x: x.to_owned(),
            positive_probs,
            in_warmup,
        });
        Ok(Prediction {
            class: chosen + 1,
            scores,
        })
    }

    fn feedback(&mut self, response: Response) -> Result<()> {
        let p = self
            .pending
            .take()
            .ok_or(OprError::FeedbackBeforePrediction)?;
        match response {
            Response::Correct => {
                // The true class is revealed: every arm gets a labeled node
                // and a context with its revealed reward.
                for (k, arm) in self.arms.iter_mut().enumerate() {
                    let hit = k == p.chosen;
                    arm.labels[p.node] = i32::from(hit);
                    arm.contexts.push(p.node);
                    arm.rewards.push(f64::from(hit));
                }
                if p.in_warmup {
                    self.warmup_core.update_correct(p.x.view(), p.chosen)?;
                }
            }
            Response::Incorrect => {
                let arm = &mut self.arms[p.chosen];
                arm.labels[p.node] = 0;
                arm.contexts.push(p.node);
                arm.rewards.push(0.0);
                if p.in_warmup {
                    self.warmup_core.update_incorrect(p.x.view(), p.chosen)?;
                }
            }
            Response::Missing => {
                // Self-imputation: the predicted arm absorbs its own GCN's
                // positive-class probability, unclipped.
                let arm = &mut self.arms[p.chosen];
                arm.contexts.push(p.node);
                arm.rewards.push(p.positive_probs[p.chosen]);
            }
        }
        self.warmup_remaining = self.warmup_remaining.saturating_sub(1);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::ObservationGraph;
    use crate::imputation::OracleImputer;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn small_gcn_cfg() -> GcnConfig {
        GcnConfig {
            hidden: 4,
            num_outputs: 2,
            learning_rate: 0.01,
            weight_decay: 5e-4,
            dropout: 0.5,
        }
    }

    fn knn_graph(d: usize) -> GrowingGraph {
        GrowingGraph::new(ObservationGraph::knn(2).unwrap(), d).unwrap()
    }

    #[test]
    fn baseline_ignores_missing_feedback() {
        let mut p = LinUcbPolicy::new(2, 2, 0.25).unwrap();
        p.warm_start(array![1.0, 0.0].view(), 0, 1).unwrap();
        p.warm_start(array![0.0, 1.0].view(), 1, 2).unwrap();
        let before: Vec<_> = (0..2).map(|k| p.core().arm(k).b().to_owned()).collect();
        p.predict(array![0.5, 0.5].view(), 2).unwrap();
        p.feedback(Response::Missing).unwrap();
        for k in 0..2 {
            assert_eq!(p.core().arm(k).b(), before[k].view());
            assert_abs_diff_eq!(
                p.core().arm(k).quad_form(array![0.5, 0.5].view()),
                {
                    let mut fresh = LinUcbCore::new(2, 2, 0.25).unwrap();
                    fresh.warm_init(array![1.0, 0.0].view(), 0).unwrap();
                    fresh.warm_init(array![0.0, 1.0].view(), 1).unwrap();
                    fresh.arm(k).quad_form(array![0.5, 0.5].view())
                },
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn rogcn_gains_labels_only_from_correct_feedback() {
        let model = OnlineGcnModel::new(knn_graph(2), small_gcn_cfg(), 2, 7).unwrap();
        let mut p = RogcnPolicy::new(model).unwrap();
        p.warm_start(array![1.0, 0.0].view(), 0, 1).unwrap();
        p.warm_start(array![0.0, 1.0].view(), 1, 2).unwrap();
        assert_eq!(p.model().labeled_count(), 2);

        let pred = p.predict(array![0.9, 0.1].view(), 2).unwrap();
        assert!(pred.class >= 1 && pred.class <= 2);
        p.feedback(Response::Incorrect).unwrap();
        assert_eq!(p.model().labeled_count(), 2);

        p.predict(array![0.8, 0.2].view(), 3).unwrap();
        p.feedback(Response::Missing).unwrap();
        assert_eq!(p.model().labeled_count(), 2);

        let pred = p.predict(array![0.7, 0.3].view(), 4).unwrap();
        p.feedback(Response::Correct).unwrap();
        assert_eq!(p.model().labeled_count(), 3);
        assert_eq!(p.model().labels()[4], pred.class as i32 - 1);
    }

    #[test]
    fn bilinucb_missing_feedback_applies_the_clipped_estimate() {
        // Fresh arms: predicting x = (1,0) gives mu = 0, sigma = 0.25 for
        // every arm, so arm 0 wins the tie. The oracle estimates reward 1,
        // which the band clips to 0.25.
        let truth = vec![0, 0];
        let make = |bounded: bool| {
            let imp = OracleImputer::new(truth.clone(), 2).unwrap();
            BiLinUcbPolicy::new(2, 2, 0.25, Box::new(imp), bounded, 0).unwrap()
        };
        let x = array![1.0, 0.0];

        let mut bounded = make(true);
        bounded.predict(x.view(), 0).unwrap();
        bounded.feedback(Response::Missing).unwrap();
        assert_abs_diff_eq!(bounded.core().arm(0).b()[0], 0.25, epsilon = 1e-15);

        let mut unbounded = make(false);
        unbounded.predict(x.view(), 0).unwrap();
        unbounded.feedback(Response::Missing).unwrap();
        assert_abs_diff_eq!(unbounded.core().arm(0).b()[0], 1.0, epsilon = 1e-15);

        // Both variants absorbed x into the chosen arm's A.
        assert!(bounded.core().arm(0).quad_form(x.view()) < 1.0);
        assert_abs_diff_eq!(bounded.core().arm(1).quad_form(x.view()), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn bilinucb_during_warmup_ignores_missing_like_the_baseline() {
        let imp = OracleImputer::new(vec![0, 0, 0], 2).unwrap();
        let mut p = BiLinUcbPolicy::new(2, 2, 0.25, Box::new(imp), true, 10).unwrap();
        let x = array![1.0, 0.0];
        p.predict(x.view(), 0).unwrap();
        p.feedback(Response::Missing).unwrap();
        assert_eq!(p.core().arm(0).b()[0], 0.0);
        assert_abs_diff_eq!(p.core().arm(0).quad_form(x.view()), 1.0, epsilon = 1e-15);
    }

    fn tiny_gcnucb(warmup: usize) -> GcnUcbPolicy {
        GcnUcbPolicy::new(
            3,
            knn_graph(2),
            small_gcn_cfg(),
            1,
            0.25,
            warmup,
            99,
        )
        .unwrap()
    }

    fn warm_three(p: &mut GcnUcbPolicy) {
        p.warm_start(array![1.0, 0.0].view(), 0, 1).unwrap();
        p.warm_start(array![0.0, 1.0].view(), 1, 2).unwrap();
        p.warm_start(array![0.7, 0.7].view(), 2, 3).unwrap();
    }

    #[test]
    fn gcnucb_warm_start_seeds_every_arm() {
        let mut p = tiny_gcnucb(0);
        warm_three(&mut p);
        for k in 0..3 {
            let (labels, contexts, rewards) = p.arm_bookkeeping(k);
            assert_eq!(contexts, &[0, 1, 2]);
            let expected: Vec<f64> = (0..3).map(|t| f64::from(t == k)).collect();
            assert_eq!(rewards, expected.as_slice());
            let expected_labels: Vec<i32> = (0..3).map(|t| i32::from(t == k)).collect();
            assert_eq!(labels, expected_labels.as_slice());
        }
    }

    #[test]
    fn gcnucb_correct_feedback_grows_every_context_set() {
        let mut p = tiny_gcnucb(0);
        warm_three(&mut p);
        let pred = p.predict(array![0.9, 0.1].view(), 3).unwrap();
        let chosen = pred.class - 1;
        p.feedback(Response::Correct).unwrap();
        for k in 0..3 {
            let (labels, contexts, rewards) = p.arm_bookkeeping(k);
            assert_eq!(contexts.len(), 4);
            assert_eq!(*contexts.last().unwrap(), 3);
            assert_eq!(*rewards.last().unwrap(), f64::from(k == chosen));
            assert_eq!(labels[3], i32::from(k == chosen));
        }
    }

    #[test]
    fn gcnucb_incorrect_feedback_marks_only_the_chosen_arm() {
        let mut p = tiny_gcnucb(0);
        warm_three(&mut p);
        let pred = p.predict(array![0.1, 0.9].view(), 3).unwrap();
        let chosen = pred.class - 1;
        p.feedback(Response::Incorrect).unwrap();
        for k in 0..3 {
            let (labels, contexts, rewards) = p.arm_bookkeeping(k);
            if k == chosen {
                assert_eq!(contexts.len(), 4);
                assert_eq!(*rewards.last().unwrap(), 0.0);
                assert_eq!(labels[3], 0);
            } else {
                assert_eq!(contexts.len(), 3);
                assert_eq!(labels[3], -1);
            }
        }
    }

    #[test]
    fn gcnucb_missing_feedback_self_imputes_the_cached_probability() {
        let mut p = tiny_gcnucb(0);
        warm_three(&mut p);
        p.predict(array![0.5, 0.5].view(), 3).unwrap();
        let pend = p.pending.as_ref().unwrap();
        let chosen = pend.chosen;
        let cached = pend.positive_probs[chosen];
        p.feedback(Response::Missing).unwrap();
        let (labels, contexts, rewards) = p.arm_bookkeeping(chosen);
        assert_eq!(contexts.len(), 4);
        assert_eq!(*rewards.last().unwrap(), cached);
        assert!(cached > 0.0 && cached < 1.0);
        assert_eq!(labels[3], -1);
    }

    #[test]
    fn gcnucb_context_growth_invariant() {
        let mut p = tiny_gcnucb(0);
        warm_three(&mut p);
        let total = |p: &GcnUcbPolicy| -> usize {
            (0..3).map(|k| p.arm_bookkeeping(k).1.len()).sum()
        };
        let base = total(&p);
        p.predict(array![0.9, 0.2].view(), 3).unwrap();
        p.feedback(Response::Correct).unwrap();
        assert_eq!(total(&p), base + 3);
        p.predict(array![0.2, 0.9].view(), 4).unwrap();
        p.feedback(Response::Missing).unwrap();
        assert_eq!(total(&p), base + 4);
        p.predict(array![0.5, 0.2].view(), 5).unwrap();
        p.feedback(Response::Incorrect).unwrap();
        assert_eq!(total(&p), base + 5);
    }

    #[test]
    fn arm_score_single_context_matches_hand_computation() {
        // One context g = (1,0) with reward 1: A = [[2,0],[0,1]],
        // theta_raw = (0.5, 0) -> theta = (1, 0).
        let arm = GcnUcbArm {
            gcn: Gcn::new(2, small_gcn_cfg(), 0).unwrap(),
            labels: vec![1],
            contexts: vec![0],
            rewards: vec![1.0],
        };
        let contexts = array![[1.0, 0.0]];
        let s = GcnUcbPolicy::arm_score(&arm, &contexts, 0, 1.0).unwrap();
        assert_abs_diff_eq!(s.mu, 1.0, epsilon = 1e-12);
        // sigma = sqrt(g A^-1 g) = sqrt(0.5)
        assert_abs_diff_eq!(s.sigma, 0.5f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn empty_context_set_scores_zero_mean() {
        let arm = GcnUcbArm {
            gcn: Gcn::new(2, small_gcn_cfg(), 0).unwrap(),
            labels: vec![-1],
            contexts: vec![],
            rewards: vec![],
        };
        let contexts = array![[0.6, 0.8]];
        let s = GcnUcbPolicy::arm_score(&arm, &contexts, 0, 0.25).unwrap();
        assert_eq!(s.mu, 0.0);
        assert_abs_diff_eq!(s.sigma, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn l2_normalization_leaves_zero_rows_alone() {
        let m = array![[3.0, 4.0], [0.0, 0.0], [0.0, 2.0]];
        let n = l2_normalize_rows(&m);
        assert_abs_diff_eq!(n[[0, 0]], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(n[[0, 1]], 0.8, epsilon = 1e-15);
        assert_eq!(n.row(1).to_vec(), vec![0.0, 0.0]);
        assert_eq!(n.row(2).to_vec(), vec![0.0, 1.0]);
        for row in n.rows() {
            let norm = norm2(row);
            assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn warmup_predictions_mirror_the_baseline() {
        // Drive baseline, BILINUCB, and GCNUCB through the same 20-step
        // stream (all inside warmup) and require identical predictions.
        let truth: Vec<usize> = (0..40).map(|i| i % 2).collect();
        let mut baseline = LinUcbPolicy::new(2, 2, 0.25).unwrap();
        let imp = OracleImputer::new(truth.clone(), 2).unwrap();
        let mut bi = BiLinUcbPolicy::new(2, 2, 0.25, Box::new(imp), true, 20).unwrap();
        let mut gu = GcnUcbPolicy::new(2, knn_graph(2), small_gcn_cfg(), 1, 0.25, 20, 5).unwrap();

        baseline.warm_start(array![1.0, 0.0].view(), 0, 1).unwrap();
        baseline.warm_start(array![0.0, 1.0].view(), 1, 2).unwrap();
        bi.warm_start(array![1.0, 0.0].view(), 0, 1).unwrap();
        bi.warm_start(array![0.0, 1.0].view(), 1, 2).unwrap();
        gu.warm_start(array![1.0, 0.0].view(), 0, 1).unwrap();
        gu.warm_start(array![0.0, 1.0].view(), 1, 2).unwrap();

        for t in 0..20usize {
            let a = 0.3 + 0.4 * ((t * 7 % 10) as f64 / 10.0);
            let x = array![a, 1.0 - a];
            let row = t + 2;
            let pb = baseline.predict(x.view(), row).unwrap();
            let pi = bi.predict(x.view(), row).unwrap();
            let pg = gu.predict(x.view(), row).unwrap();
            assert_eq!(pb.class, pi.class, "step {t}");
            assert_eq!(pb.class, pg.class, "step {t}");
            let truth_class = (t % 2) + 1;
            let response = match t % 3 {
                0 => Response::Missing,
                _ if pb.class == truth_class => Response::Correct,
                _ => Response::Incorrect,
            };
            baseline.feedback(response).unwrap();
            bi.feedback(response).unwrap();
            gu.feedback(response).unwrap();
        }
    }

    #[test]
    fn step_protocol_violations_error() {
        let mut p = LinUcbPolicy::new(2, 2, 0.25).unwrap();
        assert!(matches!(
            p.feedback(Response::Correct).unwrap_err(),
            OprError::FeedbackBeforePrediction
        ));
        p.predict(array![1.0, 0.0].view(), 0).unwrap();
        assert!(matches!(
            p.predict(array![1.0, 0.0].view(), 1).unwrap_err(),
            OprError::FeedbackPending
        ));
        assert!(matches!(
            p.warm_start(array![1.0, 0.0].view(), 1, 1).unwrap_err(),
            OprError::FeedbackPending
        ));
        p.feedback(Response::Missing).unwrap();
        p.predict(array![1.0, 0.0].view(), 1).unwrap();
    }
}
