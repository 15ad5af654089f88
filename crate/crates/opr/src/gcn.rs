//! One-hidden-layer graph convolutional network trained online with Adam.
//!
//! Forward pass: `E = A_hat * relu(A_hat * X * W1)` is the node embedding
//! and `softmax(E * W2)` the class probabilities. Training applies inverted
//! dropout to the input features and to the ReLU output, and minimizes the
//! mean cross-entropy over the labeled nodes plus an L2 penalty on `W1`
//! (`weight_decay / 2 * ||W1||_F^2`). Gradients are exact (see
//! [`Gcn::gradients`]) and are checked against finite differences in the
//! test suite.

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::graph::{CsrMatrix, GrowingGraph};
use crate::{OprError, Result};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct GcnConfig {
    /// Hidden-layer width (the embedding dimension).
    pub hidden: usize,
    /// Output classes; 2 for the per-arm binary networks.
    pub num_outputs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Drop probability in `[0, 1)`; 0 disables dropout (and draws nothing
    /// from the RNG).
    pub dropout: f64,
}

impl Default for GcnConfig {
    fn default() -> Self {
        Self {
            hidden: 16,
            num_outputs: 2,
            learning_rate: 0.01,
            weight_decay: 5e-4,
            dropout: 0.5,
        }
    }
}

impl GcnConfig {
    fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.num_outputs < 2 {
            return Err(OprError::Config(format!(
                "GCN needs hidden >= 1 and num_outputs >= 2, got {} / {}",
                self.hidden, self.num_outputs
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(OprError::Config(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if self.learning_rate <= 0.0 || self.weight_decay < 0.0 {
            return Err(OprError::Config(
                "learning rate must be positive and weight decay non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Multiplicative dropout masks with inverted scaling: entries are either
/// `0` or `1 / (1 - p)`.
#[derive(Debug, Clone)]
pub struct DropoutMasks {
    /// Same shape as the feature matrix.
    pub input: Array2<f64>,
    /// Same shape as the hidden activations (`n x hidden`).
    pub hidden: Array2<f64>,
}

/// Eval-mode forward result.
#[derive(Debug, Clone)]
pub struct GcnOutput {
    /// `A_hat * relu(A_hat * X * W1)`, one row per node.
    pub embedding: Array2<f64>,
    /// Row-wise softmax of `embedding * W2`.
    pub probs: Array2<f64>,
}

#[derive(Debug, Clone)]
struct AdamState {
    m_w1: Array2<f64>,
    v_w1: Array2<f64>,
    m_w2: Array2<f64>,
    v_w2: Array2<f64>,
    step: u64,
}

#[derive(Debug, Clone)]
pub struct Gcn {
    /// Input-to-hidden weights, `num_features x hidden`. Public so tests can
    /// perturb entries for finite-difference checks.
    pub w1: Array2<f64>,
    /// Hidden-to-output weights, `hidden x num_outputs`.
    pub w2: Array2<f64>,
    cfg: GcnConfig,
    adam: AdamState,
    rng: ChaCha8Rng,
}

impl Gcn {
    /// Glorot-uniform initialization; `W1` is filled before `W2`, each in
    /// row-major order, so weights are reproducible from the seed.
    pub fn new(num_features: usize, cfg: GcnConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if num_features == 0 {
            return Err(OprError::Config("GCN needs at least one feature".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let glorot = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| {
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-limit..limit))
        };
        let w1 = glorot(num_features, cfg.hidden, &mut rng);
        let w2 = glorot(cfg.hidden, cfg.num_outputs, &mut rng);
        let adam = AdamState {
            m_w1: Array2::zeros(w1.dim()),
            v_w1: Array2::zeros(w1.dim()),
            m_w2: Array2::zeros(w2.dim()),
            v_w2: Array2::zeros(w2.dim()),
            step: 0,
        };
        Ok(Self {
            w1,
            w2,
            cfg,
            adam,
            rng,
        })
    }

    pub fn config(&self) -> &GcnConfig {
        &self.cfg
    }

    fn check_shapes(&self, x: &ArrayView2<'_, f64>, a_hat: &CsrMatrix, labels: Option<&[i32]>) -> Result<()> {
        if x.nrows() != a_hat.n {
            return Err(OprError::ShapeMismatch(format!(
                "{} feature rows vs {} graph nodes",
                x.nrows(),
                a_hat.n
            )));
        }
        if x.ncols() != self.w1.nrows() {
            return Err(OprError::ShapeMismatch(format!(
                "{} feature columns vs {} W1 rows",
                x.ncols(),
                self.w1.nrows()
            )));
        }
        if let Some(labels) = labels {
            if labels.len() != x.nrows() {
                return Err(OprError::ShapeMismatch(format!(
                    "{} labels vs {} nodes",
                    labels.len(),
                    x.nrows()
                )));
            }
            for &y in labels {
                if y >= self.cfg.num_outputs as i32 {
                    return Err(OprError::PredictionOutOfRange {
                        pred: y as usize,
                        num_classes: self.cfg.num_outputs,
                    });
                }
            }
        }
        Ok(())
    }

    /// Eval-mode forward pass (no dropout): embedding and probabilities.
    pub fn forward(&self, x: ArrayView2<'_, f64>, a_hat: &CsrMatrix) -> Result<GcnOutput> {
        self.check_shapes(&x, a_hat, None)?;
        let pass = self.forward_full(&x.to_owned(), a_hat, None);
        Ok(GcnOutput {
            embedding: pass.embedding,
            probs: pass.probs,
        })
    }

    /// Masked mean cross-entropy plus the `W1` penalty, under optional
    /// dropout masks. `labels[i] < 0` marks node `i` unlabeled.
    pub fn loss(
        &self,
        x: ArrayView2<'_, f64>,
        a_hat: &CsrMatrix,
        labels: &[i32],
        masks: Option<&DropoutMasks>,
    ) -> Result<f64> {
        self.check_shapes(&x, a_hat, Some(labels))?;
        let x_in = self.apply_input_mask(&x, masks);
        let pass = self.forward_full(&x_in, a_hat, masks);
        self.masked_loss(&pass.probs, labels)
    }

    /// Loss plus exact gradients of it with respect to `W1` and `W2`.
    pub fn gradients(
        &self,
        x: ArrayView2<'_, f64>,
        a_hat: &CsrMatrix,
        labels: &[i32],
        masks: Option<&DropoutMasks>,
    ) -> Result<(f64, Array2<f64>, Array2<f64>)> {
        self.check_shapes(&x, a_hat, Some(labels))?;
        let x_in = self.apply_input_mask(&x, masks);
        let pass = self.forward_full(&x_in, a_hat, masks);
        let loss = self.masked_loss(&pass.probs, labels)?;

        let n = x.nrows();
        let labeled: Vec<usize> = (0..n).filter(|&i| labels[i] >= 0).collect();
        let m = labeled.len() as f64;

        // d loss / d logits: (softmax - onehot) / m on labeled rows, else 0.
        let mut dlogits = Array2::<f64>::zeros(pass.probs.dim());
        for &i in &labeled {
            let y = labels[i] as usize;
            for k in 0..self.cfg.num_outputs {
                let indicator = if k == y { 1.0 } else { 0.0 };
                dlogits[[i, k]] = (pass.probs[[i, k]] - indicator) / m;
            }
        }

        let dw2 = pass.embedding.t().dot(&dlogits);
        let dembed = dlogits.dot(&self.w2.t());
        // A_hat is symmetric, so the adjoint is another multiply by it.
        let mut dhidden = a_hat.matmul_dense(dembed.view());
        if let Some(masks) = masks {
            dhidden *= &masks.hidden;
        }
        // ReLU subgradient: zero at zero.
        let dz1 = &dhidden * &pass.z1.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        let ds1 = a_hat.matmul_dense(dz1.view());
        let mut dw1 = x_in.t().dot(&ds1);
        dw1.scaled_add(self.cfg.weight_decay, &self.w1);

        Ok((loss, dw1, dw2))
    }

    /// One Adam step on the current graph. Samples fresh dropout masks from
    /// the network's RNG (input mask first, then hidden mask, both row-major)
    /// and returns the training loss under those masks.
    pub fn train_step(
        &mut self,
        x: ArrayView2<'_, f64>,
        a_hat: &CsrMatrix,
        labels: &[i32],
    ) -> Result<f64> {
        let masks = self.sample_masks(x.nrows(), x.ncols());
        let (loss, dw1, dw2) = self.gradients(x, a_hat, labels, masks.as_ref())?;
        if !loss.is_finite() {
            return Err(OprError::NonFinite("GCN training loss"));
        }
        self.adam.step += 1;
        let t = self.adam.step;
        adam_update(
            &mut self.w1,
            &mut self.adam.m_w1,
            &mut self.adam.v_w1,
            &dw1,
            self.cfg.learning_rate,
            t,
        );
        adam_update(
            &mut self.w2,
            &mut self.adam.m_w2,
            &mut self.adam.v_w2,
            &dw2,
            self.cfg.learning_rate,
            t,
        );
        Ok(loss)
    }

    /// Draw dropout masks for an `n x d` input; `None` when dropout is 0.
    pub fn sample_masks(&mut self, n: usize, d: usize) -> Option<DropoutMasks> {
        let p = self.cfg.dropout;
        if p == 0.0 {
            return None;
        }
        let scale = 1.0 / (1.0 - p);
        let draw = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| {
            Array2::from_shape_fn((rows, cols), |_| {
                if rng.gen::<f64>() < p {
                    0.0
                } else {
                    scale
                }
            })
        };
        let input = draw(n, d, &mut self.rng);
        let hidden = draw(n, self.cfg.hidden, &mut self.rng);
        Some(DropoutMasks { input, hidden })
    }

    fn apply_input_mask(&self, x: &ArrayView2<'_, f64>, masks: Option<&DropoutMasks>) -> Array2<f64> {
        match masks {
            Some(m) => x.to_owned() * &m.input,
            None => x.to_owned(),
        }
    }

    fn forward_full(&self, x_in: &Array2<f64>, a_hat: &CsrMatrix, masks: Option<&DropoutMasks>) -> ForwardPass {
        // X W1 before A_hat: the dense product shrinks to `hidden` columns,
        // after which the sparse multiply is cheap.
        let s1 = x_in.dot(&self.w1);
        let z1 = a_hat.matmul_dense(s1.view());
        let mut h = z1.mapv(|v| v.max(0.0));
        if let Some(masks) = masks {
            h *= &masks.hidden;
        }
        let embedding = a_hat.matmul_dense(h.view());
        let logits = embedding.dot(&self.w2);
        let probs = row_softmax(&logits);
        ForwardPass {
            z1,
            embedding,
            probs,
        }
    }

    fn masked_loss(&self, probs: &Array2<f64>, labels: &[i32]) -> Result<f64> {
        let mut total = 0.0;
        let mut count = 0usize;
        for (i, &y) in labels.iter().enumerate() {
            if y < 0 {
                continue;
            }
            total += -(probs[[i, y as usize]].max(f64::MIN_POSITIVE)).ln();
            count += 1;
        }
        if count == 0 {
            return Err(OprError::EmptyLabelMask);
        }
        let penalty = 0.5 * self.cfg.weight_decay * self.w1.iter().map(|w| w * w).sum::<f64>();
        Ok(total / count as f64 + penalty)
    }
}

struct ForwardPass {
    z1: Array2<f64>,
    embedding: Array2<f64>,
    probs: Array2<f64>,
}

/// A GCN bound to a growing observation graph and a per-node label vector.
///
/// The step cycle is uniform across all users of this type (the rewarded
/// online GCN policy and the GCN-backed imputer): [`OnlineGcnModel::absorb`]
/// appends the node unlabeled and runs `train_steps` optimizer steps; the
/// label, if one is ever learned, is set afterwards and influences training
/// from the next absorb on. Training is skipped while no node is labeled.
#[derive(Debug, Clone)]
pub struct OnlineGcnModel {
    graph: GrowingGraph,
    labels: Vec<i32>,
    pub(crate) gcn: Gcn,
    train_steps: usize,
}

impl OnlineGcnModel {
    pub fn new(graph: GrowingGraph, cfg: GcnConfig, train_steps: usize, seed: u64) -> Result<Self> {
        if !graph.is_empty() {
            return Err(OprError::Config("online GCN needs an empty starting graph".into()));
        }
        let gcn = Gcn::new(graph.num_features(), cfg, seed)?;
        Ok(Self {
            graph,
            labels: Vec::new(),
            gcn,
            train_steps,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_outputs(&self) -> usize {
        self.gcn.config().num_outputs
    }

    pub fn labels(&self) -> &[i32] {
        &self.labels
    }

    pub fn labeled_count(&self) -> usize {
        self.labels.iter().filter(|&&y| y >= 0).count()
    }

    /// Append the observation unlabeled and train. Returns the node index.
    pub fn absorb(&mut self, x: ndarray::ArrayView1<'_, f64>, dataset_row: usize) -> Result<usize> {
        let node = self.graph.append(x, dataset_row)?;
        self.labels.push(-1);
        self.train()?;
        Ok(node)
    }

    /// Label a node (0-based class); takes effect from the next training.
    pub fn set_label(&mut self, node: usize, label: usize) -> Result<()> {
        if node >= self.labels.len() {
            return Err(OprError::StepOutOfRange(node));
        }
        if label >= self.num_outputs() {
            return Err(OprError::PredictionOutOfRange {
                pred: label,
                num_classes: self.num_outputs(),
            });
        }
        self.labels[node] = label as i32;
        Ok(())
    }

    fn train(&mut self) -> Result<()> {
        if self.labeled_count() == 0 {
            return Ok(());
        }
        let a_hat = self.graph.normalized()?;
        let x = self.graph.features();
        for _ in 0..self.train_steps {
            self.gcn.train_step(x, &a_hat, &self.labels)?;
        }
        Ok(())
    }

    /// Eval-mode embedding and probabilities over all nodes so far.
    pub fn forward(&self) -> Result<GcnOutput> {
        if self.is_empty() {
            return Err(OprError::EmptyDataset);
        }
        self.gcn.forward(self.graph.features(), &self.graph.normalized()?)
    }

    /// Eval-mode class probabilities of a single node.
    pub fn probs_of(&self, node: usize) -> Result<Vec<f64>> {
        if node >= self.len() {
            return Err(OprError::StepOutOfRange(node));
        }
        let out = self.forward()?;
        Ok(out.probs.row(node).to_vec())
    }
}

fn row_softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

fn adam_update(
    w: &mut Array2<f64>,
    m: &mut Array2<f64>,
    v: &mut Array2<f64>,
    g: &Array2<f64>,
    lr: f64,
    step: u64,
) {
    let b1t = 1.0 - ADAM_BETA1.powi(step as i32);
    let b2t = 1.0 - ADAM_BETA2.powi(step as i32);
    ndarray::Zip::from(w)
        .and(m)
        .and(v)
        .and(g)
        .for_each(|w, m, v, &g| {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = *m / b1t;
            let v_hat = *v / b2t;
            *w -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::normalized_adjacency;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn single_node_gcn() -> (Gcn, Array2<f64>, CsrMatrix) {
        let mut gcn = Gcn::new(
            2,
            GcnConfig {
                hidden: 2,
                num_outputs: 2,
                learning_rate: 0.01,
                weight_decay: 0.0,
                dropout: 0.0,
            },
            0,
        )
        .unwrap();
        gcn.w1 = array![[1.0, -1.0], [2.0, 0.0]];
        gcn.w2 = array![[1.0, -1.0], [1.0, 1.0]];
        let x = array![[1.0, 0.5]];
        let a_hat = normalized_adjacency(1, &[]).unwrap();
        (gcn, x, a_hat)
    }

    #[test]
    fn single_node_forward_matches_hand_computation() {
        let (gcn, x, a_hat) = single_node_gcn();
        // S1 = [2, -1]; relu -> [2, 0]; logits = [2, -2].
        let out = gcn.forward(x.view(), &a_hat).unwrap();
        assert_abs_diff_eq!(out.embedding[[0, 0]], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out.embedding[[0, 1]], 0.0, epsilon = 1e-15);
        let p0 = 1.0 / (1.0 + (-4.0f64).exp());
        assert_abs_diff_eq!(out.probs[[0, 0]], p0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.probs[[0, 1]], 1.0 - p0, epsilon = 1e-12);
    }

    #[test]
    fn loss_on_single_node_is_log1p_exp() {
        let (gcn, x, a_hat) = single_node_gcn();
        let loss = gcn.loss(x.view(), &a_hat, &[0], None).unwrap();
        assert_abs_diff_eq!(loss, (1.0 + (-4.0f64).exp()).ln(), epsilon = 1e-12);
    }

    #[test]
    fn uniform_probabilities_give_ln_k_loss() {
        let (mut gcn, x, a_hat) = single_node_gcn();
        gcn.w2 = Array2::zeros((2, 2));
        let loss = gcn.loss(x.view(), &a_hat, &[1], None).unwrap();
        assert_abs_diff_eq!(loss, 2.0f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn weight_decay_adds_half_squared_frobenius_of_w1_only() {
        let (mut gcn, x, a_hat) = single_node_gcn();
        let base = gcn.loss(x.view(), &a_hat, &[0], None).unwrap();
        gcn.cfg.weight_decay = 0.1;
        let with_wd = gcn.loss(x.view(), &a_hat, &[0], None).unwrap();
        // ||W1||_F^2 = 1 + 1 + 4 + 0 = 6; W2 does not contribute.
        assert_abs_diff_eq!(with_wd - base, 0.05 * 6.0, epsilon = 1e-12);
    }

    #[test]
    fn all_unlabeled_is_an_error() {
        let (gcn, x, a_hat) = single_node_gcn();
        assert!(matches!(
            gcn.loss(x.view(), &a_hat, &[-1], None).unwrap_err(),
            OprError::EmptyLabelMask
        ));
    }

    fn toy_instance(seed: u64) -> (Gcn, Array2<f64>, CsrMatrix, Vec<i32>) {
        let gcn = Gcn::new(
            3,
            GcnConfig {
                hidden: 4,
                num_outputs: 3,
                learning_rate: 0.01,
                weight_decay: 0.02,
                dropout: 0.0,
            },
            seed,
        )
        .unwrap();
        let x = array![
            [0.2, -0.1, 0.5],
            [1.0, 0.3, -0.2],
            [-0.4, 0.8, 0.1],
            [0.0, -0.6, 0.9],
        ];
        let a_hat = normalized_adjacency(4, &[(0, 1, 0.8), (1, 2, 0.5), (2, 3, 1.0)]).unwrap();
        let labels = vec![0, -1, 2, 1];
        (gcn, x, a_hat, labels)
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let (mut gcn, x, a_hat, labels) = toy_instance(5);
        let (_, dw1, dw2) = gcn.gradients(x.view(), &a_hat, &labels, None).unwrap();
        let h = 1e-5;
        for (r, c) in [(0usize, 0usize), (1, 2), (2, 3)] {
            let orig = gcn.w1[[r, c]];
            gcn.w1[[r, c]] = orig + h;
            let up = gcn.loss(x.view(), &a_hat, &labels, None).unwrap();
            gcn.w1[[r, c]] = orig - h;
            let down = gcn.loss(x.view(), &a_hat, &labels, None).unwrap();
            gcn.w1[[r, c]] = orig;
            let fd = (up - down) / (2.0 * h);
            assert_abs_diff_eq!(dw1[[r, c]], fd, epsilon = 1e-7);
        }
        for (r, c) in [(0usize, 0usize), (2, 1), (3, 2)] {
            let orig = gcn.w2[[r, c]];
            gcn.w2[[r, c]] = orig + h;
            let up = gcn.loss(x.view(), &a_hat, &labels, None).unwrap();
            gcn.w2[[r, c]] = orig - h;
            let down = gcn.loss(x.view(), &a_hat, &labels, None).unwrap();
            gcn.w2[[r, c]] = orig;
            let fd = (up - down) / (2.0 * h);
            assert_abs_diff_eq!(dw2[[r, c]], fd, epsilon = 1e-7);
        }
    }

    #[test]
    fn gradients_under_fixed_dropout_masks_match_finite_differences() {
        let (mut gcn, x, a_hat, labels) = toy_instance(9);
        gcn.cfg.dropout = 0.5;
        let masks = gcn.sample_masks(4, 3).unwrap();
        let (_, dw1, _) = gcn
            .gradients(x.view(), &a_hat, &labels, Some(&masks))
            .unwrap();
        let h = 1e-5;
        let orig = gcn.w1[[1, 1]];
        gcn.w1[[1, 1]] = orig + h;
        let up = gcn.loss(x.view(), &a_hat, &labels, Some(&masks)).unwrap();
        gcn.w1[[1, 1]] = orig - h;
        let down = gcn.loss(x.view(), &a_hat, &labels, Some(&masks)).unwrap();
        gcn.w1[[1, 1]] = orig;
        assert_abs_diff_eq!(dw1[[1, 1]], (up - down) / (2.0 * h), epsilon = 1e-7);
    }

    #[test]
    fn first_adam_step_follows_the_update_rule() {
        let (mut gcn, x, a_hat, labels) = toy_instance(11);
        let (_, dw1, dw2) = gcn.gradients(x.view(), &a_hat, &labels, None).unwrap();
        let w1_before = gcn.w1.clone();
        let w2_before = gcn.w2.clone();
        gcn.train_step(x.view(), &a_hat, &labels).unwrap();
        // At t = 1 the bias corrections cancel: step = lr * g / (|g| + eps).
        for ((&w_new, &w_old), &g) in gcn.w1.iter().zip(w1_before.iter()).zip(dw1.iter()) {
            let expected = w_old - 0.01 * g / (g.abs() + ADAM_EPS);
            assert_abs_diff_eq!(w_new, expected, epsilon = 1e-12);
        }
        for ((&w_new, &w_old), &g) in gcn.w2.iter().zip(w2_before.iter()).zip(dw2.iter()) {
            let expected = w_old - 0.01 * g / (g.abs() + ADAM_EPS);
            assert_abs_diff_eq!(w_new, expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn training_reduces_loss_on_a_separable_toy_graph() {
        let mut gcn = Gcn::new(
            2,
            GcnConfig {
                hidden: 8,
                num_outputs: 2,
                learning_rate: 0.05,
                weight_decay: 0.0,
                dropout: 0.0,
            },
            3,
        )
        .unwrap();
        let x = array![[1.0, 0.0], [0.9, 0.1], [0.0, 1.0], [0.1, 0.9]];
        let a_hat = normalized_adjacency(4, &[(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        let labels = vec![0, 0, 1, 1];
        let first = gcn.loss(x.view(), &a_hat, &labels, None).unwrap();
        for _ in 0..50 {
            gcn.train_step(x.view(), &a_hat, &labels).unwrap();
        }
        let last = gcn.loss(x.view(), &a_hat, &labels, None).unwrap();
        assert!(last < first / 2.0, "loss {first} -> {last}");
    }

    #[test]
    fn dropout_masks_use_inverted_scaling() {
        let mut gcn = Gcn::new(
            3,
            GcnConfig {
                dropout: 0.5,
                ..GcnConfig::default()
            },
            21,
        )
        .unwrap();
        let masks = gcn.sample_masks(10, 3).unwrap();
        for &v in masks.input.iter().chain(masks.hidden.iter()) {
            assert!(v == 0.0 || v == 2.0);
        }
        let kept = masks.input.iter().filter(|&&v| v != 0.0).count();
        assert!(kept > 0 && kept < masks.input.len());
    }

    #[test]
    fn zero_dropout_draws_no_masks() {
        let mut gcn = Gcn::new(
            3,
            GcnConfig {
                dropout: 0.0,
                ..GcnConfig::default()
            },
            21,
        )
        .unwrap();
        assert!(gcn.sample_masks(10, 3).is_none());
    }

    #[test]
    fn online_model_defers_training_until_a_label_exists() {
        let graph = GrowingGraph::new(crate::graph::ObservationGraph::knn(2).unwrap(), 2).unwrap();
        let mut model = OnlineGcnModel::new(
            graph,
            GcnConfig {
                hidden: 4,
                num_outputs: 2,
                dropout: 0.0,
                ..GcnConfig::default()
            },
            3,
            1,
        )
        .unwrap();
        let w1_init = model.gcn.w1.clone();
        model.absorb(array![1.0, 0.0].view(), 0).unwrap();
        model.absorb(array![0.0, 1.0].view(), 1).unwrap();
        assert_eq!(model.gcn.w1, w1_init, "trained with no labeled nodes");
        model.set_label(0, 0).unwrap();
        model.absorb(array![0.9, 0.1].view(), 2).unwrap();
        assert_ne!(model.gcn.w1, w1_init);
        assert_eq!(model.labeled_count(), 1);
        assert_eq!(model.labels(), &[0, -1, -1]);
    }

    #[test]
    fn probs_of_returns_the_forward_row() {
        let graph = GrowingGraph::new(crate::graph::ObservationGraph::knn(2).unwrap(), 2).unwrap();
        let mut model = OnlineGcnModel::new(
            graph,
            GcnConfig {
                hidden: 4,
                num_outputs: 2,
                dropout: 0.0,
                ..GcnConfig::default()
            },
            2,
            5,
        )
        .unwrap();
        model.absorb(array![1.0, 0.0].view(), 0).unwrap();
        model.set_label(0, 1).unwrap();
        model.absorb(array![0.2, 0.8].view(), 1).unwrap();
        let all = model.forward().unwrap();
        let row = model.probs_of(1).unwrap();
        assert_eq!(row, all.probs.row(1).to_vec());
        assert_abs_diff_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(model.probs_of(2).is_err());
    }

    #[test]
    fn same_seed_reproduces_training_exactly() {
        let run = || {
            let mut gcn = Gcn::new(3, GcnConfig::default(), 77).unwrap();
            let x = array![[0.5, 0.1, 0.2], [0.3, 0.9, 0.0], [0.1, 0.2, 0.8]];
            let a_hat = normalized_adjacency(3, &[(0, 1, 1.0), (1, 2, 0.5)]).unwrap();
            let labels = vec![0, 1, -1];
            let mut losses = Vec::new();
            for _ in 0..5 {
                losses.push(gcn.train_step(x.view(), &a_hat, &labels).unwrap());
            }
            (losses, gcn.w1, gcn.w2)
        };
        let (la, wa1, wa2) = run();
        let (lb, wb1, wb2) = run();
        assert_eq!(la, lb);
        assert_eq!(wa1, wb1);
        assert_eq!(wa2, wb2);
    }
}
