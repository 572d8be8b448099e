use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, ExactOracle, Objective, ObjectiveMetadata};
use crate::error::{check_dimension, Error, Result};

/// A frozen feed-forward classifier: affine layers with `tanh` between them
/// and raw logits at the output.
///
/// On disk this is JSON:
///
/// ```json
/// { "layer_sizes": [8, 3],
///   "weights": [[w_00, w_01, ..., w_07, w_10, ...]],
///   "biases":  [[b_0, b_1, b_2]] }
/// ```
///
/// `weights[l]` is row-major with shape `layer_sizes[l+1] × layer_sizes[l]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

/// Borrowed view of one affine layer.
#[derive(Clone, Copy, Debug)]
pub struct MlpLayer<'a> {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: &'a [f64],
    pub bias: &'a [f64],
}

impl Mlp {
    pub fn new(
        layer_sizes: Vec<usize>,
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let mlp = Self {
            layer_sizes,
            weights,
            biases,
        };
        mlp.validate()?;
        Ok(mlp)
    }

    fn validate(&self) -> Result<()> {
        let sizes = &self.layer_sizes;
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Data(
                "classifier needs at least two nonzero layer sizes".into(),
            ));
        }
        if *sizes.last().unwrap() < 2 {
            return Err(Error::Data("classifier needs at least two classes".into()));
        }
        let layers = sizes.len() - 1;
        if self.weights.len() != layers || self.biases.len() != layers {
            return Err(Error::Data(format!(
                "expected {layers} weight and bias blocks, got {} and {}",
                self.weights.len(),
                self.biases.len()
            )));
        }
        for l in 0..layers {
            if self.weights[l].len() != sizes[l] * sizes[l + 1]
                || self.biases[l].len() != sizes[l + 1]
            {
                return Err(Error::Data(format!(
                    "layer {l} has wrong weight or bias length"
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mlp: Mlp = serde_json::from_str(text).map_err(|e| Error::Data(e.to_string()))?;
        mlp.validate()?;
        Ok(mlp)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("classifier serializes")
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn classes(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn layer(&self, l: usize) -> MlpLayer<'_> {
        MlpLayer {
            inputs: self.layer_sizes[l],
            outputs: self.layer_sizes[l + 1],
            weights: &self.weights[l],
            bias: &self.biases[l],
        }
    }

    fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// Forward pass keeping every layer's output (post-activation for hidden layers).
    fn forward_all(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.num_layers() + 1);
        acts.push(input.to_vec());
        for l in 0..self.num_layers() {
            let layer = self.layer(l);
            let prev = &acts[l];
            let mut out: Vec<f64> = (0..layer.outputs)
                .map(|o| {
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    layer.bias[o] + row.iter().zip(prev).map(|(w, v)| w * v).sum::<f64>()
                })
                .collect();
            if l + 1 < self.num_layers() {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(out);
        }
        acts
    }

    pub fn logits(&self, input: &[f64]) -> Vec<f64> {
        self.forward_all(input).pop().unwrap()
    }

    pub fn predict(&self, input: &[f64]) -> usize {
        argmax(&self.logits(input))
    }

    /// ∂(Σ_k seed_k·logit_k)/∂input by backpropagation.
    fn input_gradient(&self, input: &[f64], seed: &[f64]) -> Vec<f64> {
        let acts = self.forward_all(input);
        let mut delta = seed.to_vec();
        for l in (0..self.num_layers()).rev() {
            let layer = self.layer(l);
            let mut prev = vec![0.0; layer.inputs];
            for (o, d) in delta.iter().enumerate() {
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += d * w;
                }
            }
            if l > 0 {
                // acts[l] is tanh output of the previous layer
                for (p, a) in prev.iter_mut().zip(&acts[l]) {
                    *p *= 1.0 - a * a;
                }
            }
            delta = prev;
        }
        delta
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Universal untargeted C&W perturbation objective over M images:
///
/// `f(δ) = (λ/M)·Σ_i max(z_{i,y_i} − max_{j≠y_i} z_{i,j}, −κ) + ‖δ‖²`
///
/// where `z_i = logits(x_i + δ)`. ξ is an image index, so
/// `F(δ; i) = λ·cw_i(δ) + ‖δ‖²`.
#[derive(Clone, Debug)]
pub struct CwAttack {
    classifier: Mlp,
    images: Dataset,
    classes: Vec<usize>,
    lambda: f64,
    kappa: f64,
    metadata: ObjectiveMetadata,
}

impl CwAttack {
    pub fn new(classifier: Mlp, images: Dataset, lambda: f64, kappa: f64) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::invalid("images", "need at least one image"));
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(
                "lambda",
                format!("must be positive, got {lambda}"),
            ));
        }
        if !(kappa >= 0.0) || !kappa.is_finite() {
            return Err(Error::invalid(
                "kappa",
                format!("must be nonnegative, got {kappa}"),
            ));
        }
        check_dimension(classifier.input_dim(), images.dimension)?;
        let classes = images
            .labels
            .iter()
            .map(|y| {
                if y.fract() != 0.0 || *y < 0.0 || *y as usize >= classifier.classes() {
                    Err(Error::invalid(
                        "labels",
                        format!("`{y}` is not a class index"),
                    ))
                } else {
                    Ok(*y as usize)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            classifier,
            images,
            classes,
            lambda,
            kappa,
            metadata: ObjectiveMetadata::default(),
        })
    }

    /// Builds the attack from a row-major `M × d` image matrix.
    pub fn from_parts(
        classifier: Mlp,
        images: Vec<f64>,
        labels: Vec<usize>,
        lambda: f64,
        kappa: f64,
    ) -> Result<Self> {
        let d = classifier.input_dim();
        if images.len() != labels.len() * d {
            return Err(Error::invalid(
                "images",
                format!(
                    "{} values do not match {} labels of width {d}",
                    images.len(),
                    labels.len()
                ),
            ));
        }
        let labels = labels.into_iter().map(|c| c as f64).collect();
        Self::new(classifier, Dataset::new(images, labels, d)?, lambda, kappa)
    }

    pub fn classifier(&self) -> &Mlp {
        &self.classifier
    }

    pub fn num_images(&self) -> usize {
        self.images.len()
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    fn perturbed(&self, i: usize, delta: &[f64]) -> Vec<f64> {
        self.images
            .row(i)
            .iter()
            .zip(delta)
            .map(|(a, b)| a + b)
            .collect()
    }

    /// Unclamped margin `z_true − max_{j≠true} z_j` and the runner-up class.
    fn margin_and_rival(&self, i: usize, delta: &[f64]) -> (f64, usize) {
        let z = self.classifier.logits(&self.perturbed(i, delta));
        let t = self.classes[i];
        let mut rival = if t == 0 { 1 } else { 0 };
        for (j, v) in z.iter().enumerate() {
            if j != t && *v > z[rival] {
                rival = j;
            }
        }
        (z[t] - z[rival], rival)
    }

    /// Unclamped per-image margins; negative means misclassified.
    pub fn margins(&self, delta: &[f64]) -> Vec<f64> {
        (0..self.num_images())
            .map(|i| self.margin_and_rival(i, delta).0)
            .collect()
    }

    pub fn cw_loss(&self, i: usize, delta: &[f64]) -> f64 {
        self.margin_and_rival(i, delta).0.max(-self.kappa)
    }

    pub fn misclassified_count(&self, delta: &[f64]) -> usize {
        (0..self.num_images())
            .filter(|&i| self.classifier.predict(&self.perturbed(i, delta)) != self.classes[i])
            .count()
    }
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

impl Objective for CwAttack {
    type Sample = usize;

    fn dimension(&self) -> usize {
        self.images.dimension
    }

    fn metadata(&self) -> &ObjectiveMetadata {
        &self.metadata
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        rng.random_range(0..self.images.len())
    }

    fn evaluate(&self, delta: &[f64], sample: &usize) -> Result<f64> {
        check_dimension(self.images.dimension, delta.len())?;
        if *sample >= self.images.len() {
            return Err(Error::IndexOutOfRange {
                index: *sample,
                dimension: self.images.len(),
            });
        }
        Ok(self.lambda * self.cw_loss(*sample, delta) + sq_norm(delta))
    }

    fn exact(&self) -> Option<&dyn ExactOracle<usize>> {
        Some(self)
    }
}

/// Gradients are exact away from the clamp and the runner-up switch.
impl ExactOracle<usize> for CwAttack {
    fn value(&self, delta: &[f64]) -> f64 {
        let m = self.num_images();
        let loss: f64 = (0..m).map(|i| self.cw_loss(i, delta)).sum();
        self.lambda * loss / m as f64 + sq_norm(delta)
    }

    fn gradient(&self, delta: &[f64]) -> Vec<f64> {
        let m = self.num_images();
        let mut g: Vec<f64> = delta.iter().map(|v| 2.0 * v).collect();
        for i in 0..m {
            if let Some(gi) = self.loss_gradient(i, delta) {
                for (a, b) in g.iter_mut().zip(gi) {
                    *a += self.lambda * b / m as f64;
                }
            }
        }
        g
    }

    fn sample_gradient(&self, delta: &[f64], sample: &usize) -> Option<Vec<f64>> {
        let mut g: Vec<f64> = delta.iter().map(|v| 2.0 * v).collect();
        if let Some(gi) = self.loss_gradient(*sample, delta) {
            for (a, b) in g.iter_mut().zip(gi) {
                *a += self.lambda * b;
            }
        }
        Some(g)
    }
}

impl CwAttack {
    /// Gradient of the clamped margin, `None` where the clamp is active.
    fn loss_gradient(&self, i: usize, delta: &[f64]) -> Option<Vec<f64>> {
        let (margin, rival) = self.margin_and_rival(i, delta);
        if margin <= -self.kappa {
            return None;
        }
        let mut seed = vec![0.0; self.classifier.classes()];
        seed[self.classes[i]] = 1.0;
        seed[rival] = -1.0;
        Some(
            self.classifier
                .input_gradient(&self.perturbed(i, delta), &seed),
        )
    }
}
