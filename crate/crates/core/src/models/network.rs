use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndcore::{
    affine_forward, affine_param_grads, dropout, init_bias, init_weights, relu_backward, relu_forward, DropoutMask,
    Matrix, Rng,
};

use super::loss::{kl_gaussian, mse_loss};
use super::{ArchitectureConfig, ModelKind, PathwayMask};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `fan_in x fan_out`
    pub weight: Matrix,
    /// `1 x fan_out`
    pub bias: Matrix,
}

impl Dense {
    pub fn init(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Result<Self> {
        Ok(Self { weight: init_weights(fan_in, fan_out, rng)?, bias: init_bias(fan_out) })
    }

    pub fn fan_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.cols()
    }
}

/// Feed-forward stack: ReLU and dropout after every layer except the last,
/// which stays linear.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LayerStack {
    pub layers: Vec<Dense>,
}

#[derive(Clone, Debug, Default)]
pub(crate) struct StackCache {
    inputs: Vec<Matrix>,
    pre_activations: Vec<Matrix>,
    masks: Vec<DropoutMask>,
}

impl LayerStack {
    pub fn init(input: usize, widths: &[usize], rng: &mut Rng) -> Result<Self> {
        let mut layers = Vec::with_capacity(widths.len());
        let mut fan_in = input;
        for &w in widths {
            layers.push(Dense::init(fan_in, w, rng)?);
            fan_in = w;
        }
        Ok(Self { layers })
    }

    pub fn input_width(&self) -> usize {
        self.layers.first().map_or(0, Dense::fan_in)
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, Dense::fan_out)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub(crate) fn check_chain(&self, what: &str) -> Result<()> {
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].fan_out() != pair[1].fan_in() {
                return Err(Error::shape(
                    "LayerStack",
                    format!(
                        "{what}: layer {i} emits {} but layer {} takes {}",
                        pair[0].fan_out(),
                        i + 1,
                        pair[1].fan_in()
                    ),
                ));
            }
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.bias.shape() != (1, l.fan_out()) {
                return Err(Error::shape("LayerStack", format!("{what}: layer {i} bias shape")));
            }
        }
        Ok(())
    }

    pub fn forward(&self, x: &Matrix, dropout_rate: f64, training: bool, rng: &mut Rng) -> Result<Matrix> {
        Ok(self.forward_cached(x, dropout_rate, training, rng)?.0)
    }

    pub(crate) fn forward_cached(
        &self,
        x: &Matrix,
        dropout_rate: f64,
        training: bool,
        rng: &mut Rng,
    ) -> Result<(Matrix, StackCache)> {
        if x.cols() != self.input_width() {
            return Err(Error::shape(
                "LayerStack::forward",
                format!("input width {} but stack expects {}", x.cols(), self.input_width()),
            ));
        }
        let mut cache = StackCache::default();
        let mut h = x.clone();
        let last = self.layers.len().saturating_sub(1);
        for (i, layer) in self.layers.iter().enumerate() {
            let pre = affine_forward(&h, &layer.weight, &layer.bias)?;
            cache.inputs.push(h);
            if i == last {
                h = pre;
            } else {
                let act = relu_forward(&pre);
                let (dropped, mask) = dropout(&act, dropout_rate, training, rng)?;
                cache.pre_activations.push(pre);
                cache.masks.push(mask);
                h = dropped;
            }
        }
        Ok((h, cache))
    }

    /// Parameter gradients (W, b per layer, in layer order) and, when asked,
    /// the gradient w.r.t. the stack input.
    pub(crate) fn backward(
        &self,
        cache: &StackCache,
        upstream: &Matrix,
        want_input_grad: bool,
    ) -> Result<(Vec<Matrix>, Option<Matrix>)> {
        let n = self.layers.len();
        let mut grads = vec![Matrix::zeros(0, 0); 2 * n];
        let mut g = upstream.clone();
        for i in (0..n).rev() {
            if i + 1 < n {
                g = cache.masks[i].backward(&g)?;
                g = relu_backward(&cache.pre_activations[i], &g)?;
            }
            let (gw, gb) = affine_param_grads(&cache.inputs[i], &g)?;
            grads[2 * i] = gw;
            grads[2 * i + 1] = gb;
            if i > 0 || want_input_grad {
                g = g.matmul_t(&self.layers[i].weight)?;
            }
        }
        Ok((grads, want_input_grad.then_some(g)))
    }

    fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Matrix> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    fn tensors(&self) -> impl Iterator<Item = &Matrix> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }
}

/// All learnable tensors of an autoencoder.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub pathway_encoders: Vec<LayerStack>,
    pub encoder: LayerStack,
    pub decoder: LayerStack,
}

impl ModelParams {
    pub fn param_count(&self) -> usize {
        self.pathway_encoders.iter().map(LayerStack::param_count).sum::<usize>()
            + self.encoder.param_count()
            + self.decoder.param_count()
    }

    /// Every tensor in canonical order: pathway stacks, encoder, decoder.
    pub fn tensors(&self) -> Vec<&Matrix> {
        self.pathway_encoders
            .iter()
            .flat_map(LayerStack::tensors)
            .chain(self.encoder.tensors())
            .chain(self.decoder.tensors())
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let Self { pathway_encoders, encoder, decoder } = self;
        pathway_encoders
            .iter_mut()
            .flat_map(LayerStack::tensors_mut)
            .chain(encoder.tensors_mut())
            .chain(decoder.tensors_mut())
            .collect()
    }
}

pub fn count_params(params: &ModelParams) -> usize {
    params.param_count()
}

/// Initializes parameters for `arch` over `gene_count` input genes.
pub fn build_model(
    arch: &ArchitectureConfig,
    gene_count: usize,
    masks: &[PathwayMask],
    rng: &mut Rng,
) -> Result<ModelParams> {
    arch.validate()?;
    if gene_count == 0 {
        return Err(Error::Config("model needs at least one gene".into()));
    }
    let mut params = ModelParams::default();
    let encoder_input = if arch.kind.uses_pathways() {
        if masks.is_empty() {
            return Err(Error::Config(format!("{} requires a non-empty pathway set", arch.kind)));
        }
        for mask in masks {
            mask.check(gene_count)?;
            let mut widths = arch.pathway_hidden_sizes.clone();
            widths.push(1);
            params.pathway_encoders.push(LayerStack::init(mask.len(), &widths, rng)?);
        }
        masks.len()
    } else {
        gene_count
    };
    let mut enc_widths = arch.encoder_layer_sizes.clone();
    if arch.kind.is_variational() {
        *enc_widths.last_mut().expect("validated non-empty") *= 2;
    }
    params.encoder = LayerStack::init(encoder_input, &enc_widths, rng)?;
    let mut dec_widths = arch.decoder_hidden();
    dec_widths.push(gene_count);
    params.decoder = LayerStack::init(arch.latent_dim(), &dec_widths, rng)?;
    Ok(params)
}

/// `mu + exp(logvar / 2) * eps` with standard-normal `eps`; returns `(z, eps)`.
pub fn reparameterize(mu: &Matrix, logvar: &Matrix, rng: &mut Rng) -> Result<(Matrix, Matrix)> {
    if mu.shape() != logvar.shape() {
        return Err(Error::shape("reparameterize", format!("{:?} vs {:?}", mu.shape(), logvar.shape())));
    }
    if !mu.all_finite() || !logvar.all_finite() {
        return Err(Error::Numeric("non-finite variational parameters".into()));
    }
    let eps = Matrix::new(mu.rows(), mu.cols(), (0..mu.len()).map(|_| rng.normal()).collect())?;
    let z = Matrix::new(
        mu.rows(),
        mu.cols(),
        mu.as_slice()
            .iter()
            .zip(logvar.as_slice())
            .zip(eps.as_slice())
            .map(|((&m, &lv), &e)| m + (0.5 * lv).exp() * e)
            .collect(),
    )?;
    Ok((z, eps))
}

/// Latent encoder output.
#[derive(Clone, Debug)]
pub enum Encoded {
    Deterministic(Matrix),
    Variational { mu: Matrix, logvar: Matrix },
}

impl Encoded {
    /// `z` for deterministic encoders, the posterior mean otherwise.
    pub fn representation(&self) -> &Matrix {
        match self {
            Encoded::Deterministic(z) => z,
            Encoded::Variational { mu, .. } => mu,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ForwardOutputs {
    pub a: Option<Matrix>,
    pub z: Matrix,
    pub mu: Option<Matrix>,
    pub logvar: Option<Matrix>,
    pub x_hat: Matrix,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub mse: f64,
    pub kl: f64,
}

/// A configured autoencoder with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub arch: ArchitectureConfig,
    pub masks: Vec<PathwayMask>,
    pub gene_names: Vec<String>,
    pub params: ModelParams,
}

struct ForwardTrace {
    outputs: ForwardOutputs,
    pathway_caches: Vec<StackCache>,
    encoder_cache: StackCache,
    decoder_cache: StackCache,
    eps: Option<Matrix>,
}

impl Model {
    pub fn build(arch: ArchitectureConfig, gene_count: usize, masks: Vec<PathwayMask>, rng: &mut Rng) -> Result<Self> {
        let masks = if arch.kind.uses_pathways() { masks } else { Vec::new() };
        let params = build_model(&arch, gene_count, &masks, rng)?;
        Ok(Self { arch, masks, gene_names: Vec::new(), params })
    }

    pub fn with_gene_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.gene_count() {
            return Err(Error::shape(
                "Model::with_gene_names",
                format!("{} names for {} genes", names.len(), self.gene_count()),
            ));
        }
        self.gene_names = names;
        Ok(self)
    }

    pub fn kind(&self) -> ModelKind {
        self.arch.kind
    }

    pub fn gene_count(&self) -> usize {
        self.params.decoder.output_width()
    }

    pub fn latent_dim(&self) -> usize {
        self.arch.latent_dim()
    }

    pub fn pathway_names(&self) -> Vec<&str> {
        self.masks.iter().map(|m| m.name.as_str()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params.param_count()
    }

    /// Checks that parameters, masks and architecture agree.
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        let genes = self.gene_count();
        if !self.gene_names.is_empty() && self.gene_names.len() != genes {
            return Err(Error::shape("Model", "gene name count differs from decoder width"));
        }
        if self.kind().uses_pathways() {
            if self.masks.is_empty() || self.masks.len() != self.params.pathway_encoders.len() {
                return Err(Error::Config("pathway encoders and masks disagree".into()));
            }
            for (m, stack) in self.masks.iter().zip(&self.params.pathway_encoders) {
                m.check(genes)?;
                stack.check_chain(&m.name)?;
                if stack.input_width() != m.len() || stack.output_width() != 1 {
                    return Err(Error::shape("Model", format!("pathway `{}` encoder shape", m.name)));
                }
            }
        } else if !self.params.pathway_encoders.is_empty() {
            return Err(Error::Config(format!("{} carries pathway encoders", self.kind())));
        }
        self.params.encoder.check_chain("encoder")?;
        self.params.decoder.check_chain("decoder")?;
        let head = if self.kind().is_variational() { 2 } else { 1 } * self.latent_dim();
        let enc_in = if self.kind().uses_pathways() { self.masks.len() } else { genes };
        if self.params.encoder.input_width() != enc_in || self.params.encoder.output_width() != head {
            return Err(Error::shape("Model", "encoder widths do not match architecture"));
        }
        if self.params.decoder.input_width() != self.latent_dim() {
            return Err(Error::shape("Model", "decoder input differs from latent width"));
        }
        Ok(())
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.gene_count() {
            return Err(Error::shape(
                "Model",
                format!("input has {} genes, model expects {}", x.cols(), self.gene_count()),
            ));
        }
        Ok(())
    }

    fn pathway_forward_cached(&self, x: &Matrix, training: bool, rng: &mut Rng) -> Result<(Matrix, Vec<StackCache>)> {
        if !self.kind().uses_pathways() {
            return Err(Error::Config(format!("{} has no pathway activity space", self.kind())));
        }
        self.check_input(x)?;
        let mut columns = Vec::with_capacity(self.masks.len());
        let mut caches = Vec::with_capacity(self.masks.len());
        for (mask, stack) in self.masks.iter().zip(&self.params.pathway_encoders) {
            let xm = x.select_columns(&mask.indices)?;
            let (a_j, cache) = stack.forward_cached(&xm, self.arch.dropout_rate, training, rng)?;
            columns.push(a_j);
            caches.push(cache);
        }
        Ok((Matrix::hstack(&columns)?, caches))
    }

    /// Pathway activity vector `a`, one column per pathway.
    pub fn pathway_activity_forward(&self, x: &Matrix, training: bool, rng: &mut Rng) -> Result<Matrix> {
        Ok(self.pathway_forward_cached(x, training, rng)?.0)
    }

    /// Runs the latent encoder on its direct input (`x` for AE/VAE, `a` otherwise).
    pub fn encode(&self, input: &Matrix, training: bool, rng: &mut Rng) -> Result<Encoded> {
        let out = self.params.encoder.forward(input, self.arch.dropout_rate, training, rng)?;
        self.split_head(out)
    }

    fn split_head(&self, out: Matrix) -> Result<Encoded> {
        if !self.kind().is_variational() {
            return Ok(Encoded::Deterministic(out));
        }
        let d = self.latent_dim();
        let mu = out.select_columns(&(0..d).collect::<Vec<_>>())?;
        let logvar = out.select_columns(&(d..2 * d).collect::<Vec<_>>())?;
        Ok(Encoded::Variational { mu, logvar })
    }

    pub fn decode(&self, z: &Matrix, training: bool, rng: &mut Rng) -> Result<Matrix> {
        self.params.decoder.forward(z, self.arch.dropout_rate, training, rng)
    }

    /// Full pass. In inference mode dropout is off and `z = mu` for
    /// variational models.
    pub fn forward(&self, x: &Matrix, training: bool, rng: &mut Rng) -> Result<ForwardOutputs> {
        Ok(self.trace(x, training, rng)?.outputs)
    }

    fn trace(&self, x: &Matrix, training: bool, rng: &mut Rng) -> Result<ForwardTrace> {
        self.check_input(x)?;
        let rate = self.arch.dropout_rate;
        let (a, pathway_caches) = if self.kind().uses_pathways() {
            let (a, c) = self.pathway_forward_cached(x, training, rng)?;
            (Some(a), c)
        } else {
            (None, Vec::new())
        };
        let enc_in = a.as_ref().unwrap_or(x);
        let (head, encoder_cache) = self.params.encoder.forward_cached(enc_in, rate, training, rng)?;
        let (z, mu, logvar, eps) = match self.split_head(head)? {
            Encoded::Deterministic(z) => (z, None, None, None),
            Encoded::Variational { mu, logvar } => {
                if training {
                    let (z, eps) = reparameterize(&mu, &logvar, rng)?;
                    (z, Some(mu), Some(logvar), Some(eps))
                } else {
                    (mu.clone(), Some(mu), Some(logvar), None)
                }
            }
        };
        let (x_hat, decoder_cache) = self.params.decoder.forward_cached(&z, rate, training, rng)?;
        Ok(ForwardTrace {
            outputs: ForwardOutputs { a, z, mu, logvar, x_hat },
            pathway_caches,
            encoder_cache,
            decoder_cache,
            eps,
        })
    }

    /// Reconstruction MSE plus `beta_eff`-weighted KL (variational models), with
    /// gradients for every tensor in [`ModelParams::tensors`] order.
    pub fn loss_and_grads(
        &self,
        x: &Matrix,
        beta_eff: f64,
        training: bool,
        rng: &mut Rng,
    ) -> Result<(LossBreakdown, Vec<Matrix>)> {
        let tr = self.trace(x, training, rng)?;
        let out = &tr.outputs;
        let (mse, g_xhat) = mse_loss(x, &out.x_hat)?;
        let (dec_grads, g_z) = self.params.decoder.backward(&tr.decoder_cache, &g_xhat, true)?;
        let g_z = g_z.expect("requested");

        let (kl, g_head) = match (&out.mu, &out.logvar) {
            (Some(mu), Some(logvar)) => {
                let kl = kl_gaussian(mu, logvar)?;
                let g_mu = g_z.zip_map(&kl.grad_mu, |a, b| a + beta_eff * b)?;
                let g_lv = match &tr.eps {
                    Some(eps) => {
                        let sample_path = Matrix::new(
                            g_z.rows(),
                            g_z.cols(),
                            g_z.as_slice()
                                .iter()
                                .zip(eps.as_slice())
                                .zip(logvar.as_slice())
                                .map(|((&g, &e), &lv)| g * e * 0.5 * (0.5 * lv).exp())
                                .collect(),
                        )?;
                        sample_path.zip_map(&kl.grad_logvar, |a, b| a + beta_eff * b)?
                    }
                    None => kl.grad_logvar.scale(beta_eff),
                };
                (kl.value, Matrix::hstack(&[g_mu, g_lv])?)
            }
            _ => (0.0, g_z),
        };
        let total = mse + beta_eff * kl;
        if !total.is_finite() {
            return Err(Error::Numeric(format!("loss is not finite (mse={mse}, kl={kl})")));
        }

        let uses_pathways = self.kind().uses_pathways();
        let (enc_grads, g_a) = self.params.encoder.backward(&tr.encoder_cache, &g_head, uses_pathways)?;
        let mut grads = Vec::with_capacity(self.params.tensors().len());
        if let Some(g_a) = g_a {
            for (j, (stack, cache)) in self.params.pathway_encoders.iter().zip(&tr.pathway_caches).enumerate() {
                let col = Matrix::column_vector(&g_a.column(j));
                grads.extend(stack.backward(cache, &col, false)?.0);
            }
        }
        grads.extend(enc_grads);
        grads.extend(dec_grads);
        Ok((LossBreakdown { total, mse, kl }, grads))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ScheduleKind;

    fn masks(sizes: &[&[usize]], genes: usize) -> Vec<PathwayMask> {
        sizes
            .iter()
            .enumerate()
            .map(|(i, idx)| PathwayMask::new(format!("P{i}"), idx.to_vec(), genes).unwrap())
            .collect()
    }

    #[test]
    fn paae_parameter_count_by_hand() {
        let mut arch = ArchitectureConfig::new(ModelKind::Paae, vec![4]);
        arch.pathway_hidden_sizes = vec![2];
        let m = Model::build(arch, 5, masks(&[&[0, 1, 2], &[3, 4]], 5), &mut Rng::new(1)).unwrap();
        assert_eq!(m.param_count(), 57);
        assert_eq!(count_params(&m.params), 57);
    }

    #[test]
    fn ae_parameter_count_by_hand() {
        let arch = ArchitectureConfig::new(ModelKind::Ae, vec![4, 2]);
        let m = Model::build(arch, 5, vec![], &mut Rng::new(1)).unwrap();
        assert_eq!(m.param_count(), 71);
        assert_eq!(count_params(&ModelParams::default()), 0);
    }

    #[test]
    fn variational_head_is_doubled() {
        let arch = ArchitectureConfig::new(ModelKind::Pavae, vec![8, 3]);
        let m = Model::build(arch, 6, masks(&[&[0, 1], &[2, 3, 4]], 6), &mut Rng::new(2)).unwrap();
        assert_eq!(m.params.encoder.output_width(), 6);
        assert_eq!(m.params.decoder.input_width(), 3);
        m.validate().unwrap();
    }

    #[test]
    fn empty_pathways_rejected() {
        let arch = ArchitectureConfig::new(ModelKind::Paae, vec![2]);
        assert!(matches!(Model::build(arch, 4, vec![], &mut Rng::new(0)), Err(Error::Config(_))));
    }

    #[test]
    fn linear_single_pathway_activity() {
        let arch = ArchitectureConfig::new(ModelKind::Paae, vec![1]);
        let mut m = Model::build(arch, 3, masks(&[&[0, 2]], 3), &mut Rng::new(0)).unwrap();
        m.params.pathway_encoders[0].layers[0].weight = Matrix::column_vector(&[2.0, -1.0]);
        m.params.pathway_encoders[0].layers[0].bias = Matrix::row_vector(&[0.5]);
        let x = Matrix::from_rows(&[[1.0, 100.0, 3.0], [0.0, -7.0, 1.0]]).unwrap();
        let a = m.pathway_activity_forward(&x, false, &mut Rng::new(0)).unwrap();
        assert_eq!(a.as_slice(), &[2.0 - 3.0 + 0.5, -1.0 + 0.5]);
    }

    #[test]
    fn pathway_space_missing_for_dense_models() {
        let m = Model::build(ArchitectureConfig::new(ModelKind::Ae, vec![2]), 3, vec![], &mut Rng::new(0)).unwrap();
        assert!(m.pathway_activity_forward(&Matrix::zeros(1, 3), false, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn encoder_identity_and_zero_head() {
        let mut m = Model::build(ArchitectureConfig::new(ModelKind::Ae, vec![3]), 3, vec![], &mut Rng::new(0)).unwrap();
        m.params.encoder.layers[0].weight = Matrix::identity(3);
        let x = Matrix::from_rows(&[[1.0, -2.0, 0.5]]).unwrap();
        let z = m.encode(&x, false, &mut Rng::new(0)).unwrap();
        assert_eq!(z.representation(), &x);

        let mut v =
            Model::build(ArchitectureConfig::new(ModelKind::Vae, vec![2]), 3, vec![], &mut Rng::new(0)).unwrap();
        v.params.encoder.layers[0].weight = Matrix::zeros(3, 4);
        match v.encode(&x, false, &mut Rng::new(0)).unwrap() {
            Encoded::Variational { mu, logvar } => {
                assert!(mu.as_slice().iter().all(|&m| m == 0.0));
                assert!(logvar.as_slice().iter().all(|&l| l == 0.0));
            }
            Encoded::Deterministic(_) => panic!("expected variational head"),
        }
    }

    #[test]
    fn inference_is_deterministic() {
        let mut arch = ArchitectureConfig::new(ModelKind::Pavae, vec![4, 2]);
        arch.pathway_hidden_sizes = vec![3];
        let m = Model::build(arch, 6, masks(&[&[0, 1, 2], &[3, 4]], 6), &mut Rng::new(4)).unwrap();
        let x = Matrix::new(3, 6, (0..18).map(|i| i as f64 * 0.1).collect()).unwrap();
        let a = m.forward(&x, false, &mut Rng::new(1)).unwrap();
        let b = m.forward(&x, false, &mut Rng::new(2)).unwrap();
        assert_eq!(a.x_hat, b.x_hat);
        assert_eq!(Some(&a.z), a.mu.as_ref());
    }

    #[test]
    fn reparameterize_properties() {
        let mu = Matrix::row_vector(&[1.5, -2.0]);
        let (z, _) = reparameterize(&mu, &Matrix::filled(1, 2, -80.0), &mut Rng::new(0)).unwrap();
        for (a, b) in z.as_slice().iter().zip(mu.as_slice()) {
            assert!((a - b).abs() < 1e-10);
        }
        let lv = Matrix::row_vector(&[0.3, 0.1]);
        let z1 = reparameterize(&mu, &lv, &mut Rng::new(5)).unwrap().0;
        let z2 = reparameterize(&mu, &lv, &mut Rng::new(5)).unwrap().0;
        assert_eq!(z1, z2);
        assert!(reparameterize(&mu, &Matrix::row_vector(&[f64::NAN, 0.0]), &mut Rng::new(0)).is_err());

        let n = 100_000;
        let big_mu = Matrix::filled(n, 1, 0.7);
        let big_lv = Matrix::filled(n, 1, 0.0);
        let z = reparameterize(&big_mu, &big_lv, &mut Rng::new(9)).unwrap().0;
        let mean = z.sum() / n as f64;
        let se = 1.0 / (n as f64).sqrt();
        assert!((mean - 0.7).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn decode_zero_weights_gives_bias() {
        let mut m = Model::build(ArchitectureConfig::new(ModelKind::Ae, vec![2]), 3, vec![], &mut Rng::new(0)).unwrap();
        m.params.decoder.layers[0].weight = Matrix::zeros(2, 3);
        m.params.decoder.layers[0].bias = Matrix::row_vector(&[1.0, 2.0, 3.0]);
        let out = m.decode(&Matrix::filled(2, 2, 5.0), false, &mut Rng::new(0)).unwrap();
        assert_eq!(out.row(0), &[1.0, 2.0, 3.0]);
        assert_eq!(out.row(1), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn paae_decodes_every_gene() {
        let arch = ArchitectureConfig::new(ModelKind::Paae, vec![2]);
        let m = Model::build(arch, 10, masks(&[&[0, 1], &[2, 3]], 10), &mut Rng::new(0)).unwrap();
        let out = m.forward(&Matrix::zeros(2, 10), false, &mut Rng::new(0)).unwrap();
        assert_eq!(out.x_hat.cols(), 10);
        assert_eq!(out.a.unwrap().cols(), 2);
    }

    #[test]
    fn orthonormal_linear_round_trip() {
        let mut m = Model::build(ArchitectureConfig::new(ModelKind::Ae, vec![2]), 2, vec![], &mut Rng::new(0)).unwrap();
        let (c, s) = (0.6, 0.8);
        let w = Matrix::from_rows(&[[c, -s], [s, c]]).unwrap();
        m.params.decoder.layers[0].weight = w.transpose();
        m.params.encoder.layers[0].weight = w;
        let x = Matrix::from_rows(&[[1.0, 2.0], [-0.5, 3.0]]).unwrap();
        let out = m.forward(&x, false, &mut Rng::new(0)).unwrap();
        for (a, b) in out.x_hat.as_slice().iter().zip(x.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn variational_loss_reduces_to_mse_when_beta_zero() {
        let arch = ArchitectureConfig::new(ModelKind::Vae, vec![3]);
        let m = Model::build(arch, 4, vec![], &mut Rng::new(3)).unwrap();
        let x = Matrix::new(2, 4, (0..8).map(|i| i as f64).collect()).unwrap();
        let (l, _) = m.loss_and_grads(&x, 0.0, false, &mut Rng::new(0)).unwrap();
        let out = m.forward(&x, false, &mut Rng::new(0)).unwrap();
        assert_eq!(l.total, mse_loss(&x, &out.x_hat).unwrap().0);
    }

    #[test]
    fn pavae_perfect_reconstruction_has_zero_loss() {
        let arch =
            ArchitectureConfig { schedule: ScheduleKind::None, ..ArchitectureConfig::new(ModelKind::Pavae, vec![1]) };
        let mut m = Model::build(arch, 2, masks(&[&[0, 1]], 2), &mut Rng::new(0)).unwrap();
        for t in m.params.tensors_mut() {
            t.as_mut_slice().iter_mut().for_each(|v| *v = 0.0);
        }
        m.params.decoder.layers[0].bias = Matrix::row_vector(&[0.25, -1.0]);
        let x = Matrix::from_rows(&[[0.25, -1.0], [0.25, -1.0]]).unwrap();
        let (l, _) = m.loss_and_grads(&x, 3.0, false, &mut Rng::new(0)).unwrap();
        assert_eq!(l.total, 0.0);
    }
}
