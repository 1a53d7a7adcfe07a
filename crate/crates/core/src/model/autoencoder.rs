use crate::data::FeatureLayout;
use crate::error::{Error, Result};
use crate::model::gm::GaussianMixtureHead;
use crate::model::network::{bind, Activation, Bound, Mlp, NetworkSpec, Parameterized};
use crate::numerics::{derive_seed, Graph, Tensor, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct AutoencoderSpec {
    pub input_width: usize,
    /// Width of the label-relevant latent `z`.
    pub latent_dim: usize,
    /// Width of the label-irrelevant latent `z_u`.
    pub nuisance_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub hidden_activation: Activation,
    pub layout: FeatureLayout,
    /// Squashing applied to the continuous output block.
    pub continuous_activation: Activation,
}

/// Decoder trunk followed by a continuous head and a categorical head whose
/// scores are softmaxed per one-hot block.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoder {
    trunk: Mlp,
    continuous_head: Option<Mlp>,
    categorical_head: Option<Mlp>,
    layout: FeatureLayout,
}

impl Decoder {
    pub fn new(
        input: usize,
        hidden: &[usize],
        hidden_act: Activation,
        layout: FeatureLayout,
        continuous_act: Activation,
        seed: u64,
    ) -> Result<Self> {
        if hidden.is_empty() {
            return Err(Error::Config("decoder needs at least one hidden layer".into()));
        }
        let trunk_out = *hidden.last().expect("non-empty");
        let trunk = Mlp::new(
            NetworkSpec::mlp(input, &hidden[..hidden.len() - 1], trunk_out, hidden_act, hidden_act)?,
            derive_seed(seed, 0),
        )?;
        let continuous_head = (layout.continuous > 0)
            .then(|| {
                let spec = NetworkSpec::mlp(trunk_out, &[], layout.continuous, continuous_act, continuous_act)?;
                Mlp::new(spec, derive_seed(seed, 1))
            })
            .transpose()?;
        let cat_width = layout.categorical_width();
        let categorical_head = (cat_width > 0)
            .then(|| {
                let spec = NetworkSpec::mlp(trunk_out, &[], cat_width, Activation::None, Activation::None)?;
                Mlp::new(spec, derive_seed(seed, 2))
            })
            .transpose()?;
        Ok(Self {
            trunk,
            continuous_head,
            categorical_head,
            layout,
        })
    }

    pub fn from_parts(
        trunk: Mlp,
        continuous_head: Option<Mlp>,
        categorical_head: Option<Mlp>,
        layout: FeatureLayout,
    ) -> Result<Self> {
        let trunk_out = trunk.spec().output_width();
        let check = |head: &Option<Mlp>, width: usize, name: &str| -> Result<()> {
            match head {
                Some(h) if h.spec().input_width() == trunk_out && h.spec().output_width() == width => Ok(()),
                None if width == 0 => Ok(()),
                _ => Err(Error::Contract(format!("{name} head does not fit the layout"))),
            }
        };
        check(&continuous_head, layout.continuous, "continuous")?;
        check(&categorical_head, layout.categorical_width(), "categorical")?;
        Ok(Self {
            trunk,
            continuous_head,
            categorical_head,
            layout,
        })
    }

    pub fn trunk(&self) -> &Mlp {
        &self.trunk
    }

    pub fn continuous_head(&self) -> Option<&Mlp> {
        self.continuous_head.as_ref()
    }

    pub fn categorical_head(&self) -> Option<&Mlp> {
        self.categorical_head.as_ref()
    }

    pub fn layout(&self) -> &FeatureLayout {
        &self.layout
    }

    pub fn input_width(&self) -> usize {
        self.trunk.spec().input_width()
    }

    fn heads(&self) -> impl Iterator<Item = &Mlp> {
        self.continuous_head.iter().chain(self.categorical_head.iter())
    }

    pub fn forward(&self, g: &mut Graph, latent: Var, bound: &Bound) -> Result<Var> {
        self.forward_tempered(g, latent, bound, 1.0)
    }

    /// Like [`Decoder::forward`] with `softmax(scores / temperature)` on the
    /// categorical blocks.
    pub fn forward_tempered(&self, g: &mut Graph, latent: Var, bound: &Bound, temperature: f64) -> Result<Var> {
        let vars = bound.vars();
        let n_trunk = self.trunk.params().len();
        let trunk_bound = Bound::from_vars(vars[..n_trunk].to_vec());
        let h = self.trunk.forward(g, latent, &trunk_bound)?;
        let mut offset = n_trunk;
        let mut out: Option<Var> = None;
        if let Some(head) = &self.continuous_head {
            let b = Bound::from_vars(vars[offset..offset + 2].to_vec());
            offset += 2;
            out = Some(head.forward(g, h, &b)?);
        }
        if let Some(head) = &self.categorical_head {
            let b = Bound::from_vars(vars[offset..offset + 2].to_vec());
            let scores = head.forward(g, h, &b)?;
            let probs = self.layout.softmax_blocks(g, scores, 0, temperature)?;
            out = Some(match out {
                Some(cont) => g.concat(cont, probs)?,
                None => probs,
            });
        }
        Ok(out.expect("layout has at least one feature"))
    }
}

impl Parameterized for Decoder {
    fn params(&self) -> Vec<&Tensor> {
        let mut p = self.trunk.params();
        for h in self.heads() {
            p.extend(h.params());
        }
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.trunk.params_mut();
        if let Some(h) = &mut self.continuous_head {
            p.extend(h.params_mut());
        }
        if let Some(h) = &mut self.categorical_head {
            p.extend(h.params_mut());
        }
        p
    }
}

/// Graph bindings for the three autoencoder networks.
#[derive(Clone, Debug)]
pub struct AeBound {
    pub encoder: Bound,
    pub encoder_u: Bound,
    pub decoder: Bound,
}

/// Encoder `x -> z`, nuisance encoder `x -> z_u`, decoder `(z, z_u) -> x'`
/// and the Gaussian-mixture head over `z`.
#[derive(Clone, Debug, PartialEq)]
pub struct DisentangledAutoencoder {
    pub(crate) encoder: Mlp,
    pub(crate) encoder_u: Mlp,
    pub(crate) decoder: Decoder,
    pub(crate) gm: GaussianMixtureHead,
}

impl DisentangledAutoencoder {
    pub fn new(spec: &AutoencoderSpec, seed: u64) -> Result<Self> {
        if spec.layout.width() != spec.input_width {
            return Err(Error::Config(format!(
                "layout width {} does not match input width {}",
                spec.layout.width(),
                spec.input_width
            )));
        }
        let encoder = Mlp::new(
            NetworkSpec::mlp(
                spec.input_width,
                &spec.encoder_hidden,
                spec.latent_dim,
                spec.hidden_activation,
                Activation::None,
            )?,
            derive_seed(seed, 10),
        )?;
        let encoder_u = Mlp::new(
            NetworkSpec::mlp(
                spec.input_width,
                &spec.encoder_hidden,
                spec.nuisance_dim,
                spec.hidden_activation,
                Activation::None,
            )?,
            derive_seed(seed, 11),
        )?;
        let decoder = Decoder::new(
            spec.latent_dim + spec.nuisance_dim,
            &spec.decoder_hidden,
            spec.hidden_activation,
            spec.layout.clone(),
            spec.continuous_activation,
            derive_seed(seed, 12),
        )?;
        let gm = GaussianMixtureHead::new(spec.latent_dim, derive_seed(seed, 13))?;
        Self::from_parts(encoder, encoder_u, decoder, gm)
    }

    pub fn from_parts(encoder: Mlp, encoder_u: Mlp, decoder: Decoder, gm: GaussianMixtureHead) -> Result<Self> {
        let d_z = encoder.spec().output_width();
        let d_u = encoder_u.spec().output_width();
        if encoder.spec().input_width() != encoder_u.spec().input_width()
            || decoder.input_width() != d_z + d_u
            || gm.dim() != d_z
            || decoder.layout().width() != encoder.spec().input_width()
        {
            return Err(Error::Contract("autoencoder parts do not fit together".into()));
        }
        Ok(Self {
            encoder,
            encoder_u,
            decoder,
            gm,
        })
    }

    pub fn encoder(&self) -> &Mlp {
        &self.encoder
    }

    pub fn encoder_u(&self) -> &Mlp {
        &self.encoder_u
    }

    pub fn decoder(&self) -> &Decoder {
        &self.decoder
    }

    pub fn gm(&self) -> &GaussianMixtureHead {
        &self.gm
    }

    pub fn input_width(&self) -> usize {
        self.encoder.spec().input_width()
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.spec().output_width()
    }

    pub fn nuisance_dim(&self) -> usize {
        self.encoder_u.spec().output_width()
    }

    pub fn layout(&self) -> &FeatureLayout {
        self.decoder.layout()
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> AeBound {
        AeBound {
            encoder: bind(g, &self.encoder, trainable),
            encoder_u: bind(g, &self.encoder_u, trainable),
            decoder: bind(g, &self.decoder, trainable),
        }
    }

    /// Returns `(z, z_u)`.
    pub fn encode(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        Ok((self.encoder.infer(x)?, self.encoder_u.infer(x)?))
    }

    pub fn decode(&self, z: &Tensor, z_u: &Tensor) -> Result<Tensor> {
        if z.cols() != self.latent_dim() || z_u.cols() != self.nuisance_dim() || z.rows() != z_u.rows() {
            return Err(Error::dim(
                "decode",
                format!(
                    "expected ({}, {}) latents, got {:?} and {:?}",
                    self.latent_dim(),
                    self.nuisance_dim(),
                    z.shape(),
                    z_u.shape()
                ),
            ));
        }
        let mut g = Graph::inference();
        let zv = g.constant(z.clone());
        let uv = g.constant(z_u.clone());
        let latent = g.concat(zv, uv)?;
        let bound = bind(&mut g, &self.decoder, false);
        let out = self.decoder.forward(&mut g, latent, &bound)?;
        Ok(g.value(out).clone())
    }

    pub fn reconstruct(&self, x: &Tensor) -> Result<Tensor> {
        let (z, z_u) = self.encode(x)?;
        self.decode(&z, &z_u)
    }

    /// Per-row squared reconstruction error `‖x − dec(enc(x))‖²`.
    pub fn reconstruction_errors(&self, x: &Tensor) -> Result<Vec<f64>> {
        let rec = self.reconstruct(x)?;
        Ok((0..x.rows())
            .map(|i| {
                x.row_slice(i)
                    .iter()
                    .zip(rec.row_slice(i))
                    .map(|(a, b)| (a - b).powi(2))
                    .sum()
            })
            .collect())
    }
}

/// Predicts the classifier label from `z_u`; the autoencoder is trained to
/// make it fail.
#[derive(Clone, Debug, PartialEq)]
pub struct AdversarialClassifier {
    pub(crate) net: Mlp,
}

impl AdversarialClassifier {
    pub fn new(nuisance_dim: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        let spec = NetworkSpec::mlp(nuisance_dim, hidden, 1, Activation::LeakyRelu, Activation::Sigmoid)?;
        Ok(Self {
            net: Mlp::new(spec, seed)?,
        })
    }

    pub fn from_network(net: Mlp) -> Result<Self> {
        let last = net.spec().layers().last().expect("non-empty");
        if last.output != 1 || last.activation != Activation::Sigmoid {
            return Err(Error::Contract("adversary must end in a single sigmoid unit".into()));
        }
        Ok(Self { net })
    }

    pub fn network(&self) -> &Mlp {
        &self.net
    }

    pub fn predict(&self, z_u: &Tensor) -> Result<Vec<f64>> {
        Ok(self.net.infer(z_u)?.into_data())
    }

    /// Fraction of rows where thresholding at 0.5 recovers the label.
    pub fn accuracy(&self, z_u: &Tensor, labels: &[u8]) -> Result<f64> {
        let p = self.predict(z_u)?;
        let hits = p.iter().zip(labels).filter(|(p, y)| (**p >= 0.5) == (**y == 1)).count();
        Ok(hits as f64 / labels.len().max(1) as f64)
    }
}
