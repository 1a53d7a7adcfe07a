use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::{derive_seed, seeded_normal_init, Graph, Tensor, Var};

pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    LeakyRelu,
    Tanh,
    Sigmoid,
    None,
}

impl Activation {
    pub fn apply(self, g: &mut Graph, x: Var) -> Result<Var> {
        match self {
            Activation::Relu => g.relu(x),
            Activation::LeakyRelu => g.leaky_relu(x, LEAKY_SLOPE),
            Activation::Tanh => g.tanh(x),
            Activation::Sigmoid => g.sigmoid(x),
            Activation::None => Ok(x),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::LeakyRelu => "leaky_relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::None => "none",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "relu" => Activation::Relu,
            "leaky_relu" => Activation::LeakyRelu,
            "tanh" => Activation::Tanh,
            "sigmoid" => Activation::Sigmoid,
            "none" => Activation::None,
            other => {
                return Err(Error::Parse {
                    what: "activation".into(),
                    detail: format!("unknown activation {other:?}"),
                })
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub input: usize,
    pub output: usize,
    pub activation: Activation,
}

/// Ordered list of dense layers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkSpec {
    layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        if let Some(l) = layers.iter().find(|l| l.input == 0 || l.output == 0) {
            return Err(Error::Config(format!("zero-width layer {}>{}", l.input, l.output)));
        }
        for pair in layers.windows(2) {
            if pair[0].output != pair[1].input {
                return Err(Error::Config(format!(
                    "layers do not chain: {} -> {}",
                    pair[0].output, pair[1].input
                )));
            }
        }
        Ok(Self { layers })
    }

    /// `input -> hidden... -> output`, with `hidden_act` after every hidden
    /// layer and `output_act` after the last one.
    pub fn mlp(
        input: usize,
        hidden: &[usize],
        output: usize,
        hidden_act: Activation,
        output_act: Activation,
    ) -> Result<Self> {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(output);
        let n = widths.len() - 1;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| LayerSpec {
                input: w[0],
                output: w[1],
                activation: if i + 1 == n { output_act } else { hidden_act },
            })
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].output
    }

    /// Number of `f64` values in each parameter tensor, in binding order.
    pub fn param_sizes(&self) -> Vec<usize> {
        self.layers
            .iter()
            .flat_map(|l| [l.input * l.output, l.output])
            .collect()
    }
}

impl fmt::Display for NetworkSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, l) in self.layers.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}>{}:{}", l.input, l.output, l.activation)?;
        }
        Ok(())
    }
}

impl FromStr for NetworkSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |detail: String| Error::Parse {
            what: "network spec".into(),
            detail,
        };
        let layers = s
            .split(',')
            .map(|part| {
                let (dims, act) = part.split_once(':').ok_or_else(|| bad(part.to_string()))?;
                let (i, o) = dims.split_once('>').ok_or_else(|| bad(part.to_string()))?;
                Ok(LayerSpec {
                    input: i.parse().map_err(|_| bad(part.to_string()))?,
                    output: o.parse().map_err(|_| bad(part.to_string()))?,
                    activation: act.parse()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        NetworkSpec::new(layers)
    }
}

/// Anything holding trainable tensors in a fixed order.
pub trait Parameterized {
    fn params(&self) -> Vec<&Tensor>;
    fn params_mut(&mut self) -> Vec<&mut Tensor>;
}

/// Graph handles for a module's parameters, in `params()` order.
#[derive(Clone, Debug)]
pub struct Bound(Vec<Var>);

impl Bound {
    pub(crate) fn from_vars(vars: Vec<Var>) -> Self {
        Bound(vars)
    }

    pub fn vars(&self) -> &[Var] {
        &self.0
    }
}

/// Puts the parameters of `m` on the graph; `trainable = false` records
/// them as constants so gradients pass through without being collected.
pub fn bind<M: Parameterized + ?Sized>(g: &mut Graph, m: &M, trainable: bool) -> Bound {
    Bound(
        m.params()
            .into_iter()
            .map(|t| if trainable { g.param(t) } else { g.constant(t.clone()) })
            .collect(),
    )
}

/// Adds the gradients of the last backward pass into the parameters of `m`.
/// Parameters the loss did not reach receive zeros.
pub fn collect_grads<M: Parameterized + ?Sized>(g: &Graph, bound: &Bound, m: &mut M) -> Result<()> {
    let params = m.params_mut();
    if params.len() != bound.0.len() {
        return Err(Error::Contract("binding does not match module".into()));
    }
    for (p, v) in params.into_iter().zip(&bound.0) {
        match g.grad(*v) {
            Some(grad) => p.accumulate_grad(grad)?,
            None => p.accumulate_grad(&vec![0.0; p.len()])?,
        }
    }
    Ok(())
}

/// Fully connected network.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    spec: NetworkSpec,
    params: Vec<Tensor>,
}

impl Mlp {
    /// Weights `N(0, 1/fan_in)`, the last layer scaled down by 10; zero biases.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let n = spec.layers().len();
        let mut params = Vec::with_capacity(2 * n);
        for (i, l) in spec.layers().iter().enumerate() {
            let mut scale = 1.0 / (l.input as f64).sqrt();
            if i + 1 == n {
                scale *= 0.1;
            }
            params.push(seeded_normal_init(&[l.input, l.output], derive_seed(seed, i as u64), scale)?);
            params.push(Tensor::zeros(1, l.output));
        }
        Ok(Self { spec, params })
    }

    pub fn from_parts(spec: NetworkSpec, blocks: Vec<Vec<f64>>) -> Result<Self> {
        let sizes = spec.param_sizes();
        if blocks.len() != sizes.len() {
            return Err(Error::Contract(format!(
                "expected {} parameter blocks, got {}",
                sizes.len(),
                blocks.len()
            )));
        }
        let mut params = Vec::with_capacity(blocks.len());
        for (k, block) in blocks.into_iter().enumerate() {
            let l = spec.layers()[k / 2];
            let shape = if k % 2 == 0 { vec![l.input, l.output] } else { vec![1, l.output] };
            params.push(Tensor::new(shape, block)?);
        }
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn forward(&self, g: &mut Graph, x: Var, bound: &Bound) -> Result<Var> {
        let width = g.value(x).cols();
        if width != self.spec.input_width() {
            return Err(Error::dim(
                "network input",
                format!("expected width {}, got {width}", self.spec.input_width()),
            ));
        }
        let mut h = x;
        for (i, l) in self.spec.layers().iter().enumerate() {
            let w = bound.vars()[2 * i];
            let b = bound.vars()[2 * i + 1];
            let lin = g.matmul(h, w)?;
            let lin = g.add(lin, b)?;
            h = l.activation.apply(g, lin)?;
        }
        Ok(h)
    }

    /// Forward pass without recording a tape.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::inference();
        let xv = g.constant(x.clone());
        let bound = bind(&mut g, self, false);
        let out = self.forward(&mut g, xv, &bound)?;
        Ok(g.value(out).clone())
    }
}

impl Parameterized for Mlp {
    fn params(&self) -> Vec<&Tensor> {
        self.params.iter().collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.params.iter_mut().collect()
    }
}
