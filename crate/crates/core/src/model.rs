//! Feedforward models and their derivatives.
//!
//! A [`Model`] is an ordered list of dense and activation layers. Derivatives
//! are computed matrix-free: [`Linearization`] caches one forward trace and
//! then answers any number of Jacobian-vector (`jvp`) and vector-Jacobian
//! (`vjp`) products around that point. The full Jacobian is only materialized
//! on request, behind an element-count guard.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{dot, unit, Matrix};

/// Environment variable overriding [`DEFAULT_MAX_JACOBIAN`].
pub const MAX_JACOBIAN_ENV: &str = "PERTURBKIT_MAX_JACOBIAN";
pub const DEFAULT_MAX_JACOBIAN: usize = 10_000_000;

/// Jacobian materialization limit, honouring [`MAX_JACOBIAN_ENV`].
pub fn max_jacobian_elems() -> usize {
    std::env::var(MAX_JACOBIAN_ENV)
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(DEFAULT_MAX_JACOBIAN)
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("input has length {got}, model expects {expected}")]
    InputShape { expected: usize, got: usize },
    #[error("non-finite value produced by layer {layer}")]
    NonFinite { layer: usize },
    #[error("layer {layer} expects input of size {expected} but receives {got}")]
    DimensionChain {
        layer: usize,
        expected: usize,
        got: usize,
    },
    #[error("layer {layer}: {what} has {got} entries, expected {expected}")]
    ParameterLength {
        layer: usize,
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("unknown activation tag {0:?} (expected relu, tanh, sigmoid, softmax or identity)")]
    UnknownActivation(String),
    #[error("non-finite parameter in layer {layer}")]
    NonFiniteParameter { layer: usize },
    #[error(
        "Jacobian would hold {elems} elements (limit {max}); use the matrix-free jvp/vjp path \
         or raise {MAX_JACOBIAN_ENV}"
    )]
    SizeGuard { elems: usize, max: usize },
    #[error("malformed model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Softmax,
    Identity,
}

impl Activation {
    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Softmax => "softmax",
            Activation::Identity => "identity",
        }
    }

    fn apply(self, z: &[f64]) -> Vec<f64> {
        match self {
            Activation::Relu => z.iter().map(|&v| v.max(0.0)).collect(),
            Activation::Tanh => z.iter().map(|v| v.tanh()).collect(),
            Activation::Sigmoid => z.iter().map(|&v| sigmoid(v)).collect(),
            Activation::Softmax => softmax(z),
            Activation::Identity => z.to_vec(),
        }
    }

    /// Applies the (symmetric) Jacobian of the activation at `z` (output `y`) to `t`.
    fn derivative_apply(self, z: &[f64], y: &[f64], t: &[f64]) -> Vec<f64> {
        match self {
            // Subgradient at 0 is 0.
            Activation::Relu => z
                .iter()
                .zip(t)
                .map(|(&zi, &ti)| if zi > 0.0 { ti } else { 0.0 })
                .collect(),
            Activation::Tanh => y
                .iter()
                .zip(t)
                .map(|(yi, ti)| (1.0 - yi * yi) * ti)
                .collect(),
            Activation::Sigmoid => y
                .iter()
                .zip(t)
                .map(|(yi, ti)| yi * (1.0 - yi) * ti)
                .collect(),
            Activation::Softmax => {
                let st = dot(y, t);
                y.iter().zip(t).map(|(yi, ti)| yi * (ti - st)).collect()
            }
            Activation::Identity => t.to_vec(),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Activation {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "softmax" => Ok(Activation::Softmax),
            "identity" => Ok(Activation::Identity),
            other => Err(ModelError::UnknownActivation(other.to_string())),
        }
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Softmax with the max subtracted before exponentiation.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Dense affine map `x ↦ W x + b` with `W` stored row-major as `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    in_dim: usize,
    out_dim: usize,
    pub(crate) weights: Vec<f64>,
    pub(crate) bias: Vec<f64>,
}

impl DenseLayer {
    pub fn new(in_dim: usize, out_dim: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        let layer = Self {
            in_dim,
            out_dim,
            weights,
            bias,
        };
        layer.validate(0)?;
        Ok(layer)
    }

    fn validate(&self, layer: usize) -> Result<()> {
        if self.weights.len() != self.in_dim * self.out_dim {
            return Err(ModelError::ParameterLength {
                layer,
                what: "weights",
                expected: self.in_dim * self.out_dim,
                got: self.weights.len(),
            });
        }
        if self.bias.len() != self.out_dim {
            return Err(ModelError::ParameterLength {
                layer,
                what: "bias",
                expected: self.out_dim,
                got: self.bias.len(),
            });
        }
        if self
            .weights
            .iter()
            .chain(&self.bias)
            .any(|v| !v.is_finite())
        {
            return Err(ModelError::NonFiniteParameter { layer });
        }
        Ok(())
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    fn row(&self, r: usize) -> &[f64] {
        &self.weights[r * self.in_dim..(r + 1) * self.in_dim]
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.out_dim)
            .map(|r| dot(self.row(r), x) + self.bias[r])
            .collect()
    }

    fn apply_linear(&self, v: &[f64]) -> Vec<f64> {
        (0..self.out_dim).map(|r| dot(self.row(r), v)).collect()
    }

    fn apply_transpose(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.in_dim];
        for (r, &ur) in u.iter().enumerate() {
            if ur != 0.0 {
                for (o, w) in out.iter_mut().zip(self.row(r)) {
                    *o += w * ur;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Dense(DenseLayer),
    Activation(Activation),
}

impl LayerSpec {
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            LayerSpec::Dense(d) => d.apply(x),
            LayerSpec::Activation(a) => a.apply(x),
        }
    }

    /// Pushes a tangent through the layer; `input`/`output` are the primal values.
    pub(crate) fn tangent(&self, input: &[f64], output: &[f64], t: &[f64]) -> Vec<f64> {
        match self {
            LayerSpec::Dense(d) => d.apply_linear(t),
            LayerSpec::Activation(a) => a.derivative_apply(input, output, t),
        }
    }

    pub(crate) fn cotangent(&self, input: &[f64], output: &[f64], u: &[f64]) -> Vec<f64> {
        match self {
            LayerSpec::Dense(d) => d.apply_transpose(u),
            LayerSpec::Activation(a) => a.derivative_apply(input, output, u),
        }
    }
}

/// Differentiable map `f: ℝ^M → ℝ^K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel", into = "RawModel")]
pub struct Model {
    input_dim: usize,
    output_dim: usize,
    layers: Vec<LayerSpec>,
}

impl Model {
    pub fn new(input_dim: usize, output_dim: usize, layers: Vec<LayerSpec>) -> Result<Self> {
        let mut width = input_dim;
        for (i, layer) in layers.iter().enumerate() {
            if let LayerSpec::Dense(d) = layer {
                if d.in_dim != width {
                    return Err(ModelError::DimensionChain {
                        layer: i,
                        expected: d.in_dim,
                        got: width,
                    });
                }
                d.validate(i)?;
                width = d.out_dim;
            }
        }
        if width != output_dim {
            return Err(ModelError::DimensionChain {
                layer: layers.len(),
                expected: output_dim,
                got: width,
            });
        }
        Ok(Self {
            input_dim,
            output_dim,
            layers,
        })
    }

    /// Single dense layer `x ↦ W x + b` with no activation.
    pub fn linear(weights: &[Vec<f64>], bias: Vec<f64>) -> Result<Self> {
        let out = weights.len();
        let inp = weights.first().map_or(0, Vec::len);
        let dense = DenseLayer::new(inp, out, weights.concat(), bias)?;
        Self::new(inp, out, vec![LayerSpec::Dense(dense)])
    }

    pub fn identity(n: usize) -> Self {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| unit(n, i)).collect();
        Self::linear(&rows, vec![0.0; n]).expect("identity is well formed")
    }

    /// Randomly initialized MLP with layer widths `sizes`, `hidden` after every
    /// inner dense layer and `output` after the last one.
    ///
    /// Weights are drawn uniformly from ±sqrt(6 / (fan_in + fan_out)).
    pub fn init_mlp<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        assert!(
            sizes.len() >= 2,
            "an MLP needs at least input and output widths"
        );
        let mut layers = Vec::new();
        for (i, pair) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weights = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            layers.push(LayerSpec::Dense(DenseLayer::new(
                fan_in,
                fan_out,
                weights,
                vec![0.0; fan_out],
            )?));
            let act = if i + 2 == sizes.len() { output } else { hidden };
            if act != Activation::Identity {
                layers.push(LayerSpec::Activation(act));
            }
        }
        Self::new(sizes[0], sizes[sizes.len() - 1], layers)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [LayerSpec] {
        &mut self.layers
    }

    /// Whether the last non-trivial layer is a softmax (outputs are probabilities).
    pub fn ends_with_softmax(&self) -> bool {
        self.layers
            .iter()
            .rev()
            .find(|l| !matches!(l, LayerSpec::Activation(Activation::Identity)))
            .is_some_and(|l| matches!(l, LayerSpec::Activation(Activation::Softmax)))
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(ModelError::InputShape {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// All intermediate values: `trace[0] = x`, `trace[i + 1] = layer_i(trace[i])`.
    pub(crate) fn trace(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_input(x)?;
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(x.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let next = layer.apply(values.last().expect("non-empty"));
            if next.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::NonFinite { layer: i });
            }
            values.push(next);
        }
        Ok(values)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.trace(x)?.pop().expect("trace holds the input"))
    }

    /// Caches a forward pass at `x` for repeated derivative queries.
    pub fn linearize(&self, x: &[f64]) -> Result<Linearization<'_>> {
        Ok(Linearization {
            model: self,
            trace: self.trace(x)?,
        })
    }

    /// `J_f(x)ᵀ u`.
    pub fn vjp(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.linearize(x)?.vjp(u)
    }

    /// `J_f(x) v`.
    pub fn jvp(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.linearize(x)?.jvp(v)
    }

    /// Materialized `K × M` Jacobian, refused when `K·M > max_elems`.
    pub fn jacobian(&self, x: &[f64], max_elems: usize) -> Result<Matrix> {
        self.linearize(x)?.jacobian(max_elems)
    }

    pub fn to_json(&self) -> String {
        crate::io::to_json_string(self).expect("model serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: RawModel = serde_json::from_str(s)?;
        raw.try_into()
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// A model together with a cached forward trace at one input.
#[derive(Debug, Clone)]
pub struct Linearization<'m> {
    model: &'m Model,
    trace: Vec<Vec<f64>>,
}

impl Linearization<'_> {
    pub fn input(&self) -> &[f64] {
        &self.trace[0]
    }

    pub fn output(&self) -> &[f64] {
        self.trace.last().expect("trace holds the input")
    }

    pub fn jvp(&self, v: &[f64]) -> Result<Vec<f64>> {
        Ok(self.jvp_trace(v)?.pop().expect("non-empty"))
    }

    /// Tangents at every layer boundary, aligned with the forward trace.
    pub(crate) fn jvp_trace(&self, v: &[f64]) -> Result<Vec<Vec<f64>>> {
        if v.len() != self.model.input_dim {
            return Err(ModelError::InputShape {
                expected: self.model.input_dim,
                got: v.len(),
            });
        }
        let mut tangents = Vec::with_capacity(self.trace.len());
        tangents.push(v.to_vec());
        for (i, layer) in self.model.layers.iter().enumerate() {
            let t = layer.tangent(
                &self.trace[i],
                &self.trace[i + 1],
                tangents.last().expect("non-empty"),
            );
            tangents.push(t);
        }
        Ok(tangents)
    }

    pub fn vjp(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.model.output_dim {
            return Err(ModelError::InputShape {
                expected: self.model.output_dim,
                got: u.len(),
            });
        }
        let mut g = u.to_vec();
        for (i, layer) in self.model.layers.iter().enumerate().rev() {
            g = layer.cotangent(&self.trace[i], &self.trace[i + 1], &g);
        }
        Ok(g)
    }

    pub fn jacobian(&self, max_elems: usize) -> Result<Matrix> {
        let (k, m) = (self.model.output_dim, self.model.input_dim);
        let elems = k.saturating_mul(m);
        if elems > max_elems {
            return Err(ModelError::SizeGuard {
                elems,
                max: max_elems,
            });
        }
        let mut jac = Matrix::zeros(k, m);
        for r in 0..k {
            let row = self.vjp(&unit(k, r))?;
            for (c, v) in row.into_iter().enumerate() {
                jac.set(r, c, v);
            }
        }
        Ok(jac)
    }

    /// Pre-activation values feeding every ReLU layer: `(layer index, inputs)`.
    pub(crate) fn relu_inputs(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.model
            .layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, LayerSpec::Activation(Activation::Relu)))
            .map(|(i, _)| (i, self.trace[i].as_slice()))
    }
}

#[derive(Serialize, Deserialize)]
struct RawModel {
    input_dim: usize,
    output_dim: usize,
    layers: Vec<RawLayer>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum RawLayer {
    Dense {
        #[serde(rename = "in")]
        in_dim: usize,
        #[serde(rename = "out")]
        out_dim: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
    Activation {
        tag: String,
    },
}

impl TryFrom<RawModel> for Model {
    type Error = ModelError;

    fn try_from(raw: RawModel) -> Result<Self> {
        let layers = raw
            .layers
            .into_iter()
            .map(|l| match l {
                RawLayer::Dense {
                    in_dim,
                    out_dim,
                    weights,
                    bias,
                } => Ok(LayerSpec::Dense(DenseLayer {
                    in_dim,
                    out_dim,
                    weights,
                    bias,
                })),
                RawLayer::Activation { tag } => Ok(LayerSpec::Activation(tag.parse()?)),
            })
            .collect::<Result<Vec<_>>>()?;
        Model::new(raw.input_dim, raw.output_dim, layers)
    }
}

impl From<Model> for RawModel {
    fn from(m: Model) -> Self {
        RawModel {
            input_dim: m.input_dim,
            output_dim: m.output_dim,
            layers: m
                .layers
                .into_iter()
                .map(|l| match l {
                    LayerSpec::Dense(d) => RawLayer::Dense {
                        in_dim: d.in_dim,
                        out_dim: d.out_dim,
                        weights: d.weights,
                        bias: d.bias,
                    },
                    LayerSpec::Activation(a) => RawLayer::Activation {
                        tag: a.as_str().to_string(),
                    },
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_vec, rng_from_seed};

    fn relu_model() -> Model {
        let dense = DenseLayer::new(2, 2, vec![1.0, 0.0, 0.0, -1.0], vec![0.0, 0.0]).unwrap();
        Model::new(
            2,
            2,
            vec![
                LayerSpec::Dense(dense),
                LayerSpec::Activation(Activation::Relu),
            ],
        )
        .unwrap()
    }

    #[test]
    fn identity_forward() {
        assert_eq!(
            Model::identity(2).forward(&[1.0, 2.0]).unwrap(),
            vec![1.0, 2.0]
        );
    }

    #[test]
    fn relu_clamps_negative() {
        assert_eq!(relu_model().forward(&[3.0, 5.0]).unwrap(), vec![3.0, 0.0]);
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let m = relu_model();
        // Second pre-activation is exactly zero at x = (1, 0).
        assert_eq!(m.jvp(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(m.vjp(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_products() {
        let m = Model::identity(2);
        assert_eq!(m.vjp(&[0.3, 0.4], &[1.0, 0.0]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(m.jvp(&[0.3, 0.4], &[0.0, 1.0]).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn linear_products_are_w_and_wt() {
        let w = vec![vec![1.0, 2.0, 3.0], vec![-1.0, 0.5, 4.0]];
        let m = Model::linear(&w, vec![0.1, 0.2]).unwrap();
        let x = [0.3, -0.2, 0.9];
        assert_eq!(m.jvp(&x, &[1.0, 1.0, 1.0]).unwrap(), vec![6.0, 3.5]);
        assert_eq!(m.vjp(&x, &[1.0, 2.0]).unwrap(), vec![-1.0, 3.0, 11.0]);
        let j = m.jacobian(&x, 100).unwrap();
        assert_eq!(j, Matrix::from_rows(&w));
    }

    #[test]
    fn softmax_output_is_probability_vector() {
        let mut rng = rng_from_seed(4);
        let m =
            Model::init_mlp(&[3, 5, 4], Activation::Tanh, Activation::Softmax, &mut rng).unwrap();
        assert!(m.ends_with_softmax());
        for _ in 0..20 {
            let x = gaussian_vec(&mut rng, 3);
            let y = m.forward(&x).unwrap();
            assert!(y.iter().all(|&v| v >= 0.0));
            assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_is_stable_for_large_inputs() {
        let s = softmax(&[1000.0, 1000.0, -1000.0]);
        assert!((s[0] - 0.5).abs() < 1e-15 && s[2] == 0.0);
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn input_shape_is_checked() {
        let m = Model::identity(3);
        assert!(matches!(
            m.forward(&[1.0]),
            Err(ModelError::InputShape {
                expected: 3,
                got: 1
            })
        ));
        assert!(m.vjp(&[0.0; 3], &[1.0]).is_err());
        assert!(m.jvp(&[0.0; 3], &[1.0]).is_err());
    }

    #[test]
    fn non_finite_forward_is_reported() {
        let m = Model::linear(&[vec![1e300]], vec![0.0]).unwrap();
        assert!(matches!(
            m.forward(&[1e300]),
            Err(ModelError::NonFinite { layer: 0 })
        ));
    }

    #[test]
    fn jacobian_guard() {
        let m = Model::identity(4);
        match m.jacobian(&[0.0; 4], 15) {
            Err(e @ ModelError::SizeGuard { elems: 16, max: 15 }) => {
                assert!(e.to_string().contains("matrix-free"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let mut rng = rng_from_seed(11);
        let m = Model::init_mlp(
            &[4, 6, 3],
            Activation::Sigmoid,
            Activation::Identity,
            &mut rng,
        )
        .unwrap();
        let back = Model::from_json(&m.to_json()).unwrap();
        assert_eq!(m, back);
        let id = Model::identity(3);
        let id_back = Model::from_json(&id.to_json()).unwrap();
        for _ in 0..10 {
            let x = gaussian_vec(&mut rng, 3);
            let a = id.forward(&x).unwrap();
            let b = id_back.forward(&x).unwrap();
            assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }

    #[test]
    fn file_format_matches_documented_layout() {
        let json = r#"{"input_dim":2,"output_dim":1,"layers":[
            {"kind":"dense","in":2,"out":1,"weights":[1.0,-1.0],"bias":[0.5]},
            {"kind":"activation","tag":"relu"}]}"#;
        let m = Model::from_json(json).unwrap();
        assert_eq!(m.forward(&[2.0, 1.0]).unwrap(), vec![1.5]);
    }

    #[test]
    fn mismatched_weights_are_rejected() {
        let json = r#"{"input_dim":2,"output_dim":1,"layers":[
            {"kind":"dense","in":2,"out":1,"weights":[1.0],"bias":[0.5]}]}"#;
        assert!(matches!(
            Model::from_json(json),
            Err(ModelError::ParameterLength {
                what: "weights",
                ..
            })
        ));
        let chain = r#"{"input_dim":3,"output_dim":1,"layers":[
            {"kind":"dense","in":2,"out":1,"weights":[1.0,1.0],"bias":[0.5]}]}"#;
        assert!(matches!(
            Model::from_json(chain),
            Err(ModelError::DimensionChain { .. })
        ));
    }

    #[test]
    fn unknown_activation_is_rejected() {
        let json =
            r#"{"input_dim":1,"output_dim":1,"layers":[{"kind":"activation","tag":"gelu"}]}"#;
        match Model::from_json(json) {
            Err(ModelError::UnknownActivation(tag)) => assert_eq!(tag, "gelu"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_json_is_rejected() {
        assert!(matches!(
            Model::from_json("{not json"),
            Err(ModelError::Json(_))
        ));
    }
}
