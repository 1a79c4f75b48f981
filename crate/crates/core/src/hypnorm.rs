//! The hyperbolic normalization function ω, its cascaded form Ω, the
//! normalization layer configuration, and the executable lemma/theorem
//! identities.

use thiserror::Error;

use crate::geometry::{self, Curvature};
use crate::tensor::{Graph, NodeId, Result as TensorResult};

#[derive(Debug, Error)]
pub enum HypnormError {
    #[error("empty layer-output list")]
    EmptyCascade,
    #[error("scale must be positive, got {0}")]
    BadScale(f64),
    #[error("layer {0} is not linear (bias or nonlinearity present)")]
    NonLinearLayer(usize),
    #[error("incompatible layer shapes: layer {layer} expects {expected} inputs, got {got}")]
    ShapeMismatch {
        layer: usize,
        expected: usize,
        got: usize,
    },
}

/// Where the normalization layer sits inside a stacked model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// After every layer (the canonical chaining).
    PerLayer,
    /// Only after the last layer.
    Final,
    /// Once at the network midpoint; deep stacks otherwise starve
    /// gradients through the repeated tanh.
    Middle,
}

/// Curvature, output scale, and placement of the normalization layer.
#[derive(Debug, Clone, Copy)]
pub struct NormConfig {
    pub curvature: Curvature,
    pub scale: f64,
    pub placement: Placement,
}

impl NormConfig {
    pub fn new(c: f64, scale: f64, placement: Placement) -> Result<Self, HypnormError> {
        let curvature = Curvature::new(c).map_err(|_| HypnormError::BadScale(c))?;
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(HypnormError::BadScale(scale));
        }
        Ok(NormConfig {
            curvature,
            scale,
            placement,
        })
    }

    /// Scale defaults follow the grid-searched pairings: 5 for c in
    /// [0.3, 0.5], 3 for larger curvatures.
    pub fn default_scale_for(c: f64) -> f64 {
        if c <= 0.5 {
            5.0
        } else {
            3.0
        }
    }
}

/// ω(x) = tanh(√c‖x‖)/(√c‖x‖), with the continuous limit ω(0) = 1.
pub fn omega(x: &[f64], c: Curvature) -> f64 {
    omega_of_norm(geometry::norm(x), c)
}

pub fn omega_of_norm(n: f64, c: Curvature) -> f64 {
    let t = c.sqrt() * n;
    if t == 0.0 {
        1.0
    } else {
        // tanh(t)/t can round a hair above 1 for tiny t; the codomain
        // is (0, 1]
        (t.tanh() / t).min(1.0)
    }
}

/// s·ω(x)·x — the normalization layer on a single feature vector.
pub fn apply_norm(x: &[f64], cfg: &NormConfig) -> Vec<f64> {
    let w = cfg.scale * omega(x, cfg.curvature);
    x.iter().map(|v| w * v).collect()
}

/// Ω over a cascade: the product of per-layer ω values.
pub fn omega_cascade(layer_outputs: &[Vec<f64>], c: Curvature) -> Result<f64, HypnormError> {
    if layer_outputs.is_empty() {
        return Err(HypnormError::EmptyCascade);
    }
    Ok(layer_outputs.iter().map(|x| omega(x, c)).product())
}

/// Graph builder for the normalization layer: out = s·ω(x)·x, applied
/// row-wise so every node vector is normalized independently. Fully
/// differentiable; shares the code path used by every N-variant layer.
pub fn apply_norm_node(g: &mut Graph, x: NodeId, cfg: &NormConfig) -> TensorResult<NodeId> {
    let sc = cfg.curvature.sqrt();
    let n = g.row_norm_l2(x);
    let t = g.scale_const(n, sc);
    let th = g.tanh(t);
    // guard the 0/0 limit at ‖x‖ = 0: tanh(t)/t -> 1, and the numerator
    // is exactly 0 there, so a tiny denominator offset is exact at zero
    // and below round-off elsewhere
    let t_safe = g.add_const(t, 1e-300);
    let w = g.div(th, t_safe)?;
    let scaled = g.scale(x, w)?;
    Ok(g.scale_const(scaled, cfg.scale))
}

/// A dense layer used by the lemma/theorem verifiers.
#[derive(Debug, Clone)]
pub struct VerifyLayer {
    /// Row-major out×in weight matrix.
    pub weight: Vec<Vec<f64>>,
    pub bias: Option<Vec<f64>>,
    pub tanh_nonlinearity: bool,
}

impl VerifyLayer {
    pub fn linear(weight: Vec<Vec<f64>>) -> Self {
        VerifyLayer {
            weight,
            bias: None,
            tanh_nonlinearity: false,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight[0].len()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.len()
    }

    pub fn is_linear(&self) -> bool {
        self.bias.is_none() && !self.tanh_nonlinearity
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .weight
            .iter()
            .map(|row| row.iter().zip(x).map(|(w, v)| w * v).sum())
            .collect();
        if let Some(b) = &self.bias {
            for (o, bi) in out.iter_mut().zip(b) {
                *o += bi;
            }
        }
        if self.tanh_nonlinearity {
            for o in out.iter_mut() {
                *o = o.tanh();
            }
        }
        out
    }
}

fn check_shapes(layers: &[VerifyLayer], input_dim: usize) -> Result<(), HypnormError> {
    let mut d = input_dim;
    for (i, l) in layers.iter().enumerate() {
        if l.in_dim() != d {
            return Err(HypnormError::ShapeMismatch {
                layer: i,
                expected: l.in_dim(),
                got: d,
            });
        }
        d = l.out_dim();
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct DeviationReport {
    pub per_input: Vec<f64>,
    pub max_deviation: f64,
}

/// Chained exp∘f∘log per layer vs the collapsed exp∘Fₙ∘log form.
/// log∘exp = id makes the two expressions identical up to round-off.
pub fn verify_lemma2(
    layers: &[VerifyLayer],
    inputs: &[Vec<f64>],
    c: Curvature,
) -> Result<DeviationReport, HypnormError> {
    if layers.is_empty() || inputs.is_empty() {
        return Err(HypnormError::EmptyCascade);
    }
    check_shapes(layers, inputs[0].len())?;
    let mut per_input = Vec::with_capacity(inputs.len());
    for x in inputs {
        // chained: each layer wrapped in exp/log on the ball side
        let mut p = geometry::exp_map_origin(x, c);
        for l in layers {
            let t = geometry::log_map_origin(&p).coords;
            p = geometry::exp_map_origin(&l.apply(&t), c);
        }
        // collapsed: exp of the plain Euclidean cascade
        let mut y = x.clone();
        for l in layers {
            y = l.apply(&y);
        }
        let q = geometry::exp_map_origin(&y, c);
        let dev = p
            .coords()
            .iter()
            .zip(q.coords())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        per_input.push(dev);
    }
    let max_deviation = per_input.iter().cloned().fold(0.0, f64::max);
    Ok(DeviationReport {
        per_input,
        max_deviation,
    })
}

#[derive(Debug, Clone)]
pub struct Theorem1Report {
    /// Per input: (chained value, product-form value, max abs deviation).
    pub per_input: Vec<(Vec<f64>, Vec<f64>, f64)>,
    pub max_deviation: f64,
}

/// Per-layer ω chaining (no intermediate log) against the closed-form
/// Ω(Fₙ(x))·Fₙ(x) product. The product form needs strictly linear
/// layers; the report measures how far the two readings drift apart for
/// n ≥ 2.
pub fn verify_theorem1(
    layers: &[VerifyLayer],
    inputs: &[Vec<f64>],
    c: Curvature,
) -> Result<Theorem1Report, HypnormError> {
    if layers.is_empty() || inputs.is_empty() {
        return Err(HypnormError::EmptyCascade);
    }
    if let Some(i) = layers.iter().position(|l| !l.is_linear()) {
        return Err(HypnormError::NonLinearLayer(i));
    }
    check_shapes(layers, inputs[0].len())?;
    // the product form evaluates every ω at fᵢ(x) with the raw input x,
    // so all layers must share the input dimension
    for (i, l) in layers.iter().enumerate() {
        if l.in_dim() != inputs[0].len() {
            return Err(HypnormError::ShapeMismatch {
                layer: i,
                expected: l.in_dim(),
                got: inputs[0].len(),
            });
        }
    }
    let mut per_input = Vec::with_capacity(inputs.len());
    let mut max_deviation = 0.0f64;
    for x in inputs {
        // chained: y ← ω(f(y))·f(y) layer by layer
        let mut chained = x.clone();
        for l in layers {
            let fy = l.apply(&chained);
            let w = omega(&fy, c);
            chained = fy.iter().map(|v| w * v).collect();
        }
        // product form: Ω = ∏ ω(fᵢ(x)) with every ω taken at the raw x
        let mut outputs = Vec::with_capacity(layers.len());
        let mut y = x.clone();
        for l in layers {
            y = l.apply(&y);
            outputs.push(y.clone());
        }
        let mut omega_prod = 1.0;
        for l in layers {
            omega_prod *= omega(&l.apply(x), c);
        }
        let product: Vec<f64> = outputs
            .last()
            .unwrap()
            .iter()
            .map(|v| omega_prod * v)
            .collect();
        let dev = chained
            .iter()
            .zip(&product)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        max_deviation = max_deviation.max(dev);
        per_input.push((chained, product, dev));
    }
    Ok(Theorem1Report {
        per_input,
        max_deviation,
    })
}
