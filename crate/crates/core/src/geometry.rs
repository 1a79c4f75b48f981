//! Poincaré-ball primitives: Möbius operations, exp/log maps at the
//! origin and at arbitrary base points, conformal factor, geodesic
//! distance, parallel transport, and the tangent-line midpoint
//! experiment.
//!
//! All operations are pure. Points returned by ball-producing operations
//! are re-projected inside the boundary margin; floating-point drift at
//! the boundary is the dominant failure mode of hyperbolic code.

use thiserror::Error;

/// Numerical margin keeping points strictly inside the ball.
pub const BALL_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("curvature must be positive, got {0}")]
    BadCurvature(f64),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("curvature mismatch: {0} vs {1}")]
    CurvatureMismatch(f64, f64),
    #[error("point with sqrt(c)*norm = {0} is outside the open ball")]
    OutsideBall(f64),
    #[error("degenerate chord: endpoints coincide")]
    DegenerateChord,
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, GeometryError>;

/// Positive ball curvature magnitude; the ball radius is 1/√c.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Curvature(f64);

impl Curvature {
    pub fn new(c: f64) -> Result<Self> {
        if c > 0.0 && c.is_finite() {
            Ok(Curvature(c))
        } else {
            Err(GeometryError::BadCurvature(c))
        }
    }

    pub fn get(&self) -> f64 {
        self.0
    }

    pub fn sqrt(&self) -> f64 {
        self.0.sqrt()
    }
}

/// A vector constrained to the open ball of radius 1/√c.
#[derive(Debug, Clone, PartialEq)]
pub struct PoincarePoint {
    coords: Vec<f64>,
    curvature: Curvature,
}

impl PoincarePoint {
    /// Strict construction: rejects points outside the margin.
    pub fn new(coords: Vec<f64>, curvature: Curvature) -> Result<Self> {
        let sc_norm = curvature.sqrt() * norm(&coords);
        if sc_norm >= 1.0 - BALL_EPS {
            return Err(GeometryError::OutsideBall(sc_norm));
        }
        Ok(PoincarePoint { coords, curvature })
    }

    /// Clip any point at or beyond the margin back onto radius
    /// (1−1e-12)/√c; applied after every ball-producing operation.
    pub fn project(coords: Vec<f64>, curvature: Curvature) -> Self {
        let mut coords = coords;
        let sc = curvature.sqrt();
        let n = norm(&coords);
        let max_norm = (1.0 - BALL_EPS) / sc;
        if n > max_norm {
            let f = max_norm / n;
            for v in &mut coords {
                *v *= f;
            }
        }
        PoincarePoint { coords, curvature }
    }

    pub fn origin(dim: usize, curvature: Curvature) -> Self {
        PoincarePoint {
            coords: vec![0.0; dim],
            curvature,
        }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn curvature(&self) -> Curvature {
        self.curvature
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.coords)
    }

    pub fn is_origin(&self) -> bool {
        self.coords.iter().all(|&v| v == 0.0)
    }

    fn check_compatible(&self, other: &PoincarePoint) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(GeometryError::DimensionMismatch(self.dim(), other.dim()));
        }
        if self.curvature != other.curvature {
            return Err(GeometryError::CurvatureMismatch(
                self.curvature.get(),
                other.curvature.get(),
            ));
        }
        Ok(())
    }

    pub fn neg(&self) -> PoincarePoint {
        PoincarePoint {
            coords: self.coords.iter().map(|v| -v).collect(),
            curvature: self.curvature,
        }
    }
}

/// A tangent vector anchored at a base point (origin unless stated).
#[derive(Debug, Clone)]
pub struct TangentVector {
    pub coords: Vec<f64>,
    pub base: PoincarePoint,
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn artanh(x: f64) -> f64 {
    x.clamp(-(1.0 - 1e-15), 1.0 - 1e-15).atanh()
}

/// Gyro-addition a ⊕_c b.
pub fn mobius_add(a: &PoincarePoint, b: &PoincarePoint) -> Result<PoincarePoint> {
    a.check_compatible(b)?;
    let c = a.curvature.get();
    let ab = dot(&a.coords, &b.coords);
    let na2 = dot(&a.coords, &a.coords);
    let nb2 = dot(&b.coords, &b.coords);
    let ka = 1.0 + 2.0 * c * ab + c * nb2;
    let kb = 1.0 - c * na2;
    let den = 1.0 + 2.0 * c * ab + c * c * na2 * nb2;
    let coords = a
        .coords
        .iter()
        .zip(&b.coords)
        .map(|(x, y)| (ka * x + kb * y) / den)
        .collect();
    Ok(PoincarePoint::project(coords, a.curvature))
}

/// Möbius scalar multiplication r ⊗_c p.
pub fn mobius_scalar_mul(r: f64, p: &PoincarePoint) -> PoincarePoint {
    let c = p.curvature;
    let n = p.norm();
    if n == 0.0 {
        return p.clone();
    }
    let sc = c.sqrt();
    let factor = (r * artanh(sc * n)).tanh() / (sc * n);
    let coords = p.coords.iter().map(|v| factor * v).collect();
    PoincarePoint::project(coords, c)
}

/// Conformal factor λ_v = 2/(1 − c‖v‖²).
pub fn conformal_factor(v: &PoincarePoint) -> f64 {
    let c = v.curvature.get();
    2.0 / (1.0 - c * dot(&v.coords, &v.coords))
}

/// exp_0^c(x) = tanh(√c‖x‖)·x/(√c‖x‖); the zero vector maps to the origin.
pub fn exp_map_origin(x: &[f64], c: Curvature) -> PoincarePoint {
    let n = norm(x);
    if n == 0.0 {
        return PoincarePoint::origin(x.len(), c);
    }
    let sc = c.sqrt();
    let factor = (sc * n).tanh() / (sc * n);
    PoincarePoint::project(x.iter().map(|v| factor * v).collect(), c)
}

/// Result of a log map; `saturated` flags inputs at the clamp boundary.
#[derive(Debug, Clone)]
pub struct LogResult {
    pub coords: Vec<f64>,
    pub saturated: bool,
}

/// log_0^c(p) = artanh(√c‖p‖)·p/(√c‖p‖); inverse of `exp_map_origin`.
pub fn log_map_origin(p: &PoincarePoint) -> LogResult {
    let n = p.norm();
    if n == 0.0 {
        return LogResult {
            coords: vec![0.0; p.dim()],
            saturated: false,
        };
    }
    let sc = p.curvature.sqrt();
    let saturated = sc * n >= 1.0 - 1e-15;
    let factor = artanh(sc * n) / (sc * n);
    LogResult {
        coords: p.coords.iter().map(|v| factor * v).collect(),
        saturated,
    }
}

/// exp map at base v, in the form that reduces exactly to the origin map
/// when v = 0: v ⊕_c (tanh(√c·λ_v‖x‖/2)·x/(√c‖x‖)).
pub fn exp_map_at(v: &PoincarePoint, x: &[f64]) -> Result<PoincarePoint> {
    if v.is_origin() {
        return Ok(exp_map_origin(x, v.curvature));
    }
    let n = norm(x);
    if n == 0.0 {
        return Ok(v.clone());
    }
    let c = v.curvature;
    let sc = c.sqrt();
    let lam = conformal_factor(v);
    let factor = (sc * lam * n / 2.0).tanh() / (sc * n);
    let q = PoincarePoint::project(x.iter().map(|t| factor * t).collect(), c);
    mobius_add(v, &q)
}

/// log map at base v: (2/(√c·λ_v))·artanh(√c‖−v⊕_c p‖)·unit(−v⊕_c p).
/// Sign convention fixed so the v = 0 case reduces to the origin map.
pub fn log_map_at(v: &PoincarePoint, p: &PoincarePoint) -> Result<TangentVector> {
    v.check_compatible(p)?;
    if v.is_origin() {
        return Ok(TangentVector {
            coords: log_map_origin(p).coords,
            base: v.clone(),
        });
    }
    let w = mobius_add(&v.neg(), p)?;
    let n = w.norm();
    if n == 0.0 {
        return Ok(TangentVector {
            coords: vec![0.0; v.dim()],
            base: v.clone(),
        });
    }
    let sc = v.curvature.sqrt();
    let lam = conformal_factor(v);
    let factor = 2.0 / (sc * lam) * artanh(sc * n) / n;
    Ok(TangentVector {
        coords: w.coords.iter().map(|t| factor * t).collect(),
        base: v.clone(),
    })
}

/// Transport of an origin tangent vector to base v. The standard ball
/// transport along the geodesic from 0 to v scales by λ_0/λ_v composed
/// with the gyration gyr[v, 0] = id, so the map is x ↦ (λ_0/λ_v)·x.
pub fn parallel_transport_from_origin(v: &PoincarePoint, x: &[f64]) -> TangentVector {
    let factor = 2.0 / conformal_factor(v);
    TangentVector {
        coords: x.iter().map(|t| factor * t).collect(),
        base: v.clone(),
    }
}

/// Inverse transport back to the origin.
pub fn parallel_transport_to_origin(v: &PoincarePoint, x: &[f64]) -> Vec<f64> {
    let factor = conformal_factor(v) / 2.0;
    x.iter().map(|t| factor * t).collect()
}

/// Geodesic distance d = (2/√c)·artanh(√c‖−p1 ⊕_c p2‖).
pub fn hyperbolic_distance(p1: &PoincarePoint, p2: &PoincarePoint) -> Result<f64> {
    p1.check_compatible(p2)?;
    let w = mobius_add(&p1.neg(), p2)?;
    let sc = p1.curvature.sqrt();
    Ok(2.0 / sc * artanh(sc * w.norm()))
}

/// One trial of the tangent-line midpoint construction.
#[derive(Debug, Clone)]
pub struct MidpointTrial {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub alpha: f64,
    pub approx_midpoint: [f64; 2],
    pub ideal_midpoint: [f64; 2],
    /// Arc distance between approximated and ideal midpoints.
    pub error: f64,
}

/// Midpoint approximation on a constant-curvature arc (unit circle).
///
/// Endpoints x, y sit symmetrically about the top of the circle,
/// separated by `arc_angle`. The ideal midpoint comes from projecting the
/// chord midpoint perpendicularly onto the arc. For each α, a line
/// through y at angle α to the chord receives the projections of both
/// endpoints; their midpoint is projected back onto the circle along the
/// line's normal, and the arc error to the ideal midpoint is recorded.
pub fn midpoint_experiment(arc_angle: f64, alpha_grid: &[f64]) -> Result<Vec<MidpointTrial>> {
    if !(arc_angle > 0.0 && arc_angle < std::f64::consts::PI) {
        return Err(GeometryError::Invalid(format!(
            "arc angle {arc_angle} outside (0, pi)"
        )));
    }
    let half = arc_angle / 2.0;
    let top = std::f64::consts::FRAC_PI_2;
    let x = [(top + half).cos(), (top + half).sin()];
    let y = [(top - half).cos(), (top - half).sin()];
    if (x[0] - y[0]).abs() < 1e-15 && (x[1] - y[1]).abs() < 1e-15 {
        return Err(GeometryError::DegenerateChord);
    }
    let ideal = [top.cos(), top.sin()];
    let chord = [x[0] - y[0], x[1] - y[1]];
    let chord_len = (chord[0] * chord[0] + chord[1] * chord[1]).sqrt();
    let chord_dir = [chord[0] / chord_len, chord[1] / chord_len];

    let mut trials = Vec::with_capacity(alpha_grid.len());
    for &alpha in alpha_grid {
        if alpha.abs() >= std::f64::consts::FRAC_PI_2 {
            return Err(GeometryError::Invalid(format!(
                "alpha {alpha} outside (-pi/2, pi/2)"
            )));
        }
        // line through y with direction chord_dir rotated by alpha
        let (s, c) = alpha.sin_cos();
        let d = [
            c * chord_dir[0] - s * chord_dir[1],
            s * chord_dir[0] + c * chord_dir[1],
        ];
        // project x onto the line, then take the midpoint of y and that
        // projection along the line (mid-segment construction)
        let t = chord[0] * d[0] + chord[1] * d[1];
        let pm = [y[0] + 0.5 * t * d[0], y[1] + 0.5 * t * d[1]];
        // project pm onto the circle along the line's normal; the normal
        // through pm meets the circle where |pm + u·n| = 1
        let n = [-d[1], d[0]];
        let b = pm[0] * n[0] + pm[1] * n[1];
        let cc = pm[0] * pm[0] + pm[1] * pm[1] - 1.0;
        let disc = b * b - cc;
        if disc < 0.0 {
            return Err(GeometryError::Invalid(format!(
                "tangent-line normal misses the circle at alpha {alpha}"
            )));
        }
        let u1 = -b + disc.sqrt();
        let u2 = -b - disc.sqrt();
        let cand1 = [pm[0] + u1 * n[0], pm[1] + u1 * n[1]];
        let cand2 = [pm[0] + u2 * n[0], pm[1] + u2 * n[1]];
        // pick the intersection on the near arc
        let approx = if cand1[0] * ideal[0] + cand1[1] * ideal[1]
            >= cand2[0] * ideal[0] + cand2[1] * ideal[1]
        {
            cand1
        } else {
            cand2
        };
        let cosang = (approx[0] * ideal[0] + approx[1] * ideal[1]).clamp(-1.0, 1.0);
        let error = cosang.acos();
        trials.push(MidpointTrial {
            x,
            y,
            alpha,
            approx_midpoint: approx,
            ideal_midpoint: ideal,
            error,
        });
    }
    Ok(trials)
}
