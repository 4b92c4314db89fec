//! Parametric and algebraic ellipse/ellipsoid models.
//!
//! Conics are stored as `(A, B, C, D, E, F)` for
//! `A x² + B xy + C y² + D x + E y + F = 0`; quadrics as
//! `(a, b, c, d, e, f, g, h, i, j)` for
//! `a x² + b y² + c z² + d xy + e xz + f yz + g x + h y + i z + j = 0`.
//! Both are kept at unit Euclidean norm with the first nonzero coefficient
//! positive, so equal point sets have equal coefficient vectors.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix2, Matrix3, SymmetricEigen, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wraps an angle into `[-π/2, π/2)`.
fn wrap_half_turn(theta: f64) -> f64 {
    let mut t = (theta + FRAC_PI_2).rem_euclid(PI) - FRAC_PI_2;
    if t >= FRAC_PI_2 {
        t -= PI;
    }
    t
}

fn normalize_coeffs<const N: usize>(mut c: [f64; N]) -> Option<[f64; N]> {
    let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !norm.is_finite() || norm == 0.0 {
        return None;
    }
    let lead = c.iter().copied().find(|v| *v != 0.0).unwrap_or(1.0);
    let s = lead.signum() / norm;
    c.iter_mut().for_each(|v| *v *= s);
    Some(c)
}

/// An implicit surface `r(p) = 0` with a differentiable residual.
pub trait ImplicitModel {
    fn residual(&self, p: &[f64]) -> f64;
    fn gradient_norm(&self, p: &[f64]) -> f64;
}

/// Signed first-order distance `r(p) / ‖∇r(p)‖`. Negative inside the model
/// for normalized ellipse/ellipsoid coefficients.
pub fn signed_sampson<M: ImplicitModel + ?Sized>(p: &[f64], model: &M) -> Result<f64> {
    let g = model.gradient_norm(p);
    if !(g > 0.0) || !g.is_finite() {
        return Err(Error::SingularPoint);
    }
    Ok(model.residual(p) / g)
}

/// Unsigned Sampson distance of `p` from `model`.
pub fn sampson_distance<M: ImplicitModel + ?Sized>(p: &[f64], model: &M) -> Result<f64> {
    signed_sampson(p, model).map(f64::abs)
}

// ── Ellipse ───────────────────────────────────────────────────────────────

/// Ellipse in parametric form. Always canonical: `a ≥ b > 0` and the major
/// axis rotation lies in `[-π/2, π/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EllipseRepr")]
pub struct EllipseParams {
    pub center: [f64; 2],
    pub semi_axes: [f64; 2],
    pub rotation: f64,
}

#[derive(Deserialize)]
struct EllipseRepr {
    center: [f64; 2],
    semi_axes: [f64; 2],
    #[serde(default)]
    rotation: f64,
}

impl TryFrom<EllipseRepr> for EllipseParams {
    type Error = Error;
    fn try_from(r: EllipseRepr) -> Result<Self> {
        EllipseParams::new(r.center, r.semi_axes[0], r.semi_axes[1], r.rotation)
    }
}

impl EllipseParams {
    /// Builds a canonical ellipse. Swaps the axes (and turns the rotation by
    /// a quarter) when `a < b`.
    pub fn new(center: [f64; 2], a: f64, b: f64, rotation: f64) -> Result<Self> {
        let finite = center.iter().chain([&a, &b, &rotation]).all(|v| v.is_finite());
        if !finite || a <= 0.0 || b <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "ellipse needs finite fields and positive semi-axes (a={a}, b={b})"
            )));
        }
        let (a, b, rotation) = if a >= b { (a, b, rotation) } else { (b, a, rotation + FRAC_PI_2) };
        Ok(Self { center, semi_axes: [a, b], rotation: wrap_half_turn(rotation) })
    }

    /// Axis-aligned ellipse centered at the origin.
    pub fn standard(a: f64, b: f64) -> Result<Self> {
        Self::new([0.0, 0.0], a, b, 0.0)
    }

    pub fn a(&self) -> f64 {
        self.semi_axes[0]
    }

    pub fn b(&self) -> f64 {
        self.semi_axes[1]
    }

    pub fn area(&self) -> f64 {
        PI * self.a() * self.b()
    }

    /// Boundary point at parametric angle `t`.
    pub fn point_at(&self, t: f64) -> [f64; 2] {
        let (s, c) = self.rotation.sin_cos();
        let (u, v) = (self.a() * t.cos(), self.b() * t.sin());
        [self.center[0] + c * u - s * v, self.center[1] + s * u + c * v]
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        let (s, c) = self.rotation.sin_cos();
        let (dx, dy) = (p[0] - self.center[0], p[1] - self.center[1]);
        let u = (c * dx + s * dy) / self.a();
        let v = (-s * dx + c * dy) / self.b();
        u * u + v * v <= 1.0
    }

    /// Half-widths of the axis-aligned bounding box.
    pub fn half_extent(&self) -> [f64; 2] {
        let (s, c) = self.rotation.sin_cos();
        let (a2, b2) = (self.a() * self.a(), self.b() * self.b());
        [(a2 * c * c + b2 * s * s).sqrt(), (a2 * s * s + b2 * c * c).sqrt()]
    }
}

/// Unit-norm conic coefficients `(A, B, C, D, E, F)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConicCoeffs(pub [f64; 6]);

impl ConicCoeffs {
    /// Normalizes an arbitrary nonzero coefficient vector.
    pub fn from_raw(c: [f64; 6]) -> Result<Self> {
        normalize_coeffs(c).map(Self).ok_or(Error::NotAnEllipse)
    }

    pub fn discriminant(&self) -> f64 {
        let [a, b, c, ..] = self.0;
        b * b - 4.0 * a * c
    }

    pub fn is_ellipse(&self) -> bool {
        self.discriminant() < 0.0
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let [a, b, c, d, e, f] = self.0;
        a * x * x + b * x * y + c * y * y + d * x + e * y + f
    }

    pub fn gradient(&self, x: f64, y: f64) -> [f64; 2] {
        let [a, b, c, d, e, _] = self.0;
        [2.0 * a * x + b * y + d, b * x + 2.0 * c * y + e]
    }

    /// Symmetric 3×3 matrix `Q` with `[x y 1] Q [x y 1]ᵀ = eval(x, y)`.
    pub fn matrix(&self) -> Matrix3<f64> {
        let [a, b, c, d, e, f] = self.0;
        Matrix3::new(a, b / 2.0, d / 2.0, b / 2.0, c, e / 2.0, d / 2.0, e / 2.0, f)
    }

    pub fn from_matrix(q: &Matrix3<f64>) -> Result<Self> {
        Self::from_raw([
            q[(0, 0)],
            q[(0, 1)] + q[(1, 0)],
            q[(1, 1)],
            q[(0, 2)] + q[(2, 0)],
            q[(1, 2)] + q[(2, 1)],
            q[(2, 2)],
        ])
    }
}

impl ImplicitModel for ConicCoeffs {
    fn residual(&self, p: &[f64]) -> f64 {
        self.eval(p[0], p[1])
    }

    fn gradient_norm(&self, p: &[f64]) -> f64 {
        let [gx, gy] = self.gradient(p[0], p[1]);
        gx.hypot(gy)
    }
}

pub fn conic_from_ellipse(e: &EllipseParams) -> ConicCoeffs {
    let (s, c) = e.rotation.sin_cos();
    let (ia2, ib2) = (1.0 / (e.a() * e.a()), 1.0 / (e.b() * e.b()));
    let a = c * c * ia2 + s * s * ib2;
    let b = 2.0 * c * s * (ia2 - ib2);
    let cc = s * s * ia2 + c * c * ib2;
    let [x0, y0] = e.center;
    let d = -2.0 * a * x0 - b * y0;
    let ee = -b * x0 - 2.0 * cc * y0;
    let f = a * x0 * x0 + b * x0 * y0 + cc * y0 * y0 - 1.0;
    ConicCoeffs::from_raw([a, b, cc, d, ee, f]).expect("valid ellipse has nonzero coefficients")
}

pub fn ellipse_from_conic(conic: &ConicCoeffs) -> Result<EllipseParams> {
    let [a, b, c, d, e, f] = conic.0;
    if !conic.0.iter().all(|v| v.is_finite()) || !conic.is_ellipse() {
        return Err(Error::NotAnEllipse);
    }
    let m = Matrix2::new(a, b / 2.0, b / 2.0, c);
    let center = m
        .try_inverse()
        .map(|inv| inv * nalgebra::Vector2::new(-d / 2.0, -e / 2.0))
        .ok_or(Error::NotAnEllipse)?;
    let (x0, y0) = (center.x, center.y);
    let mut f0 = f + 0.5 * (d * x0 + e * y0);
    // Orient so the quadratic part is positive definite.
    let (mut a, mut b, mut c) = (a, b, c);
    if a + c < 0.0 {
        a = -a;
        b = -b;
        c = -c;
        f0 = -f0;
    }
    let half_sum = 0.5 * (a + c);
    let radius = (0.25 * (a - c) * (a - c) + 0.25 * b * b).sqrt();
    let (l_min, l_max) = (half_sum - radius, half_sum + radius);
    if !(l_min > 0.0) || !(f0 < 0.0) {
        return Err(Error::NotAnEllipse);
    }
    let major = (-f0 / l_min).sqrt();
    let minor = (-f0 / l_max).sqrt();
    let rotation = 0.5 * (-b).atan2(c - a);
    EllipseParams::new([x0, y0], major, minor, rotation).map_err(|_| Error::NotAnEllipse)
}

// ── Ellipsoid ─────────────────────────────────────────────────────────────

/// Ellipsoid in parametric form. Semi-axes are sorted descending; column `k`
/// of `orientation` is the direction of semi-axis `k`. The first two columns
/// have their largest-magnitude entry positive and the third completes a
/// right-handed frame, which makes the representation unique for distinct
/// axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "EllipsoidRepr", try_from = "EllipsoidRepr")]
pub struct EllipsoidParams {
    pub center: [f64; 3],
    pub semi_axes: [f64; 3],
    pub orientation: Matrix3<f64>,
}

#[derive(Serialize, Deserialize)]
struct EllipsoidRepr {
    center: [f64; 3],
    semi_axes: [f64; 3],
    /// Row-major rotation matrix.
    orientation: [f64; 9],
}

impl From<EllipsoidParams> for EllipsoidRepr {
    fn from(e: EllipsoidParams) -> Self {
        let r = e.orientation;
        let mut orientation = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                orientation[3 * i + j] = r[(i, j)];
            }
        }
        Self { center: e.center, semi_axes: e.semi_axes, orientation }
    }
}

impl TryFrom<EllipsoidRepr> for EllipsoidParams {
    type Error = Error;
    fn try_from(r: EllipsoidRepr) -> Result<Self> {
        EllipsoidParams::new(r.center, r.semi_axes, Matrix3::from_row_slice(&r.orientation))
    }
}

impl EllipsoidParams {
    /// Builds a canonical ellipsoid from any orthogonal orientation (either
    /// handedness) and positive semi-axes in any order.
    pub fn new(center: [f64; 3], semi_axes: [f64; 3], orientation: Matrix3<f64>) -> Result<Self> {
        let finite = center.iter().chain(&semi_axes).chain(orientation.iter()).all(|v| v.is_finite());
        if !finite || semi_axes.iter().any(|&s| s <= 0.0) {
            return Err(Error::InvalidConfig("ellipsoid needs finite fields and positive semi-axes".into()));
        }
        if (orientation.transpose() * orientation - Matrix3::identity()).amax() > 1e-8 {
            return Err(Error::InvalidConfig("ellipsoid orientation is not orthogonal".into()));
        }
        let mut order = [0usize, 1, 2];
        order.sort_by(|&i, &j| semi_axes[j].total_cmp(&semi_axes[i]));
        let axes = order.map(|k| semi_axes[k]);
        let mut cols = order.map(|k| orientation.column(k).into_owned());
        for col in cols.iter_mut().take(2) {
            let lead = col.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            if lead < 0.0 {
                *col = -*col;
            }
        }
        cols[2] = cols[0].cross(&cols[1]);
        Ok(Self { center, semi_axes: axes, orientation: Matrix3::from_columns(&cols) })
    }

    /// Axis-aligned ellipsoid centered at the origin.
    pub fn standard(a: f64, b: f64, c: f64) -> Result<Self> {
        Self::new([0.0; 3], [a, b, c], Matrix3::identity())
    }

    pub fn volume(&self) -> f64 {
        4.0 / 3.0 * PI * self.semi_axes.iter().product::<f64>()
    }

    /// Surface point along unit direction `u` of the canonical sphere.
    pub fn point_at(&self, u: [f64; 3]) -> [f64; 3] {
        let local = Vector3::new(u[0] * self.semi_axes[0], u[1] * self.semi_axes[1], u[2] * self.semi_axes[2]);
        let w = self.orientation * local;
        [self.center[0] + w.x, self.center[1] + w.y, self.center[2] + w.z]
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        let d = Vector3::new(p[0] - self.center[0], p[1] - self.center[1], p[2] - self.center[2]);
        let local = self.orientation.transpose() * d;
        (0..3).map(|k| (local[k] / self.semi_axes[k]).powi(2)).sum::<f64>() <= 1.0
    }

    pub fn half_extent(&self) -> [f64; 3] {
        let r = &self.orientation;
        [0, 1, 2].map(|i| (0..3).map(|k| (r[(i, k)] * self.semi_axes[k]).powi(2)).sum::<f64>().sqrt())
    }
}

/// Unit-norm quadric coefficients, see the module docs for the ordering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadricCoeffs(pub [f64; 10]);

impl QuadricCoeffs {
    pub fn from_raw(c: [f64; 10]) -> Result<Self> {
        normalize_coeffs(c).map(Self).ok_or(Error::NotAnEllipsoid)
    }

    /// Symmetric quadratic part, linear part and constant.
    pub fn parts(&self) -> (Matrix3<f64>, Vector3<f64>, f64) {
        let [a, b, c, d, e, f, g, h, i, j] = self.0;
        let m = Matrix3::new(a, d / 2.0, e / 2.0, d / 2.0, b, f / 2.0, e / 2.0, f / 2.0, c);
        (m, Vector3::new(g, h, i), j)
    }

    pub fn from_parts(m: &Matrix3<f64>, lin: &Vector3<f64>, constant: f64) -> Result<Self> {
        Self::from_raw([
            m[(0, 0)],
            m[(1, 1)],
            m[(2, 2)],
            m[(0, 1)] + m[(1, 0)],
            m[(0, 2)] + m[(2, 0)],
            m[(1, 2)] + m[(2, 1)],
            lin.x,
            lin.y,
            lin.z,
            constant,
        ])
    }

    pub fn eval(&self, p: &[f64]) -> f64 {
        let [a, b, c, d, e, f, g, h, i, j] = self.0;
        let (x, y, z) = (p[0], p[1], p[2]);
        a * x * x + b * y * y + c * z * z + d * x * y + e * x * z + f * y * z + g * x + h * y + i * z + j
    }

    pub fn gradient(&self, p: &[f64]) -> [f64; 3] {
        let [a, b, c, d, e, f, g, h, i, _] = self.0;
        let (x, y, z) = (p[0], p[1], p[2]);
        [
            2.0 * a * x + d * y + e * z + g,
            2.0 * b * y + d * x + f * z + h,
            2.0 * c * z + e * x + f * y + i,
        ]
    }

    pub fn is_ellipsoid(&self) -> bool {
        ellipsoid_from_quadric(self).is_ok()
    }
}

impl ImplicitModel for QuadricCoeffs {
    fn residual(&self, p: &[f64]) -> f64 {
        self.eval(p)
    }

    fn gradient_norm(&self, p: &[f64]) -> f64 {
        let g = self.gradient(p);
        (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt()
    }
}

pub fn quadric_from_ellipsoid(e: &EllipsoidParams) -> QuadricCoeffs {
    let r = e.orientation;
    let inv_sq = Matrix3::from_diagonal(&Vector3::from(e.semi_axes.map(|s| 1.0 / (s * s))));
    let m = r * inv_sq * r.transpose();
    let c = Vector3::from(e.center);
    let mc = m * c;
    QuadricCoeffs::from_parts(&m, &(-2.0 * mc), c.dot(&mc) - 1.0)
        .expect("valid ellipsoid has nonzero coefficients")
}

pub fn ellipsoid_from_quadric(q: &QuadricCoeffs) -> Result<EllipsoidParams> {
    if !q.0.iter().all(|v| v.is_finite()) {
        return Err(Error::NotAnEllipsoid);
    }
    let (mut m, mut lin, mut constant) = q.parts();
    if m.trace() < 0.0 {
        m = -m;
        lin = -lin;
        constant = -constant;
    }
    let eig = SymmetricEigen::new(m);
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::NotAnEllipsoid);
    }
    let center = eig_solve(&eig, &(-0.5 * lin));
    let f0 = constant + 0.5 * lin.dot(&center);
    if !(f0 < 0.0) {
        return Err(Error::NotAnEllipsoid);
    }
    let axes = [0, 1, 2].map(|k| (-f0 / eig.eigenvalues[k]).sqrt());
    EllipsoidParams::new([center.x, center.y, center.z], axes, eig.eigenvectors)
        .map_err(|_| Error::NotAnEllipsoid)
}

fn eig_solve(eig: &SymmetricEigen<f64, nalgebra::U3>, rhs: &Vector3<f64>) -> Vector3<f64> {
    let v = &eig.eigenvectors;
    let mut y = v.transpose() * rhs;
    for k in 0..3 {
        y[k] /= eig.eigenvalues[k];
    }
    v * y
}

// ── Fitting error ─────────────────────────────────────────────────────────

/// Grid resolution used for planar non-overlap ratios.
pub const DEFAULT_GRID_RESOLUTION: usize = 512;
/// Monte Carlo sample count used for spatial non-overlap ratios.
pub const DEFAULT_MC_SAMPLES: usize = 1_000_000;

/// Area of the symmetric difference between `fit` and `truth`, divided by
/// the area of `truth`. Evaluated at cell centers of a `resolution²` grid
/// spanning the union bounding box; `resolution` is raised to 64 if lower.
pub fn ellipse_nonoverlap(fit: &EllipseParams, truth: &EllipseParams, resolution: usize) -> f64 {
    let res = resolution.max(64);
    let (fe, te) = (fit.half_extent(), truth.half_extent());
    let lo = [0, 1].map(|k| (fit.center[k] - fe[k]).min(truth.center[k] - te[k]));
    let hi = [0, 1].map(|k| (fit.center[k] + fe[k]).max(truth.center[k] + te[k]));
    let step = [0, 1].map(|k| (hi[k] - lo[k]) / res as f64);
    let mut xor = 0usize;
    for i in 0..res {
        let x = lo[0] + (i as f64 + 0.5) * step[0];
        for j in 0..res {
            let p = [x, lo[1] + (j as f64 + 0.5) * step[1]];
            if fit.contains(p) != truth.contains(p) {
                xor += 1;
            }
        }
    }
    xor as f64 * step[0] * step[1] / truth.area()
}

/// Spatial analog of [`ellipse_nonoverlap`], estimated from `samples`
/// uniform draws over the union bounding box.
pub fn ellipsoid_nonoverlap(fit: &EllipsoidParams, truth: &EllipsoidParams, samples: usize, seed: u64) -> f64 {
    let (fe, te) = (fit.half_extent(), truth.half_extent());
    let lo = [0, 1, 2].map(|k| (fit.center[k] - fe[k]).min(truth.center[k] - te[k]));
    let hi = [0, 1, 2].map(|k| (fit.center[k] + fe[k]).max(truth.center[k] + te[k]));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = samples.max(1);
    let xor = (0..n)
        .filter(|_| {
            let p = [0, 1, 2].map(|k| rng.random_range(lo[k]..hi[k]));
            fit.contains(p) != truth.contains(p)
        })
        .count();
    let box_volume: f64 = (0..3).map(|k| hi[k] - lo[k]).product();
    xor as f64 / n as f64 * box_volume / truth.volume()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn unit_circle_conic() {
        let c = conic_from_ellipse(&EllipseParams::standard(1.0, 1.0).unwrap());
        let s = 1.0 / 3f64.sqrt();
        let expected = [s, 0.0, s, 0.0, 0.0, -s];
        for (got, want) in c.0.iter().zip(expected) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn eccentric_ellipse_conic_vanishes_on_boundary() {
        let e = EllipseParams::standard(5.0, 1.56125).unwrap();
        let c = conic_from_ellipse(&e);
        let ratio = c.0[2] / c.0[0];
        assert_relative_eq!(ratio, 25.0 / (1.56125 * 1.56125), max_relative = 1e-12);
        for k in 0..5 {
            let p = e.point_at(k as f64 * 1.3);
            assert!(c.eval(p[0], p[1]).abs() < 1e-12);
        }
        assert!(c.is_ellipse());
    }

    #[test]
    fn circle_from_conic() {
        let s = 1.0 / 3f64.sqrt();
        let e = ellipse_from_conic(&ConicCoeffs([s, 0.0, s, 0.0, 0.0, -s])).unwrap();
        assert!(e.center[0].abs() < 1e-15 && e.center[1].abs() < 1e-15);
        assert_relative_eq!(e.a(), 1.0, epsilon = 1e-14);
        assert_relative_eq!(e.b(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn parabola_is_rejected() {
        let s = 1.0 / 2f64.sqrt();
        let c = ConicCoeffs([s, 0.0, 0.0, 0.0, -s, 0.0]);
        assert_eq!(ellipse_from_conic(&c), Err(Error::NotAnEllipse));
    }

    #[test]
    fn imaginary_ellipse_is_rejected() {
        // x² + y² + 1 = 0 has no real points.
        let c = ConicCoeffs::from_raw([1.0, 0.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(ellipse_from_conic(&c), Err(Error::NotAnEllipse));
    }

    #[test]
    fn canonicalization_swaps_axes() {
        let e = EllipseParams::new([1.0, 2.0], 1.0, 3.0, 0.2).unwrap();
        assert_eq!(e.semi_axes, [3.0, 1.0]);
        assert_relative_eq!(e.rotation, 0.2 + FRAC_PI_2 - PI, epsilon = 1e-15);
        assert!(EllipseParams::new([0.0, 0.0], 0.0, 1.0, 0.0).is_err());
        assert!(EllipseParams::new([f64::NAN, 0.0], 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn wrap_keeps_half_open_range() {
        assert_relative_eq!(wrap_half_turn(FRAC_PI_2), -FRAC_PI_2);
        assert_relative_eq!(wrap_half_turn(-FRAC_PI_2), -FRAC_PI_2);
        assert_relative_eq!(wrap_half_turn(3.0), 3.0 - PI, epsilon = 1e-15);
    }

    #[test]
    fn unit_sphere_quadric() {
        let q = quadric_from_ellipsoid(&EllipsoidParams::standard(1.0, 1.0, 1.0).unwrap());
        let s = 0.5;
        let expected = [s, s, s, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -s];
        for (got, want) in q.0.iter().zip(expected) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn ellipsoid_543_quadric() {
        let e = EllipsoidParams::standard(5.0, 4.0, 3.0).unwrap();
        let q = quadric_from_ellipsoid(&e);
        let raw = [1.0 / 25.0, 1.0 / 16.0, 1.0 / 9.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0];
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (got, want) in q.0.iter().zip(raw) {
            assert!((got - want / norm).abs() < 1e-15);
        }
        for k in 0..9 {
            let th = 0.7 * k as f64;
            let ph = 0.4 + 0.3 * k as f64;
            let p = e.point_at([th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()]);
            assert!(q.eval(&p).abs() < 1e-12);
        }
        let back = ellipsoid_from_quadric(&q).unwrap();
        for k in 0..3 {
            assert_relative_eq!(back.semi_axes[k], e.semi_axes[k], max_relative = 1e-12);
        }
    }

    #[test]
    fn hyperboloid_is_not_ellipsoid() {
        let q = QuadricCoeffs::from_raw([1.0, 1.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0]).unwrap();
        assert_eq!(ellipsoid_from_quadric(&q), Err(Error::NotAnEllipsoid));
        let imaginary = QuadricCoeffs::from_raw([1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(!imaginary.is_ellipsoid());
    }

    #[test]
    fn sampson_on_unit_circle() {
        let c = conic_from_ellipse(&EllipseParams::standard(1.0, 1.0).unwrap());
        assert!(sampson_distance(&[0.0, 1.0], &c).unwrap() < 1e-15);
        // residual 3, gradient norm 4
        assert_relative_eq!(sampson_distance(&[2.0, 0.0], &c).unwrap(), 0.75, epsilon = 1e-14);
        let h = 1e-4;
        assert!((sampson_distance(&[1.0 + h, 0.0], &c).unwrap() - h).abs() < 1e-7);
        assert!(signed_sampson(&[0.5, 0.0], &c).unwrap() < 0.0);
    }

    #[test]
    fn sampson_singular_at_center() {
        let c = conic_from_ellipse(&EllipseParams::standard(1.0, 1.0).unwrap());
        assert_eq!(sampson_distance(&[0.0, 0.0], &c), Err(Error::SingularPoint));
    }

    #[test]
    fn sampson_ignores_coefficient_scale() {
        let c = conic_from_ellipse(&EllipseParams::new([0.3, -1.0], 4.0, 2.0, 0.4).unwrap());
        let scaled = ConicCoeffs(c.0.map(|v| v * 10.0));
        for p in [[1.0, 2.0], [-3.0, 0.5], [5.0, -4.0]] {
            assert_relative_eq!(
                sampson_distance(&p, &c).unwrap(),
                sampson_distance(&p, &scaled).unwrap(),
                max_relative = 1e-13
            );
        }
    }

    #[test]
    fn nonoverlap_reference_cases() {
        let unit = EllipseParams::standard(1.0, 1.0).unwrap();
        let double = EllipseParams::standard(2.0, 2.0).unwrap();
        assert!(ellipse_nonoverlap(&unit, &unit, 512) < 5e-3);
        assert!((ellipse_nonoverlap(&double, &unit, 512) - 3.0).abs() < 2e-2);
        let far = EllipseParams::new([10.0, 0.0], 2.0, 1.0, 0.3).unwrap();
        let expected = (far.area() + unit.area()) / unit.area();
        assert!((ellipse_nonoverlap(&far, &unit, 512) - expected).abs() < 2e-2);
    }

    #[test]
    fn nonoverlap_spatial_nested_spheres() {
        let unit = EllipsoidParams::standard(1.0, 1.0, 1.0).unwrap();
        let double = EllipsoidParams::standard(2.0, 2.0, 2.0).unwrap();
        let r = ellipsoid_nonoverlap(&double, &unit, DEFAULT_MC_SAMPLES, 7);
        assert!((r - 7.0).abs() < 0.1, "{r}");
        assert!(ellipsoid_nonoverlap(&unit, &unit, 10_000, 7) == 0.0);
    }

    #[test]
    fn ellipse_json_layout() {
        let e = EllipseParams::new([1.0, 2.0], 3.0, 1.0, 0.25).unwrap();
        let json = serde_json::to_string(&e).unwrap();
        assert_eq!(json, r#"{"center":[1.0,2.0],"semi_axes":[3.0,1.0],"rotation":0.25}"#);
        let back: EllipseParams = serde_json::from_str(&json).unwrap();
        assert_eq!(back, e);
        assert!(serde_json::from_str::<EllipseParams>(r#"{"center":[0,0],"semi_axes":[-1,1]}"#).is_err());
    }

    #[test]
    fn ellipsoid_json_is_row_major() {
        let rot = nalgebra::Rotation3::from_euler_angles(0.1, 0.2, 0.3).into_inner();
        let e = EllipsoidParams::new([1.0, 2.0, 3.0], [5.0, 4.0, 3.0], rot).unwrap();
        let v: serde_json::Value = serde_json::to_value(e).unwrap();
        let flat: Vec<f64> = serde_json::from_value(v["orientation"].clone()).unwrap();
        assert_eq!(flat[1], e.orientation[(0, 1)]);
        assert_eq!(flat[3], e.orientation[(1, 0)]);
        let back: EllipsoidParams = serde_json::from_value(v).unwrap();
        assert!((back.orientation - e.orientation).amax() < 1e-15);
    }
}
