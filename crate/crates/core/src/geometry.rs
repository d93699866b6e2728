//! Surface charts and magnetic systems on cylinder-type surfaces.
//!
//! A chart covers the cylinder with global coordinates `(x, y)`, `y` periodic
//! with period 1 (loops carry a real y-lift). The metric is given by its three
//! components; the magnetic field is the 2-form `-d(theta)` of a primitive
//! 1-form `theta = theta1 dx + theta2 dy`.

use nalgebra::{Matrix2, Vector2};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::expr::{self, Ast, Jet2};

/// Scalar field on the chart, evaluated as plain values or second-order jets.
#[derive(Clone, Debug)]
pub enum Field {
    Const(f64),
    Expr { src: String, ast: Ast },
    /// Compactly supported smooth bump `a0 * exp(1 - 1/(1-(x/r0)^2))` for
    /// `|x| < r0`, identically zero outside. Independent of `y`.
    Bump { amplitude: f64, radius: f64 },
}

impl Field {
    pub fn expr(src: &str) -> Result<Field> {
        Ok(Field::Expr { src: src.to_string(), ast: expr::parse(src)? })
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        match self {
            Field::Const(c) => *c,
            Field::Expr { ast, .. } => ast.eval(x, y),
            Field::Bump { amplitude, radius } => bump_jet(x, *amplitude, *radius).v,
        }
    }

    pub fn jet(&self, x: f64, y: f64) -> Jet2 {
        match self {
            Field::Const(c) => Jet2::constant(*c),
            Field::Expr { ast, .. } => ast.eval_jet(x, y),
            Field::Bump { amplitude, radius } => bump_jet(x, *amplitude, *radius),
        }
    }

    fn describe(&self) -> String {
        match self {
            Field::Const(c) => format!("{c:?}"),
            Field::Expr { src, .. } => src.clone(),
            Field::Bump { amplitude, radius } => format!("bump(a0={amplitude:?},r0={radius:?})"),
        }
    }
}

fn bump_jet(x: f64, a0: f64, r0: f64) -> Jet2 {
    let u = x / r0;
    let s = 1.0 - u * u;
    if s <= 1e-10 {
        return Jet2::ZERO;
    }
    let w = (1.0 - 1.0 / s).exp();
    let s2 = s * s;
    let dw = w * (-2.0 * u / (r0 * s2));
    let ddw = w * (4.0 * u * u / (r0 * r0 * s2 * s2)
        - 2.0 / (r0 * r0 * s2)
        - 8.0 * u * u / (r0 * r0 * s2 * s));
    Jet2 { v: a0 * w, dx: a0 * dw, dy: 0.0, dxx: a0 * ddw, dxy: 0.0, dyy: 0.0 }
}

/// Warp profile `beta(x)` for metrics of the form `dx^2 + beta(x)^2 dy^2`,
/// which admit closed-form Christoffel symbols and curvature.
#[derive(Clone, Debug)]
pub enum WarpProfile {
    Const(f64),
    /// `beta(x) = 1 + e^x`.
    OnePlusExp,
}

impl WarpProfile {
    pub fn beta(&self, x: f64) -> f64 {
        match self {
            WarpProfile::Const(b) => *b,
            WarpProfile::OnePlusExp => 1.0 + x.exp(),
        }
    }

    pub fn dbeta(&self, x: f64) -> f64 {
        match self {
            WarpProfile::Const(_) => 0.0,
            WarpProfile::OnePlusExp => x.exp(),
        }
    }

    pub fn ddbeta(&self, x: f64) -> f64 {
        self.dbeta(x)
    }

    fn describe(&self) -> String {
        match self {
            WarpProfile::Const(b) => format!("const({b:?})"),
            WarpProfile::OnePlusExp => "1+exp(x)".to_string(),
        }
    }
}

/// Christoffel symbols at a point, symmetric in the lower indices.
/// `sym(k, i, j)` returns the symbol with upper index `k` (0 for x, 1 for y).
#[derive(Clone, Copy, Debug, Default)]
pub struct Christoffel {
    // gamma[k][m] with m indexing the pairs (0,0), (0,1), (1,1).
    gamma: [[f64; 3]; 2],
}

impl Christoffel {
    pub fn sym(&self, k: usize, i: usize, j: usize) -> f64 {
        self.gamma[k][i + j]
    }

    fn set(&mut self, k: usize, i: usize, j: usize, v: f64) {
        self.gamma[k][i + j] = v;
    }

    /// Quadratic form `Gamma^k(v, v)` appearing in the geodesic equation.
    pub fn quad(&self, k: usize, v: Vector2<f64>) -> f64 {
        self.gamma[k][0] * v.x * v.x
            + 2.0 * self.gamma[k][1] * v.x * v.y
            + self.gamma[k][2] * v.y * v.y
    }
}

#[derive(Clone, Debug)]
pub struct SurfaceChart {
    pub g11: Field,
    pub g12: Field,
    pub g22: Field,
    /// Set when the metric is known to be `dx^2 + beta(x)^2 dy^2`; enables the
    /// closed-form Christoffel/curvature path.
    pub warp: Option<WarpProfile>,
}

impl SurfaceChart {
    pub fn metric_jets(&self, x: f64, y: f64) -> [Jet2; 3] {
        [self.g11.jet(x, y), self.g12.jet(x, y), self.g22.jet(x, y)]
    }

    /// Metric tensor at a point, rejecting non-positive-definite values.
    pub fn metric(&self, x: f64, y: f64) -> Result<Matrix2<f64>> {
        let g11 = self.g11.value(x, y);
        let g12 = self.g12.value(x, y);
        let g22 = self.g22.value(x, y);
        let det = g11 * g22 - g12 * g12;
        if !(g11 > 0.0 && det > 0.0) {
            return Err(Error::DegenerateMetric { x, y, g11, det });
        }
        Ok(Matrix2::new(g11, g12, g12, g22))
    }

    /// Unchecked metric evaluation for hot paths; positivity is asserted in
    /// debug builds.
    pub fn metric_values(&self, x: f64, y: f64) -> Matrix2<f64> {
        let g11 = self.g11.value(x, y);
        let g12 = self.g12.value(x, y);
        let g22 = self.g22.value(x, y);
        debug_assert!(
            g11 > 0.0 && g11 * g22 - g12 * g12 > 0.0,
            "metric degenerate at ({x}, {y})"
        );
        Matrix2::new(g11, g12, g12, g22)
    }

    /// Christoffel symbols of the Levi-Civita connection. Warped charts use the
    /// closed form `Gamma^x_yy = -beta beta'`, `Gamma^y_xy = beta'/beta`; other
    /// charts differentiate the metric fields exactly.
    pub fn christoffel(&self, x: f64, y: f64) -> Result<Christoffel> {
        if let Some(w) = &self.warp {
            let b = w.beta(x);
            let db = w.dbeta(x);
            let mut c = Christoffel::default();
            c.set(0, 1, 1, -b * db);
            c.set(1, 0, 1, db / b);
            return Ok(c);
        }
        let jets = self.metric_jets(x, y);
        self.christoffel_from_derivatives(x, y, &jets)
    }

    fn christoffel_from_derivatives(&self, x: f64, y: f64, jets: &[Jet2; 3]) -> Result<Christoffel> {
        // dg[c][(a,b)]: partial derivative along coordinate c of g_{ab}.
        let g = self.metric(x, y)?;
        let dg = [
            [jets[0].dx, jets[1].dx, jets[2].dx],
            [jets[0].dy, jets[1].dy, jets[2].dy],
        ];
        christoffel_from_metric(&g, &dg)
    }

    /// Independent finite-difference route to the symbols (central differences
    /// of the metric components with step `h`). Used as a cross-check oracle.
    pub fn christoffel_fd(&self, x: f64, y: f64, h: f64) -> Result<Christoffel> {
        let g = self.metric(x, y)?;
        let comp = |f: &Field, x: f64, y: f64| f.value(x, y);
        let mut dg = [[0.0; 3]; 2];
        for (m, f) in [&self.g11, &self.g12, &self.g22].into_iter().enumerate() {
            dg[0][m] = (comp(f, x + h, y) - comp(f, x - h, y)) / (2.0 * h);
            dg[1][m] = (comp(f, x, y + h) - comp(f, x, y - h)) / (2.0 * h);
        }
        christoffel_from_metric(&g, &dg)
    }

    /// Gaussian curvature: `-beta''/beta` on warped charts, the Brioschi
    /// formula (exact metric jets) otherwise.
    pub fn gauss_curvature(&self, x: f64, y: f64) -> Result<f64> {
        if let Some(w) = &self.warp {
            return Ok(-w.ddbeta(x) / w.beta(x));
        }
        self.metric(x, y)?;
        let [e, f, g] = self.metric_jets(x, y);
        let det = e.v * g.v - f.v * f.v;
        let m1 = nalgebra::Matrix3::new(
            -0.5 * e.dyy + f.dxy - 0.5 * g.dxx,
            0.5 * e.dx,
            f.dx - 0.5 * e.dy,
            f.dy - 0.5 * g.dx,
            e.v,
            f.v,
            0.5 * g.dy,
            f.v,
            g.v,
        );
        let m2 = nalgebra::Matrix3::new(
            0.0,
            0.5 * e.dy,
            0.5 * g.dx,
            0.5 * e.dy,
            e.v,
            f.v,
            0.5 * g.dx,
            f.v,
            g.v,
        );
        Ok((m1.determinant() - m2.determinant()) / (det * det))
    }

    fn describe(&self) -> String {
        format!(
            "g11={};g12={};g22={};warp={}",
            self.g11.describe(),
            self.g12.describe(),
            self.g22.describe(),
            self.warp.as_ref().map_or("none".to_string(), |w| w.describe()),
        )
    }
}

fn christoffel_from_metric(g: &Matrix2<f64>, dg: &[[f64; 3]; 2]) -> Result<Christoffel> {
    let det = g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(0, 1)];
    let ginv = Matrix2::new(g[(1, 1)], -g[(0, 1)], -g[(0, 1)], g[(0, 0)]) / det;
    // Access dg_{ab}/dx^c through the pair index a+b.
    let d = |c: usize, a: usize, b: usize| dg[c][a + b];
    let mut out = Christoffel::default();
    for k in 0..2 {
        for i in 0..2 {
            for j in i..2 {
                let mut v = 0.0;
                for l in 0..2 {
                    v += 0.5 * ginv[(k, l)] * (d(i, j, l) + d(j, i, l) - d(l, i, j));
                }
                out.set(k, i, j, v);
            }
        }
    }
    Ok(out)
}

/// Supremum bounds of the magnetic primitive and field over a sampling window.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct ThetaBounds {
    /// sup of the dual-metric norm of theta.
    pub sup_theta: f64,
    /// sup of the norm of the field 2-form -d(theta).
    pub sup_dtheta: f64,
    /// sup of the norm of the covariant derivative of d(theta).
    pub sup_grad_dtheta: f64,
}

#[derive(Clone, Debug)]
pub struct MagneticSystem {
    pub chart: SurfaceChart,
    pub theta1: Field,
    pub theta2: Field,
    /// Known sup-norm of theta when available (presets), used by period bounds.
    pub theta_sup_hint: Option<f64>,
    pub name: String,
}

impl MagneticSystem {
    /// Cylinder with `g = dx^2 + (1+e^x)^2 dy^2` and `theta = (1+e^x) dy`.
    pub fn appendix_cylinder() -> MagneticSystem {
        MagneticSystem {
            chart: SurfaceChart {
                g11: Field::Const(1.0),
                g12: Field::Const(0.0),
                g22: Field::expr("(1+exp(x))^2").expect("static expression"),
                warp: Some(WarpProfile::OnePlusExp),
            },
            theta1: Field::Const(0.0),
            theta2: Field::expr("1+exp(x)").expect("static expression"),
            theta_sup_hint: Some(1.0),
            name: "appendix-cylinder".to_string(),
        }
    }

    /// Flat cylinder, no magnetic field.
    pub fn flat_cylinder() -> MagneticSystem {
        MagneticSystem {
            chart: SurfaceChart {
                g11: Field::Const(1.0),
                g12: Field::Const(0.0),
                g22: Field::Const(1.0),
                warp: Some(WarpProfile::Const(1.0)),
            },
            theta1: Field::Const(0.0),
            theta2: Field::Const(0.0),
            theta_sup_hint: Some(0.0),
            name: "flat-cylinder".to_string(),
        }
    }

    /// Flat cylinder with a compactly supported magnetic field:
    /// `theta = a(x) dy`, `a` a smooth bump of the given amplitude and radius.
    pub fn bump_cylinder(amplitude: f64, radius: f64) -> Result<MagneticSystem> {
        if !(radius > 0.0) || !amplitude.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "bump parameters must be finite with radius > 0 (got a0={amplitude}, r0={radius})"
            )));
        }
        Ok(MagneticSystem {
            chart: SurfaceChart {
                g11: Field::Const(1.0),
                g12: Field::Const(0.0),
                g22: Field::Const(1.0),
                warp: Some(WarpProfile::Const(1.0)),
            },
            theta1: Field::Const(0.0),
            theta2: Field::Bump { amplitude, radius },
            theta_sup_hint: Some(amplitude.abs()),
            name: "bump-cylinder".to_string(),
        })
    }

    pub fn theta(&self, x: f64, y: f64) -> Vector2<f64> {
        Vector2::new(self.theta1.value(x, y), self.theta2.value(x, y))
    }

    /// Coefficient `c` of `d(theta) = c dx ^ dy`.
    pub fn dtheta_coeff(&self, x: f64, y: f64) -> f64 {
        self.theta2.jet(x, y).dx - self.theta1.jet(x, y).dy
    }

    /// Lorentz force: the bundle map `Y` with `<Y(u), v> = Omega(u, v)` for the
    /// magnetic 2-form `Omega = -d(theta)`.
    pub fn lorentz_force(&self, x: f64, y: f64, u: Vector2<f64>) -> Result<Vector2<f64>> {
        let c = self.dtheta_coeff(x, y);
        let g = self.chart.metric(x, y)?;
        // Covector w_b = Omega_{ab} u^a with Omega_12 = -c.
        let w = Vector2::new(c * u.y, -c * u.x);
        let det = g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(0, 1)];
        let ginv = Matrix2::new(g[(1, 1)], -g[(0, 1)], -g[(0, 1)], g[(0, 0)]) / det;
        Ok(ginv * w)
    }

    /// Sup norms of theta, d(theta), and its covariant derivative over a grid
    /// on `[window.0, window.1] x [0, 1)`.
    pub fn theta_norm_bounds(&self, window: (f64, f64), nx: usize, ny: usize) -> Result<ThetaBounds> {
        if !(window.1 > window.0) || nx < 2 || ny < 1 {
            return Err(Error::InvalidArgument("theta_norm_bounds needs a nonempty window and grid".into()));
        }
        let mut sup_theta: f64 = 0.0;
        let mut sup_dtheta: f64 = 0.0;
        let mut sup_grad: f64 = 0.0;
        for i in 0..nx {
            let x = window.0 + (window.1 - window.0) * i as f64 / (nx - 1) as f64;
            for j in 0..ny {
                let y = j as f64 / ny as f64;
                let g = self.chart.metric(x, y)?;
                let det = g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(0, 1)];
                let ginv = Matrix2::new(g[(1, 1)], -g[(0, 1)], -g[(0, 1)], g[(0, 0)]) / det;

                let th = self.theta(x, y);
                sup_theta = sup_theta.max((th.dot(&(ginv * th))).max(0.0).sqrt());

                // |d theta| = |c| / sqrt(det g).
                let t1 = self.theta1.jet(x, y);
                let t2 = self.theta2.jet(x, y);
                let c = t2.dx - t1.dy;
                sup_dtheta = sup_dtheta.max(c.abs() / det.sqrt());

                // d(theta) = s * vol with s = c / sqrt(det g); since the volume
                // form is parallel, |grad d(theta)| = |ds|_{g*}.
                let [e, f, gg] = self.chart.metric_jets(x, y);
                let ddet_dx = e.dx * gg.v + e.v * gg.dx - 2.0 * f.v * f.dx;
                let ddet_dy = e.dy * gg.v + e.v * gg.dy - 2.0 * f.v * f.dy;
                let c_x = t2.dxx - t1.dxy;
                let c_y = t2.dxy - t1.dyy;
                let sqd = det.sqrt();
                let ds = Vector2::new(
                    c_x / sqd - c * ddet_dx / (2.0 * det * sqd),
                    c_y / sqd - c * ddet_dy / (2.0 * det * sqd),
                );
                sup_grad = sup_grad.max((ds.dot(&(ginv * ds))).max(0.0).sqrt());
            }
        }
        Ok(ThetaBounds { sup_theta, sup_dtheta, sup_grad_dtheta: sup_grad })
    }

    /// Sanity checks: metric positive definite on a sample window, Lorentz
    /// force antisymmetric, and `<Y(u), v>` consistent with a finite-difference
    /// evaluation of `-d(theta)`.
    pub fn validate(&self, window: (f64, f64)) -> Result<()> {
        let h = 1e-5;
        for i in 0..21 {
            let x = window.0 + (window.1 - window.0) * i as f64 / 20.0;
            for j in 0..4 {
                let y = j as f64 / 4.0;
                let g = self.chart.metric(x, y)?;
                let u = Vector2::new(0.3 + 0.1 * j as f64, -0.7);
                let v = Vector2::new(1.1, 0.4 - 0.05 * i as f64);
                let yu = self.lorentz_force(x, y, u)?;
                let yv = self.lorentz_force(x, y, v)?;
                let a = (g * yu).dot(&v);
                let b = (g * yv).dot(&u);
                if (a + b).abs() > 1e-10 * (1.0 + a.abs() + b.abs()) {
                    return Err(Error::InvalidArgument(format!(
                        "Lorentz force not antisymmetric at ({x}, {y}): {a} vs {b}"
                    )));
                }
                let c_fd = (self.theta2.value(x + h, y) - self.theta2.value(x - h, y)) / (2.0 * h)
                    - (self.theta1.value(x, y + h) - self.theta1.value(x, y - h)) / (2.0 * h);
                let omega_uv = -c_fd * (u.x * v.y - u.y * v.x);
                if (a - omega_uv).abs() > 1e-7 * (1.0 + a.abs()) {
                    return Err(Error::InvalidArgument(format!(
                        "Lorentz force inconsistent with -d(theta) at ({x}, {y}): {a} vs {omega_uv}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// True when sampled metric and theta components do not depend on `y`.
    pub fn is_y_independent(&self) -> bool {
        let xs = [-7.3, -2.0, -0.5, 0.0, 0.31, 1.7, 5.9];
        let ys = [0.13, 0.5, 0.77];
        for &x in &xs {
            for &y in &ys {
                for f in [
                    &self.chart.g11,
                    &self.chart.g12,
                    &self.chart.g22,
                    &self.theta1,
                    &self.theta2,
                ] {
                    let a = f.value(x, y);
                    let b = f.value(x, 0.0);
                    if (a - b).abs() > 1e-9 * (1.0 + a.abs().max(b.abs())) {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Canonical description used for hashing and persistence.
    pub fn canonical_description(&self) -> String {
        format!(
            "{};{};theta1={};theta2={}",
            self.name,
            self.chart.describe(),
            self.theta1.describe(),
            self.theta2.describe(),
        )
    }

    /// Stable 16-hex-digit identifier of the system definition.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_description().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn appendix_christoffel_closed_form() {
        let sys = MagneticSystem::appendix_cylinder();
        let c = sys.chart.christoffel(0.0, 0.3).unwrap();
        // beta = 2, beta' = 1 at x = 0.
        assert_relative_eq!(c.sym(0, 1, 1), -2.0, epsilon = 1e-14);
        assert_relative_eq!(c.sym(1, 0, 1), 0.5, epsilon = 1e-14);
        assert_relative_eq!(c.sym(0, 0, 0), 0.0);
        assert_relative_eq!(c.sym(0, 0, 1), 0.0);
        assert_relative_eq!(c.sym(1, 0, 0), 0.0);
        assert_relative_eq!(c.sym(1, 1, 1), 0.0);
    }

    #[test]
    fn flat_christoffel_vanishes() {
        let sys = MagneticSystem::flat_cylinder();
        let c = sys.chart.christoffel(1.3, -0.4).unwrap();
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    assert_eq!(c.sym(k, i, j), 0.0);
                }
            }
        }
    }

    #[test]
    fn warped_closed_form_matches_fd_on_grid() {
        let sys = MagneticSystem::appendix_cylinder();
        for i in 0..100 {
            let x = -5.0 + 8.0 * i as f64 / 99.0;
            let closed = sys.chart.christoffel(x, 0.0).unwrap();
            let fd = sys.chart.christoffel_fd(x, 0.0, 1e-5).unwrap();
            for k in 0..2 {
                for m in [(0, 0), (0, 1), (1, 1)] {
                    let a = closed.sym(k, m.0, m.1);
                    let b = fd.sym(k, m.0, m.1);
                    assert!(
                        (a - b).abs() <= 1e-6 * (1.0 + a.abs()),
                        "mismatch at x={x}: {a} vs {b}"
                    );
                }
            }
        }
    }

    #[test]
    fn custom_chart_matches_fd_oracle() {
        // Non-warped y-dependent metric exercises the exact-derivative path.
        let chart = SurfaceChart {
            g11: Field::Const(1.0),
            g12: Field::Const(0.0),
            g22: Field::expr("(2+sin(2*pi*y))^2").unwrap(),
            warp: None,
        };
        for (x, y) in [(0.0, 0.1), (0.5, 0.37), (-1.0, 0.9)] {
            let exact = chart.christoffel(x, y).unwrap();
            let fd = chart.christoffel_fd(x, y, 1e-5).unwrap();
            for k in 0..2 {
                for m in [(0, 0), (0, 1), (1, 1)] {
                    let a = exact.sym(k, m.0, m.1);
                    let b = fd.sym(k, m.0, m.1);
                    assert!(
                        (a - b).abs() <= 1e-6 * (1.0 + a.abs()),
                        "mismatch at ({x},{y}) k={k} m={m:?}: {a} vs {b}"
                    );
                }
            }
        }
    }

    /// Finite-difference Riemann tensor from the Christoffel path: the
    /// independent curvature oracle.
    fn curvature_fd(chart: &SurfaceChart, x: f64, y: f64) -> f64 {
        let h = 1e-5;
        let gamma = |x: f64, y: f64| chart.christoffel(x, y).unwrap();
        let g = chart.metric(x, y).unwrap();
        let det = g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(0, 1)];
        let c0 = gamma(x, y);
        let cxp = gamma(x + h, y);
        let cxm = gamma(x - h, y);
        let cyp = gamma(x, y + h);
        let cym = gamma(x, y - h);
        let mut r = [0.0; 2]; // R^k_{212}
        for k in 0..2 {
            let d1 = (cxp.sym(k, 1, 1) - cxm.sym(k, 1, 1)) / (2.0 * h);
            let d2 = (cyp.sym(k, 1, 0) - cym.sym(k, 1, 0)) / (2.0 * h);
            let mut quad = 0.0;
            for m in 0..2 {
                quad += c0.sym(k, 0, m) * c0.sym(m, 1, 1) - c0.sym(k, 1, m) * c0.sym(m, 1, 0);
            }
            r[k] = d1 - d2 + quad;
        }
        let r1212 = g[(0, 0)] * r[0] + g[(0, 1)] * r[1];
        r1212 / det
    }

    #[test]
    fn curvature_values() {
        let flat = MagneticSystem::flat_cylinder();
        assert_relative_eq!(flat.chart.gauss_curvature(2.0, 0.3).unwrap(), 0.0);

        let app = MagneticSystem::appendix_cylinder();
        // K = -beta''/beta = -e^x/(1+e^x); at x=0 this is -1/2.
        assert_relative_eq!(app.chart.gauss_curvature(0.0, 0.0).unwrap(), -0.5, epsilon = 1e-14);
        for x in [-2.0, -0.5, 0.0, 1.0, 2.5] {
            let k = app.chart.gauss_curvature(x, 0.0).unwrap();
            let expected = -x.exp() / (1.0 + x.exp());
            assert_relative_eq!(k, expected, epsilon = 1e-12);
            assert_relative_eq!(k, curvature_fd(&app.chart, x, 0.0), epsilon = 1e-8);
        }

        let bump = MagneticSystem::bump_cylinder(0.5, 1.0).unwrap();
        assert_relative_eq!(bump.chart.gauss_curvature(3.0, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn brioschi_matches_closed_form_on_appendix_metric() {
        // Same metric with the warp flag stripped exercises the general path.
        let chart = SurfaceChart {
            g11: Field::Const(1.0),
            g12: Field::Const(0.0),
            g22: Field::expr("(1+exp(x))^2").unwrap(),
            warp: None,
        };
        for x in [-1.0, 0.0, 0.8] {
            let k = chart.gauss_curvature(x, 0.0).unwrap();
            let expected = -x.exp() / (1.0 + x.exp());
            assert_relative_eq!(k, expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn lorentz_force_appendix_at_origin() {
        // Y(u) = -(beta'/beta) J u with J dx = (1/beta) dy, J dy = -beta dx;
        // at x = 0: beta = 2, beta' = 1.
        let sys = MagneticSystem::appendix_cylinder();
        let y1 = sys.lorentz_force(0.0, 0.0, Vector2::new(1.0, 0.0)).unwrap();
        assert_relative_eq!(y1.x, 0.0, epsilon = 1e-14);
        assert_relative_eq!(y1.y, -0.25, epsilon = 1e-14);
        let y2 = sys.lorentz_force(0.0, 0.0, Vector2::new(0.0, 1.0)).unwrap();
        assert_relative_eq!(y2.x, 1.0, epsilon = 1e-14);
        assert_relative_eq!(y2.y, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn closed_theta_gives_zero_force() {
        // Constant theta2 is closed, so the force vanishes identically.
        let sys = MagneticSystem {
            theta2: Field::Const(0.7),
            ..MagneticSystem::flat_cylinder()
        };
        for x in [-3.0, 0.0, 2.0] {
            let y = sys.lorentz_force(x, 0.2, Vector2::new(0.3, -1.2)).unwrap();
            assert_relative_eq!(y.norm(), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn systems_validate() {
        MagneticSystem::appendix_cylinder().validate((-6.0, 3.0)).unwrap();
        MagneticSystem::flat_cylinder().validate((-6.0, 6.0)).unwrap();
        MagneticSystem::bump_cylinder(0.5, 1.0).unwrap().validate((-4.0, 4.0)).unwrap();
    }

    #[test]
    fn theta_bounds() {
        let flat = MagneticSystem::flat_cylinder();
        let b = flat.theta_norm_bounds((-10.0, 10.0), 64, 4).unwrap();
        assert_eq!((b.sup_theta, b.sup_dtheta, b.sup_grad_dtheta), (0.0, 0.0, 0.0));

        // |theta|_{g*} = beta/beta = 1 identically on the appendix cylinder.
        let app = MagneticSystem::appendix_cylinder();
        let b = app.theta_norm_bounds((-10.0, 10.0), 64, 4).unwrap();
        assert_relative_eq!(b.sup_theta, 1.0, epsilon = 1e-12);
        // |d theta| = e^x/(1+e^x) < 1, approaching 1 from below: no decay.
        assert!(b.sup_dtheta < 1.0 && b.sup_dtheta > 0.9);

        let bump = MagneticSystem::bump_cylinder(0.5, 1.0).unwrap();
        let b = bump.theta_norm_bounds((-2.0, 2.0), 129, 1).unwrap();
        assert_relative_eq!(b.sup_theta, 0.5, epsilon = 1e-12); // grid contains x=0
        let far = bump.theta_norm_bounds((2.0, 6.0), 33, 1).unwrap();
        assert_eq!(far.sup_theta, 0.0);
    }

    #[test]
    fn degenerate_metric_rejected() {
        let chart = SurfaceChart {
            g11: Field::Const(1.0),
            g12: Field::Const(0.0),
            g22: Field::expr("x").unwrap(),
            warp: None,
        };
        assert!(matches!(
            chart.metric(-1.0, 0.0),
            Err(Error::DegenerateMetric { .. })
        ));
        assert!(chart.metric(1.0, 0.0).is_ok());
    }

    #[test]
    fn bump_field_jet_is_smooth_and_compact() {
        let f = Field::Bump { amplitude: 0.5, radius: 1.0 };
        assert_relative_eq!(f.value(0.0, 0.0), 0.5);
        let j = f.jet(0.0, 0.0);
        assert_relative_eq!(j.dx, 0.0);
        assert_relative_eq!(j.dxx, -1.0, epsilon = 1e-12); // a0 * (-2/r0^2)
        assert_eq!(f.value(1.0, 0.0), 0.0);
        assert_eq!(f.value(1.5, 0.0), 0.0);
        // Jet matches finite differences strictly inside the support.
        let h = 1e-5;
        for x in [-0.8, -0.3, 0.4, 0.72] {
            let j = f.jet(x, 0.0);
            let d = (f.value(x + h, 0.0) - f.value(x - h, 0.0)) / (2.0 * h);
            let dd = (f.value(x + h, 0.0) - 2.0 * f.value(x, 0.0) + f.value(x - h, 0.0)) / (h * h);
            assert_relative_eq!(j.dx, d, epsilon = 1e-8, max_relative = 1e-8);
            assert_relative_eq!(j.dxx, dd, epsilon = 1e-4, max_relative = 1e-4);
        }
    }

    #[test]
    fn hashes_distinguish_systems() {
        let a = MagneticSystem::appendix_cylinder().hash();
        let b = MagneticSystem::flat_cylinder().hash();
        let c = MagneticSystem::bump_cylinder(0.5, 1.0).unwrap().hash();
        let c2 = MagneticSystem::bump_cylinder(0.5, 1.0).unwrap().hash();
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(b, c);
        assert_eq!(c, c2);
        assert_eq!(a.len(), 16);
    }
}
