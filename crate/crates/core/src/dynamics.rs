//! The magnetic geodesic flow in chart coordinates, with event localization
//! and Poincaré-section tooling.
//!
//! Trajectories integrate the second-order system
//! `d(gamma')/dt = -Gamma(gamma')(gamma') + Y(gamma')` with the Lorentz force
//! `Y` of the field `-d(theta)`; the kinetic energy `|v|^2_g / 2` is a first
//! integral and its drift is reported with every trajectory.

use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::MagneticSystem;
use crate::integrate::{integrate_span, OdeOptions, Step, Stepper};

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct State {
    pub q: Vector2<f64>,
    pub v: Vector2<f64>,
}

impl State {
    pub fn new(x: f64, y: f64, vx: f64, vy: f64) -> State {
        State { q: Vector2::new(x, y), v: Vector2::new(vx, vy) }
    }

    pub fn pack(&self) -> [f64; 4] {
        [self.q.x, self.q.y, self.v.x, self.v.y]
    }

    pub fn unpack(y: &[f64]) -> State {
        State::new(y[0], y[1], y[2], y[3])
    }
}

/// Kinetic energy `|v|^2_g / 2`.
pub fn energy(system: &MagneticSystem, s: &State) -> Result<f64> {
    let g = system.chart.metric(s.q.x, s.q.y)?;
    Ok(0.5 * s.v.dot(&(g * s.v)))
}

/// Legendre transform `p = g v + theta`.
pub fn legendre(system: &MagneticSystem, q: Vector2<f64>, v: Vector2<f64>) -> Result<Vector2<f64>> {
    let g = system.chart.metric(q.x, q.y)?;
    Ok(g * v + system.theta(q.x, q.y))
}

/// Inverse Legendre transform `v = g^{-1}(p - theta)`.
pub fn legendre_inverse(
    system: &MagneticSystem,
    q: Vector2<f64>,
    p: Vector2<f64>,
) -> Result<Vector2<f64>> {
    let g = system.chart.metric(q.x, q.y)?;
    let det = g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(0, 1)];
    let ginv = Matrix2::new(g[(1, 1)], -g[(0, 1)], -g[(0, 1)], g[(0, 0)]) / det;
    Ok(ginv * (p - system.theta(q.x, q.y)))
}

/// Hamiltonian `H(q, p) = |p - theta|^2_{g*} / 2`; equals the energy of the
/// Legendre-dual velocity state.
pub fn hamiltonian(system: &MagneticSystem, q: Vector2<f64>, p: Vector2<f64>) -> Result<f64> {
    let v = legendre_inverse(system, q, p)?;
    energy(system, &State { q, v })
}

/// Right-hand side of the flow in velocity form.
pub fn flow_rhs(system: &MagneticSystem, y: &[f64], dy: &mut [f64]) -> Result<()> {
    let q = Vector2::new(y[0], y[1]);
    let v = Vector2::new(y[2], y[3]);
    let gamma = system.chart.christoffel(q.x, q.y)?;
    let force = system.lorentz_force(q.x, q.y, v)?;
    dy[0] = v.x;
    dy[1] = v.y;
    dy[2] = -gamma.quad(0, v) + force.x;
    dy[3] = -gamma.quad(1, v) + force.y;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    /// States at the integrator's accepted steps, starting at t = 0.
    pub samples: Vec<(f64, State)>,
    /// max_t |E(t) - E(0)| over the samples.
    pub energy_drift: f64,
    pub tol: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> State {
        self.samples.last().expect("trajectory has at least the initial sample").1
    }
}

/// Integrate the flow for `duration` at the given tolerance.
pub fn flow(system: &MagneticSystem, s0: &State, duration: f64, tol: f64) -> Result<Trajectory> {
    if !(duration > 0.0) {
        return Err(Error::InvalidArgument("flow duration must be positive".into()));
    }
    let mut f = |_t: f64, y: &[f64], dy: &mut [f64]| flow_rhs(system, y, dy);
    let opts = OdeOptions::with_tol(tol);
    let mut stepper = Stepper::new(&mut f, 0.0, &s0.pack(), 1.0, opts)?;
    let mut samples = vec![(0.0, *s0)];
    while stepper.t < duration {
        stepper.step(duration)?;
        samples.push((stepper.t, State::unpack(&stepper.y)));
    }
    let e0 = energy(system, s0)?;
    let mut drift: f64 = 0.0;
    for (_, s) in &samples {
        drift = drift.max((energy(system, s)? - e0).abs());
    }
    Ok(Trajectory { samples, energy_drift: drift, tol })
}

/// Locate a root of `component(state) = target` inside an accepted step by
/// Hermite bisection followed by Newton polish on re-integration.
fn locate_crossing<F>(
    f: &mut F,
    step: &Step,
    value: impl Fn(&[f64]) -> f64,
    slope: impl Fn(&[f64]) -> f64,
    target: f64,
    opts: OdeOptions,
) -> Result<(f64, Vec<f64>)>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    // Bisection on the Hermite interpolant brackets the root.
    let (mut lo, mut hi) = (step.t0, step.t1);
    let elo = value(&step.y0) - target;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let em = value(&step.interpolate(mid)) - target;
        if (em > 0.0) == (elo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut t = 0.5 * (lo + hi);
    let mut y = step.interpolate(t);
    // Newton corrections against the true flow.
    for _ in 0..3 {
        y = integrate_span(f, step.t0, &step.y0, t, opts)?;
        let e = value(&y) - target;
        let de = slope(&y);
        if de.abs() < 1e-12 {
            break;
        }
        let dt = -e / de;
        let new_t = (t + dt).clamp(step.t0, step.t1);
        if (new_t - t).abs() < 1e-15 * (1.0 + t.abs()) {
            t = new_t;
            break;
        }
        t = new_t;
    }
    y = integrate_span(f, step.t0, &step.y0, t, opts)?;
    Ok((t, y))
}

/// Zeros of `vx` along a trajectory, with the value of the second derivative
/// `x''` at each crossing (from the flow's right-hand side).
pub fn vx_zero_crossings(
    system: &MagneticSystem,
    s0: &State,
    duration: f64,
    tol: f64,
) -> Result<Vec<(f64, State, f64)>> {
    let mut f = |_t: f64, y: &[f64], dy: &mut [f64]| flow_rhs(system, y, dy);
    let opts = OdeOptions::with_tol(tol);
    let mut stepper = Stepper::new(&mut f, 0.0, &s0.pack(), 1.0, opts)?;
    let mut out = Vec::new();
    while stepper.t < duration {
        let step = stepper.step(duration)?;
        let v0 = step.y0[2];
        let v1 = step.y1[2];
        if v0 == 0.0 || (v0 > 0.0) == (v1 > 0.0) {
            continue;
        }
        let (t, y) = locate_crossing(
            &mut |_t: f64, y: &[f64], dy: &mut [f64]| flow_rhs(system, y, dy),
            &step,
            |y| y[2],
            |y| {
                let mut dy = [0.0; 4];
                flow_rhs(system, y, &mut dy).map(|_| dy[2]).unwrap_or(f64::NAN)
            },
            0.0,
            opts,
        )?;
        let mut dy = [0.0; 4];
        flow_rhs(system, &y, &mut dy)?;
        out.push((t, State::unpack(&y), dy[2]));
    }
    Ok(out)
}

/// Seed on the section `{y = 0, vy > 0}` at energy `k`: `vy` is solved from
/// `|v|^2_g = 2k`. Fails when `(x, vx)` lies outside the energy shell.
pub fn section_state(system: &MagneticSystem, k: f64, x: f64, vx: f64) -> Result<State> {
    let g = system.chart.metric(x, 0.0)?;
    let (g11, g12, g22) = (g[(0, 0)], g[(0, 1)], g[(1, 1)]);
    let disc = g12 * g12 * vx * vx - g22 * (g11 * vx * vx - 2.0 * k);
    if disc <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "seed (x={x}, vx={vx}) lies outside the energy-{k} shell"
        )));
    }
    let vy = (-g12 * vx + disc.sqrt()) / g22;
    Ok(State::new(x, 0.0, vx, vy))
}

/// Options for the Poincaré section scan.
#[derive(Clone, Copy, Debug)]
pub struct SectionGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub nvx: usize,
    /// `vx` spans this fraction of the shell bound, symmetric about zero.
    /// Odd `nvx` therefore places a row of seeds exactly on `vx = 0`.
    pub vx_fraction: f64,
    /// Trajectories leaving `[x_min - margin, x_max + margin]` count as no-return.
    pub window_margin: f64,
    /// Time budget in units of `winding / sqrt(2k)`.
    pub t_cap_factor: f64,
}

impl SectionGrid {
    pub fn new(x_min: f64, x_max: f64, nx: usize, nvx: usize) -> SectionGrid {
        SectionGrid {
            x_min,
            x_max,
            nx,
            nvx,
            vx_fraction: 0.98,
            window_margin: 3.0,
            t_cap_factor: 200.0,
        }
    }
}

/// Return map on the section: integrate from a section seed until the y-lift
/// has completed `winding` upward integer crossings, then report `(x, vx, t)`.
pub fn return_map(
    system: &MagneticSystem,
    k: f64,
    winding: i64,
    x: f64,
    vx: f64,
    grid: &SectionGrid,
    tol: f64,
) -> Result<(f64, f64, f64)> {
    if winding < 1 {
        return Err(Error::InvalidArgument("return map needs winding >= 1".into()));
    }
    let s0 = section_state(system, k, x, vx)?;
    let opts = OdeOptions::with_tol(tol);
    let t_cap = grid.t_cap_factor * winding as f64 / (2.0 * k).sqrt();
    let (lo, hi) = (grid.x_min - grid.window_margin, grid.x_max + grid.window_margin);
    let mut f = |_t: f64, y: &[f64], dy: &mut [f64]| flow_rhs(system, y, dy);
    let mut stepper = Stepper::new(&mut f, 0.0, &s0.pack(), 1.0, opts)?;
    let mut crossings = 0i64;
    loop {
        let step = stepper.step(t_cap + 1.0)?;
        if stepper.t > t_cap {
            return Err(Error::NoReturn(format!("time budget {t_cap:.2} exhausted")));
        }
        // Upward crossings of integer lift levels within this step.
        let (y0, y1) = (step.y0[1], step.y1[1]);
        if y1 > y0 {
            let mut lvl = y0.floor() + 1.0;
            while lvl <= y1 {
                crossings += 1;
                if crossings == winding {
                    let (t, ystate) = locate_crossing(
                        &mut |_t: f64, y: &[f64], dy: &mut [f64]| flow_rhs(system, y, dy),
                        &step,
                        |y| y[1],
                        |y| y[3],
                        lvl,
                        opts,
                    )?;
                    if ystate[3] <= 0.0 {
                        return Err(Error::NoReturn("tangential section crossing".into()));
                    }
                    return Ok((ystate[0], ystate[2], t));
                }
                lvl += 1.0;
            }
        }
        let xe = step.y1[0];
        if xe < lo || xe > hi {
            return Err(Error::NoReturn(format!("left window at x={xe:.3}")));
        }
    }
}

/// Newton refinement of a candidate fixed point of the return map
/// (finite-difference Jacobian, step 1e-6).
pub fn refine_fixed_point(
    system: &MagneticSystem,
    k: f64,
    winding: i64,
    seed: (f64, f64),
    grid: &SectionGrid,
    fp_tol: f64,
    tol: f64,
) -> Result<(f64, f64, f64)> {
    let h = 1e-6;
    let mut s = Vector2::new(seed.0, seed.1);
    for _ in 0..12 {
        let r0 = return_map(system, k, winding, s.x, s.y, grid, tol)?;
        let fval = Vector2::new(r0.0 - s.x, r0.1 - s.y);
        if fval.norm() < fp_tol {
            return Ok((s.x, s.y, fval.norm()));
        }
        let rx = return_map(system, k, winding, s.x + h, s.y, grid, tol)?;
        let rv = return_map(system, k, winding, s.x, s.y + h, grid, tol)?;
        let j = Matrix2::new(
            (rx.0 - s.x - h - fval.x) / h,
            (rv.0 - s.x - fval.x) / h,
            (rx.1 - s.y - fval.y) / h,
            (rv.1 - s.y - h - fval.y) / h,
        );
        let det = j.determinant();
        if det.abs() < 1e-10 {
            return Err(Error::Diverged("singular return-map Jacobian".into()));
        }
        let dsol = -j.try_inverse().expect("checked determinant") * fval;
        s += dsol;
        if s.x < grid.x_min - grid.window_margin || s.x > grid.x_max + grid.window_margin {
            return Err(Error::Diverged("Newton left the scan window".into()));
        }
    }
    Err(Error::Diverged("fixed-point Newton did not converge".into()))
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub enum SeedOutcome {
    /// Residual below tolerance, possibly after Newton refinement.
    FixedPoint { x: f64, vx: f64, residual: f64 },
    /// Came back to the section but not to itself.
    Returned { x1: f64, vx1: f64, residual: f64 },
    NoReturn { reason: String },
}

impl SeedOutcome {
    pub fn class(&self) -> &'static str {
        match self {
            SeedOutcome::FixedPoint { .. } => "fixed_point",
            SeedOutcome::Returned { .. } => "returned",
            SeedOutcome::NoReturn { .. } => "no_return",
        }
    }

    pub fn residual(&self) -> Option<f64> {
        match self {
            SeedOutcome::FixedPoint { residual, .. } | SeedOutcome::Returned { residual, .. } => {
                Some(*residual)
            }
            SeedOutcome::NoReturn { .. } => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ScanResult {
    pub seeds: Vec<(f64, f64)>,
    pub outcomes: Vec<SeedOutcome>,
    /// Deduplicated fixed points `(x, vx, residual)`.
    pub fixed_points: Vec<(f64, f64, f64)>,
}

/// Scan a grid of section seeds for fixed points of the return map.
/// Near-misses (residual below `refine_threshold`) get Newton refinement.
pub fn poincare_scan(
    system: &MagneticSystem,
    k: f64,
    winding: i64,
    grid: &SectionGrid,
    fp_tol: f64,
    tol: f64,
) -> Result<ScanResult> {
    if grid.nx < 2 || grid.nvx < 1 || !(grid.x_max > grid.x_min) {
        return Err(Error::InvalidArgument("scan grid must have nx >= 2 and a nonempty window".into()));
    }
    let mut seeds = Vec::with_capacity(grid.nx * grid.nvx);
    for i in 0..grid.nx {
        let x = grid.x_min + (grid.x_max - grid.x_min) * i as f64 / (grid.nx - 1) as f64;
        let g11 = system.chart.metric(x, 0.0)?[(0, 0)];
        let vmax = grid.vx_fraction * (2.0 * k / g11).sqrt();
        for j in 0..grid.nvx {
            let vx = if grid.nvx == 1 {
                0.0
            } else {
                -vmax + 2.0 * vmax * j as f64 / (grid.nvx - 1) as f64
            };
            seeds.push((x, vx));
        }
    }
    let refine_threshold = 0.2;
    let outcomes: Vec<SeedOutcome> = seeds
        .par_iter()
        .map(|&(x, vx)| match return_map(system, k, winding, x, vx, grid, tol) {
            Ok((x1, vx1, _t)) => {
                let residual = ((x1 - x).powi(2) + (vx1 - vx).powi(2)).sqrt();
                if residual < fp_tol {
                    SeedOutcome::FixedPoint { x, vx, residual }
                } else if residual < refine_threshold {
                    match refine_fixed_point(system, k, winding, (x, vx), grid, fp_tol, tol) {
                        Ok((xf, vf, r)) => SeedOutcome::FixedPoint { x: xf, vx: vf, residual: r },
                        Err(_) => SeedOutcome::Returned { x1, vx1, residual },
                    }
                } else {
                    SeedOutcome::Returned { x1, vx1, residual }
                }
            }
            Err(Error::NoReturn(reason)) => SeedOutcome::NoReturn { reason },
            Err(e) => SeedOutcome::NoReturn { reason: e.to_string() },
        })
        .collect();

    let mut fps: Vec<(f64, f64, f64)> = outcomes
        .iter()
        .filter_map(|o| match o {
            SeedOutcome::FixedPoint { x, vx, residual } => Some((*x, *vx, *residual)),
            _ => None,
        })
        .collect();
    fps.sort_by(|a, b| (a.0, a.1).partial_cmp(&(b.0, b.1)).expect("finite coordinates"));
    let mut dedup: Vec<(f64, f64, f64)> = Vec::new();
    for fp in fps {
        match dedup.iter_mut().find(|d| (d.0 - fp.0).abs() < 1e-4 && (d.1 - fp.1).abs() < 1e-4) {
            Some(d) => {
                if fp.2 < d.2 {
                    *d = fp;
                }
            }
            None => dedup.push(fp),
        }
    }
    Ok(ScanResult { seeds, outcomes, fixed_points: dedup })
}
