//! Adaptive embedded Runge-Kutta integration (Dormand-Prince 5(4)).
//!
//! The stepper exposes accepted steps one at a time so callers can watch for
//! section crossings or sign changes and re-integrate short spans to localize
//! events to machine precision.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Hard floor on the step size before the integrator reports failure.
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { rtol: 1e-9, atol: 1e-9, h_min: 1e-13, max_steps: 50_000_000 }
    }
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        OdeOptions { rtol: tol, atol: tol, ..OdeOptions::default() }
    }
}

// Dormand-Prince coefficients.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = B1 - 5179.0 / 57600.0;
const E3: f64 = B3 - 7571.0 / 16695.0;
const E4: f64 = B4 - 393.0 / 640.0;
const E5: f64 = B5 - -92097.0 / 339200.0;
const E6: f64 = B6 - 187.0 / 2100.0;
const E7: f64 = -1.0 / 40.0;

/// One accepted step: endpoint states plus endpoint derivatives, enough for
/// cubic Hermite interpolation inside the step.
#[derive(Clone, Debug)]
pub struct Step {
    pub t0: f64,
    pub t1: f64,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    pub f0: Vec<f64>,
    pub f1: Vec<f64>,
}

impl Step {
    /// Cubic Hermite interpolation of the state at `t` within the step.
    pub fn interpolate(&self, t: f64) -> Vec<f64> {
        let h = self.t1 - self.t0;
        let s = (t - self.t0) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        (0..self.y0.len())
            .map(|i| {
                h00 * self.y0[i] + h10 * h * self.f0[i] + h01 * self.y1[i] + h11 * h * self.f1[i]
            })
            .collect()
    }
}

pub struct Stepper<'a, F> {
    f: &'a mut F,
    pub t: f64,
    pub y: Vec<f64>,
    fy: Vec<f64>,
    h: f64,
    opts: OdeOptions,
    steps_taken: usize,
    direction: f64,
}

impl<'a, F> Stepper<'a, F>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    pub fn new(f: &'a mut F, t0: f64, y0: &[f64], direction: f64, opts: OdeOptions) -> Result<Self> {
        let mut fy = vec![0.0; y0.len()];
        f(t0, y0, &mut fy)?;
        let scale = fy.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-8);
        let h0 = (0.01 / scale).min(0.1).max(1e-6);
        Ok(Stepper {
            f,
            t: t0,
            y: y0.to_vec(),
            fy,
            h: h0 * direction.signum(),
            opts,
            steps_taken: 0,
            direction: direction.signum(),
        })
    }

    /// Take one accepted adaptive step, not stepping past `t_limit`.
    pub fn step(&mut self, t_limit: f64) -> Result<Step> {
        let n = self.y.len();
        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        let mut k5 = vec![0.0; n];
        let mut k6 = vec![0.0; n];
        let mut k7 = vec![0.0; n];
        let mut ytmp = vec![0.0; n];
        let mut y1 = vec![0.0; n];
        loop {
            self.steps_taken += 1;
            if self.steps_taken > self.opts.max_steps {
                return Err(Error::BudgetExceeded(format!(
                    "integrator exceeded {} steps at t={}",
                    self.opts.max_steps, self.t
                )));
            }
            let remaining = t_limit - self.t;
            if remaining * self.direction <= 0.0 {
                return Err(Error::InvalidArgument("step requested past the time limit".into()));
            }
            let mut h = self.h;
            if h.abs() > remaining.abs() {
                h = remaining;
            }
            if h.abs() < self.opts.h_min {
                return Err(Error::StepFailure { t: self.t, dt: h });
            }
            let k1 = &self.fy;
            for i in 0..n {
                ytmp[i] = self.y[i] + h * A21 * k1[i];
            }
            (self.f)(self.t + h / 5.0, &ytmp, &mut k2)?;
            for i in 0..n {
                ytmp[i] = self.y[i] + h * (A31 * k1[i] + A32 * k2[i]);
            }
            (self.f)(self.t + 0.3 * h, &ytmp, &mut k3)?;
            for i in 0..n {
                ytmp[i] = self.y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            (self.f)(self.t + 0.8 * h, &ytmp, &mut k4)?;
            for i in 0..n {
                ytmp[i] = self.y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            (self.f)(self.t + 8.0 / 9.0 * h, &ytmp, &mut k5)?;
            for i in 0..n {
                ytmp[i] = self.y[i]
                    + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            (self.f)(self.t + h, &ytmp, &mut k6)?;
            for i in 0..n {
                y1[i] = self.y[i]
                    + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
            }
            (self.f)(self.t + h, &y1, &mut k7)?;

            let mut err2 = 0.0;
            for i in 0..n {
                let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i]
                    + E7 * k7[i]);
                let sc = self.opts.atol + self.opts.rtol * self.y[i].abs().max(y1[i].abs());
                err2 += (e / sc) * (e / sc);
            }
            let err = (err2 / n as f64).sqrt();
            if err <= 1.0 {
                let step = Step {
                    t0: self.t,
                    t1: self.t + h,
                    y0: std::mem::replace(&mut self.y, y1.clone()),
                    y1: y1.clone(),
                    f0: self.fy.clone(),
                    f1: k7.clone(),
                };
                self.t += h;
                self.fy.copy_from_slice(&k7);
                let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                self.h = h * factor;
                return Ok(step);
            }
            let factor = (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            self.h = h * factor;
            if self.h.abs() < self.opts.h_min {
                return Err(Error::StepFailure { t: self.t, dt: self.h });
            }
        }
    }

    /// Advance exactly to `t_end` (the final step is clamped).
    pub fn advance_to(&mut self, t_end: f64) -> Result<()> {
        while (t_end - self.t) * self.direction > 1e-15 * (1.0 + t_end.abs()) {
            self.step(t_end)?;
        }
        Ok(())
    }
}

/// Integrate from `(t0, y0)` to `t1` and return the final state.
pub fn integrate_span<F>(
    f: &mut F,
    t0: f64,
    y0: &[f64],
    t1: f64,
    opts: OdeOptions,
) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    if (t1 - t0).abs() <= 1e-15 * (1.0 + t0.abs()) {
        return Ok(y0.to_vec());
    }
    let dir = (t1 - t0).signum();
    let mut stepper = Stepper::new(f, t0, y0, dir, opts)?;
    stepper.advance_to(t1)?;
    Ok(stepper.y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn harmonic_oscillator_period() {
        let mut f = |_t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[1];
            dy[1] = -y[0];
            Ok(())
        };
        let y = integrate_span(
            &mut f,
            0.0,
            &[1.0, 0.0],
            2.0 * std::f64::consts::PI,
            OdeOptions::with_tol(1e-10),
        )
        .unwrap();
        assert_relative_eq!(y[0], 1.0, epsilon = 1e-8);
        assert_relative_eq!(y[1], 0.0, epsilon = 1e-8);
    }

    #[test]
    fn exponential_accuracy_scales_with_tol() {
        for tol in [1e-6, 1e-9, 1e-12] {
            let mut f = |_t: f64, y: &[f64], dy: &mut [f64]| {
                dy[0] = y[0];
                Ok(())
            };
            let y = integrate_span(&mut f, 0.0, &[1.0], 1.0, OdeOptions::with_tol(tol)).unwrap();
            assert!(
                (y[0] - 1f64.exp()).abs() < 1e3 * tol,
                "tol={tol}: err={}",
                (y[0] - 1f64.exp()).abs()
            );
        }
    }

    #[test]
    fn hermite_interpolation_midpoint() {
        let mut f = |t: f64, _y: &[f64], dy: &mut [f64]| {
            dy[0] = t.cos();
            Ok(())
        };
        let mut stepper = Stepper::new(&mut f, 0.0, &[0.0], 1.0, OdeOptions::with_tol(1e-10)).unwrap();
        let step = stepper.step(10.0).unwrap();
        let tm = 0.5 * (step.t0 + step.t1);
        let ym = step.interpolate(tm);
        assert_relative_eq!(ym[0], tm.sin(), epsilon = 1e-9);
    }

    #[test]
    fn backward_integration() {
        let mut f = |_t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[1];
            dy[1] = -y[0];
            Ok(())
        };
        let fwd = integrate_span(
            &mut f,
            0.0,
            &[0.3, -0.2],
            1.7,
            OdeOptions::with_tol(1e-11),
        )
        .unwrap();
        let back = integrate_span(&mut f, 1.7, &fwd, 0.0, OdeOptions::with_tol(1e-11)).unwrap();
        assert_relative_eq!(back[0], 0.3, epsilon = 1e-9);
        assert_relative_eq!(back[1], -0.2, epsilon = 1e-9);
    }
}
