//! Dormand–Prince 5(4) with step-size control and continuous extension.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { rtol: 1e-10, atol: 1e-12, h_init: 0.0, h_max: f64::INFINITY, h_min: 1e-14, max_steps: 200_000 }
    }
}

/// Accepted step as stored for interpolation.
#[derive(Debug, Clone)]
struct Segment {
    t0: f64,
    h: f64,
    coef: [Vec<f64>; 5],
}

#[derive(Debug, Clone, Default)]
pub struct OdeSolution {
    pub t: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    segments: Vec<Segment>,
    /// Set when the step callback asked to stop.
    pub stopped: Option<String>,
}

impl OdeSolution {
    /// Continuous extension at `t`, clamped to the integrated range.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        if self.segments.is_empty() || t <= self.t[0] {
            return self.y[0].clone();
        }
        let idx = self.segments.partition_point(|s| s.t0 + s.h < t).min(self.segments.len() - 1);
        let s = &self.segments[idx];
        let th = ((t - s.t0) / s.h).clamp(0.0, 1.0);
        let th1 = 1.0 - th;
        let [r1, r2, r3, r4, r5] = &s.coef;
        (0..r1.len()).map(|i| r1[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i])))).collect()
    }

    pub fn t_end(&self) -> f64 {
        *self.t.last().expect("solution holds the initial point")
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
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
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn axpy(y: &[f64], h: f64, terms: &[(f64, &[f64])]) -> Vec<f64> {
    (0..y.len()).map(|i| y[i] + h * terms.iter().map(|(c, k)| c * k[i]).sum::<f64>()).collect()
}

/// Integrate `y' = f(t, y)` from `t0` to `t_end`.
///
/// `on_step` sees every accepted state and may adjust it in place (projection
/// onto a constraint) or return a reason to stop. A failing right-hand side
/// inside a trial step shrinks the step; at the step floor the error is returned.
pub fn dopri5<F, C>(mut f: F, t0: f64, y0: Vec<f64>, t_end: f64, opts: &OdeOptions, mut on_step: C) -> Result<OdeSolution>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
    C: FnMut(f64, &mut Vec<f64>) -> Option<String>,
{
    let mut sol = OdeSolution { t: vec![t0], y: vec![y0.clone()], segments: Vec::new(), stopped: None };
    if t_end <= t0 {
        return Ok(sol);
    }
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y)?;
    let mut h = if opts.h_init > 0.0 { opts.h_init } else { initial_step(&y, &k1, opts) };
    h = h.min(opts.h_max).min(t_end - t);
    let mut steps = 0;
    while t < t_end {
        steps += 1;
        if steps > opts.max_steps {
            return Err(Error::StiffnessFailure { t, dt: h });
        }
        if h < opts.h_min {
            return Err(Error::StiffnessFailure { t, dt: h });
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        match trial(&mut f, t, &y, &k1, h, opts) {
            Ok((y_new, k7, err, stages)) if err <= 1.0 => {
                let coef = dense_coef(&y, &y_new, &k1, &stages, &k7, h);
                t = if last { t_end } else { t + h };
                let mut y_acc = y_new.clone();
                let stop = on_step(t, &mut y_acc);
                let projected = y_acc != y_new;
                sol.segments.push(Segment { t0: t - h, h, coef });
                sol.t.push(t);
                sol.y.push(y_acc.clone());
                k1 = if projected { f(t, &y_acc)? } else { k7 };
                y = y_acc;
                if let Some(reason) = stop {
                    sol.stopped = Some(reason);
                    return Ok(sol);
                }
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                h = (h * fac).min(opts.h_max);
            }
            Ok((_, _, err, _)) => {
                h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            }
            Err(e) => {
                h *= 0.25;
                if h < opts.h_min {
                    return Err(e);
                }
            }
        }
    }
    Ok(sol)
}

type Trial = (Vec<f64>, Vec<f64>, f64, [Vec<f64>; 4]);

fn trial<F>(f: &mut F, t: f64, y: &[f64], k1: &[f64], h: f64, opts: &OdeOptions) -> Result<Trial>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
{
    let k2 = f(t + C2 * h, &axpy(y, h, &[(A21, k1)]))?;
    let k3 = f(t + C3 * h, &axpy(y, h, &[(A31, k1), (A32, &k2)]))?;
    let k4 = f(t + C4 * h, &axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]))?;
    let k5 = f(t + C5 * h, &axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]))?;
    let k6 = f(t + h, &axpy(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]))?;
    let y_new = axpy(y, h, &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
    let k7 = f(t + h, &y_new)?;
    let mut acc = 0.0;
    for i in 0..y.len() {
        let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
        acc += (e / sc).powi(2);
    }
    let err = (acc / y.len().max(1) as f64).sqrt();
    if !err.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
        return Ok((y_new, k7, f64::INFINITY, [k3, k4, k5, k6]));
    }
    Ok((y_new, k7, err, [k3, k4, k5, k6]))
}

fn dense_coef(y: &[f64], y_new: &[f64], k1: &[f64], stages: &[Vec<f64>; 4], k7: &[f64], h: f64) -> [Vec<f64>; 5] {
    let [k3, k4, k5, k6] = stages;
    let m = y.len();
    let r1 = y.to_vec();
    let r2: Vec<f64> = (0..m).map(|i| y_new[i] - y[i]).collect();
    let r3: Vec<f64> = (0..m).map(|i| h * k1[i] - r2[i]).collect();
    let r4: Vec<f64> = (0..m).map(|i| r2[i] - h * k7[i] - r3[i]).collect();
    let r5: Vec<f64> =
        (0..m).map(|i| h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i])).collect();
    [r1, r2, r3, r4, r5]
}

fn initial_step(y: &[f64], f0: &[f64], opts: &OdeOptions) -> f64 {
    let scale = |i: usize| opts.atol + opts.rtol * y[i].abs();
    let d0 = (0..y.len()).map(|i| (y[i] / scale(i)).powi(2)).sum::<f64>().sqrt();
    let d1 = (0..y.len()).map(|i| (f0[i] / scale(i)).powi(2)).sum::<f64>().sqrt();
    if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_is_accurate() {
        let sol = dopri5(|_, y| Ok(vec![-y[0]]), 0.0, vec![1.0], 3.0, &OdeOptions::default(), |_, _| None).unwrap();
        assert!((sol.y.last().unwrap()[0] - (-3.0f64).exp()).abs() < 1e-9);
        // dense output between steps
        for t in [0.1, 0.77, 1.5, 2.9] {
            assert!((sol.eval(t)[0] - (-t).exp()).abs() < 1e-8);
        }
    }

    #[test]
    fn harmonic_oscillator_keeps_energy() {
        let sol =
            dopri5(|_, y| Ok(vec![y[1], -y[0]]), 0.0, vec![1.0, 0.0], 20.0, &OdeOptions::default(), |_, _| None).unwrap();
        let y = sol.y.last().unwrap();
        assert!((y[0] - 20f64.cos()).abs() < 1e-8);
        assert!((y[0] * y[0] + y[1] * y[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn callback_can_stop() {
        let sol = dopri5(
            |_, y| Ok(vec![y[0]]),
            0.0,
            vec![1.0],
            10.0,
            &OdeOptions::default(),
            |_, y| (y[0] > 5.0).then(|| "large".to_string()),
        )
        .unwrap();
        assert_eq!(sol.stopped.as_deref(), Some("large"));
        assert!(sol.t_end() < 10.0);
    }

    #[test]
    fn failing_rhs_shrinks_then_errors() {
        let r = dopri5(
            |_, y| if y[0] > 2.0 { Err(Error::Divergent("blow".into())) } else { Ok(vec![1.0]) },
            0.0,
            vec![0.0],
            5.0,
            &OdeOptions::default(),
            |_, _| None,
        );
        assert!(r.is_err());
    }
}
