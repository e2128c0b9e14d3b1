//! Runge–Kutta integration over plain state vectors: classical fixed-step
//! RK4 and the adaptive Fehlberg 4(5) pair with proportional step control.
//!
//! Both integrators emit rows on the uniform output grid `t0 + k·dt` (the
//! adaptive one clamps internal steps so grid points are hit exactly, no
//! interpolation). A right-hand side may fail mid-run — e.g. the state
//! leaves a chart — in which case the rows produced so far are returned
//! with a truncation marker instead of an error.

use crate::error::CoreError;

/// Integration result: rows on the output grid, plus a marker when the run
/// stopped early because the right-hand side failed.
#[derive(Clone, Debug)]
pub struct IntegrationOutput {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// `Some(reason)` when the trajectory ends before `t_final`.
    pub truncated: Option<String>,
}

fn finite(y: &[f64]) -> bool {
    y.iter().all(|v| v.is_finite())
}

/// Classical fixed-step fourth-order Runge–Kutta on the grid `t0 + k·dt`,
/// with a clipped final step if `t_final` is not a grid point.
pub fn integrate_fixed<F>(
    mut rhs: F,
    y0: &[f64],
    t0: f64,
    t_final: f64,
    dt: f64,
) -> Result<IntegrationOutput, CoreError>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>, CoreError>,
{
    if !(dt > 0.0) || !t_final.is_finite() || t_final <= t0 {
        return Err(CoreError::Config(format!(
            "bad integration window: t0 = {t0}, t_final = {t_final}, dt = {dt}"
        )));
    }
    let mut times = vec![t0];
    let mut states = vec![y0.to_vec()];
    let mut y = y0.to_vec();
    let mut k = 0usize;
    // First evaluation failing is a hard error, not a truncation.
    rhs(t0, &y)?;
    loop {
        let t = t0 + k as f64 * dt;
        if t >= t_final - 1e-12 * dt.max(1.0) {
            break;
        }
        let h = dt.min(t_final - t);
        match rk4_step(&mut rhs, t, &y, h) {
            Ok(next) if finite(&next) => y = next,
            Ok(_) => {
                return Ok(IntegrationOutput {
                    times,
                    states,
                    truncated: Some(format!("non-finite state at t = {t:.6}")),
                })
            }
            Err(e) => {
                return Ok(IntegrationOutput {
                    times,
                    states,
                    truncated: Some(format!("right-hand side failed at t = {t:.6}: {e}")),
                })
            }
        }
        k += 1;
        // Recompute the grid time from the index so rounding cannot drift;
        // the final row lands exactly on t_final.
        times.push((t0 + k as f64 * dt).min(t_final));
        states.push(y.clone());
    }
    Ok(IntegrationOutput {
        times,
        states,
        truncated: None,
    })
}

fn rk4_step<F>(rhs: &mut F, t: f64, y: &[f64], h: f64) -> Result<Vec<f64>, CoreError>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>, CoreError>,
{
    let n = y.len();
    let k1 = rhs(t, y)?;
    let mut tmp: Vec<f64> = (0..n).map(|i| y[i] + 0.5 * h * k1[i]).collect();
    let k2 = rhs(t + 0.5 * h, &tmp)?;
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k2[i];
    }
    let k3 = rhs(t + 0.5 * h, &tmp)?;
    for i in 0..n {
        tmp[i] = y[i] + h * k3[i];
    }
    let k4 = rhs(t + h, &tmp)?;
    Ok((0..n)
        .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

// Fehlberg 4(5) tableau.
const A: [[f64; 5]; 5] = [
    [1.0 / 4.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 32.0, 9.0 / 32.0, 0.0, 0.0, 0.0],
    [1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0, 0.0, 0.0],
    [439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0, 0.0],
    [
        -8.0 / 27.0,
        2.0,
        -3544.0 / 2565.0,
        1859.0 / 4104.0,
        -11.0 / 40.0,
    ],
];
const C: [f64; 6] = [0.0, 1.0 / 4.0, 3.0 / 8.0, 12.0 / 13.0, 1.0, 1.0 / 2.0];
const B5: [f64; 6] = [
    16.0 / 135.0,
    0.0,
    6656.0 / 12825.0,
    28561.0 / 56430.0,
    -9.0 / 50.0,
    2.0 / 55.0,
];
const B4: [f64; 6] = [
    25.0 / 216.0,
    0.0,
    1408.0 / 2565.0,
    2197.0 / 4104.0,
    -1.0 / 5.0,
    0.0,
];

const H_MIN: f64 = 1e-12;

/// Adaptive Fehlberg 4(5): local error from the embedded pair, acceptance at
/// `err ≤ tol · max(1, |y|∞)`, step factor `0.9 (tol/err)^{1/5}` clamped to
/// `[0.2, 5]`, fifth-order propagation. Steps are clamped to land exactly on
/// the output grid `t0 + k·dt_out`. A step shrinking below `1e-12` raises
/// [`CoreError::Stiffness`] with the time reached.
pub fn integrate_adaptive<F>(
    mut rhs: F,
    y0: &[f64],
    t0: f64,
    t_final: f64,
    dt_out: f64,
    tol: f64,
) -> Result<IntegrationOutput, CoreError>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>, CoreError>,
{
    if !(dt_out > 0.0) || !t_final.is_finite() || t_final <= t0 || !(tol > 0.0) {
        return Err(CoreError::Config(format!(
            "bad integration window: t0 = {t0}, t_final = {t_final}, dt = {dt_out}, tol = {tol}"
        )));
    }
    let mut times = vec![t0];
    let mut states = vec![y0.to_vec()];
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut h = dt_out.min(t_final - t0);
    let mut next_row = 1usize;
    rhs(t0, &y)?;
    while t < t_final - 1e-12 * dt_out.max(1.0) {
        let t_next_out = (t0 + next_row as f64 * dt_out).min(t_final);
        let h_try = h.min(t_next_out - t);
        match rkf_step(&mut rhs, t, &y, h_try) {
            Ok((y5, err)) if finite(&y5) => {
                let scale = y.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                if err <= tol * scale {
                    t += h_try;
                    y = y5;
                    if (t - t_next_out).abs() <= 1e-12 * dt_out.max(1.0) {
                        t = t_next_out;
                        times.push(t);
                        states.push(y.clone());
                        next_row += 1;
                    }
                }
                let factor = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * (tol * scale / err).powf(0.2)).clamp(0.2, 5.0)
                };
                h = (h_try * factor).min(t_final - t0);
                if h < H_MIN {
                    return Err(CoreError::Stiffness(t));
                }
            }
            Ok(_) | Err(_) if h_try > H_MIN => {
                // A failing or non-finite trial step: retry shorter.
                h = h_try * 0.5;
            }
            Ok(_) => {
                return Ok(IntegrationOutput {
                    times,
                    states,
                    truncated: Some(format!("non-finite state at t = {t:.6}")),
                });
            }
            Err(e) => {
                return Ok(IntegrationOutput {
                    times,
                    states,
                    truncated: Some(format!("right-hand side failed at t = {t:.6}: {e}")),
                });
            }
        }
    }
    Ok(IntegrationOutput {
        times,
        states,
        truncated: None,
    })
}

fn rkf_step<F>(rhs: &mut F, t: f64, y: &[f64], h: f64) -> Result<(Vec<f64>, f64), CoreError>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>, CoreError>,
{
    let n = y.len();
    let mut k: Vec<Vec<f64>> = Vec::with_capacity(6);
    k.push(rhs(t, y)?);
    for stage in 1..6 {
        let mut arg = y.to_vec();
        for (j, kj) in k.iter().enumerate() {
            let a = A[stage - 1][j];
            if a != 0.0 {
                for i in 0..n {
                    arg[i] += h * a * kj[i];
                }
            }
        }
        k.push(rhs(t + C[stage] * h, &arg)?);
    }
    let mut y5 = y.to_vec();
    let mut err = 0.0f64;
    for i in 0..n {
        let mut d5 = 0.0;
        let mut d4 = 0.0;
        for stage in 0..6 {
            d5 += B5[stage] * k[stage][i];
            d4 += B4[stage] * k[stage][i];
        }
        y5[i] += h * d5;
        err = err.max((h * (d5 - d4)).abs());
    }
    Ok((y5, err))
}
