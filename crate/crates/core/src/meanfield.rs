//! Mean-field analysis of the superradiant transition.
//!
//! Zero temperature uses the Holstein–Primakoff vacuum energy per atom as a
//! function of `φ = β²/N`; finite temperature uses the displaced-field free
//! energy per atom as a function of the field amplitude `α` (with `k_B = 1`).

use crate::core_model::ModelParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalPoint {
    /// `None` when the closed form has a negative radicand.
    pub lambda_c: Option<f64>,
    pub temperature: f64,
    pub params: ModelParams,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandscapePoint {
    pub order_parameter: f64,
    /// Energy (or free energy) per atom.
    pub value: f64,
}

/// `λ_c = √(Δ(ω − U/2)/4)`.
pub fn critical_coupling(params: &ModelParams) -> Result<CriticalPoint> {
    params.validate()?;
    let radicand = params.delta * (params.omega - params.stark_u / 2.0) / 4.0;
    Ok(CriticalPoint {
        lambda_c: (radicand >= 0.0).then(|| radicand.sqrt()),
        temperature: 0.0,
        params: *params,
    })
}

/// `x / tanh(x)`, finite at the origin.
fn x_coth_x(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 + x * x / 3.0
    } else {
        x / x.tanh()
    }
}

/// `λ_c(T) = √((Δ/4)[ω/tanh(Δ/2T) − U/2])`; `T = 0` takes the `tanh → 1` limit.
pub fn critical_coupling_thermal(params: &ModelParams, temperature: f64) -> Result<CriticalPoint> {
    params.validate()?;
    if !(temperature >= 0.0) || !temperature.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "temperature must be finite and non-negative, got {temperature}"
        )));
    }
    // Δ/tanh(Δ/2T) = 2T · x coth x with x = Δ/2T
    let delta_coth = if temperature == 0.0 {
        params.delta.abs()
    } else {
        2.0 * temperature * x_coth_x(params.delta / (2.0 * temperature))
    };
    let radicand = (params.omega * delta_coth - params.delta * params.stark_u / 2.0) / 4.0;
    Ok(CriticalPoint {
        lambda_c: (radicand >= 0.0).then(|| radicand.sqrt()),
        temperature,
        params: *params,
    })
}

/// `E_G/N = Δ(φ − ½) − 4λ²φ(1 − φ)/(ω + U(φ − ½))`.
pub fn ground_energy_density(phi: f64, params: &ModelParams) -> Result<f64> {
    if !(0.0..=1.0).contains(&phi) {
        return Err(Error::InvalidParameter(format!("phi = {phi} outside [0, 1]")));
    }
    let denom = params.omega + params.stark_u * (phi - 0.5);
    if denom == 0.0 {
        return Err(Error::Singular(format!("ω + U(φ − ½) vanishes at φ = {phi}")));
    }
    let l2 = params.lambda * params.lambda;
    Ok(params.delta * (phi - 0.5) - 4.0 * l2 * phi * (1.0 - phi) / denom)
}

/// `ln(2 cosh x)` without overflow.
fn ln_two_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p()
}

fn atomic_splitting(alpha: f64, params: &ModelParams) -> f64 {
    let a2 = alpha * alpha;
    let z = params.delta + params.stark_u * a2;
    let x = 4.0 * params.lambda * alpha;
    z.hypot(x)
}

/// `f(α) = ωα² − T ln[2 cosh(φ(α)/2T)]`, `φ(α) = √((Δ + Uα²)² + (4λα)²)`.
pub fn free_energy_density(alpha: f64, params: &ModelParams, temperature: f64) -> Result<f64> {
    if !(temperature > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "free energy needs T > 0, got {temperature}"
        )));
    }
    let phi = atomic_splitting(alpha, params);
    Ok(params.omega * alpha * alpha - temperature * ln_two_cosh(phi / (2.0 * temperature)))
}

/// `f'(α)/α`, which stays well conditioned where `f` itself is flat.
fn reduced_slope(alpha: f64, params: &ModelParams, temperature: f64) -> f64 {
    let a2 = alpha * alpha;
    let z = params.delta + params.stark_u * a2;
    let phi = atomic_splitting(alpha, params);
    if phi == 0.0 {
        return 2.0 * params.omega;
    }
    let lam2 = params.lambda * params.lambda;
    2.0 * params.omega
        - (phi / (2.0 * temperature)).tanh() * (params.stark_u * z + 8.0 * lam2) / phi
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderParameter {
    pub alpha: f64,
    pub free_energy: f64,
}

const SCAN_POINTS: usize = 512;

pub fn alpha_scan_limit(params: &ModelParams) -> f64 {
    2.0 * ((params.lambda / params.omega).powi(2) + 1.0).sqrt()
}

/// Global minimizer of the free energy over `α ∈ [0, α_max]`.
///
/// A 512-point scan locates the basin; the minimizer is then refined to
/// `1e-10` by bisection on the sign of `f'(α)/α` (golden section on `f`
/// when the slope does not change sign inside the bracket).
pub fn order_parameter(params: &ModelParams, temperature: f64) -> Result<OrderParameter> {
    params.validate()?;
    if !(temperature > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "order parameter needs T > 0, got {temperature}"
        )));
    }
    let amax = alpha_scan_limit(params);
    let step = amax / (SCAN_POINTS - 1) as f64;
    let values: Vec<f64> = (0..SCAN_POINTS)
        .map(|i| free_energy_density(i as f64 * step, params, temperature))
        .collect::<Result<_>>()?;
    let best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    if best == SCAN_POINTS - 1 {
        let dump: Vec<String> = values
            .iter()
            .step_by(64)
            .enumerate()
            .map(|(i, v)| format!("f({:.4})={v:.6e}", i as f64 * 64.0 * step))
            .collect();
        return Err(Error::BracketFailure(format!(
            "minimum at the scan edge α_max = {amax:.4}; landscape: {}",
            dump.join(", ")
        )));
    }
    let f0 = values[0];
    if best == 0 && reduced_slope(0.0, params, temperature) >= 0.0 {
        return Ok(OrderParameter {
            alpha: 0.0,
            free_energy: f0,
        });
    }
    let lo = if best == 0 { 0.0 } else { (best - 1) as f64 * step };
    let hi = (best + 1) as f64 * step;
    let alpha = refine(params, temperature, lo, hi)?;
    let f = free_energy_density(alpha, params, temperature)?;
    if f > f0 {
        return Ok(OrderParameter {
            alpha: 0.0,
            free_energy: f0,
        });
    }
    Ok(OrderParameter { alpha, free_energy: f })
}

fn refine(params: &ModelParams, temperature: f64, lo: f64, hi: f64) -> Result<f64> {
    const TOL: f64 = 1e-10;
    let slope = |a: f64| reduced_slope(a, params, temperature);
    let (mut a, mut b) = (lo, hi);
    if slope(a) < 0.0 && slope(b) > 0.0 {
        while b - a > TOL {
            let mid = 0.5 * (a + b);
            if slope(mid) < 0.0 {
                a = mid;
            } else {
                b = mid;
            }
        }
        return Ok(0.5 * (a + b));
    }
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let f = |x: f64| free_energy_density(x, params, temperature);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while b - a > TOL {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    Ok(0.5 * (a + b))
}

pub fn ground_energy_landscape(params: &ModelParams, points: usize) -> Result<Vec<LandscapePoint>> {
    let n = points.max(2);
    (0..n)
        .map(|i| {
            let phi = i as f64 / (n - 1) as f64;
            Ok(LandscapePoint {
                order_parameter: phi,
                value: ground_energy_density(phi, params)?,
            })
        })
        .collect()
}

pub fn free_energy_landscape(
    params: &ModelParams,
    temperature: f64,
    points: usize,
) -> Result<Vec<LandscapePoint>> {
    let n = points.max(2);
    let amax = alpha_scan_limit(params);
    (0..n)
        .map(|i| {
            let alpha = amax * i as f64 / (n - 1) as f64;
            Ok(LandscapePoint {
                order_parameter: alpha,
                value: free_energy_density(alpha, params, temperature)?,
            })
        })
        .collect()
}
