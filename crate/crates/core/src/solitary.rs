//! Solitary-wave branch `(γ, c) ↦ Q_{γ,c}` of the profile equation
//! `cQ − Q'' − γHQ' − Q²/2 = 0`.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{Field, Grid, Norm};

/// Dispersion mix `gamma` and speed `c` of a solitary wave.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveParams {
    pub gamma: f64,
    pub c: f64,
}

impl WaveParams {
    /// Validates `c > 0` and, for `gamma < 0`, `c > gamma²/4`.
    pub fn new(gamma: f64, c: f64) -> Result<WaveParams> {
        if !gamma.is_finite() || !c.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "wave parameters must be finite (gamma = {gamma}, c = {c})"
            )));
        }
        let p = WaveParams { gamma, c };
        let min = p.continuous_min_symbol();
        if min <= 0.0 {
            return Err(Error::SymbolDegenerate {
                gamma,
                c,
                min_symbol: min,
                threshold: p.existence_threshold(),
            });
        }
        Ok(p)
    }

    /// Speed threshold below which the symbol loses positivity.
    pub fn existence_threshold(&self) -> f64 {
        if self.gamma < 0.0 {
            0.25 * self.gamma * self.gamma
        } else {
            0.0
        }
    }

    /// `m(ξ) = c + ξ² + γ|ξ|`.
    pub fn symbol(&self, xi: f64) -> f64 {
        self.c + xi * xi + self.gamma * xi.abs()
    }

    fn continuous_min_symbol(&self) -> f64 {
        self.c - self.existence_threshold()
    }

    pub fn min_symbol_on(&self, grid: &Grid) -> f64 {
        grid.wavenumbers()
            .iter()
            .map(|&xi| self.symbol(xi))
            .fold(f64::INFINITY, f64::min)
    }

    /// Symbol positivity on the continuum and on the grid.
    pub fn check(&self, grid: &Grid) -> Result<()> {
        let min = self.continuous_min_symbol().min(self.min_symbol_on(grid));
        if min <= 0.0 || self.c <= 0.0 {
            return Err(Error::SymbolDegenerate {
                gamma: self.gamma,
                c: self.c,
                min_symbol: min,
                threshold: self.existence_threshold(),
            });
        }
        Ok(())
    }
}

/// Converged profile together with its certificate.
#[derive(Debug, Clone)]
pub struct SolitaryWave {
    pub params: WaveParams,
    pub profile: Field,
    /// Sup-norm defect of the profile equation.
    pub residual: f64,
    pub iterations: usize,
    /// Stabilizing factor at the last iterate; tends to 1.
    pub stabilizer: f64,
    /// Measured `sup x²|Q| + |x|³(|Q'| + |Q''|)` over the far window.
    pub decay_constant: f64,
}

impl SolitaryWave {
    pub fn grid(&self) -> &Arc<Grid> {
        self.profile.grid()
    }

    pub fn l2_squared(&self) -> f64 {
        self.profile.inner(&self.profile)
    }

    /// `‖Q − Q(−·)‖_∞`.
    pub fn evenness_defect(&self) -> f64 {
        self.profile.sub(&self.profile.reflect()).sup()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PetviashviliOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PetviashviliOptions {
    fn default() -> Self {
        PetviashviliOptions {
            tol: 1e-10,
            max_iter: 1000,
        }
    }
}

/// Exact KdV soliton `3c sech²(√c x / 2)` sampled on the grid.
pub fn kdv_soliton(c: f64, grid: &Arc<Grid>) -> Result<Field> {
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "KdV soliton speed must be positive, got {c}"
        )));
    }
    let k = 0.5 * c.sqrt();
    Field::from_fn(grid, |x| 3.0 * c / (k * x).cosh().powi(2))
}

/// Half the dealiased spectrum of `u²`.
fn half_square_spectrum(u: &Field) -> Vec<Complex64> {
    let grid = u.grid();
    let sq: Vec<f64> = u.values().iter().map(|v| 0.5 * v * v).collect();
    let mut spec = grid.forward(&sq);
    for (j, z) in spec.iter_mut().enumerate() {
        if grid.mode(j).abs() > grid.dealias_cutoff() {
            *z = Complex64::new(0.0, 0.0);
        }
    }
    spec
}

fn symmetrize(values: &mut [f64]) {
    let n = values.len();
    for j in 1..n / 2 {
        let avg = 0.5 * (values[j] + values[n - j]);
        values[j] = avg;
        values[n - j] = avg;
    }
}

/// Sup-norm of `cφ − φ'' − γHφ' − P(φ²)/2`, with `P` the 2/3-rule projection.
pub fn eqq_residual(profile: &Field, params: &WaveParams) -> f64 {
    let grid = profile.grid();
    let half_sq = half_square_spectrum(profile);
    let mut spec: Vec<Complex64> = profile
        .spectrum()
        .iter()
        .zip(grid.wavenumbers())
        .zip(&half_sq)
        .map(|((&p, &xi), &s)| params.symbol(xi) * p - s)
        .collect();
    // Hφ' has a zero Nyquist coefficient; so does the derivative part of the symbol
    let nyq = grid.nyquist_index();
    let xi_n = grid.wavenumbers()[nyq];
    spec[nyq] = (params.c + xi_n * xi_n) * profile.spectrum()[nyq] - half_sq[nyq];
    Field::from_spectrum(grid, spec).sup()
}

/// Petviashvili iteration `φ̂ ← M²·(½P\widehat{φ²})/m` with
/// `M = ⟨mφ̂, φ̂⟩ / ⟨½P\widehat{φ²}, φ̂⟩`. Iterates are symmetrized to stay even.
pub fn petviashvili_solve(
    params: WaveParams,
    grid: &Arc<Grid>,
    init: Option<&Field>,
    opts: PetviashviliOptions,
) -> Result<SolitaryWave> {
    params.check(grid)?;
    let symbol: Vec<f64> = grid.wavenumbers().iter().map(|&xi| params.symbol(xi)).collect();
    let mut phi = match init {
        Some(f) => {
            assert!(f.grid().same_as(grid), "initial guess lives on another grid");
            f.clone()
        }
        None => kdv_soliton(params.c, grid)?,
    };
    {
        let mut v = phi.clone().into_values();
        symmetrize(&mut v);
        phi = Field::new(grid, v)?;
    }

    let mut residual = eqq_residual(&phi, &params);
    let mut stabilizer = f64::NAN;
    let mut iterations = 0;
    while residual >= opts.tol {
        if iterations >= opts.max_iter {
            return Err(Error::NonConvergence {
                iterations,
                residual,
            });
        }
        iterations += 1;
        let half_sq = half_square_spectrum(&phi);
        stabilizer = match stabilizing_factor(&phi, &half_sq, &symbol) {
            Some(m) => m,
            None => {
                return Err(Error::NonConvergence {
                    iterations,
                    residual,
                })
            }
        };
        let factor = stabilizer * stabilizer;
        let next: Vec<Complex64> = half_sq
            .iter()
            .zip(&symbol)
            .map(|(s, m)| s * (factor / m))
            .collect();
        let mut values = Field::from_spectrum(grid, next).into_values();
        symmetrize(&mut values);
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonConvergence {
                iterations,
                residual,
            });
        }
        phi = Field::new(grid, values)?;
        residual = eqq_residual(&phi, &params);
    }
    let half_sq = half_square_spectrum(&phi);
    if let Some(m) = stabilizing_factor(&phi, &half_sq, &symbol) {
        stabilizer = m;
    }
    let decay = decay_constant(&phi);
    Ok(SolitaryWave {
        params,
        profile: phi,
        residual,
        iterations,
        stabilizer,
        decay_constant: decay,
    })
}

// Ratio ⟨mφ̂, φ̂⟩ / ⟨½(φ²)^, φ̂⟩; equals 1 at a fixed point.
fn stabilizing_factor(phi: &Field, half_sq: &[Complex64], symbol: &[f64]) -> Option<f64> {
    let hat = phi.spectrum();
    let num: f64 = hat
        .iter()
        .zip(symbol)
        .map(|(p, m)| m * p.norm_sqr())
        .sum();
    let den: f64 = hat
        .iter()
        .zip(half_sq)
        .map(|(p, s)| (p.conj() * s).re)
        .sum();
    if den > 0.0 && num.is_finite() {
        Some(num / den)
    } else {
        None
    }
}

/// One step of a γ-homotopy.
#[derive(Debug, Clone)]
pub struct BranchStep {
    pub gamma: f64,
    pub residual: f64,
    pub iterations: usize,
    /// `‖Q_{γᵢ} − Q_{γᵢ₋₁}‖_{H¹}`.
    pub h1_increment: f64,
    /// `‖Q_{γᵢ} − Q_{γᵢ₋₁}‖_{H²}`.
    pub h2_increment: f64,
}

#[derive(Debug, Clone)]
pub struct Branch {
    pub wave: SolitaryWave,
    pub steps: Vec<BranchStep>,
}

/// Default number of homotopy steps: `max(10, ⌈|γ|/0.02⌉)`.
pub fn default_continuation_steps(gamma_target: f64) -> usize {
    10.max((gamma_target.abs() / 0.02).ceil() as usize)
}

/// Continues the branch from the KdV soliton at `γ = 0` to `gamma_target` with
/// uniform steps, seeding each solve with the previous profile.
pub fn continue_branch(
    gamma_target: f64,
    c: f64,
    n_steps: Option<usize>,
    grid: &Arc<Grid>,
    opts: PetviashviliOptions,
) -> Result<Branch> {
    let start = WaveParams::new(0.0, c)?;
    let mut wave = petviashvili_solve(start, grid, None, opts)?;
    let mut steps = Vec::new();
    if gamma_target == 0.0 {
        return Ok(Branch { wave, steps });
    }
    let n = n_steps.unwrap_or_else(|| default_continuation_steps(gamma_target)).max(1);
    for i in 1..=n {
        let gamma = gamma_target * i as f64 / n as f64;
        let wrap = |e: Error| Error::ContinuationFailed {
            gamma,
            source: Box::new(e),
        };
        let params = WaveParams::new(gamma, c).map_err(wrap)?;
        let next = petviashvili_solve(params, grid, Some(&wave.profile), opts).map_err(wrap)?;
        let diff = next.profile.sub(&wave.profile);
        steps.push(BranchStep {
            gamma,
            residual: next.residual,
            iterations: next.iterations,
            h1_increment: diff.norm(Norm::H1)?,
            h2_increment: diff.norm(Norm::H2)?,
        });
        wave = next;
    }
    Ok(Branch { wave, steps })
}

/// Solves directly from the KdV seed and falls back to continuation in γ.
pub fn solve_wave(
    params: WaveParams,
    grid: &Arc<Grid>,
    opts: PetviashviliOptions,
) -> Result<SolitaryWave> {
    params.check(grid)?;
    match petviashvili_solve(params, grid, None, opts) {
        Ok(w) => Ok(w),
        Err(Error::NonConvergence { .. }) => {
            continue_branch(params.gamma, params.c, None, grid, opts).map(|b| b.wave)
        }
        Err(e) => Err(e),
    }
}

/// Centered difference of `‖Q_{γ,c}‖²` in `c`.
#[derive(Debug, Clone)]
pub struct SpeedDerivative {
    pub dq_dc: Field,
    pub dl2_dc: f64,
    /// `|D(h) − D(2h)|/3`.
    pub richardson_error: f64,
    /// Richardson-extrapolated derivative.
    pub extrapolated: f64,
}

pub fn dc_derivative(
    params: WaveParams,
    grid: &Arc<Grid>,
    h: f64,
    opts: PetviashviliOptions,
) -> Result<SpeedDerivative> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
    }
    let solve = |c: f64| -> Result<SolitaryWave> {
        solve_wave(WaveParams::new(params.gamma, c)?, grid, opts)
    };
    let plus = solve(params.c + h)?;
    let minus = solve(params.c - h)?;
    let plus2 = solve(params.c + 2.0 * h)?;
    let minus2 = solve(params.c - 2.0 * h)?;
    let d1 = (plus.l2_squared() - minus.l2_squared()) / (2.0 * h);
    let d2 = (plus2.l2_squared() - minus2.l2_squared()) / (4.0 * h);
    let dq_dc = plus.profile.sub(&minus.profile).scale(0.5 / h);
    Ok(SpeedDerivative {
        dq_dc,
        dl2_dc: d1,
        richardson_error: (d1 - d2).abs() / 3.0,
        extrapolated: d1 + (d1 - d2) / 3.0,
    })
}

/// `sup_{L/8 ≤ |x| ≤ 3L/8} x²|Q| + |x|³(|Q'| + |Q''|)`.
pub fn decay_constant(profile: &Field) -> f64 {
    let grid = profile.grid();
    let l = grid.length();
    let d1 = profile.derivative_unchecked(1);
    let d2 = profile.derivative_unchecked(2);
    grid.nodes()
        .iter()
        .enumerate()
        .filter(|(_, x)| x.abs() >= l / 8.0 && x.abs() <= 3.0 * l / 8.0)
        .map(|(j, &x)| {
            let ax = x.abs();
            ax * ax * profile.values()[j].abs()
                + ax.powi(3) * (d1.values()[j].abs() + d2.values()[j].abs())
        })
        .fold(0.0, f64::max)
}

/// `ℒψ = ψ − ψ'' − Q_KdV ψ` with `Q_KdV` the unit-speed KdV soliton.
pub fn linearized_kdv_apply(psi: &Field) -> Result<Field> {
    let q = kdv_soliton(1.0, psi.grid())?;
    let d2 = psi.derivative_unchecked(2);
    Ok(psi.sub(&d2).sub(&q.mul(psi)))
}
