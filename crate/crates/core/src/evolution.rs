//! Time integration of the Benjamin equation, its conserved quantities, the
//! rescaling symmetry and the linearized-plus-quadratic perturbation equation
//! around a solitary wave.
//!
//! The state is advanced in Fourier space with fourth-order exponential time
//! differencing (Cox–Matthews ETDRK4). The linear part
//! `û_t = i(ξ³ + γξ|ξ|)û` is integrated exactly.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solitary::{SolitaryWave, WaveParams};
use crate::spectral::{Field, Grid, Norm};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Sup-norm above which a run is declared blown up.
pub const BLOWUP_THRESHOLD: f64 = 1e6;

/// `M(u) = ½∫u²`.
pub fn mass(u: &Field) -> f64 {
    0.5 * u.inner(u)
}

/// `E(u) = ½∫u_x² + γ/2 ‖D^{1/2}u‖² − ⅙∫u³`.
pub fn energy(u: &Field, gamma: f64) -> f64 {
    let kinetic = 0.5 * u.spectral_quadratic(|xi| xi * xi);
    let dispersive = 0.5 * gamma * u.spectral_quadratic(f64::abs);
    let cubic = u.grid().dx() * u.values().iter().map(|v| v * v * v).sum::<f64>();
    kinetic + dispersive - cubic / 6.0
}

/// Absorbing layer `−σ(x)u` acting on the outer `width` of each end of the box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sponge {
    pub strength: f64,
    pub width: f64,
}

impl Sponge {
    /// Layer covering the outer 10% of the box (5% at each end).
    pub fn outer_tenth(strength: f64, length: f64) -> Sponge {
        Sponge {
            strength,
            width: 0.05 * length,
        }
    }

    /// Damping profile `σ(x_j)`, rising smoothly (sin²) from 0 to `strength`.
    pub fn profile(&self, grid: &Grid) -> Vec<f64> {
        let edge = 0.5 * grid.length() - self.width;
        grid.nodes()
            .iter()
            .map(|&x| {
                let depth = (x.abs() - edge) / self.width;
                if depth <= 0.0 {
                    0.0
                } else {
                    let s = (0.5 * PI * depth.min(1.0)).sin();
                    self.strength * s * s
                }
            })
            .collect()
    }

    /// Inner edge of the layer, `L/2 − width`.
    pub fn inner_edge(&self, grid: &Grid) -> f64 {
        0.5 * grid.length() - self.width
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    pub dt: f64,
    pub t_final: f64,
    pub dealias: bool,
    pub sponge: Option<Sponge>,
    /// Record stride in time steps.
    pub record_every: usize,
    /// Keep a copy of the field in every record.
    pub snapshots: bool,
    /// Speed of the computational frame; the state is `u(t, y + frame_speed·t)`.
    pub frame_speed: f64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            dt: 5e-4,
            t_final: 10.0,
            dealias: true,
            sponge: None,
            record_every: 200,
            snapshots: false,
            frame_speed: 0.0,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return Err(Error::Config(format!(
                "final time must be positive, got {}",
                self.t_final
            )));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be at least 1".into()));
        }
        if !self.frame_speed.is_finite() {
            return Err(Error::Config("frame_speed must be finite".into()));
        }
        if let Some(s) = &self.sponge {
            if !(s.strength >= 0.0) || !s.strength.is_finite() {
                return Err(Error::Config(format!(
                    "sponge strength must be >= 0, got {}",
                    s.strength
                )));
            }
            if !(s.width > 0.0) || s.width >= 0.25 * grid.length() {
                return Err(Error::Config(format!(
                    "sponge width must lie in (0, L/4), got {}",
                    s.width
                )));
            }
        }
        Ok(())
    }

    /// Number of steps and the step actually used, chosen to land on `t_final`.
    pub fn steps(&self) -> (usize, f64) {
        let steps = ((self.t_final / self.dt) - 1e-9).ceil().max(1.0) as usize;
        (steps, self.t_final / steps as f64)
    }
}

#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub h1: f64,
    pub linf: f64,
    /// Lab-frame position of the computational origin, `frame_speed·t`.
    pub frame_shift: f64,
    pub snapshot: Option<Field>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub gamma: f64,
    pub records: Vec<TrajectoryRecord>,
    pub final_state: Field,
    pub final_time: f64,
    pub frame_speed: f64,
}

/// Linear symbol `i(ξ³ + γξ|ξ|) + iξ·frame_speed`, zero at the Nyquist slot.
pub fn linear_symbol(grid: &Grid, gamma: f64, frame_speed: f64) -> Vec<Complex64> {
    let nyq = grid.nyquist_index();
    grid.wavenumbers()
        .iter()
        .enumerate()
        .map(|(k, &xi)| {
            if k == nyq {
                ZERO
            } else {
                Complex64::new(0.0, xi * xi * xi + gamma * xi * xi.abs() + frame_speed * xi)
            }
        })
        .collect()
}

// (e^{z/2}−1)/z, (−4−z+e^z(4−3z+z²))/z³, (2+z+e^z(z−2))/z³, (−4−3z−z²+e^z(4−z))/z³
fn etd_coefficients(z: Complex64) -> [Complex64; 4] {
    fn direct(z: Complex64) -> [Complex64; 4] {
        let ez = z.exp();
        let z3 = z * z * z;
        [
            ((z * 0.5).exp() - 1.0) / z,
            (-4.0 - z + ez * (4.0 - 3.0 * z + z * z)) / z3,
            (2.0 + z + ez * (z - 2.0)) / z3,
            (-4.0 - 3.0 * z - z * z + ez * (4.0 - z)) / z3,
        ]
    }
    if z.norm() >= 0.5 {
        return direct(z);
    }
    // mean over a unit circle around z avoids cancellation near the origin
    const POINTS: usize = 32;
    let mut acc = [ZERO; 4];
    for j in 0..POINTS {
        let theta = 2.0 * PI * (j as f64 + 0.5) / POINTS as f64;
        let r = z + Complex64::from_polar(1.0, theta);
        for (a, v) in acc.iter_mut().zip(direct(r)) {
            *a += v;
        }
    }
    acc.map(|a| a / POINTS as f64)
}

/// ETDRK4 stepper for `v̂_t = Λv̂ + N(t, v̂)` with diagonal `Λ`.
pub struct Etdrk4 {
    h: f64,
    e: Vec<Complex64>,
    e2: Vec<Complex64>,
    q: Vec<Complex64>,
    f1: Vec<Complex64>,
    f2: Vec<Complex64>,
    f3: Vec<Complex64>,
    nv: Vec<Complex64>,
    na: Vec<Complex64>,
    nb: Vec<Complex64>,
    nc: Vec<Complex64>,
    a: Vec<Complex64>,
    b: Vec<Complex64>,
    c: Vec<Complex64>,
}

impl Etdrk4 {
    pub fn new(linear: &[Complex64], h: f64) -> Etdrk4 {
        let n = linear.len();
        let mut s = Etdrk4 {
            h,
            e: Vec::with_capacity(n),
            e2: Vec::with_capacity(n),
            q: Vec::with_capacity(n),
            f1: Vec::with_capacity(n),
            f2: Vec::with_capacity(n),
            f3: Vec::with_capacity(n),
            nv: vec![ZERO; n],
            na: vec![ZERO; n],
            nb: vec![ZERO; n],
            nc: vec![ZERO; n],
            a: vec![ZERO; n],
            b: vec![ZERO; n],
            c: vec![ZERO; n],
        };
        for &l in linear {
            let z = l * h;
            let [q, f1, f2, f3] = etd_coefficients(z);
            s.e.push(z.exp());
            s.e2.push((z * 0.5).exp());
            s.q.push(q * h);
            s.f1.push(f1 * h);
            s.f2.push(f2 * h);
            s.f3.push(f3 * h);
        }
        s
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    /// Advances `v` from `t` to `t + h`. `nonlinear(t, v, out)` writes `N(t, v)`.
    pub fn step<F>(&mut self, t: f64, v: &mut [Complex64], mut nonlinear: F) -> Result<()>
    where
        F: FnMut(f64, &[Complex64], &mut [Complex64]) -> Result<()>,
    {
        let h = self.h;
        nonlinear(t, v, &mut self.nv)?;
        for k in 0..v.len() {
            self.a[k] = self.e2[k] * v[k] + self.q[k] * self.nv[k];
        }
        nonlinear(t + 0.5 * h, &self.a, &mut self.na)?;
        for k in 0..v.len() {
            self.b[k] = self.e2[k] * v[k] + self.q[k] * self.na[k];
        }
        nonlinear(t + 0.5 * h, &self.b, &mut self.nb)?;
        for k in 0..v.len() {
            self.c[k] = self.e2[k] * self.a[k] + self.q[k] * (2.0 * self.nb[k] - self.nv[k]);
        }
        nonlinear(t + h, &self.c, &mut self.nc)?;
        for k in 0..v.len() {
            v[k] = self.e[k] * v[k]
                + self.f1[k] * self.nv[k]
                + 2.0 * self.f2[k] * (self.na[k] + self.nb[k])
                + self.f3[k] * self.nc[k];
        }
        Ok(())
    }
}

// Shared transform workspace for the nonlinear terms.
struct Workspace {
    grid: Arc<Grid>,
    mask: Vec<bool>,
    sponge: Option<Vec<f64>>,
    // state the sponge relaxes toward (zero when absent)
    far_field: Option<Vec<f64>>,
    phys: Vec<f64>,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl Workspace {
    fn new(grid: &Arc<Grid>, dealias: bool, sponge: Option<&Sponge>) -> Workspace {
        let n = grid.n();
        let mask = if dealias {
            grid.dealias_mask()
        } else {
            vec![true; n]
        };
        Workspace {
            grid: Arc::clone(grid),
            mask,
            sponge: sponge.map(|s| s.profile(grid)),
            far_field: None,
            phys: vec![0.0; n],
            buf: vec![ZERO; n],
            scratch: vec![ZERO; grid.scratch_len()],
        }
    }

    // phys ← real(ifft(v))
    fn to_physical(&mut self, v: &[Complex64]) {
        self.buf.copy_from_slice(v);
        self.grid.inverse_in_place(&mut self.buf, &mut self.scratch);
        for (p, z) in self.phys.iter_mut().zip(&self.buf) {
            *p = z.re;
        }
    }

    // buf ← fft(f(phys_j, j))
    fn transform(&mut self, f: impl Fn(f64, usize) -> f64) {
        for (j, (z, &p)) in self.buf.iter_mut().zip(&self.phys).enumerate() {
            *z = Complex64::new(f(p, j), 0.0);
        }
        self.grid.forward_in_place(&mut self.buf, &mut self.scratch);
    }

    // out += scale·iξ·buf on retained modes (Nyquist excluded)
    fn add_derivative(&self, out: &mut [Complex64], scale: f64) {
        let nyq = self.grid.nyquist_index();
        for (k, ((o, &b), &xi)) in out
            .iter_mut()
            .zip(&self.buf)
            .zip(self.grid.wavenumbers())
            .enumerate()
        {
            if k != nyq && self.mask[k] {
                *o += Complex64::new(0.0, scale * xi) * b;
            }
        }
    }

    fn add_sponge(&mut self, out: &mut [Complex64]) {
        let Some(sigma) = self.sponge.take() else {
            return;
        };
        match self.far_field.take() {
            Some(target) => {
                self.transform(|p, j| -sigma[j] * (p - target[j]));
                self.far_field = Some(target);
            }
            None => self.transform(|p, j| -sigma[j] * p),
        }
        let nyq = self.grid.nyquist_index();
        for (k, (o, &b)) in out.iter_mut().zip(&self.buf).enumerate() {
            if k != nyq && self.mask[k] {
                *o += b;
            }
        }
        self.sponge = Some(sigma);
    }

    fn sup_physical(&self) -> f64 {
        self.phys.iter().fold(0.0_f64, |m, &v| {
            if v.is_nan() {
                f64::NAN
            } else {
                m.max(v.abs())
            }
        })
    }

    // Initial spectrum: Nyquist removed, 2/3-projected when dealiasing.
    fn project(&self, u: &Field) -> Vec<Complex64> {
        let nyq = self.grid.nyquist_index();
        u.spectrum()
            .iter()
            .enumerate()
            .map(|(k, &c)| if k == nyq || !self.mask[k] { ZERO } else { c })
            .collect()
    }
}

fn check_blowup(t: f64, sup: f64) -> Result<()> {
    if sup.is_nan() || sup > BLOWUP_THRESHOLD {
        Err(Error::BlowupDetected {
            t,
            sup_norm: if sup.is_nan() { f64::NAN } else { sup },
        })
    } else {
        Ok(())
    }
}

/// Integrates `u_t + u_xxx + γHu_xx + uu_x = 0` (plus the optional sponge).
pub fn evolve(u0: &Field, gamma: f64, cfg: &EvolutionConfig) -> Result<Trajectory> {
    evolve_inner(u0, gamma, cfg, None)
}

/// As [`evolve`], but the sponge damps `u − far_field` instead of `u`.
///
/// `far_field` should be stationary in the computational frame (for instance
/// the unperturbed solitary wave in its co-moving frame); the layer then
/// absorbs radiation without eating the algebraic tail of the wave.
pub fn evolve_toward(u0: &Field, gamma: f64, cfg: &EvolutionConfig, far_field: &Field) -> Result<Trajectory> {
    if !far_field.grid().same_as(u0.grid()) {
        return Err(Error::InvalidArgument("far field and initial data live on different grids".into()));
    }
    evolve_inner(u0, gamma, cfg, Some(far_field))
}

fn evolve_inner(u0: &Field, gamma: f64, cfg: &EvolutionConfig, far_field: Option<&Field>) -> Result<Trajectory> {
    let grid = Arc::clone(u0.grid());
    cfg.validate(&grid)?;
    if !gamma.is_finite() {
        return Err(Error::InvalidArgument(format!("gamma must be finite, got {gamma}")));
    }
    let (steps, h) = cfg.steps();
    let mut ws = Workspace::new(&grid, cfg.dealias, cfg.sponge.as_ref());
    ws.far_field = far_field.map(|f| f.values().to_vec());
    let mut v = ws.project(u0);
    let mut stepper = Etdrk4::new(&linear_symbol(&grid, gamma, cfg.frame_speed), h);

    let record = |v: &[Complex64], t: f64| -> Result<TrajectoryRecord> {
        let u = Field::from_spectrum(&grid, v.to_vec());
        Ok(TrajectoryRecord {
            t,
            mass: mass(&u),
            energy: energy(&u, gamma),
            h1: u.norm(Norm::H1)?,
            linf: u.sup(),
            frame_shift: cfg.frame_speed * t,
            snapshot: cfg.snapshots.then_some(u),
        })
    };

    let mut records = vec![record(&v, 0.0)?];
    for step in 0..steps {
        let t = step as f64 * h;
        stepper.step(t, &mut v, |ts, state, out| {
            ws.to_physical(state);
            check_blowup(ts, ws.sup_physical())?;
            out.fill(ZERO);
            ws.transform(|p, _| p * p);
            ws.add_derivative(out, -0.5);
            ws.add_sponge(out);
            Ok(())
        })?;
        let done = step + 1;
        if done % cfg.record_every == 0 || done == steps {
            let t_now = if done == steps { cfg.t_final } else { done as f64 * h };
            let r = record(&v, t_now)?;
            check_blowup(t_now, if r.linf.is_finite() { r.linf } else { f64::NAN })?;
            records.push(r);
        }
    }
    let final_state = Field::from_spectrum(&grid, v);
    Ok(Trajectory {
        gamma,
        records,
        final_state,
        final_time: cfg.t_final,
        frame_speed: cfg.frame_speed,
    })
}

/// Piecewise-linear sampled function of time, constant beyond its end points.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<TimeSeries> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::InvalidArgument(format!(
                "time series needs matching non-empty samples ({} times, {} values)",
                times.len(),
                values.len()
            )));
        }
        if times.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("time series samples must be finite".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "time series abscissae must be strictly increasing".into(),
            ));
        }
        Ok(TimeSeries { times, values })
    }

    pub fn constant(value: f64) -> TimeSeries {
        TimeSeries {
            times: vec![0.0],
            values: vec![value],
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, t: f64) -> f64 {
        let ts = &self.times;
        if t <= ts[0] {
            return self.values[0];
        }
        if t >= ts[ts.len() - 1] {
            return self.values[ts.len() - 1];
        }
        let i = ts.partition_point(|&s| s <= t) - 1;
        let w = (t - ts[i]) / (ts[i + 1] - ts[i]);
        (1.0 - w) * self.values[i] + w * self.values[i + 1]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> TimeSeries {
        TimeSeries {
            times: self.times.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// The default forcing `a(t) = c − ẋ(t)`.
    pub fn default_forcing(c: f64, xdot: &TimeSeries) -> TimeSeries {
        xdot.map(|v| c - v)
    }
}

#[derive(Debug, Clone)]
pub struct PerturbationRecord {
    pub t: f64,
    pub l2: f64,
    pub h1: f64,
    /// `∫_{|x|>R}(v² + v_x²)` for each configured radius.
    pub tails: Vec<f64>,
    pub snapshot: Option<Field>,
}

#[derive(Debug, Clone)]
pub struct PerturbationTrajectory {
    pub radii: Vec<f64>,
    pub records: Vec<PerturbationRecord>,
    pub final_state: Field,
}

/// `∫_{|x|>R}(v² + v_x²)` by trapezoid quadrature.
pub fn tail_integral(v: &Field, radius: f64) -> f64 {
    let vx = v.derivative_unchecked(1);
    let grid = v.grid();
    grid.dx()
        * grid
            .nodes()
            .iter()
            .zip(v.values().iter().zip(vx.values()))
            .filter(|(x, _)| x.abs() > radius)
            .map(|(_, (a, b))| a * a + b * b)
            .sum::<f64>()
}

/// Upper bound on `b` in the perturbation equation.
pub const PERTURBATION_B_MAX: f64 = 1.0 / 64.0;

/// Integrates, in the frame of the wave,
/// `v_t + v_xxx + γHv_xx − ẋ(t)v_x + a(t)Q′ + (vQ)_x + (b/2)(v²)_x = 0`.
///
/// The linear part is taken about the mean of `ẋ`; the remainder of the drift
/// term is treated explicitly.
pub fn evolve_perturbation(
    v0: &Field,
    wave: &SolitaryWave,
    b: f64,
    a: &TimeSeries,
    xdot: &TimeSeries,
    cfg: &EvolutionConfig,
    radii: &[f64],
) -> Result<PerturbationTrajectory> {
    let grid = Arc::clone(v0.grid());
    if !wave.grid().same_as(&grid) {
        return Err(Error::InvalidArgument(
            "perturbation and solitary wave live on different grids".into(),
        ));
    }
    cfg.validate(&grid)?;
    if !(0.0..PERTURBATION_B_MAX).contains(&b) {
        return Err(Error::InvalidArgument(format!(
            "b must lie in [0, 1/64), got {b}"
        )));
    }
    let gamma = wave.params.gamma;
    let xdot_ref = xdot.values().iter().sum::<f64>() / xdot.values().len() as f64;
    let (steps, h) = cfg.steps();
    let mut ws = Workspace::new(&grid, cfg.dealias, cfg.sponge.as_ref());
    let q = wave.profile.values().to_vec();
    let dq_hat = ws.project(&wave.profile.derivative_unchecked(1));
    let mut v = ws.project(v0);
    let mut stepper = Etdrk4::new(&linear_symbol(&grid, gamma, xdot_ref), h);

    let record = |v: &[Complex64], t: f64| -> Result<PerturbationRecord> {
        let f = Field::from_spectrum(&grid, v.to_vec());
        Ok(PerturbationRecord {
            t,
            l2: f.norm(Norm::L2)?,
            h1: f.norm(Norm::H1)?,
            tails: radii.iter().map(|&r| tail_integral(&f, r)).collect(),
            snapshot: cfg.snapshots.then_some(f),
        })
    };

    let nyq = grid.nyquist_index();
    let xi: Vec<f64> = grid.wavenumbers().to_vec();
    let mut records = vec![record(&v, 0.0)?];
    for step in 0..steps {
        let t = step as f64 * h;
        stepper.step(t, &mut v, |ts, state, out| {
            ws.to_physical(state);
            check_blowup(ts, ws.sup_physical())?;
            let drift = xdot.eval(ts) - xdot_ref;
            let forcing = a.eval(ts);
            for k in 0..out.len() {
                out[k] = if k == nyq || !ws.mask[k] {
                    ZERO
                } else {
                    Complex64::new(0.0, drift * xi[k]) * state[k] - forcing * dq_hat[k]
                };
            }
            ws.transform(|p, j| p * q[j] + 0.5 * b * p * p);
            ws.add_derivative(out, -1.0);
            ws.add_sponge(out);
            Ok(())
        })?;
        let done = step + 1;
        if done % cfg.record_every == 0 || done == steps {
            let t_now = if done == steps { cfg.t_final } else { done as f64 * h };
            records.push(record(&v, t_now)?);
        }
    }
    Ok(PerturbationTrajectory {
        radii: radii.to_vec(),
        records,
        final_state: Field::from_spectrum(&grid, v),
    })
}

// Trigonometric interpolant of `u` at arbitrary points (periodic continuation).
fn interpolate(u: &Field, points: impl Iterator<Item = f64>) -> Vec<f64> {
    let grid = u.grid();
    let n = grid.n();
    let spec = u.spectrum();
    let dk = 2.0 * PI / grid.length();
    let nyq = grid.nyquist_index();
    points
        .map(|x| {
            let offset = x + 0.5 * grid.length();
            let step = Complex64::from_polar(1.0, dk * offset);
            let mut w = step;
            let mut acc = 0.0;
            for c in &spec[1..nyq] {
                acc += (c * w).re;
                w *= step;
            }
            let nyquist = spec[nyq].re * (dk * nyq as f64 * offset).cos();
            (spec[0].re + 2.0 * acc + nyquist) / n as f64
        })
        .collect()
}

/// Energy fraction of `u` beyond the 2/3-rule cutoff.
pub fn unresolved_fraction(u: &Field) -> f64 {
    let mask = u.grid().dealias_mask();
    let (mut outside, mut total) = (0.0, 0.0);
    for (c, keep) in u.spectrum().iter().zip(mask) {
        let e = c.norm_sqr();
        total += e;
        if !keep {
            outside += e;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        outside / total
    }
}

/// Largest unresolved energy fraction accepted by [`rescale`].
pub const RESCALE_TOLERANCE: f64 = 1e-12;

/// `v(x) = λ²u(λx)`, with parameters mapped `γ ↦ |λ|γ`, `c ↦ λ²c`.
pub fn rescale(u: &Field, lambda: f64, params: WaveParams) -> Result<(Field, WaveParams)> {
    if lambda == 0.0 || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "scaling factor must be finite and nonzero, got {lambda}"
        )));
    }
    let mapped = WaveParams::new(lambda.abs() * params.gamma, lambda * lambda * params.c)?;
    if lambda == 1.0 {
        return Ok((u.clone(), mapped));
    }
    let grid = u.grid();
    // points outside the box take the edge value instead of wrapping onto the core
    let half = 0.5 * grid.length();
    let values = interpolate(u, grid.nodes().iter().map(|&x| (lambda * x).clamp(-half, half)))
        .into_iter()
        .map(|v| lambda * lambda * v)
        .collect();
    let field = Field::new(grid, values)?;
    let fraction = unresolved_fraction(&field);
    if fraction > RESCALE_TOLERANCE {
        return Err(Error::ResolutionLoss { fraction });
    }
    Ok((field, mapped))
}

/// Location of the maximum of the trigonometric interpolant, refined by Newton
/// on `u'` from the best grid node.
pub fn peak_position(u: &Field) -> f64 {
    let grid = u.grid();
    let (j, _) = u
        .values()
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (j, &v)| {
            if v > best.1 {
                (j, v)
            } else {
                best
            }
        });
    let d1 = u.derivative_unchecked(1);
    let d2 = u.derivative_unchecked(2);
    let x0 = grid.nodes()[j];
    let mut x = x0;
    for _ in 0..20 {
        let curv = d2.eval_at(x);
        if curv >= 0.0 {
            return x0;
        }
        let dx = d1.eval_at(x) / curv;
        x -= dx;
        if (x - x0).abs() > grid.dx() {
            return x0;
        }
        if dx.abs() < 1e-14 {
            break;
        }
    }
    grid.wrap(x)
}
