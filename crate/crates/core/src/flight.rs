//! Linear longitudinal closed-loop benchmark.
//!
//! Short-period dynamics with uncertain pitch-moment derivatives, a
//! second-order actuator, one structural bending mode seen by the pitch-rate
//! gyro, a notch filter on the gyro signal and a PI load-factor controller
//! with feedforward. The state is
//! `[x_I, α, q, η, η̇, s, ṡ, n₁, n₂]` (integrator, short period, actuator,
//! structural mode, notch filter). Inputs are `[n_z,cmd, w_z]`.
//!
//! This part of the crate is `f64` only: it leans on nalgebra's complex LU
//! and Schur decompositions.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::uncertainty::UncertainVector;

/// Dense state-space realization `ẋ = Ax + Bu`, `y = Cx + Du`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl StateSpace {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: a.ncols() });
        }
        if b.nrows() != n {
            return Err(Error::DimensionMismatch { expected: n, got: b.nrows() });
        }
        if c.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: c.ncols() });
        }
        if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(Error::DimensionMismatch { expected: c.nrows() * b.ncols(), got: d.len() });
        }
        Ok(Self { a, b, c, d })
    }

    /// Controllable canonical form of `num(s)/den(s)`, coefficients highest power first.
    pub fn from_transfer_function(num: &[f64], den: &[f64]) -> Result<Self> {
        let lead = *den.first().ok_or_else(|| Error::InvalidParameter("empty denominator".into()))?;
        if lead == 0.0 || num.len() > den.len() {
            return Err(Error::InvalidParameter(
                "transfer function must be proper with a non-zero leading denominator".into(),
            ));
        }
        let n = den.len() - 1;
        let den: Vec<f64> = den.iter().map(|v| v / lead).collect();
        let mut padded = vec![0.0; den.len() - num.len()];
        padded.extend(num.iter().map(|v| v / lead));
        let d0 = padded[0];
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n.saturating_sub(1) {
            a[(i, i + 1)] = 1.0;
        }
        for j in 0..n {
            a[(n - 1, j)] = -den[n - j];
        }
        let mut b = DMatrix::zeros(n, 1);
        if n > 0 {
            b[(n - 1, 0)] = 1.0;
        }
        let c = DMatrix::from_fn(1, n, |_, j| padded[n - j] - d0 * den[n - j]);
        Self::new(a, b, c, DMatrix::from_element(1, 1, d0))
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    /// Largest real part of the spectrum of `A`.
    pub fn spectral_abscissa(&self) -> f64 {
        if self.states() == 0 {
            return f64::NEG_INFINITY;
        }
        self.a.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_stable(&self) -> bool {
        self.spectral_abscissa() < 0.0
    }

    /// Realization in coordinates `z = T⁻¹x`.
    pub fn similarity_transform(&self, t: &DMatrix<f64>) -> Result<Self> {
        let inv =
            t.clone().try_inverse().ok_or_else(|| Error::InvalidParameter("singular similarity transform".into()))?;
        Self::new(&inv * &self.a * t, &inv * &self.b, &self.c * t, self.d.clone())
    }

    /// `G(jω) = C(jωI − A)⁻¹B + D`.
    pub fn frequency_response(&self, omega: f64) -> Result<DMatrix<Complex64>> {
        let n = self.states();
        let m = DMatrix::from_fn(n, n, |i, j| {
            let diag = if i == j { Complex64::new(0.0, omega) } else { Complex64::new(0.0, 0.0) };
            diag - self.a[(i, j)]
        });
        let b = self.b.map(|v| Complex64::new(v, 0.0));
        let x = m.lu().solve(&b).ok_or(Error::FrequencySweep { omega })?;
        let g = self.c.map(|v| Complex64::new(v, 0.0)) * x + self.d.map(|v| Complex64::new(v, 0.0));
        if g.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::FrequencySweep { omega });
        }
        Ok(g)
    }
}

/// Classical margins of a single-input single-output loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    /// Worst gain margin in dB (`+∞` without a phase crossover).
    pub gain_margin_db: f64,
    /// Worst phase margin in degrees (`+∞` without a gain crossover).
    pub phase_margin_deg: f64,
    pub phase_crossover: Option<f64>,
    pub gain_crossover: Option<f64>,
}

const SWEEP_LOW: f64 = 1e-2;
const SWEEP_HIGH: f64 = 1e3;
const SWEEP_POINTS: usize = 500;

fn wrap_pm180(deg: f64) -> f64 {
    let w = (deg + 180.0).rem_euclid(360.0) - 180.0;
    if w == -180.0 {
        180.0
    } else {
        w
    }
}

/// Scalar `L(jω)` of a single-input single-output realization, reduced once
/// to upper Hessenberg form so each frequency costs one O(n²) solve.
struct SisoResponse {
    h: DMatrix<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    d: f64,
}

impl SisoResponse {
    fn new(l: &StateSpace) -> Self {
        let hess = l.a.clone().hessenberg();
        let q = hess.q();
        let h = hess.h();
        let b = (q.transpose() * &l.b).column(0).iter().copied().collect();
        let c = (&l.c * &q).row(0).iter().copied().collect();
        Self { h, b, c, d: l.d[(0, 0)] }
    }

    fn eval(&self, omega: f64) -> Result<Complex64> {
        let n = self.b.len();
        let mut m: Vec<Complex64> = (0..n * n)
            .map(|k| {
                let (i, j) = (k / n, k % n);
                let diag = if i == j { Complex64::new(0.0, omega) } else { Complex64::new(0.0, 0.0) };
                diag - self.h[(i, j)]
            })
            .collect();
        let mut x: Vec<Complex64> = self.b.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        for k in 0..n.saturating_sub(1) {
            if m[(k + 1) * n + k].norm() > m[k * n + k].norm() {
                for j in k..n {
                    m.swap(k * n + j, (k + 1) * n + j);
                }
                x.swap(k, k + 1);
            }
            let pivot = m[k * n + k];
            if pivot.norm() == 0.0 {
                return Err(Error::FrequencySweep { omega });
            }
            let f = m[(k + 1) * n + k] / pivot;
            for j in k..n {
                let v = m[k * n + j];
                m[(k + 1) * n + j] -= f * v;
            }
            let xk = x[k];
            x[k + 1] -= f * xk;
        }
        for k in (0..n).rev() {
            let mut s = x[k];
            for j in k + 1..n {
                s -= m[k * n + j] * x[j];
            }
            let pivot = m[k * n + k];
            if pivot.norm() == 0.0 {
                return Err(Error::FrequencySweep { omega });
            }
            x[k] = s / pivot;
        }
        let g = self.c.iter().zip(&x).fold(Complex64::new(self.d, 0.0), |acc, (&c, &v)| acc + v * c);
        if !g.re.is_finite() || !g.im.is_finite() {
            return Err(Error::FrequencySweep { omega });
        }
        Ok(g)
    }
}

/// Gain and phase margins of the loop transfer `L(s)` (negative feedback).
pub fn stability_margins(l: &StateSpace) -> Result<Margins> {
    if l.inputs() != 1 || l.outputs() != 1 {
        return Err(Error::InvalidParameter("margins need a single-input single-output loop".into()));
    }
    let siso = SisoResponse::new(l);
    let resp = |w: f64| siso.eval(w);
    let ratio = (SWEEP_HIGH / SWEEP_LOW).powf(1.0 / (SWEEP_POINTS - 1) as f64);
    let omegas: Vec<f64> = (0..SWEEP_POINTS).map(|i| SWEEP_LOW * ratio.powi(i as i32)).collect();
    let mut mags = Vec::with_capacity(SWEEP_POINTS);
    let mut phases = Vec::with_capacity(SWEEP_POINTS);
    for &w in &omegas {
        let z = resp(w)?;
        let raw = z.arg().to_degrees();
        let ph = match phases.last() {
            Some(&prev) => prev + wrap_pm180(raw - prev),
            None => raw,
        };
        mags.push(z.norm());
        phases.push(ph);
    }
    // Unwrapped phase near a reference value, for the refinement steps.
    let phase_near = |w: f64, reference: f64| -> Result<f64> {
        let z = resp(w)?;
        Ok(reference + wrap_pm180(z.arg().to_degrees() - reference))
    };
    let bisect = |lo: f64, hi: f64, f: &dyn Fn(f64) -> Result<f64>| -> Result<f64> {
        let (mut lo, mut hi) = (lo.ln(), hi.ln());
        let flo = f(lo.exp())?;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let fm = f(mid.exp())?;
            if (fm < 0.0) == (flo < 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok((0.5 * (lo + hi)).exp())
    };

    let mut gm = f64::INFINITY;
    let mut pm = f64::INFINITY;
    let mut wpc = None;
    let mut wgc = None;
    for i in 0..SWEEP_POINTS - 1 {
        let (p0, p1) = (phases[i], phases[i + 1]);
        let (k0, k1) = (((p0 + 180.0) / 360.0).floor(), ((p1 + 180.0) / 360.0).floor());
        if k0 != k1 {
            let target = -180.0 + 360.0 * k0.max(k1);
            let w = bisect(omegas[i], omegas[i + 1], &|w| Ok(phase_near(w, p0)? - target))?;
            let g = -20.0 * resp(w)?.norm().log10();
            if g < gm {
                gm = g;
                wpc = Some(w);
            }
        }
        if (mags[i] - 1.0) * (mags[i + 1] - 1.0) < 0.0 {
            let w = bisect(omegas[i], omegas[i + 1], &|w| Ok(resp(w)?.norm().ln()))?;
            let mut phi = phase_near(w, p0)?.rem_euclid(360.0);
            if phi > 0.0 {
                phi -= 360.0;
            }
            let m = 180.0 + phi;
            if m < pm {
                pm = m;
                wgc = Some(w);
            }
        }
    }
    Ok(Margins { gain_margin_db: gm, phase_margin_deg: pm, phase_crossover: wpc, gain_crossover: wgc })
}

/// Time response sampled on a uniform grid, one column per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub time: Vec<f64>,
    pub outputs: DMatrix<f64>,
    /// `ẏ = C(Ax + Bu) + Du̇`.
    pub output_rates: DMatrix<f64>,
}

impl Trajectory {
    pub fn output(&self, k: usize) -> Vec<f64> {
        self.outputs.row(k).iter().copied().collect()
    }

    pub fn output_rate(&self, k: usize) -> Vec<f64> {
        self.output_rates.row(k).iter().copied().collect()
    }

    /// Time average of `f²` by the trapezoidal rule.
    pub fn mean_square(&self, f: &[f64]) -> f64 {
        let t_end = *self.time.last().unwrap_or(&0.0) - self.time.first().copied().unwrap_or(0.0);
        if t_end <= 0.0 {
            return 0.0;
        }
        let integral: f64 = self
            .time
            .windows(2)
            .zip(f.windows(2))
            .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] * v[0] + v[1] * v[1]))
            .sum();
        integral / t_end
    }
}

/// Bound on the state norm above which a run is declared divergent.
const DIVERGENCE_NORM: f64 = 1e12;

/// One RK4 step applied to the columns of `x` with input samples `u0`, `um`, `u1`.
fn rk4_map(
    sys: &StateSpace,
    x: &DMatrix<f64>,
    u0: &DMatrix<f64>,
    um: &DMatrix<f64>,
    u1: &DMatrix<f64>,
    h: f64,
) -> DMatrix<f64> {
    let f = |x: &DMatrix<f64>, u: &DMatrix<f64>| &sys.a * x + &sys.b * u;
    let k1 = f(x, u0);
    let k2 = f(&(x + &k1 * (0.5 * h)), um);
    let k3 = f(&(x + &k2 * (0.5 * h)), um);
    let k4 = f(&(x + &k3 * h), u1);
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Row-major copy for allocation-free products.
fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

/// `out = Σ_blocks M_b·v_b` with row-major `M_b` of width `v_b.len()`.
fn mat_vec_sum(out: &mut [f64], terms: &[(&[f64], &[f64])]) {
    for (i, o) in out.iter_mut().enumerate() {
        let mut s = 0.0;
        for (m, v) in terms {
            let w = v.len();
            s += m[i * w..(i + 1) * w].iter().zip(v.iter()).map(|(a, b)| a * b).sum::<f64>();
        }
        *o = s;
    }
}

/// Fixed-step RK4 from rest. `input(t, u, u̇)` fills the input and its rate.
///
/// The system is linear, so the step is precomputed as
/// `x⁺ = Px + Q₀u(t) + Q½u(t+h/2) + Q₁u(t+h)`.
pub fn simulate(
    sys: &StateSpace,
    input: impl Fn(f64, &mut [f64], &mut [f64]),
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    if !(dt > 0.0) || !(t_end > dt) {
        return Err(Error::InvalidParameter(format!("need 0 < dt < T (dt = {dt}, T = {t_end})")));
    }
    let steps = (t_end / dt).round() as usize;
    let h = t_end / steps as f64;
    let (n, m, r) = (sys.states(), sys.inputs(), sys.outputs());
    let zx = DMatrix::zeros(n, m);
    let zu = DMatrix::zeros(m, m);
    let eye = DMatrix::identity(m, m);
    let zn = DMatrix::zeros(m, n);
    let p = row_major(&rk4_map(sys, &DMatrix::identity(n, n), &zn, &zn, &zn, h));
    let q0 = row_major(&rk4_map(sys, &zx, &eye, &zu, &zu, h));
    let qm = row_major(&rk4_map(sys, &zx, &zu, &eye, &zu, h));
    let q1 = row_major(&rk4_map(sys, &zx, &zu, &zu, &eye, h));
    let c = row_major(&sys.c);
    let d = row_major(&sys.d);
    let ca = row_major(&(&sys.c * &sys.a));
    let cb = row_major(&(&sys.c * &sys.b));

    let mut x = vec![0.0; n];
    let mut next = vec![0.0; n];
    let (mut u, mut du) = (vec![0.0; m], vec![0.0; m]);
    let (mut um, mut dum) = (vec![0.0; m], vec![0.0; m]);
    let (mut u1, mut du1) = (vec![0.0; m], vec![0.0; m]);
    let mut outputs = DMatrix::zeros(r, steps + 1);
    let mut output_rates = DMatrix::zeros(r, steps + 1);
    let mut y = vec![0.0; r];
    let mut record = |col: usize, x: &[f64], u: &[f64], du: &[f64]| {
        mat_vec_sum(&mut y, &[(&c, x), (&d, u)]);
        outputs.column_mut(col).copy_from_slice(&y);
        mat_vec_sum(&mut y, &[(&ca, x), (&cb, u), (&d, du)]);
        output_rates.column_mut(col).copy_from_slice(&y);
    };
    input(0.0, &mut u, &mut du);
    record(0, &x, &u, &du);
    let mut time = Vec::with_capacity(steps + 1);
    time.push(0.0);
    for i in 0..steps {
        let t = i as f64 * h;
        let t1 = (i + 1) as f64 * h;
        input(t + 0.5 * h, &mut um, &mut dum);
        input(t1, &mut u1, &mut du1);
        mat_vec_sum(&mut next, &[(&p, &x), (&q0, &u), (&qm, &um), (&q1, &u1)]);
        std::mem::swap(&mut x, &mut next);
        let norm2: f64 = x.iter().map(|v| v * v).sum();
        if !(norm2.sqrt() <= DIVERGENCE_NORM) {
            return Err(Error::SimulationDiverged { time: t1 });
        }
        std::mem::swap(&mut u, &mut u1);
        std::mem::swap(&mut du, &mut du1);
        time.push(t1);
        record(i + 1, &x, &u, &du);
    }
    Ok(Trajectory { time, outputs, output_rates })
}

/// Overshoot fraction `max(y)/target − 1`, clamped at zero.
pub fn overshoot(y: &[f64], target: f64) -> f64 {
    let peak = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (peak / target - 1.0).max(0.0)
}

/// First time `y` reaches `fraction·target`, linearly interpolated; `None` if never.
pub fn rise_time(time: &[f64], y: &[f64], target: f64, fraction: f64) -> Option<f64> {
    let level = fraction * target;
    if y.first().is_some_and(|&v| v >= level) {
        return time.first().copied();
    }
    y.windows(2)
        .zip(time.windows(2))
        .find_map(|(v, t)| (v[1] >= level).then(|| t[0] + (level - v[0]) / (v[1] - v[0]) * (t[1] - t[0])))
}

/// Discrete "1−cosine" vertical gust.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GustProfile {
    /// Gust length `d_g` (m).
    pub length: f64,
    /// Gust amplitude `v_g` (m/s).
    pub amplitude: f64,
}

impl Default for GustProfile {
    fn default() -> Self {
        Self { length: 91.4, amplitude: 13.9 }
    }
}

impl GustProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0) || !(self.amplitude >= 0.0) {
            return Err(Error::InvalidParameter("gust needs length > 0 and amplitude ≥ 0".into()));
        }
        Ok(())
    }
}

/// Vertical wind `w_z` at penetration distance `x_g`.
pub fn gust_velocity(profile: &GustProfile, x_g: f64) -> f64 {
    if x_g < 0.0 {
        0.0
    } else if x_g < profile.length {
        0.5 * profile.amplitude * (1.0 - (std::f64::consts::PI * x_g / profile.length).cos())
    } else {
        profile.amplitude
    }
}

/// `dw_z/dx_g`.
pub fn gust_slope(profile: &GustProfile, x_g: f64) -> f64 {
    if (0.0..profile.length).contains(&x_g) {
        let k = std::f64::consts::PI / profile.length;
        0.5 * profile.amplitude * k * (k * x_g).sin()
    } else {
        0.0
    }
}

/// Controller gains `[k_H, k_nz, k_I, k_q]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainVector {
    pub k_h: f64,
    pub k_nz: f64,
    pub k_i: f64,
    pub k_q: f64,
}

impl GainVector {
    pub fn from_array(k: [f64; 4]) -> Self {
        Self { k_h: k[0], k_nz: k[1], k_i: k[2], k_q: k[3] }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.k_h, self.k_nz, self.k_i, self.k_q]
    }
}

impl Default for GainVector {
    fn default() -> Self {
        Self::from_array([1.0, -1.0, 2.0, -3.0])
    }
}

/// Second-order block `ω²/(s² + 2ζωs + ω²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SecondOrder {
    pub omega: f64,
    pub zeta: f64,
}

impl SecondOrder {
    fn validate(&self, name: &str) -> Result<()> {
        if !(self.omega > 0.0) || !(self.zeta > 0.0) {
            return Err(Error::InvalidParameter(format!("{name}: natural frequency and damping must be positive")));
        }
        Ok(())
    }
}

/// Model parameters; every default is a declared engineering choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlightParams {
    /// Airspeed (m/s).
    pub airspeed: f64,
    pub gravity: f64,
    /// Lift slope term `Z_α` (1/s).
    pub z_alpha: f64,
    /// Reference pitch-moment derivatives `M_α`, `M_q`, `M_η`.
    pub m_alpha: f64,
    pub m_q: f64,
    pub m_eta: f64,
    pub actuator: SecondOrder,
    pub structural_mode: SecondOrder,
    /// Elevator forcing of the bending mode.
    pub mode_forcing: f64,
    /// Bending-mode rate seen by the pitch-rate gyro.
    pub mode_sensing: f64,
    /// Notch centre frequency and numerator / denominator damping.
    pub notch_omega: f64,
    pub notch_zeta_zero: f64,
    pub notch_zeta_pole: f64,
    pub gust: GustProfile,
    /// Simulation horizon and step (s).
    pub horizon: f64,
    pub step: f64,
    /// Standard deviation of the derivative ratios (mean 1).
    pub ratio_std: f64,
    /// Mean-square thresholds of the deterministic constraints.
    pub c_d1: f64,
    pub c_d2: f64,
    /// Cap applied to infinite gain margins (dB).
    pub gain_margin_cap: f64,
}

impl Default for FlightParams {
    fn default() -> Self {
        Self {
            airspeed: 60.0,
            gravity: 9.81,
            z_alpha: -1.5,
            m_alpha: -4.95,
            m_q: -2.7,
            m_eta: -15.0,
            actuator: SecondOrder { omega: 40.0, zeta: 0.7 },
            structural_mode: SecondOrder { omega: 60.0, zeta: 0.02 },
            mode_forcing: 100.0,
            mode_sensing: 1.0,
            notch_omega: 60.0,
            notch_zeta_zero: 0.05,
            notch_zeta_pole: 0.5,
            gust: GustProfile::default(),
            horizon: 6.0,
            step: 1e-3,
            ratio_std: 0.15,
            c_d1: 0.3,
            c_d2: 0.25,
            gain_margin_cap: 40.0,
        }
    }
}

impl FlightParams {
    pub fn validate(&self) -> Result<()> {
        self.actuator.validate("actuator")?;
        self.structural_mode.validate("structural mode")?;
        self.gust.validate()?;
        let positive = [
            ("airspeed", self.airspeed),
            ("gravity", self.gravity),
            ("notch_omega", self.notch_omega),
            ("notch_zeta_zero", self.notch_zeta_zero),
            ("notch_zeta_pole", self.notch_zeta_pole),
            ("horizon", self.horizon),
            ("step", self.step),
            ("ratio_std", self.ratio_std),
            ("gain_margin_cap", self.gain_margin_cap),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(*v > 0.0)) {
            return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
        }
        if self.m_eta == 0.0 {
            return Err(Error::InvalidParameter("m_eta must be non-zero".into()));
        }
        if !(self.horizon > self.step) {
            return Err(Error::InvalidParameter("horizon must exceed the step".into()));
        }
        Ok(())
    }

    /// Independent Gaussian ratios `(M_α, M_q, M_η)/ref`, mean 1.
    pub fn uncertainty(&self) -> Result<UncertainVector<f64>> {
        UncertainVector::iid_gaussian(3, 1.0, self.ratio_std)
    }

    /// Gust penetration time `d_g / V`.
    pub fn gust_duration(&self) -> f64 {
        self.gust.length / self.airspeed
    }
}

/// Closed loop with inputs `[n_z,cmd, w_z]` and outputs `[n_z, q̇_cmd]`,
/// plus the loop transfer broken at the actuator command.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopModel {
    pub closed: StateSpace,
    pub loop_transfer: StateSpace,
}

pub const STATES: usize = 9;
const XI: usize = 0;
const ALPHA: usize = 1;
const Q: usize = 2;
const ETA: usize = 3;
const ETA_DOT: usize = 4;
const MODE: usize = 5;
const MODE_DOT: usize = 6;
const N1: usize = 7;
const N2: usize = 8;

/// Build the closed loop for derivative ratios `theta` and gains `k`.
pub fn assemble(theta: &[f64], k: &GainVector, params: &FlightParams) -> Result<ClosedLoopModel> {
    if theta.len() != 3 {
        return Err(Error::DimensionMismatch { expected: 3, got: theta.len() });
    }
    params.validate()?;
    let (ra, rq, re) = (theta[0], theta[1], theta[2]);
    let p = params;
    let (v, g, za) = (p.airspeed, p.gravity, p.z_alpha);
    let (ma, mq, me) = (ra * p.m_alpha, rq * p.m_q, re * p.m_eta);
    let (wa, zta) = (p.actuator.omega, p.actuator.zeta);
    let (ws, zts) = (p.structural_mode.omega, p.structural_mode.zeta);
    let wn = p.notch_omega;

    // Plant with inputs [u, n_z,cmd, w_z].
    let mut a = DMatrix::zeros(STATES, STATES);
    let mut b = DMatrix::zeros(STATES, 3);
    // n_z = −(V/g)Z_α(α − w_z/V)
    let mut c_nz = DVector::zeros(STATES);
    c_nz[ALPHA] = -v / g * za;
    let d_nz_w = za / g;
    let mut c_gyro = DVector::zeros(STATES);
    c_gyro[Q] = 1.0;
    c_gyro[MODE_DOT] = p.mode_sensing;
    let mut c_filtered = c_gyro.clone();
    c_filtered[N2] += 2.0 * (p.notch_zeta_zero - p.notch_zeta_pole) * wn;

    a.set_row(XI, &(-&c_nz).transpose());
    b[(XI, 1)] = 1.0;
    b[(XI, 2)] = -d_nz_w;
    a[(ALPHA, ALPHA)] = za;
    a[(ALPHA, Q)] = 1.0;
    b[(ALPHA, 2)] = -za / v;
    a[(Q, ALPHA)] = ma;
    a[(Q, Q)] = mq;
    a[(Q, ETA)] = me;
    b[(Q, 2)] = -ma / v;
    a[(ETA, ETA_DOT)] = 1.0;
    a[(ETA_DOT, ETA)] = -wa * wa;
    a[(ETA_DOT, ETA_DOT)] = -2.0 * zta * wa;
    b[(ETA_DOT, 0)] = wa * wa;
    a[(MODE, MODE_DOT)] = 1.0;
    a[(MODE_DOT, MODE)] = -ws * ws;
    a[(MODE_DOT, MODE_DOT)] = -2.0 * zts * ws;
    a[(MODE_DOT, ETA)] = p.mode_forcing;
    a[(N1, N2)] = 1.0;
    a.set_row(N2, &c_gyro.transpose());
    a[(N2, N1)] -= wn * wn;
    a[(N2, N2)] -= 2.0 * p.notch_zeta_pole * wn;

    // q̇_cmd = k_H n_z,cmd + k_nz n_z + k_I x_I + k_q ω_f, u = q̇_cmd / M_η,ref
    let mut c_cmd = &c_nz * k.k_nz + &c_filtered * k.k_q;
    c_cmd[XI] += k.k_i;
    let d_cmd = [k.k_h, k.k_nz * d_nz_w];
    let gain_u = 1.0 / p.m_eta;

    let b_u = b.column(0).clone_owned();
    let b_ext = b.columns(1, 2).clone_owned();
    let k_row = c_cmd.transpose() * gain_u;
    let a_closed = &a + &b_u * &k_row;
    let f = DMatrix::from_row_slice(1, 2, &[d_cmd[0] * gain_u, d_cmd[1] * gain_u]);
    let b_closed = &b_ext + &b_u * f;
    let mut c_out = DMatrix::zeros(2, STATES);
    c_out.set_row(0, &c_nz.transpose());
    c_out.set_row(1, &c_cmd.transpose());
    let d_out = DMatrix::from_row_slice(2, 2, &[0.0, d_nz_w, d_cmd[0], d_cmd[1]]);
    let closed = StateSpace::new(a_closed, b_closed, c_out, d_out)?;

    let loop_transfer = StateSpace::new(
        a,
        DMatrix::from_column_slice(STATES, 1, b_u.as_slice()),
        DMatrix::from_row_slice(1, STATES, (-k_row).as_slice()),
        DMatrix::zeros(1, 1),
    )?;
    Ok(ClosedLoopModel { closed, loop_transfer })
}

/// Scenario driving the closed loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Gust encounter with zero command.
    Gust,
    /// Unit load-factor command step in calm air.
    Step,
}

pub fn simulate_scenario(model: &ClosedLoopModel, params: &FlightParams, scenario: Scenario) -> Result<Trajectory> {
    let v = params.airspeed;
    let gust = params.gust;
    let input = move |t: f64, u: &mut [f64], du: &mut [f64]| match scenario {
        Scenario::Gust => {
            u.copy_from_slice(&[0.0, gust_velocity(&gust, v * t)]);
            du.copy_from_slice(&[0.0, v * gust_slope(&gust, v * t)]);
        }
        Scenario::Step => {
            u.copy_from_slice(&[1.0, 0.0]);
            du.fill(0.0);
        }
    };
    simulate(&model.closed, input, params.horizon, params.step)
}

/// The five performance functions `h₀ … h₄`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Performance {
    /// Minimum load-factor deviation during the gust (g).
    pub gust_min: f64,
    /// Gain margin (dB), capped.
    pub gain_margin: f64,
    /// Phase margin (deg), capped at 180.
    pub phase_margin: f64,
    /// Overshoot fraction of the unit step.
    pub overshoot: f64,
    /// 80 % rise time of the unit step (s); the horizon if never reached.
    pub rise_time: f64,
}

impl Performance {
    pub fn as_array(&self) -> [f64; 5] {
        [self.gust_min, self.gain_margin, self.phase_margin, self.overshoot, self.rise_time]
    }

    /// Values standing in for an unstable closed loop, on the failing side
    /// of every requirement.
    pub fn failed(params: &FlightParams) -> Self {
        Self { gust_min: -3.0, gain_margin: 0.0, phase_margin: 0.0, overshoot: 1.0, rise_time: params.horizon }
    }
}

pub const PERFORMANCE_NAMES: [&str; 5] = [
    "Maximum negative deviation of gust reaction",
    "Gain margin",
    "Phase margin",
    "Overshoot of step response",
    "80% rise time of step response",
];

fn check_stable(model: &ClosedLoopModel) -> Result<()> {
    let s = model.closed.spectral_abscissa();
    if s >= 0.0 {
        return Err(Error::UnstableClosedLoop { max_real: s });
    }
    Ok(())
}

fn capped_margins(model: &ClosedLoopModel, params: &FlightParams) -> Result<(f64, f64)> {
    let m = stability_margins(&model.loop_transfer)?;
    Ok((m.gain_margin_db.min(params.gain_margin_cap), m.phase_margin_deg.min(180.0)))
}

fn step_metrics(model: &ClosedLoopModel, params: &FlightParams) -> Result<(f64, f64)> {
    let traj = simulate_scenario(model, params, Scenario::Step)?;
    let y = traj.output(0);
    let rise = rise_time(&traj.time, &y, 1.0, 0.8).unwrap_or(params.horizon);
    Ok((overshoot(&y, 1.0), rise))
}

/// All five performance functions; errors for an unstable closed loop.
pub fn performance_functions(theta: &[f64], k: &GainVector, params: &FlightParams) -> Result<Performance> {
    let model = assemble(theta, k, params)?;
    check_stable(&model)?;
    let gust = simulate_scenario(&model, params, Scenario::Gust)?;
    let gust_min = gust.output(0).into_iter().fold(f64::INFINITY, f64::min);
    let (gain_margin, phase_margin) = capped_margins(&model, params)?;
    let (overshoot, rise_time) = step_metrics(&model, params)?;
    Ok(Performance { gust_min, gain_margin, phase_margin, overshoot, rise_time })
}

/// Performance functions `h_i` for each `i` in `indices`, simulating each
/// scenario at most once. Unstable or divergent loops map to [`Performance::failed`].
pub fn performance_subset(theta: &[f64], k: &GainVector, params: &FlightParams, indices: &[usize]) -> Result<Vec<f64>> {
    if let Some(&i) = indices.iter().find(|&&i| i > 4) {
        return Err(Error::InvalidParameter(format!("no performance function h{i}")));
    }
    let model = assemble(theta, k, params)?;
    let failed = Performance::failed(params).as_array();
    let failed_subset = || indices.iter().map(|&i| failed[i]).collect();
    match check_stable(&model) {
        Err(Error::UnstableClosedLoop { .. }) => return Ok(failed_subset()),
        Err(e) => return Err(e),
        Ok(()) => {}
    }
    let mut gust = None;
    let mut margins = None;
    let mut step = None;
    let mut out = Vec::with_capacity(indices.len());
    for &i in indices {
        let value = match i {
            0 => {
                if gust.is_none() {
                    gust = Some(
                        simulate_scenario(&model, params, Scenario::Gust)
                            .map(|t| t.output(0).into_iter().fold(f64::INFINITY, f64::min)),
                    );
                }
                gust.clone().unwrap()
            }
            1 | 2 => {
                if margins.is_none() {
                    margins = Some(capped_margins(&model, params));
                }
                margins.clone().unwrap().map(|m| if i == 1 { m.0 } else { m.1 })
            }
            _ => {
                if step.is_none() {
                    step = Some(step_metrics(&model, params));
                }
                step.clone().unwrap().map(|m| if i == 3 { m.0 } else { m.1 })
            }
        };
        match value {
            Ok(v) => out.push(v),
            Err(Error::SimulationDiverged { .. }) => return Ok(failed_subset()),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Single performance function `h_index`, mapping instability to its failure value.
pub fn performance_value(theta: &[f64], k: &GainVector, params: &FlightParams, index: usize) -> Result<f64> {
    Ok(performance_subset(theta, k, params, &[index])?[0])
}

/// Mean squares of `q̈_cmd` and `ṅ_z` in the nominal gust encounter minus their thresholds.
pub fn deterministic_constraints(k: &GainVector, params: &FlightParams) -> Result<(f64, f64)> {
    let model = assemble(&[1.0, 1.0, 1.0], k, params)?;
    check_stable(&model)?;
    let traj = simulate_scenario(&model, params, Scenario::Gust)?;
    let c1 = traj.mean_square(&traj.output_rate(1)) - params.c_d1;
    let c2 = traj.mean_square(&traj.output_rate(0)) - params.c_d2;
    Ok((c1, c2))
}
