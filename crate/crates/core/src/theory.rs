//! Equilibrium calculus and utility dynamics.
//!
//! Two independent pieces live here. The compliance calculus compares an
//! adversary's discounted gain from complying with a trigger strategy against
//! the gain from defecting. The dynamics part treats the cumulative utilities
//! `u_a(r)`, `u_c(r)` as generalized coordinates over the round index `r`.
//!
//! Two Lagrangians are provided:
//!
//! - [`LagrangianForm::Equilibrium`]: `m_a u̇_a² + m_c u̇_c²`, free motion with
//!   constant velocities.
//! - [`LagrangianForm::Interaction`]: `½m_a u̇_a² + ½m_c u̇_c² − ½k(u_a − u_c)²`,
//!   whose Euler-Lagrange equations are `m_a ü_a = −k w` and `m_c ü_c = +k w`
//!   with `w = u_a − u_c`. The relative coordinate oscillates with
//!   `ω = sqrt(k (1/m_a + 1/m_c))` and the weighted center drifts linearly.
//!
//! ```
//! use trimgame::theory::{compliance_threshold, DynamicsParams};
//!
//! let delta_max = compliance_threshold(0.9, 0.5, 2.0).unwrap();
//! assert!((delta_max - 18.0 / 11.0).abs() < 1e-12);
//! assert_eq!(DynamicsParams::new(1.0, 1.0, 2.0).unwrap().omega(), 2.0);
//! ```

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;

use crate::error::{Error, Result};
use crate::stage::PayoffMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplianceParams {
    /// Roundwise discount rate, in (0, 1).
    pub d: f64,
    /// Probability that a defection goes unpunished, in [0, 1].
    pub p: f64,
    pub g_a: f64,
    pub g_c: f64,
    /// Utility the adversary gives up by complying.
    pub delta: f64,
}

impl ComplianceParams {
    pub fn new(d: f64, p: f64, g_a: f64, g_c: f64, delta: f64) -> Result<Self> {
        let params = Self {
            d,
            p,
            g_a,
            g_c,
            delta,
        };
        params.validate()?;
        Ok(params)
    }

    /// `g_a = P̄`, `g_c = T̄ − P̲ − T̲`.
    pub fn from_payoffs(m: &PayoffMatrix, d: f64, p: f64, delta: f64) -> Result<Self> {
        Self::new(
            d,
            p,
            m.poison_high(),
            m.trim_high() - m.poison_low() - m.trim_low(),
            delta,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d > 0.0 && self.d < 1.0) {
            return Err(Error::domain(format!("discount {} outside (0, 1)", self.d)));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::domain(format!(
                "probability {} outside [0, 1]",
                self.p
            )));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::domain(format!(
                "compromise {} is negative",
                self.delta
            )));
        }
        Ok(())
    }

    pub fn g_ac(&self) -> f64 {
        (self.g_a + self.g_c) / 2.0
    }

    pub fn g_0(&self) -> f64 {
        self.g_ac() - self.delta
    }
}

/// `(g_com, g_def) = (g_0 / (1 − d), g_ac / (1 − d p))`.
pub fn discounted_gains(params: &ComplianceParams) -> Result<(f64, f64)> {
    if params.d >= 1.0 {
        return Err(Error::domain(format!(
            "discount {} must be below 1",
            params.d
        )));
    }
    Ok((
        params.g_0() / (1.0 - params.d),
        params.g_ac() / (1.0 - params.d * params.p),
    ))
}

/// Largest compromise a rational adversary accepts:
/// `δ_max = g_ac (d − d p) / (1 − d p)`.
pub fn compliance_threshold(d: f64, p: f64, g_ac: f64) -> Result<f64> {
    if !(d > 0.0 && d < 1.0) || !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!(
            "need 0 < d < 1 and 0 <= p <= 1, got d={d}, p={p}"
        )));
    }
    let dp = d * p;
    if dp >= 1.0 {
        return Err(Error::domain("d p = 1 leaves the threshold undefined"));
    }
    Ok(g_ac * (d - dp) / (1.0 - dp))
}

/// Whether complying beats defecting, i.e. `δ < δ_max`.
pub fn complies(params: &ComplianceParams) -> Result<bool> {
    Ok(params.delta < compliance_threshold(params.d, params.p, params.g_ac())?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsParams {
    pub m_a: f64,
    pub m_c: f64,
    pub k: f64,
}

impl DynamicsParams {
    pub fn new(m_a: f64, m_c: f64, k: f64) -> Result<Self> {
        if !(m_a > 0.0 && m_c > 0.0) || !(k >= 0.0) || !k.is_finite() {
            return Err(Error::domain(format!(
                "need positive inertia and finite k >= 0, got m_a={m_a}, m_c={m_c}, k={k}"
            )));
        }
        Ok(Self { m_a, m_c, k })
    }

    pub fn total_mass(&self) -> f64 {
        self.m_a + self.m_c
    }

    pub fn omega(&self) -> f64 {
        (self.k * (1.0 / self.m_a + 1.0 / self.m_c)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct State {
    pub u_a: f64,
    pub u_c: f64,
    pub du_a: f64,
    pub du_c: f64,
}

impl State {
    pub fn new(u_a: f64, u_c: f64, du_a: f64, du_c: f64) -> Self {
        Self {
            u_a,
            u_c,
            du_a,
            du_c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LagrangianForm {
    #[default]
    Equilibrium,
    Interaction,
}

pub fn lagrangian(s: &State, params: &DynamicsParams, form: LagrangianForm) -> f64 {
    let kinetic = params.m_a * s.du_a * s.du_a + params.m_c * s.du_c * s.du_c;
    match form {
        LagrangianForm::Equilibrium => kinetic,
        LagrangianForm::Interaction => {
            let w = s.u_a - s.u_c;
            0.5 * kinetic - 0.5 * params.k * w * w
        }
    }
}

/// Conserved quantity of the interaction dynamics.
pub fn energy(s: &State, params: &DynamicsParams) -> f64 {
    let w = s.u_a - s.u_c;
    0.5 * (params.m_a * s.du_a * s.du_a + params.m_c * s.du_c * s.du_c) + 0.5 * params.k * w * w
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub r: Vec<f64>,
    pub u_a: Vec<f64>,
    pub u_c: Vec<f64>,
    pub du_a: Vec<f64>,
    pub du_c: Vec<f64>,
}

impl Trajectory {
    /// Samples `f` on `steps + 1` evenly spaced points of `[r1, r2]`.
    pub fn from_fn(r1: f64, r2: f64, steps: usize, f: impl Fn(f64) -> State) -> Self {
        let mut t = Self::default();
        let h = (r2 - r1) / steps as f64;
        for i in 0..=steps {
            let r = if i == steps { r2 } else { r1 + i as f64 * h };
            t.push(r, f(r));
        }
        t
    }

    fn push(&mut self, r: f64, s: State) {
        self.r.push(r);
        self.u_a.push(s.u_a);
        self.u_c.push(s.u_c);
        self.du_a.push(s.du_a);
        self.du_c.push(s.du_c);
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn state(&self, i: usize) -> State {
        State::new(self.u_a[i], self.u_c[i], self.du_a[i], self.du_c[i])
    }

    pub fn states(&self) -> impl Iterator<Item = State> + '_ {
        (0..self.len()).map(|i| self.state(i))
    }

    /// Grid spacing; errors when the grid is too short or not uniform.
    pub fn step(&self) -> Result<f64> {
        let n = self.len();
        if n < 2 {
            return Err(Error::domain("trajectory needs at least two points"));
        }
        let h = (self.r[n - 1] - self.r[0]) / (n - 1) as f64;
        if !(h > 0.0) {
            return Err(Error::domain("trajectory grid must be increasing"));
        }
        for (i, w) in self.r.windows(2).enumerate() {
            if ((w[1] - w[0]) - h).abs() > 1e-6 * h {
                return Err(Error::domain(format!(
                    "non-uniform grid at index {}",
                    i + 1
                )));
            }
        }
        Ok(h)
    }

    /// Adds the endpoint-vanishing bump `ε sin(π (r − r1) / L)` to each
    /// coordinate, with its exact derivative added to the velocities.
    pub fn with_bump(&self, eps_a: f64, eps_c: f64) -> Self {
        let mut out = self.clone();
        let (r1, r2) = (self.r[0], self.r[self.len() - 1]);
        let len = r2 - r1;
        for i in 0..self.len() {
            let phase = PI * (self.r[i] - r1) / len;
            let (s, c) = phase.sin_cos();
            out.u_a[i] += eps_a * s;
            out.u_c[i] += eps_c * s;
            out.du_a[i] += eps_a * PI / len * c;
            out.du_c[i] += eps_c * PI / len * c;
        }
        out
    }

    pub const CSV_HEADER: [&'static str; 6] = ["r", "u_a", "u_c", "du_a", "du_c", "energy"];

    pub fn write_csv<W: Write>(&self, params: &DynamicsParams, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::CSV_HEADER)?;
        for (i, s) in self.states().enumerate() {
            w.write_record([
                self.r[i].to_string(),
                s.u_a.to_string(),
                s.u_c.to_string(),
                s.du_a.to_string(),
                s.du_c.to_string(),
                energy(&s, params).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Composite Simpson quadrature of `values` on a uniform grid of spacing `h`.
/// An odd number of intervals closes with the 3/8 rule on the last three.
pub fn simpson(values: &[f64], h: f64) -> Result<f64> {
    let n = values.len();
    if n < 3 {
        return Err(Error::domain(
            "Simpson quadrature needs at least three points",
        ));
    }
    let intervals = n - 1;
    let simpson_end = if intervals % 2 == 0 { n - 1 } else { n - 4 };
    let mut total = 0.0;
    if simpson_end > 0 {
        let mut s = values[0] + values[simpson_end];
        for (i, v) in values.iter().enumerate().take(simpson_end).skip(1) {
            s += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
        }
        total += s * h / 3.0;
    }
    if intervals % 2 == 1 {
        let t = &values[n - 4..];
        total += 3.0 * h / 8.0 * (t[0] + 3.0 * t[1] + 3.0 * t[2] + t[3]);
    }
    Ok(total)
}

pub fn action_integral(
    traj: &Trajectory,
    params: &DynamicsParams,
    form: LagrangianForm,
) -> Result<f64> {
    let h = traj.step()?;
    let l: Vec<f64> = traj
        .states()
        .map(|s| lagrangian(&s, params, form))
        .collect();
    simpson(&l, h)
}

fn derivative(s: &State, p: &DynamicsParams) -> State {
    let force = p.k * (s.u_a - s.u_c);
    State::new(s.du_a, s.du_c, -force / p.m_a, force / p.m_c)
}

fn axpy(s: &State, h: f64, d: &State) -> State {
    State::new(
        s.u_a + h * d.u_a,
        s.u_c + h * d.u_c,
        s.du_a + h * d.du_a,
        s.du_c + h * d.du_c,
    )
}

pub fn rk4_step(s: &State, params: &DynamicsParams, h: f64) -> State {
    let k1 = derivative(s, params);
    let k2 = derivative(&axpy(s, h / 2.0, &k1), params);
    let k3 = derivative(&axpy(s, h / 2.0, &k2), params);
    let k4 = derivative(&axpy(s, h, &k3), params);
    let c = |a: f64, b: f64, c: f64, d: f64| (a + 2.0 * b + 2.0 * c + d) / 6.0;
    State::new(
        s.u_a + h * c(k1.u_a, k2.u_a, k3.u_a, k4.u_a),
        s.u_c + h * c(k1.u_c, k2.u_c, k3.u_c, k4.u_c),
        s.du_a + h * c(k1.du_a, k2.du_a, k3.du_a, k4.du_a),
        s.du_c + h * c(k1.du_c, k2.du_c, k3.du_c, k4.du_c),
    )
}

/// Fixed-step RK4 over `span`. The step is shrunk slightly if needed so the
/// grid ends exactly at `span.1`.
pub fn integrate_dynamics(
    params: &DynamicsParams,
    init: State,
    span: (f64, f64),
    h: f64,
) -> Result<Trajectory> {
    let (r1, r2) = span;
    if !(h > 0.0) || !(r2 > r1) {
        return Err(Error::domain(format!(
            "need h > 0 and r2 > r1, got h={h}, span={span:?}"
        )));
    }
    let steps = ((r2 - r1) / h - 1e-9).ceil().max(1.0) as usize;
    let h = (r2 - r1) / steps as f64;
    let mut t = Trajectory::default();
    let mut s = init;
    t.push(r1, s);
    for i in 1..=steps {
        s = rk4_step(&s, params, h);
        let r = if i == steps { r2 } else { r1 + i as f64 * h };
        t.push(r, s);
    }
    Ok(t)
}

/// Closed-form solution for initial state given at `r = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticSolution {
    pub omega: f64,
    /// Amplitude of the relative coordinate, `w(r) = A cos(ωr + φ)`.
    pub amplitude: f64,
    pub phase: f64,
    pub center0: f64,
    pub center_velocity: f64,
    w0: f64,
    dw0: f64,
    m_a: f64,
    m_c: f64,
}

impl AnalyticSolution {
    pub fn new(params: &DynamicsParams, init: State) -> Self {
        let m = params.total_mass();
        let omega = params.omega();
        let w0 = init.u_a - init.u_c;
        let dw0 = init.du_a - init.du_c;
        let (amplitude, phase) = if omega > 0.0 {
            let b = dw0 / omega;
            ((w0 * w0 + b * b).sqrt(), (-b).atan2(w0))
        } else {
            (w0.abs(), 0.0)
        };
        Self {
            omega,
            amplitude,
            phase,
            center0: (params.m_a * init.u_a + params.m_c * init.u_c) / m,
            center_velocity: (params.m_a * init.du_a + params.m_c * init.du_c) / m,
            w0,
            dw0,
            m_a: params.m_a,
            m_c: params.m_c,
        }
    }

    /// Oscillation period, infinite without coupling.
    pub fn period(&self) -> f64 {
        if self.omega > 0.0 {
            2.0 * PI / self.omega
        } else {
            f64::INFINITY
        }
    }

    pub fn relative(&self, r: f64) -> (f64, f64) {
        if self.omega > 0.0 {
            let (s, c) = (self.omega * r).sin_cos();
            (
                self.w0 * c + self.dw0 / self.omega * s,
                -self.w0 * self.omega * s + self.dw0 * c,
            )
        } else {
            (self.w0 + self.dw0 * r, self.dw0)
        }
    }

    pub fn at(&self, r: f64) -> State {
        let m = self.m_a + self.m_c;
        let (w, dw) = self.relative(r);
        let x = self.center0 + self.center_velocity * r;
        let v = self.center_velocity;
        State::new(
            x + self.m_c / m * w,
            x - self.m_a / m * w,
            v + self.m_c / m * dw,
            v - self.m_a / m * dw,
        )
    }
}

pub fn analytic_trajectory(params: &DynamicsParams, init: State, r: f64) -> (f64, f64) {
    let s = AnalyticSolution::new(params, init).at(r);
    (s.u_a, s.u_c)
}

/// Least-action check on a short span: the integrated path must have strictly
/// lower interaction action than every randomly bumped variant. Bump sizes are
/// drawn with `|ε| ∈ [1e-3, 1e-1]` and random sign, independently per coordinate.
pub fn variational_check<R: Rng + ?Sized>(
    params: &DynamicsParams,
    init: State,
    span: (f64, f64),
    n_perturbations: usize,
    rng: &mut R,
) -> Result<bool> {
    let len = span.1 - span.0;
    let omega = params.omega();
    if omega > 0.0 && len >= PI / omega {
        return Err(Error::domain(format!(
            "span {len} is not shorter than half the oscillation period {}",
            PI / omega
        )));
    }
    let steps = 2000;
    let path = integrate_dynamics(params, init, span, len / steps as f64)?;
    let form = LagrangianForm::Interaction;
    let base = action_integral(&path, params, form)?;
    let draw = |rng: &mut R| {
        let mag = rng.random_range(1e-3..=1e-1);
        if rng.random_bool(0.5) {
            mag
        } else {
            -mag
        }
    };
    for _ in 0..n_perturbations {
        let (ea, ec) = (draw(rng), draw(rng));
        if action_integral(&path.with_bump(ea, ec), params, form)? <= base {
            return Ok(false);
        }
    }
    Ok(true)
}
