//! Event-driven Zig-Zag simulation.
//!
//! Between events the position moves as `x + t v`. After every event each
//! coordinate's next flip time along the current ray is drawn afresh (the
//! clocks are memoryless), together with a refresh time; the earliest wins.
//! Flip times use exact inversion of the integrated rate for canonical
//! (optionally `+ gamma`) intensities under a diagonal Gaussian target, and
//! thinning against an affine envelope `a + b t` on windows of length `tau`
//! otherwise.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use nonrev_core::potential::Potential;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::function::PhaseFunction;
use crate::intensity::{IntensityKind, IntensitySpec, RefreshMode};

/// Relative slack allowed before a sampled intensity counts as exceeding its envelope.
const ENVELOPE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Flip(usize),
    Refresh,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::Flip(i) => write!(f, "flip{}", i + 1),
            EventKind::Refresh => f.write_str("refresh"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Event {
    pub time: f64,
    pub position: Vec<f64>,
    /// Velocity after the event.
    pub velocity: Vec<f64>,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZigZagTrajectory {
    pub start_position: Vec<f64>,
    pub start_velocity: Vec<f64>,
    pub events: Vec<Event>,
    pub horizon: f64,
}

/// `(start time, end time, position at start, velocity)`.
pub type Segment<'a> = (f64, f64, &'a [f64], &'a [f64]);

impl ZigZagTrajectory {
    pub fn dim(&self) -> usize {
        self.start_position.len()
    }

    /// Linear pieces covering `[0, horizon]`.
    pub fn segments(&self) -> impl Iterator<Item = Segment<'_>> {
        let starts = std::iter::once((0.0, self.start_position.as_slice(), self.start_velocity.as_slice()))
            .chain(self.events.iter().map(|e| (e.time, e.position.as_slice(), e.velocity.as_slice())));
        let ends = self.events.iter().map(|e| e.time).chain(std::iter::once(self.horizon));
        starts.zip(ends).map(|((t0, x, v), t1)| (t0, t1, x, v))
    }

    pub fn state_at(&self, t: f64) -> (Vec<f64>, Vec<f64>) {
        let k = self.events.partition_point(|e| e.time <= t);
        let (t0, x, v) = if k == 0 {
            (0.0, &self.start_position, &self.start_velocity)
        } else {
            let e = &self.events[k - 1];
            (e.time, &e.position, &e.velocity)
        };
        (x.iter().zip(v).map(|(xi, vi)| xi + (t - t0) * vi).collect(), v.clone())
    }

    pub fn final_state(&self) -> (Vec<f64>, Vec<f64>) {
        self.state_at(self.horizon)
    }

    /// Largest disagreement between stored event positions and positions
    /// rebuilt by integrating the velocities from the start.
    pub fn reconstruction_error(&self) -> f64 {
        let mut x = self.start_position.clone();
        let mut worst: f64 = 0.0;
        for (t0, t1, stored, v) in self.segments() {
            for (xi, si) in x.iter().zip(stored) {
                worst = worst.max((xi - si).abs());
            }
            for (xi, vi) in x.iter_mut().zip(v) {
                *xi += (t1 - t0) * vi;
            }
        }
        let (end, _) = self.final_state();
        for (xi, ei) in x.iter().zip(&end) {
            worst = worst.max((xi - ei).abs());
        }
        worst
    }

    /// Checks velocities, time ordering and horizon.
    pub fn validate(&self) -> Result<()> {
        let mut last: Option<f64> = None;
        for e in &self.events {
            let ordered = match last {
                Some(prev) => e.time > prev,
                None => e.time >= 0.0,
            };
            if !ordered || e.time > self.horizon {
                return Err(Error::InvalidParameter(format!("event time {} out of order", e.time)));
            }
            check_velocity(&e.velocity)?;
            last = Some(e.time);
        }
        check_velocity(&self.start_velocity)
    }

    /// `∫_0^T g(Z_s) ds`.
    pub fn integral(&self, g: &PhaseFunction) -> f64 {
        self.segments().map(|(t0, t1, x, v)| g.segment_integral(x, v, t1 - t0)).sum()
    }

    /// `∫` of `g` over each of `count` consecutive windows of length `width` starting at `start`.
    pub fn window_integrals(&self, g: &PhaseFunction, start: f64, width: f64, count: usize) -> Vec<f64> {
        let mut out = vec![0.0; count];
        let end = start + width * count as f64;
        let mut y = vec![0.0; self.dim()];
        for (t0, t1, x, v) in self.segments() {
            let (a, b) = (t0.max(start), t1.min(end));
            if a >= b {
                continue;
            }
            let mut cursor = a;
            while cursor < b {
                let mut cell = (((cursor - start) / width) as usize).min(count - 1);
                if start + width * (cell + 1) as f64 <= cursor && cell + 1 < count {
                    cell += 1;
                }
                let stop = if cell + 1 == count { b } else { (start + width * (cell + 1) as f64).min(b) };
                let stop = if stop <= cursor { b } else { stop };
                for (yj, (xj, vj)) in y.iter_mut().zip(x.iter().zip(v)) {
                    *yj = xj + (cursor - t0) * vj;
                }
                out[cell] += g.segment_integral(&y, v, stop - cursor);
                cursor = stop;
            }
        }
        out
    }

    /// CSV with columns `t, x_1..x_d, v_1..v_d, event_type`; the first row is
    /// the start state and the last the state at the horizon.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let d = self.dim();
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=d).map(|i| format!("x_{i}")))
            .chain((1..=d).map(|i| format!("v_{i}")))
            .chain(std::iter::once("event_type".to_string()))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        let mut row = |t: f64, x: &[f64], v: &[f64], kind: &str| -> std::io::Result<()> {
            let cells: Vec<String> = std::iter::once(t)
                .chain(x.iter().copied())
                .chain(v.iter().copied())
                .map(|c| c.to_string())
                .collect();
            writeln!(out, "{},{kind}", cells.join(","))
        };
        row(0.0, &self.start_position, &self.start_velocity, "start")?;
        for e in &self.events {
            row(e.time, &e.position, &e.velocity, &e.kind.to_string())?;
        }
        let (x, v) = self.final_state();
        row(self.horizon, &x, &v, "end")
    }
}

fn check_velocity(v: &[f64]) -> Result<()> {
    if v.iter().all(|&c| c == 1.0 || c == -1.0) {
        Ok(())
    } else {
        Err(Error::InvalidVelocity(v.to_vec()))
    }
}

/// `(a, b)` with `lambda_i(x + t v, v) <= a + b t` for `t` in `[0, tau]`,
/// given `(x, v, i, tau)`.
pub type EnvelopeFn = Arc<dyn Fn(&[f64], &[f64], usize, f64) -> (f64, f64) + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EventMethod {
    /// Exact inversion where available, thinning otherwise.
    #[default]
    Auto,
    Thinning,
}

#[derive(Clone)]
pub struct SimulationOptions {
    pub method: EventMethod,
    /// Thinning window `tau`.
    pub window: f64,
    /// User envelope; otherwise built from the potential's ray derivative bound.
    pub envelope: Option<EnvelopeFn>,
}

impl fmt::Debug for SimulationOptions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SimulationOptions")
            .field("method", &self.method)
            .field("window", &self.window)
            .field("envelope", &self.envelope.as_ref().map(|_| ".."))
            .finish()
    }
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self { method: EventMethod::Auto, window: 1.0, envelope: None }
    }
}

/// `Lambda(t) = ((a + t)_+^2 - a_+^2) / (2 sigma^2)` with `a = x_i v_i`: the
/// integrated canonical rate along a ray for `U = x_i^2 / (2 sigma^2)`.
pub fn gaussian_canonical_cumulative_rate(a: f64, sigma2: f64, t: f64) -> f64 {
    ((a + t).max(0.0).powi(2) - a.max(0.0).powi(2)) / (2.0 * sigma2)
}

/// Inverse of [`gaussian_canonical_cumulative_rate`] at `e`.
pub fn gaussian_canonical_inverse(a: f64, sigma2: f64, e: f64) -> f64 {
    -a + (a.max(0.0).powi(2) + 2.0 * sigma2 * e).sqrt()
}

fn exp1<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Exp1.sample(rng)
}

fn exact_available(pot: &dyn Potential, kind: IntensityKind, method: EventMethod) -> bool {
    method == EventMethod::Auto
        && pot.gaussian_variances().is_some()
        && matches!(kind, IntensityKind::Canonical | IntensityKind::CanonicalPlusGamma { .. })
}

fn gradient_component(pot: &dyn Potential, x: &[f64], i: usize) -> Result<f64> {
    let g = pot.partial(x, i);
    if g.is_finite() {
        Ok(g)
    } else {
        Err(Error::NonFiniteGradient { position: x.to_vec() })
    }
}

/// Time until the next switching event of coordinate `i` from `(x, v)` if it
/// occurs before `cap`, else `None`.
#[allow(clippy::too_many_arguments)]
pub fn flip_time<R: Rng + ?Sized>(
    pot: &dyn Potential,
    kind: IntensityKind,
    x: &[f64],
    v: &[f64],
    i: usize,
    cap: f64,
    options: &SimulationOptions,
    rng: &mut R,
) -> Result<Option<f64>> {
    if exact_available(pot, kind, options.method) {
        gradient_component(pot, x, i)?;
        let sigma2 = pot.gaussian_variances().expect("checked")[i];
        let e = exp1(rng);
        let mut t = gaussian_canonical_inverse(x[i] * v[i], sigma2, e);
        if let IntensityKind::CanonicalPlusGamma { gamma } = kind {
            if gamma > 0.0 {
                let extra = exp1(rng);
                t = t.min(extra / gamma);
            }
        }
        return Ok((t < cap).then_some(t));
    }
    thinning_time(pot, kind, x, v, i, cap, options, rng)
}

#[allow(clippy::too_many_arguments)]
fn thinning_time<R: Rng + ?Sized>(
    pot: &dyn Potential,
    kind: IntensityKind,
    x: &[f64],
    v: &[f64],
    i: usize,
    cap: f64,
    options: &SimulationOptions,
    rng: &mut R,
) -> Result<Option<f64>> {
    let tau = options.window;
    let mut offset = 0.0;
    let mut y = x.to_vec();
    let mut probe = x.to_vec();
    while offset < cap {
        for (yj, (xj, vj)) in y.iter_mut().zip(x.iter().zip(v)) {
            *yj = xj + offset * vj;
        }
        let (a, b) = match &options.envelope {
            Some(env) => env(&y, v, i, tau),
            None => {
                let s = gradient_component(pot, &y, i)? * v[i];
                // Built-in rates are nondecreasing in s with slope at most one.
                let slope = pot
                    .ray_derivative_bound(&y, v, i, tau)
                    .ok_or(Error::MissingEnvelope { coordinate: i })?;
                (kind.rate(s), slope)
            }
        };
        if !(a.is_finite() && b.is_finite() && a >= 0.0 && b >= 0.0) {
            return Err(Error::InvalidParameter(format!("envelope ({a}, {b}) at coordinate {i}")));
        }
        let mut cumulative = 0.0;
        loop {
            cumulative += exp1(rng);
            let next = if b > 0.0 {
                (-a + (a * a + 2.0 * b * cumulative).sqrt()) / b
            } else if a > 0.0 {
                cumulative / a
            } else {
                f64::INFINITY
            };
            if next > tau || offset + next >= cap {
                break;
            }
            let u = next;
            for (pj, (yj, vj)) in probe.iter_mut().zip(y.iter().zip(v)) {
                *pj = yj + u * vj;
            }
            let rate = kind.rate(gradient_component(pot, &probe, i)? * v[i]);
            let bound = a + b * u;
            if rate > bound * (1.0 + ENVELOPE_SLACK) + 1e-12 {
                return Err(Error::EnvelopeViolation { coordinate: i, time: offset + u, rate, bound });
            }
            if rng.random::<f64>() * bound < rate {
                return Ok(Some(offset + u));
            }
        }
        offset += tau;
    }
    Ok(None)
}

fn check_inputs(pot: &dyn Potential, spec: &IntensitySpec, x0: &[f64], v0: &[f64], horizon: f64, options: &SimulationOptions) -> Result<()> {
    spec.validate()?;
    let d = pot.dim();
    for found in [x0.len(), v0.len()] {
        if found != d {
            return Err(Error::DimensionMismatch { expected: d, found });
        }
    }
    spec.check_dim(d)?;
    check_velocity(v0)?;
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidParameter(format!("horizon {horizon}")));
    }
    if !(options.window.is_finite() && options.window > 0.0) {
        return Err(Error::InvalidParameter(format!("thinning window {}", options.window)));
    }
    if x0.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidParameter("non-finite start position".into()));
    }
    Ok(())
}

pub fn simulate_zigzag<R: Rng + ?Sized>(
    pot: &dyn Potential,
    spec: &IntensitySpec,
    x0: &[f64],
    v0: &[f64],
    horizon: f64,
    options: &SimulationOptions,
    rng: &mut R,
) -> Result<ZigZagTrajectory> {
    check_inputs(pot, spec, x0, v0, horizon, options)?;
    let d = pot.dim();
    let mut x = x0.to_vec();
    let mut v = v0.to_vec();
    let mut t = 0.0;
    let mut events = Vec::new();
    loop {
        let remaining = horizon - t;
        let mut best: (f64, Option<EventKind>) = (remaining, None);
        for i in 0..d {
            if let Some(dt) = flip_time(pot, spec.kind(i), &x, &v, i, best.0, options, rng)? {
                best = (dt, Some(EventKind::Flip(i)));
            }
        }
        if spec.refresh_rate > 0.0 {
            let dt = exp1(rng) / spec.refresh_rate;
            if dt < best.0 {
                best = (dt, Some(EventKind::Refresh));
            }
        }
        let (dt, kind) = best;
        let Some(kind) = kind else { break };
        for (xi, vi) in x.iter_mut().zip(&v) {
            *xi += dt * vi;
        }
        t += dt;
        match kind {
            EventKind::Flip(i) => v[i] = -v[i],
            EventKind::Refresh => match spec.refresh_mode {
                RefreshMode::Full => {
                    for vi in v.iter_mut() {
                        *vi = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    }
                }
                RefreshMode::PerCoordinateFlip => {
                    let i = rng.random_range(0..d);
                    v[i] = -v[i];
                }
            },
        }
        events.push(Event { time: t, position: x.clone(), velocity: v.clone(), kind });
    }
    Ok(ZigZagTrajectory { start_position: x0.to_vec(), start_velocity: v0.to_vec(), events, horizon })
}

/// Uniform draw from `{-1, 1}^d`.
pub fn random_velocity<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    (0..d).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nonrev_core::potential::{DoubleWellPotential, FlatPotential, GaussianPotential};
    use nonrev_core::rng;

    #[test]
    fn flat_potential_without_refresh_has_no_events() {
        let traj = simulate_zigzag(
            &FlatPotential { d: 2 },
            &IntensitySpec::canonical(),
            &[0.0, 1.0],
            &[1.0, -1.0],
            50.0,
            &SimulationOptions::default(),
            &mut rng::stream(1, 0),
        )
        .unwrap();
        assert!(traj.events.is_empty());
        assert_eq!(traj.final_state().0, vec![50.0, -49.0]);
    }

    #[test]
    fn inversion_round_trip() {
        for a in [-2.0, -0.1, 0.0, 0.7, 3.0] {
            for e in [0.01, 1.0, 5.0] {
                let t = gaussian_canonical_inverse(a, 2.0, e);
                assert_abs_diff_eq!(gaussian_canonical_cumulative_rate(a, 2.0, t), e, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn trajectory_invariants() {
        let pot = DoubleWellPotential::new(0.5, 1.0, 2).unwrap();
        let spec = IntensitySpec::uniform(IntensityKind::Barker, 0.5, RefreshMode::Full).unwrap();
        let traj = simulate_zigzag(&pot, &spec, &[0.1, -0.3], &[1.0, 1.0], 200.0, &SimulationOptions::default(), &mut rng::stream(2, 0)).unwrap();
        traj.validate().unwrap();
        assert!(traj.events.len() > 50);
        assert!(traj.reconstruction_error() < 1e-12);
        let total: f64 = traj.segments().map(|(a, b, _, _)| b - a).sum();
        assert_abs_diff_eq!(total, 200.0, epsilon = 1e-9);
    }

    #[test]
    fn bad_envelope_is_detected() {
        let pot = GaussianPotential::standard(1).unwrap();
        let options = SimulationOptions {
            method: EventMethod::Thinning,
            window: 1.0,
            envelope: Some(Arc::new(|_, _, _, _| (0.5, 0.0))),
        };
        let err = simulate_zigzag(&pot, &IntensitySpec::canonical(), &[3.0], &[1.0], 10.0, &options, &mut rng::stream(3, 0));
        assert!(matches!(err, Err(Error::EnvelopeViolation { .. })));
    }

    #[test]
    fn invalid_inputs() {
        let pot = GaussianPotential::standard(1).unwrap();
        let spec = IntensitySpec::canonical();
        let opts = SimulationOptions::default();
        let mut g = rng::stream(4, 0);
        assert!(matches!(simulate_zigzag(&pot, &spec, &[0.0], &[0.5], 1.0, &opts, &mut g), Err(Error::InvalidVelocity(_))));
        assert!(simulate_zigzag(&pot, &spec, &[0.0], &[1.0], 0.0, &opts, &mut g).is_err());
        assert!(simulate_zigzag(&pot, &spec, &[0.0, 1.0], &[1.0, 1.0], 1.0, &opts, &mut g).is_err());
    }

    #[test]
    fn csv_export() {
        let pot = GaussianPotential::standard(1).unwrap();
        let traj = simulate_zigzag(&pot, &IntensitySpec::canonical(), &[0.0], &[1.0], 5.0, &SimulationOptions::default(), &mut rng::stream(5, 0)).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,x_1,v_1,event_type");
        assert_eq!(lines.len(), traj.events.len() + 3);
        assert!(lines[1].ends_with(",start") && lines.last().unwrap().ends_with(",end"));
    }
}
