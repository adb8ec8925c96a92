//! Time evolution of the driven reduced model.
//!
//! Hamiltonians are in MHz (cyclic). Propagators are `exp(-2 pi i H dt)` with
//! `dt` in microseconds, so a Rabi frequency `f` in MHz produces populations
//! oscillating as `sin^2(pi f t)`.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use crate::config::SpinSystemConfig;
use crate::error::{Error, Result};
use crate::hamiltonian::{build_static, drive_operator};
use crate::mixing::{bare_rabi_frequency, diagonalize, enhancement_exact, nuclear_resonance_from, LabeledEigensystem};
use crate::operator::{BasisLabel, CMatrix, CVector, Manifold, C64};
use crate::oscillation::{fit_cosine, CosineFit};

type M6 = Matrix6<C64>;
type V6 = Vector6<C64>;

/// How a Rabi trace was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Frame {
    /// Two-level rotation of the dressed nuclear pair in the rotating frame.
    Rwa,
    /// Lab frame, stroboscopic powers of the one-period propagator.
    LabFloquet,
    /// Lab frame, piecewise-constant stepping over the whole record.
    LabTrotter,
}

impl Frame {
    pub fn as_str(self) -> &'static str {
        match self {
            Frame::Rwa => "rwa",
            Frame::LabFloquet => "lab-floquet",
            Frame::LabTrotter => "lab-trotter",
        }
    }
}

impl std::str::FromStr for Frame {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "rwa" => Ok(Frame::Rwa),
            "lab-floquet" => Ok(Frame::LabFloquet),
            "lab-trotter" => Ok(Frame::LabTrotter),
            other => Err(format!("unknown frame {other:?}; expected rwa, lab-floquet or lab-trotter")),
        }
    }
}

/// Photon-count readout attached to a simulated measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonSignal {
    /// Total counts per time point, summed over repetitions.
    pub counts: Vec<u64>,
    /// Mean photons per shot, `counts / repetitions`.
    pub mean_photons: Vec<f64>,
    pub repetitions: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabiTrace {
    /// Sample times (us), ascending.
    pub times: Vec<f64>,
    /// Population of the dressed `|m_s, 0>` state.
    pub population: Vec<f64>,
    pub manifold: Manifold,
    pub frame: Frame,
    pub signal: Option<PhotonSignal>,
}

impl RabiTrace {
    /// The values a frequency fit should use: photon signal if present.
    pub fn observable(&self) -> &[f64] {
        match &self.signal {
            Some(s) => &s.mean_photons,
            None => &self.population,
        }
    }

    /// Writes `time_us,population,manifold,frame` rows in time order.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time_us", "population", "manifold", "frame"])?;
        for (t, p) in self.times.iter().zip(&self.population) {
            w.write_record([
                format!("{t:.9e}"),
                format!("{p:.12e}"),
                self.manifold.to_string(),
                self.frame.as_str().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Step size and unitarity tolerance for lab-frame propagation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationSettings {
    /// Maximum step (us).
    pub dt: f64,
    /// Bound on `max |U^dagger U - 1|` of the accumulated propagator.
    pub tolerance: f64,
}

/// Largest frequency scale (MHz) of the lab-frame Hamiltonian.
pub fn max_frequency_scale(config: &SpinSystemConfig) -> f64 {
    config.omega_rf.max(config.delta).max((config.gamma_e * config.b_z).abs())
}

impl PropagationSettings {
    /// Largest admissible step for `config`: 50 steps per period of the fastest scale.
    pub fn max_dt(config: &SpinSystemConfig) -> f64 {
        1.0 / (50.0 * max_frequency_scale(config))
    }

    pub fn for_config(config: &SpinSystemConfig) -> Self {
        Self { dt: Self::max_dt(config), tolerance: 1e-9 }
    }

    pub fn validate(&self, config: &SpinSystemConfig) -> Result<()> {
        let max_dt = Self::max_dt(config);
        if !(self.dt > 0.0) || self.dt > max_dt * (1.0 + 1e-12) {
            return Err(Error::StepSize { dt: self.dt, max_dt });
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig("unitarity tolerance must be positive".into()));
        }
        Ok(())
    }
}

fn to_m6(m: &CMatrix) -> M6 {
    M6::from_fn(|r, c| m[(r, c)])
}

fn to_v6(v: &CVector) -> V6 {
    V6::from_fn(|r, _| v[r])
}

fn unitarity_drift(u: &M6) -> f64 {
    (u.adjoint() * u - M6::identity()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Piecewise-constant midpoint stepper for `H(t) = H0 + 2 B1 cos(2 pi w t) V`.
struct Stepper {
    h0: M6,
    drive: M6,
    b1: f64,
    omega: f64,
}

impl Stepper {
    fn new(config: &SpinSystemConfig) -> Self {
        Self {
            h0: to_m6(build_static(config).matrix()),
            drive: to_m6(drive_operator(config).matrix()),
            b1: config.b1,
            omega: config.omega_rf,
        }
    }

    /// `exp(-2 pi i H(t + h/2) h)` via Hermitian eigendecomposition.
    fn step(&self, t: f64, h: f64) -> M6 {
        let env = 2.0 * self.b1 * (2.0 * PI * self.omega * (t + 0.5 * h)).cos();
        let hm = self.h0 + self.drive * C64::new(env, 0.0);
        let eig = hm.symmetric_eigen();
        let phases = eig.eigenvalues.map(|l| C64::from_polar(1.0, -2.0 * PI * l * h));
        let w = eig.eigenvectors;
        let mut scaled = w;
        for (j, p) in phases.iter().enumerate() {
            scaled.column_mut(j).iter_mut().for_each(|z| *z *= p);
        }
        let u = scaled * w.adjoint();
        // One Newton-Schulz pass removes the eigensolver's rounding excess.
        u * (M6::identity() * C64::new(1.5, 0.0) - u.adjoint() * u * C64::new(0.5, 0.0))
    }

    /// Propagator from `t0` to `t1` in steps no longer than `dt`.
    fn evolve(&self, t0: f64, t1: f64, dt: f64) -> M6 {
        let span = t1 - t0;
        if span <= 0.0 {
            return M6::identity();
        }
        let n = (span / dt).ceil().max(1.0) as usize;
        let h = span / n as f64;
        let mut u = M6::identity();
        for k in 0..n {
            u = self.step(t0 + k as f64 * h, h) * u;
        }
        u
    }
}

fn check_drift(u: &M6, settings: &PropagationSettings) -> Result<f64> {
    let drift = unitarity_drift(u);
    if drift > settings.tolerance {
        return Err(Error::UnitarityDrift { drift, tolerance: settings.tolerance });
    }
    Ok(drift)
}

/// Lab-frame propagator `U(t1, t0)` under `H_par + H_perp + H_rf(t)`.
pub fn lab_propagator(config: &SpinSystemConfig, t0: f64, t1: f64, settings: &PropagationSettings) -> Result<CMatrix> {
    config.validate()?;
    settings.validate(config)?;
    let u = Stepper::new(config).evolve(t0, t1, settings.dt);
    check_drift(&u, settings)?;
    Ok(CMatrix::from_fn(6, 6, |r, c| u[(r, c)]))
}

/// Evolves `initial` from `t = 0` to `tau` in the lab frame.
pub fn propagate_lab(
    config: &SpinSystemConfig,
    initial: &CVector,
    tau: f64,
    settings: &PropagationSettings,
) -> Result<CVector> {
    if initial.len() != 6 {
        return Err(Error::InvalidConfig(format!("initial state has dimension {}, expected 6", initial.len())));
    }
    if (initial.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig("initial state is not normalized".into()));
    }
    if tau < 0.0 {
        return Err(Error::InvalidConfig("propagation time must be nonnegative".into()));
    }
    let u = lab_propagator(config, 0.0, tau, settings)?;
    Ok(u * initial)
}

/// Dressed-frame description of the driven nuclear transition in one manifold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuclearDrive {
    /// Dressed transition frequency (MHz).
    pub resonance: f64,
    /// Signed on-resonance Rabi frequency `sqrt(2) gn B1 alpha` (MHz).
    pub rabi: f64,
    /// Drive detuning `omega_rf - resonance` (MHz).
    pub detuning: f64,
}

impl NuclearDrive {
    /// Generalized Rabi frequency `sqrt(rabi^2 + detuning^2)`.
    pub fn generalized(&self) -> f64 {
        self.rabi.hypot(self.detuning)
    }
}

pub fn nuclear_drive(config: &SpinSystemConfig, manifold: Manifold) -> Result<NuclearDrive> {
    let eig = diagonalize(&build_static(config))?;
    let resonance = nuclear_resonance_from(&eig, manifold);
    let alpha = enhancement_exact(config)?.get(manifold);
    Ok(NuclearDrive {
        resonance,
        rabi: bare_rabi_frequency(config, config.b1) * alpha,
        detuning: config.omega_rf - resonance,
    })
}

/// Returns `config` with the drive tuned to the dressed nuclear transition of `manifold`.
pub fn with_resonant_drive(config: &SpinSystemConfig, manifold: Manifold) -> Result<SpinSystemConfig> {
    let eig = diagonalize(&build_static(config))?;
    Ok(config.with_omega_rf(nuclear_resonance_from(&eig, manifold)))
}

/// Two-level rotation of the dressed pair `(|m,1>, |m,0>)` in the rotating
/// frame, starting from `|m,1>`. Returns the amplitudes `[c1, c0]`.
pub fn propagate_rwa(config: &SpinSystemConfig, manifold: Manifold, tau: f64) -> Result<[C64; 2]> {
    let drive = nuclear_drive(config, manifold)?;
    Ok(rwa_amplitudes(&drive, tau))
}

fn rwa_amplitudes(drive: &NuclearDrive, tau: f64) -> [C64; 2] {
    let g = drive.generalized();
    if g == 0.0 {
        return [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
    }
    // H = (detuning sz + rabi sx) / 2; U = cos(th) - i sin(th) n.sigma
    let (s, c) = (PI * g * tau).sin_cos();
    [C64::new(c, -s * drive.detuning / g), C64::new(0.0, -s * drive.rabi / g)]
}

/// Quasi-energies of the periodically driven system.
#[derive(Debug, Clone)]
pub struct FloquetSpectrum {
    /// Drive period `1 / omega_rf` (us).
    pub period: f64,
    /// Quasi-energies (MHz) in `(-omega_rf/2, omega_rf/2]`, ascending.
    pub quasi_energies: Vec<f64>,
    /// Floquet states at `t = 0`, columns ordered as `quasi_energies`.
    pub states: CMatrix,
    pub unitarity_drift: f64,
}

/// One-period propagator with intermediate checkpoints for sub-period times.
struct PeriodPropagator {
    stepper: Stepper,
    period: f64,
    substep: f64,
    checkpoints: Vec<M6>,
    schur_vectors: M6,
    eigenvalues: [C64; 6],
    drift: f64,
}

const CHECKPOINTS: usize = 64;

impl PeriodPropagator {
    fn build(config: &SpinSystemConfig, settings: &PropagationSettings) -> Result<Self> {
        config.validate()?;
        settings.validate(config)?;
        if !(config.omega_rf > 0.0) {
            return Err(Error::InvalidConfig("Floquet analysis needs omega_rf > 0".into()));
        }
        let stepper = Stepper::new(config);
        let period = 1.0 / config.omega_rf;
        let per_chunk = (period / (settings.dt * CHECKPOINTS as f64)).ceil().max(1.0) as usize;
        let n = per_chunk * CHECKPOINTS;
        let h = period / n as f64;
        let mut u = M6::identity();
        let mut checkpoints = Vec::with_capacity(CHECKPOINTS);
        for k in 0..n {
            if k % per_chunk == 0 {
                checkpoints.push(u);
            }
            u = stepper.step(k as f64 * h, h) * u;
        }
        let drift = check_drift(&u, settings)?;
        let schur = nalgebra::Schur::try_new(u, 1e-15, 10_000)
            .ok_or_else(|| Error::NoOscillation("Schur decomposition of the period propagator failed".into()))?;
        let (q, t) = schur.unpack();
        let eigenvalues = std::array::from_fn(|k| t[(k, k)] / t[(k, k)].norm());
        Ok(Self { stepper, period, substep: h, checkpoints, schur_vectors: q, eigenvalues, drift })
    }

    fn spectrum(&self) -> FloquetSpectrum {
        let omega = 1.0 / self.period;
        let mut pairs: Vec<(f64, usize)> = self
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(k, l)| (-l.arg() * omega / (2.0 * PI), k))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let states = CMatrix::from_fn(6, 6, |r, c| self.schur_vectors[(r, pairs[c].1)]);
        FloquetSpectrum {
            period: self.period,
            quasi_energies: pairs.iter().map(|p| p.0).collect(),
            states,
            unitarity_drift: self.drift,
        }
    }

    /// State at time `t >= 0` evolved from `psi0` at `t = 0`.
    fn evolve_state(&self, psi0: &V6, t: f64, dt: f64) -> V6 {
        let n = (t / self.period).floor();
        let mut r = t - n * self.period;
        if r < 0.0 {
            r = 0.0;
        }
        let q = &self.schur_vectors;
        let mut coeff = q.adjoint() * psi0;
        for (k, l) in self.eigenvalues.iter().enumerate() {
            coeff[k] *= l.powf(n);
        }
        let psi_n = q * coeff;
        let chunk = self.period / CHECKPOINTS as f64;
        let k = ((r / chunk).floor() as usize).min(CHECKPOINTS - 1);
        let tk = k as f64 * chunk;
        let tail = self.stepper.evolve(tk, r, dt.min(self.substep));
        tail * (self.checkpoints[k] * psi_n)
    }
}

/// Eigenphases of the one-period propagator divided by the period.
pub fn floquet_quasienergies(config: &SpinSystemConfig, settings: &PropagationSettings) -> Result<FloquetSpectrum> {
    Ok(PeriodPropagator::build(config, settings)?.spectrum())
}

/// Quasi-energy splitting (MHz) of the two Floquet states with the largest
/// weight on the dressed pair `(|m,1>, |m,0>)`. On resonance this equals the
/// effective Rabi frequency.
pub fn floquet_rabi_splitting(
    config: &SpinSystemConfig,
    manifold: Manifold,
    settings: &PropagationSettings,
) -> Result<f64> {
    let spectrum = floquet_quasienergies(config, settings)?;
    let eig = diagonalize(&build_static(config))?;
    let up = eig.state(BasisLabel::new(manifold.m_s(), 1));
    let down = eig.state(BasisLabel::new(manifold.m_s(), 0));
    let mut weights: Vec<(f64, usize)> = (0..6)
        .map(|k| {
            let col = spectrum.states.column(k);
            (up.dotc(&col).norm_sqr() + down.dotc(&col).norm_sqr(), k)
        })
        .collect();
    weights.sort_by(|a, b| b.0.total_cmp(&a.0));
    let omega = config.omega_rf;
    let d = (spectrum.quasi_energies[weights[0].1] - spectrum.quasi_energies[weights[1].1]).abs() % omega;
    Ok(d.min(omega - d))
}

fn dressed_pair(eig: &LabeledEigensystem, manifold: Manifold) -> (CVector, CVector) {
    (
        eig.state(BasisLabel::new(manifold.m_s(), 1)),
        eig.state(BasisLabel::new(manifold.m_s(), 0)),
    )
}

/// Population of the dressed `|m,0>` state at each time, starting from the
/// dressed `|m,1>` state at `t = 0`.
pub fn rabi_trace(
    config: &SpinSystemConfig,
    manifold: Manifold,
    times: &[f64],
    frame: Frame,
    settings: &PropagationSettings,
) -> Result<RabiTrace> {
    config.validate()?;
    if times.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::InvalidConfig("times must be nonnegative".into()));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidConfig("times must be ascending".into()));
    }
    let population = match frame {
        Frame::Rwa => {
            let drive = nuclear_drive(config, manifold)?;
            times.iter().map(|&t| rwa_amplitudes(&drive, t)[1].norm_sqr()).collect()
        }
        Frame::LabFloquet => {
            let eig = diagonalize(&build_static(config))?;
            let (up, down) = dressed_pair(&eig, manifold);
            let (psi0, target) = (to_v6(&up), to_v6(&down));
            let prop = PeriodPropagator::build(config, settings)?;
            times
                .iter()
                .map(|&t| target.dotc(&prop.evolve_state(&psi0, t, settings.dt)).norm_sqr())
                .collect()
        }
        Frame::LabTrotter => {
            settings.validate(config)?;
            let eig = diagonalize(&build_static(config))?;
            let (up, down) = dressed_pair(&eig, manifold);
            let (psi0, target) = (to_v6(&up), to_v6(&down));
            let stepper = Stepper::new(config);
            let mut u = M6::identity();
            let mut now = 0.0;
            let mut out = Vec::with_capacity(times.len());
            for &t in times {
                u = stepper.evolve(now, t, settings.dt) * u;
                now = now.max(t);
                out.push(target.dotc(&(u * psi0)).norm_sqr());
            }
            check_drift(&u, settings)?;
            out
        }
    };
    Ok(RabiTrace { times: times.to_vec(), population, manifold, frame, signal: None })
}

/// Rabi frequency (MHz) of a trace from a cosine fit, with its standard error.
pub fn extract_frequency(trace: &RabiTrace) -> Result<CosineFit> {
    fit_cosine(&trace.times, trace.observable())
}

/// Evenly spaced times `0..=t_max` with `points` samples.
pub fn linspace(t_max: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..points).map(|k| t_max * k as f64 / (points - 1) as f64).collect(),
    }
}
