//! Shot-noise-limited measurement synthesis, detuned-Rabi fits, the global
//! transverse-hyperfine fit and the precision-versus-time study.

use std::collections::BTreeMap;
use std::f64::consts::SQRT_2;
use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SpinSystemConfig;
use crate::dynamics::{linspace, nuclear_drive, rabi_trace, with_resonant_drive, Frame, PhotonSignal, PropagationSettings, RabiTrace};
use crate::error::{Error, Result};
use crate::lsq::{self, LeastSquares, LmOptions};
use crate::mixing::enhancement_exact;
use crate::operator::Manifold;
use crate::oscillation::{fit_cosine, CosineFit};

/// Optical readout and state-preparation imperfections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReadoutModel {
    /// Mean detected photons per shot from the bright state.
    pub photons_bright: f64,
    /// Relative fluorescence dip of the mapped dark state.
    pub contrast: f64,
    /// Shots averaged per time point.
    pub repetitions: u64,
    pub polarization_efficiency: f64,
    pub pi_pulse_fidelity: f64,
}

impl Default for ReadoutModel {
    fn default() -> Self {
        Self {
            photons_bright: 0.03,
            contrast: 0.3,
            repetitions: 100_000,
            polarization_efficiency: 1.0,
            pi_pulse_fidelity: 1.0,
        }
    }
}

impl ReadoutModel {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if !(self.photons_bright > 0.0 && self.photons_bright.is_finite()) {
            return bad("photons_bright must be positive");
        }
        if !(self.contrast > 0.0 && self.contrast < 1.0) {
            return bad("contrast must lie in (0, 1)");
        }
        if self.repetitions == 0 {
            return bad("repetitions must be positive");
        }
        if !(self.polarization_efficiency > 0.0 && self.polarization_efficiency <= 1.0) {
            return bad("polarization_efficiency must lie in (0, 1]");
        }
        if !(self.pi_pulse_fidelity > 0.0 && self.pi_pulse_fidelity <= 1.0) {
            return bad("pi_pulse_fidelity must lie in (0, 1]");
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let r: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        r.validate()?;
        Ok(r)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Probability that the readout finds the mapped dark state, given the
    /// population of the dressed `|m,0>` state for a perfectly polarized start.
    ///
    /// The unpolarized fraction is nuclear-mixed and contributes 1/2. MW pulses
    /// act once (mapping) in `m_s = 0` and twice (preparation and mapping) in
    /// `m_s = +-1`; failed pulses leave the bright state.
    pub fn dark_probability(&self, population: f64, manifold: Manifold) -> f64 {
        let p = self.polarization_efficiency;
        let pulses = if manifold == Manifold::Zero { 1 } else { 2 };
        self.pi_pulse_fidelity.powi(pulses) * (p * population + (1.0 - p) * 0.5)
    }

    /// Expected photons per shot.
    pub fn mean_photons(&self, population: f64, manifold: Manifold) -> f64 {
        self.photons_bright * (1.0 - self.contrast * self.dark_probability(population, manifold))
    }
}

/// Durations (us) of the fixed parts of one shot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SequenceTiming {
    pub laser_us: f64,
    pub mw_prep_us: f64,
    pub mw_selective_us: f64,
    pub readout_us: f64,
}

impl Default for SequenceTiming {
    fn default() -> Self {
        Self { laser_us: 1.0, mw_prep_us: 0.05, mw_selective_us: 0.7, readout_us: 0.3 }
    }
}

impl SequenceTiming {
    /// Duration of one shot with RF drive time `tau`.
    pub fn shot_us(&self, tau: f64) -> f64 {
        self.laser_us + self.mw_prep_us + tau + self.mw_selective_us + self.readout_us
    }
}

/// SplitMix64 finalizer combining a master seed with task coordinates.
pub fn derive_seed(master: u64, coords: &[u64]) -> u64 {
    let mut z = master;
    for &c in coords {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(c.wrapping_mul(0xD1B5_4A32_D192_ED03));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// Simulates the polarize / prepare / drive / map / read sequence at each
/// drive time and draws Poissonian photon counts summed over repetitions.
pub fn synth_measurement(
    config: &SpinSystemConfig,
    manifold: Manifold,
    times: &[f64],
    readout: &ReadoutModel,
    seed: u64,
) -> Result<RabiTrace> {
    readout.validate()?;
    let mut trace = rabi_trace(config, manifold, times, Frame::Rwa, &PropagationSettings::for_config(config))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reps = readout.repetitions;
    let mut counts = Vec::with_capacity(times.len());
    for &p in &trace.population {
        let lambda = reps as f64 * readout.mean_photons(p, manifold);
        let n = Poisson::new(lambda)
            .map_err(|e| Error::InvalidConfig(format!("photon rate {lambda}: {e}")))?
            .sample(&mut rng);
        counts.push(n as u64);
    }
    let mean_photons = counts.iter().map(|&c| c as f64 / reps as f64).collect();
    trace.signal = Some(PhotonSignal { counts, mean_photons, repetitions: reps });
    Ok(trace)
}

/// Frequency of a (possibly noisy) Rabi trace with free amplitude and baseline.
///
/// Observed frequencies follow `sqrt(rabi^2 + detuning^2)` off resonance.
pub fn fit_detuned_rabi(trace: &RabiTrace) -> Result<CosineFit> {
    fit_cosine(&trace.times, trace.observable())
}

/// One measured point of an amplitude sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub manifold: Manifold,
    /// Relative drive amplitude `B1 / |B1,max|`.
    pub x: f64,
    /// Measured Rabi frequency (MHz).
    pub omega_m: f64,
    /// Standard error of `omega_m` (MHz).
    pub sigma: f64,
}

/// Rabi frequencies versus relative RF amplitude in one or more manifolds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepDataset {
    /// Static field (G) at which the sweep was taken.
    pub b_z: f64,
    pub points: Vec<SweepPoint>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SweepRow {
    manifold: String,
    x_rel_amplitude: f64,
    omega_m_mhz: f64,
    sigma_mhz: f64,
}

impl SweepDataset {
    pub fn by_manifold(&self) -> BTreeMap<Manifold, Vec<SweepPoint>> {
        let mut out: BTreeMap<Manifold, Vec<SweepPoint>> = BTreeMap::new();
        for p in &self.points {
            out.entry(p.manifold).or_default().push(*p);
        }
        out
    }

    pub fn without_manifold(&self, manifold: Manifold) -> Self {
        Self { b_z: self.b_z, points: self.points.iter().copied().filter(|p| p.manifold != manifold).collect() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::InsufficientData("dataset has no points".into()));
        }
        for p in &self.points {
            if !(p.x > 0.0 && p.x <= 1.0) {
                return Err(Error::InvalidConfig(format!("relative amplitude {} outside (0, 1]", p.x)));
            }
            if !(p.sigma > 0.0 && p.sigma.is_finite()) || !p.omega_m.is_finite() {
                return Err(Error::InvalidConfig(format!("invalid frequency {} +- {}", p.omega_m, p.sigma)));
            }
        }
        Ok(())
    }

    /// Writes `manifold,x_rel_amplitude,omega_m_mhz,sigma_mhz` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["manifold", "x_rel_amplitude", "omega_m_mhz", "sigma_mhz"])?;
        for p in &self.points {
            w.write_record([
                p.manifold.to_string(),
                format!("{:.12e}", p.x),
                format!("{:.12e}", p.omega_m),
                format!("{:.12e}", p.sigma),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV written by [`write_csv`](Self::write_csv); the field is not
    /// part of the file and must be supplied.
    pub fn read_csv<R: Read>(input: R, b_z: f64) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let mut points = Vec::new();
        for row in r.deserialize::<SweepRow>() {
            let row = row?;
            let manifold = row.manifold.parse::<Manifold>().map_err(Error::Parse)?;
            points.push(SweepPoint { manifold, x: row.x_rel_amplitude, omega_m: row.omega_m_mhz, sigma: row.sigma_mhz });
        }
        let data = Self { b_z, points };
        data.validate()?;
        Ok(data)
    }
}

/// Drive-time grid expressed in expected Rabi periods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeGrid {
    pub periods: f64,
    pub points: usize,
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self { periods: 3.0, points: 60 }
    }
}

impl TimeGrid {
    pub fn times(&self, frequency: f64) -> Vec<f64> {
        linspace(self.periods / frequency, self.points)
    }
}

/// An RF-amplitude sweep at fixed field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepProtocol {
    /// Full-scale RF amplitude (G).
    pub b1_max: f64,
    /// Relative amplitudes in (0, 1].
    pub amplitudes: Vec<f64>,
    pub manifolds: Vec<Manifold>,
    pub time_grid: TimeGrid,
    /// Drive detuning from the dressed resonance per manifold (MHz), `[+1, 0, -1]`.
    pub detunings: [f64; 3],
}

impl Default for SweepProtocol {
    fn default() -> Self {
        Self {
            b1_max: 10.0,
            amplitudes: uniform_amplitudes(5),
            manifolds: Manifold::ALL.to_vec(),
            time_grid: TimeGrid::default(),
            detunings: [0.0; 3],
        }
    }
}

/// `k / n` for `k = 1..=n`.
pub fn uniform_amplitudes(n: usize) -> Vec<f64> {
    (1..=n).map(|k| k as f64 / n as f64).collect()
}

impl SweepProtocol {
    fn point_config(&self, config: &SpinSystemConfig, manifold: Manifold, x: f64) -> Result<SpinSystemConfig> {
        let c = with_resonant_drive(&config.with_b1(x * self.b1_max), manifold)?;
        Ok(c.with_omega_rf(c.omega_rf + self.detunings[manifold.index()]))
    }

    fn tasks(&self) -> Vec<(usize, Manifold, usize, f64)> {
        let mut out = Vec::new();
        for (mi, &m) in self.manifolds.iter().enumerate() {
            for (ai, &x) in self.amplitudes.iter().enumerate() {
                out.push((mi, m, ai, x));
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if !(self.b1_max > 0.0) {
            return Err(Error::InvalidConfig("b1_max must be positive".into()));
        }
        if self.amplitudes.iter().any(|&x| !(x > 0.0 && x <= 1.0)) {
            return Err(Error::InvalidConfig("relative amplitudes must lie in (0, 1]".into()));
        }
        if self.manifolds.is_empty() || self.amplitudes.is_empty() {
            return Err(Error::InvalidConfig("sweep needs at least one manifold and amplitude".into()));
        }
        if !(self.time_grid.periods > 0.0) || self.time_grid.points < 2 {
            return Err(Error::InvalidConfig("time grid needs positive span and at least 2 points".into()));
        }
        Ok(())
    }

    /// Drive times used at each sweep point.
    pub fn point_times(&self, config: &SpinSystemConfig, manifold: Manifold, x: f64) -> Result<Vec<f64>> {
        let c = self.point_config(config, manifold, x)?;
        let f = nuclear_drive(&c, manifold)?.generalized();
        Ok(self.time_grid.times(f))
    }

    /// Total wall-clock acquisition time (s) at `repetitions` shots per point.
    pub fn measurement_time_s(&self, config: &SpinSystemConfig, repetitions: u64, timing: &SequenceTiming) -> Result<f64> {
        self.validate()?;
        let mut total_us = 0.0;
        for (_, m, _, x) in self.tasks() {
            let times = self.point_times(config, m, x)?;
            total_us += times.iter().map(|&t| timing.shot_us(t)).sum::<f64>() * repetitions as f64;
        }
        Ok(total_us * 1e-6)
    }
}

/// Simulates every point of `protocol` and reduces each noisy trace to a
/// fitted Rabi frequency. `config.a_perp` is the ground truth.
pub fn synth_sweep(
    config: &SpinSystemConfig,
    protocol: &SweepProtocol,
    readout: &ReadoutModel,
    seed: u64,
) -> Result<SweepDataset> {
    config.validate()?;
    protocol.validate()?;
    readout.validate()?;
    let points = protocol
        .tasks()
        .into_par_iter()
        .map(|(mi, m, ai, x)| {
            let c = protocol.point_config(config, m, x)?;
            let f = nuclear_drive(&c, m)?.generalized();
            let times = protocol.time_grid.times(f);
            let task_seed = derive_seed(seed, &[m.index() as u64, ai as u64, mi as u64]);
            let trace = synth_measurement(&c, m, &times, readout, task_seed)?;
            let fit = fit_detuned_rabi(&trace)?;
            Ok(SweepPoint { manifold: m, x, omega_m: fit.frequency, sigma: fit.std_error })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepDataset { b_z: config.b_z, points })
}

/// Noiseless sweep straight from the model `sqrt((k alpha sqrt2 gn B1max x)^2 + d^2)`.
pub fn model_sweep(
    config: &SpinSystemConfig,
    protocol: &SweepProtocol,
    sigma: f64,
) -> Result<SweepDataset> {
    protocol.validate()?;
    let alphas = enhancement_exact(config)?;
    let mut points = Vec::new();
    for (_, m, _, x) in protocol.tasks() {
        let rabi = SQRT_2 * config.gamma_n * protocol.b1_max * x * alphas.get(m);
        let omega_m = rabi.hypot(protocol.detunings[m.index()]);
        points.push(SweepPoint { manifold: m, x, omega_m, sigma });
    }
    Ok(SweepDataset { b_z: config.b_z, points })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Magnitude of the transverse coupling used for the two sign starts (MHz).
    pub a_perp_start: f64,
    /// Fixed relative drive calibration per manifold `[+1, 0, -1]`.
    pub scale_factors: [f64; 3],
    pub lm: LmOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { a_perp_start: 2.5, scale_factors: [1.0; 3], lm: LmOptions::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetuningEstimate {
    pub manifold: Manifold,
    /// Fitted `delta^2` (MHz^2); may be slightly negative within noise.
    pub delta_sq: f64,
    pub delta_sq_std_error: f64,
    /// `sqrt(max(delta_sq, 0))` (MHz).
    pub delta: f64,
    /// Delta-method error of `delta`; `sqrt(delta_sq_std_error)` when `delta`
    /// is not resolved from zero.
    pub delta_std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub a_perp: f64,
    pub a_perp_std_error: f64,
    pub b1_max: f64,
    pub b1_max_std_error: f64,
    pub detunings: Vec<DetuningEstimate>,
    pub scale_factors: [f64; 3],
    pub param_names: Vec<String>,
    pub covariance: Vec<Vec<f64>>,
    /// Weighted residual sum of squares.
    pub chi_square: f64,
    pub dof: usize,
    pub reduced_chi_square: f64,
    pub iterations: usize,
    /// Starting transverse coupling of the winning start (MHz).
    pub start: f64,
}

impl FitResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fit result serializes")
    }
}

struct SweepModel<'a> {
    config: SpinSystemConfig,
    points: &'a [SweepPoint],
    manifolds: Vec<Manifold>,
    scale_factors: [f64; 3],
    omega_sq_scale: Vec<f64>,
}

impl SweepModel<'_> {
    fn slot(&self, m: Manifold) -> usize {
        self.manifolds.iter().position(|&x| x == m).expect("manifold present")
    }

    fn predict(&self, p: &[f64]) -> Option<Vec<f64>> {
        let alphas = enhancement_exact(&self.config.with_a_perp(p[0])).ok()?;
        let bare = SQRT_2 * self.config.gamma_n * p[1];
        Some(
            self.points
                .iter()
                .map(|pt| {
                    let rabi = self.scale_factors[pt.manifold.index()] * alphas.get(pt.manifold) * bare * pt.x;
                    let s = p[2 + self.slot(pt.manifold)];
                    (rabi * rabi + s).max(0.0).sqrt()
                })
                .collect(),
        )
    }
}

impl LeastSquares for SweepModel<'_> {
    fn residuals(&self, p: &[f64]) -> Vec<f64> {
        match self.predict(p) {
            Some(pred) => pred.iter().zip(self.points).map(|(m, pt)| (m - pt.omega_m) / pt.sigma).collect(),
            None => vec![f64::INFINITY; self.points.len()],
        }
    }

    fn param_scales(&self, p: &[f64]) -> Vec<f64> {
        let mut out = vec![p[0].abs().max(1.0), p[1].abs().max(1.0)];
        out.extend(p[2..].iter().zip(&self.omega_sq_scale).map(|(s, sc)| s.abs().max(*sc)));
        out
    }
}

/// Weighted fit of the amplitude sweep for the transverse hyperfine coupling,
/// the full-scale RF amplitude and one squared detuning per manifold.
///
/// `config` supplies every constant except `a_perp`. Starts at `+-a_perp_start`
/// and keeps the lower chi-square.
pub fn fit_transverse_hyperfine(
    data: &SweepDataset,
    config: &SpinSystemConfig,
    options: &FitOptions,
) -> Result<FitResult> {
    data.validate()?;
    let config = config.with_field(data.b_z);
    config.validate()?;
    let groups = data.by_manifold();
    if groups.len() < 2 {
        return Err(Error::RankDeficient(
            "data from a single manifold cannot separate A_perp from the RF amplitude".into(),
        ));
    }
    for (m, pts) in &groups {
        let mut xs: Vec<f64> = pts.iter().map(|p| p.x).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        if xs.len() < 3 {
            return Err(Error::InsufficientData(format!("manifold {m} has {} distinct amplitudes; need 3", xs.len())));
        }
    }
    let manifolds: Vec<Manifold> = groups.keys().copied().collect();
    let omega_sq_scale = manifolds
        .iter()
        .map(|m| {
            let pts = &groups[m];
            pts.iter().map(|p| p.omega_m * p.omega_m).sum::<f64>() / pts.len() as f64
        })
        .collect();
    let model = SweepModel {
        config,
        points: &data.points,
        manifolds: manifolds.clone(),
        scale_factors: options.scale_factors,
        omega_sq_scale,
    };

    let mut best: Option<(lsq::LmSolution, f64)> = None;
    let mut best_any: Option<(lsq::LmSolution, f64)> = None;
    for sign in [-1.0, 1.0] {
        let a0 = sign * options.a_perp_start.abs();
        let alphas = enhancement_exact(&config.with_a_perp(a0))?;
        let mut ratios: Vec<f64> = data
            .points
            .iter()
            .map(|p| {
                let per_gauss = (options.scale_factors[p.manifold.index()] * alphas.get(p.manifold) * SQRT_2 * config.gamma_n * p.x).abs();
                p.omega_m / per_gauss
            })
            .collect();
        ratios.sort_by(f64::total_cmp);
        let b0 = ratios[ratios.len() / 2];
        let mut x0 = vec![a0, b0];
        x0.extend(std::iter::repeat(0.0).take(manifolds.len()));
        let sol = lsq::minimize(&model, &x0, &options.lm);
        let slot = if sol.converged { &mut best } else { &mut best_any };
        if slot.as_ref().map_or(true, |(b, _)| sol.cost < b.cost) {
            *slot = Some((sol, a0));
        }
    }
    let (sol, start) = match best {
        Some(b) => b,
        None => {
            let (s, a0) = best_any.expect("two starts were tried");
            return Err(Error::NonConvergence { iterations: s.iterations, cost: s.cost, start: format!("A_perp = {a0} MHz") });
        }
    };
    let cov = lsq::covariance(&sol.jacobian, 1e-12)?;
    let se = |i: usize| cov[(i, i)].max(0.0).sqrt();
    let detunings = manifolds
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let s = sol.params[2 + k];
            let s_se = se(2 + k);
            let delta = s.max(0.0).sqrt();
            let delta_std_error = if delta > s_se.sqrt() { s_se / (2.0 * delta) } else { s_se.sqrt() };
            DetuningEstimate { manifold: m, delta_sq: s, delta_sq_std_error: s_se, delta, delta_std_error }
        })
        .collect();
    let n_params = sol.params.len();
    let dof = data.points.len().saturating_sub(n_params);
    let mut param_names = vec!["a_perp".to_string(), "b1_max".to_string()];
    param_names.extend(manifolds.iter().map(|m| format!("delta_sq[{m}]")));
    Ok(FitResult {
        a_perp: sol.params[0],
        a_perp_std_error: se(0),
        b1_max: sol.params[1].abs(),
        b1_max_std_error: se(1),
        detunings,
        scale_factors: options.scale_factors,
        param_names,
        covariance: (0..n_params).map(|i| (0..n_params).map(|j| cov[(i, j)]).collect()).collect(),
        chi_square: sol.cost,
        dof,
        reduced_chi_square: if dof > 0 { sol.cost / dof as f64 } else { f64::NAN },
        iterations: sol.iterations,
        start,
    })
}

/// One acquisition strategy of the precision study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub repetitions: u64,
    /// Number of relative amplitudes, spaced `k / n`.
    pub amplitudes: usize,
    pub time_grid: TimeGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySettings {
    pub b1_max: f64,
    pub manifolds: Vec<Manifold>,
    pub detunings: [f64; 3],
    /// Monte-Carlo datasets per strategy.
    pub seeds: usize,
    pub timing: SequenceTiming,
    pub fit: FitOptions,
}

impl Default for StudySettings {
    fn default() -> Self {
        Self {
            b1_max: 10.0,
            manifolds: Manifold::ALL.to_vec(),
            detunings: [0.0; 3],
            seeds: 50,
            timing: SequenceTiming::default(),
            fit: FitOptions::default(),
        }
    }
}

impl StudySettings {
    pub fn protocol(&self, strategy: &Strategy) -> SweepProtocol {
        SweepProtocol {
            b1_max: self.b1_max,
            amplitudes: uniform_amplitudes(strategy.amplitudes),
            manifolds: self.manifolds.clone(),
            time_grid: strategy.time_grid,
            detunings: self.detunings,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyOutcome {
    pub strategy: Strategy,
    /// Total acquisition time of one dataset (s).
    pub measurement_time_s: f64,
    /// Monte-Carlo spread of the estimates (MHz).
    pub sigma_a_perp: f64,
    pub mean_a_perp: f64,
    /// Mean of the per-fit reported standard errors (MHz).
    pub mean_reported_std_error: f64,
    pub failure_rate: f64,
    /// More than 20 % of the fits failed.
    pub flagged: bool,
    /// No cheaper strategy reaches a smaller spread.
    pub on_frontier: bool,
}

/// Monte-Carlo estimate of sigma(A_perp) and acquisition time for each strategy.
/// Rows are returned in input order.
pub fn precision_study(
    strategies: &[Strategy],
    config: &SpinSystemConfig,
    readout: &ReadoutModel,
    settings: &StudySettings,
    master_seed: u64,
) -> Result<Vec<StrategyOutcome>> {
    if strategies.is_empty() {
        return Err(Error::InsufficientData("strategy list is empty".into()));
    }
    if settings.seeds < 2 {
        return Err(Error::InvalidConfig("precision study needs at least 2 seeds".into()));
    }
    let mut rows = Vec::with_capacity(strategies.len());
    for (si, strategy) in strategies.iter().enumerate() {
        let protocol = settings.protocol(strategy);
        let readout = ReadoutModel { repetitions: strategy.repetitions, ..*readout };
        let time = protocol.measurement_time_s(config, strategy.repetitions, &settings.timing)?;
        let fits: Vec<Option<FitResult>> = (0..settings.seeds)
            .into_par_iter()
            .map(|k| {
                let seed = derive_seed(master_seed, &[si as u64, k as u64]);
                synth_sweep(config, &protocol, &readout, seed)
                    .and_then(|d| fit_transverse_hyperfine(&d, config, &settings.fit))
                    .ok()
            })
            .collect();
        let ok: Vec<&FitResult> = fits.iter().flatten().collect();
        let failure_rate = 1.0 - ok.len() as f64 / settings.seeds as f64;
        let (mean, sigma, reported) = if ok.len() >= 2 {
            let n = ok.len() as f64;
            let mean = ok.iter().map(|f| f.a_perp).sum::<f64>() / n;
            let var = ok.iter().map(|f| (f.a_perp - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let rep = ok.iter().map(|f| f.a_perp_std_error).sum::<f64>() / n;
            (mean, var.sqrt(), rep)
        } else {
            (f64::NAN, f64::NAN, f64::NAN)
        };
        rows.push(StrategyOutcome {
            strategy: *strategy,
            measurement_time_s: time,
            sigma_a_perp: sigma,
            mean_a_perp: mean,
            mean_reported_std_error: reported,
            failure_rate,
            flagged: failure_rate > 0.2,
            on_frontier: false,
        });
    }
    mark_frontier(&mut rows);
    Ok(rows)
}

fn mark_frontier(rows: &mut [StrategyOutcome]) {
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| rows[a].measurement_time_s.total_cmp(&rows[b].measurement_time_s));
    let mut best = f64::INFINITY;
    for i in order {
        let s = rows[i].sigma_a_perp;
        if !rows[i].flagged && s.is_finite() && s < best {
            best = s;
            rows[i].on_frontier = true;
        }
    }
}

/// Writes the study as CSV, one row per strategy in input order.
pub fn write_frontier_csv<W: Write>(rows: &[StrategyOutcome], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "repetitions",
        "amplitudes",
        "points",
        "periods",
        "measurement_time_s",
        "sigma_a_perp_mhz",
        "mean_a_perp_mhz",
        "mean_reported_std_error_mhz",
        "failure_rate",
        "flagged",
        "on_frontier",
    ])?;
    for r in rows {
        w.write_record([
            r.strategy.repetitions.to_string(),
            r.strategy.amplitudes.to_string(),
            r.strategy.time_grid.points.to_string(),
            format!("{}", r.strategy.time_grid.periods),
            format!("{:.9e}", r.measurement_time_s),
            format!("{:.9e}", r.sigma_a_perp),
            format!("{:.9e}", r.mean_a_perp),
            format!("{:.9e}", r.mean_reported_std_error),
            format!("{:.4}", r.failure_rate),
            r.flagged.to_string(),
            r.on_frontier.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct StrategyRow {
    repetitions: u64,
    amplitudes: usize,
    points: usize,
    periods: f64,
}

/// Reads strategies from CSV `repetitions,amplitudes,points,periods`.
pub fn read_strategies_csv<R: Read>(input: R) -> Result<Vec<Strategy>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut out = Vec::new();
    for row in r.deserialize::<StrategyRow>() {
        let row = row?;
        if row.repetitions == 0 || row.amplitudes == 0 || row.points < 2 || !(row.periods > 0.0) {
            return Err(Error::InvalidConfig(format!("invalid strategy row {row:?}")));
        }
        out.push(Strategy {
            repetitions: row.repetitions,
            amplitudes: row.amplitudes,
            time_grid: TimeGrid { periods: row.periods, points: row.points },
        });
    }
    if out.is_empty() {
        return Err(Error::InsufficientData("strategy file has no rows".into()));
    }
    Ok(out)
}
