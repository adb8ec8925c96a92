//! Zero-quantum mixing, labeled diagonalization and Rabi enhancement factors.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::config::SpinSystemConfig;
use crate::error::{Error, Result};
use crate::hamiltonian::{build_full_spin1, build_static, drive_operator, full_drive_operator};
use crate::operator::{BasisLabel, CMatrix, CVector, Manifold, Model, Operator, C64};

/// Smallest admissible |denominator| (MHz) of the first-order expressions.
pub const DEGENERACY_THRESHOLD: f64 = 1e-6;

/// Energy gap `|+1,0> - |0,+1>` of the upper zero-quantum pair.
pub fn zq_denominator_plus(c: &SpinSystemConfig) -> f64 {
    c.delta + c.gamma_e * c.b_z - c.gamma_n * c.b_z - c.q_quad
}

/// Energy gap `|-1,+1> - |0,0>` of the lower zero-quantum pair.
pub fn zq_denominator_minus(c: &SpinSystemConfig) -> f64 {
    c.delta - c.gamma_e * c.b_z - c.a_par + c.gamma_n * c.b_z + c.q_quad
}

fn checked_denominators(c: &SpinSystemConfig) -> Result<(f64, f64)> {
    let plus = zq_denominator_plus(c);
    let minus = zq_denominator_minus(c);
    if plus.abs() < DEGENERACY_THRESHOLD {
        return Err(Error::DegenerateDenominator { which: "upper zero-quantum pair", value: plus });
    }
    if minus.abs() < DEGENERACY_THRESHOLD {
        return Err(Error::DegenerateDenominator { which: "lower zero-quantum pair", value: minus });
    }
    Ok((plus, minus))
}

/// Rotation angles of the two zero-quantum subspaces (radians).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZqAngles {
    pub theta_plus: f64,
    pub theta_minus: f64,
}

impl ZqAngles {
    pub fn negate(self) -> Self {
        Self { theta_plus: -self.theta_plus, theta_minus: -self.theta_minus }
    }
}

/// Principal-branch angles from `tan 2t+ = 2A/D+` and `tan 2t- = -2A/D-`.
pub fn zq_angles(config: &SpinSystemConfig) -> Result<ZqAngles> {
    let (plus, minus) = checked_denominators(config)?;
    let a = config.a_perp;
    Ok(ZqAngles {
        theta_plus: 0.5 * (2.0 * a / plus).atan(),
        theta_minus: 0.5 * (-2.0 * a / minus).atan(),
    })
}

const ZQ_PLUS: (BasisLabel, BasisLabel) = (BasisLabel::new(1, 0), BasisLabel::new(0, 1));
const ZQ_MINUS: (BasisLabel, BasisLabel) = (BasisLabel::new(0, 0), BasisLabel::new(-1, 1));

/// The two zero-quantum pairs `(|+1,0>, |0,+1>)` and `(|0,0>, |-1,+1>)`.
pub fn zq_pairs() -> [(BasisLabel, BasisLabel); 2] {
    [ZQ_PLUS, ZQ_MINUS]
}

/// `exp(-i (sy- t- + sy+ t+))` with `sy+ = i(|+1,0><0,1| - h.c.)` and
/// `sy- = i(|0,0><-1,1| - h.c.)`. Acts as the identity outside the pairs.
///
/// `U H U^dagger` is diagonal within both pairs when the angles come from
/// [`zq_angles`].
pub fn zq_unitary(angles: ZqAngles) -> Operator {
    let model = Model::Reduced;
    let mut u = CMatrix::identity(model.dim(), model.dim());
    for ((a, b), theta) in [(ZQ_PLUS, angles.theta_plus), (ZQ_MINUS, angles.theta_minus)] {
        let ia = model.index_of(a).unwrap();
        let ib = model.index_of(b).unwrap();
        let (s, c) = theta.sin_cos();
        u[(ia, ia)] = C64::new(c, 0.0);
        u[(ib, ib)] = C64::new(c, 0.0);
        u[(ia, ib)] = C64::new(s, 0.0);
        u[(ib, ia)] = C64::new(-s, 0.0);
    }
    Operator::new(model, u)
}

/// Exact eigensystem with every eigenvector tagged by its dominant bare state.
#[derive(Debug, Clone)]
pub struct LabeledEigensystem {
    model: Model,
    /// Eigenvalues (MHz), ascending.
    pub energies: Vec<f64>,
    /// Eigenvectors as columns, in the order of `energies`.
    pub vectors: CMatrix,
    /// Dominant bare-state label of each eigenvector.
    pub labels: Vec<BasisLabel>,
    /// Squared magnitude of the dominant component of each eigenvector.
    pub dominant_weight: Vec<f64>,
}

impl LabeledEigensystem {
    pub fn model(&self) -> Model {
        self.model
    }

    pub fn position(&self, label: BasisLabel) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    /// Dressed state adiabatically connected to `label`.
    pub fn state(&self, label: BasisLabel) -> CVector {
        let k = self.position(label).expect("label not present in eigensystem");
        self.vectors.column(k).into_owned()
    }

    pub fn energy(&self, label: BasisLabel) -> f64 {
        self.energies[self.position(label).expect("label not present in eigensystem")]
    }
}

/// Diagonalizes a Hermitian operator and labels eigenvectors by maximum
/// overlap with the bare basis. Each eigenvector's largest component is made
/// real and positive.
pub fn diagonalize(h: &Operator) -> Result<LabeledEigensystem> {
    let model = h.model();
    let basis = model.basis();
    let n = h.dim();
    let eig = h.matrix().clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut energies = Vec::with_capacity(n);
    let mut vectors = CMatrix::zeros(n, n);
    let mut labels = Vec::with_capacity(n);
    let mut dominant_weight = Vec::with_capacity(n);
    let mut claimed = vec![false; n];
    for (col, &k) in order.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        let (imax, vmax) = v
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm_sqr().total_cmp(&b.1.norm_sqr()))
            .expect("nonempty eigenvector");
        if claimed[imax] {
            return Err(Error::LabelingAmbiguity(basis[imax]));
        }
        claimed[imax] = true;
        let phase = vmax.conj() / vmax.norm();
        let fixed = v.map(|z| z * phase);
        let weight = fixed[imax].norm_sqr();
        vectors.set_column(col, &fixed);
        energies.push(eig.eigenvalues[k]);
        labels.push(basis[imax]);
        dominant_weight.push(weight);
    }
    Ok(LabeledEigensystem { model, energies, vectors, labels, dominant_weight })
}

/// How an [`EnhancementSet`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnhancementMethod {
    FirstOrder,
    Exact,
    /// Exact, from the 9-level model with the full nuclear spin-1.
    ExactFull,
}

impl EnhancementMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            EnhancementMethod::FirstOrder => "first-order",
            EnhancementMethod::Exact => "exact",
            EnhancementMethod::ExactFull => "exact-full",
        }
    }
}

/// Nuclear Rabi enhancement factors of the three electron manifolds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnhancementSet {
    pub alpha_p1: f64,
    pub alpha_0: f64,
    pub alpha_m1: f64,
    pub method: EnhancementMethod,
}

impl EnhancementSet {
    pub fn get(&self, manifold: Manifold) -> f64 {
        match manifold {
            Manifold::Plus => self.alpha_p1,
            Manifold::Zero => self.alpha_0,
            Manifold::Minus => self.alpha_m1,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.alpha_p1, self.alpha_0, self.alpha_m1]
    }

    fn from_array(a: [f64; 3], method: EnhancementMethod) -> Self {
        Self { alpha_p1: a[0], alpha_0: a[1], alpha_m1: a[2], method }
    }
}

/// Closed-form enhancement factors, first order in the mixing angles.
pub fn enhancement_first_order(config: &SpinSystemConfig) -> Result<EnhancementSet> {
    let (plus, minus) = checked_denominators(config)?;
    let ratio = config.gamma_e / config.gamma_n;
    let a = config.a_perp;
    Ok(EnhancementSet {
        alpha_p1: 1.0 + ratio * a / plus,
        alpha_0: 1.0 - ratio * (a / plus + a / minus),
        alpha_m1: 1.0 + ratio * a / minus,
        method: EnhancementMethod::FirstOrder,
    })
}

fn require_nuclear_coupling(config: &SpinSystemConfig) -> Result<()> {
    if config.gamma_n == 0.0 {
        return Err(Error::InvalidConfig("gamma_n must be nonzero to define an enhancement".into()));
    }
    Ok(())
}

/// Ratio `<m,1|V|m,0>_dressed / <m,1|V|m,0>_bare` for each manifold.
fn matrix_element_ratios(eig: &LabeledEigensystem, drive: &Operator, bare: f64) -> [f64; 3] {
    Manifold::ALL.map(|m| {
        let up = eig.state(BasisLabel::new(m.m_s(), 1));
        let down = eig.state(BasisLabel::new(m.m_s(), 0));
        let element = up.dotc(&(drive.matrix() * down));
        element.re / bare
    })
}

/// Enhancement factors from exact diagonalization of the reduced model.
pub fn enhancement_exact(config: &SpinSystemConfig) -> Result<EnhancementSet> {
    require_nuclear_coupling(config)?;
    let eig = diagonalize(&build_static(config))?;
    // bare <m,1| sqrt2 gn Ix |m,0> with spin-1/2 Ix
    let bare = SQRT_2 * config.gamma_n * 0.5;
    let a = matrix_element_ratios(&eig, &drive_operator(config), bare);
    Ok(EnhancementSet::from_array(a, EnhancementMethod::Exact))
}

/// Enhancement factors from the 9-level model (nuclear spin-1 with `m_I = -1`).
pub fn enhancement_full_model(config: &SpinSystemConfig) -> Result<EnhancementSet> {
    require_nuclear_coupling(config)?;
    let eig = diagonalize(&build_full_spin1(config))?;
    // bare <m,1| gn Ix |m,0> with spin-1 Ix
    let bare = config.gamma_n / SQRT_2;
    let a = matrix_element_ratios(&eig, &full_drive_operator(config), bare);
    Ok(EnhancementSet::from_array(a, EnhancementMethod::ExactFull))
}

/// Bare nuclear Rabi frequency `sqrt(2) gn B1` (MHz) of the drive at amplitude `b1`.
///
/// Twice the rotating-frame coupling `<1|B1 sqrt(2) gn Ix|0>`.
pub fn bare_rabi_frequency(config: &SpinSystemConfig, b1: f64) -> f64 {
    SQRT_2 * config.gamma_n * b1
}

/// Effective nuclear Rabi frequency `|sqrt(2) gn B1 alpha|` (MHz) at the config's `b1`.
pub fn effective_rabi_frequency(config: &SpinSystemConfig, alpha: f64) -> f64 {
    (bare_rabi_frequency(config, config.b1) * alpha).abs()
}

/// Dressed nuclear transition frequency `|E(m,1) - E(m,0)|` (MHz).
pub fn nuclear_resonance(config: &SpinSystemConfig, manifold: Manifold) -> Result<f64> {
    let eig = diagonalize(&build_static(config))?;
    Ok(nuclear_resonance_from(&eig, manifold))
}

pub(crate) fn nuclear_resonance_from(eig: &LabeledEigensystem, manifold: Manifold) -> f64 {
    let up = eig.energy(BasisLabel::new(manifold.m_s(), 1));
    let down = eig.energy(BasisLabel::new(manifold.m_s(), 0));
    (up - down).abs()
}
