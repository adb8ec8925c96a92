//! Dense operators over the two-spin Hilbert space and single-spin matrices.

use std::fmt;

use nalgebra::{DMatrix, DVector};
pub use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Electron spin projection selecting one of the three NV manifolds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Manifold {
    #[serde(rename = "+1")]
    Plus,
    #[serde(rename = "0")]
    Zero,
    #[serde(rename = "-1")]
    Minus,
}

impl Manifold {
    pub const ALL: [Manifold; 3] = [Manifold::Plus, Manifold::Zero, Manifold::Minus];

    pub fn m_s(self) -> i8 {
        match self {
            Manifold::Plus => 1,
            Manifold::Zero => 0,
            Manifold::Minus => -1,
        }
    }

    pub fn from_m_s(m_s: i64) -> Option<Self> {
        match m_s {
            1 => Some(Manifold::Plus),
            0 => Some(Manifold::Zero),
            -1 => Some(Manifold::Minus),
            _ => None,
        }
    }

    /// Position in `ALL`.
    pub fn index(self) -> usize {
        match self {
            Manifold::Plus => 0,
            Manifold::Zero => 1,
            Manifold::Minus => 2,
        }
    }
}

impl fmt::Display for Manifold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Manifold::Plus => write!(f, "+1"),
            Manifold::Zero => write!(f, "0"),
            Manifold::Minus => write!(f, "-1"),
        }
    }
}

impl std::str::FromStr for Manifold {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "+1" | "1" | "p1" | "plus" => Ok(Manifold::Plus),
            "0" | "zero" => Ok(Manifold::Zero),
            "-1" | "m1" | "minus" => Ok(Manifold::Minus),
            other => Err(format!("unknown manifold {other:?}; expected +1, 0 or -1")),
        }
    }
}

/// Bare product state `|m_s, m_I>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisLabel {
    pub m_s: i8,
    pub m_i: i8,
}

impl BasisLabel {
    pub const fn new(m_s: i8, m_i: i8) -> Self {
        Self { m_s, m_i }
    }
}

impl fmt::Display for BasisLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|{:+},{:+}>", self.m_s, self.m_i)
    }
}

/// Which two-spin Hilbert space an operator lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    /// Electron spin-1 with the nuclear spin restricted to `m_I in {+1, 0}` (dim 6).
    Reduced,
    /// Electron spin-1 with the full nuclear spin-1 (dim 9).
    Full,
}

impl Model {
    pub fn nuclear_levels(self) -> &'static [i8] {
        match self {
            Model::Reduced => &[1, 0],
            Model::Full => &[1, 0, -1],
        }
    }

    pub fn dim(self) -> usize {
        3 * self.nuclear_levels().len()
    }

    /// Basis ordered `(m_s = +1, 0, -1) x (m_I descending)`.
    pub fn basis(self) -> Vec<BasisLabel> {
        let mut out = Vec::with_capacity(self.dim());
        for m_s in [1, 0, -1] {
            for &m_i in self.nuclear_levels() {
                out.push(BasisLabel::new(m_s, m_i));
            }
        }
        out
    }

    pub fn index_of(self, label: BasisLabel) -> Option<usize> {
        let s = match label.m_s {
            1 => 0,
            0 => 1,
            -1 => 2,
            _ => return None,
        };
        let levels = self.nuclear_levels();
        let i = levels.iter().position(|&m| m == label.m_i)?;
        Some(s * levels.len() + i)
    }
}

/// Dense complex matrix tagged with its basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    model: Model,
    matrix: CMatrix,
}

impl Operator {
    pub fn new(model: Model, matrix: CMatrix) -> Self {
        assert_eq!(matrix.nrows(), model.dim(), "operator dimension mismatch");
        assert_eq!(matrix.ncols(), model.dim(), "operator dimension mismatch");
        Self { model, matrix }
    }

    pub fn zeros(model: Model) -> Self {
        Self::new(model, CMatrix::zeros(model.dim(), model.dim()))
    }

    pub fn identity(model: Model) -> Self {
        Self::new(model, CMatrix::identity(model.dim(), model.dim()))
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn basis(&self) -> Vec<BasisLabel> {
        self.model.basis()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    /// Matrix element `<row|O|col>`.
    pub fn element(&self, row: BasisLabel, col: BasisLabel) -> C64 {
        let r = self.model.index_of(row).expect("row label not in basis");
        let c = self.model.index_of(col).expect("column label not in basis");
        self.matrix[(r, c)]
    }

    pub fn adjoint(&self) -> Self {
        Self::new(self.model, self.matrix.adjoint())
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self::new(self.model, self.matrix.map(|z| z * factor))
    }

    pub fn add(&self, other: &Operator) -> Self {
        assert_eq!(self.model, other.model);
        Self::new(self.model, &self.matrix + &other.matrix)
    }

    pub fn mul(&self, other: &Operator) -> Self {
        assert_eq!(self.model, other.model);
        Self::new(self.model, &self.matrix * &other.matrix)
    }

    pub fn max_abs(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest element of `|H - H^dagger|`.
    pub fn hermiticity_error(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Hermitian within `rel_tol` of the largest element.
    pub fn is_hermitian(&self, rel_tol: f64) -> bool {
        self.hermiticity_error() <= rel_tol * self.max_abs().max(f64::MIN_POSITIVE)
    }

    /// Largest element of `|U^dagger U - 1|`.
    pub fn unitarity_error(&self) -> f64 {
        unitarity_error(&self.matrix)
    }
}

pub(crate) fn unitarity_error(u: &CMatrix) -> f64 {
    let n = u.nrows();
    (u.adjoint() * u - CMatrix::identity(n, n))
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Which single-spin operator set to return.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpinKind {
    /// Spin-1 on `m = +1, 0, -1`.
    Electron1,
    /// Spin-1/2 matrices acting on the nuclear pair `m_I = +1, 0`.
    NuclearReducedHalf,
    /// Spin-1 on `m_I = +1, 0, -1`.
    NuclearFull1,
}

/// Cartesian spin matrices for a single spin.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinMatrices {
    pub x: CMatrix,
    pub y: CMatrix,
    pub z: CMatrix,
}

impl SpinMatrices {
    pub fn dim(&self) -> usize {
        self.z.nrows()
    }
}

/// Standard angular-momentum matrices in the descending-`m` basis.
///
/// The reduced nuclear operators are plain spin-1/2 matrices; the `sqrt(2)`
/// prefactors of the hyperfine and drive terms are applied by the Hamiltonian
/// builders, not here.
pub fn spin_operators(kind: SpinKind) -> SpinMatrices {
    let s = match kind {
        SpinKind::Electron1 | SpinKind::NuclearFull1 => 1.0,
        SpinKind::NuclearReducedHalf => 0.5,
    };
    let n = (2.0 * s) as usize + 1;
    let m = |k: usize| s - k as f64;
    let mut plus = CMatrix::zeros(n, n);
    for k in 1..n {
        // <m+1| S+ |m> = sqrt(s(s+1) - m(m+1))
        let mk = m(k);
        plus[(k - 1, k)] = C64::new((s * (s + 1.0) - mk * (mk + 1.0)).sqrt(), 0.0);
    }
    let minus = plus.adjoint();
    let x = (&plus + &minus).map(|z| z * 0.5);
    let y = (&plus - &minus).map(|z| z * C64::new(0.0, -0.5));
    let z = CMatrix::from_diagonal(&CVector::from_iterator(n, (0..n).map(|k| C64::new(m(k), 0.0))));
    SpinMatrices { x, y, z }
}

/// Kronecker product `a (x) b`, electron factor first.
pub(crate) fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}
