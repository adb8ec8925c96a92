//! Hamiltonian builders for the reduced (6-dim) and full (9-dim) models.
//!
//! All operators are in MHz. Time-dependent terms take `t` in microseconds
//! and use `cos(2 pi omega_rf t)`.

use std::f64::consts::{PI, SQRT_2};

use crate::config::SpinSystemConfig;
use crate::operator::{kron, spin_operators, CMatrix, Model, Operator, SpinKind};

struct TwoSpin {
    sx: CMatrix,
    sy: CMatrix,
    sz: CMatrix,
    ix: CMatrix,
    iy: CMatrix,
    iz: CMatrix,
}

impl TwoSpin {
    fn new(model: Model) -> Self {
        let e = spin_operators(SpinKind::Electron1);
        let n = match model {
            Model::Reduced => spin_operators(SpinKind::NuclearReducedHalf),
            Model::Full => spin_operators(SpinKind::NuclearFull1),
        };
        let ie = CMatrix::identity(3, 3);
        let inuc = CMatrix::identity(n.dim(), n.dim());
        Self {
            sx: kron(&e.x, &inuc),
            sy: kron(&e.y, &inuc),
            sz: kron(&e.z, &inuc),
            ix: kron(&ie, &n.x),
            iy: kron(&ie, &n.y),
            iz: kron(&ie, &n.z),
        }
    }
}

fn scaled(m: &CMatrix, f: f64) -> CMatrix {
    m.map(|z| z * f)
}

/// Secular part: `D Sz^2 + (ge Bz + A_par/2) Sz + (Q + gn Bz) Iz + A_par Sz Iz`.
pub fn build_secular(config: &SpinSystemConfig) -> Operator {
    let o = TwoSpin::new(Model::Reduced);
    let c = config;
    let sz2 = &o.sz * &o.sz;
    let m = scaled(&sz2, c.delta)
        + scaled(&o.sz, c.gamma_e * c.b_z + c.a_par / 2.0)
        + scaled(&o.iz, c.q_quad + c.gamma_n * c.b_z)
        + scaled(&(&o.sz * &o.iz), c.a_par);
    Operator::new(Model::Reduced, m)
}

/// Flip-flop term `sqrt(2) A_perp (Sx Ix + Sy Iy)`.
pub fn build_nonsecular(config: &SpinSystemConfig) -> Operator {
    let o = TwoSpin::new(Model::Reduced);
    let m = scaled(&(&o.sx * &o.ix + &o.sy * &o.iy), SQRT_2 * config.a_perp);
    Operator::new(Model::Reduced, m)
}

/// Static Hamiltonian `H_par + H_perp`.
pub fn build_static(config: &SpinSystemConfig) -> Operator {
    build_secular(config).add(&build_nonsecular(config))
}

/// Drive coupling `ge Sx + sqrt(2) gn Ix` per gauss of RF field.
pub fn drive_operator(config: &SpinSystemConfig) -> Operator {
    let o = TwoSpin::new(Model::Reduced);
    let m = scaled(&o.sx, config.gamma_e) + scaled(&o.ix, SQRT_2 * config.gamma_n);
    Operator::new(Model::Reduced, m)
}

/// Lab-frame drive `2 B1 cos(2 pi w t) (ge Sx + sqrt(2) gn Ix)`.
pub fn build_rf(config: &SpinSystemConfig, t: f64) -> Operator {
    drive_operator(config).scale(rf_envelope(config, t))
}

/// Scalar prefactor `2 B1 cos(2 pi w t)` of the lab-frame drive.
pub fn rf_envelope(config: &SpinSystemConfig, t: f64) -> f64 {
    2.0 * config.b1 * (2.0 * PI * config.omega_rf * t).cos()
}

/// Rotating-wave drive `B1 (ge Sx + sqrt(2) gn Ix)`.
pub fn build_rf_rwa(config: &SpinSystemConfig) -> Operator {
    drive_operator(config).scale(config.b1)
}

/// Full spin-1 x spin-1 model with quadrupole `Q Iz^2` and hyperfine
/// `A_par Sz Iz + A_perp (Sx Ix + Sy Iy)`.
pub fn build_full_spin1(config: &SpinSystemConfig) -> Operator {
    let o = TwoSpin::new(Model::Full);
    let c = config;
    let m = scaled(&(&o.sz * &o.sz), c.delta)
        + scaled(&o.sz, c.gamma_e * c.b_z)
        + scaled(&(&o.iz * &o.iz), c.q_quad)
        + scaled(&o.iz, c.gamma_n * c.b_z)
        + scaled(&(&o.sz * &o.iz), c.a_par)
        + scaled(&(&o.sx * &o.ix + &o.sy * &o.iy), c.a_perp);
    Operator::new(Model::Full, m)
}

/// Drive coupling `ge Sx + gn Ix` of the full model (true spin-1 `Ix`).
pub fn full_drive_operator(config: &SpinSystemConfig) -> Operator {
    let o = TwoSpin::new(Model::Full);
    let m = scaled(&o.sx, config.gamma_e) + scaled(&o.ix, config.gamma_n);
    Operator::new(Model::Full, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{BasisLabel, C64};

    fn b(m_s: i8, m_i: i8) -> BasisLabel {
        BasisLabel::new(m_s, m_i)
    }

    fn nominal(b_z: f64) -> SpinSystemConfig {
        SpinSystemConfig::default().with_field(b_z)
    }

    #[test]
    fn splitting_only_config_gives_delta_on_bright_rows() {
        let c = SpinSystemConfig {
            q_quad: 0.0,
            a_par: 0.0,
            a_perp: 0.0,
            b_z: 0.0,
            ..Default::default()
        };
        let h = build_secular(&c);
        let diag: Vec<f64> = (0..6).map(|k| h.matrix()[(k, k)].re).collect();
        assert_eq!(diag, vec![2870.0, 2870.0, 0.0, 0.0, 2870.0, 2870.0]);
        assert_eq!(h.max_abs(), 2870.0);
    }

    #[test]
    fn secular_element_matches_term_by_term_sum() {
        let c = nominal(450.0);
        // m_s = +1, m_I = +1 (Iz = +1/2 in the reduced convention)
        let want = c.delta * 1.0
            + (c.gamma_e * c.b_z + c.a_par / 2.0) * 1.0
            + (c.q_quad + c.gamma_n * c.b_z) * 0.5
            + c.a_par * 1.0 * 0.5;
        let got = build_secular(&c).element(b(1, 1), b(1, 1));
        assert!((got.re - want).abs() < 1e-9, "{got} vs {want}");
        assert_eq!(got.im, 0.0);
    }

    #[test]
    fn nuclear_splitting_in_zero_manifold() {
        let c = nominal(450.0);
        let h = build_secular(&c);
        let d = h.element(b(0, 1), b(0, 1)).re - h.element(b(0, 0), b(0, 0)).re;
        assert!((d - (c.q_quad + c.gamma_n * c.b_z)).abs() < 1e-12);
    }

    #[test]
    fn secular_is_diagonal() {
        let h = build_secular(&nominal(509.0));
        for r in 0..6 {
            for col in 0..6 {
                if r != col {
                    assert_eq!(h.matrix()[(r, col)], C64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn nonsecular_vanishes_without_transverse_coupling() {
        let h = build_nonsecular(&nominal(100.0).with_a_perp(0.0));
        assert_eq!(h.max_abs(), 0.0);
    }

    #[test]
    fn nonsecular_couples_only_the_zero_quantum_pairs() {
        let c = nominal(0.0);
        let h = build_nonsecular(&c);
        let pairs = [(b(1, 0), b(0, 1)), (b(0, 0), b(-1, 1))];
        let basis = h.basis();
        for &r in &basis {
            for &col in &basis {
                let z = h.element(r, col);
                let in_pair = pairs.iter().any(|&(p, q)| (r, col) == (p, q) || (r, col) == (q, p));
                if !in_pair {
                    assert_eq!(z.norm(), 0.0, "{r} {col}");
                }
            }
        }
        // <a|Sx Ix + Sy Iy|b> from the literal single-spin entries:
        // Sx[+1,0] = 1/sqrt2, Ix[0,+1] = 1/2, Sy[+1,0] = -i/sqrt2, Iy[0,+1] = i/2.
        let sxix = (1.0 / SQRT_2) * 0.5;
        let syiy = (C64::new(0.0, -1.0 / SQRT_2) * C64::new(0.0, 0.5)).re;
        let want = SQRT_2 * c.a_perp * (sxix + syiy);
        for (p, q) in pairs {
            let z = h.element(p, q);
            assert!((z.re - want).abs() < 1e-14 && z.im.abs() < 1e-14, "{z}");
        }
        assert!((want - c.a_perp).abs() < 1e-14);
    }

    #[test]
    fn lab_drive_vanishes_at_node_and_without_field() {
        let c = nominal(450.0).with_omega_rf(5.0);
        let t_node = 0.25 / c.omega_rf;
        assert!(build_rf(&c, t_node).max_abs() < 1e-12);
        assert_eq!(build_rf(&c.with_b1(0.0), 0.3).max_abs(), 0.0);
    }

    #[test]
    fn lab_drive_at_time_zero_matches_explicit_assembly() {
        let c = nominal(450.0).with_omega_rf(5.0).with_b1(6.0);
        let h = build_rf(&c, 0.0);
        let s = 1.0 / SQRT_2;
        // ge Sx couples m_s +1<->0<->-1 at fixed m_I with 1/sqrt2.
        let e = 2.0 * c.b1 * c.gamma_e * s;
        assert!((h.element(b(1, 1), b(0, 1)).re - e).abs() < 1e-12);
        assert!((h.element(b(0, 0), b(-1, 0)).re - e).abs() < 1e-12);
        // sqrt2 gn Ix couples m_I +1<->0 at fixed m_s with 1/2.
        let n = 2.0 * c.b1 * SQRT_2 * c.gamma_n * 0.5;
        assert!((h.element(b(-1, 1), b(-1, 0)).re - n).abs() < 1e-15);
        assert_eq!(h.element(b(1, 1), b(0, 0)).norm(), 0.0);
        assert_eq!(h.element(b(1, 1), b(-1, 1)).norm(), 0.0);
    }

    #[test]
    fn rwa_drive_is_half_the_lab_drive_at_zero() {
        let c = nominal(509.0).with_omega_rf(3.0);
        let diff = build_rf(&c, 0.0).scale(0.5).add(&build_rf_rwa(&c).scale(-1.0));
        assert!(diff.max_abs() < 1e-15);
        assert_eq!(build_rf_rwa(&c.with_b1(0.0)).max_abs(), 0.0);
    }

    #[test]
    fn rwa_drive_frobenius_norm() {
        let c = nominal(450.0).with_b1(6.0);
        // Four Sx entries per nuclear level (2 levels) of ge B1/sqrt2, and two
        // Ix entries per electron level (3 levels) of sqrt2 gn B1 / 2.
        let e = c.gamma_e * c.b1 / SQRT_2;
        let n = SQRT_2 * c.gamma_n * c.b1 / 2.0;
        let want = (8.0 * e * e + 6.0 * n * n).sqrt();
        assert!((build_rf_rwa(&c).frobenius_norm() - want).abs() < 1e-12);
    }

    #[test]
    fn full_model_block_matches_reduced_diagonal_up_to_offset() {
        let c = nominal(450.0);
        let reduced = build_secular(&c);
        let full = build_full_spin1(&c.with_a_perp(0.0));
        for m_s in [1, 0, -1] {
            let offsets: Vec<f64> = [1, 0]
                .iter()
                .map(|&m_i| full.element(b(m_s, m_i), b(m_s, m_i)).re - reduced.element(b(m_s, m_i), b(m_s, m_i)).re)
                .collect();
            assert!((offsets[0] - offsets[1]).abs() < 1e-9, "m_s={m_s}: {offsets:?}");
        }
    }

    #[test]
    fn full_model_without_transverse_coupling_is_diagonal() {
        let h = build_full_spin1(&nominal(300.0).with_a_perp(0.0));
        for r in 0..9 {
            for col in 0..9 {
                if r != col {
                    assert_eq!(h.matrix()[(r, col)].norm(), 0.0);
                }
            }
        }
        let eig = h.matrix().clone().symmetric_eigen();
        assert_eq!(eig.eigenvalues.len(), 9);
    }

    #[test]
    fn all_builders_are_hermitian() {
        for b_z in [0.0, 120.0, 509.0, 1000.0] {
            let c = nominal(b_z).with_omega_rf(4.0);
            for h in [
                build_secular(&c),
                build_nonsecular(&c),
                build_rf(&c, 0.37),
                build_rf_rwa(&c),
                build_full_spin1(&c),
            ] {
                assert!(h.is_hermitian(1e-12));
            }
        }
    }
}
