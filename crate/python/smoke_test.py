"""Quick end-to-end check of the pynvspin extension module."""

import math

import pynvspin as nv


def main():
    cfg = nv.SpinSystemConfig()
    a_p1, a_0, a_m1 = nv.enhancement(cfg)
    assert abs(abs(a_0) / 16 - 1) < 0.05 and abs(abs(a_p1) / 9 - 1) < 0.05, (a_p1, a_0, a_m1)
    print(f"zero field: alpha = ({a_p1:.3f}, {a_0:.3f}, {a_m1:.3f})")

    c509 = cfg.with_field(509.0)
    approx = nv.enhancement(c509, "first-order")
    exact = nv.enhancement(c509, "exact")
    assert all(abs(a / e - 1) < 1e-3 for a, e in zip(approx, exact))

    h = nv.static_hamiltonian(c509)
    assert len(h) == 6 and all(abs(h[i][j] - h[j][i].conjugate()) < 1e-12 for i in range(6) for j in range(6))

    driven = cfg.with_field(450.0).resonant(-1)
    drive = nv.nuclear_drive(driven, -1)
    period = 1.0 / drive["generalized"]
    times = [3 * period * k / 99 for k in range(100)]
    pop = nv.rabi_trace(driven, -1, times)
    fit = nv.fit_cosine(times, pop)
    assert abs(fit["frequency"] / abs(drive["rabi"]) - 1) < 1e-9
    print(f"450 G, m_s=-1: Rabi {1e3 * fit['frequency']:.2f} kHz")

    rows = nv.synth_sweep(c509, seed=1)
    report = nv.fit_transverse_hyperfine(rows, c509)
    assert abs(report["a_perp"] + 2.62) < 4 * report["a_perp_std_error"], report
    print(f"509 G sweep: A_perp = {report['a_perp']:.3f} +- {report['a_perp_std_error']:.3f} MHz")

    try:
        nv.fit_transverse_hyperfine([r for r in rows if r[0] == "0"], c509)
    except RuntimeError as err:
        assert "rank-deficient" in str(err)
    else:
        raise AssertionError("single-manifold fit should fail")

    cfg.b_z = 12.5
    assert math.isclose(cfg.b_z, 12.5)
    print("smoke test passed")


if __name__ == "__main__":
    main()
