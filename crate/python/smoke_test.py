"""Smoke test for the anderson_lab Python bindings.

Build and install first:  pip install -e crates/python --no-build-isolation
"""

import math
import tempfile
from pathlib import Path

import anderson_lab as al


def close(a, b, rel):
    return abs(a - b) <= rel * abs(b)


def main():
    square = al.Domain.unit_square()
    assert square.area == 1.0 and square.perimeter == 4.0
    assert square.contains(0.5, 0.5) and not square.contains(1.5, 0.5)
    assert close(square.signed_distance(0.5, 0.25), 0.25, 1e-12)

    # Heat trace against its small-t expansion.
    model = al.SpectralModel.rectangle(1.0, 1.0, 1e-3)
    t0 = model.heat_trace(1e-3)
    asym = al.smooth_trace_asymptotic(1.0, 4.0, 1e-3) + al.corner_constant([math.pi / 2] * 4)
    assert close(t0, asym, 5e-3), (t0, asym)
    try:
        model.heat_trace(1e-6)
    except al.AndersonLabError:
        pass
    else:
        raise AssertionError("heat_trace below t_min must raise")

    # Paths and local times.
    t, eps = 0.05, 1e-3
    b1 = al.sample_bridge(1.0, 256, seed=5)
    bt = al.sample_bridge(t, 256, seed=5, start=(0.5, 0.5))
    lhs = al.approx_silt(bt, 1e-4)
    rhs = t * al.approx_silt(b1, 1e-4 / t)
    assert close(lhs, rhs, 1e-12)
    assert len(bt) == 257 and bt.positions[0] == (0.5, 0.5) == bt.positions[-1]
    a, b = al.sample_motion(t, 128, seed=1), al.sample_motion(t, 128, seed=2)
    assert al.approx_milt(a, b, eps) == al.approx_milt(b, a, eps)
    closed = ((t + eps) * math.log(1 + t / eps) - t) / (2 * math.pi)
    assert close(al.silt_mean_exact("motion", t, eps), closed, 1e-12)
    raw, mean, ren = al.renormalized_silt(bt, eps)
    assert ren == raw - mean

    # Feynman-Kac: kappa = 0 with control variate collapses to T0.
    est = al.estimate("trace_mean", square, 0.0, 0.02, n_outer=200, model=model)
    assert est["value"] == model.heat_trace(0.02) and est["std_error"] == 0.0
    est = al.estimate("trace_mean", square, 1.0, 0.02, n_outer=500, n_steps=128, eps_rule="resolution", seed=3, model=model)
    assert est["value"] < model.heat_trace(0.02)

    # Recovery from the exact series.
    fine = al.SpectralModel.rectangle(1.0, 1.0, 1e-5)
    series = [(s, fine.heat_trace(s), 0.0) for s in (1e-3, 1e-4, 1e-5)]
    area, _ = al.recover_area(series)
    perimeter, _ = al.recover_perimeter(series, 1.0)
    assert close(area, 1.0, 0.01) and close(perimeter, 4.0, 0.01)
    d = math.log(4) / math.log(3)
    mass = [(s, 2.0 - s ** (1 - d / 2), 0.0) for s in (1e-2, 1e-3, 1e-4)]
    fit, _ = al.recover_minkowski(mass, 2.0)
    assert abs(fit - d) < 1e-10

    # The CLI entry point.
    with tempfile.TemporaryDirectory() as tmp:
        cfg = Path(tmp) / "recover.toml"
        cfg.write_text(
            '[domain]\nkind = "rectangle"\nwidth = 1.0\nheight = 1.0\n'
            '[recover]\nsource = "spectral"\nestimators = ["area", "perimeter"]\nt = [1e-3, 1e-4]\n'
        )
        code, files = al.run_experiment("recover", str(cfg), out=tmp, workers=1)
        assert code == 0 and Path(files[0]).read_text().startswith("# schema=anderson-lab/v1")

    print("smoke test passed")


if __name__ == "__main__":
    main()
