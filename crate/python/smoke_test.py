"""Smoke test for the spfun Python extension.

Build and install first:
    pip install --no-build-isolation ./crates/py
"""

import math
import pathlib
import tempfile

import spfun

ROOT = pathlib.Path(__file__).resolve().parent.parent


def main():
    gamma_s = spfun.Curve.linear(4.0)
    gamma_f = spfun.Curve.linear(1.0 / 4.41)
    ok, margin, _ = spfun.check_small_gain(gamma_f, gamma_s)
    assert ok and abs(margin - (1.0 - 4.0 / 4.41)) < 1e-9

    g = spfun.Curve.from_spec('{ kind = "power", k = 6.2, p = 0.5 }')
    assert abs(g.inverse()(g(2.0)) - 2.0) < 1e-9

    c0_max, varrho = spfun.example1_threshold()
    assert 0.45 <= c0_max <= 0.4999, c0_max

    system = spfun.System.example1(0.4)
    traj = system.simulate([3.0], [-2.0], 200.0, dt=1e-3, record_every=1000)
    assert math.hypot(traj.xs[-1][0], traj.zs[-1][0]) < 1e-3
    assert traj.to_csv().startswith("t,x_1,z_1")

    dx, dz = spfun.System.example2().rhs([0.0], [2.0])
    assert abs(dx[0] + 0.032) < 1e-15 and dz[0] == -1.0

    summary = spfun.source_seeking_default()
    assert summary["remains_last_quarter"] == 1.0

    report = spfun.check_config(str(ROOT / "configs" / "example2.cfg"))
    assert "pass: true" in report

    with tempfile.TemporaryDirectory() as out:
        assert spfun.run_config(str(ROOT / "configs" / "custom.cfg"), out) == 0
        assert (pathlib.Path(out) / "traj_000.csv").exists()

    print(f"spfun {spfun.__version__}: smoke test passed (c0_max = {c0_max:.4f} at varrho = {varrho})")


if __name__ == "__main__":
    main()
