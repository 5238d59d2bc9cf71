"""Smoke test for the dihedral_mra extension module.

Build and stage the module next to this script, then run it:

    cargo build --release -p dihedral-mra-py --features extension-module
    cp target/release/libdihedral_mra_py.so python/dihedral_mra.so
    python3 python/smoke_test.py
"""

import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import dihedral_mra as dm


def close(a, b, tol):
    return all(abs(u - v) <= tol for u, v in zip(a, b))


def main():
    x = dm.sample_signal(8, seed=1)
    p, q = dm.sample_distribution(8, seed=1)
    assert len(x) == 8 and abs(sum(p) + sum(q) - 1.0) < 1e-12

    assert close(dm.act(x, 0), x, 0.0)
    assert close(dm.act(dm.act(x, 3, True), 3, True), x, 1e-15)

    m1, m2 = dm.analytic_moments(x, p, q)
    fit = dm.invert(m1, m2)
    assert fit["candidates"] <= 16
    assert dm.relative_error(fit["x"], x) < 1e-6, fit

    obs = dm.Observations.generate(x, p, q, n=2000, sigma=0.2, seed=2)
    assert len(obs) == 2000 and obs.signal_len == 8
    assert obs.true_signal == x
    assert abs(dm.estimate_sigma2(obs) - 0.04) < 0.01

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "obs.bin")
        obs.save(path)
        again = dm.Observations.load(path)
        assert again.rows() == obs.rows()

    for method in ("em", "mom", "sync"):
        est = dm.estimate(obs, method, seed=3)
        err = dm.relative_error(est["x"], x)
        assert err < 0.2, (method, err)

    records = dm.run_sweep([1.0, 10.0], n=300, length=6, trials=2, methods=["em", "mom"], seed=5)
    assert len(records) == 8
    assert all(r["status"] == "ok" for r in records)

    try:
        dm.estimate(obs, "nope")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown method accepted")

    print("python smoke test passed")


if __name__ == "__main__":
    main()
