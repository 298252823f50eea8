"""Smoke test for the statfem_py extension: bar prior, synthetic data, inference."""

import json
import math
import pathlib
import sys
import tempfile

import statfem_py as sf

ROOT = pathlib.Path(__file__).resolve().parent.parent


def main() -> int:
    mesh = sf.Mesh.bar(100.0, 20.0, 32, 800.0)
    u = mesh.solve(200.0)
    assert abs(u[-1] - 20.0) < 1e-9, u[-1]
    assert sf.Mesh.parse(mesh.to_text()).n_nodes == mesh.n_nodes

    sc = sf.Scenario.read(ROOT / "configs" / "bar_homogeneous.json")
    prior = sc.prior("LE")
    assert prior.n_dof == mesh.n_dof
    again = sf.PCExpansion.from_json(prior.to_json())
    assert again.mean() == prior.mean()

    obs = sc.observations()
    assert obs.n_reads == 100 and obs.n_rows == 33

    nll = sf.marginal_nll(prior, sc.mesh(), obs, 0.7, 0.9, 2.0)
    assert math.isfinite(nll)

    res = sf.infer(prior, sc.mesh(), obs, seed=42)
    rho, sigma_d, l_d = res["hyperparameters"]
    for est, true in ((rho, 0.7), (sigma_d, 0.9), (l_d, 2.0)):
        assert abs(est - true) / true < 0.2, res["hyperparameters"]
    assert res["neg_log_marginal"][0] <= nll + 1e-9

    mean, std, z = sf.posterior(prior, sc.mesh(), obs, rho, sigma_d, l_d)
    assert len(mean) == mesh.n_dof and len(z) == obs.n_rows
    assert all(s <= p + 1e-12 for s, p in zip(std, [abs(rho) * v for v in prior.std()]))

    try:
        sf.Scenario.from_json(json.dumps({"name": "x", "kind": "bar_homogeneous", "seed": 1, "colour": 1}))
    except ValueError as e:
        assert "colour" in str(e)
    else:
        raise AssertionError("unknown field accepted")

    with tempfile.TemporaryDirectory() as tmp:
        scalars = sc.run(out=tmp)
        assert scalars["n100.rel_error"] < scalars["n1.rel_error"]
        assert sf.verify(tmp)

    print(f"ok: rho={rho:.4f} sigma_d={sigma_d:.4f} l_d={l_d:.4f} rmse={res['rmse'][0]:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
