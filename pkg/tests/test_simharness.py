import csv
import io
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import ndtri

from deepfrechet.dnn import MlpConfig
from deepfrechet.exceptions import InputError, ShapeError
from deepfrechet.metric_spaces import ProbGrid, Space
from deepfrechet.simharness import (
    ExperimentReport,
    distributional_params,
    gen_constant,
    gen_distributional,
    gen_network,
    gen_perturbed,
    generate,
    mspe,
    network_params,
    perturbed_params,
    run_experiment,
    vech_inverse,
)

from conftest import normal_quantiles

FAST = MlpConfig(max_epochs=40)


class TestDistributional:
    def test_reference_truth(self):
        data = gen_distributional(400, seed=3)
        rows = (data.X[:, 6] == 0) & (data.X[:, 7] == 0)
        assert rows.any()
        expected = 3.0 * ndtri(ProbGrid(101).points)
        for i in np.flatnonzero(rows):
            np.testing.assert_allclose(data.truths[i], expected, atol=1e-10, rtol=0)

    def test_params_at_reference(self):
        X = np.zeros((1, 9))
        X[0, :6] = [-0.3, 0.4, 1.5, 2.0, -9.0, 11.0]
        mu, theta = distributional_params(X)
        assert mu[0] == 0.0 and theta[0] == 3.0

    def test_predictor_ranges(self):
        X = gen_distributional(2000, seed=0).X
        assert X.shape == (2000, 9)
        assert X[:, 0].min() >= -1 and X[:, 0].max() <= 0
        assert X[:, 1].min() >= 0 and X[:, 1].max() <= 1
        assert X[:, 2].min() >= 1 and X[:, 2].max() <= 2
        assert set(np.unique(X[:, 6:])) <= {0.0, 1.0}

    @pytest.mark.slow
    def test_eta_centered_on_mu(self):
        data = gen_distributional(100_000, seed=1, samples_per=2)
        assert abs(np.mean(data.params["eta"] - data.params["mu"])) < 0.01

    def test_responses_from_samples(self):
        data = gen_distributional(5, seed=2)
        assert data.samples.shape == (5, 100)
        for row, s in zip(data.responses, data.samples):
            assert data.space.is_valid(row)
            assert row.min() >= s.min() and row.max() <= s.max()

    def test_deterministic(self):
        a, b = gen_distributional(20, seed=9), gen_distributional(20, seed=9)
        np.testing.assert_array_equal(a.X, b.X)
        np.testing.assert_array_equal(a.samples, b.samples)
        assert not np.array_equal(a.X, gen_distributional(20, seed=10).X)


class TestNetwork:
    def test_valid_objects(self):
        data = gen_network(30, m=6, seed=1)
        for row in np.vstack([data.responses, data.truths]):
            assert data.space.is_valid(row)

    def test_truth_off_diagonals(self):
        data = gen_network(10, m=5, seed=2)
        a1, a2 = network_params(data.X)
        off = ~np.eye(5, dtype=bool)
        for T, v1, v2 in zip(data.truths.reshape(-1, 5, 5), a1, a2):
            np.testing.assert_allclose(T[off], -v1 / (v1 + v2), rtol=1e-14)

    def test_beta_mean(self):
        # one response with 448*447/2 = 100128 Beta draws
        data = gen_network(1, m=448, seed=4)
        a1, a2 = network_params(data.X)
        L = data.responses[0].reshape(448, 448)
        draws = -L[np.triu_indices(448, 1)]
        assert draws.size >= 100_000
        assert abs(draws.mean() - a1[0] / (a1[0] + a2[0])) < 0.01

    def test_positive_parameters(self):
        data = gen_network(500, m=3, seed=0)
        a1, a2 = network_params(data.X)
        assert np.all(a1 > 0) and np.all(a2 > 0)

    def test_vech_inverse(self):
        L = vech_inverse([-1.0, -2.0, -3.0], 3)
        np.testing.assert_array_equal(L, [[3, -1, -2], [-1, 4, -3], [-2, -3, 5]])

    def test_bad_size(self):
        with pytest.raises(InputError):
            gen_network(5, m=1)


class TestPerturbed:
    def test_zero_nu(self):
        data = gen_perturbed(50, nu=0.0, seed=3)
        np.testing.assert_array_equal(data.params["eta"], data.params["mu"])

    def test_sigma_reference(self):
        X = np.zeros((1, 12))
        X[0, [0, 1, 3, 4, 10]] = [-0.5, 0.2, 1.3, -0.7, 0.6]
        _, sigma = perturbed_params(X)
        assert sigma[0] == pytest.approx(3 * 0.6, abs=1e-15)

    def test_nu_spreads_eta(self):
        data = gen_perturbed(4000, nu=2.0, seed=3)
        assert np.std(data.params["eta"] - data.params["mu"]) == pytest.approx(2.0, rel=0.05)

    def test_shape_and_validity(self):
        data = gen_perturbed(20, nu=1.0, seed=1)
        assert data.X.shape == (20, 12)
        assert all(data.space.is_valid(r) for r in data.truths)

    def test_deterministic(self):
        a, b = gen_perturbed(10, nu=0.5, seed=8), gen_perturbed(10, nu=0.5, seed=8)
        np.testing.assert_array_equal(a.samples, b.samples)

    def test_negative_nu(self):
        with pytest.raises(InputError):
            gen_perturbed(5, nu=-1.0)


class TestMspe:
    def test_zero(self):
        T = np.stack([normal_quantiles(m, 1) for m in range(5)])
        assert mspe(T, T, Space("wasserstein")) == 0.0

    @given(st.floats(-5, 5))
    def test_constant_offset(self, c):
        T = np.stack([normal_quantiles(m, s) for m, s in [(0, 1), (1, 2), (-2, 0.5)]])
        assert mspe(T + c, T, Space("wasserstein")) == pytest.approx(c * c, rel=1e-12, abs=1e-12)

    def test_single_pair(self):
        space = Space("wasserstein")
        a, b = normal_quantiles(0, 1), normal_quantiles(1, 3)
        assert mspe(a[None], b[None], space) == pytest.approx(space.distance(a, b) ** 2, rel=1e-14)

    def test_mismatch(self):
        T = np.tile(normal_quantiles(0, 1), (3, 1))
        with pytest.raises(ShapeError):
            mspe(T[:2], T, Space("wasserstein"))


class TestGenerate:
    def test_dispatch(self):
        assert generate("network", 4, 0, nodes=4).space.nodes == 4
        assert generate("constant", 4, 0).generator == "constant"

    def test_unknown(self):
        with pytest.raises(InputError) as err:
            generate("nope", 3, 0)
        assert err.value.field == "generator"


@pytest.fixture(scope="module")
def report():
    return run_experiment("distributional", [40, 60], 3, seed=7, k=5, net_config=FAST, test_size=20)


class TestExperiment:
    def test_constant_generator_gfr(self):
        rep = run_experiment("constant", [20], 1, methods=["gfr"], seed=0)
        assert rep.mspes("gfr", 20)[0] == pytest.approx(0.0, abs=1e-20)

    def test_constant_generator_dfr(self):
        rep = run_experiment("constant", [20], 1, methods=["dfr"], seed=0, k=5, net_config=FAST)
        assert rep.mspes("dfr", 20)[0] == pytest.approx(0.0, abs=1e-20)

    def test_aggregation(self, report):
        for m in report.methods:
            for n in report.n:
                vals = report.mspes(m, n)
                assert len(vals) == 3
                assert report.amspe(m, n) == np.mean(vals)
                assert report.mmspe(m, n) == np.median(vals)

    def test_json_schema(self, report):
        data = json.loads(report.to_json())
        for key in ("generator", "methods", "n", "Q", "seeds", "runs", "amspe", "mmspe"):
            assert key in data
        assert len(data["runs"]) == 2 * 2 * 3
        assert {"mspe", "wall_ms", "status"} <= set(data["runs"][0])
        assert data["amspe"]["dfr"]["40"] == report.amspe("dfr", 40)

    def test_csv(self, report):
        rows = list(csv.DictReader(io.StringIO(report.to_csv())))
        assert len(rows) == len(report.runs)
        assert float(rows[0]["mspe"]) == report.runs[0]["mspe"]

    def test_deterministic_modulo_wall_clock(self, report):
        again = run_experiment("distributional", [40, 60], 3, seed=7, k=5, net_config=FAST, test_size=20)
        assert again.to_json(deterministic=True) == report.to_json(deterministic=True)

    def test_parallel_matches_serial(self, report):
        again = run_experiment("distributional", [40, 60], 3, seed=7, k=5, net_config=FAST, test_size=20, jobs=2)
        assert again.to_json(deterministic=True) == report.to_json(deterministic=True)

    def test_runs_use_distinct_data(self, report):
        vals = report.mspes("gfr", 40)
        assert len(set(vals)) == len(vals)

    def test_table_layout(self, report):
        lines = report.table().splitlines()
        assert "DFR" in lines[0] and "GFR" in lines[0]
        assert [ln.split("|")[0].strip() for ln in lines[2:]] == ["40", "60"]

    def test_write(self, report, tmp_path):
        d = report.write(tmp_path / "out")
        assert json.loads((d / "report.json").read_text())["Q"] == 3
        assert (d / "report.csv").read_text().startswith("generator,")

    def test_failed_run_recorded(self):
        # k >= n makes every DFR fit fail; GFR still runs
        rep = run_experiment("distributional", [12], 1, seed=0, k=15, test_size=5)
        dfr = [r for r in rep.runs if r["method"] == "dfr"][0]
        assert dfr["status"] == "failed" and dfr["stage"] == "isomap"
        assert not rep.complete
        assert np.isnan(rep.amspe("dfr", 12))
        assert rep.mspes("gfr", 12)

    def test_keep_predictions(self):
        rep = run_experiment("network", [30], 1, seed=1, k=5, net_config=FAST, test_size=10, nodes=4,
                             keep_predictions=True)
        preds = rep.predictions[(30, 0, "dfr")]
        assert preds.shape == (10, 16)
        space = Space("laplacian", nodes=4)
        assert all(space.is_valid(p) for p in preds)

    @pytest.mark.parametrize("kwargs", [{"Q": 0}, {"generator": "bogus"}, {"methods": ["knn"]}])
    def test_invalid(self, kwargs):
        args = {"generator": "constant", "n": [20], "Q": 1, **kwargs}
        with pytest.raises(InputError):
            run_experiment(**args)

    def test_report_from_runs(self):
        runs = [{"n": 10, "run": q, "method": "gfr", "status": "ok", "mspe": v} for q, v in enumerate([1.0, 5.0, 3.0])]
        rep = ExperimentReport("constant", ["gfr"], [10], 3, 0, runs)
        assert rep.amspe("gfr", 10) == 3.0
        assert rep.mmspe("gfr", 10) == 3.0
