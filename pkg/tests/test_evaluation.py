import json
import re

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from foilforge import dataset as dsm
from foilforge import evaluation as ev
from foilforge import models
from foilforge import neuralcore as nc
from foilforge.dataset import CaseSpec, shape_vector
from foilforge.errors import CaseMismatch, ConstantTruth, EmptyTestSplit


def zero_checkpoint(case_id="c2a"):
    spec = models.build_dnn(CaseSpec(case_id))
    net = models._network(spec)
    return models.Checkpoint(spec=spec, params=[np.zeros_like(p) for p in net.params],
                             seed=0, final_train_loss=0.0, final_test_loss=0.0)


class TestPctError:
    def test_identity(self):
        out = ev.pct_error(np.array([1.0, 2.0, 3.0]), np.array([1.0, 2.0, 3.0]))
        np.testing.assert_array_equal(out, np.zeros(3))

    def test_hand_case(self):
        out = ev.pct_error(np.array([0.1, 1.0]), np.array([0.0, 1.0]))
        np.testing.assert_allclose(out, [10.0, 0.0], atol=1e-12)

    def test_constant_truth(self):
        with pytest.raises(ConstantTruth):
            ev.pct_error(np.array([1.0, 2.0]), np.array([5.0, 5.0]))

    @settings(max_examples=40, deadline=None)
    @given(st.floats(min_value=-100, max_value=100),
           st.floats(min_value=0.01, max_value=50.0))
    def test_shift_and_scale_invariance(self, shift, scale):
        rng = np.random.Generator(np.random.PCG64(17))
        truth = rng.normal(size=20)
        pred = truth + rng.normal(scale=0.1, size=20)
        base = ev.pct_error(pred, truth)
        shifted = ev.pct_error(pred + shift, truth + shift)
        scaled = ev.pct_error(pred * scale, truth * scale)
        np.testing.assert_allclose(shifted, base, rtol=1e-7, atol=1e-7)
        np.testing.assert_allclose(scaled, base, rtol=1e-7, atol=1e-7)


class TestEvaluate:
    def test_perfect_oracle(self, mini_c2a):
        report = ev.evaluate(None, mini_c2a, predict_fn=lambda s: shape_vector(s.airfoil))
        assert report.aggregate["overall_mean_pct"] == 0.0
        assert report.aggregate["overall_max_pct"] == 0.0
        assert report.aggregate["test_mse"] == 0.0
        assert report.model_kind == "hook"

    def test_zero_checkpoint_cross_check(self, mini_c2a):
        # two-sample direct recomputation of the zero-prediction error
        ds = dsm.Dataset(samples=mini_c2a.samples[:2],
                         split=np.array([0, 1], dtype=np.uint8), seed=0,
                         case=mini_c2a.case)
        report = ev.evaluate(zero_checkpoint(), ds)
        s = ds.samples[1]
        expected = []
        for sig in (s.airfoil.points[:, 0], s.airfoil.points[:, 1]):
            expected.append(np.mean(100.0 * np.abs(sig) / (sig.max() - sig.min())))
        assert report.per_sample[0].mean_pct_error == pytest.approx(np.mean(expected), rel=1e-12)

    def test_deterministic(self, mini_c2a):
        a = ev.evaluate(zero_checkpoint(), mini_c2a).to_json()
        b = ev.evaluate(zero_checkpoint(), mini_c2a).to_json()
        assert a == b

    def test_aggregate_consistency(self, mini_c2a):
        report = ev.evaluate(zero_checkpoint(), mini_c2a)
        means = [s.mean_pct_error for s in report.per_sample]
        assert report.aggregate["overall_mean_pct"] == pytest.approx(np.mean(means), abs=1e-12)
        maxes = [s.max_pct_error for s in report.per_sample]
        assert report.aggregate["overall_max_pct"] == pytest.approx(np.max(maxes), abs=1e-12)

    def test_case_mismatch(self, mini_c4a):
        with pytest.raises(CaseMismatch):
            ev.evaluate(zero_checkpoint("c2a"), mini_c4a)

    def test_empty_test_split(self, mini_c2a):
        ds = dsm.Dataset(samples=mini_c2a.samples,
                         split=np.zeros(len(mini_c2a), dtype=np.uint8),
                         seed=0, case=mini_c2a.case)
        with pytest.raises(EmptyTestSplit):
            ev.evaluate(zero_checkpoint(), ds)

    def test_json_parses(self, mini_c2a):
        report = ev.evaluate(zero_checkpoint(), mini_c2a)
        payload = json.loads(report.to_json())
        assert payload["case"] == "c2a"
        assert len(payload["per_sample"]) == mini_c2a.test_indices.size
        assert set(payload["aggregate"]) == {"overall_mean_pct", "overall_max_pct",
                                             "test_mse", "train_mse"}


class TestPlots:
    def test_identical_curves_share_path_data(self, mini_c2a):
        s = mini_c2a.samples[0]
        svg = ev.plot_comparison(s, shape_vector(s.airfoil), "shape")
        paths = re.findall(r'points="([^"]+)"', svg)
        assert paths[0] == paths[1]

    def test_byte_identical(self, mini_c2a):
        s = mini_c2a.samples[0]
        pred = shape_vector(s.airfoil) * 1.01
        assert ev.plot_comparison(s, pred, "shape") == ev.plot_comparison(s, pred, "shape")

    def test_shape_window_fixed(self, mini_c2a):
        s = mini_c2a.samples[0]
        svg = ev.plot_comparison(s, shape_vector(s.airfoil) + 0.001, "shape")
        assert ">-0.05<" in svg and ">1.05<" in svg

    def test_cp_kind(self, mini_c2a):
        s = mini_c2a.samples[0]
        pred = np.concatenate([s.cp.cp_suction * 1.02, s.cp.cp_pressure * 0.98])
        svg = ev.plot_comparison(s, pred, "cp")
        assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
        assert "-Cp" in svg

    def test_bad_kind(self, mini_c2a):
        with pytest.raises(ValueError):
            ev.plot_comparison(mini_c2a.samples[0], np.zeros(250), "volume")
