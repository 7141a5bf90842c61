import numpy as np
import pytest

from foilforge import dataset as dsm
from foilforge import models
from foilforge import neuralcore as nc
from foilforge.dataset import CaseSpec
from foilforge.errors import (
    BadMagic,
    CaseMismatch,
    ChecksumMismatch,
    EmptyTrainSplit,
    NumericalDivergence,
    SpecMismatch,
    TruncatedFile,
    VersionMismatch,
)
from conftest import retag


def quick_config(**kw):
    base = dict(learning_rate=1e-3, batch_size=8, epochs=3, seed=5)
    base.update(kw)
    return models.TrainConfig(**base)


class TestBuild:
    def test_dnn_widths_per_case(self):
        for cid, width in (("c1", 251), ("c2a", 251), ("c2b", 251), ("c3", 252),
                           ("c4a", 251), ("c4b", 251), ("c5", 252)):
            spec = models.build_dnn(CaseSpec(cid))
            dense = [ls for ls in spec.layer_specs if ls.kind == "dense"]
            assert dense[0].extents == (width, 125)
            assert [d.extents[1] for d in dense] == [125, 250, 236, 375, 250]

    def test_dnn_parameter_count_matches_width_arithmetic(self):
        spec = models.build_dnn(CaseSpec("c3"))
        formula = (252 * 125 + 125 + 125 * 250 + 250 + 250 * 236 + 236
                   + 236 * 375 + 375 + 375 * 250 + 250)
        assert models.parameter_count(spec) == formula == 305236

    def test_cnn_chain_and_flatten(self):
        assert models.conv_chain_extents() == [198, 99, 97, 48, 46, 23]
        assert models.CNN_FLAT_WIDTH == 67712
        spec = models.build_cnn(CaseSpec("c5"))
        dense = [ls for ls in spec.layer_specs if ls.kind == "dense"]
        assert dense[0].extents == (67712 + 2, 125)
        conv = [ls.extents for ls in spec.layer_specs if ls.kind == "conv2d"]
        assert conv == [(1, 32), (32, 64), (64, 128)]

    def test_cnn_scalar_count(self):
        for cid, n in (("c2a", 1), ("c3", 2), ("c4a", 1), ("c5", 2)):
            spec = models.build_cnn(CaseSpec(cid))
            concat = [ls for ls in spec.layer_specs if ls.kind == "concat_scalars"]
            assert concat[0].extents == (n,)

    def test_output_is_250_for_any_parameters(self, mini_c2a):
        spec = models.build_dnn(mini_c2a.case)
        net = models._network(spec)
        nc.init_params(net.layers, 99)
        arrays = dsm.encode_dataset(mini_c2a, "dnn")
        out = net.forward(arrays["inputs"][:4])
        assert out.shape == (4, 250)


class TestTrain:
    def test_history_length_and_determinism(self, mini_c2a):
        spec = models.build_dnn(mini_c2a.case)
        ckpt1, h1 = models.train(spec, mini_c2a, quick_config())
        ckpt2, h2 = models.train(spec, mini_c2a, quick_config())
        assert len(h1) == 3
        assert h1 == h2
        assert all(np.array_equal(a, b) for a, b in zip(ckpt1.params, ckpt2.params))

    def test_learning_signal_all_cases_dnn(self, mini_c2a, mini_corpus):
        for cid in dsm.CASE_IDS:
            if CaseSpec(cid).rotation_protocol:
                ds = dsm.split(dsm.sweep_generate(mini_corpus, CaseSpec(cid),
                                                  aoa_grid=[0, 3, 6], re_grid=[2e6]),
                               0.8, 11)
            else:
                ds = retag(mini_c2a, cid)
            spec = models.build_dnn(ds.case)
            config = quick_config(epochs=1)
            untrained = models._network(spec)
            nc.init_params(untrained.layers, config.seed)
            arrays = dsm.encode_dataset(ds, "dnn")
            base = models._split_loss(untrained, "dnn", arrays, ds.train_indices,
                                      config.batch_size)
            _, history = models.train(spec, ds, config)
            assert history[0][0] < base, f"no learning signal for {cid}"

    def test_case_mismatch(self, mini_c2a):
        spec = models.build_dnn(CaseSpec("c3"))
        with pytest.raises(CaseMismatch):
            models.train(spec, mini_c2a, quick_config())

    def test_empty_train_split(self, mini_c2a):
        ds = dsm.Dataset(samples=mini_c2a.samples,
                         split=np.ones(len(mini_c2a), dtype=np.uint8),
                         seed=0, case=mini_c2a.case)
        with pytest.raises(EmptyTrainSplit):
            models.train(models.build_dnn(ds.case), ds, quick_config())

    def test_divergence_reports_epoch(self, mini_c2a):
        spec = models.build_dnn(mini_c2a.case)
        with pytest.raises(NumericalDivergence) as exc:
            models.train(spec, mini_c2a, quick_config(learning_rate=1e150, epochs=4))
        assert exc.value.epoch is not None

    def test_overfit_four_samples(self, mini_c2a):
        ds = dsm.Dataset(samples=mini_c2a.samples[:4],
                         split=np.zeros(4, dtype=np.uint8), seed=0, case=mini_c2a.case)
        config = models.TrainConfig(learning_rate=1e-3, batch_size=32, epochs=2000, seed=1)
        ckpt, history = models.train(models.build_dnn(ds.case), ds, config)
        assert history[-1][0] < 1e-6


class TestPredict:
    def test_zero_parameters_zero_outputs(self, mini_c2a):
        spec = models.build_dnn(mini_c2a.case)
        net = models._network(spec)
        ckpt = models.Checkpoint(spec=spec, params=[np.zeros_like(p) for p in net.params],
                                 seed=0, final_train_loss=0.0, final_test_loss=0.0)
        s = mini_c2a.samples[0]
        foil = models.predict_shape(ckpt, s.cp, s.condition)
        assert foil.points.shape == (125, 2)
        assert np.all(foil.points == 0.0)

    def test_predict_cp_shapes(self, mini_c4a):
        spec = models.build_dnn(mini_c4a.case)
        net = models._network(spec)
        nc.init_params(net.layers, 3)
        ckpt = models.Checkpoint(spec=spec, params=[p.copy() for p in net.params],
                                 seed=3, final_train_loss=0.0, final_test_loss=0.0)
        s = mini_c4a.samples[0]
        cp = models.predict_cp(ckpt, s.airfoil, s.condition)
        assert cp.cp_suction.shape == (125,)
        assert cp.cp_pressure.shape == (125,)

    def test_direction_mismatch(self, mini_c2a, mini_c4a):
        spec = models.build_dnn(mini_c2a.case)
        net = models._network(spec)
        ckpt = models.Checkpoint(spec=spec, params=[np.zeros_like(p) for p in net.params],
                                 seed=0, final_train_loss=0.0, final_test_loss=0.0)
        s = mini_c4a.samples[0]
        with pytest.raises(CaseMismatch):
            models.predict_cp(ckpt, s.airfoil, s.condition)

    def test_cnn_predict_paths(self, mini_c2a):
        spec = models.build_cnn(mini_c2a.case)
        net = models._network(spec)
        nc.init_params(net.layers, 4)
        ckpt = models.Checkpoint(spec=spec, params=[p.copy() for p in net.params],
                                 seed=4, final_train_loss=0.0, final_test_loss=0.0)
        s = mini_c2a.samples[0]
        foil = models.predict_shape(ckpt, s.cp, s.condition)
        assert foil.points.shape == (125, 2)
        out = models.predict_sample(ckpt, s)
        assert out.shape == (250,)


@pytest.fixture(scope="module")
def trained(mini_c2a):
    return models.train(models.build_dnn(mini_c2a.case), mini_c2a, quick_config())[0]


class TestCheckpointIO:

    def test_round_trip_bit_exact_predictions(self, trained, mini_c2a, tmp_path):
        path = tmp_path / "m.afnc"
        models.save_checkpoint(trained, path)
        loaded = models.load_checkpoint(path)
        s = mini_c2a.samples[0]
        assert np.array_equal(models.predict_sample(trained, s),
                              models.predict_sample(loaded, s))
        assert loaded.seed == trained.seed
        assert loaded.final_train_loss == trained.final_train_loss

    def test_save_twice_identical(self, trained, tmp_path):
        a, b = tmp_path / "a.afnc", tmp_path / "b.afnc"
        models.save_checkpoint(trained, a)
        models.save_checkpoint(trained, b)
        assert a.read_bytes() == b.read_bytes()

    def test_flipped_magic(self, trained, tmp_path):
        path = tmp_path / "m.afnc"
        models.save_checkpoint(trained, path)
        blob = bytearray(path.read_bytes())
        blob[1] ^= 0x10
        path.write_bytes(bytes(blob))
        with pytest.raises(BadMagic):
            models.load_checkpoint(path)

    def test_version_mismatch(self, trained, tmp_path):
        path = tmp_path / "m.afnc"
        models.save_checkpoint(trained, path)
        blob = bytearray(path.read_bytes())
        blob[4] = 7
        path.write_bytes(bytes(blob))
        with pytest.raises(VersionMismatch):
            models.load_checkpoint(path)

    def test_truncated_parameters(self, trained, tmp_path):
        path = tmp_path / "m.afnc"
        models.save_checkpoint(trained, path)
        blob = path.read_bytes()
        # drop 8 bytes of parameters but keep a well-formed CRC tail
        path.write_bytes(blob[:-12] + blob[-4:])
        with pytest.raises((SpecMismatch, TruncatedFile)):
            models.load_checkpoint(path)

    def test_corrupt_body(self, trained, tmp_path):
        path = tmp_path / "m.afnc"
        models.save_checkpoint(trained, path)
        blob = bytearray(path.read_bytes())
        blob[-100] ^= 0x01
        path.write_bytes(bytes(blob))
        with pytest.raises(ChecksumMismatch):
            models.load_checkpoint(path)
