import numpy as np
import pytest

from avq.config import AblationConfig
from avq.errors import DimensionError, ValidationError
from avq.features import AudioFeatureMatrix, VideoFeatureMatrix
from avq.heads import mos_to_class, one_hot, softmax
from avq.model import (
    FeatureScaler,
    load_model,
    merge_and_scale,
    predict_sequence,
    save_model,
    select_features,
    train_model,
)

FAST = {"max_epochs": 30}


def video(rng, m, shift=0.0):
    return VideoFeatureMatrix(rng.normal(size=(90, m)) + shift, [f"v{i}" for i in range(90)], "s")


def audio(rng, m, shift=0.0):
    return AudioFeatureMatrix(rng.normal(size=(25, m)) - 40 + shift, [f"a{i}" for i in range(25)], "s", np.arange(1.0, 26.0))


def toy_train_set(selection="av", n=16, m=6, seed=0):
    """Sequences whose feature level tracks their MOS."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        mos = 1.0 + 4.0 * i / (n - 1)
        fm = select_features(video(rng, m, mos), audio(rng, m, mos), selection)
        out.append((fm, mos))
    return out


class TestScaler:
    def test_training_rows_span_unit_interval(self):
        X = np.random.default_rng(0).normal(size=(115, 50)) * np.arange(1, 116)[:, None]
        Z = FeatureScaler.fit(X).transform(X)
        np.testing.assert_array_equal(Z.min(axis=1), 0.0)
        np.testing.assert_array_equal(Z.max(axis=1), 1.0)

    def test_unseen_data_clamped(self):
        sc = FeatureScaler.fit(np.array([[0.0, 1.0], [5.0, 7.0]]))
        Z = sc.transform(np.array([[-10.0, 1.2], [6.0, 100.0]]))
        np.testing.assert_allclose(Z, [[-0.5, 1.2], [0.5, 1.5]])

    def test_constant_row(self):
        sc = FeatureScaler.fit(np.array([[2.0, 2.0, 2.0], [0.0, 1.0, 2.0]]))
        assert sc.constant_rows.tolist() == [0]
        np.testing.assert_array_equal(sc.transform(np.array([[9.0], [1.0]])), [[0.5], [0.5]])

    def test_zscore(self):
        X = np.random.default_rng(1).normal(3, 2, size=(4, 200))
        Z = FeatureScaler.fit(X, "zscore").transform(X)
        np.testing.assert_allclose(Z.mean(axis=1), 0, atol=1e-12)
        np.testing.assert_allclose(Z.std(axis=1), 1, atol=1e-12)

    def test_wrong_rows(self):
        sc = FeatureScaler.fit(np.ones((3, 2)))
        with pytest.raises(DimensionError):
            sc.transform(np.ones((4, 2)))


class TestMerge:
    def test_av_shape_and_order(self):
        rng = np.random.default_rng(0)
        v, a = video(rng, 7), audio(rng, 7)
        fm, sc = merge_and_scale(v, a, "av")
        assert fm.shape == (115, 7) and sc.rows == 115
        assert fm.feature_names[:90] == v.feature_names and fm.feature_names[90:] == a.feature_names

    def test_single_modality(self):
        rng = np.random.default_rng(1)
        assert merge_and_scale(video(rng, 4), None, "video_only")[0].shape == (90, 4)
        assert merge_and_scale(None, audio(rng, 4), "audio_only")[0].shape == (25, 4)

    def test_column_mismatch(self):
        rng = np.random.default_rng(2)
        with pytest.raises(DimensionError):
            merge_and_scale(video(rng, 4), audio(rng, 5))

    def test_missing_modality(self):
        with pytest.raises(ValidationError):
            merge_and_scale(None, audio(np.random.default_rng(3), 4), "av")

    def test_reuse_scaler_wrong_dim(self):
        rng = np.random.default_rng(4)
        _, sc = merge_and_scale(video(rng, 4), None, "video_only")
        with pytest.raises(DimensionError):
            merge_and_scale(video(rng, 4), audio(rng, 4), "av", scaler=sc)


class TestTrain:
    def test_baseline_chain(self):
        model = train_model(toy_train_set(), AblationConfig("Baseline", hyper=FAST))
        assert model.dims == [115, 60, 25]
        assert model.chain.output_dim == 25

    def test_layers0_feeds_scaled_features(self):
        train = toy_train_set()
        model = train_model(train, AblationConfig("Layers-0", dims=()))
        assert model.dims == [115]
        X = np.hstack([fm.data for fm, _ in train])
        np.testing.assert_array_equal(model.encode(X), model.scaler.transform(X))

    def test_audio_only_chain(self):
        model = train_model(toy_train_set("audio_only"), AblationConfig("AF", "audio_only", (18, 10), hyper=FAST))
        assert model.dims == [25, 18, 10]

    def test_svr_head(self):
        model = train_model(toy_train_set(n=12), AblationConfig("SVR", head="svr", hyper=FAST))
        s, per = predict_sequence(model, toy_train_set(n=12)[0][0])
        assert 1 <= s <= 5 and per.shape == (6,)

    def test_learns_toy_ordering(self):
        model = train_model(toy_train_set(), AblationConfig("L0", dims=()))
        scores = [predict_sequence(model, fm)[0] for fm, _ in toy_train_set(seed=1)]
        assert np.corrcoef(scores, np.linspace(1, 5, 16))[0, 1] > 0.9

    def test_wrong_input_rows(self):
        with pytest.raises(DimensionError):
            train_model(toy_train_set("video_only"), AblationConfig("B"))

    def test_empty(self):
        with pytest.raises(ValidationError):
            train_model([], AblationConfig("B"))

    def test_fine_tune_lowers_cross_entropy(self):
        train = toy_train_set()
        base = AblationConfig("B", dims=(20, 8), hyper=FAST)
        tuned = AblationConfig("B", dims=(20, 8), hyper=FAST, fine_tune=True, fine_tune_epochs=100,
                               head_params={"learning_rate": 1e-2})

        def ce(model):
            X = np.hstack([fm.data for fm, _ in train])
            y = np.concatenate([[mos] * fm.m for fm, mos in train])
            T = one_hot(mos_to_class(y), 4)
            P = softmax(model.head.W @ model.encode(X) + model.head.b[:, None])
            return -np.mean(np.sum(T * np.log(P), axis=0))

        assert ce(train_model(train, tuned)) < ce(train_model(train, base))


@pytest.fixture(scope="module")
def model():
    return train_model(toy_train_set(), AblationConfig("B", dims=(30, 12), hyper=FAST))


class TestPredict:
    def test_identical_frames(self, model):
        col = np.random.default_rng(0).normal(size=(115, 1))
        s, per = predict_sequence(model, np.repeat(col, 5, axis=1))
        assert s == pytest.approx(per[0], abs=1e-12)

    def test_single_frame(self, model):
        col = np.random.default_rng(1).normal(size=(115, 1))
        s, per = predict_sequence(model, col)
        assert s == per[0]

    def test_permutation_invariant(self, model):
        X = np.random.default_rng(2).normal(size=(115, 9))
        s1, _ = predict_sequence(model, X)
        s2, _ = predict_sequence(model, X[:, np.random.default_rng(3).permutation(9)])
        assert s1 == pytest.approx(s2, abs=1e-12)

    def test_dimension_mismatch(self, model):
        with pytest.raises(DimensionError):
            predict_sequence(model, np.zeros((90, 3)))


class TestSerialization:
    @pytest.mark.parametrize("head", ["softmax", "svr"])
    def test_round_trip_bitwise(self, tmp_path, head):
        model = train_model(toy_train_set(n=10), AblationConfig("B", dims=(30, 12), head=head, hyper=FAST))
        save_model(model, tmp_path / "m.bin")
        back = load_model(tmp_path / "m.bin")
        assert back.dims == model.dims
        X = np.random.default_rng(5).normal(size=(115, 100)) * 3
        assert back.predict_frames(X).tobytes() == model.predict_frames(X).tobytes()

    def test_header_layout(self, tmp_path):
        import json
        import struct

        model = train_model(toy_train_set(n=6), AblationConfig("B", dims=(10,), hyper=FAST))
        raw = save_model(model, tmp_path / "m.bin").read_bytes()
        assert raw[:8] == b"AVQMODEL"
        (n,) = struct.unpack_from("<Q", raw, 8)
        header = json.loads(raw[16 : 16 + n])
        assert header["dims"] == [115, 10]
        names = [a["name"] for a in header["arrays"]]
        assert names[2:6] == ["layer0.W_enc", "layer0.b_enc", "layer0.W_dec", "layer0.b_dec"]

    def test_rejects_foreign_file(self, tmp_path):
        (tmp_path / "x.bin").write_bytes(b"not a model")
        with pytest.raises(ValidationError):
            load_model(tmp_path / "x.bin")
