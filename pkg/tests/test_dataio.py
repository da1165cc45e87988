import json
import os
import struct

import numpy as np
import pytest

from rbmkit import (CsvFormatError, Dataset, IdxCountMismatchError,
                    IdxMagicError, IdxTruncatedError, ModelFormatError,
                    RbmParams, load_isolet_csv, load_mnist_idx, load_model,
                    minmax_normalize, save_model)
from rbmkit.dataio import write_pgm
from rbmkit.dbn import DbnModel

from synthdata import write_idx_fixture

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")

# two 2x3 images spelled out byte by byte per the published IDX layout:
# >i magic, >i count, >i rows, >i cols, then raw unsigned pixel bytes
PIXELS = np.array([[[0, 64, 128], [192, 255, 1]],
                   [[9, 8, 7], [6, 5, 4]]], dtype=np.uint8)
LABELS = np.array([3, 9], dtype=np.uint8)
IMAGE_BYTES = struct.pack(">iiii", 2051, 2, 2, 3) + PIXELS.tobytes()
LABEL_BYTES = struct.pack(">ii", 2049, 2) + LABELS.tobytes()


def write_fixture_pair(tmp_path, image_bytes=IMAGE_BYTES, label_bytes=LABEL_BYTES):
    images = tmp_path / "images-idx3-ubyte"
    labels = tmp_path / "labels-idx1-ubyte"
    images.write_bytes(image_bytes)
    labels.write_bytes(label_bytes)
    return images, labels


class TestMnistIdx:
    def test_hand_built_fixture_round_trips(self, tmp_path):
        images, labels = write_fixture_pair(tmp_path)
        ds = load_mnist_idx(images, labels)
        assert ds.n_samples == 2 and ds.n_features == 6
        np.testing.assert_array_equal(ds.features,
                                      PIXELS.reshape(2, 6).astype(float))
        np.testing.assert_array_equal(ds.labels, [3, 9])

    def test_reencoding_is_byte_exact(self, tmp_path):
        # encode the same data with the independent test writer and
        # compare raw bytes against the hand-packed layout
        images = tmp_path / "enc-images"
        labels = tmp_path / "enc-labels"
        write_idx_fixture(images, labels, PIXELS, LABELS)
        assert images.read_bytes() == IMAGE_BYTES
        assert labels.read_bytes() == LABEL_BYTES

    def test_corrupted_magic_is_typed_error(self, tmp_path):
        bad = struct.pack(">iiii", 2052, 2, 2, 3) + PIXELS.tobytes()
        images, labels = write_fixture_pair(tmp_path, image_bytes=bad)
        with pytest.raises(IdxMagicError):
            load_mnist_idx(images, labels)

    def test_truncated_payload_is_typed_error(self, tmp_path):
        images, labels = write_fixture_pair(tmp_path,
                                            image_bytes=IMAGE_BYTES[:-3])
        with pytest.raises(IdxTruncatedError):
            load_mnist_idx(images, labels)

    def test_trailing_garbage_is_typed_error(self, tmp_path):
        images, labels = write_fixture_pair(tmp_path,
                                            image_bytes=IMAGE_BYTES + b"x")
        with pytest.raises(IdxTruncatedError):
            load_mnist_idx(images, labels)

    def test_count_mismatch_is_typed_error(self, tmp_path):
        short = struct.pack(">ii", 2049, 1) + LABELS[:1].tobytes()
        images, labels = write_fixture_pair(tmp_path, label_bytes=short)
        with pytest.raises(IdxCountMismatchError):
            load_mnist_idx(images, labels)

    def test_missing_file_raises(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_mnist_idx(tmp_path / "nope", tmp_path / "nope2")

    @pytest.mark.skipif("RBMKIT_MNIST_DIR" not in os.environ,
                        reason="real MNIST files not available")
    def test_official_train_files_shape(self):
        root = os.environ["RBMKIT_MNIST_DIR"]
        ds = load_mnist_idx(os.path.join(root, "train-images-idx3-ubyte"),
                            os.path.join(root, "train-labels-idx1-ubyte"))
        assert ds.n_samples == 60_000
        assert ds.n_features == 784


def isolet_row(values, label):
    return ", ".join(f"{v:.4f}" for v in values) + f", {label}."


class TestIsoletCsv:
    def test_synthetic_row_exact_values(self, tmp_path):
        values = np.linspace(-1.0, 1.0, 617)
        path = tmp_path / "isolet.data"
        path.write_text(isolet_row(values, 1) + "\n" + isolet_row(-values, 26) + "\n")
        ds = load_isolet_csv(path)
        assert ds.n_samples == 2 and ds.n_features == 617
        np.testing.assert_allclose(ds.features[0], np.round(values, 4), atol=1e-12)
        np.testing.assert_array_equal(ds.labels, [0, 25])

    def test_wrong_column_count_names_line(self, tmp_path):
        path = tmp_path / "short.data"
        path.write_text(isolet_row(np.zeros(617), 1) + "\n" + "1.0, 2.0\n")
        with pytest.raises(CsvFormatError, match=":2:"):
            load_isolet_csv(path)

    def test_unparsable_number_names_line(self, tmp_path):
        row = isolet_row(np.zeros(617), 1).replace("0.0000", "zero", 1)
        path = tmp_path / "bad.data"
        path.write_text(row + "\n")
        with pytest.raises(CsvFormatError, match=":1:"):
            load_isolet_csv(path)

    def test_label_out_of_range(self, tmp_path):
        path = tmp_path / "label.data"
        path.write_text(isolet_row(np.zeros(617), 27) + "\n")
        with pytest.raises(CsvFormatError):
            load_isolet_csv(path)

    @pytest.mark.skipif("RBMKIT_ISOLET_TRAIN" not in os.environ,
                        reason="real ISOLET file not available")
    def test_official_train_file_shape(self):
        ds = load_isolet_csv(os.environ["RBMKIT_ISOLET_TRAIN"])
        assert ds.n_samples == 6238
        assert ds.n_features == 617


class TestMinmaxNormalize:
    def test_byte_range_maps_to_unit_interval(self):
        ds = minmax_normalize(Dataset(np.array([[0.0], [255.0]])))
        np.testing.assert_array_equal(ds.features, [[0.0], [1.0]])
        assert ds.normalization.col_max[0] == 255.0

    def test_constant_column_maps_to_zero(self):
        ds = minmax_normalize(Dataset(np.array([[7.0], [7.0], [7.0]])))
        np.testing.assert_array_equal(ds.features, np.zeros((3, 1)))

    def test_test_values_above_train_max_clamp_to_one(self):
        train = minmax_normalize(Dataset(np.array([[0.0], [10.0]])))
        test = minmax_normalize(Dataset(np.array([[12.0], [-3.0]])),
                                train.normalization)
        np.testing.assert_array_equal(test.features, [[1.0], [0.0]])

    def test_idempotent_with_reused_stats(self):
        from rbmkit import NormStats
        rng = np.random.default_rng(0)
        ds = minmax_normalize(Dataset(rng.uniform(0, 9, size=(20, 4))))
        unit = NormStats(np.zeros(4), np.ones(4))
        again = minmax_normalize(Dataset(ds.features), stats=unit)
        np.testing.assert_allclose(again.features, ds.features, atol=1e-15)

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            minmax_normalize(Dataset(np.zeros((0, 3))))


class TestModelJson:
    def test_rbm_round_trip_bit_exact(self, ref_model, tmp_path):
        path = tmp_path / "model.json"
        save_model(path, ref_model)
        back = load_model(path)
        assert np.array_equal(back.w, ref_model.w)
        assert np.array_equal(back.a, ref_model.a)
        assert np.array_equal(back.b, ref_model.b)
        assert back.visible_kind == ref_model.visible_kind

    def test_subnormal_and_extreme_values_round_trip(self, tmp_path):
        p = RbmParams(np.array([[5e-324, -1.7976931348623157e308]]),
                      np.array([2.2250738585072014e-308]),
                      np.array([1e-17, 1.0000000000000002]))
        path = tmp_path / "model.json"
        save_model(path, p)
        back = load_model(path)
        assert back.w.tobytes() == p.w.tobytes()
        assert back.a.tobytes() == p.a.tobytes()
        assert back.b.tobytes() == p.b.tobytes()

    def test_dbn_round_trip_preserves_layer_order(self, ref_model, tmp_path):
        l1 = RbmParams(np.full((2, 3), 0.25), np.zeros(2), np.zeros(3))
        l2 = RbmParams(np.full((3, 1), -0.5), np.zeros(3), np.zeros(1))
        dbn = DbnModel([ref_model, l1, l2])
        path = tmp_path / "dbn.json"
        save_model(path, dbn)
        back = load_model(path)
        assert isinstance(back, DbnModel)
        assert back.n_layers == 3
        for orig, loaded in zip(dbn.layers, back.layers):
            assert np.array_equal(orig.w, loaded.w)

    def test_tampered_dimension_is_schema_error(self, ref_model, tmp_path):
        path = tmp_path / "model.json"
        save_model(path, ref_model)
        doc = json.loads(path.read_text())
        doc["n_visible"] = 3
        path.write_text(json.dumps(doc))
        with pytest.raises(ModelFormatError):
            load_model(path)

    def test_version_mismatch_rejected(self, ref_model, tmp_path):
        path = tmp_path / "model.json"
        save_model(path, ref_model)
        doc = json.loads(path.read_text())
        doc["format_version"] = 99
        path.write_text(json.dumps(doc))
        with pytest.raises(ModelFormatError, match="format_version"):
            load_model(path)

    def test_non_finite_value_rejected(self, ref_model, tmp_path):
        path = tmp_path / "model.json"
        save_model(path, ref_model)
        doc = json.loads(path.read_text())
        doc["weights"][0] = "inf"
        path.write_text(json.dumps(doc))
        with pytest.raises(ModelFormatError):
            load_model(path)

    def test_unknown_kind_rejected(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text(json.dumps({"format_version": 1, "kind": "vae"}))
        with pytest.raises(ModelFormatError):
            load_model(path)

    def test_golden_fixture_loads_to_pinned_values(self):
        back = load_model(os.path.join(FIXTURES, "model_golden.json"))
        expected = RbmParams(
            w=np.array([[0.125, -1.5], [3.0000000000000004e-16, 7.25]]),
            a=np.array([5e-324, -0.1]),
            b=np.array([0.0, 0.3]))
        assert back.w.tobytes() == expected.w.tobytes()
        assert back.a.tobytes() == expected.a.tobytes()
        assert back.b.tobytes() == expected.b.tobytes()


class TestWritePgm:
    def test_header_and_payload(self, tmp_path):
        path = tmp_path / "img.pgm"
        write_pgm(path, np.array([[0.0, 0.5], [1.0, 0.25]]))
        raw = path.read_bytes()
        assert raw.startswith(b"P5\n2 2\n255\n")
        assert raw[-4:] == bytes([0, 128, 255, 64])
