import json

import numpy as np
import pytest

from rriokr.io import (DataError, MultilabelDataset, atomic_write_text, csv_text, format_cell,
                       load_bundle, load_dense_csv, load_multilabel, load_usps_halves,
                       read_dense_csv, save_bundle, write_csv, write_json, write_jsonl,
                       write_matrix_csv)


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestWriters:
    def test_format_cell(self):
        assert format_cell(None) == ""
        assert format_cell(0.1) == "0.1"
        assert float(format_cell(1 / 3)) == 1 / 3
        assert format_cell(np.float64(2.5)) == "2.5"
        assert format_cell(np.int64(7)) == "7"

    def test_csv_roundtrip(self, tmp_path, rng):
        A = rng.standard_normal((5, 3))
        p = write_matrix_csv(tmp_path / "m.csv", A, header=["a", "b", "c"])
        header, B = read_dense_csv(p)
        assert header == ["a", "b", "c"]
        np.testing.assert_array_equal(A, B)

    def test_csv_text_deterministic(self):
        assert csv_text(("x", "y"), [(1, 0.5), (2, None)]) == csv_text(("x", "y"), [(1, 0.5), (2, None)])

    def test_atomic_overwrite(self, tmp_path):
        p = tmp_path / "sub" / "f.txt"
        atomic_write_text(p, "one")
        atomic_write_text(p, "two")
        assert p.read_text() == "two"
        assert [q.name for q in p.parent.iterdir()] == ["f.txt"]

    def test_json_and_jsonl(self, tmp_path):
        write_json(tmp_path / "a.json", {"b": 1, "a": [1.5]})
        assert json.loads((tmp_path / "a.json").read_text()) == {"a": [1.5], "b": 1}
        write_jsonl(tmp_path / "r.jsonl", [{"x": 1}, {"x": 2}])
        assert len((tmp_path / "r.jsonl").read_text().splitlines()) == 2

    def test_write_csv_rows(self, tmp_path):
        write_csv(tmp_path / "w.csv", ("a",), [(1,), (2,)])
        assert (tmp_path / "w.csv").read_text().splitlines() == ["a", "1", "2"]


class TestDenseCsv:
    def test_two_rows(self, tmp_path):
        A = load_dense_csv(_write(tmp_path, "a.csv", "1,2\n3,4\n"))
        np.testing.assert_array_equal(A, [[1, 2], [3, 4]])

    def test_empty(self, tmp_path):
        with pytest.raises(DataError):
            load_dense_csv(_write(tmp_path, "e.csv", ""))

    def test_missing(self, tmp_path):
        with pytest.raises(DataError):
            load_dense_csv(tmp_path / "nope.csv")

    def test_ragged_reports_line(self, tmp_path):
        with pytest.raises(DataError, match=":3:"):
            load_dense_csv(_write(tmp_path, "r.csv", "a,b\n1,2\n3\n"))

    def test_non_numeric(self, tmp_path):
        with pytest.raises(DataError):
            load_dense_csv(_write(tmp_path, "n.csv", "1,2\n3,x\n"))

    def test_non_finite(self, tmp_path):
        with pytest.raises(DataError):
            load_dense_csv(_write(tmp_path, "i.csv", "1,2\n3,nan\n"))

    def test_comments_skipped(self, tmp_path):
        A = load_dense_csv(_write(tmp_path, "c.csv", "# hi\n1,2\n\n3,4\n"))
        assert A.shape == (2, 2)


class TestMultilabel:
    def test_sparse_label_tokens(self, tmp_path):
        ds = load_multilabel(_write(tmp_path, "s.txt",
                                    "# n_features=4 n_labels=3\n0:1.5 3:2 y0:1 y2:1\n1:1\n"))
        np.testing.assert_array_equal(ds.X, [[1.5, 0, 0, 2], [0, 1, 0, 0]])
        np.testing.assert_array_equal(ds.Y, [[1, 0, 1], [0, 0, 0]])
        assert ds.mean_labels() == 1.0

    def test_sparse_leading_list(self, tmp_path):
        ds = load_multilabel(_write(tmp_path, "s.txt", "0,2 0:1\n1 1:1\n"))
        np.testing.assert_array_equal(ds.Y, [[1, 0, 1], [0, 1, 0]])

    def test_sparse_out_of_range(self, tmp_path):
        with pytest.raises(DataError):
            load_multilabel(_write(tmp_path, "s.txt", "# n_features=2 n_labels=2\n5:1 y0:1\n"))

    def test_sparse_non_binary_label(self, tmp_path):
        with pytest.raises(DataError):
            load_multilabel(_write(tmp_path, "s.txt", "0:1 y0:2\n"))

    def test_dense_header(self, tmp_path):
        ds = load_multilabel(_write(tmp_path, "d.csv", "f0,f1,y0,y1\n0.5,1,1,0\n2,3,0,1\n"))
        assert ds.label_names == ["y0", "y1"]
        np.testing.assert_array_equal(ds.X, [[0.5, 1], [2, 3]])

    def test_dense_non_binary(self, tmp_path):
        with pytest.raises(DataError, match="row 2"):
            load_multilabel(_write(tmp_path, "d.csv", "f0,y0\n1,1\n2,0.5\n"))

    def test_headerless_needs_n_labels(self, tmp_path):
        p = _write(tmp_path, "d.csv", "1,2,1\n3,4,0\n")
        with pytest.raises(DataError):
            load_multilabel(p)
        assert load_multilabel(p, n_labels=1).Y.shape == (2, 1)

    def test_bibtex_shaped(self, tmp_path, rng):
        n, d, L = 4880, 1836, 159
        lines = [f"# n_features={d} n_labels={L}"]
        for _ in range(n):
            labs = sorted(set(rng.integers(0, L, size=rng.integers(1, 4)).tolist()))
            fts = sorted(set(rng.integers(0, d, size=8).tolist()))
            lines.append(",".join(map(str, labs)) + " " + " ".join(f"{j}:1" for j in fts))
        ds = load_multilabel(_write(tmp_path, "bibtex.txt", "\n".join(lines) + "\n"))
        assert ds.X.shape == (n, d) and ds.Y.shape == (n, L)
        assert 1.0 <= ds.mean_labels() <= 3.0

    def test_dataset_validation(self):
        with pytest.raises(DataError):
            MultilabelDataset(np.zeros((2, 1)), np.zeros((3, 1)), ["y0"])


class TestUsps:
    def test_halves(self, tmp_path, rng):
        A = rng.random((3, 256))
        top, bottom = load_usps_halves(write_matrix_csv(tmp_path / "u.csv", A))
        np.testing.assert_array_equal(top, A[:, :128])
        np.testing.assert_array_equal(bottom, A[:, 128:])

    def test_digit_column(self, tmp_path, rng):
        A = np.hstack([np.arange(2)[:, None], rng.random((2, 256))])
        top, _ = load_usps_halves(write_matrix_csv(tmp_path / "u.csv", A))
        np.testing.assert_array_equal(top, A[:, 1:129])

    def test_wrong_width(self, tmp_path):
        with pytest.raises(DataError):
            load_usps_halves(write_matrix_csv(tmp_path / "u.csv", np.zeros((2, 10))))


class TestBundle:
    def test_roundtrip(self, tmp_path, rng):
        arrays = {"W": rng.standard_normal((4, 4)), "idx": np.arange(3)}
        save_bundle(tmp_path / "m.npz", arrays, {"kind": "reduced", "p": 2})
        got, meta = load_bundle(tmp_path / "m.npz")
        assert meta == {"kind": "reduced", "p": 2}
        np.testing.assert_array_equal(got["W"], arrays["W"])
        np.testing.assert_array_equal(got["idx"], arrays["idx"])

    def test_garbage(self, tmp_path):
        with pytest.raises(DataError):
            load_bundle(_write(tmp_path, "bad.npz", "not a zip"))
