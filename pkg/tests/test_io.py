import json

import numpy as np
import pytest

from breg import io as bio
from breg.transport import DiscreteDistribution


class TestFormatting:
    def test_round_trip_digits(self):
        x = 0.1 + 0.2
        assert float(bio.fmt(x)) == x
        assert bio.fmt_short(0.5 * np.log(4 / 3)) == "0.143841036226"

    def test_dumps_is_deterministic(self):
        obj = {"b": np.float64(1.5), "a": [np.int64(2), np.inf], "c": np.array([True, False])}
        text = bio.dumps(obj)
        assert text.endswith("\n")
        assert json.loads(text) == {"a": [2, "inf"], "b": 1.5, "c": [True, False]}
        assert text == bio.dumps(dict(reversed(list(obj.items()))))

    def test_format_csv(self):
        assert bio.format_csv(["i", "v"], [[0, 0.1]]) == "i,v\n0,0.10000000000000001\n"


class TestReaders:
    def test_vector(self, tmp_path):
        f = tmp_path / "v.csv"
        f.write_text("0.5, 0.25\n0.25  # comment\n")
        np.testing.assert_array_equal(bio.read_vector(f), [0.5, 0.25, 0.25])

    def test_vector_errors(self, tmp_path):
        f = tmp_path / "v.csv"
        f.write_text("# nothing\n")
        with pytest.raises(ValueError):
            bio.read_vector(f)
        f.write_text("1, x\n")
        with pytest.raises(ValueError):
            bio.read_vector(f)

    def test_matrix_with_header(self, tmp_path):
        f = tmp_path / "m.csv"
        f.write_text("a,b\n1,2\n3,4\n")
        np.testing.assert_array_equal(bio.read_matrix(f), [[1, 2], [3, 4]])

    def test_ragged_matrix(self, tmp_path):
        f = tmp_path / "m.csv"
        f.write_text("1,2\n3\n")
        with pytest.raises(ValueError):
            bio.read_matrix(f)


class TestDistributionFiles:
    def test_round_trip(self):
        dist = DiscreteDistribution([[0.0, 1.0], [2.0, 3.0]], [0.3, 0.7])
        back = bio.parse_distribution(bio.format_distribution(dist))
        np.testing.assert_array_equal(back.atoms, dist.atoms)
        np.testing.assert_array_equal(back.weights, dist.weights)

    def test_renormalizes_small_error(self):
        dist = bio.parse_distribution("w,x1\n0.5,0\n0.5005,1\n")
        assert dist.weights.sum() == pytest.approx(1.0, abs=1e-15)

    @pytest.mark.parametrize("text", [
        "w,x1\n0.5,0\n0.52,1\n",
        "p,x1\n0.5,0\n0.5,1\n",
        "w,x1\n",
        "w,x1\n1,2,3\n",
        "",
    ])
    def test_rejects(self, text):
        with pytest.raises(ValueError):
            bio.parse_distribution(text)


class TestConfig:
    def test_toml(self, tmp_path):
        f = tmp_path / "g.toml"
        f.write_text('generator = "neg_entropy"\ndelta = 1e-6\n')
        assert bio.load_config(f) == {"generator": "neg_entropy", "delta": 1e-6}

    def test_json_matrix(self, tmp_path):
        f = tmp_path / "g.json"
        f.write_text(json.dumps({"generator": "mahalanobis", "mahalanobis_matrix": [[2, 0], [0, 1]]}))
        g = bio.generator_from_config(bio.load_config(f))
        assert g.dimension == 2
        assert g.value(np.array([1.0, 1.0])) == pytest.approx(3.0)

    def test_unknown_key(self, tmp_path):
        f = tmp_path / "g.json"
        f.write_text(json.dumps({"generator": "squared_l2", "colour": "red"}))
        with pytest.raises(ValueError):
            bio.load_config(f)
