import json

import numpy as np
import pytest

from bnnsv import io
from bnnsv.exceptions import ConfigError, SchemaError
from bnnsv.model import Dataset, SamplerConfig
from bnnsv.sampler import PredictiveDraws, run_chain


@pytest.fixture(scope="module")
def chain():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(40, 3))
    data = Dataset(X[:, 0] + 0.3 * rng.normal(size=40), X)
    return run_chain(data, SamplerConfig(n_draws=40, n_burn=20, store_full_state=True), rng)


class TestChainArchive:
    @pytest.mark.parametrize("fmt", ["csv", "npz"])
    def test_round_trip_is_exact(self, chain, tmp_path, fmt):
        io.save_chain(chain, tmp_path / "c", fmt=fmt)
        back = io.load_chain(tmp_path / "c")
        for name in io._CHAIN_ARRAYS:
            np.testing.assert_array_equal(getattr(back, name), getattr(chain, name), err_msg=name)
        assert back.config == chain.config
        assert set(back.aux) == set(chain.aux)
        np.testing.assert_array_equal(back.state(3).gamma, chain.state(3).gamma)

    def test_csv_has_one_row_per_draw(self, chain, tmp_path):
        io.save_chain(chain, tmp_path / "c")
        lines = (tmp_path / "c" / "kappa.csv").read_text().splitlines()
        assert len(lines) == chain.n_draws + 1
        assert lines[0].split(",")[:2] == ["kappa_1_1", "kappa_1_2"]

    def test_not_an_archive(self, tmp_path):
        with pytest.raises(SchemaError):
            io.load_chain(tmp_path)

    def test_unknown_format(self, chain, tmp_path):
        with pytest.raises(ConfigError):
            io.save_chain(chain, tmp_path / "c", fmt="parquet")


class TestTables:
    def write(self, path, text):
        path.write_text(text)
        return path

    def test_dataset_round_trip(self, tmp_path):
        d = Dataset([0.1, 0.2, 0.3], [[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]], np.array([7, 8, 9]))
        io.write_dataset(tmp_path / "d.csv", d)
        back = io.read_dataset(tmp_path / "d.csv")
        np.testing.assert_array_equal(back.y, d.y)
        np.testing.assert_array_equal(back.X, d.X)
        np.testing.assert_array_equal(back.timestamps, [7, 8, 9])

    def test_without_period_column(self, tmp_path):
        p = self.write(tmp_path / "d.csv", "y,a\n1,2\n3,4\n")
        d = io.read_dataset(p)
        np.testing.assert_array_equal(d.timestamps, [0, 1])

    def test_missing_header(self, tmp_path):
        p = self.write(tmp_path / "d.csv", "1,2\n3,4\n")
        with pytest.raises(SchemaError, match="header"):
            io.read_dataset(p)

    def test_non_numeric_cell_reports_location(self, tmp_path):
        p = self.write(tmp_path / "d.csv", "y,a\n1,2\n3,x\n")
        with pytest.raises(SchemaError, match="row 3, column 'a'"):
            io.read_dataset(p)

    def test_ragged_row(self, tmp_path):
        p = self.write(tmp_path / "d.csv", "y,a\n1,2\n3\n")
        with pytest.raises(SchemaError, match="row 3"):
            io.read_dataset(p)

    def test_covariate_width(self, tmp_path):
        p = self.write(tmp_path / "x.csv", "a,b\n1,2\n")
        with pytest.raises(SchemaError, match="expected 3"):
            io.read_covariates(p, K=3)

    def test_missing_file(self, tmp_path):
        with pytest.raises(SchemaError):
            io.read_dataset(tmp_path / "none.csv")

    def test_draws_round_trip(self, tmp_path, rng):
        draws = [PredictiveDraws(rng.normal(size=5), rng.uniform(1, 2, 5), rng.normal(size=5))
                 for _ in range(3)]
        io.write_draws(tmp_path / "d.csv", draws, ["a", "b", "c"])
        labels, back = io.read_draws(tmp_path / "d.csv")
        assert labels == ["a", "b", "c"]
        for x, y in zip(draws, back):
            np.testing.assert_array_equal(x.draws, y.draws)
            np.testing.assert_array_equal(x.variances, y.variances)

    def test_draws_header_checked(self, tmp_path):
        p = self.write(tmp_path / "d.csv", "row,mean\n0,1\n")
        with pytest.raises(SchemaError):
            io.read_draws(p)


class TestConfig:
    def test_unknown_section(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("samplr:\n  n_draws: 10\n")
        with pytest.raises(ConfigError):
            io.load_config(p)

    def test_bad_yaml(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("sampler: [\n")
        with pytest.raises(ConfigError):
            io.load_config(p)

    def test_sampler_fields_and_seed(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("seed: 5\nsampler:\n  n_draws: 30\n  n_burn: 10\n")
        cfg = io.sampler_config_from(io.load_config(p))
        assert (cfg.n_draws, cfg.n_burn, cfg.seed) == (30, 10, 5)
        assert io.sampler_config_from(io.load_config(p), seed=9).seed == 9

    def test_unknown_sampler_field(self):
        with pytest.raises(ConfigError):
            io.sampler_config_from({"sampler": {"n_drawz": 3}})

    def test_manifest(self, tmp_path):
        io.write_manifest(tmp_path, "fit", {"seed": 1}, 1)
        m = json.loads((tmp_path / "manifest.json").read_text())
        assert m["config_sha256"] == io.config_hash({"seed": 1})
        assert m["seed"] == 1 and m["versions"]["numpy"] == np.__version__
