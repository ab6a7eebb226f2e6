import json

import numpy as np
import pytest

from sim_spline import serialize
from sim_spline.exceptions import DataError
from sim_spline.inference import BandResult
from sim_spline.model import FitConfig, predict, predict_g


def test_fit_round_trip(tmp_path, sim_data, sim_fit):
    data, _ = sim_data
    path = tmp_path / "fit.json"
    serialize.save_fit(sim_fit, path)
    back = serialize.load_fit(path)
    s = np.linspace(*sim_fit.index_range, 57)
    np.testing.assert_array_equal(predict_g(back, s), predict_g(sim_fit, s))
    np.testing.assert_array_equal(predict(back, data.x, data.z), predict(sim_fit, data.x, data.z))
    np.testing.assert_array_equal(back.eig.phi, sim_fit.eig.phi)
    np.testing.assert_array_equal(back.eig.dphi, sim_fit.eig.dphi)
    assert back.config == sim_fit.config
    assert serialize.dumps(serialize.fit_to_dict(back)) == path.read_text()


def test_config_round_trip():
    cfg = FitConfig(m=2, v=12, lam=0.01, seed=9)
    d = json.loads(json.dumps(serialize.config_to_dict(cfg)))
    assert serialize.config_from_dict(d) == cfg


def test_malformed_documents(tmp_path, sim_fit):
    doc = serialize.fit_to_dict(sim_fit)
    with pytest.raises(DataError):
        serialize.fit_from_dict({**doc, "schema": "other/0"})
    broken = dict(doc)
    del broken["beta"]
    with pytest.raises(DataError):
        serialize.fit_from_dict(broken)
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(DataError):
        serialize.load_fit(bad)


def test_band_csv_exact():
    gen = np.random.default_rng(0)
    grid = np.linspace(-1, 1, 11)
    center = gen.normal(size=11)
    band = BandResult(grid=grid, center=center, lower=center - 0.1 / 3,
                      upper=center + 0.1 / 3, quantile=1.7, scale=0.1 / 3 / 1.7, alpha=0.05,
                      B=100)
    lines = serialize.band_csv(band).splitlines()
    assert lines[0] == "s,center,lower,upper"
    rows = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    np.testing.assert_array_equal(rows, np.column_stack([grid, center, band.lower, band.upper]))
