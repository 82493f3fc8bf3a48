import csv
import json
import os
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tensorart import cli
from tensorart import io as tio
from tensorart.gibbs import Trace, retained_count
from tensorart.model import ArtModel, TensorSeries, check_stationarity, coef_from_var_matrix
from tensorart.parafac import ParafacCoefficient

from conftest import random_spd


def write_config(path, **sections):
    cfg = {"schema_version": 1}
    cfg.update(sections)
    path.write_text(json.dumps(cfg))
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# -- series -----------------------------------------------------------------------


def test_single_cell_series(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("t,i1,i2,i3,value\n1,1,1,1,3.5\n")
    s = tio.load_tensor_series(p)
    assert s.T == 1 and s.dims == (1, 1, 1)
    assert s.data[0, 0, 0, 0] == 3.5


def test_application_shaped_series(tmp_path, rng):
    data = rng.standard_normal((14, 10, 10, 2))
    p = tmp_path / "trade.csv"
    tio.write_tensor_series(TensorSeries(data), p)
    assert len(p.read_text().splitlines()) == 1 + 14 * 200
    s = tio.load_tensor_series(p, dims=(10, 10, 2))
    assert s.T == 14
    np.testing.assert_array_equal(s.data, data)


def test_rows_sorted_by_time(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("t,i1,value\n2,1,20\n2,2,21\n1,2,11\n1,1,10\n")
    s = tio.load_tensor_series(p)
    np.testing.assert_array_equal(s.data, [[10, 11], [20, 21]])


@pytest.mark.parametrize(
    "body, line, text",
    [
        ("1,1,1\n1,2,2\n1,1,3\n", 4, "duplicate"),
        ("1,1,1\n1,3,2\n", 3, "out of range"),
        ("1,1,1\n1,2,abc\n", 3, "not numeric"),
        ("1,1,1\n1,x,2\n", 3, "not an integer"),
    ],
)
def test_series_errors_name_line(tmp_path, body, line, text):
    p = tmp_path / "bad.csv"
    p.write_text("t,i1,value\n" + body)
    with pytest.raises(tio.FormatError, match=rf":{line}:.*{text}"):
        tio.load_tensor_series(p, dims=(2,))


def test_series_missing_cell_and_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("t,i1,i2,value\n1,1,1,1\n1,2,2,1\n")
    with pytest.raises(tio.FormatError, match="missing cell"):
        tio.load_tensor_series(p)
    p.write_text("time,i1,value\n1,1,1\n")
    with pytest.raises(tio.FormatError, match=":1:"):
        tio.load_tensor_series(p)
    with pytest.raises(tio.FormatError):
        tio.load_tensor_series(tmp_path / "nope.csv")


def test_ndjson_series(tmp_path, rng):
    data = rng.standard_normal((5, 2, 3))
    p = tmp_path / "s.ndjson"
    tio.write_tensor_series(TensorSeries(data), p, "ndjson")
    np.testing.assert_array_equal(tio.load_tensor_series(p, "ndjson").data, data)
    lines = p.read_text().splitlines()
    p.write_text("\n".join([lines[0], lines[1], lines[0]]) + "\n")
    with pytest.raises(tio.FormatError, match=":3: duplicate"):
        tio.load_tensor_series(p, "ndjson")


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=50, deadline=None)
@given(st.lists(finite, min_size=6, max_size=6))
def test_series_round_trip_bit_exact(tmp_path_factory, values):
    d = tmp_path_factory.mktemp("rt")
    data = np.array(values).reshape(1, 3, 2)
    for fmt in ("csv_long", "ndjson"):
        p = d / f"s.{fmt}"
        tio.write_tensor_series(TensorSeries(data), p, fmt)
        back = tio.load_tensor_series(p, fmt).data
        assert back.tobytes() == data.tobytes()


def test_model_round_trip(tmp_path, rng):
    dims = (2, 3)
    facs = [rng.standard_normal((d, 2)) for d in dims] + [rng.standard_normal((6, 2)) / 7]
    m = ArtModel(dims, (ParafacCoefficient.from_factors(facs), rng.standard_normal(dims + (6,)) / 9),
                 (random_spd(rng, 2), random_spd(rng, 3)))
    p = tmp_path / "m.json"
    tio.write_model(m, p)
    back = tio.load_model(p)
    assert back.dims == dims and back.p == 2
    for a, b in zip(m.coefs, back.coefs):
        assert a.tobytes() == b.tobytes()
    for a, b in zip(m.covs, back.covs):
        assert a.tobytes() == b.tobytes()


def test_trace_round_trip(tmp_path, rng):
    dims = (2, 1)
    k = 4
    tr = Trace(dims, np.arange(2, 2 + 2 * k, 2), rng.standard_normal((k, 2, 1, 2)),
               [np.stack([random_spd(rng, 2) for _ in range(k)]), rng.random((k, 1, 1)) + 1],
               rng.random(k), rng.random(k), rng.dirichlet([1, 1], k))
    p = tmp_path / "t.ndjson"
    tio.write_trace(tr, p)
    back = tio.load_trace(p, dims)
    for name in ("iterations", "B", "tau", "gamma", "phi"):
        assert getattr(back, name).tobytes() == getattr(tr, name).tobytes()
    for a, b in zip(tr.covs, back.covs):
        assert a.tobytes() == b.tobytes()
    rec = json.loads(p.read_text().splitlines()[0])
    assert set(rec) == {"chain", "iteration", "B", "Sigma", "tau", "gamma", "phi"}


def test_atomic_writes(tmp_path):
    p = tmp_path / "out.txt"
    p.write_text("old")
    w = tio.AtomicWriter(p)
    w.write("new contents")
    assert p.read_text() == "old"  # nothing visible before commit
    w.discard()
    assert p.read_text() == "old"
    assert os.listdir(tmp_path) == ["out.txt"]
    with pytest.raises(RuntimeError):
        with tio.AtomicWriter(p) as w:
            w.write("partial")
            raise RuntimeError("boom")
    assert p.read_text() == "old"
    assert os.listdir(tmp_path) == ["out.txt"]
    tio.atomic_write_text(p, "done\n")
    assert p.read_bytes() == b"done\n"


# -- CLI: simulate --------------------------------------------------------------------


def sim_config(tmp_path, dims=(2, 2, 1), T=20, seed=7, **sim):
    return write_config(tmp_path / "cfg.json", dims=list(dims), R=1, sampler={"seed": seed},
                        simulate={"T": T, **sim}, out="out")


def test_simulate_byte_identical(tmp_path):
    cfg = sim_config(tmp_path)
    assert cli.main(["simulate", "--config", str(cfg), "--quiet"]) == 0
    first = {n: (tmp_path / "out" / n).read_bytes() for n in ("series.csv", "model.json")}
    assert cli.main(["simulate", "--config", str(cfg), "--quiet"]) == 0
    for n, b in first.items():
        assert (tmp_path / "out" / n).read_bytes() == b
    assert cli.main(["simulate", "--config", str(cfg), "--quiet", "--seed", "8"]) == 0
    assert (tmp_path / "out" / "series.csv").read_bytes() != first["series.csv"]


def test_simulate_rho_bound(tmp_path):
    cfg = sim_config(tmp_path, dims=(3, 2), rho_bound=0.5)
    assert cli.main(["simulate", "--config", str(cfg), "--quiet"]) == 0
    info = json.loads((tmp_path / "out" / "model.json").read_text())
    model = tio.load_model(tmp_path / "out" / "model.json")
    assert info["rho"] <= 0.5
    assert check_stationarity(model)["rho"] <= 0.5


def test_simulate_row_count(tmp_path):
    cfg = sim_config(tmp_path, dims=(3, 3, 2), T=200)
    assert cli.main(["simulate", "--config", str(cfg), "--quiet"]) == 0
    lines = (tmp_path / "out" / "series.csv").read_bytes().split(b"\n")
    assert lines[-1] == b"" and b"\r" not in lines[0]
    assert len(lines) - 2 == 200 * 18


def test_simulate_unsatisfiable(rng):
    with pytest.raises(ArithmeticError):
        cli.random_stable_model((2, 2), 1, rng, rho_bound=1e-9, max_tries=20)


# -- CLI: fit ---------------------------------------------------------------------------


def fit_config(tmp_path, iters=200, burn_in=100, thin=2, seed=3, chains=1, dims=(2, 2, 1), T=20):
    sim = sim_config(tmp_path, dims=dims, T=T, seed=11)
    assert cli.main(["simulate", "--config", str(sim), "--quiet"]) == 0
    return write_config(
        tmp_path / "fit.json", dims=list(dims), R=1,
        sampler={"iters": iters, "burn_in": burn_in, "thin": thin, "seed": seed, "chains": chains},
        data={"path": "out/series.csv"}, out="fit",
    )


def test_fit_tiny_run(tmp_path, monkeypatch):
    monkeypatch.setenv("TENSORART_THREADS", "1")
    cfg = fit_config(tmp_path)
    t0 = time.perf_counter()
    assert cli.main(["fit", "--config", str(cfg), "--quiet"]) == 0
    assert time.perf_counter() - t0 < 10
    out = tmp_path / "fit"
    assert len((out / "trace_chain0.ndjson").read_text().splitlines()) == (200 - 100) // 2
    s = json.loads((out / "summary.json").read_text())
    assert s["retained_per_chain"] == 50
    assert {"B", "covs", "rho_posterior_mean", "scalars"} <= set(s)
    assert {"ess", "rhat", "mean"} <= set(s["scalars"]["tau"])
    rows = read_csv(out / "coefficients.csv")
    assert rows[0] == ["i1", "i2", "i3", "j1", "j2", "j3", "mean", "q05", "q95"]
    assert len(rows) == 1 + 16


def test_fit_determinism(tmp_path, monkeypatch):
    monkeypatch.setenv("TENSORART_THREADS", "1")
    cfg = fit_config(tmp_path, iters=60, burn_in=20, chains=2)
    out = tmp_path / "fit"
    assert cli.main(["fit", "--config", str(cfg), "--quiet"]) == 0
    a = [(out / f"trace_chain{c}.ndjson").read_bytes() for c in range(2)]
    assert cli.main(["fit", "--config", str(cfg), "--quiet"]) == 0
    b = [(out / f"trace_chain{c}.ndjson").read_bytes() for c in range(2)]
    assert a == b
    assert a[0] != a[1]  # chains use distinct streams
    assert cli.main(["fit", "--config", str(cfg), "--quiet", "--seed", "4"]) == 0
    assert (out / "trace_chain0.ndjson").read_bytes() != a[0]


def test_fit_dimension_mismatch(tmp_path):
    cfg = fit_config(tmp_path)
    obj = json.loads(cfg.read_text())
    obj["dims"] = [4, 1, 1]
    cfg.write_text(json.dumps(obj))
    assert cli.main(["fit", "--config", str(cfg), "--quiet"]) == 2
    assert not (tmp_path / "fit").exists()


def test_retained_arithmetic():
    assert retained_count(100_000, 30_000, 2) == 35_000
    assert retained_count(200, 100, 2) == 50


# -- CLI: irf and summarize ---------------------------------------------------------------


def point_trace(tmp_path, B, covs, name="trace.ndjson"):
    tr = Trace(tuple(B.shape[:-1]), np.array([1]), B[None], [S[None] for S in covs],
               np.ones(1), np.ones(1), np.ones((1, 1)))
    p = tmp_path / name
    tio.write_trace(tr, p)
    return p


def irf_config(tmp_path, dims, trace, H, indices, delta=None, methods=("girf", "oirf")):
    shock = {"indices": indices}
    if delta is not None:
        shock["delta"] = delta
    return write_config(tmp_path / "irf.json", dims=list(dims),
                        irf={"traces": [str(trace)], "shock": shock, "H": H, "methods": list(methods)}, out="irfout")


def test_irf_identity_point_trace(tmp_path):
    dims = (2, 2, 1)
    tr = point_trace(tmp_path, np.zeros(dims + (4,)), [np.eye(2), np.eye(2), np.eye(1)])
    cfg = irf_config(tmp_path, dims, tr, 0, [[2, 1, 1]], [1.0])
    assert cli.main(["irf", "--config", str(cfg), "--quiet"]) == 0
    rows = read_csv(tmp_path / "irfout" / "irf.csv")
    assert rows[0] == ["method", "h", "i1", "i2", "i3", "response", "q16", "q84", "q05", "q95", "significant"]
    assert len(rows) - 1 == 2 * 1 * 4
    for method in ("girf", "oirf"):
        nz = [r for r in rows[1:] if r[0] == method and float(r[5]) != 0.0]
        assert len(nz) == 1 and nz[0][2:5] == ["2", "1", "1"] and float(nz[0][5]) == 1.0


def test_irf_diagonal_decay(tmp_path):
    dims = (2, 1)
    B = coef_from_var_matrix(0.6 * np.eye(2), dims)
    tr = point_trace(tmp_path, B, [np.eye(2), np.eye(1)])
    cfg = irf_config(tmp_path, dims, tr, 5, [[1, 1]], methods=("oirf",))
    assert cli.main(["irf", "--config", str(cfg), "--quiet"]) == 0
    resp = [float(r[4]) for r in read_csv(tmp_path / "irfout" / "irf.csv")[1:] if r[2] == "1"]
    np.testing.assert_allclose(resp, 0.6 ** np.arange(6), rtol=1e-12)


def test_irf_row_count_and_determinism(tmp_path, rng):
    dims = (3, 3, 2)
    covs = [random_spd(rng, d) for d in dims]
    B = coef_from_var_matrix(0.3 * np.eye(18), dims)
    tr = point_trace(tmp_path, B, covs)
    cfg = irf_config(tmp_path, dims, tr, 2, [[1, 2, 1], [3, 3, 2]], [1.0, -0.5])
    assert cli.main(["irf", "--config", str(cfg), "--quiet"]) == 0
    out = tmp_path / "irfout" / "irf.csv"
    first = out.read_bytes()
    assert len(first.decode().splitlines()) - 1 == 108
    assert cli.main(["irf", "--config", str(cfg), "--quiet"]) == 0
    assert out.read_bytes() == first


def test_irf_shock_out_of_range(tmp_path):
    dims = (2, 1)
    tr = point_trace(tmp_path, np.zeros(dims + (2,)), [np.eye(2), np.eye(1)])
    cfg = irf_config(tmp_path, dims, tr, 1, [[3, 1]])
    assert cli.main(["irf", "--config", str(cfg), "--quiet"]) == 2
    with pytest.raises(cli.ConfigError):
        cli.parse_shock({"indices": [[0, 1]]}, dims)


def test_summarize(tmp_path):
    dims = (2, 1)
    tr = point_trace(tmp_path, np.zeros(dims + (2,)), [np.eye(2), np.eye(1)])
    cfg = irf_config(tmp_path, dims, tr, 1, [[1, 1]])
    assert cli.main(["summarize", "--config", str(cfg), "--quiet"]) == 0
    s = json.loads((tmp_path / "irfout" / "summary.json").read_text())
    assert s["draws"] == 1 and s["stationary"]


# -- exit codes and config validation ------------------------------------------------------


def test_exit_codes(tmp_path, monkeypatch):
    assert cli.main(["simulate", "--config", str(tmp_path / "missing.json")]) == 2
    assert cli.main(["bogus", "--config", "x"]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["simulate", "--config", str(bad)]) == 2
    cfg = write_config(tmp_path / "v.json", dims=[2], schema_version=2)
    assert cli.main(["simulate", "--config", str(cfg)]) == 2
    cfg = write_config(tmp_path / "b.json", dims=[2, 2], sampler={"iters": 10, "burn_in": 20})
    assert cli.main(["simulate", "--config", str(cfg)]) == 2
    cfg = sim_config(tmp_path, rho_bound=1e-12)
    assert cli.main(["simulate", "--config", str(cfg), "--quiet"]) == 3

    def interrupt(cfg):
        raise KeyboardInterrupt

    monkeypatch.setitem(cli.COMMANDS, "simulate", interrupt)
    assert cli.main(["simulate", "--config", str(sim_config(tmp_path))]) == 130


def test_config_paths_relative(tmp_path):
    sub = tmp_path / "conf"
    sub.mkdir()
    cfg = write_config(sub / "c.json", dims=[2], data={"path": "d.csv"}, out="o")
    rc = cli.load_config(cfg)
    assert rc.data_path == sub / "d.csv" and rc.out == sub / "o"
    assert (rc.iters, rc.burn_in, rc.thin) == (100_000, 30_000, 2)
    with pytest.raises(cli.ConfigError, match="unknown prior"):
        cli.load_config(write_config(sub / "p.json", dims=[2], prior={"bogus": 1}))
