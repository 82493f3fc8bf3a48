"""Command line interface: ``tensorart {simulate,fit,irf,summarize}``.

Exit codes: 0 success, 2 invalid input or configuration, 3 numerical
failure, 130 interrupted by the user.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from math import prod
from pathlib import Path

import numpy as np

from . import io as tio
from .diagnostics import posterior_summary
from .gibbs import PriorConfig, SamplerAborted, Trace, retained_count, run_sampler
from .irf import METHODS, ShockSpec, irf_summarize_over_trace
from .model import ArtModel, check_stationarity, simulate
from .parafac import ParafacCoefficient
from .rng import make_rng
from .tensor import flat_index

log = logging.getLogger("tensorart")

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC, EXIT_ABORT = 0, 2, 3, 130
MAX_REJECTIONS = 1000


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# configuration

_PRIOR_KEYS = {f.name for f in fields(PriorConfig)} - {"R"}


@dataclass
class RunConfig:
    dims: tuple
    p: int = 1
    R: int = 1
    prior: dict = field(default_factory=dict)
    iters: int = 100_000
    burn_in: int = 30_000
    thin: int = 2
    seed: int = 0
    chains: int = 1
    hmc: bool = False
    data_path: Path | None = None
    data_format: str = "csv_long"
    T: int = 200
    sim_burn_in: int = 100
    rho_bound: float = 0.95
    model_path: Path | None = None
    trace_paths: list = field(default_factory=list)
    shock: dict | None = None
    H: int = 10
    methods: tuple = METHODS
    out: Path = Path(".")

    def priors(self) -> PriorConfig:
        kw = dict(self.prior)
        for k in ("nu", "Psi"):
            if kw.get(k) is not None:
                kw[k] = tuple(kw[k])
        return PriorConfig(R=self.R, **kw)


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def _int(obj, key, default, minimum=None):
    v = obj.get(key, default)
    _require(isinstance(v, int) and not isinstance(v, bool), f"{key} must be an integer, got {v!r}")
    if minimum is not None:
        _require(v >= minimum, f"{key} must be >= {minimum}, got {v}")
    return v


def load_config(path: str | os.PathLike | None, overrides: dict | None = None) -> RunConfig:
    """Parse and validate a JSON run configuration.

    Relative paths are resolved against the directory holding the config.
    """
    if path is None:
        raise ConfigError("--config is required")
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    _require(isinstance(obj, dict), "config must be a JSON object")
    _require(obj.get("schema_version") == tio.SCHEMA_VERSION, f"unsupported schema_version {obj.get('schema_version')!r}; expected {tio.SCHEMA_VERSION}")
    base = path.parent
    rel = lambda p: None if p is None else (Path(p) if Path(p).is_absolute() else base / p)

    dims = obj.get("dims")
    _require(isinstance(dims, list) and dims and all(isinstance(d, int) and d >= 1 for d in dims), f"dims must be a list of positive integers, got {dims!r}")
    prior = obj.get("prior", {}) or {}
    unknown = set(prior) - _PRIOR_KEYS
    _require(not unknown, f"unknown prior keys: {sorted(unknown)}")
    s = obj.get("sampler", {}) or {}
    d = obj.get("data", {}) or {}
    sim = obj.get("simulate", {}) or {}
    ir = obj.get("irf", {}) or {}
    cfg = RunConfig(
        dims=tuple(dims),
        p=_int(obj, "p", 1, 1),
        R=_int(obj, "R", 1, 1),
        prior=prior,
        iters=_int(s, "iters", 100_000, 1),
        burn_in=_int(s, "burn_in", 30_000, 0),
        thin=_int(s, "thin", 2, 1),
        seed=_int(s, "seed", 0, 0),
        chains=_int(s, "chains", 1, 1),
        hmc=bool(s.get("hmc", False)),
        data_path=rel(d.get("path")),
        data_format=d.get("format", "csv_long"),
        T=_int(sim, "T", 200, 1),
        sim_burn_in=_int(sim, "burn_in", 100, 0),
        rho_bound=float(sim.get("rho_bound", 0.95)),
        model_path=rel(sim.get("model")),
        trace_paths=[rel(p) for p in ir.get("traces", [])],
        shock=ir.get("shock"),
        H=_int(ir, "H", 10, 0),
        methods=tuple(ir.get("methods", METHODS)),
        out=rel(obj.get("out", ".")),
    )
    for k, v in (overrides or {}).items():
        if v is not None:
            setattr(cfg, k, v)
    _require(0 <= cfg.seed < 2**64, f"seed must be an unsigned 64-bit integer, got {cfg.seed}")
    _require(cfg.chains >= 1, "chains must be >= 1")
    _require(cfg.burn_in <= cfg.iters, f"burn_in ({cfg.burn_in}) exceeds iters ({cfg.iters})")
    _require(cfg.data_format in ("csv_long", "ndjson"), f"unknown data format {cfg.data_format!r}")
    _require(0 < cfg.rho_bound <= 1, f"rho_bound must lie in (0, 1], got {cfg.rho_bound}")
    _require(all(m in METHODS for m in cfg.methods), f"irf methods must be among {METHODS}")
    return cfg


# --------------------------------------------------------------------------
# simulate


def random_stable_model(dims, R, rng, rho_bound=0.95, max_tries=MAX_REJECTIONS) -> ArtModel:
    """Random PARAFAC ART(1) with random mode covariances, rejection-sampled until ``rho < rho_bound``."""
    dims = tuple(dims)
    n = prod(dims)
    covs = []
    for d in dims:
        M = rng.standard_normal((d, d))
        covs.append(M @ M.T / d + 0.5 * np.eye(d))
    for _ in range(max_tries):
        facs = [rng.standard_normal((d, R)) for d in dims]
        facs.append(rng.standard_normal((n, R)) * 0.5 / np.sqrt(n * R))
        model = ArtModel(dims, (ParafacCoefficient.from_factors(facs),), tuple(covs))
        if check_stationarity(model)["rho"] < rho_bound:
            return model
    raise ArithmeticError(f"no model with rho < {rho_bound} after {max_tries} draws")


def cmd_simulate(cfg: RunConfig) -> dict:
    _require(cfg.p == 1 or cfg.model_path is not None, "random model generation supports p = 1 only; pass simulate.model for p > 1")
    if cfg.model_path is not None:
        model = tio.load_model(cfg.model_path)
        _require(model.dims == cfg.dims, f"model dims {model.dims} do not match config dims {cfg.dims}")
    else:
        model = random_stable_model(cfg.dims, cfg.R, make_rng(cfg.seed, 0, "model"), cfg.rho_bound)
    rho = check_stationarity(model)["rho"]
    series = simulate(model, cfg.T, rng=make_rng(cfg.seed, 0, "data"), burn_in=cfg.sim_burn_in)
    cfg.out.mkdir(parents=True, exist_ok=True)
    tio.write_tensor_series(series, cfg.out / "series.csv")
    tio.write_model(model, cfg.out / "model.json", {"rho": rho, "seed": cfg.seed})
    return {"series": str(cfg.out / "series.csv"), "model": str(cfg.out / "model.json"), "rho": rho}


# --------------------------------------------------------------------------
# fit


def _thread_cap(chains: int) -> int:
    env = os.environ.get("TENSORART_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            raise ConfigError(f"TENSORART_THREADS must be a positive integer, got {env!r}") from None
    return max(1, min(chains, cap))


def _run_chain(args):
    """Run one chain and stream its draws to ``path``; returns the in-memory trace."""
    series, priors, cfg_dict, chain, path = args
    writer = tio.AtomicWriter(path)

    def on_draw(it, B, state):
        writer.write(tio.trace_line(chain, it, B, state.covs, state.tau, state.gamma, state.phi))

    try:
        trace = run_sampler(
            series,
            priors,
            cfg_dict["iters"],
            cfg_dict["burn_in"],
            cfg_dict["thin"],
            seed=cfg_dict["seed"],
            chain=chain,
            hmc=cfg_dict["hmc"],
            on_draw=on_draw,
        )
    except SamplerAborted:
        writer.commit()
        os.replace(path, Path(str(path) + ".partial"))
        raise
    except BaseException:
        writer.discard()
        raise
    writer.commit()
    trace.meta.pop("final_state", None)
    return trace


def cmd_fit(cfg: RunConfig) -> dict:
    _require(cfg.data_path is not None, "data.path is required for fit")
    _require(cfg.p == 1, f"the sampler fits ART(1) models only; got p = {cfg.p}")
    series = tio.load_tensor_series(cfg.data_path, cfg.data_format)
    _require(series.dims == cfg.dims, f"data dims {series.dims} do not match config dims {cfg.dims}")
    _require(series.T >= 2, "need at least two observations")
    priors = cfg.priors()
    priors.resolve(cfg.dims)
    cfg.out.mkdir(parents=True, exist_ok=True)
    cd = {"iters": cfg.iters, "burn_in": cfg.burn_in, "thin": cfg.thin, "seed": cfg.seed, "hmc": cfg.hmc}
    jobs = [(series, priors, cd, c, cfg.out / f"trace_chain{c}.ndjson") for c in range(cfg.chains)]
    workers = _thread_cap(cfg.chains)
    if workers == 1:
        traces = [_run_chain(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            traces = list(ex.map(_run_chain, jobs))
    summary = _summary_dict(traces)
    summary["retained_per_chain"] = retained_count(cfg.iters, cfg.burn_in, cfg.thin)
    summary["sampler"] = {**cd, "chains": cfg.chains, "R": cfg.R}
    summary["chain_meta"] = [t.meta for t in traces]
    tio.write_json(cfg.out / "summary.json", summary)
    _write_coefficients(traces, cfg.out / "coefficients.csv")
    return {"traces": [str(j[-1]) for j in jobs], "summary": str(cfg.out / "summary.json"), "rho": summary["rho_posterior_mean"]}


def _summary_dict(traces) -> dict:
    s = posterior_summary(traces)
    out = {k: v for k, v in s.items() if k not in ("B", "covs")}
    out["B"] = {k: np.asarray(v).reshape(-1, order="F") for k, v in s["B"].items()}
    out["covs"] = [{k: np.asarray(v).reshape(-1, order="F") for k, v in c.items()} for c in s["covs"]]
    out["layout"] = "tensors are column-major flat lists; B has dims + [prod(dims)]; covs are normalised so Sigma_j[1,1] = 1 for j >= 2"
    return out


def _write_coefficients(traces, path) -> None:
    """Heat-map table of the contracted coefficient: response index, regressor index, mean and 90% band."""
    dims = traces[0].dims
    N, n = len(dims), prod(dims)
    B = np.concatenate([t.B for t in traces])
    mean = B.mean(axis=0).reshape(n, n, order="F")
    lo, hi = (np.quantile(B, q, axis=0).reshape(n, n, order="F") for q in (0.05, 0.95))
    header = [f"i{k + 1}" for k in range(N)] + [f"j{k + 1}" for k in range(N)] + ["mean", "q05", "q95"]
    lines = [",".join(header)]
    for c in range(n):
        jdx = np.unravel_index(c, dims, order="F")
        for r in range(n):
            idx = np.unravel_index(r, dims, order="F")
            lines.append(",".join([str(int(i) + 1) for i in idx] + [str(int(j) + 1) for j in jdx] + [tio.fmt_float(v) for v in (mean[r, c], lo[r, c], hi[r, c])]))
    tio.atomic_write_text(path, "\n".join(lines) + "\n")


# --------------------------------------------------------------------------
# irf and summarize


def _trace_paths(cfg: RunConfig):
    paths = cfg.trace_paths or sorted(cfg.out.glob("trace_chain*.ndjson"))
    _require(paths, "no trace files given (irf.traces) or found in the output directory")
    for p in paths:
        _require(Path(p).exists(), f"trace file {p} does not exist")
    return paths


def _load_traces(cfg: RunConfig):
    traces = [tio.load_trace(p, cfg.dims) for p in _trace_paths(cfg)]
    _require(all(len(t) for t in traces), "trace file contains no draws")
    return traces


def _merge(traces) -> Trace:
    if len(traces) == 1:
        return traces[0]
    t0 = traces[0]
    return Trace(
        t0.dims,
        np.concatenate([t.iterations for t in traces]),
        np.concatenate([t.B for t in traces]),
        [np.concatenate([t.covs[j] for t in traces]) for j in range(len(t0.dims))],
        np.concatenate([t.tau for t in traces]),
        np.concatenate([t.gamma for t in traces]),
        np.concatenate([t.phi for t in traces]),
    )


def parse_shock(spec: dict | None, dims) -> ShockSpec:
    """``{"indices": [[i1..iN], ...], "delta": [...]}`` with 1-based tensor indices."""
    _require(isinstance(spec, dict), "irf.shock must be an object with 'indices' and 'delta'")
    indices = spec.get("indices")
    delta = spec.get("delta")
    _require(isinstance(indices, list) and indices, "irf.shock.indices must be a nonempty list")
    flat = []
    for idx in indices:
        _require(isinstance(idx, list) and len(idx) == len(dims), f"shock index {idx!r} must have {len(dims)} entries")
        _require(all(isinstance(i, int) and 1 <= i <= d for i, d in zip(idx, dims)), f"shock index {idx} out of range for dims {tuple(dims)}")
        flat.append(flat_index([i - 1 for i in idx], dims))
    if delta is None:
        delta = [1.0] * len(flat)
    _require(isinstance(delta, list) and len(delta) == len(flat), "irf.shock.delta must list one value per shocked index")
    return ShockSpec.block(flat, delta, prod(dims))


def cmd_irf(cfg: RunConfig) -> dict:
    shock = parse_shock(cfg.shock, cfg.dims)
    trace = _merge(_load_traces(cfg))
    sums = [irf_summarize_over_trace(trace, shock, cfg.H, m) for m in cfg.methods]
    cfg.out.mkdir(parents=True, exist_ok=True)
    rows = tio.write_irf_grid(sums, cfg.out / "irf.csv")
    return {"irf": str(cfg.out / "irf.csv"), "rows": rows}


def cmd_summarize(cfg: RunConfig) -> dict:
    traces = _load_traces(cfg)
    cfg.out.mkdir(parents=True, exist_ok=True)
    tio.write_json(cfg.out / "summary.json", _summary_dict(traces))
    return {"summary": str(cfg.out / "summary.json")}


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "irf": cmd_irf, "summarize": cmd_summarize}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tensorart", description="Bayesian PARAFAC tensor autoregression")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--seed", type=int, help="override sampler.seed (unsigned 64-bit)")
    ap.add_argument("--out", help="output directory (overrides config 'out')")
    ap.add_argument("--chains", type=int, help="number of chains (overrides sampler.chains)")
    ap.add_argument("--quiet", action="store_true", help="only report errors")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(
            args.config,
            {"seed": args.seed, "chains": args.chains, "out": Path(args.out) if args.out else None},
        )
        result = COMMANDS[args.command](cfg)
    except KeyboardInterrupt:
        log.error("interrupted")
        return EXIT_ABORT
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_INVALID
    except ArithmeticError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    if not args.quiet:
        print(json.dumps(tio._jsonable(result)))
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
