"""Experiment stages: forward data, perturbation, reconstruction and evaluation.

Every stage reads and writes plain files in the output directory, so the
stages can run one at a time from the command line or chained by :func:`run`.
Artifacts hold no timestamps; wall-clock timings go to ``run.log``.
"""

from __future__ import annotations

import datetime as _dt
import math
import time
from dataclasses import dataclass

import numpy as np

from . import jsonio
from .budget import cascade
from .config import (EXIT_CONFIG, EXIT_EMPTY, EXIT_OK, EXIT_SOLVER, ConfigError, ExperimentConfig)
from .metric import evaluate_run, linf_space_json
from .models import (BoundaryPartition, ModelManifold, SpectralDataset, build_model, make_partition,
                     perturb_dataset, true_boundary_distances, true_volumes)
from .projection import SolverError
from .reconstruct import (BoundaryDistanceFn, ReconstructionParams, ReconstructionTooLarge, RStar,
                          build_rstar, rstar_labels)
from .volumes import VolumeOracle, VolumeParams, format_key, key_to_alpha

REPORT_SCHEMA = "gelfand-report/1"

DATASET_EXACT = "dataset_exact.json"
DATASET = "dataset.json"
VOLUMES = "volumes.csv"
RSTAR = "rstar.json"
XSPACE = "X.json"
REPORT = "report.json"
ERROR = "error.json"
LOG = "run.log"
ARTIFACTS = (DATASET, VOLUMES, RSTAR, XSPACE, REPORT)
VOLUME_HEADER = ["alpha_key", "vol_a", "vol_true", "abs_err", "solver_iters"]


class StageError(RuntimeError):
    """A stage failed; ``code`` is the process exit code to report."""

    def __init__(self, code: int, stage: str, message: str, field: str | None = None):
        super().__init__(message)
        self.code = code
        self.stage = stage
        self.field = field

    def to_json(self) -> dict:
        out = {"status": "error", "code": self.code, "stage": self.stage, "message": str(self)}
        if self.field is not None:
            out["field"] = self.field
        return out


@dataclass(frozen=True)
class RuntimeParams:
    """Values that feed the solver, either from the config or from the cascade."""

    J: int
    delta: float
    Lambda: float
    gamma: float
    eps1: float
    C0: float
    C0p: float


def log_line(cfg: ExperimentConfig, message: str) -> None:
    cfg.output.mkdir(parents=True, exist_ok=True)
    stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    with open(cfg.output / LOG, "a") as fh:
        fh.write(f"{stamp} {cfg.name} {message}\n")


def runtime_params(cfg: ExperimentConfig) -> RuntimeParams:
    vol = cfg.raw["volume"]
    if cfg.raw["mode"] == "preset":
        return RuntimeParams(cfg.J, cfg.delta, vol["Lambda"], vol["gamma"], vol["eps1"], vol["C0"], vol["C0p"])
    gc = cfg.geometry
    if not 0 < cfg.eta < 1:
        raise ConfigError("eta", "the reference cascade needs eta in (0, 1)")
    ps = cascade(cfg.eta, gc)
    J = ps.J_int
    limit = cfg.raw["cascade_max_J"]
    if ps.flagged or J is None or J > limit:
        raise ConfigError("mode", "reference cascade leaves double range or exceeds cascade_max_J "
                          f"(flagged stages: {', '.join(ps.underflow) or 'none'}); use mode 'preset'")
    return RuntimeParams(J, ps.delta.to_float(), gc.Lambda, ps.gamma.to_float(), ps.eps1.to_float(),
                         gc.C0, gc.C0p)


def geometry_model(cfg: ExperimentConfig, J: int = 2) -> ModelManifold:
    model, _ = build_model(cfg.model, J, **cfg.resolution)
    return model


def partition_for(cfg: ExperimentConfig, model: ModelManifold) -> BoundaryPartition:
    try:
        return make_partition(model, cfg.eta, cfg.raw["partition"])
    except ValueError as exc:
        raise ConfigError("eta", str(exc)) from None


def reconstruction_params(cfg: ExperimentConfig, model: ModelManifold) -> ReconstructionParams:
    rec = cfg.raw["reconstruction"]
    D = rec["D"] if rec["D"] is not None else model.diameter
    try:
        return ReconstructionParams(eta=cfg.eta, i0=rec["i0"], L=rec["L"], D=D, n=model.n,
                                    eps=rec["eps"], max_points=rec["max_points"])
    except ValueError as exc:
        raise ConfigError("reconstruction", str(exc)) from None


# -- stages ------------------------------------------------------------------


def stage_forward(cfg: ExperimentConfig) -> SpectralDataset:
    rp = runtime_params(cfg)
    _, ds = build_model(cfg.model, rp.J, **cfg.resolution)
    jsonio.write_json(cfg.output / DATASET_EXACT, ds.to_json())
    return ds


def stage_perturb(cfg: ExperimentConfig) -> SpectralDataset:
    rp = runtime_params(cfg)
    src = cfg.output / DATASET_EXACT
    if not src.is_file():
        raise StageError(EXIT_CONFIG, "perturb", f"missing {src}; run the forward stage first", "output")
    exact = SpectralDataset.from_json(jsonio.read_json(src))
    if not exact.exact:
        raise StageError(EXIT_CONFIG, "perturb", f"{src} already holds perturbed data", "output")
    ds = perturb_dataset(exact, rp.delta, cfg.seed) if rp.delta > 0 else exact
    jsonio.write_json(cfg.output / DATASET, ds.to_json())
    return ds


def rstar_to_json(rstar: RStar, params: ReconstructionParams, N: int, stats: dict | None = None) -> dict:
    slices = [{"query": list(q), "volume": v} for q, v in sorted(rstar.slice_volumes.items(), key=_query_order)]
    return {"eta": rstar.eta, "N": N, "threshold": params.threshold, "i0": params.i0, "L": params.L,
            "D": params.D, "stats": stats or {}, "functions": rstar.to_json(), "slices": slices}


def _query_order(item) -> tuple:
    q = item[0]
    return (q[0], q[1]) if q[0] == "inner" else (q[0], (), *q[1:])


def rstar_from_json(obj: dict) -> RStar:
    funcs = [BoundaryDistanceFn(tuple(f["beta"]), tuple(f["values"]), f["route"]) for f in obj["functions"]]
    slices = {}
    for s in obj["slices"]:
        q = s["query"]
        key = ("inner", tuple(q[1])) if q[0] == "inner" else tuple(q)
        slices[key] = s["volume"]
    return RStar(funcs, slices, obj["eta"])


def stage_reconstruct(cfg: ExperimentConfig) -> tuple[RStar, dict]:
    rp = runtime_params(cfg)
    src = cfg.output / DATASET
    if not src.is_file():
        raise StageError(EXIT_CONFIG, "reconstruct", f"missing {src}; run forward and perturb first", "output")
    ds = SpectralDataset.from_json(jsonio.read_json(src))
    model = geometry_model(cfg)
    if ds.n_boundary != len(model.boundary_weights):
        raise StageError(EXIT_CONFIG, "reconstruct", "dataset boundary mesh does not match the model", "resolution")
    partition = partition_for(cfg, model)
    params = reconstruction_params(cfg, model)
    vparams = VolumeParams(J=rp.J, Lambda=rp.Lambda, gamma=rp.gamma, eps1=rp.eps1, C0=rp.C0, C0p=rp.C0p,
                           eta=cfg.eta, diameter=params.D)
    try:
        oracle = VolumeOracle(ds, partition, vparams, cfg.solver)
        rstar = build_rstar(oracle, params, threads=cfg.threads())
    except SolverError as exc:
        raise StageError(EXIT_SOLVER, "reconstruct", str(exc)) from None
    except ReconstructionTooLarge as exc:
        raise StageError(EXIT_CONFIG, "reconstruct", str(exc), "reconstruction.max_points") from None

    keys = sorted(oracle.cache.records)
    truths = true_volumes(model, partition, [key_to_alpha(k, cfg.eta) for k in keys])
    rows = []
    for key, truth in zip(keys, truths):
        rec = oracle.cache.records[key]
        rows.append([format_key(key, cfg.eta), rec.value, float(truth), abs(rec.value - float(truth)),
                     rec.iterations])
    stats = {
        "N": partition.N,
        "n_volumes": len(oracle.cache),
        "clamped_volumes": oracle.cache.clamped_volumes,
        "clamped_slices": oracle.cache.clamped_slices,
        "unconverged_solves": sum(not r.converged for r in oracle.cache.records.values()),
    }
    jsonio.write_csv(cfg.output / VOLUMES, VOLUME_HEADER, rows)
    jsonio.write_json(cfg.output / RSTAR, rstar_to_json(rstar, params, partition.N, stats))
    width = partition.N
    points = rstar.values if len(rstar) else np.zeros((0, width))
    jsonio.write_json(cfg.output / XSPACE, linf_space_json(rstar_labels(rstar), points))
    return rstar, stats


def stage_evaluate(cfg: ExperimentConfig) -> dict:
    rp = runtime_params(cfg)
    src = cfg.output / RSTAR
    if not src.is_file():
        raise StageError(EXIT_CONFIG, "evaluate", f"missing {src}; run reconstruct first", "output")
    obj = jsonio.read_json(src)
    rstar = rstar_from_json(obj)
    model = geometry_model(cfg)
    partition = partition_for(cfg, model)
    ev = cfg.raw["evaluation"]
    truth = true_boundary_distances(model, partition, ev["sample_spacing"])
    report = evaluate_run(rstar.values, truth, eta=cfg.eta, delta=rp.delta, J=rp.J, seed=cfg.seed,
                          restarts=ev["gh_restarts"], sweeps=ev["gh_sweeps"], gh_max_points=ev["gh_max_points"])
    routes = {"interior": 0, "boundary": 0}
    for f in rstar.functions:
        routes[f.route] += 1
    report.update({"schema": REPORT_SCHEMA, "name": cfg.name, "model": cfg.model, "seed": cfg.seed,
                   "mode": cfg.raw["mode"], "routes": routes, "sqrt_eta": math.sqrt(cfg.eta)})
    report.update(obj.get("stats", {}))
    report["threshold"] = obj["threshold"]
    jsonio.write_json(cfg.output / REPORT, report)
    if report["status"] != "ok":
        raise StageError(EXIT_EMPTY, "evaluate", "reconstruction is empty")
    return report


STAGES = {
    "forward": stage_forward,
    "perturb": stage_perturb,
    "reconstruct": stage_reconstruct,
    "evaluate": stage_evaluate,
}


def run_stage(cfg: ExperimentConfig, name: str) -> int:
    """Run one stage with error capture; returns the exit code."""
    start = time.perf_counter()
    try:
        STAGES[name](cfg)
    except ConfigError as exc:
        return _fail(cfg, StageError(EXIT_CONFIG, name, exc.message, exc.field))
    except StageError as exc:
        return _fail(cfg, exc)
    except OSError as exc:
        return _fail(cfg, StageError(EXIT_CONFIG, name, str(exc), "output"))
    log_line(cfg, f"{name} ok {time.perf_counter() - start:.3f}s")
    _clear_error(cfg)
    return EXIT_OK


def run(cfg: ExperimentConfig) -> int:
    """forward -> perturb -> reconstruct -> evaluate; returns the exit code."""
    t0 = time.perf_counter()
    try:
        stage = "forward"
        stage_forward(cfg)
        stage = "perturb"
        stage_perturb(cfg)
        stage = "reconstruct"
        t1 = time.perf_counter()
        stage_reconstruct(cfg)
        log_line(cfg, f"reconstruct {time.perf_counter() - t1:.3f}s")
        stage = "evaluate"
        stage_evaluate(cfg)
    except ConfigError as exc:
        return _fail(cfg, StageError(EXIT_CONFIG, stage, exc.message, exc.field))
    except StageError as exc:
        return _fail(cfg, exc)
    except OSError as exc:
        return _fail(cfg, StageError(EXIT_CONFIG, stage, str(exc), "output"))
    log_line(cfg, f"run ok {time.perf_counter() - t0:.3f}s")
    _clear_error(cfg)
    return EXIT_OK


def _fail(cfg: ExperimentConfig, err: StageError) -> int:
    try:
        jsonio.write_json(cfg.output / ERROR, err.to_json())
        log_line(cfg, f"{err.stage} failed code={err.code}: {err}")
    except OSError:
        pass
    import sys
    print(jsonio.dumps(err.to_json(), indent=None), file=sys.stderr)
    return err.code


def _clear_error(cfg: ExperimentConfig) -> None:
    p = cfg.output / ERROR
    if p.exists():
        p.unlink()


# -- report comparison -------------------------------------------------------

COMPARED = ("hausdorff", "gh_lower", "gh_upper", "n_points", "n_truth", "eta", "delta", "J", "N",
            "n_volumes", "clamped_volumes", "clamped_slices")


class SchemaMismatch(ValueError):
    pass


def compare(report_a: dict, report_b: dict) -> dict:
    """Per-metric deltas (b - a) and trend verdicts between two reports."""
    for name, rep in (("first", report_a), ("second", report_b)):
        if rep.get("schema") != REPORT_SCHEMA:
            raise SchemaMismatch(f"{name} report has schema {rep.get('schema')!r}, expected {REPORT_SCHEMA!r}")
    rows = []
    for key in COMPARED:
        a, b = report_a.get(key), report_b.get(key)
        delta = b - a if isinstance(a, (int, float)) and isinstance(b, (int, float)) else None
        rows.append({"metric": key, "a": a, "b": b, "delta": delta})
    verdicts = []
    for key in ("hausdorff", "gh_upper"):
        a, b = report_a.get(key), report_b.get(key)
        if isinstance(a, (int, float)) and isinstance(b, (int, float)):
            verdicts.append({"verdict": f"{key} decreasing", "value": bool(b < a)})
            verdicts.append({"verdict": f"{key} nonincreasing", "value": bool(b <= a)})
    ea, eb = report_a.get("eta"), report_b.get("eta")
    if isinstance(ea, (int, float)) and isinstance(eb, (int, float)):
        verdicts.append({"verdict": "eta halved", "value": bool(abs(eb - ea / 2) <= 1e-12 * ea)})
    return {"rows": rows, "verdicts": verdicts}


def format_comparison(result: dict) -> str:
    lines = [f"{'metric':<16}{'a':>14}{'b':>14}{'delta':>14}"]

    def fmt(v) -> str:
        if v is None:
            return "-"
        if isinstance(v, float):
            return format(v, ".6g")
        return str(v)

    for r in result["rows"]:
        lines.append(f"{r['metric']:<16}{fmt(r['a']):>14}{fmt(r['b']):>14}{fmt(r['delta']):>14}")
    for v in result["verdicts"]:
        lines.append(f"{v['verdict']}: {'true' if v['value'] else 'false'}")
    return "\n".join(lines)
