"""Command-line interface.

Commands
--------
generate   write a synthetic field, its ground-truth frames and paths
decompose  optimize a co-moving frame decomposition
gradcheck  compare assembled gradients with central finite differences
pod        lab-frame POD baseline
report     summarize a stored decomposition

Exit codes: 0 success, 1 usage, 2 data error, 3 no convergence,
4 divergence.  ``SHIFTPOD_THREADS`` limits the BLAS thread count.
"""

from __future__ import annotations

import argparse
import copy
import inspect
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .analyze import FrontDetectionError, FrontDetector, detect_front_path, report as summarize
from .core import Decomposition, FramePath, GridSpec, SnapshotField, WeightMask, extend_domain, project_constraint
from .generate import GENERATORS
from .lowrank import pod_baseline
from .matio import MatrixFormatError, read_matrix, write_matrix
from .objective import KINDS, Objective, ObjectiveKind
from .optimize import OptimizerConfig, run
from .shift import ShiftConfig, ShiftError, Transport

log = logging.getLogger("shiftpod")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NOCONV, EXIT_DIVERGED = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; the documented code is 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- config

DEFAULTS = {
    "input": {"file": None, "grid": None, "generator": None},
    "paths": {"file": None, "velocities": None, "detector": None, "generator": False},
    "objective": {"kind": "J2", "ranks": None, "penalty_epsilon": 0.0, "penalty_form": "squared",
                  "zero_singular_tol": 1e-10},
    "optimizer": {},
    "shift": {"mode": "interpolated", "order": 2, "edge_policy": "replicate", "edge_value": 0.0},
    "extension": {"fill": "edge"},
    "output": {"dir": "out", "format": "csv",
               "emit": {"matrices": True, "spectra": True, "trace": True, "report": True}},
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def set_key(cfg: dict, dotted: str, value) -> None:
    """Set ``a.b.c`` in a nested dict, creating levels as needed."""
    keys = dotted.split(".")
    if not all(keys):
        raise UsageError(f"malformed key {dotted!r}")
    node = cfg
    for k in keys[:-1]:
        nxt = node.get(k)
        if not isinstance(nxt, dict):
            nxt = node[k] = {}
        node = nxt
    node[keys[-1]] = value


def parse_assignment(text: str):
    if "=" not in text:
        raise UsageError(f"--set expects key=value, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = yaml.safe_load(raw) if raw else None
    except yaml.YAMLError as exc:
        raise UsageError(f"cannot parse value for {key}: {exc}") from None
    return key.strip(), value


def load_config(path, assignments=(), flags=None) -> dict:
    """Defaults, then the YAML file, then ``--set`` assignments, then explicit flags."""
    cfg = copy.deepcopy(DEFAULTS)
    if path:
        try:
            with open(path) as fh:
                doc = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise DataError(f"cannot read config {path}: {exc}") from None
        except yaml.YAMLError as exc:
            raise UsageError(f"config {path} is not valid YAML: {exc}") from None
        if not isinstance(doc, dict):
            raise UsageError(f"config {path} must be a mapping")
        cfg = _merge(cfg, doc)
    for text in assignments:
        set_key(cfg, *parse_assignment(text))
    for key, value in (flags or {}).items():
        if value is not None:
            set_key(cfg, key, value)
    return cfg


@dataclass
class RunConfig:
    """Validated decompose configuration."""

    input: dict
    paths: dict
    objective: dict
    optimizer: dict
    shift: dict
    extension: dict
    output: dict
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, cfg: dict) -> "RunConfig":
        unknown = set(cfg) - set(DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config section(s): {', '.join(sorted(unknown))}")
        src = cfg["input"]
        sources = [k for k in ("file", "generator") if src.get(k)]
        if len(sources) != 1:
            raise UsageError("exactly one input source (input.file or input.generator) is required")
        p = cfg["paths"]
        if not (p.get("file") or p.get("velocities") or p.get("detector") or p.get("generator")):
            raise UsageError("at least one frame path source is required "
                             "(paths.file, paths.velocities, paths.detector or paths.generator)")
        if p.get("generator") and not src.get("generator"):
            raise UsageError("paths.generator needs input.generator")
        return cls(src, p, cfg["objective"], cfg["optimizer"] or {}, cfg["shift"], cfg["extension"],
                   cfg["output"], cfg)


# ---------------------------------------------------------------- inputs

def _grid_from(meta: dict | None, m: int, n: int) -> GridSpec:
    meta = dict(meta or {})
    meta.pop("ext_left", None)
    meta.pop("ext_right", None)
    if meta.get("m", m) != m or meta.get("n", n) != n:
        raise DataError(f"grid metadata ({meta.get('m')}x{meta.get('n')}) does not match the data ({m}x{n})")
    meta.update(m=m, n=n)
    try:
        return GridSpec(**meta)
    except (TypeError, ValueError) as exc:
        raise DataError(f"invalid grid metadata: {exc}") from None


def _read_yaml(path) -> dict:
    with open(path) as fh:
        return yaml.safe_load(fh) or {}


def _call_generator(spec: dict):
    spec = dict(spec)
    name = spec.pop("name", None)
    if name not in GENERATORS:
        raise UsageError(f"unknown generator {name!r}; choose from {', '.join(GENERATORS)}")
    try:
        return name, GENERATORS[name](**spec)
    except TypeError as exc:
        raise UsageError(f"generator {name}: {exc}") from None


def _split_generated(name, result):
    """Normalize generator output to (q, paths, truth or None)."""
    if isinstance(result, SnapshotField):
        d = result.grid.m
        paths = [FramePath(np.arange(d) * result.grid.dx, "diagonal")] if name == "identity" else []
        return result, paths, None
    q, second = result
    if isinstance(second, Decomposition):
        return q, list(second.paths), second
    return q, list(second), None


def load_input(rc: RunConfig):
    """The data on its original grid plus the paths a generator supplied."""
    src = rc.input
    if src.get("generator"):
        spec = src["generator"]
        spec = {"name": spec} if isinstance(spec, str) else spec
        name, result = _call_generator(spec)
        q, gen_paths, _ = _split_generated(name, result)
        return q, gen_paths
    path = Path(src["file"])
    try:
        values = read_matrix(path)
    except (OSError, MatrixFormatError) as exc:
        raise DataError(f"cannot read input {path}: {exc}") from None
    meta = src.get("grid")
    if isinstance(meta, str):
        meta = _read_yaml(meta)
    elif meta is None and (path.parent / "grid.yaml").exists():
        meta = _read_yaml(path.parent / "grid.yaml")
    grid = _grid_from(meta, *values.shape)
    try:
        return SnapshotField(grid, values), []
    except ValueError as exc:
        raise DataError(str(exc)) from None


def _detector(spec: dict) -> FrontDetector:
    spec = dict(spec)
    if "window" in spec:
        spec["search_window"] = spec.pop("window")
    try:
        if "level" in spec:
            spec["level"] = float(spec["level"])
        return FrontDetector(**spec)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"detector: {exc}") from None


def load_paths(rc: RunConfig, q: SnapshotField, gen_paths) -> list:
    p = rc.paths
    n = q.grid.n
    out = []
    if p.get("file"):
        try:
            arr = read_matrix(p["file"])
        except (OSError, MatrixFormatError) as exc:
            raise DataError(f"cannot read paths {p['file']}: {exc}") from None
        if arr.shape[1] != n:
            raise DataError(f"paths file has {arr.shape[1]} columns, data has {n} time steps")
        out += [FramePath(row, f"file[{i}]") for i, row in enumerate(arr)]
    if p.get("velocities"):
        out += [FramePath.constant_velocity(float(c), q.grid, f"c={c}") for c in p["velocities"]]
    if p.get("detector"):
        specs = p["detector"] if isinstance(p["detector"], list) else [p["detector"]]
        for i, spec in enumerate(specs):
            try:
                out.append(detect_front_path(q, _detector(spec), f"detected[{i}]"))
            except FrontDetectionError as exc:
                raise DataError(f"front detection {i}: {exc}") from None
    if p.get("generator"):
        out += list(gen_paths)
    if not out:
        raise DataError("no frame paths")
    return out


def _objective_kind(o: dict) -> ObjectiveKind:
    try:
        return ObjectiveKind(o.get("kind", "J2"), float(o.get("penalty_epsilon") or 0.0),
                             o.get("penalty_form", "squared"), float(o.get("zero_singular_tol", 1e-10)))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# numeric optimizer fields; YAML 1.1 reads "1e-6" as a string, so numbers are coerced here
_OPT_FLOATS = ("grad_tol", "objective_tol", "error_tol", "initial_step", "constraint_cap")
_OPT_INTS = ("max_iters", "max_svd", "lbfgs_memory", "reproject_every", "divergence_window")


def _optimizer_cfg(o: dict) -> OptimizerConfig:
    o = dict(o)
    try:
        for k in _OPT_FLOATS:
            if o.get(k) is not None:
                o[k] = float(o[k])
        for k in _OPT_INTS:
            if o.get(k) is not None:
                o[k] = int(o[k])
        return OptimizerConfig(**o)
    except TypeError as exc:
        raise UsageError(f"optimizer: {exc}") from None
    except ValueError as exc:
        raise UsageError(f"optimizer: {exc}") from None


def _fill(value):
    if value in ("edge", None):
        return "edge"
    try:
        return float(value)
    except (TypeError, ValueError):
        raise UsageError(f"extension.fill must be 'edge' or a number, got {value!r}") from None


# ---------------------------------------------------------------- outputs

def _write(out: Path, name: str, a, fmt: str) -> Path:
    return write_matrix(out / f"{name}.{fmt}", a, fmt)


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def write_trace(path: Path, trace) -> None:
    with open(path, "w") as fh:
        for rec in trace.as_dicts():
            fh.write(json.dumps(rec) + "\n")


# ---------------------------------------------------------------- commands

def _generator_kwargs(args, fn) -> dict:
    names = set(inspect.signature(fn).parameters)
    kw = {}
    for key in ("m", "n", "L", "T", "mu", "d", "x0", "width_cells"):
        v = getattr(args, key, None)
        if v is not None:
            kw[key] = v
    for text in args.param or ():
        k, v = parse_assignment(text)
        kw[k] = v
    bad = set(kw) - names
    if bad:
        raise UsageError(f"generator {args.name} does not take {', '.join(sorted(bad))}")
    return kw


def cmd_generate(args) -> int:
    if args.name not in GENERATORS:
        raise UsageError(f"unknown generator {args.name!r}; choose from {', '.join(GENERATORS)}")
    fn = GENERATORS[args.name]
    kw = _generator_kwargs(args, fn)
    name, result = _call_generator({"name": args.name, **kw})
    q, paths, truth = _split_generated(name, result)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        fmt = args.format
        _write(out, "q", q.values, fmt)
        meta = q.grid.base().to_dict()
        with open(out / "grid.yaml", "w") as fh:
            yaml.safe_dump(meta, fh, sort_keys=True)
        if paths:
            _write(out, "paths", np.vstack([p.shifts for p in paths]), fmt)
        if truth is not None:
            for k, f in enumerate(truth.frames):
                _write(out, f"truth_{k}", f, fmt)
            with open(out / "truth.yaml", "w") as fh:
                yaml.safe_dump({"ranks": [int(r) for r in truth.ranks],
                                "labels": [p.label for p in truth.paths],
                                "ext_left": truth.grid.ext_left, "ext_right": truth.grid.ext_right}, fh)
    except OSError as exc:
        raise DataError(f"cannot write to {out}: {exc}") from None
    print(f"wrote {name} field {q.values.shape[0]}x{q.values.shape[1]} to {out}")
    return EXIT_OK


def _decompose_flags(args) -> dict:
    flags = {
        "input.file": args.input,
        "paths.file": args.paths,
        "objective.kind": args.kind,
        "objective.penalty_epsilon": args.epsilon,
        "optimizer.method": args.method,
        "optimizer.step_estimator": args.step,
        "optimizer.max_iters": args.max_iters,
        "shift.mode": args.shift_mode,
        "output.dir": args.out,
        "output.format": args.format,
    }
    if args.generator:
        flags["input.generator"] = {"name": args.generator}
        flags["paths.generator"] = True
    if args.ranks:
        flags["objective.ranks"] = _int_list(args.ranks)
    if args.velocities:
        flags["paths.velocities"] = [float(v) for v in args.velocities.split(",")]
    return flags


def _int_list(text: str) -> list:
    try:
        return [int(v) for v in str(text).split(",")]
    except ValueError:
        raise UsageError(f"expected comma separated integers, got {text!r}") from None


def cmd_decompose(args) -> int:
    cfg = load_config(args.config, args.set or (), _decompose_flags(args))
    rc = RunConfig.from_dict(cfg)
    q0, gen_paths = load_input(rc)
    paths = load_paths(rc, q0, gen_paths)
    try:
        shift_cfg = ShiftConfig(**rc.shift)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"shift: {exc}") from None
    kind = _objective_kind(rc.objective)
    opt = _optimizer_cfg(rc.optimizer)
    ranks = rc.objective.get("ranks") or [1] * len(paths)
    if len(ranks) != len(paths):
        raise DataError(f"{len(ranks)} ranks for {len(paths)} frames")
    try:
        q = extend_domain(q0, paths, fill=_fill(rc.extension.get("fill")), order=shift_cfg.order)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    if any(not 1 <= int(r) <= min(q.grid.shape) for r in ranks):
        raise DataError(f"ranks {ranks} outside [1, {min(q.grid.shape)}]")

    try:
        d, trace = run(q, paths, kind=kind, cfg=opt, shift_cfg=shift_cfg, ranks=[int(r) for r in ranks])
    except ShiftError as exc:
        raise DataError(str(exc)) from None
    summary = summarize(d, q, cfg=shift_cfg)

    out = Path(rc.output["dir"])
    fmt = rc.output.get("format", "csv")
    emit = _merge(DEFAULTS["output"]["emit"], rc.output.get("emit") or {})
    try:
        out.mkdir(parents=True, exist_ok=True)
        if emit["matrices"]:
            for k, f in enumerate(d.frames):
                _write(out, f"frame_{k}", f, fmt)
                _write(out, f"lab_{k}", summary.lab_views[k], fmt)
            _write(out, "paths", np.vstack([p.shifts for p in paths]), fmt)
            with open(out / "grid.yaml", "w") as fh:
                yaml.safe_dump(q.grid.to_dict(), fh, sort_keys=True)
        if emit["spectra"]:
            width = max(s.size for s in summary.spectra)
            spec = np.zeros((len(summary.spectra), width))
            for k, s in enumerate(summary.spectra):
                spec[k, : s.size] = s
            _write(out, "spectra", spec, fmt)
        if emit["trace"]:
            write_trace(out / "trace.jsonl", trace)
        if emit["report"]:
            rec = summary.as_dict()
            last = trace.records[-1]
            rec.update(status=trace.status, message=trace.message, iterations=last.iteration,
                       svd_count=last.svd_count, objective=last.objective, ranks=[int(r) for r in d.ranks],
                       kind=kind.kind)
            with open(out / "report.json", "w") as fh:
                json.dump(_jsonable(rec), fh, indent=2, sort_keys=True)
    except OSError as exc:
        raise DataError(f"cannot write to {out}: {exc}") from None

    print(f"status {trace.status}: {trace.message}")
    print(f"relative error {summary.rel_error:.3e}  (POD at rank {summary.total_rank}: {summary.pod_error:.3e})")
    if trace.status == "converged":
        return EXIT_OK
    if trace.status == "diverged":
        return EXIT_DIVERGED
    return EXIT_NOCONV


# ---------------------------------------------------------------- gradcheck

def _spectrum_value(S, norm2, r, kind):
    # independent evaluation from singular values, vectorized over a batch
    tail2 = np.sum(S[..., r:] ** 2, axis=-1)
    if kind == "J2":
        return tail2 / norm2
    if kind == "barJ2":
        return tail2
    if kind == "J1":
        return np.sum(S, axis=-1)
    d = S.shape[-1]
    return np.sum(S[..., :r], axis=-1) + np.sqrt(d - r) * np.sqrt(tail2)


def _term_value(X, r, kind: ObjectiveKind):
    S = np.linalg.svd(X, compute_uv=False)
    norm2 = np.sum(X * X, axis=(-2, -1))
    v = _spectrum_value(S, norm2, r, kind.kind)
    eps = kind.penalty_epsilon
    if eps:
        v = v + (eps * norm2 if kind.penalty_form == "squared" else eps * np.sqrt(norm2))
    return v


def _smooth_enough(X, r, kind: str, tol=1e-3):
    S = np.linalg.svd(X, compute_uv=False)
    if kind == "J1":
        return S[-1] > tol * S[0], f"s_min/s_1 = {S[-1] / S[0]:.1e}"
    if r < S.size and S[r - 1] - S[r] <= tol * S[0]:
        return False, f"s_{r} and s_{r + 1} nearly coincide"
    return True, ""


def _frame_fd(X, r, kind: ObjectiveKind, h):
    rows, n = X.shape
    E = np.zeros((rows * n, rows, n))
    E[np.arange(rows * n), np.repeat(np.arange(rows), n), np.tile(np.arange(n), rows)] = h
    plus = _term_value(X[None] + E, r, kind)
    minus = _term_value(X[None] - E, r, kind)
    return ((plus - minus) / (2 * h)).reshape(rows, n)


def _random_instance(rng, max_rows=30, max_cols=20):
    K = int(rng.integers(1, 4))
    n = int(rng.integers(8, max_cols + 1))
    periodic = bool(rng.integers(0, 2))
    if periodic:
        m = int(rng.integers(10, max_rows + 1))
        grid = GridSpec(m=m, n=n, periodic=True)
        speeds = rng.integers(-2, 3, size=K)
        paths = [FramePath(float(c) * np.arange(n), f"c={c}") for c in speeds]
    else:
        speeds = rng.choice([-0.25, 0.0, 0.25, 0.4], size=K)
        cells = [np.round(c * np.arange(n)) for c in speeds]
        # room for the extension so that the extended grid stays within max_rows
        lo = max(int(np.max(c)) for c in cells)
        hi = max(int(np.max(-c)) for c in cells)
        m = int(rng.integers(8, max(9, max_rows - lo - hi + 1)))
        grid = GridSpec(m=m, n=n)
        paths = [FramePath(c, f"{s:+.2f} cells/step") for c, s in zip(cells, speeds)]
    q0 = SnapshotField(grid, rng.standard_normal(grid.shape))
    q = extend_domain(q0, paths, fill="edge")
    shift_cfg = ShiftConfig(mode="exact")
    tr = Transport(q.grid, paths, shift_cfg)
    weights = WeightMask.for_grid(q.grid)
    bar = [rng.standard_normal(q.grid.shape) for _ in range(K)]
    d = project_constraint(bar, q, paths, weights, transport=tr)
    d = d.with_ranks([int(rng.integers(1, 4)) for _ in range(K)])
    return q, d, weights, tr


def gradcheck(instances: int = 20, kinds=KINDS, seed: int = 0, h: float = 1e-6, penalty: float = 1e-2,
              max_rows: int = 30, max_cols: int = 20):
    """Finite-difference check of per-frame and assembled gradients.

    Returns a dict ``kind -> {"max_rel_error", "checked", "skipped"}``.  Two
    checks per instance and kind: every entry of each frame's own gradient
    against central differences of that frame's term, and the assembled
    (redistributed) gradient against central differences of the objective
    along random directions pushed through the constraint projection.
    """
    rng = np.random.default_rng(seed)
    results = {k: {"max_rel_error": 0.0, "checked": 0, "skipped": []} for k in kinds}
    for inst in range(instances):
        q, d, weights, tr = _random_instance(rng, max_rows, max_cols)
        form = "squared" if inst % 2 == 0 else "norm"
        for kname in kinds:
            kind = ObjectiveKind(kname, penalty_epsilon=penalty if inst % 3 == 0 else 0.0, penalty_form=form)
            res = results[kname]
            skip = [why for f, r in zip(d.frames, d.ranks) for ok, why in [_smooth_enough(f, r, kname)] if not ok]
            if skip:
                res["skipped"].append(f"instance {inst}: {skip[0]}")
                continue
            obj = Objective(q, weights, kind, tr)
            states = obj.states(d.frames, d.ranks)
            raw = obj.raw_gradients(d.frames, states)
            errs = []
            for f, r, g in zip(d.frames, d.ranks, raw):
                fd = _frame_fd(f, r, kind, h)
                errs.append(np.linalg.norm(fd - g) / max(np.linalg.norm(g), np.linalg.norm(fd), 1e-300))
            G = obj.gradient(d.frames, states)
            gnorm = np.sqrt(sum(np.sum(x * x) for x in G))
            for D in (G, [rng.standard_normal(f.shape) for f in d.frames]):
                an = sum(float(np.sum(a * b)) for a, b in zip(G, D))
                dnorm = np.sqrt(sum(np.sum(x * x) for x in D))
                step = h / max(dnorm, 1e-300) * max(1.0, np.sqrt(sum(np.sum(f * f) for f in d.frames)))

                def phi(a):
                    moved = project_constraint([f + a * x for f, x in zip(d.frames, D)], q, d.paths, weights,
                                               transport=tr, ranks=d.ranks)
                    return obj.value(moved.frames, obj.states(moved.frames, moved.ranks))

                fd = (phi(step) - phi(-step)) / (2 * step)
                errs.append(abs(fd - an) / max(abs(an), 1e-3 * gnorm * dnorm, 1e-300))
            res["checked"] += 1
            res["max_rel_error"] = max(res["max_rel_error"], float(max(errs)))
    return results


def cmd_gradcheck(args) -> int:
    kinds = args.kinds.split(",") if args.kinds else list(KINDS)
    bad = [k for k in kinds if k not in KINDS]
    if bad:
        raise UsageError(f"unknown objective(s) {', '.join(bad)}")
    if args.rows > 64 or args.cols > 64:
        raise UsageError("gradcheck is meant for small instances (dims <= 64)")
    t0 = time.perf_counter()
    results = gradcheck(args.instances, kinds, args.seed, args.h, args.penalty, args.rows, args.cols)
    ok = True
    for k in kinds:
        r = results[k]
        passed = r["max_rel_error"] < args.tol
        ok &= passed
        print(f"{k:6s} max rel error {r['max_rel_error']:.2e}  checked {r['checked']:3d}  "
              f"skipped {len(r['skipped']):3d}  {'PASS' if passed else 'FAIL'}")
        for why in r["skipped"]:
            print(f"       skipped (non-smooth point) {why}")
    print(f"gradcheck {'passed' if ok else 'FAILED'} in {time.perf_counter() - t0:.1f} s")
    return EXIT_OK if ok else EXIT_NOCONV


# ---------------------------------------------------------------- pod / report

def cmd_pod(args) -> int:
    try:
        values = read_matrix(args.input)
    except (OSError, MatrixFormatError) as exc:
        raise DataError(f"cannot read {args.input}: {exc}") from None
    if not 1 <= args.rank <= min(values.shape):
        raise DataError(f"rank {args.rank} outside [1, {min(values.shape)}]")
    approx, err = pod_baseline(values, args.rank)
    print(f"POD rank {args.rank}: relative error {err:.17g}")
    if args.out:
        try:
            write_matrix(args.out, approx)
        except (OSError, MatrixFormatError) as exc:
            raise DataError(str(exc)) from None
    return EXIT_OK


def cmd_report(args) -> int:
    run_dir = Path(args.dir)
    try:
        grid = GridSpec.from_dict(_read_yaml(run_dir / "grid.yaml"))
        fmt = args.format
        paths_arr = read_matrix(run_dir / f"paths.{fmt}")
        frames = []
        while (run_dir / f"frame_{len(frames)}.{fmt}").exists():
            frames.append(read_matrix(run_dir / f"frame_{len(frames)}.{fmt}"))
        values = read_matrix(args.input)
    except (OSError, MatrixFormatError, TypeError, ValueError) as exc:
        raise DataError(f"cannot load run from {run_dir}: {exc}") from None
    if not frames:
        raise DataError(f"no frame files in {run_dir}")
    paths = [FramePath(p, f"frame {k}") for k, p in enumerate(paths_arr)]
    if values.shape != grid.base().shape:
        raise DataError(f"data {values.shape} does not match the stored grid {grid.base().shape}")
    ranks = _int_list(args.ranks) if args.ranks else [1] * len(frames)
    if len(ranks) != len(frames) or len(paths) != len(frames):
        raise DataError("numbers of frames, paths and ranks differ")
    q = SnapshotField(grid, np.pad(values, ((grid.ext_left, grid.ext_right), (0, 0)), mode="edge"))
    try:
        d = Decomposition(grid, frames, paths, ranks)
        summary = summarize(d, q, cfg=ShiftConfig(mode=args.shift_mode))
    except (ValueError, ShiftError) as exc:
        raise DataError(str(exc)) from None
    print(json.dumps(_jsonable(summary.as_dict()), indent=2, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="shiftpod", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic field")
    g.add_argument("name", help=f"one of: {', '.join(GENERATORS)}")
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--format", choices=("csv", "bin"), default="csv")
    g.add_argument("--m", type=int)
    g.add_argument("--n", type=int)
    g.add_argument("--L", type=float)
    g.add_argument("--T", type=float)
    g.add_argument("--mu", type=float)
    g.add_argument("--d", type=int)
    g.add_argument("--x0", type=float)
    g.add_argument("--width-cells", dest="width_cells", type=float)
    g.add_argument("--param", action="append", metavar="KEY=VALUE", help="other generator arguments")
    g.set_defaults(func=cmd_generate)

    d = sub.add_parser("decompose", help="optimize a co-moving frame decomposition")
    d.add_argument("--config", help="YAML run configuration")
    d.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key, e.g. optimizer.max_iters=50")
    d.add_argument("--input", help="snapshot matrix (.csv or .bin)")
    d.add_argument("--generator", help="generate the input instead of reading it")
    d.add_argument("--paths", help="matrix of frame paths, one row per frame")
    d.add_argument("--velocities", help="comma separated constant frame velocities")
    d.add_argument("--kind", choices=KINDS)
    d.add_argument("--ranks", help="comma separated per-frame ranks")
    d.add_argument("--epsilon", type=float, help="norm penalty factor")
    d.add_argument("--method", choices=("steepest", "lbfgs"))
    d.add_argument("--step", choices=("exact_eval", "svd_update"))
    d.add_argument("--max-iters", dest="max_iters", type=int)
    d.add_argument("--shift-mode", dest="shift_mode", choices=("interpolated", "exact"))
    d.add_argument("--out", help="output directory")
    d.add_argument("--format", choices=("csv", "bin"))
    d.set_defaults(func=cmd_decompose)

    c = sub.add_parser("gradcheck", help="finite-difference gradient check")
    c.add_argument("--instances", type=int, default=20)
    c.add_argument("--kinds", help="comma separated objectives (default: all)")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--rows", type=int, default=30)
    c.add_argument("--cols", type=int, default=20)
    c.add_argument("--h", type=float, default=1e-6, help="finite-difference step")
    c.add_argument("--penalty", type=float, default=1e-2, help="penalty factor used on every third instance")
    c.add_argument("--tol", type=float, default=1e-5)
    c.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("pod", help="lab-frame POD baseline")
    p.add_argument("--input", required=True)
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--out", help="write the approximation here")
    p.set_defaults(func=cmd_pod)

    r = sub.add_parser("report", help="summarize a stored decomposition")
    r.add_argument("dir", help="output directory of a decompose run")
    r.add_argument("--input", required=True, help="the decomposed snapshot matrix")
    r.add_argument("--ranks", help="comma separated per-frame ranks")
    r.add_argument("--format", choices=("csv", "bin"), default="csv")
    r.add_argument("--shift-mode", dest="shift_mode", choices=("interpolated", "exact"), default="interpolated")
    r.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"shiftpod {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"shiftpod {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
