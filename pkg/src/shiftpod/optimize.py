"""Optimizers for the frame decomposition.

Two methods are provided, both moving along constraint-redistributed
gradients so that a feasible start stays feasible:

* steepest descent, with the step found either by doubling trial steps and
  fitting a parabola through the last three objective values
  (``exact_eval``), or by the same search on objective values predicted from
  first-order singular value updates (``svd_update``);
* limited-memory BFGS with a weak Wolfe line search.

A rank schedule raises the per-frame ranks in stages, each stage warm-started
from the frames of the previous one.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .core import Decomposition, FramePath, SnapshotField, WeightMask, enforce_constraint, initial_guess
from .objective import FrameState, Objective, ObjectiveKind
from .shift import ShiftConfig, Transport

__all__ = [
    "RankStage",
    "OptimizerConfig",
    "TraceRecord",
    "ConvergenceTrace",
    "StepResult",
    "StationaryPoint",
    "step_parabolic",
    "step_cheap",
    "run",
]

log = logging.getLogger(__name__)

_MAX_HALVINGS = 30
_MAX_DOUBLINGS = 60
# weak Wolfe constants; c2 = 0.5 follows common nonsmooth-BFGS practice
WOLFE_C1 = 1e-4
WOLFE_C2 = 0.5


class StationaryPoint(RuntimeError):
    """No decrease along the search direction, even for tiny steps."""


@dataclass
class RankStage:
    """Ranks of one stage and the trigger that ends it.

    ``trigger`` is ``"iterations"`` (stage ends after ``iterations`` steps)
    or ``"saturation"`` (relative objective decrease over the last
    ``window`` iterations below ``rel_decrease``).  The last stage runs until
    the global stopping criteria.
    """

    ranks: list
    trigger: str = "saturation"
    iterations: int = 50
    rel_decrease: float = 1e-3
    window: int = 10

    def __post_init__(self):
        if self.trigger not in ("iterations", "saturation"):
            raise ValueError(f"unknown stage trigger {self.trigger!r}")
        if self.trigger == "saturation" and not self.rel_decrease > 0:
            raise ValueError("saturation rel_decrease must be positive")
        if self.window < 1 or self.iterations < 1:
            raise ValueError("window and iterations must be >= 1")


@dataclass
class OptimizerConfig:
    method: str = "steepest"
    step_estimator: str = "exact_eval"
    max_iters: int = 200
    grad_tol: float = 1e-10
    objective_tol: float = 0.0
    error_tol: float = 0.0
    max_svd: int | None = None
    lbfgs_memory: int = 25
    rank_schedule: list = field(default_factory=list)
    initial_step: float = 0.1
    reproject_every: int = 10
    constraint_cap: float = 1e-6
    divergence_window: int = 5

    def __post_init__(self):
        if self.method not in ("steepest", "lbfgs"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.step_estimator not in ("exact_eval", "svd_update"):
            raise ValueError(f"unknown step estimator {self.step_estimator!r}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.lbfgs_memory < 1:
            raise ValueError("lbfgs_memory must be >= 1")
        self.rank_schedule = [s if isinstance(s, RankStage) else RankStage(**s) for s in self.rank_schedule]


@dataclass
class TraceRecord:
    iteration: int
    objective: float
    rel_error: float
    grad_norm: float
    constraint_violation: float
    svd_count: int
    wall_time: float
    stage: int = 0
    step: float = 0.0


@dataclass
class ConvergenceTrace:
    records: list = field(default_factory=list)
    status: str = "running"
    message: str = ""

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def first_reaching(self, name: str, threshold: float):
        """First record whose ``name`` value drops below ``threshold`` (or None)."""
        for r in self.records:
            if getattr(r, name) < threshold:
                return r
        return None

    def as_dicts(self) -> list:
        return [asdict(r) for r in self.records]

    @property
    def converged(self) -> bool:
        return self.status == "converged"


@dataclass
class StepResult:
    step: float
    evals: int
    value: float
    states: list | None = None


def _axpy(frames, direction, eta):
    return [f + eta * d for f, d in zip(frames, direction)]


def _dot(a, b) -> float:
    return float(sum(np.vdot(x, y) for x, y in zip(a, b)))


def _with_rank(states, ranks):
    return [FrameState(st.svd, st.norm2, r, st.complete) for st, r in zip(states, ranks)]


class _Counter:
    def __init__(self):
        self.svd = 0


def _exact_phi(obj: Objective, frames, direction, ranks, counter):
    def phi(eta):
        trial = _axpy(frames, direction, eta)
        states = obj.states(trial, ranks)
        counter.svd += len(states)
        return obj.value(trial, states), states
    return phi


def _parabola_vertex(a, fa, b, fb, c, fc):
    """Minimizer of the parabola through three samples, or None if it opens downwards."""
    curv = ((fc - fb) / (c - b) - (fb - fa) / (b - a)) / (c - a)
    if not curv > 0:
        return None
    num = (b - a) ** 2 * (fb - fc) - (b - c) ** 2 * (fb - fa)
    den = (b - a) * (fb - fc) - (b - c) * (fb - fa)
    if den == 0:
        return None
    return b - 0.5 * num / den


def _bracket(phi, f0, eta0):
    """Doubling search; returns samples [(eta, f, payload)] ending with an increase."""
    evals = 0
    eta = eta0
    f1, p1 = phi(eta)
    evals += 1
    samples = [(0.0, f0, None)]
    if not f1 < f0:
        above = (eta, f1, p1)
        for _ in range(_MAX_HALVINGS):
            eta *= 0.5
            f1, p1 = phi(eta)
            evals += 1
            if f1 < f0:
                break
            above = (eta, f1, p1)
        else:
            raise StationaryPoint(f"no decrease after {_MAX_HALVINGS} step halvings")
        samples += [(eta, f1, p1), above]
        return samples, evals
    samples.append((eta, f1, p1))
    for _ in range(_MAX_DOUBLINGS):
        eta *= 2.0
        f2, p2 = phi(eta)
        evals += 1
        samples.append((eta, f2, p2))
        if f2 > samples[-2][1]:
            break
    return samples, evals


def _line_minimum(phi, f0, eta0):
    samples, evals = _bracket(phi, f0, eta0)
    (a, fa, _), (b, fb, pb), (c, fc, _) = samples[-3:]
    best = min(samples[1:], key=lambda s: s[1])
    x = _parabola_vertex(a, fa, b, fb, c, fc) if fc > fb else None
    if x is not None and a < x < c and x != b:
        fx, px = phi(x)
        evals += 1
        if fx < best[1]:
            best = (x, fx, px)
    return best, evals


def step_parabolic(obj: Objective, frames, ranks, direction, f0: float | None = None,
                   eta0: float | None = None, counter=None) -> StepResult:
    """Step along ``direction`` from doubling trial steps and a parabolic fit.

    Trial steps start at ``eta0`` (halved until the objective decreases) and
    are doubled until the objective increases; the vertex of the parabola
    through the last three samples is taken if it improves on the best
    sample.  Every trial costs one SVD per frame.
    """
    counter = counter or _Counter()
    dnorm = np.sqrt(_dot(direction, direction))
    if dnorm == 0.0:
        raise StationaryPoint("zero search direction")
    if f0 is None:
        st = obj.states(frames, ranks)
        counter.svd += len(st)
        f0 = obj.value(frames, st)
    if eta0 is None:
        eta0 = 0.1 * obj.qnorm / dnorm
    phi = _exact_phi(obj, frames, direction, ranks, counter)
    (eta, f, states), evals = _line_minimum(phi, f0, eta0)
    return StepResult(eta, evals, f, states)


def step_cheap(obj: Objective, frames, states, direction, f0: float | None = None,
               eta0: float | None = None, counter=None) -> StepResult:
    """Same search as :func:`step_parabolic` on predicted objective values.

    Trial values use ``s + eta diag(U^T D V)`` and need no new SVD.  The
    chosen step is checked by one exact evaluation and halved until the true
    objective decreases.
    """
    counter = counter or _Counter()
    ranks = [st.rank for st in states]
    dnorm = np.sqrt(_dot(direction, direction))
    if dnorm == 0.0:
        raise StationaryPoint("zero search direction")
    if f0 is None:
        f0 = obj.value(frames, states)
    if eta0 is None:
        eta0 = 0.1 * obj.qnorm / dnorm
    p0 = obj.predicted_value(frames, states, direction, 0.0)

    def predicted(eta):
        return obj.predicted_value(frames, states, direction, eta), None

    try:
        (eta, _, _), evals = _line_minimum(predicted, p0, eta0)
    except StationaryPoint:
        eta, evals = eta0, 0
    exact = _exact_phi(obj, frames, direction, ranks, counter)
    for _ in range(_MAX_HALVINGS):
        f, st = exact(eta)
        evals += 1
        if f < f0:
            return StepResult(eta, evals, f, st)
        eta *= 0.5
    raise StationaryPoint(f"no true decrease after {_MAX_HALVINGS} step halvings")


class _Run:
    """State shared by the optimizer loops."""

    def __init__(self, q, weights, kind, transport, cfg: OptimizerConfig):
        self.q = q
        self.weights = weights
        self.obj = Objective(q, weights, kind, transport)
        self.tr = transport
        self.cfg = cfg
        self.counter = _Counter()
        self.trace = ConvergenceTrace()
        self.t0 = time.perf_counter()
        self.qnorm = self.obj.qnorm

    def states(self, frames, ranks):
        st = self.obj.states(frames, ranks)
        self.counter.svd += len(st)
        return st

    def rel_error(self, states) -> float:
        approx = self.tr.combine([st.lowrank() for st in states])
        return float(np.linalg.norm(self.weights.apply(self.q.values - approx)) / self.qnorm)

    def violation(self, frames) -> float:
        return float(np.linalg.norm(self.weights.apply(self.q.values - self.tr.combine(frames))))

    def record(self, it, f, frames, states, g, stage, step):
        gnorm = float(np.sqrt(_dot(g, g)))
        rec = TraceRecord(
            iteration=it,
            objective=float(f),
            rel_error=self.rel_error(states),
            grad_norm=gnorm,
            constraint_violation=self.violation(frames),
            svd_count=self.counter.svd,
            wall_time=time.perf_counter() - self.t0,
            stage=stage,
            step=float(step),
        )
        self.trace.records.append(rec)
        log.debug("it %d f=%.6e err=%.3e |g|=%.3e svd=%d", it, f, rec.rel_error, gnorm, rec.svd_count)
        return rec

    def converged(self, rec: TraceRecord) -> str | None:
        cfg = self.cfg
        scale = self.obj.scale
        if rec.grad_norm * self.qnorm / scale <= cfg.grad_tol:
            return "gradient tolerance reached"
        if cfg.objective_tol > 0 and rec.objective <= cfg.objective_tol * scale:
            return "objective tolerance reached"
        if cfg.error_tol > 0 and rec.rel_error <= cfg.error_tol:
            return "error tolerance reached"
        return None


def _saturated(values, stage: RankStage) -> bool:
    if len(values) <= stage.window:
        return False
    old, new = values[-stage.window - 1], values[-1]
    return (old - new) < stage.rel_decrease * abs(old)


def run(q: SnapshotField, paths: Sequence[FramePath], weights: WeightMask | None = None,
        kind="J2", cfg: OptimizerConfig | None = None, shift_cfg: ShiftConfig | None = None,
        start: Decomposition | None = None, ranks=None):
    """Optimize a decomposition of ``q`` (already extended) into co-moving frames.

    Parameters
    ----------
    q : SnapshotField
        Data on the extended grid.
    paths : sequence of FramePath
    weights : WeightMask, optional
        Defaults to the indicator of the original domain of ``q.grid``.
    kind : str or ObjectiveKind
    cfg : OptimizerConfig
    shift_cfg : ShiftConfig
    start : Decomposition, optional
        Warm start; otherwise the equal distribution of the data.
    ranks : list of int, optional
        Ranks when no rank schedule is given (default: ranks of ``start``
        or one per frame).

    Returns
    -------
    (Decomposition, ConvergenceTrace)
        ``trace.status`` is ``converged``, ``max_iters``, ``max_svd``,
        ``stationary`` or ``diverged``.
    """
    cfg = cfg or OptimizerConfig()
    shift_cfg = shift_cfg or ShiftConfig()
    kind = kind if isinstance(kind, ObjectiveKind) else ObjectiveKind(kind)
    weights = weights or WeightMask.for_grid(q.grid)
    tr = Transport(q.grid, paths, shift_cfg)
    stages = list(cfg.rank_schedule)
    if not stages:
        r0 = ranks or (start.ranks if start is not None else [1] * len(paths))
        stages = [RankStage(list(r0))]
    if start is None:
        start = initial_guess(q, paths, weights, stages[0].ranks, transport=tr)
    R = _Run(q, weights, kind, tr, cfg)
    cap = cfg.constraint_cap * R.qnorm
    frames = [f.copy() for f in start.frames]
    if not shift_cfg.exact and R.violation(frames) > cap:
        frames = enforce_constraint(start.with_frames(frames), q, weights, 0.1 * cap, transport=tr).frames

    stage_idx = 0
    ranks = list(stages[0].ranks)
    states = R.states(frames, ranks)
    f = R.obj.value(frames, states)
    g = R.obj.gradient(frames, states)
    rec = R.record(0, f, frames, states, g, 0, 0.0)
    stage_values = [f]
    memory: list = []
    increases = 0
    last_step = None

    def finish(status, message):
        R.trace.status = status
        R.trace.message = message
        return Decomposition(q.grid, frames, list(paths), ranks), R.trace

    for it in range(1, cfg.max_iters + 1):
        reason = R.converged(rec)
        is_last = stage_idx == len(stages) - 1
        stage = stages[stage_idx]
        switch = not is_last and (
            reason is not None
            or (stage.trigger == "iterations" and len(stage_values) > stage.iterations)
            or (stage.trigger == "saturation" and _saturated(stage_values, stage))
        )
        if switch:
            stage_idx += 1
            ranks = list(stages[stage_idx].ranks)
            if all(st.complete for st in states):
                states = _with_rank(states, ranks)
            else:
                states = R.states(frames, ranks)
            f = R.obj.value(frames, states)
            g = R.obj.gradient(frames, states)
            stage_values = [f]
            memory.clear()
            last_step = None
            log.info("stage %d: ranks %s", stage_idx, ranks)
            rec = R.record(rec.iteration, f, frames, states, g, stage_idx, 0.0)
            continue_reason = R.converged(rec)
            if continue_reason is None or stage_idx < len(stages) - 1:
                reason = None
            else:
                reason = continue_reason
        if reason is not None:
            return finish("converged", reason)
        if cfg.max_svd is not None and R.counter.svd >= cfg.max_svd:
            return finish("max_svd", f"SVD budget of {cfg.max_svd} exhausted")

        try:
            if cfg.method == "steepest":
                direction = [-x for x in g]
                if cfg.step_estimator == "exact_eval":
                    res = step_parabolic(R.obj, frames, ranks, direction, f0=f, counter=R.counter)
                else:
                    res = step_cheap(R.obj, frames, states, direction, f0=f, counter=R.counter)
                frames = _axpy(frames, direction, res.step)
                states = res.states
                f_new = res.value
                g = R.obj.gradient(frames, states)
                step = res.step
            else:
                frames, states, f_new, g, step, memory = _lbfgs_step(R, frames, states, f, g, ranks, memory, last_step)
                last_step = step
        except StationaryPoint as exc:
            return finish("stationary", str(exc))

        if not np.isfinite(f_new):
            return finish("diverged", "objective became non-finite")
        increases = increases + 1 if f_new > f else 0
        f = f_new
        if increases >= cfg.divergence_window:
            rec = R.record(it, f, frames, states, g, stage_idx, step)
            return finish("diverged", f"objective increased over {increases} iterations")

        if not tr.cfg.exact:
            # scheduled re-projection, or at once when a step broke the cap
            due = bool(cfg.reproject_every) and it % cfg.reproject_every == 0
            viol = R.violation(frames)
            if viol > cap or (due and viol > 0.1 * cap):
                d = enforce_constraint(Decomposition(q.grid, frames, list(paths), ranks), q, weights, 0.01 * cap,
                                       transport=tr)
                frames = d.frames
                states = R.states(frames, ranks)
                f = R.obj.value(frames, states)
                g = R.obj.gradient(frames, states)
                memory.clear()
        stage_values.append(f)
        rec = R.record(it, f, frames, states, g, stage_idx, step)

    reason = R.converged(rec)
    if reason is not None and stage_idx == len(stages) - 1:
        return finish("converged", reason)
    return finish("max_iters", f"stopped after {cfg.max_iters} iterations")


def _two_loop(g, memory, gamma):
    q = [x.copy() for x in g]
    alphas = []
    for s, y, rho in reversed(memory):
        a = rho * _dot(s, q)
        alphas.append(a)
        q = [qi - a * yi for qi, yi in zip(q, y)]
    r = [gamma * qi for qi in q]
    for (s, y, rho), a in zip(memory, reversed(alphas)):
        b = rho * _dot(y, r)
        r = [ri + (a - b) * si for ri, si in zip(r, s)]
    return [-ri for ri in r]


def _weak_wolfe(R: _Run, frames, f0, g0, direction, ranks, t0, c1=WOLFE_C1, c2=WOLFE_C2, max_evals=40):
    """Bracketing weak Wolfe search (bisection / doubling)."""
    slope0 = _dot(g0, direction)
    lo, hi = 0.0, np.inf
    t = t0
    best = None
    for _ in range(max_evals):
        trial = _axpy(frames, direction, t)
        st = R.states(trial, ranks)
        ft = R.obj.value(trial, st)
        if not np.isfinite(ft) or ft > f0 + c1 * t * slope0:
            hi = t
        else:
            gt = R.obj.gradient(trial, st)
            best = (t, trial, st, ft, gt)
            if _dot(gt, direction) < c2 * slope0:
                lo = t
            else:
                return best, True
        t = 0.5 * (lo + hi) if np.isfinite(hi) else 2.0 * lo
    return best, False


def _lbfgs_step(R: _Run, frames, states, f, g, ranks, memory, last_step):
    cfg = R.cfg
    gnorm = np.sqrt(_dot(g, g))
    if gnorm == 0.0:
        raise StationaryPoint("zero gradient")
    for attempt in range(2):
        if memory:
            s, y, _ = memory[-1]
            gamma = _dot(s, y) / _dot(y, y)
            direction = _two_loop(g, memory, gamma)
            t0 = 1.0
        else:
            direction = [-x for x in g]
            t0 = cfg.initial_step * R.qnorm / gnorm
        if _dot(direction, g) >= 0:
            memory = []
            continue
        best, ok = _weak_wolfe(R, frames, f, g, direction, ranks, t0)
        if best is None:
            if memory:
                memory = []
                continue
            raise StationaryPoint("line search found no decrease")
        t, new_frames, new_states, f_new, g_new = best
        s = [a - b for a, b in zip(new_frames, frames)]
        y = [a - b for a, b in zip(g_new, g)]
        sy = _dot(s, y)
        memory = list(memory)
        if sy > 1e-300:
            memory.append((s, y, 1.0 / sy))
            if len(memory) > cfg.lbfgs_memory:
                memory.pop(0)
        return new_frames, new_states, f_new, g_new, t, memory
    raise StationaryPoint("no descent direction")
