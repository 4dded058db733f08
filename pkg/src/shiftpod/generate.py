"""Analytic test fields with known co-moving frame contents.

Every generator returns the lab-frame data together with the paths of the
frames it was built from; the transport tests additionally return the exact
frame contents on the data grid.  All fields default to ``dt = dx`` so that
unit-speed paths are whole-cell shifts.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import partial

import numpy as np

from .core import Decomposition, FramePath, GridSpec, SnapshotField

__all__ = [
    "WaveSpec",
    "wave_profile",
    "gen_two_wave",
    "gen_two_wave_diffusive",
    "gen_boundary_case",
    "gen_identity",
    "gen_multi_front",
    "GENERATORS",
]

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class WaveSpec:
    """A transported pulse ``a * f((x - x0 - c t) / sigma)`` with optional linear growth.

    ``shape`` is ``"gaussian"`` (``exp(-u^2)``) or
    ``"gaussian_second_derivative"`` (the analytic second x-derivative of
    that Gaussian).  ``mu`` is the slope of a linear time factor
    ``1 + mu t``; zero gives a constant amplitude.
    """

    x0: float
    sigma: float
    c: float = 0.0
    amplitude: float = 1.0
    shape: str = "gaussian"
    mu: float = 0.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.shape not in ("gaussian", "gaussian_second_derivative"):
            raise ValueError(f"unknown wave shape {self.shape!r}")
        if not all(np.isfinite([self.x0, self.c, self.amplitude, self.mu])):
            raise ValueError("wave parameters must be finite")


def _profile(u, sigma, shape):
    g = np.exp(-(u / sigma) ** 2)
    if shape == "gaussian":
        return g
    return (4.0 * u * u / sigma ** 4 - 2.0 / sigma ** 2) * g


def wave_profile(x, x0, sigma, shape="gaussian", period: float | None = None):
    """Gaussian (or its second derivative) centred at ``x0``.

    With a ``period`` the offset is wrapped into ``[-L/2, L/2)`` and the two
    neighbouring images are added.
    """
    u = np.asarray(x, dtype=float) - x0
    if period is None:
        return _profile(u, sigma, shape)
    u = (u + 0.5 * period) % period - 0.5 * period
    return sum(_profile(u + k * period, sigma, shape) for k in (-1, 0, 1))


def _grid(m, n, L, T, periodic):
    dx = L / m
    dt = dx if T is None else T / (n - 1)
    return GridSpec(m=m, n=n, dx=dx, dt=dt, L=L, periodic=periodic)


def _evaluate(grid: GridSpec, waves, period):
    x = grid.x[:, None]
    t = grid.t[None, :]
    out = np.zeros(grid.shape)
    for w in waves:
        out += w.amplitude * (1.0 + w.mu * t) * wave_profile(x - w.c * t, w.x0, w.sigma, w.shape, period)
    return out


def _frame(grid: GridSpec, waves, period):
    x = grid.x[:, None]
    t = grid.t[None, :]
    out = np.zeros(grid.shape)
    for w in waves:
        out += w.amplitude * (1.0 + w.mu * t) * wave_profile(x + 0.0 * t, w.x0, w.sigma, w.shape, period)
    return out


def gen_two_wave(m: int = 100, n: int = 50, L: float = TWO_PI, T: float | None = None):
    """Two Gaussians at ``L/4`` and ``3L/4`` travelling with velocities +1 and -1.

    Periodic domain, ``sigma = 0.06 L``.  The default ``T = (n-1) dx`` lets
    the pulses cross exactly once.  Returns ``(q, truth)``.
    """
    grid = _grid(m, n, L, T, periodic=True)
    sigma = 0.06 * L
    frames_waves = [
        [WaveSpec(L / 4, sigma, c=1.0)],
        [WaveSpec(3 * L / 4, sigma, c=-1.0)],
    ]
    q = _evaluate(grid, frames_waves[0] + frames_waves[1], L)
    frames = [_frame(grid, ws, L) for ws in frames_waves]
    paths = [FramePath.constant_velocity(1.0, grid, "c=+1"), FramePath.constant_velocity(-1.0, grid, "c=-1")]
    return SnapshotField(grid, q), Decomposition(grid, frames, paths, [1, 1])


def gen_two_wave_diffusive(m: int = 100, n: int = 50, L: float = TWO_PI, T: float | None = None,
                           mu: float | None = None):
    """Two travelling Gaussians ``p`` with a growing diffusion-like term ``t mu p''``.

    ``p = exp(-(x - x_a)^2 / sigma^2) / 2``, so every frame has rank two.  The
    default ``mu`` makes the correction reach 30% of the pulse height at the
    final time.
    """
    grid = _grid(m, n, L, T, periodic=True)
    sigma = 0.06 * L
    t_end = grid.t[-1]
    if mu is None:
        # |p''| / p at the centre is 2 / sigma^2
        mu = 0.3 * sigma ** 2 / (2.0 * t_end)
    frames_waves = []
    for x0, c in ((L / 4, 1.0), (3 * L / 4, -1.0)):
        frames_waves.append([
            WaveSpec(x0, sigma, c=c, amplitude=0.5),
            WaveSpec(x0, sigma, c=c, amplitude=0.5, shape="gaussian_second_derivative"),
        ])
    x = grid.x[:, None]
    t = grid.t[None, :]
    q = np.zeros(grid.shape)
    frames = []
    for ws in frames_waves:
        p, dd = ws
        fr = p.amplitude * wave_profile(x + 0 * t, p.x0, p.sigma, period=L) \
            + t * mu * dd.amplitude * wave_profile(x + 0 * t, dd.x0, dd.sigma, dd.shape, period=L)
        frames.append(fr)
        q += p.amplitude * wave_profile(x - p.c * t, p.x0, p.sigma, period=L) \
            + t * mu * dd.amplitude * wave_profile(x - dd.c * t, dd.x0, dd.sigma, dd.shape, period=L)
    paths = [FramePath.constant_velocity(1.0, grid, "c=+1"), FramePath.constant_velocity(-1.0, grid, "c=-1")]
    return SnapshotField(grid, q), Decomposition(grid, frames, paths, [2, 2])


def gen_boundary_case(kind: str = "leaving", m: int = 100, n: int = 50, L: float = TWO_PI,
                      T: float | None = None, x0: float | None = None):
    """Pulses crossing the right boundary of a non-periodic domain.

    ``leaving``: one Gaussian (``sigma = 0.06 L``) moving with velocity 1 and
    cut off at ``x = L``; by default it starts at ``L/2`` and half of it has
    left at the final time.  ``reflected``: the same incoming pulse plus its
    mirror image about ``x = L`` travelling with velocity -1, so that both
    meet at the wall in the middle of the time span.

    Returns ``(q, paths)`` with ``q`` on the original domain only.
    """
    grid = _grid(m, n, L, T, periodic=False)
    sigma = 0.06 * L
    t_end = grid.t[-1]
    x = grid.x[:, None]
    t = grid.t[None, :]
    if kind == "leaving":
        x0 = L / 2 if x0 is None else x0
        q = wave_profile(x - t, x0, sigma)
        paths = [FramePath.constant_velocity(1.0, grid, "c=+1")]
    elif kind == "reflected":
        x0 = L - t_end / 2 if x0 is None else x0
        q = wave_profile(x - t, x0, sigma) + wave_profile(x + t, 2 * L - x0, sigma)
        paths = [FramePath.constant_velocity(1.0, grid, "c=+1"), FramePath.constant_velocity(-1.0, grid, "c=-1")]
    else:
        raise ValueError(f"unknown boundary case {kind!r}")
    return SnapshotField(grid, q), paths


def gen_identity(d: int = 50):
    """The ``d x d`` identity as a field with unit spacings: a unit pulse moving one cell per step."""
    if d < 2:
        raise ValueError("identity field needs d >= 2")
    grid = GridSpec(m=d, n=d, dx=1.0, dt=1.0)
    return SnapshotField(grid, np.eye(d))


def _tanh_front(u, width):
    return 0.5 * (1.0 + np.tanh(u / width))


def gen_multi_front(m: int = 1024, n: int = 500, width_cells: float = 2.0):
    """Synthetic stand-in for a combustor record: four frames with sharp fronts.

    Frame 0 (the "flame") carries a tanh front whose profile changes in time
    through four separable modes; frames 1-3 carry single fronts or pulses
    with constant shape.  Paths are whole-cell shifts of differing speeds,
    one of them accelerating.  Returns ``(q, truth)`` on the original domain;
    the truth frames are defined on the extended grid produced by
    :func:`shiftpod.core.extend_domain` with zero fill.
    """
    from .core import extend_domain

    grid = GridSpec(m=m, n=n, dx=1.0 / m, dt=1.0 / m)
    x = grid.x
    tau = np.linspace(0.0, 1.0, n)
    w = width_cells * grid.dx

    # whole-cell paths (cells per time step): flame, shock, retonation, reflection
    j = np.arange(n)
    flame_cells = np.round(0.35 * j + 0.0006 * j ** 2).astype(int)
    shock_cells = np.round(0.9 * j).astype(int)
    reto_cells = -np.round(0.7 * j).astype(int)
    refl_cells = np.round(0.5 * j).astype(int)
    cells = [flame_cells, shock_cells, reto_cells, refl_cells]
    paths = [FramePath(c * grid.dx, lab) for c, lab in zip(cells, ("flame", "shock", "retonation", "reflection"))]

    base = SnapshotField(grid, np.zeros(grid.shape))
    ext = extend_domain(base, paths, fill=0.0).grid
    X = ext.x
    ones = np.ones(n)

    # flame: burned region behind the front plus a profile that evolves with four modes
    xf = 0.15
    modes_x = [
        _tanh_front(xf - X, w),
        np.exp(-((X - xf + 0.02) / 0.02) ** 2),
        (X - xf) / 0.05 * np.exp(-((X - xf) / 0.05) ** 2),
        np.exp(-((X - xf - 0.03) / 0.01) ** 2),
    ]
    modes_t = [
        ones,
        0.5 * np.sin(np.pi * tau),
        0.3 * tau ** 2,
        0.4 * np.exp(-((tau - 0.5) / 0.08) ** 2),
    ]
    flame = sum(np.outer(a, b) for a, b in zip(modes_x, modes_t))

    xs, xr, xl = 0.2, 0.6, 0.1
    shock = np.outer(0.6 * _tanh_front(xs - X, w) * np.exp(-np.clip(xs - X, 0, None) / 0.1), ones)
    reto = np.outer(0.4 * _tanh_front(X - xr, w) * np.exp(-np.clip(X - xr, 0, None) / 0.08), ones)
    refl = np.outer(0.3 * np.exp(-((X - xl) / (3 * w)) ** 2), ones)

    frames = [flame, shock, reto, refl]
    truth = Decomposition(ext, frames, paths, [4, 1, 1, 1])
    from .shift import ShiftConfig, Transport

    lab = Transport(ext, paths, ShiftConfig(mode="exact")).combine(frames)
    q = SnapshotField(grid, lab[ext.omega])
    return q, truth


GENERATORS = {
    "two-wave": gen_two_wave,
    "two-wave-diffusive": gen_two_wave_diffusive,
    "leaving": partial(gen_boundary_case, "leaving"),
    "reflected": partial(gen_boundary_case, "reflected"),
    "identity": gen_identity,
    "multi-front": gen_multi_front,
}
