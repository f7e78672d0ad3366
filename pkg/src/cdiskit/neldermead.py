"""Downhill simplex (Nelder-Mead) minimizer.

Classical coefficient set: reflection 1, expansion 2, contraction 0.5,
shrink 0.5.  The loop is fully deterministic: vertices are ordered by a
stable sort on (value, coordinates), and no randomness enters anywhere.
Bounds, when given, are enforced by projection at evaluation time -- the
simplex itself roams freely, but the objective only ever sees the clamped
point, and the reported optimum is the clamped best-ever point.

Termination: value spread below ``tol_f``, simplex diameter (max infinity-
norm edge from the best vertex) below ``tol_x``, or an iteration/evaluation
budget.  A tolerance-based stop that still improved on the episode's
starting value counts as a *stall*; the simplex is then rebuilt around the
best point with the step halved, at most ``max_restarts`` times.  This
single deterministic restart rule is what lets flat valleys polish down to
high precision without any randomized re-initialization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractViolation, NumericalError


@dataclass(frozen=True)
class NmConfig:
    alpha: float = 1.0          # reflection
    gamma: float = 2.0          # expansion
    beta: float = 0.5           # contraction
    delta: float = 0.5          # shrink
    init_step: float | tuple[float, ...] = 0.25
    tol_f: float = 1e-6
    tol_x: float = 1e-6
    max_iter: int | None = None   # None -> 500 * n
    max_evals: int | None = None  # None -> unbounded
    bounds: tuple[tuple[float, float], ...] | None = None
    max_restarts: int = 2

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be > 0, got {self.alpha}", tag="config.nm.alpha")
        if not self.gamma > 1:
            raise ConfigError(f"gamma must be > 1, got {self.gamma}", tag="config.nm.gamma")
        if not 0 < self.beta < 1:
            raise ConfigError(f"beta must be in (0,1), got {self.beta}", tag="config.nm.beta")
        if not 0 < self.delta < 1:
            raise ConfigError(f"delta must be in (0,1), got {self.delta}",
                              tag="config.nm.delta")
        if not (self.tol_f > 0 and self.tol_x > 0):
            raise ConfigError(f"tolerances must be > 0, got tol_f={self.tol_f} "
                              f"tol_x={self.tol_x}", tag="config.nm.tol")
        if self.max_restarts < 0:
            raise ConfigError(f"max_restarts must be >= 0, got {self.max_restarts}",
                              tag="config.nm.restarts")

    def steps_for(self, n: int) -> np.ndarray:
        if np.isscalar(self.init_step):
            step = np.full(n, float(self.init_step))
        else:
            step = np.asarray(self.init_step, dtype=np.float64)
            if step.shape != (n,):
                raise ConfigError(f"init_step has {step.size} entries for dimension {n}",
                                  tag="config.nm.init_step")
        if not (np.isfinite(step).all() and (step != 0).all()):
            raise ConfigError("init_step entries must be finite and nonzero",
                              tag="config.nm.init_step")
        return step

    def bounds_array(self, n: int) -> np.ndarray | None:
        if self.bounds is None:
            return None
        arr = np.asarray(self.bounds, dtype=np.float64)
        if arr.shape != (n, 2) or not (arr[:, 0] < arr[:, 1]).all():
            raise ConfigError(f"bounds must be {n} (lo, hi) pairs with lo < hi",
                              tag="config.nm.bounds")
        return arr


@dataclass
class SimplexState:
    """n+1 vertices and their values, kept sorted ascending by value."""

    vertices: np.ndarray  # (n+1, n)
    values: np.ndarray    # (n+1,)
    iteration: int = 0
    n_evals: int = 0

    def order(self) -> None:
        # stable: primary key value, ties broken lexicographically by coords
        idx = sorted(range(len(self.values)),
                     key=lambda i: (self.values[i], tuple(self.vertices[i])))
        self.vertices = self.vertices[idx]
        self.values = self.values[idx]

    @property
    def spread(self) -> float:
        return float(self.values[-1] - self.values[0])

    @property
    def diameter(self) -> float:
        return float(np.abs(self.vertices[1:] - self.vertices[0]).max())


@dataclass(frozen=True)
class TraceEntry:
    iteration: int
    op: str
    best_value: float


@dataclass(frozen=True)
class NmResult:
    x: np.ndarray
    value: float
    trace: tuple[TraceEntry, ...]
    iterations: int
    n_evals: int
    n_restarts: int
    reason: str

    def __iter__(self):  # allow x, value, trace = minimize(...)
        return iter((self.x, self.value, self.trace))


def project_bounds(x: np.ndarray, bounds: np.ndarray | None) -> np.ndarray:
    """Componentwise clamp of ``x`` into ``bounds``; identity when inside/None."""
    x = np.asarray(x, dtype=np.float64)
    if bounds is None:
        return x
    return np.clip(x, bounds[:, 0], bounds[:, 1])


def minimize(f, x0, cfg: NmConfig = NmConfig()) -> NmResult:
    """Minimize ``f`` from ``x0``; returns the best point ever evaluated."""
    x0 = np.asarray(x0, dtype=np.float64).ravel()
    n = x0.size
    if n < 1:
        raise ContractViolation("x0 must have at least one dimension", tag="nm.dim")
    steps = cfg.steps_for(n)
    bounds = cfg.bounds_array(n)
    if bounds is not None and (np.clip(x0, bounds[:, 0], bounds[:, 1]) != x0).any():
        raise ContractViolation(f"x0 {x0} violates bounds", tag="nm.x0-bounds")
    max_iter = cfg.max_iter if cfg.max_iter is not None else 500 * n
    max_evals = cfg.max_evals

    state = SimplexState(vertices=np.empty((0, n)), values=np.empty(0))
    trace: list[TraceEntry] = []
    best_x: np.ndarray | None = None
    best_f = np.inf

    def evaluate(x: np.ndarray, during_init: bool = False) -> float:
        nonlocal best_x, best_f
        xp = project_bounds(x, bounds)
        v = float(f(xp))
        state.n_evals += 1
        if not np.isfinite(v):
            if during_init:
                raise NumericalError(f"objective non-finite at initial vertex {xp}",
                                     tag="nm.init-nonfinite")
            raise NumericalError(f"objective returned non-finite value at {xp}",
                                 tag="nm.nonfinite")
        if v < best_f:
            best_f = v
            best_x = xp.copy()
        return v

    def build_simplex(center: np.ndarray, step: np.ndarray) -> None:
        verts = [center.copy()]
        verts.extend(center + step[i] * np.eye(n)[i] for i in range(n))
        vertices = np.asarray(verts)
        values = np.asarray([evaluate(v, during_init=True) for v in vertices])
        state.vertices = vertices
        state.values = values
        state.order()

    build_simplex(x0, steps)
    trace.append(TraceEntry(state.iteration, "init", best_f))
    episode_start_best = best_f

    restarts = 0
    cur_steps = steps.copy()
    reason = "max_iter"

    while True:
        if state.iteration >= max_iter:
            reason = "max_iter"
            break
        if max_evals is not None and state.n_evals >= max_evals:
            reason = "max_evals"
            break
        state.iteration += 1  # iterations are 1-based; checks happen at entry

        stop = None
        if state.spread < cfg.tol_f:
            stop = "tol_f"
        elif state.diameter < cfg.tol_x:
            stop = "tol_x"
        if stop is not None:
            stalled = best_f < episode_start_best  # made progress, then froze
            can_restart = (restarts < cfg.max_restarts and stalled
                           and (max_evals is None or state.n_evals + n + 1 <= max_evals))
            if not can_restart:
                reason = stop
                break
            restarts += 1
            cur_steps = cur_steps / 2.0
            build_simplex(best_x, cur_steps)
            trace.append(TraceEntry(state.iteration, "restart", best_f))
            episode_start_best = best_f
            continue

        worst = state.vertices[-1]
        f_worst = state.values[-1]
        centroid = state.vertices[:-1].mean(axis=0)

        x_r = centroid + cfg.alpha * (centroid - worst)
        f_r = evaluate(x_r)

        if f_r < state.values[0]:
            x_e = centroid + cfg.gamma * (x_r - centroid)
            f_e = evaluate(x_e)
            if f_e < f_r:
                op, new_x, new_f = "expand", x_e, f_e
            else:
                op, new_x, new_f = "reflect", x_r, f_r
        elif f_r < state.values[-2]:
            op, new_x, new_f = "reflect", x_r, f_r
        elif f_r < f_worst:
            x_c = centroid + cfg.beta * (x_r - centroid)
            f_c = evaluate(x_c)
            if f_c <= f_r:
                op, new_x, new_f = "contract_out", x_c, f_c
            else:
                op, new_x, new_f = "shrink", None, None
        else:
            x_c = centroid + cfg.beta * (worst - centroid)
            f_c = evaluate(x_c)
            if f_c < f_worst:
                op, new_x, new_f = "contract_in", x_c, f_c
            else:
                op, new_x, new_f = "shrink", None, None

        if op == "shrink":
            # move everything toward the best vertex; the best stays put
            best_vertex = state.vertices[0].copy()
            for i in range(1, n + 1):
                state.vertices[i] = best_vertex + cfg.delta * (state.vertices[i] - best_vertex)
                state.values[i] = evaluate(state.vertices[i])
        else:
            state.vertices[-1] = new_x
            state.values[-1] = new_f

        state.order()
        trace.append(TraceEntry(state.iteration, op, best_f))

    return NmResult(x=best_x.copy(), value=best_f, trace=tuple(trace),
                    iterations=state.iteration, n_evals=state.n_evals,
                    n_restarts=restarts, reason=reason)
