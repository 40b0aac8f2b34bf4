"""Maximisation of the CHSH functionals over displacement settings, and the sweeps built on it.

Both functionals share one Gaussian structure.  With ``x = |a|^2``,
``y = |b|^2`` and ``z = Re(a b)`` every correlator has the form

    E(a, b) = 4 J exp(-A (x + y) - B z) - 2 M [exp(-C x) + exp(-C y)] + 1

so a single kernel serves the ideal-detector and the finite-efficiency case;
only the five coefficients differ (see :meth:`ChshObjective.coefficients`).
The search is a coarse grid over real settings followed by Nelder-Mead
refinement from the best grid points.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize

from . import core_model as cm

__all__ = [
    "ChshObjective",
    "OptimizationResult",
    "SweepRow",
    "SweepSpec",
    "contour_eta",
    "eta_threshold",
    "optimize_settings",
    "sweep_g1tau",
    "sweep_g2tau",
    "DEFAULT_T_LIST",
    "DEFAULT_P_LIST",
]

DEFAULT_T_LIST = (1.0, 0.99, 0.95, 0.9, 0.8)
DEFAULT_P_LIST = (0.39, 0.3, 0.2, 0.1)
TIE_TOL = 1e-12


@dataclass(frozen=True)
class ChshObjective:
    """One of the two CHSH functionals at fixed state parameters.

    ``kind="chsh"`` uses ideal on-off detection on the ``(p, T)`` state;
    ``kind="chsh_eta"`` uses the efficiency-``eta`` Q-function form (T = 1).
    """

    kind: str
    p: float
    T: float = 1.0
    eta: float = 1.0

    def __post_init__(self):
        if self.kind not in ("chsh", "chsh_eta"):
            raise ValueError(f"unknown objective kind {self.kind!r}")
        if not 0 <= self.p < 1:
            raise ValueError("p must lie in [0, 1)")
        if not 0 <= self.T <= 1:
            raise ValueError("T must lie in [0, 1]")
        if not 0 < self.eta <= 1:
            raise ValueError("eta must lie in (0, 1]")
        if self.kind == "chsh_eta" and self.T != 1.0:
            raise ValueError("the efficiency functional assumes T = 1")

    @classmethod
    def chsh(cls, p, T=1.0):
        return cls("chsh", float(p), float(T))

    @classmethod
    def chsh_eta(cls, p, eta):
        return cls("chsh_eta", float(p), 1.0, float(eta))

    @property
    def objective_id(self) -> str:
        if self.kind == "chsh":
            return f"chsh_S(p={self.p!r},T={self.T!r})"
        return f"chsh_S_eta(p={self.p!r},eta={self.eta!r})"

    def coefficients(self):
        """``(J, A, B, M, C)`` of the shared correlator form."""
        p = self.p
        if self.kind == "chsh":
            k = p * self.T
            return 1.0 - p, 1.0, 2.0 * math.sqrt(k), 1.0 - p, 1.0 - k
        eta = self.eta
        R = cm.R_of_eta(p, eta)
        S = cm.S_of_eta(p, eta)
        return 4.0 / (eta**2 * R), 2.0 * S / R, 8.0 * math.sqrt(p) / (R * (1.0 - p)), 2.0 / (eta * S), 2.0 / S

    def far_settings(self, decades: float = 40.0) -> np.ndarray:
        """Equal real displacements large enough that every click term is below ``exp(-decades)``.

        In that limit each detector always reports -1, every correlator is 1
        and S equals the local bound 2; the finite-efficiency functional only
        reaches it asymptotically.
        """
        J, A, B, M, C = self.coefficients()
        rate = min(C, 2.0 * A + B)
        return np.full(4, math.sqrt(decades / rate)) if rate > 0 else np.zeros(4)

    def correlation_table(self, a_vals, b_vals) -> np.ndarray:
        """``E[i, j]`` for real ``a_vals[i]``, ``b_vals[j]``."""
        J, A, B, M, C = self.coefficients()
        a = np.asarray(a_vals, dtype=float)[:, None]
        b = np.asarray(b_vals, dtype=float)[None, :]
        return 4.0 * J * np.exp(-A * (a * a + b * b) - B * a * b) - 2.0 * M * (np.exp(-C * a * a) + np.exp(-C * b * b)) + 1.0

    def scalar_function(self, complex_settings=False):
        """Fast pure-Python ``S(x)`` for 4 real or 8 interleaved (re, im) values."""
        J, A, B, M, C = self.coefficients()
        exp = math.exp
        J4, M2 = 4.0 * J, 2.0 * M

        def corr(ax, by, z, ea, eb):
            return J4 * exp(-A * (ax + by) - B * z) - M2 * (ea + eb) + 1.0

        if complex_settings:

            def f(x):
                a1 = complex(x[0], x[1])
                a2 = complex(x[2], x[3])
                b1 = complex(x[4], x[5])
                b2 = complex(x[6], x[7])
                xa1, xa2, xb1, xb2 = (abs(v) ** 2 for v in (a1, a2, b1, b2))
                ea1, ea2, eb1, eb2 = exp(-C * xa1), exp(-C * xa2), exp(-C * xb1), exp(-C * xb2)
                return abs(
                    corr(xa1, xb1, (a1 * b1).real, ea1, eb1)
                    + corr(xa1, xb2, (a1 * b2).real, ea1, eb2)
                    + corr(xa2, xb1, (a2 * b1).real, ea2, eb1)
                    - corr(xa2, xb2, (a2 * b2).real, ea2, eb2)
                )

        else:

            def f(x):
                a1, a2, b1, b2 = float(x[0]), float(x[1]), float(x[2]), float(x[3])
                xa1, xa2, xb1, xb2 = a1 * a1, a2 * a2, b1 * b1, b2 * b2
                ea1, ea2, eb1, eb2 = exp(-C * xa1), exp(-C * xa2), exp(-C * xb1), exp(-C * xb2)
                return abs(
                    corr(xa1, xb1, a1 * b1, ea1, eb1)
                    + corr(xa1, xb2, a1 * b2, ea1, eb2)
                    + corr(xa2, xb1, a2 * b1, ea2, eb1)
                    - corr(xa2, xb2, a2 * b2, ea2, eb2)
                )

        return f

    def value(self, settings: cm.MeasurementSettings) -> float:
        """Reference evaluation through :mod:`core_model`."""
        if self.kind == "chsh":
            return cm.chsh_S(self.p, self.T, settings)
        return cm.chsh_S_eta(self.p, self.eta, settings)

    def correlations(self, settings: cm.MeasurementSettings):
        if self.kind == "chsh":
            return cm.correlations(self.p, self.T, settings)
        p, eta, s = self.p, self.eta, settings

        def E(a, b):
            pab = math.pi**2 / eta**2 * float(cm.q2_eta(p, eta, a, b))
            pa = math.pi / eta * float(cm.q1_eta(p, eta, a))
            pb = math.pi / eta * float(cm.q1_eta(p, eta, b))
            return 4.0 * pab - 2.0 * (pa + pb) + 1.0

        return E(s.alpha1, s.beta1), E(s.alpha1, s.beta2), E(s.alpha2, s.beta1), E(s.alpha2, s.beta2)


@dataclass
class OptimizationResult:
    best_S: float
    settings: cm.MeasurementSettings
    correlations: tuple
    starts_used: int
    converged: bool
    objective_id: str
    n_evals: int = 0
    start_values: list = field(default_factory=list)


@lru_cache(maxsize=8)
def _grid_tables(bound, step):
    g = np.round(np.arange(-bound, bound + 0.5 * step, step), 12)
    idx = np.indices((g.size,) * 4).reshape(4, -1)
    norm2 = (g[idx] ** 2).sum(axis=0)
    return g, idx, norm2


def _grid_starts(objective, bound, step, count):
    g, idx, norm2 = _grid_tables(float(bound), float(step))
    E = objective.correlation_table(g, g)
    # S[a1, a2, b1, b2]
    S = np.abs(E[:, None, :, None] + E[:, None, None, :] + E[None, :, :, None] - E[None, :, None, :]).ravel()
    order = np.lexsort((norm2, -S))[:count]
    return [(g[idx[:, k]], float(S[k])) for k in order]


def optimize_settings(
    objective: ChshObjective,
    restarts: int = 5,
    budget: int = 4000,
    grid_bound: float = 2.0,
    grid_step: float = 0.25,
    rtol: float = 1e-8,
    complex_settings: bool = False,
    extra_starts=(),
) -> OptimizationResult:
    """Maximise ``S`` over the four displacements.

    A grid over ``[-grid_bound, grid_bound]^4`` seeds ``restarts`` Nelder-Mead
    runs (``budget`` function evaluations each).  ``extra_starts`` are
    additional real or complex setting vectors, e.g. a neighbour's optimum.
    The large-displacement limit (S = 2) is always among the candidates.
    With ``complex_settings`` the refinement runs over all 8 real parameters.
    """
    starts = _grid_starts(objective, grid_bound, grid_step, restarts)
    f = objective.scalar_function(complex_settings)
    x0s = []
    for x, _ in starts:
        x0s.append(np.repeat(x, 2) * np.tile([1.0, 0.0], 4) if complex_settings else x)
    for extra in extra_starts:
        s = extra if isinstance(extra, cm.MeasurementSettings) else cm.MeasurementSettings.from_vector(extra)
        x0s.append(s.as_real_imag() if complex_settings else s.as_complex().real)

    candidates = []
    n_evals = 0
    start_values = []
    for x0 in x0s:
        s0 = f(x0)
        start_values.append(s0)
        res = minimize(
            lambda x: -f(x),
            x0,
            method="Nelder-Mead",
            options={"xatol": 1e-9, "fatol": rtol * max(s0, 1.0), "maxfev": budget, "maxiter": budget},
        )
        n_evals += res.nfev
        candidates.append((s0, np.asarray(x0, dtype=float), bool(res.success)))
        candidates.append((-float(res.fun), np.asarray(res.x), bool(res.success)))

    far = objective.far_settings()
    if complex_settings:
        far = np.repeat(far, 2) * np.tile([1.0, 0.0], 4)
    candidates.append((f(far), far, True))

    top = max(c[0] for c in candidates)
    tied = [c for c in candidates if c[0] >= top - TIE_TOL * max(top, 1.0)]
    s_best, x_best, ok = min(tied, key=lambda c: (float(np.linalg.norm(c[1])), -c[0]))
    settings = cm.MeasurementSettings.from_vector(x_best).canonical()
    return OptimizationResult(
        best_S=s_best,
        settings=settings,
        correlations=objective.correlations(settings),
        starts_used=len(x0s),
        converged=ok,
        objective_id=objective.objective_id,
        n_evals=n_evals,
        start_values=start_values,
    )


# ---------------------------------------------------------------- sweeps


@dataclass(frozen=True)
class SweepSpec:
    """A uniform axis ``[min, max]`` in steps of ``step`` plus the curve parameters."""

    name: str
    min: float
    max: float
    step: float
    curves: tuple = ()
    fixed: dict = field(default_factory=dict)
    budget: int = 4000

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("step must be > 0")
        if not self.min < self.max:
            raise ValueError("min must be < max")

    def grid(self) -> np.ndarray:
        n = int(math.floor((self.max - self.min) / self.step + 1e-9))
        return np.round(self.min + self.step * np.arange(n + 1), 10)


G1TAU_SPEC = SweepSpec("g1tau", 0.01, 1.0, 0.01, DEFAULT_T_LIST)
G2TAU_SPEC = SweepSpec("g2tau", 0.05, 3.0, 0.05, DEFAULT_P_LIST)
ETA_SPEC = SweepSpec("eta", 0.5, 1.0, 0.01)


@dataclass(frozen=True)
class SweepRow:
    g1tau: float | None
    g2tau: float | None
    p: float
    T: float
    eta: float
    S: float
    settings: cm.MeasurementSettings
    converged: bool = True


def _make_objective(p, T, eta, q_form=False):
    if eta == 1.0 and not q_form:
        return ChshObjective.chsh(p, T)
    return ChshObjective.chsh_eta(p, eta)


def _run_curve(task):
    """Optimise a list of points in order, optionally warm-starting from the previous optimum."""
    points, warm_start, budget, q_form = task
    rows = []
    prev = None
    for g1tau, g2tau, p, T, eta in points:
        extra = (prev,) if (warm_start and prev is not None) else ()
        res = optimize_settings(_make_objective(p, T, eta, q_form), budget=budget, extra_starts=extra)
        prev = res.settings
        rows.append(SweepRow(g1tau, g2tau, p, T, eta, res.best_S, res.settings, res.converged))
    return rows


def _execute(curves, warm_start, budget, parallel, q_form=False):
    """Run curves (lists of points); without warm start every point is its own work item."""
    if warm_start:
        tasks = [(pts, True, budget, q_form) for pts in curves]
    else:
        tasks = [([pt], False, budget, q_form) for pts in curves for pt in pts]
    if parallel is None:
        parallel = os.cpu_count() or 1
    if parallel <= 1 or len(tasks) <= 1:
        chunks = [_run_curve(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            chunks = list(pool.map(_run_curve, tasks, chunksize=max(1, len(tasks) // (4 * parallel))))
    return [row for chunk in chunks for row in chunk]


def sweep_g1tau(T_list=DEFAULT_T_LIST, g1tau_grid=None, eta=1.0, budget=4000, parallel=1, warm_start=False):
    """Optimal S versus the squeezing pulse area for each conversion efficiency in ``T_list``."""
    grid = G1TAU_SPEC.grid() if g1tau_grid is None else np.asarray(g1tau_grid, dtype=float)
    if eta != 1.0 and any(T != 1.0 for T in T_list):
        raise ValueError("finite efficiency is only defined for T = 1")
    curves = [[(float(g), None, cm.p_from_g1tau(float(g)), float(T), float(eta)) for g in grid] for T in T_list]
    return _execute(curves, warm_start, budget, parallel)


def sweep_g2tau(p_list=DEFAULT_P_LIST, g2tau_grid=None, eta=1.0, budget=4000, parallel=1, warm_start=False):
    """Optimal S versus the read-out pulse area for each pair parameter in ``p_list``."""
    grid = G2TAU_SPEC.grid() if g2tau_grid is None else np.asarray(g2tau_grid, dtype=float)
    if eta != 1.0:
        raise ValueError("finite efficiency is only defined for T = 1")
    curves = [[(None, float(g), float(p), cm.T_from_g2tau(float(g)), float(eta)) for g in grid] for p in p_list]
    return _execute(curves, warm_start, budget, parallel)


def contour_eta(g1tau_grid=None, eta_grid=None, budget=4000, parallel=1, warm_start=False):
    """Optimal efficiency-dependent S on the (g1tau, eta) grid, T = 1."""
    g1 = G1TAU_SPEC.grid() if g1tau_grid is None else np.asarray(g1tau_grid, dtype=float)
    etas = ETA_SPEC.grid() if eta_grid is None else np.asarray(eta_grid, dtype=float)
    curves = [[(float(g), None, cm.p_from_g1tau(float(g)), 1.0, float(e)) for g in g1] for e in etas]
    return _execute(curves, warm_start, budget, parallel, q_form=True)


def eta_threshold(rows, margin=1e-9):
    """Smallest ``eta`` whose best S over the grid exceeds ``2 + margin`` (None if never)."""
    viol = [r.eta for r in rows if r.S > 2.0 + margin]
    return min(viol) if viol else None
