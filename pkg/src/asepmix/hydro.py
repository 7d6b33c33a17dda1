"""Macroscopic density evolution: a first-order Godunov solver for the
conservation law rho_t + (rho(1-rho))_x = 0 on [0, 1], plus the closed-form
scaling-limit profiles of the particle system started from the packed-left
state.

Boundaries are Dirichlet ghost cells pinned at 0 (left) and 1 (right).  For
this concave flux both boundary Godunov fluxes vanish identically, so the
scheme conserves mass exactly: the Dirichlet data realizes the zero-flux
behaviour of the particle system's closed segment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chains import ModelParams
from .errors import NumericsError

_BOUND_TOL = 1e-12


@dataclass
class DensityField:
    """Cell averages on a uniform grid of [0, 1]."""

    cells: np.ndarray

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=np.float64)
        if self.cells.ndim != 1 or self.cells.size < 1:
            raise ValueError("cells must be a nonempty 1-d array")
        if self.cells.min() < -_BOUND_TOL or self.cells.max() > 1 + _BOUND_TOL:
            raise ValueError("cell values must lie in [0, 1]")

    @property
    def m(self) -> int:
        return self.cells.size

    @property
    def dx(self) -> float:
        return 1.0 / self.cells.size

    def mass(self) -> float:
        return float(self.cells.sum() * self.dx)

    def l1_distance(self, other: "DensityField") -> float:
        if self.m != other.m:
            raise ValueError("grids differ")
        return float(np.abs(self.cells - other.cells).sum() * self.dx)


def piecewise_constant(pieces, m: int) -> DensityField:
    """Exact cell averages of a piecewise-constant profile.

    ``pieces`` is a list of (x_left, x_right, value) with value in [0, 1];
    uncovered regions default to 0.  Cells fully inside a piece receive the
    value exactly (no rounding residue), so flat profiles are bitwise flat.
    """
    cells = np.zeros(m)
    for a, b, v in pieces:
        if not 0 <= a <= b <= 1:
            raise ValueError("piece endpoints must satisfy 0 <= a <= b <= 1")
        if b <= a:
            continue
        start, end = a * m, b * m
        i0, full0 = int(math.floor(start)), int(math.ceil(start))
        full1 = int(math.floor(end))
        if full0 < full1:
            cells[full0:full1] += v
        if i0 < full0 and i0 < m:
            cells[i0] += v * (min(end, i0 + 1) - start)
        if full1 < end and full1 < m and full1 != i0:
            cells[full1] += v * (end - max(start, full1))
    return DensityField(cells)


def indicator(a: float, b: float, m: int) -> DensityField:
    return piecewise_constant([(a, b, 1.0)], m)


def flux(rho):
    return rho * (1.0 - rho)


def godunov_flux(a: float, b: float) -> float:
    """Exact Riemann flux for the concave flux rho(1-rho), left state a,
    right state b."""
    if not (0 <= a <= 1 and 0 <= b <= 1):
        raise ValueError("states must lie in [0, 1]")
    if a <= b:
        return float(min(flux(a), flux(b)))
    if b <= 0.5 <= a:
        return 0.25
    return float(max(flux(a), flux(b)))


def _flux_vec(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    fl, fr = flux(left), flux(right)
    upwind = np.where(left <= right, np.minimum(fl, fr), np.maximum(fl, fr))
    sonic = (left > right) & (right <= 0.5) & (0.5 <= left)
    return np.where(sonic, 0.25, upwind)


@dataclass
class BurgersSolution:
    times: list
    fields: list
    steps: int
    mass_drift: float
    min_cell: float
    max_cell: float

    @property
    def final(self) -> DensityField:
        return self.fields[-1]


def _step(rho: np.ndarray, dt_over_dx: float) -> np.ndarray:
    left = np.concatenate(([0.0], rho))
    right = np.concatenate((rho, [1.0]))
    f = _flux_vec(left, right)
    return rho - dt_over_dx * (f[1:] - f[:-1])


def solve_burgers(rho0: DensityField, horizon: float, cfl: float = 0.45,
                  snapshot_times=None) -> BurgersSolution:
    """March the explicit Godunov scheme to the requested time.

    Steps have size cfl*dx (the wave speed never exceeds 1), shortened when
    needed to land exactly on snapshot times and on the horizon.  Every step
    asserts the maximum principle; the total mass drift is tracked and
    reported.
    """
    if not 0 < cfl <= 1:
        raise ValueError("cfl must lie in (0, 1]")
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    snaps = sorted(float(s) for s in (snapshot_times or []))
    if any(s < 0 or s > horizon for s in snaps):
        raise ValueError("snapshot times must lie in [0, horizon]")
    rho = rho0.cells.copy()
    dx = rho0.dx
    dt_max = cfl * dx
    mass0 = rho.sum() * dx
    t = 0.0
    steps = 0
    lo, hi = float(rho.min()), float(rho.max())
    times, fields = [], []
    ptr = 0
    while ptr < len(snaps) and snaps[ptr] <= t:
        times.append(snaps[ptr])
        fields.append(DensityField(rho.copy()))
        ptr += 1
    while t < horizon - 1e-15:
        target = snaps[ptr] if ptr < len(snaps) else horizon
        dt = min(dt_max, target - t, horizon - t)
        rho = _step(rho, dt / dx)
        t += dt
        steps += 1
        lo = min(lo, float(rho.min()))
        hi = max(hi, float(rho.max()))
        if lo < -_BOUND_TOL or hi > 1 + _BOUND_TOL:
            raise NumericsError(f"maximum principle violated: range [{lo}, {hi}]")
        while ptr < len(snaps) and snaps[ptr] <= t + 1e-15:
            times.append(snaps[ptr])
            fields.append(DensityField(rho.copy()))
            ptr += 1
    times.append(t)
    fields.append(DensityField(rho.copy()))
    drift = abs(rho.sum() * dx - mass0)
    return BurgersSolution(times, fields, steps, drift, lo, hi)


@dataclass
class StabilizationResult:
    time: float
    censored: bool
    m: int
    tol: float


def stabilization_time(rho0: DensityField, tol_l1: float = 1e-3,
                       cfl: float = 0.45, horizon: float = 4.0) -> StabilizationResult:
    """First solver time at which the field is within L1 tolerance of its
    terminal profile, the indicator of [1-alpha, 1] with alpha = mass(rho0).

    Grid equality is unattainable, so the tolerance stands in for it; the
    grid resolution is reported with the result.  Returns a censored marker
    when the horizon is hit first.
    """
    if tol_l1 <= 0:
        raise ValueError("tolerance must be positive")
    alpha = rho0.mass()
    target = indicator(1.0 - alpha, 1.0, rho0.m).cells
    rho = rho0.cells.copy()
    dx = rho0.dx
    dt = cfl * dx
    t = 0.0
    if np.abs(rho - target).sum() * dx <= tol_l1:
        return StabilizationResult(0.0, False, rho0.m, tol_l1)
    while t < horizon:
        rho = _step(rho, cfl)
        t += dt
        if np.abs(rho - target).sum() * dx <= tol_l1:
            return StabilizationResult(t, False, rho0.m, tol_l1)
    return StabilizationResult(math.inf, True, rho0.m, tol_l1)


# ---------------------------------------------------------------------------
# closed-form scaling limit from the packed-left state
# ---------------------------------------------------------------------------

def terminal_time(alpha: float) -> float:
    """Time at which the limit shape from packed-left reaches its final state,
    (sqrt(alpha) + sqrt(1-alpha))**2, written without the squaring rounding."""
    return 1.0 + 2.0 * math.sqrt(alpha * (1.0 - alpha))


def macro_wedge(alpha: float, x):
    return np.minimum(x, 2.0 * alpha - np.asarray(x, dtype=np.float64))


def macro_vee(alpha: float, x):
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(-x, x - 2.0 * (1.0 - alpha))


def limit_profile(alpha: float, t: float, x):
    """Scaling limit of the rescaled height from packed-left at macroscopic
    time t: a parabolic cap glued to the initial tent, floored at the
    terminal bridge."""
    if not 0 < alpha <= 0.5:
        raise ValueError("alpha must lie in (0, 1/2]")
    if t < 0:
        raise ValueError("t must be nonnegative")
    x = np.asarray(x, dtype=np.float64)
    tent = macro_wedge(alpha, x)
    if t == 0:
        cap = tent
    else:
        parab = alpha - t / 2.0 - (x - alpha) ** 2 / (2.0 * t)
        cap = np.where(np.abs(x - alpha) <= t, parab, tent)
    return np.maximum(macro_vee(alpha, x), cap)


def limit_frontiers(alpha: float, t: float) -> tuple[float, float]:
    """Macroscopic frontier positions at time t for density alpha in [0, 1/2]."""
    if not 0 <= alpha <= 0.5:
        raise ValueError("alpha must lie in [0, 1/2]")
    if t < 0:
        raise ValueError("t must be nonnegative")
    if alpha == 0.0:
        return min(t, 1.0), 1.0
    ts = terminal_time(alpha)
    if t >= ts:
        return 1.0 - alpha, 1.0 - alpha
    ell = 0.0 if t <= alpha else (math.sqrt(t) - math.sqrt(alpha)) ** 2
    r = 1.0 if t <= 1.0 - alpha else 1.0 - (math.sqrt(t) - math.sqrt(1.0 - alpha)) ** 2
    return ell, r


def compare_to_simulation(times, scaled_heights, alpha: float):
    """Sup-norm errors between rescaled simulated heights and the closed-form
    limit shape, one row per requested macroscopic time.

    ``scaled_heights[i]`` must be the height/n array on the grid j/n at
    macroscopic time ``times[i]``.
    """
    rows = []
    for t, vals in zip(times, scaled_heights):
        vals = np.asarray(vals, dtype=np.float64)
        x = np.linspace(0.0, 1.0, vals.size)
        g = limit_profile(alpha, float(t), x)
        rows.append({"t": float(t), "sup_error": float(np.abs(vals - g).max())})
    return rows


def density_l1_errors(times, density_fields, rho0: DensityField,
                      cfl: float = 0.45):
    """L1 errors between empirical density fields and the solver run from
    rho0, at matching macroscopic times."""
    times = [float(t) for t in times]
    sol = solve_burgers(rho0, max(times), cfl=cfl, snapshot_times=times)
    solver_at = {round(t, 12): f for t, f in zip(sol.times, sol.fields)}
    out = []
    for t, field_ in zip(times, density_fields):
        ref = solver_at.get(round(t, 12))
        if ref is None:
            raise ValueError(f"no solver snapshot at t={t}")
        out.append({"t": t, "l1_error": field_.l1_distance(ref)})
    return out


def predict_mixing(rho0: DensityField, ell: float, r: float, n: int,
                   params: ModelParams, tol_l1: float = 1e-3,
                   cfl: float = 0.45) -> float:
    """Asymptotic mixing-time prediction in chain time units:
    n/(p-q) * max(t_rho0, 1-alpha-ell, r-1+alpha), with the degenerate
    vanishing-density case n*(1-ell)/(p-q)."""
    if not (0 <= ell <= 1 and 0 <= r <= 1):
        raise ValueError("ell and r must lie in [0, 1]")
    alpha = rho0.mass()
    scale = n / (params.p - params.q)
    if alpha == 0.0:
        return scale * (1.0 - ell)
    st = stabilization_time(rho0, tol_l1=tol_l1, cfl=cfl,
                            horizon=2.0 * terminal_time(min(alpha, 1 - alpha)) + 1.0)
    if st.censored:
        raise NumericsError("stabilization time did not converge before the horizon")
    return scale * max(st.time, 1.0 - alpha - ell, r - 1.0 + alpha)
