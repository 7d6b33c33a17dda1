"""Event-driven simulation of both chains under a shared clock stream.

All randomness flows through :class:`ClockStream`: one Poisson clock of total
rate (n-1) whose events carry a uniform edge label and a sort/antisort mark.
Driving every initial condition with the same stream realizes the monotone
grand coupling: a sort event orders the card pair ascending (equivalently,
flips a local maximum of the height function down), an antisort event does
the opposite.

Two execution engines share that event definition:

* a scalar engine for single or coupled trajectories with samplers, merge
  detection and order-violation tracking (pure Python lists, O(1) per event);
* a batch engine that advances many independent replicas in lockstep with
  vectorized numpy updates, used by the Monte-Carlo distance estimators at
  large n.  Replica r always consumes the stream keyed (seed, r), so results
  are reproducible independently of batching or scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import exact as _exact
from .chains import (HeightFunction, ModelParams, ParticleConfig, Permutation,
                     height, in_frontier_window, unheight, vee, wedge)
from .hydro import DensityField

_BLOCK = 4096  # events generated per stream pull; part of the stream contract


def _philox(seed: int, stream: int) -> np.random.Generator:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, stream & 0xFFFFFFFFFFFFFFFF],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


class ClockStream:
    """Deterministic event source for a given (seed, stream) pair.

    Events are derived from blocks of uniforms drawn from a Philox counter
    generator: inter-event gaps are Exp(n-1), edges are uniform on 1..n-1 and
    the mark is 'sort' with probability p.  Each edge therefore sees sort
    events at rate p and antisort events at rate q, independently.
    """

    def __init__(self, seed: int, n: int, params: ModelParams, stream: int = 0):
        if n < 2:
            raise ValueError("need n >= 2")
        self.seed = seed
        self.n = n
        self.params = params
        self.stream = stream
        self._rng = _philox(seed, stream)

    def next_block(self):
        """(gaps, edges, sorts) arrays of length _BLOCK."""
        u = self._rng.random((3, _BLOCK))
        gaps = -np.log1p(-u[0]) / (self.n - 1)
        edges = 1 + (u[1] * (self.n - 1)).astype(np.int64)
        sorts = u[2] < self.params.p
        return gaps, edges, sorts

    def events(self):
        """Yield (time, edge, is_sort) triples forever."""
        t = 0.0
        while True:
            gaps, edges, sorts = self.next_block()
            for g, e, s in zip(gaps.tolist(), edges.tolist(), sorts.tolist()):
                t += g
                yield t, e, s


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

@dataclass
class Trajectory:
    """Snapshots of one or more coupled height trajectories.

    ``heights[i][s]`` is the value array of trajectory i at ``times[s]``;
    ``ell``/``r`` hold the frontier positions with shape (trajectories,
    samples).  ``merge_time`` is inf when the trajectories did not coalesce
    before the horizon, and ``order_violations`` counts events after which
    some initially ordered pair was out of order (zero under the coupling).
    """

    times: np.ndarray
    heights: list
    ell: np.ndarray
    r: np.ndarray
    merge_time: float
    order_violations: int
    meta: dict = field(default_factory=dict)

    def merged_flags(self) -> np.ndarray:
        return self.times >= self.merge_time


@dataclass
class ShuffleTrajectory:
    times: np.ndarray
    states: list
    meta: dict = field(default_factory=dict)


@dataclass
class LineTrajectory:
    times: np.ndarray
    positions: np.ndarray  # (samples, particles)
    meta: dict = field(default_factory=dict)


def _prepare_samples(sample_times, horizon: float) -> list[float]:
    if sample_times is None:
        return [horizon]
    out = sorted(float(s) for s in sample_times)
    if any(s < 0 or s > horizon for s in out):
        raise ValueError("sample times must lie in [0, horizon]")
    return out


# ---------------------------------------------------------------------------
# scalar engines
# ---------------------------------------------------------------------------

def run_shuffle(xi: Permutation, params: ModelParams, horizon: float,
                seed: int = 0, sample_times=None,
                clocks: ClockStream | None = None) -> ShuffleTrajectory:
    """Simulate the card shuffle: sort events order the chosen adjacent pair
    ascending, antisort events descending."""
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    n = xi.n
    clocks = clocks or ClockStream(seed, n, params)
    samples = _prepare_samples(sample_times, horizon)
    deck = list(xi.images)
    times, states = [0.0], [Permutation(tuple(deck))]
    ptr = 0
    for t, edge, is_sort in clocks.events():
        if t > horizon:
            break
        while ptr < len(samples) and samples[ptr] < t:
            times.append(samples[ptr])
            states.append(Permutation(tuple(deck)))
            ptr += 1
        i = edge - 1
        a, b = deck[i], deck[i + 1]
        if is_sort:
            if a > b:
                deck[i], deck[i + 1] = b, a
        else:
            if a < b:
                deck[i], deck[i + 1] = b, a
    while ptr < len(samples):
        times.append(samples[ptr])
        states.append(Permutation(tuple(deck)))
        ptr += 1
    return ShuffleTrajectory(np.array(times), states,
                             meta={"seed": seed, "n": n, "p": params.p,
                                   "horizon": horizon})


def _frontier_of_list(v: list[int], n: int, k: int) -> tuple[int, int]:
    ell = max(x for x in range(n + 1) if v[x] == -x)
    r = min(x for x in range(n + 1) if v[x] == x - 2 * (n - k))
    return ell, r


def run_coupled(initials, params: ModelParams, horizon: float, seed: int = 0,
                sample_times=None, clocks: ClockStream | None = None,
                stop_at_merge: bool = False) -> Trajectory:
    """Drive several height functions with one clock stream.

    Merge time is the first event time at which all trajectories coincide
    (0.0 if they already do at t=0).  For every pair of initials that is
    ordered at time zero, the engine keeps an O(1)-per-event count of sites
    violating that order and reports the number of events after which any
    violation existed.
    """
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    initials = list(initials)
    if not initials:
        raise ValueError("need at least one initial condition")
    n, k = initials[0].n, initials[0].k
    if any((h.n, h.k) != (n, k) for h in initials):
        raise ValueError("all initial conditions must share (n, k)")
    clocks = clocks or ClockStream(seed, n, params)
    samples = _prepare_samples(sample_times, horizon)
    m = len(initials)
    hs = [list(h.values) for h in initials]

    # sites differing from trajectory 0, one counter per other trajectory
    diffs = [sum(1 for x in range(n + 1) if hs[j][x] != hs[0][x])
             for j in range(m)]
    merge_time = 0.0 if all(d == 0 for d in diffs) else math.inf

    ordered_pairs = []  # (hi, lo) indices ordered at t=0
    for i in range(m):
        for j in range(m):
            if i != j and all(a >= b for a, b in zip(hs[i], hs[j])):
                ordered_pairs.append((i, j))
    pair_bad = [0] * len(ordered_pairs)
    order_violations = 0

    times, snaps = [0.0], [[np.array(h, dtype=np.int64) for h in hs]]
    ptr = 0
    t_cur = 0.0
    for t, x, is_sort in clocks.events():
        if t > horizon:
            break
        while ptr < len(samples) and samples[ptr] < t:
            times.append(samples[ptr])
            snaps.append([np.array(h, dtype=np.int64) for h in hs])
            ptr += 1
        news = []
        for h in hs:
            a, b = h[x - 1], h[x + 1]
            news.append((a if a > b else b) - 1 if is_sort
                        else (a if a < b else b) + 1)
        if math.isinf(merge_time):
            new0 = news[0]
            for j in range(1, m):
                was = hs[j][x] != hs[0][x]
                now = news[j] != new0
                diffs[j] += int(now) - int(was)
        for pi, (hi, lo) in enumerate(ordered_pairs):
            was = hs[lo][x] > hs[hi][x]
            now = news[lo] > news[hi]
            pair_bad[pi] += int(now) - int(was)
        for h, nv in zip(hs, news):
            h[x] = nv
        t_cur = t
        if any(pair_bad):
            order_violations += 1
        if math.isinf(merge_time) and all(d == 0 for d in diffs[1:]):
            merge_time = t
            if stop_at_merge:
                break
    while ptr < len(samples):
        times.append(samples[ptr])
        snaps.append([np.array(h, dtype=np.int64) for h in hs])
        ptr += 1

    times = np.array(times)
    heights = [[snaps[s][i] for s in range(len(times))] for i in range(m)]
    ell = np.empty((m, len(times)), dtype=np.int64)
    r = np.empty_like(ell)
    for i in range(m):
        for s in range(len(times)):
            ell[i, s], r[i, s] = _frontier_of_list(heights[i][s].tolist(), n, k)
    return Trajectory(times, heights, ell, r, merge_time, order_violations,
                      meta={"seed": seed, "n": n, "k": k, "p": params.p,
                            "horizon": horizon, "last_event": t_cur})


# ---------------------------------------------------------------------------
# batch engine
# ---------------------------------------------------------------------------

def _pull_blocks(rngs, live, n: int, p: float):
    a = len(live)
    u = np.empty((a, 3, _BLOCK))
    for i, rid in enumerate(live):
        u[i] = rngs[rid].random((3, _BLOCK))
    gaps = -np.log1p(-u[:, 0, :]) / (n - 1)
    edges = 1 + (u[:, 1, :] * (n - 1)).astype(np.int64)
    sorts = u[:, 2, :] < p
    return gaps, edges, sorts


def batch_merge_times(n: int, k: int, params: ModelParams, horizon: float,
                      replicas: int, seed: int) -> np.ndarray:
    """Coalescence times of the (top, bottom) pair over independent replicas.

    Returns inf for replicas not merged by the horizon (right-censored).
    Replica r is driven by stream (seed, r).  Both trajectories of every
    replica live in one flat array indexed as replica*(n+1) + site, which
    keeps the per-event work to a handful of flat gathers and scatters.
    """
    top = np.asarray(wedge(n, k).values, dtype=np.int32)
    bot = np.asarray(vee(n, k).values, dtype=np.int32)
    rngs = [_philox(seed, r) for r in range(replicas)]
    merge = np.full(replicas, math.inf)
    width = n + 1

    live = np.arange(replicas)
    ha = np.tile(top, replicas)        # flat (replicas * width,)
    hv = np.tile(bot, replicas)
    diff = np.full(replicas, int(np.sum(top != bot)), dtype=np.int64)
    times = np.zeros(replicas)

    while live.size:
        gaps, edges, sorts = _pull_blocks(rngs, live, n, params.p)
        base = np.arange(live.size) * width
        unmerged = np.isinf(merge[live])
        tloc = times[live].copy()
        dloc = diff[live].copy()
        for j in range(_BLOCK):
            idx = base + edges[:, j]
            s = sorts[:, j]
            am, ap = ha[idx - 1], ha[idx + 1]
            bm, bp = hv[idx - 1], hv[idx + 1]
            na = np.where(s, np.maximum(am, ap) - 1, np.minimum(am, ap) + 1)
            nb = np.where(s, np.maximum(bm, bp) - 1, np.minimum(bm, bp) + 1)
            dloc += (ha[idx] == hv[idx]).astype(np.int64) - (na == nb)
            ha[idx] = na
            hv[idx] = nb
            tloc += gaps[:, j]
            hit = unmerged & (dloc == 0) & (tloc <= horizon)
            if hit.any():
                merge[live[hit]] = tloc[hit]
                unmerged &= ~hit
        times[live] = tloc
        diff[live] = dloc
        keep = unmerged & (tloc < horizon)
        if not keep.all():
            sites = np.repeat(keep, width)
            ha = ha[sites]
            hv = hv[sites]
            live = live[keep]
    return merge


def batch_states_at_time(n: int, k: int, params: ModelParams, t: float,
                         replicas: int, seed: int,
                         init: HeightFunction | None = None) -> np.ndarray:
    """Height values of one trajectory per replica, frozen exactly at time t.

    The batch advances in lockstep; a replica whose next event would land
    past t routes that event to a scratch site, leaving its state untouched
    from then on (the state at t is the state after the last event <= t).
    """
    init_vals = np.asarray((init or wedge(n, k)).values, dtype=np.int32)
    rngs = [_philox(seed, r) for r in range(replicas)]
    width = n + 4  # columns n+1..n+3 are a write sink for frozen replicas
    scratch = n + 2
    out = np.empty((replicas, n + 1), dtype=np.int32)

    live = np.arange(replicas)
    h = np.zeros(replicas * width, dtype=np.int32)
    h.reshape(replicas, width)[:, :n + 1] = init_vals
    times = np.zeros(replicas)

    while live.size:
        gaps, edges, sorts = _pull_blocks(rngs, live, n, params.p)
        base = np.arange(live.size) * width
        frozen = np.zeros(live.size, dtype=bool)
        tloc = times[live].copy()
        for j in range(_BLOCK):
            would = tloc + gaps[:, j]
            cross = ~frozen & (would > t)
            frozen |= cross
            apply = ~frozen
            idx = base + np.where(apply, edges[:, j], scratch)
            vm = h[idx - 1]
            vp = h[idx + 1]
            h[idx] = np.where(sorts[:, j], np.maximum(vm, vp) - 1,
                              np.minimum(vm, vp) + 1)
            tloc = np.where(apply, would, tloc)
        times[live] = tloc
        if frozen.any():
            out[live[frozen]] = h.reshape(-1, width)[frozen, :n + 1]
            h = h[np.repeat(~frozen, width)]
            live = live[~frozen]
    return out


def frontier_rows(states: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized frontier positions for rows of height values."""
    n = states.shape[1] - 1
    xs = np.arange(n + 1)
    mask_l = (states + xs) == 0
    ell = n - np.argmax(mask_l[:, ::-1], axis=1)
    mask_r = (states - (xs - 2 * (n - k))) == 0
    r = np.argmax(mask_r, axis=1)
    return ell, r


# ---------------------------------------------------------------------------
# Monte-Carlo distance estimators
# ---------------------------------------------------------------------------

def isotonic_nonincreasing(y: np.ndarray) -> np.ndarray:
    """Pool-adjacent-violators fit of a nonincreasing sequence."""
    vals = list(-np.asarray(y, dtype=np.float64))
    blocks = [[v, 1.0] for v in vals]
    merged = []
    for b in blocks:
        merged.append(b)
        while len(merged) > 1 and merged[-2][0] > merged[-1][0]:
            v2, w2 = merged.pop()
            v1, w1 = merged.pop()
            merged.append([(v1 * w1 + v2 * w2) / (w1 + w2), w1 + w2])
    out = []
    for v, w in merged:
        out.extend([v] * int(w))
    return -np.array(out)


MERGE_HORIZON_FACTOR = 10.0  # horizon cap: 10 * 2n/(p-q); beyond is censored


@dataclass
class TvUpperEstimate:
    times: np.ndarray
    raw: np.ndarray
    adjusted: np.ndarray
    radius: np.ndarray
    merge_times: np.ndarray
    replicas: int
    meta: dict = field(default_factory=dict)


def estimate_tv_upper(n: int, k: int, params: ModelParams, times,
                      replicas: int, seed: int = 0) -> TvUpperEstimate:
    """Monte-Carlo coupling bound: P(top and bottom not merged by t).

    Unbiased per time point; the raw curve is already nonincreasing because
    all time points share the same replica merge times, but the isotonic
    adjustment is reported alongside for uniformity.  The 95% binomial radius
    uses the normal approximation.
    """
    if replicas < 1:
        raise ValueError("need at least one replica")
    ts = np.asarray(sorted(float(t) for t in times))
    if ts.size and ts[0] < 0:
        raise ValueError("times must be nonnegative")
    cap = MERGE_HORIZON_FACTOR * 2.0 * n / (params.p - params.q)
    horizon = min(float(ts[-1]) if ts.size else 0.0, cap)
    merge = batch_merge_times(n, k, params, horizon, replicas, seed)
    raw = np.array([(merge > t).mean() for t in ts])
    radius = 1.96 * np.sqrt(raw * (1 - raw) / replicas)
    return TvUpperEstimate(ts, raw, isotonic_nonincreasing(raw), radius, merge,
                           replicas, meta={"n": n, "k": k, "p": params.p,
                                           "seed": seed, "horizon": horizon})


EXACT_PI_STATE_CAP = 200_000  # exact window mass only below this state count


@dataclass
class TvLowerEstimate:
    estimate: float
    conservative: float
    pi_term: float
    pi_is_exact: bool
    p_hat: float
    radius: float
    meta: dict = field(default_factory=dict)


def estimate_tv_lower(n: int, k: int, params: ModelParams, t: float,
                      eps: float, replicas: int, seed: int = 0) -> TvLowerEstimate:
    """Lower bound on the worst-case distance at time t:
    pi(window) - P(top trajectory inside the frontier window at t).

    The stationary window mass is exact below the enumeration cap, otherwise
    bounded below through the stationary frontier-gap tail.  ``conservative``
    subtracts three binomial standard errors from the estimate.
    """
    if not 0 < eps:
        raise ValueError("eps must be positive")
    if replicas < 1:
        raise ValueError("need at least one replica")
    pi_term, pi_exact = _window_mass(n, k, params, eps)
    states = batch_states_at_time(n, k, params, t, replicas, seed)
    ell, r = frontier_rows(states, k)
    inside = (np.abs(ell - (n - k)) <= eps * n) & (np.abs(r - (n - k)) <= eps * n)
    p_hat = float(inside.mean())
    se = math.sqrt(max(p_hat * (1 - p_hat), 1.0 / replicas) / replicas)
    est = pi_term - p_hat
    return TvLowerEstimate(est, est - 3.0 * se, pi_term, pi_exact, p_hat,
                           1.96 * se,
                           meta={"n": n, "k": k, "p": params.p, "t": t,
                                 "eps": eps, "seed": seed, "replicas": replicas})


def _window_mass(n: int, k: int, params: ModelParams, eps: float) -> tuple[float, bool]:
    if eps >= 1.0:
        return 1.0, True
    if math.comb(n, k) <= EXACT_PI_STATE_CAP:
        from .chains import ExclusionSpace, equilibrium_asep
        space = ExclusionSpace(n, k)
        pi = equilibrium_asep(n, k, params)
        mass = sum(p for p, cfg in zip(pi.probs, space.states())
                   if in_frontier_window(height(cfg), eps))
        return float(mass), True
    # a state outside the window has frontier gap r - ell > eps*n
    m = int(math.floor(eps * n)) + 1
    return max(0.0, 1.0 - _exact.frontier_tail_bound(m, params)), False


# ---------------------------------------------------------------------------
# density observables
# ---------------------------------------------------------------------------

def empirical_density(h, cells: int) -> DensityField:
    """Cell-averaged occupation of the configuration underlying a height."""
    v = h.to_array() if isinstance(h, HeightFunction) else np.asarray(h)
    bits = (np.diff(v) + 1) // 2
    n = bits.size
    if not 1 <= cells <= n:
        raise ValueError("cell count must lie in [1, n]")
    idx = (np.arange(n) * cells) // n
    sums = np.bincount(idx, weights=bits, minlength=cells)
    counts = np.bincount(idx, minlength=cells)
    return DensityField(sums / counts)


def rescaled_height(h) -> np.ndarray:
    """Height values divided by n, on the grid x = 0, 1/n, ..., 1."""
    v = h.to_array() if isinstance(h, HeightFunction) else np.asarray(h)
    return v / (v.size - 1)


def sample_equilibrium(n: int, k: int, params: ModelParams, n_samples: int,
                       seed: int = 0) -> tuple[list[ParticleConfig], dict]:
    """Approximate stationary samples from a long run started at the minimal
    bridge, with burn-in 3 * (2n/(p-q)) and the same spacing between samples.

    Only approximate (flagged in the returned metadata); exact enumeration
    sampling is available below the cap through the equilibrium vectors.
    """
    relax = 2.0 * n / (params.p - params.q)
    burn = 3.0 * relax
    sample_times = [burn + i * relax for i in range(n_samples)]
    traj = run_coupled([vee(n, k)], params, horizon=sample_times[-1],
                       seed=seed, sample_times=sample_times)
    configs = [unheight(HeightFunction(tuple(vals.tolist())))
               for vals in traj.heights[0][1:]]
    return configs, {"approximate": True, "burn_in": burn, "spacing": relax}


# ---------------------------------------------------------------------------
# exclusion process on the integer line
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinePositions:
    """Strictly increasing particle positions on the integer line."""

    positions: tuple[int, ...]

    def __post_init__(self):
        pos = self.positions
        if any(a >= b for a, b in zip(pos, pos[1:])):
            raise ValueError("positions must be strictly increasing")

    @property
    def n(self) -> int:
        return len(self.positions)


def run_line(init: LinePositions, params: ModelParams, horizon: float,
             rates_override=None, seed: int = 0,
             sample_times=None) -> LineTrajectory:
    """Exclusion dynamics on the integer line.

    Each particle attempts right jumps at its own rate (p unless overridden)
    and left jumps at rate q; attempts onto occupied sites are discarded.
    """
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    n = init.n
    right = np.full(n, params.p) if rates_override is None \
        else np.asarray(rates_override, dtype=np.float64)
    if right.shape != (n,) or np.any(right < 0) or np.any(right > 1):
        raise ValueError("per-particle right rates must lie in [0, 1]")
    q = params.q
    weights = right + q
    total = float(weights.sum())
    cum = np.cumsum(weights)
    p_right = right / weights
    samples = _prepare_samples(sample_times, horizon)

    rng = _philox(seed, 0)
    pos = list(init.positions)
    times, snaps = [0.0], [tuple(pos)]
    ptr = 0
    t_cur = 0.0
    done = False
    while not done:
        u = rng.random((3, _BLOCK))
        gaps = -np.log1p(-u[0]) / total
        idxs = np.searchsorted(cum, u[1] * total, side="right")
        np.clip(idxs, 0, n - 1, out=idxs)
        rights = u[2] < p_right[idxs]
        for g, i, go_right in zip(gaps.tolist(), idxs.tolist(), rights.tolist()):
            t_next = t_cur + g
            if t_next > horizon:
                done = True
                break
            while ptr < len(samples) and samples[ptr] < t_next:
                times.append(samples[ptr])
                snaps.append(tuple(pos))
                ptr += 1
            if go_right:
                if i == n - 1 or pos[i + 1] > pos[i] + 1:
                    pos[i] += 1
            else:
                if i == 0 or pos[i - 1] < pos[i] - 1:
                    pos[i] -= 1
            t_cur = t_next
    while ptr < len(samples):
        times.append(samples[ptr])
        snaps.append(tuple(pos))
        ptr += 1
    return LineTrajectory(np.array(times), np.array(snaps, dtype=np.int64),
                          meta={"seed": seed, "n": n, "p": params.p,
                                "horizon": horizon})


@dataclass
class ComparisonSystem:
    """Gap-stationary variant of the line dynamics.

    With geometric(mu) inter-particle gaps and right rates p for the first
    particle, p1 = (mu*(p+q) - q)/mu for the middle ones and p2 = mu*(p+q) - q
    for the last one, the joint gap law is preserved in time, which pins the
    drift of the first particle at p*mu - q.
    """

    n: int
    mu: float
    params: ModelParams
    p1: float = field(init=False)
    p2: float = field(init=False)

    def __post_init__(self):
        if not 0 < self.mu < 1:
            raise ValueError("mu must lie in (0, 1)")
        s = self.mu * (self.params.p + self.params.q)
        self.p2 = s - self.params.q
        self.p1 = self.p2 / self.mu
        for name, rate in (("p1", self.p1), ("p2", self.p2)):
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"{name} = {rate} falls outside [0, 1]")

    def right_rates(self) -> np.ndarray:
        rates = np.full(self.n, self.p1)
        rates[0] = self.params.p
        rates[-1] = self.p2
        return rates

    def sample_initial(self, seed: int = 0) -> LinePositions:
        """Last particle at n, gaps drawn iid geometric(mu) going left."""
        rng = _philox(seed, 1)
        gaps = rng.geometric(1.0 - self.mu, size=self.n - 1)
        pos = self.n - np.concatenate(([0], np.cumsum(gaps[::-1])))[::-1]
        return LinePositions(tuple(int(x) for x in pos))
