"""State spaces, equilibrium measures and order structure.

Two Markov chains live here: the biased adjacent-transposition shuffle on
permutations of ``{1..N}``, and its projection, the asymmetric exclusion
process (ASEP) with ``k`` particles on ``N`` sites.  Particle configurations
are interchangeable with lattice-bridge "height functions", which carry the
partial order used by the monotone coupling.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import CapExceeded

SHUFFLE_ENUM_CAP = 7          # N! grows fast; 7! = 5040
EXCLUSION_ENUM_CAP = 10**6    # refuse larger spaces unless force=True


@dataclass(frozen=True)
class ModelParams:
    """Jump bias of the dynamics: right rate p in (1/2, 1], left rate q = 1 - p.

    Derived quantities: ``odds`` is the ratio p/q (infinite when p = 1) and
    ``gap_limit`` is (sqrt(p) - sqrt(q))**2, the large-N limit of the spectral
    gap of both chains.
    """

    p: float

    def __post_init__(self):
        if not 0.5 < self.p <= 1.0:
            raise ValueError(f"p must lie in (1/2, 1], got {self.p}")

    @property
    def q(self) -> float:
        return 1.0 - self.p

    @property
    def odds(self) -> float:
        return math.inf if self.p == 1.0 else self.p / self.q

    @property
    def log_odds(self) -> float:
        return math.inf if self.p == 1.0 else math.log(self.p) - math.log(self.q)

    @property
    def gap_limit(self) -> float:
        return (math.sqrt(self.p) - math.sqrt(self.q)) ** 2

    @property
    def totally_asymmetric(self) -> bool:
        return self.p == 1.0


# ---------------------------------------------------------------------------
# state types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Permutation:
    """One-line notation: images[i] is the card at position i+1."""

    images: tuple[int, ...]

    def __post_init__(self):
        n = len(self.images)
        if sorted(self.images) != list(range(1, n + 1)):
            raise ValueError("images must be a bijection of {1..n}")

    @property
    def n(self) -> int:
        return len(self.images)

    @staticmethod
    def identity(n: int) -> "Permutation":
        return Permutation(tuple(range(1, n + 1)))

    @staticmethod
    def reversal(n: int) -> "Permutation":
        """The fully reversed deck, i -> n + 1 - i (the maximal state)."""
        return Permutation(tuple(range(n, 0, -1)))


@dataclass(frozen=True)
class ParticleConfig:
    """Occupation bits over sites 1..n, exactly k ones."""

    occupied: tuple[int, ...]

    def __post_init__(self):
        if any(b not in (0, 1) for b in self.occupied):
            raise ValueError("occupied must be 0/1 valued")
        if not 1 <= sum(self.occupied) <= len(self.occupied) - 1:
            raise ValueError("particle number must lie in [1, n-1]")

    @property
    def n(self) -> int:
        return len(self.occupied)

    @property
    def k(self) -> int:
        return sum(self.occupied)

    def __str__(self) -> str:
        return "".join(str(b) for b in self.occupied)

    @staticmethod
    def from_string(s: str) -> "ParticleConfig":
        return ParticleConfig(tuple(int(c) for c in s))


@dataclass(frozen=True)
class HeightFunction:
    """Lattice bridge h(0)=0, h(n)=2k-n with steps of +-1.

    Equivalent to a ParticleConfig through partial sums of 2*eta - 1; the
    pointwise order on bridges is the one preserved by the grand coupling.
    """

    values: tuple[int, ...]

    def __post_init__(self):
        v = self.values
        if v[0] != 0:
            raise ValueError("height must start at 0")
        if any(abs(v[x] - v[x - 1]) != 1 for x in range(1, len(v))):
            raise ValueError("height steps must be +-1")

    @property
    def n(self) -> int:
        return len(self.values) - 1

    @property
    def k(self) -> int:
        return (self.values[-1] + self.n) // 2

    def to_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.int64)


# ---------------------------------------------------------------------------
# elementary statistics
# ---------------------------------------------------------------------------

def inversions(sigma: Permutation) -> int:
    """Number of out-of-order pairs, i.e. the adjacent-transposition distance from identity."""
    im = sigma.images
    return sum(1 for i, j in itertools.combinations(range(sigma.n), 2) if im[i] > im[j])


def area(eta: ParticleConfig) -> int:
    """Total displacement of the particles from the packed-right configuration."""
    n, k = eta.n, eta.k
    return sum((n - i) for i, b in zip(range(1, n + 1), eta.occupied) if b) - k * (k - 1) // 2


# ---------------------------------------------------------------------------
# conversions
# ---------------------------------------------------------------------------

def height(eta: ParticleConfig) -> HeightFunction:
    vals = [0]
    for b in eta.occupied:
        vals.append(vals[-1] + (1 if b else -1))
    return HeightFunction(tuple(vals))


def unheight(h: HeightFunction) -> ParticleConfig:
    v = h.values
    return ParticleConfig(tuple((v[x] - v[x - 1] + 1) // 2 for x in range(1, len(v))))


def project(sigma: Permutation, k: int) -> HeightFunction:
    """Height of the indicator of the k highest card labels along the deck."""
    n = sigma.n
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must lie in [1, {n - 1}], got {k}")
    vals = [0]
    for s in sigma.images:
        vals.append(vals[-1] + (1 if s >= n - k + 1 else -1))
    return HeightFunction(tuple(vals))


def reconstruct(heights: list[HeightFunction]) -> Permutation:
    """Invert the family of all level projections; raises ValueError if inconsistent.

    heights[j] must be the level-(j+1) projection.  Position x carries card
    n - k + 1 exactly when the level-k increment at x is +1 while the level
    k-1 increment is -1; the increments must flip from -1 to +1 exactly once
    as k grows, otherwise the family does not come from any permutation.
    """
    n = heights[0].n
    if len(heights) != n - 1:
        raise ValueError("need one height per level 1..n-1")
    for j, h in enumerate(heights):
        if h.n != n or h.k != j + 1:
            raise ValueError(f"height at index {j} must have k={j + 1} on n={n} sites")

    def inc(k: int, x: int) -> int:
        if k == 0:
            return -1
        if k == n:
            return 1
        hv = heights[k - 1].values
        return hv[x] - hv[x - 1]

    images = []
    for x in range(1, n + 1):
        hits = [k for k in range(1, n + 1) if inc(k, x) == 1 and inc(k - 1, x) == -1]
        if len(hits) != 1:
            raise ValueError(f"inconsistent height family at position {x}")
        images.append(n - hits[0] + 1)
    return Permutation(tuple(images))


# ---------------------------------------------------------------------------
# order and extremal states
# ---------------------------------------------------------------------------

def leq(a: HeightFunction, b: HeightFunction) -> bool:
    """Pointwise comparison a <= b; requires matching (n, k)."""
    if (a.n, a.k) != (b.n, b.k):
        raise ValueError("height functions must share (n, k)")
    return all(x <= y for x, y in zip(a.values, b.values))


def wedge(n: int, k: int) -> HeightFunction:
    """Maximal bridge: all particles packed to the left."""
    return HeightFunction(tuple(min(x, 2 * k - x) for x in range(n + 1)))


def vee(n: int, k: int) -> HeightFunction:
    """Minimal bridge: all particles packed to the right."""
    return HeightFunction(tuple(max(-x, x - 2 * (n - k)) for x in range(n + 1)))


def leq_perm(a: Permutation, b: Permutation) -> bool:
    """Order on permutations: every level projection of a sits below b's."""
    if a.n != b.n:
        raise ValueError("permutations must have equal size")
    return all(leq(project(a, k), project(b, k)) for k in range(1, a.n))


# ---------------------------------------------------------------------------
# frontier positions
# ---------------------------------------------------------------------------

def frontier(h: HeightFunction) -> tuple[int, int]:
    """(ell, r): last site where h hugs the left wall of the minimal bridge,
    first site where it hugs the right wall.

    ell equals (leftmost particle position) - 1 and r equals the rightmost
    empty site; both equal n - k exactly at the minimal bridge.
    """
    v = h.values
    n, k = h.n, h.k
    ell = max(x for x in range(n + 1) if v[x] == -x)
    r = min(x for x in range(n + 1) if v[x] == x - 2 * (n - k))
    return ell, r


def in_frontier_window(h: HeightFunction, eps: float) -> bool:
    """Both frontier positions within eps*n of their equilibrium location n - k."""
    ell, r = frontier(h)
    n, k = h.n, h.k
    return abs(ell - (n - k)) <= eps * n and abs(r - (n - k)) <= eps * n


# ---------------------------------------------------------------------------
# enumerated state spaces
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _binom(n: int, k: int) -> int:
    return math.comb(n, k)


class ExclusionSpace:
    """All k-particle configurations on n sites, ranked by the combinatorial
    number system (colex rank of the occupied-site set).  Rank/unrank are
    O(n) and stable across runs."""

    def __init__(self, n: int, k: int, force: bool = False):
        if not 1 <= k <= n - 1:
            raise ValueError(f"k must lie in [1, {n - 1}], got {k}")
        self.n = n
        self.k = k
        self.size = _binom(n, k)
        if self.size > EXCLUSION_ENUM_CAP and not force:
            raise CapExceeded(
                f"C({n},{k}) = {self.size} exceeds cap {EXCLUSION_ENUM_CAP}")

    def index(self, eta: ParticleConfig) -> int:
        if (eta.n, eta.k) != (self.n, self.k):
            raise ValueError("configuration does not belong to this space")
        sites = [i for i, b in enumerate(eta.occupied) if b]
        return sum(_binom(c, j + 1) for j, c in enumerate(sites))

    def state(self, rank: int) -> ParticleConfig:
        if not 0 <= rank < self.size:
            raise ValueError("rank out of range")
        bits = [0] * self.n
        rem = rank
        for j in range(self.k, 0, -1):
            # largest c with C(c, j) <= rem
            c = j - 1
            while _binom(c + 1, j) <= rem:
                c += 1
            bits[c] = 1
            rem -= _binom(c, j)
        return ParticleConfig(tuple(bits))

    def states(self):
        for rank in range(self.size):
            yield self.state(rank)

    def areas(self) -> np.ndarray:
        return np.array([area(s) for s in self.states()], dtype=np.int64)


class ShuffleSpace:
    """All permutations of {1..n} ranked by Lehmer code."""

    def __init__(self, n: int, force: bool = False):
        if n < 2:
            raise ValueError("need n >= 2")
        if n > SHUFFLE_ENUM_CAP and not force:
            raise CapExceeded(f"n = {n} exceeds shuffle enumeration cap {SHUFFLE_ENUM_CAP}")
        self.n = n
        self.size = math.factorial(n)

    def index(self, sigma: Permutation) -> int:
        if sigma.n != self.n:
            raise ValueError("permutation does not belong to this space")
        im = list(sigma.images)
        rank = 0
        for i in range(self.n):
            smaller = sum(1 for j in range(i + 1, self.n) if im[j] < im[i])
            rank += smaller * math.factorial(self.n - 1 - i)
        return rank

    def state(self, rank: int) -> Permutation:
        if not 0 <= rank < self.size:
            raise ValueError("rank out of range")
        pool = list(range(1, self.n + 1))
        images = []
        rem = rank
        for i in range(self.n):
            f = math.factorial(self.n - 1 - i)
            idx, rem = divmod(rem, f)
            images.append(pool.pop(idx))
        return Permutation(tuple(images))

    def states(self):
        for rank in range(self.size):
            yield self.state(rank)

    def inversion_counts(self) -> np.ndarray:
        return np.array([inversions(s) for s in self.states()], dtype=np.int64)


# ---------------------------------------------------------------------------
# distributions
# ---------------------------------------------------------------------------

@dataclass
class DistributionVector:
    """Probability vector over an enumerated space, aligned with its ranking."""

    space: object
    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.shape != (self.space.size,):
            raise ValueError("probability vector does not match the space size")
        if np.any(self.probs < -1e-15):
            raise ValueError("negative probability entry")
        if abs(self.probs.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must sum to 1 within 1e-12")

    def tv(self, other: "DistributionVector") -> float:
        if self.probs.shape != other.probs.shape:
            raise ValueError("dimension mismatch")
        return 0.5 * float(np.abs(self.probs - other.probs).sum())

    def pushforward(self, mapping: np.ndarray, target: object) -> "DistributionVector":
        """Image measure under an index map into the target space."""
        out = np.zeros(target.size)
        np.add.at(out, mapping, self.probs)
        return DistributionVector(target, out)


def _weights_from_scores(scores: np.ndarray, log_odds: float) -> np.ndarray:
    """Normalized vector proportional to odds**(-score), in log space."""
    logw = -log_odds * (scores - scores.min())
    w = np.exp(logw)
    return w / w.sum()


def equilibrium_shuffle(n: int, params: ModelParams, force: bool = False) -> DistributionVector:
    """Stationary law of the shuffle: weight odds**(-inversions); identity point mass at p=1."""
    space = ShuffleSpace(n, force=force)
    if params.totally_asymmetric:
        probs = np.zeros(space.size)
        probs[space.index(Permutation.identity(n))] = 1.0
        return DistributionVector(space, probs)
    return DistributionVector(space, _weights_from_scores(
        space.inversion_counts().astype(np.float64), params.log_odds))


def equilibrium_asep(n: int, k: int, params: ModelParams, force: bool = False) -> DistributionVector:
    """Stationary law of the exclusion process: weight odds**(-area); packed-right point mass at p=1."""
    space = ExclusionSpace(n, k, force=force)
    if params.totally_asymmetric:
        probs = np.zeros(space.size)
        probs[space.index(unheight(vee(n, k)))] = 1.0
        return DistributionVector(space, probs)
    return DistributionVector(space, _weights_from_scores(
        space.areas().astype(np.float64), params.log_odds))


# ---------------------------------------------------------------------------
# neighbor structure (corner flips)
# ---------------------------------------------------------------------------

def corner_moves(h: HeightFunction, params: ModelParams):
    """Legal single-site moves of a bridge with their rates.

    Yields (site, new_value, rate): a local maximum at x drops by 2 at rate p,
    a local minimum rises by 2 at rate q.
    """
    v = h.values
    for x in range(1, h.n):
        if v[x - 1] == v[x + 1]:
            if v[x] > v[x - 1]:
                yield x, v[x] - 2, params.p
            else:
                yield x, v[x] + 2, params.q


def flip(h: HeightFunction, x: int) -> HeightFunction:
    """Return the bridge with the corner at x flipped (must be a corner)."""
    v = list(h.values)
    if not (0 < x < h.n and v[x - 1] == v[x + 1]):
        raise ValueError(f"no corner at site {x}")
    v[x] = 2 * v[x - 1] - v[x]
    return HeightFunction(tuple(v))
