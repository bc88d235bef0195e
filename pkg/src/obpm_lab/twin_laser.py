"""Continuous measurement of two independent lasers behind a 50/50 beamsplitter.

Output modes are c = (a - b)/sqrt 2 and d = (a + b)/sqrt 2. Two-level atoms
crossing the outputs absorb photons; a record with p absorptions from c and
q from d leaves the phase difference Delta = phi_a - phi_b distributed as
sin^{2p}(Delta/2) cos^{2q}(Delta/2).

Time-ordering corrections to the jump statistics are neglected (each output
mode's damping during the other's jumps is taken as 1).
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy.special import gammaln, xlogy
from scipy.special import logsumexp as sp_logsumexp

from .special import log_beta, log_binom, log_kummer_1f1, log_poisson_pmf
from .tables import DistributionTable, stream_rng

TWO_PI = 2 * math.pi


@lru_cache(maxsize=8)
def _gauss_legendre(n: int):
    return np.polynomial.legendre.leggauss(n)


class ValidityWarning(UserWarning):
    """Atom transit time too long for the one-absorption-per-atom picture."""


@dataclass(frozen=True)
class ApparatusConfig:
    r0: float
    g: float
    tau: float
    t: float
    seed: int = 0

    def __post_init__(self):
        if self.r0 < 0 or self.g < 0 or self.tau <= 0 or self.t < 0:
            raise ValueError("need r0 >= 0, g >= 0, tau > 0, t >= 0")

    @cached_property
    def R(self) -> float:
        return 0.5 * self.g**2 * self.tau

    @property
    def expected_jumps(self) -> float:
        """Mean total absorptions 2 r0^2 (1 - e^{-2Rt})."""
        return 2 * self.r0**2 * -math.expm1(-2 * self.R * self.t)

    @property
    def r_t(self) -> float:
        return self.r0 * math.exp(-self.R * self.t)

    @property
    def validity_bound(self) -> float:
        """tau must stay well below 1/(sqrt(2 s) r0 g) for s expected jumps."""
        s = math.ceil(self.expected_jumps)
        denom = math.sqrt(2 * s) * self.r0 * self.g
        return math.inf if denom == 0 else 1.0 / denom

    @property
    def valid(self) -> bool:
        return self.tau < self.validity_bound


@dataclass(frozen=True)
class JumpRecord:
    times: tuple
    channels: str  # one 'c' or 'd' per jump
    p: int
    q: int
    r_t: float
    phi_a: float = math.nan
    phi_b: float = math.nan

    @property
    def s(self) -> int:
        return self.p + self.q

    @property
    def delta(self) -> float:
        return (self.phi_a - self.phi_b) % TWO_PI


# -- exact statistics -------------------------------------------------------

def log_jump_count_probability(s: int, p: int) -> float:
    if not 0 <= p <= s:
        raise ValueError(f"need 0 <= p <= s, got p={p}, s={s}")
    q = s - p
    return log_binom(s, p) + log_beta(p + 0.5, q + 0.5) - math.log(math.pi)


def jump_count_probability(s: int, p: int) -> float:
    """P(p of s absorptions in mode c) = C(s,p) B(p+1/2, s-p+1/2) / pi."""
    if not 0 <= p <= s:
        raise ValueError(f"need 0 <= p <= s, got p={p}, s={s}")
    # evaluate the smaller count so P(p) == P(s - p) bit for bit
    return math.exp(log_jump_count_probability(s, min(p, s - p)))


def jump_count_distribution(s: int) -> np.ndarray:
    return np.array([jump_count_probability(s, p) for p in range(s + 1)])


@dataclass(frozen=True)
class PhaseDifferencePosterior:
    """f(Delta) = sin^{2p}(Delta/2) cos^{2q}(Delta/2) / (2 B(p+1/2, q+1/2)) on [0, 2 pi)."""

    p: int
    q: int

    @cached_property
    def _log_norm(self) -> float:
        return math.log(2.0) + log_beta(self.p + 0.5, self.q + 0.5)

    def log_density(self, delta):
        h = 0.5 * np.asarray(delta, dtype=float)
        with np.errstate(divide="ignore"):
            return (xlogy(2 * self.p, np.abs(np.sin(h))) + xlogy(2 * self.q, np.abs(np.cos(h)))
                    - self._log_norm)

    def __call__(self, delta):
        return np.exp(self.log_density(delta))

    def mode(self) -> float:
        """Peak in [0, pi]; 2 arctan(sqrt(p/q))."""
        if self.p == 0 and self.q == 0:
            return 0.0
        if self.q == 0:
            return math.pi
        return 2 * math.atan(math.sqrt(self.p / self.q))

    def mass(self, lo: float, hi: float, n: int = 1024) -> float:
        """Integral of f over [lo, hi] by Gauss-Legendre on n nodes."""
        x, w = _gauss_legendre(n)
        mid, half = 0.5 * (hi + lo), 0.5 * (hi - lo)
        return float(half * np.dot(w, self(mid + half * x)))

    def table(self, n: int = 256) -> DistributionTable:
        grid = TWO_PI * np.arange(n) / n
        return DistributionTable(["delta", "density"], {"delta": grid, "density": self(grid)})


def phase_posterior(p: int, q: int) -> PhaseDifferencePosterior:
    if p < 0 or q < 0:
        raise ValueError("counts must be nonnegative")
    return PhaseDifferencePosterior(int(p), int(q))


def posterior_from_record(record: JumpRecord) -> PhaseDifferencePosterior:
    """Phase-difference posterior of a record.

    Jump times multiply the likelihood by Delta-independent factors, so only
    the counts (p, q) matter.
    """
    return phase_posterior(record.p, record.q)


def record_log_likelihood(record: JumpRecord, config: ApparatusConfig, deltas) -> np.ndarray:
    """Explicit log-likelihood of a timed record as a function of Delta.

    Jump rates are 4 R r0^2 e^{-2Rt} sin^2(Delta/2) in c and the same with
    cos^2 in d; the no-jump exponent integrates the total rate, which does
    not depend on Delta.
    """
    deltas = np.asarray(deltas, dtype=float)
    R, r0 = config.R, config.r0
    out = np.full(deltas.shape, -config.expected_jumps)
    with np.errstate(divide="ignore"):
        for t, ch in zip(record.times, record.channels):
            base = math.log(4 * R * r0**2) - 2 * R * t
            trig = np.sin(deltas / 2) if ch == "c" else np.cos(deltas / 2)
            out = out + base + 2 * np.log(np.abs(trig))
    return out


def _log_pc(m: int, p: int, q: int, z: float) -> float:
    return (log_poisson_pmf(m, z) + log_beta(m + p + 0.5, q + 0.5) - log_beta(p + 0.5, q + 0.5)
            + log_kummer_1f1(q + 0.5, m + p + q + 1.0, z))


def photon_number_distribution(p: int, q: int, r_t_squared: float, m_max: int | None = None,
                               mass_tol: float = 1e-9) -> DistributionTable:
    """(m, P_c, P_d) photon-number distributions of the output modes for record (p, q).

    P_c(m) = Poisson(m; 2 r_t^2) B(m+p+1/2, q+1/2)/B(p+1/2, q+1/2) 1F1(q+1/2; m+p+q+1; 2 r_t^2),
    assembled in log space; P_d swaps p and q. The range is extended until
    both columns hold at least 1 - mass_tol.
    """
    z = 2.0 * float(r_t_squared)
    if z < 0:
        raise ValueError("r_t_squared must be nonnegative")
    auto = m_max is None
    if auto:
        m_max = int(math.ceil(z + 12 * math.sqrt(z + 1) + 30))
    while True:
        ms = np.arange(m_max + 1)
        if z == 0:
            pc = (ms == 0).astype(float)
            pd = pc.copy()
        else:
            pc = np.exp([_log_pc(int(m), p, q, z) for m in ms])
            pd = np.exp([_log_pc(int(m), q, p, z) for m in ms])
        if not auto or min(pc.sum(), pd.sum()) >= 1 - mass_tol:
            break
        m_max *= 2
    return DistributionTable(["m", "P_c", "P_d"], {"m": ms, "P_c": pc, "P_d": pd})


def mixture_quadrature(p: int, q: int, r_t_squared: float, ms, n_points: int = 2048,
                       mode: str = "c") -> np.ndarray:
    """Photon-number distribution as a Poisson mixture over the posterior of Delta.

    Independent of the hypergeometric closed form: the coherent pair at phase
    difference Delta puts 2 r_t^2 sin^2(Delta/2) mean photons in c (cos^2 in d);
    the Delta-average uses the periodic trapezoid rule in log space.
    """
    post = phase_posterior(p, q)
    grid = TWO_PI * np.arange(n_points) / n_points
    logf = post.log_density(grid) + math.log(TWO_PI / n_points)
    trig = np.sin(grid / 2) if mode == "c" else np.cos(grid / 2)
    means = 2.0 * r_t_squared * trig**2
    ms = np.atleast_1d(np.asarray(ms, dtype=float))
    out = np.empty(ms.size)
    for lo in range(0, ms.size, 256):
        m = ms[lo:lo + 256, None]
        # Poisson log-pmf on the (m, Delta) grid; xlogy makes 0 log 0 = 0
        with np.errstate(divide="ignore"):
            lp = xlogy(m, means) - means - gammaln(m + 1)
        out[lo:lo + 256] = np.exp(sp_logsumexp(logf + lp, axis=1))
    return out


def poisson_tv(dist: np.ndarray) -> float:
    """Total-variation distance to the Poisson law with the same mean."""
    ms = np.arange(dist.size)
    mean = float(np.dot(ms, dist))
    pois = np.exp(log_poisson_pmf(ms, mean))
    return 0.5 * float(np.abs(dist - pois).sum() + max(0.0, 1.0 - pois.sum()))


# -- Monte-Carlo trajectories ----------------------------------------------

def _trajectory(config: ApparatusConfig, i: int, force_delta: float | None) -> JumpRecord:
    rng = stream_rng(config.seed, i, stream=2)
    phi_a, phi_b = TWO_PI * rng.random(2)
    if force_delta is not None:
        phi_b = (phi_a - force_delta) % TWO_PI
    lam = config.expected_jumps
    s = int(rng.poisson(lam)) if lam > 0 else 0
    # jump times by inverting the cumulative intensity 2 r0^2 (1 - e^{-2Rt})
    u = np.sort(rng.random(s)) * lam
    times = -np.log1p(-u / (2 * config.r0**2)) / (2 * config.R) if s else np.empty(0)
    pc = math.sin(0.5 * (phi_a - phi_b)) ** 2
    is_c = rng.random(s) < pc
    channels = "".join("c" if b else "d" for b in is_c)
    p = int(is_c.sum())
    return JumpRecord(tuple(times.tolist()), channels, p, s - p, config.r_t, float(phi_a), float(phi_b))


def _run_chunk(args):
    config, indices, force_delta = args
    return [_trajectory(config, i, force_delta) for i in indices]


def mcwf_run(config: ApparatusConfig, trajectories: int, workers: int = 1,
             force_delta: float | None = None) -> list[JumpRecord]:
    """Sample jump records in the sampled-phase (coherent-pair) unraveling.

    Each trajectory draws independent uniform laser phases, then a Poisson
    jump process with total rate 4 R r0^2 e^{-2Rt}; each jump lands in c with
    probability sin^2(Delta/2). ``force_delta`` pins the phase difference.
    """
    if trajectories < 1:
        raise ValueError("trajectories must be >= 1")
    if not config.valid:
        warnings.warn(
            f"tau = {config.tau:g} is not below 1/(sqrt(2s) r0 g) = {config.validity_bound:g}",
            ValidityWarning, stacklevel=2,
        )
    bounds = np.linspace(0, trajectories, max(1, min(workers, trajectories)) + 1).astype(int)
    tasks = [(config, range(bounds[j], bounds[j + 1]), force_delta) for j in range(len(bounds) - 1)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, tasks))
    else:
        parts = [_run_chunk(t) for t in tasks]
    return [rec for part in parts for rec in part]


def trajectory_table(records: list[JumpRecord]) -> DistributionTable:
    cols = {
        "trajectory_id": list(range(len(records))),
        "phi_a": [r.phi_a for r in records],
        "phi_b": [r.phi_b for r in records],
        "s": [r.s for r in records],
        "p": [r.p for r in records],
        "q": [r.q for r in records],
        "r_t": [r.r_t for r in records],
    }
    return DistributionTable(list(cols), cols)


def conditional_counts(records: list[JumpRecord], s: int) -> np.ndarray:
    """Histogram of p among records with exactly s jumps."""
    counts = np.zeros(s + 1, dtype=int)
    for r in records:
        if r.s == s:
            counts[r.p] += 1
    return counts


def total_variation(a, b) -> float:
    return 0.5 * float(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)).sum())


def folded_delta_histogram(records: list[JumpRecord], p: int, q: int, bins: int = 8):
    """Empirical and predicted bin masses of min(Delta, 2 pi - Delta) for records with counts (p, q).

    Returns (empirical, predicted, count). The posterior is symmetric under
    Delta -> 2 pi - Delta, so folding onto [0, pi] loses nothing.
    """
    deltas = np.array([r.delta for r in records if r.p == p and r.q == q])
    folded = np.minimum(deltas, TWO_PI - deltas)
    edges = np.linspace(0.0, math.pi, bins + 1)
    hist, _ = np.histogram(folded, bins=edges)
    post = phase_posterior(p, q)
    pred = np.array([2 * post.mass(lo, hi, 512) for lo, hi in zip(edges[:-1], edges[1:])])
    n = deltas.size
    emp = hist / n if n else hist.astype(float)
    return emp, pred, n


def config_for_expected_jumps(r0: float, expected: float, g: float = 1.0,
                              tau: float = 1e-3, seed: int = 0) -> ApparatusConfig:
    """Apparatus whose measurement time yields the requested mean jump count."""
    frac = expected / (2 * r0**2)
    if not 0 < frac < 1:
        raise ValueError("expected jumps must lie in (0, 2 r0^2)")
    R = 0.5 * g * g * tau
    return ApparatusConfig(r0, g, tau, -math.log1p(-frac) / (2 * R), seed)
