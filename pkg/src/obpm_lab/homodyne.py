"""Balanced homodyne detection with a phase-unknown laser local oscillator.

The strong LO is never materialized. Projecting it onto a coherent state and
integrating over its amplitude and phase collapses (in the strong-LO limit)
to evaluating the signal's quadrature at the LO phase, so an outcome density
is the pump-phase average of ``|<x, theta(phi)|psi_phi>|^2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .fock import (
    PureState,
    coherent_state,
    cutoff_for,
    quadrature_matrix,
    quadrature_state,
    squeezed_vacuum,
)
from .tables import DistributionTable

DEFAULT_K = 64


class NumericalToleranceError(RuntimeError):
    """A built-in consistency check exceeded its tolerance."""


def default_x_grid() -> np.ndarray:
    return np.linspace(-10.0, 10.0, 801)


def phase_grid(k: int, offset: float = 0.0) -> np.ndarray:
    return offset + 2 * math.pi * np.arange(k) / k


def _is_pow2(k: int) -> bool:
    return k >= 1 and k & (k - 1) == 0


@dataclass(frozen=True, eq=False)
class PhaseEnsemble:
    """Mixture over sampled unknown phase(s), members built on demand.

    ``phases`` has shape (K,) for one unknown phase or (K, 2) for two.
    ``builder(i)`` returns the pure state for row ``i``.
    """

    phases: np.ndarray
    weights: np.ndarray
    builder: Callable[[int], PureState]
    params: Mapping = field(default_factory=dict)

    def __post_init__(self):
        phases = np.asarray(self.phases, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        k = phases.shape[0]
        if not (_is_pow2(k) and k >= 16):
            raise ValueError(f"ensemble size must be a power of two >= 16, got {k}")
        if weights.shape != (k,):
            raise ValueError("one weight per phase sample required")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) >= 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        object.__setattr__(self, "phases", phases)
        object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return self.phases.shape[0]

    def member(self, i: int) -> PureState:
        return self.builder(i)

    def members(self):
        for i in range(len(self)):
            yield self.builder(i)

    def reference_phase(self, i: int) -> float:
        """First phase column; the LO reference for single-phase priors."""
        row = self.phases[i]
        return float(row if row.ndim == 0 else row[0])

    @classmethod
    def from_states(cls, phases, weights, states: Sequence[PureState], params=None):
        states = list(states)
        return cls(phases, weights, states.__getitem__, dict(params or {}))


def uniform_ensemble(build: Callable[[float], PureState], k: int = DEFAULT_K,
                     offset: float = 0.0, params=None) -> PhaseEnsemble:
    """Uniform mixture over phi of ``build(phi)`` on a K-point grid."""
    phis = phase_grid(k, offset)
    return PhaseEnsemble(phis, np.full(k, 1.0 / k), lambda i: build(phis[i]), dict(params or {}))


@dataclass(frozen=True)
class HomodyneOutcome:
    x: float
    probability_density: float
    posterior: PhaseEnsemble


@dataclass(eq=False)
class HomodyneResult:
    """Outcome densities on a grid plus per-member densities and posteriors."""

    table: DistributionTable
    member_densities: np.ndarray  # (K, len(x_grid))
    _prior: PhaseEnsemble
    _signal_mode: int
    _offset: float
    _projections: list

    def outcome(self, j: int) -> HomodyneOutcome:
        return HomodyneOutcome(float(self.table["x"][j]), float(self.table["density"][j]),
                               self.posterior(j))

    def posterior(self, j: int) -> PhaseEnsemble:
        """Post-measurement ensemble for grid outcome ``j`` (reweighted, projected)."""
        prior = self._prior
        x = float(self.table["x"][j])
        w = prior.weights * self.member_densities[:, j]
        if w.sum() <= 0:
            raise ZeroDivisionError(f"outcome x={x} has zero probability")
        w = w / w.sum()
        mode = self._signal_mode

        def build(i: int) -> PureState:
            state = prior.member(i)
            theta = prior.reference_phase(i) + self._offset
            q = quadrature_state(x, theta, state.dims[mode] - 1).normalized()
            rest = self._projections[i][j]
            if rest is None:
                return q
            nrm = np.linalg.norm(rest)
            rest = rest / nrm if nrm > 0 else _vacuum_like(rest)
            return PureState(np.moveaxis(np.multiply.outer(q.amps, rest), 0, mode))

        return PhaseEnsemble(prior.phases, w, build, dict(prior.params))


def _vacuum_like(arr: np.ndarray) -> np.ndarray:
    out = np.zeros_like(arr)
    out[(0,) * arr.ndim] = 1.0
    return out


def obpm_measure(prior: PhaseEnsemble, signal_mode: int = 0, lo_phase_offset: float = 0.0,
                 x_grid=None) -> HomodyneResult:
    """Homodyne outcome densities P(x) and posteriors for a phase-mixture prior.

    The LO for member ``phi`` sits at phase ``phi + lo_phase_offset``; the
    density is ``sum_phi w_phi |<x, theta(phi)|psi_phi>|^2`` (a squared norm
    over the remaining modes for multimode members).
    """
    xs = default_x_grid() if x_grid is None else np.asarray(x_grid, dtype=float)
    if xs.ndim != 1 or xs.size == 0:
        raise ValueError("x_grid must be a nonempty 1-D sequence")
    if xs.size > 1 and np.any(np.diff(xs) <= 0):
        raise ValueError("x_grid must be strictly increasing")
    dens = np.empty((len(prior), xs.size))
    projections = []
    qcache: dict[int, np.ndarray] = {}
    for i in range(len(prior)):
        state = prior.member(i)
        if not 0 <= signal_mode < state.n_modes:
            raise ValueError(f"signal mode {signal_mode} missing from {state.n_modes}-mode member")
        d = state.dims[signal_mode]
        if d not in qcache:
            qcache[d] = quadrature_matrix(xs, d - 1)
        theta = prior.reference_phase(i) + lo_phase_offset
        bra = qcache[d] * np.exp(-1j * theta * np.arange(d))  # <x, theta|n>
        proj = np.tensordot(bra, state.amps, axes=([1], [signal_mode]))
        if proj.ndim == 1:
            dens[i] = np.abs(proj) ** 2
            projections.append([None] * xs.size)
        else:
            flat = proj.reshape(xs.size, -1)
            dens[i] = np.sum(np.abs(flat) ** 2, axis=1)
            projections.append(list(proj))
    density = prior.weights @ dens
    table = DistributionTable(["x", "density"], {"x": xs, "density": density})
    return HomodyneResult(table, dens, prior, signal_mode, lo_phase_offset, projections)


def squeezed_light_prior(s: float, k: int = DEFAULT_K, cutoff: int | None = None) -> PhaseEnsemble:
    """Signal half of the squeezed-light mixture: squeezing phase 2 phi for pump phase phi."""
    return uniform_ensemble(lambda phi: squeezed_vacuum(s, 2 * phi, cutoff), k,
                            params={"kind": "squeezed_light", "s": s})


def squeezed_light_experiment(s: float, phase_shifter: float = 0.0, x_grid=None,
                              k: int = DEFAULT_K, cutoff: int | None = None,
                              tol: float = 1e-9) -> DistributionTable:
    """Homodyne density when one laser pumps the squeezer and drives the LO.

    The LO for pump phase ``phi`` sits at ``phi + phase_shifter``. Raises
    NumericalToleranceError if any pump phase gives a density differing from
    the average by ``tol`` or more.
    """
    res = obpm_measure(squeezed_light_prior(s, k, cutoff), 0, phase_shifter, x_grid)
    spread = float(np.max(np.abs(res.member_densities - res.table["density"])))
    if spread >= tol:
        raise NumericalToleranceError(
            f"pump-phase dependence {spread:.3g} exceeds {tol:.1g}"
        )
    return res.table


def distribution_moments(table: DistributionTable) -> tuple[float, float, float]:
    """(mass, mean, variance) of a density table by the trapezoid rule."""
    x = np.asarray(table["x"], dtype=float)
    p = np.asarray(table["density"], dtype=float)
    mass = float(np.trapezoid(p, x))
    mean = float(np.trapezoid(x * p, x)) / mass
    var = float(np.trapezoid((x - mean) ** 2 * p, x)) / mass
    return mass, mean, var


# -- two independent lasers ------------------------------------------------

def coherent_pair(r_a: float, r_b: float, phi_a: float, phi_b: float,
                  cutoff: int | None = None) -> PureState:
    cut = cutoff if cutoff is not None else cutoff_for(max(r_a, r_b) ** 2)
    return coherent_state(r_a, phi_a, cut).kron(coherent_state(r_b, phi_b, cut))


def two_laser_prior(r_a: float, r_b: float, k: int = 32, cutoff: int | None = None) -> PhaseEnsemble:
    """Independent uniform phases for two lasers on a K x K grid."""
    grid = phase_grid(k)
    pa, pb = np.meshgrid(grid, grid, indexing="ij")
    phases = np.column_stack([pa.ravel(), pb.ravel()])
    cut = cutoff if cutoff is not None else cutoff_for(max(r_a, r_b) ** 2)
    params = {"kind": "two_laser", "r_a": r_a, "r_b": r_b, "cutoff": cut, "k": k}
    return PhaseEnsemble(phases, np.full(k * k, 1.0 / (k * k)),
                         lambda i: coherent_pair(r_a, r_b, *phases[i], cut), params)


def bhd_pair_eigenvalue(r_a: float, r_b: float, delta: float) -> float:
    """Strong-field eigenvalue 2 r_a r_b cos(delta) of a^dag b + a b^dag."""
    return 2.0 * r_a * r_b * math.cos(delta)


def twin_laser_bhd(prior: PhaseEnsemble, cos_outcome: float) -> PhaseEnsemble:
    """Post-measurement mixture after BHD between two independent lasers.

    BHD only fixes cos(phi_b - phi_a); the result is an equal mixture of the
    two phase-difference branches +/- arccos(cos_outcome), each uniformly
    spread over the common phase. Coinciding branches (0 or pi) merge.
    """
    if prior.params.get("kind") != "two_laser":
        raise ValueError("twin_laser_bhd needs a prior from two_laser_prior")
    if not -1.0 <= cos_outcome <= 1.0:
        raise ValueError("cos_outcome must lie in [-1, 1]")
    r_a, r_b, cut, k = (prior.params[n] for n in ("r_a", "r_b", "cutoff", "k"))
    delta = math.acos(cos_outcome)
    grid = phase_grid(k)
    branches = [delta] if delta in (0.0, math.pi) else [delta, -delta]
    phases = np.concatenate([np.column_stack([grid, grid + d]) for d in branches])
    n = phases.shape[0]
    params = dict(prior.params, branches=tuple(branches))
    return PhaseEnsemble(phases, np.full(n, 1.0 / n),
                         lambda i: coherent_pair(r_a, r_b, *phases[i], cut), params)


# -- measurement-operator completeness ------------------------------------

def povm_completeness_error(cutoff: int, n_r: int, n_theta: int, n_x: int,
                            r_max: float = 6.0) -> float:
    """max |sum_grid w E(x, r, theta) - 1| on two modes truncated at ``cutoff``.

    E = pi^-1 |re^{i theta}><re^{i theta}| (x) |x, theta><x, theta| is the
    outcome density of the BHD measurement operator. Gauss-Legendre in r,
    trapezoid in theta, Gauss-Hermite in x.
    """
    dim = cutoff + 1
    rn, rw = np.polynomial.legendre.leggauss(n_r)
    rn = 0.5 * r_max * (rn + 1)
    rw = 0.5 * r_max * rw
    xn, xw = np.polynomial.hermite_e.hermegauss(n_x)
    xw = xw * np.exp(0.5 * xn * xn)
    q = quadrature_matrix(xn, cutoff)
    n = np.arange(dim)
    total = np.zeros((dim * dim, dim * dim), dtype=complex)
    for theta in phase_grid(n_theta):
        lo = np.zeros((dim, dim), dtype=complex)
        for r, w in zip(rn, rw):
            a = coherent_state(r, theta, cutoff, tail_tol=None).amps
            lo += w * r * np.outer(a, a.conj())
        qs = q * np.exp(1j * theta * n)
        sig = (qs.T * xw) @ qs.conj()
        total += (2 * math.pi / n_theta) / math.pi * np.kron(lo, sig)
    return float(np.max(np.abs(total - np.eye(dim * dim))))
