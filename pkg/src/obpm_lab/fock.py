"""Truncated Fock-space states and mode operations.

States are immutable complex tensors over a product of truncated number
bases. ``cutoff`` always means the largest retained photon number, so a
mode with cutoff ``c`` has dimension ``c + 1``.

Quadrature convention: ``X(theta) = a exp(-i theta) + a^dag exp(i theta)``,
so the vacuum has unit quadrature variance.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.linalg import expm
from scipy.special import gammaln

from .special import scaled_hermite_coeffs

TAIL_TOL = 1e-10


class CutoffError(ValueError):
    """Raised when a truncation would drop more probability than allowed."""


def cutoff_for(mean_photons: float) -> int:
    """Default cutoff for a state with the given mean photon number."""
    mu = max(float(mean_photons), 0.0)
    return int(math.ceil(mu + 10.0 * math.sqrt(mu + 1.0) + 20.0))


@dataclass(frozen=True, eq=False)
class PureState:
    """Complex amplitude tensor; ``amps.shape == dims``."""

    amps: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amps, dtype=complex)
        if amps.ndim == 0 or amps.size == 0:
            raise ValueError("a state needs at least one mode of nonzero dimension")
        amps.setflags(write=False)
        object.__setattr__(self, "amps", amps)

    @property
    def dims(self) -> tuple[int, ...]:
        return self.amps.shape

    @property
    def n_modes(self) -> int:
        return self.amps.ndim

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps.ravel()))

    def normalized(self) -> "PureState":
        nrm = self.norm()
        if nrm == 0.0:
            raise ZeroDivisionError("cannot normalize the zero vector")
        return PureState(self.amps / nrm)

    def inner(self, other: "PureState") -> complex:
        """<self|other>."""
        if self.dims != other.dims:
            raise ValueError(f"dimension mismatch {self.dims} vs {other.dims}")
        return complex(np.vdot(self.amps.ravel(), other.amps.ravel()))

    def kron(self, other: "PureState") -> "PureState":
        return PureState(np.multiply.outer(self.amps, other.amps))

    def pad(self, dims: Sequence[int]) -> "PureState":
        """Embed into a larger truncation (zero-filled)."""
        dims = tuple(dims)
        if len(dims) != self.n_modes or any(d < s for d, s in zip(dims, self.dims)):
            raise ValueError(f"cannot pad {self.dims} to {dims}")
        out = np.zeros(dims, dtype=complex)
        out[tuple(slice(0, s) for s in self.dims)] = self.amps
        return PureState(out)

    def rotate(self, angle: float, mode: int = 0) -> "PureState":
        """Apply exp(i angle n) on one mode."""
        _check_mode(self, mode)
        d = self.dims[mode]
        shape = [1] * self.n_modes
        shape[mode] = d
        phase = np.exp(1j * angle * np.arange(d)).reshape(shape)
        return PureState(self.amps * phase)

    def photon_number(self, mode: int = 0) -> float:
        _check_mode(self, mode)
        probs = np.abs(self.amps) ** 2
        other = tuple(i for i in range(self.n_modes) if i != mode)
        marginal = probs.sum(axis=other) if other else probs
        return float(np.dot(np.arange(self.dims[mode]), marginal))

    def to_csv(self, path) -> None:
        """Debug dump: one row per basis element (multi-index, re, im)."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"n{k}" for k in range(self.n_modes)] + ["re", "im"])
            for idx in itertools.product(*(range(d) for d in self.dims)):
                z = self.amps[idx]
                w.writerow(list(idx) + [f"{z.real:.17g}", f"{z.imag:.17g}"])


@dataclass(frozen=True, eq=False)
class LinearOp:
    """Matrix acting on a single truncated mode (``out_dim x in_dim``)."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2:
            raise ValueError("operator matrix must be 2-D")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def in_dims(self) -> tuple[int]:
        return (self.matrix.shape[1],)

    @property
    def out_dims(self) -> tuple[int]:
        return (self.matrix.shape[0],)

    def __matmul__(self, other):
        if isinstance(other, LinearOp):
            return LinearOp(self.matrix @ other.matrix)
        if isinstance(other, PureState):
            return apply_op(other, self, 0)
        return NotImplemented

    def dagger(self) -> "LinearOp":
        return LinearOp(self.matrix.conj().T)


def _check_mode(state: PureState, mode: int) -> None:
    if not 0 <= mode < state.n_modes:
        raise IndexError(f"mode {mode} out of range for {state.n_modes}-mode state")


def _check_tail(tail: float, tail_tol: float | None, what: str, hint: int) -> None:
    if tail_tol is not None and tail >= tail_tol:
        raise CutoffError(
            f"{what}: truncation tail {tail:.3g} >= {tail_tol:.1g}; "
            f"use cutoff >= {hint}"
        )


# -- single-mode ladder matrices -------------------------------------------

def annihilation(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1).astype(complex)


def creation(dim: int) -> np.ndarray:
    return annihilation(dim).T.copy()


def quadrature_op(theta: float, dim: int) -> np.ndarray:
    a = annihilation(dim)
    return a * np.exp(-1j * theta) + a.T * np.exp(1j * theta)


@lru_cache(maxsize=64)
def _lowering_table(dim: int) -> np.ndarray:
    # G[m, k] = sqrt((m+k)! / m!) / k!, zero when m + k >= dim
    m = np.arange(dim)[:, None]
    k = np.arange(dim)[None, :]
    valid = m + k < dim
    logs = 0.5 * (gammaln(m + k + 1) - gammaln(m + 1)) - gammaln(k + 1)
    g = np.where(valid, np.exp(np.where(valid, logs, 0.0)), 0.0)
    g.setflags(write=False)
    return g


def exp_lowering(c: complex, dim: int) -> np.ndarray:
    """Matrix of exp(c a) on a truncated mode (exact: the series terminates)."""
    g = _lowering_table(dim)
    out = np.zeros((dim, dim), dtype=complex)
    for k in range(dim):
        idx = np.arange(dim - k)
        out[idx, idx + k] = g[idx, k] * c**k
    return out


def exp_raising(c: complex, dim_out: int, dim_in: int | None = None) -> np.ndarray:
    """Rows ``< dim_out`` of exp(c a^dag) restricted to columns ``< dim_in``.

    Exact: row m only involves columns n <= m.
    """
    dim_in = dim_out if dim_in is None else dim_in
    big = max(dim_out, dim_in)
    full = exp_lowering(np.conj(c), big).conj().T
    return full[:dim_out, :dim_in]


def apply_lowering_batch(cs: np.ndarray, vecs: np.ndarray) -> np.ndarray:
    """Rows ``exp(cs[i] a) vecs[i]`` for a batch of coefficients and vectors."""
    cs = np.asarray(cs, dtype=complex)
    vecs = np.asarray(vecs, dtype=complex)
    dim = vecs.shape[-1]
    g = _lowering_table(dim)
    out = np.zeros(np.broadcast_shapes(cs.shape + (dim,), vecs.shape), dtype=complex)
    power = np.ones(cs.shape, dtype=complex)
    for k in range(dim):
        out[..., : dim - k] += power[..., None] * g[: dim - k, k] * vecs[..., k:]
        power = power * cs
    return out


# -- constructors ----------------------------------------------------------

def coherent_state(r: float, theta: float, cutoff: int | None = None,
                   tail_tol: float | None = TAIL_TOL) -> PureState:
    """|r e^{i theta}> with amplitudes built in log-magnitude/phase form."""
    if r < 0:
        raise ValueError("coherent amplitude r must be nonnegative")
    mu = r * r
    hint = cutoff_for(mu)
    cutoff = hint if cutoff is None else int(cutoff)
    n = np.arange(cutoff + 1)
    if r == 0.0:
        amps = np.zeros(cutoff + 1, dtype=complex)
        amps[0] = 1.0
        return PureState(amps)
    from scipy.stats import poisson

    _check_tail(float(poisson.sf(cutoff, mu)), tail_tol, "coherent_state", hint)
    logmag = -0.5 * mu + n * math.log(r) - 0.5 * gammaln(n + 1)
    return PureState(np.exp(logmag + 1j * n * theta))


def quadrature_state(x: float, theta: float, cutoff: int) -> PureState:
    """Improper eigenstate |x, theta> of X(theta), truncated and unnormalized."""
    if cutoff < 1:
        raise ValueError("quadrature_state needs cutoff >= 1")
    c = scaled_hermite_coeffs(x, cutoff)
    n = np.arange(cutoff + 1)
    scale = (2 * math.pi) ** -0.25 * math.exp(-0.25 * x * x)
    return PureState(scale * c * np.exp(1j * n * theta))


def _squeezed_logamps(s: float, nmax: int) -> np.ndarray:
    # log |a_{2k}| for k = 0..nmax//2
    k = np.arange(nmax // 2 + 1)
    return (-0.5 * math.log(math.cosh(s)) + k * math.log(math.tanh(s))
            + 0.5 * gammaln(2 * k + 1) - k * math.log(2.0) - gammaln(k + 1))


def squeezed_vacuum(s: float, delta: float = 0.0, cutoff: int | None = None,
                    tail_tol: float | None = TAIL_TOL) -> PureState:
    """|0, s e^{i delta}> from its Hermite coefficient series.

    Even amplitudes are (cosh s)^(-1/2) (-e^{i delta} tanh s)^(n/2) sqrt(n!) / (2^(n/2) (n/2)!).
    """
    if s < 0:
        raise ValueError("squeeze parameter must be nonnegative")
    if s == 0.0:
        dim = 1 if cutoff is None else cutoff + 1
        amps = np.zeros(dim, dtype=complex)
        amps[0] = 1.0
        return PureState(amps)
    t = math.tanh(s)
    # slowest-decaying tail is geometric in tanh(s); size the default on it
    geo = int(math.ceil(2 * math.log(TAIL_TOL * (1 - t * t)) / math.log(t * t))) + 2
    hint = max(cutoff_for(math.sinh(s) ** 2), geo)
    cutoff = hint if cutoff is None else int(cutoff)
    ext = max(cutoff, hint) + 4 * int(math.ceil(-40.0 / math.log(t * t) + 10))
    logs = _squeezed_logamps(s, ext)
    tail_mass = float(np.exp(2 * logs[cutoff // 2 + 1:]).sum())
    _check_tail(tail_mass, tail_tol, "squeezed_vacuum", hint)
    k = np.arange(cutoff // 2 + 1)
    amps = np.zeros(cutoff + 1, dtype=complex)
    amps[2 * k] = np.exp(logs[: len(k)]) * (-np.exp(1j * delta)) ** k
    return PureState(amps)


def two_mode_squeezed(eta: float, pump_phase: float = 0.0, cutoff: int | None = None,
                      tail_tol: float | None = TAIL_TOL) -> PureState:
    """sqrt(1 - eta^2) exp(eta e^{2i pump_phase} a1^dag a2^dag)|0,0>."""
    if not 0.0 <= eta < 1.0:
        raise ValueError(
            f"eta must lie in [0, 1); eta = {eta} is improper, use eta = 1 - eps (eps >= 0.005)"
        )
    if eta == 0.0:
        hint = 0
    else:
        hint = max(cutoff_for(eta**2 / (1 - eta**2)),
                   int(math.ceil(math.log(TAIL_TOL) / (2 * math.log(eta)))))
    cutoff = hint if cutoff is None else int(cutoff)
    if eta > 0.0:
        _check_tail(eta ** (2 * (cutoff + 1)), tail_tol, "two_mode_squeezed", hint)
    n = np.arange(cutoff + 1)
    diag = math.sqrt(1 - eta**2) * eta**n * np.exp(2j * n * pump_phase)
    if eta == 0.0:
        diag = np.zeros(cutoff + 1, dtype=complex)
        diag[0] = 1.0
    return PureState(np.diag(diag))


def fock_state(n: int, cutoff: int | None = None) -> PureState:
    cutoff = n if cutoff is None else cutoff
    if not 0 <= n <= cutoff:
        raise ValueError("photon number outside truncation")
    amps = np.zeros(cutoff + 1, dtype=complex)
    amps[n] = 1.0
    return PureState(amps)


# -- mode operations -------------------------------------------------------

def apply_op(state: PureState, op: LinearOp | np.ndarray, mode: int) -> PureState:
    """Apply a single-mode matrix to one mode of a product state."""
    _check_mode(state, mode)
    m = op.matrix if isinstance(op, LinearOp) else np.asarray(op)
    if m.shape[1] != state.dims[mode]:
        raise ValueError(f"operator expects dim {m.shape[1]}, mode {mode} has {state.dims[mode]}")
    out = np.tensordot(m, state.amps, axes=([1], [mode]))
    return PureState(np.moveaxis(out, 0, mode))


@lru_cache(maxsize=512)
def _bs_block(total: int) -> np.ndarray:
    # basis |k, total-k>; generator a b^dag - a^dag b, rotation angle pi/4
    k = np.arange(total)
    off = np.sqrt((k + 1.0) * (total - k))
    h = np.zeros((total + 1, total + 1))
    h[k, k + 1] = off  # a b^dag |k+1, N-k-1> -> |k, N-k>
    h[k + 1, k] = -off
    u = expm(0.25 * math.pi * h)
    u.setflags(write=False)
    return u


def beamsplitter_apply(state: PureState, m1: int, m2: int) -> PureState:
    """50/50 beamsplitter with c = (a - b)/sqrt(2), d = (a + b)/sqrt(2).

    Input modes ``a = m1``, ``b = m2``; the outputs ``c`` and ``d`` replace them
    in place. Both output modes get dimension ``d1 + d2 - 1`` so the map is
    exact (no photons are lost to truncation).
    """
    _check_mode(state, m1)
    _check_mode(state, m2)
    if m1 == m2:
        raise ValueError("beamsplitter needs two distinct modes")
    amps = np.moveaxis(state.amps, (m1, m2), (-2, -1))
    rest = amps.shape[:-2]
    d1, d2 = amps.shape[-2:]
    dout = d1 + d2 - 1
    flat = amps.reshape(-1, d1, d2)
    out = np.zeros((flat.shape[0], dout, dout), dtype=complex)
    for total in range(dout):
        k_in = np.arange(max(0, total - d2 + 1), min(d1, total + 1))
        block = _bs_block(total)
        vin = flat[:, k_in, total - k_in]
        k_out = np.arange(total + 1)
        out[:, k_out, total - k_out] = vin @ block[:, k_in].T
    out = out.reshape(rest + (dout, dout))
    return PureState(np.moveaxis(out, (-2, -1), (m1, m2)))


def project_partial(state: PureState, bras: Sequence[tuple[int, PureState]]) -> PureState:
    """Contract listed modes with single-mode bras; the rest stay (unnormalized)."""
    modes = [m for m, _ in bras]
    if len(set(modes)) != len(modes):
        raise ValueError("projected modes must be distinct")
    if len(modes) >= state.n_modes:
        raise ValueError("at least one mode must remain after projection")
    amps = state.amps
    for m, bra in sorted(bras, key=lambda mb: -mb[0]):
        _check_mode(state, m)
        if bra.n_modes != 1 or bra.dims[0] != state.dims[m]:
            raise ValueError(f"bra dims {bra.dims} do not match mode {m} dim {state.dims[m]}")
        amps = np.tensordot(bra.amps.conj(), amps, axes=([0], [m]))
    return PureState(amps)


def displacement_op(alpha: complex, cutoff: int) -> LinearOp:
    """exp(alpha a^dag - alpha* a) on a truncated mode.

    Uses the normal-ordered form exp(-|alpha|^2/2) exp(alpha a^dag) exp(-alpha* a);
    the retained block of that product only involves retained levels, so the
    entries are the untruncated matrix elements.
    """
    dim = cutoff + 1
    a2 = abs(alpha) ** 2
    if a2 == 0.0:
        return LinearOp(np.eye(dim, dtype=complex))
    m = math.exp(-0.5 * a2) * (exp_raising(alpha, dim) @ exp_lowering(-np.conj(alpha), dim))
    return LinearOp(m)


def bhd_residual(r: float, theta: float, signal: PureState) -> float:
    """Relative residual of the BHD observable's eigen-relation at LO amplitude r.

    Returns ||(a_l^dag a_s + a_l a_s^dag)|re^{i theta}>|psi> - r X_s(theta)|..>||
    divided by r ||X_s(theta)|psi>||.
    """
    lo = coherent_state(r, theta)
    dl = lo.dims[0] + 1
    lo = lo.pad((dl,))
    ds = signal.dims[0] + 1
    sig = signal.pad((ds,))
    al, as_ = annihilation(dl), annihilation(ds)
    joint = lo.kron(sig).amps
    def on(ml, ms):
        return ml @ joint @ ms.T
    obs = on(al.T, as_) + on(al, as_.T)
    xs = quadrature_op(theta, ds)
    target = r * on(np.eye(dl), xs)
    resid = np.linalg.norm(obs - target)
    return float(resid / (r * np.linalg.norm(xs @ sig.amps)))


def quadrature_matrix(xs, cutoff: int) -> np.ndarray:
    """Real matrix Q[i, n] = <n | x_i, 0>; rows are quadrature_state(x_i, 0) amplitudes.

    Runs the scaled-Hermite recurrence on the Gaussian-weighted values so
    large |x| cannot overflow.
    """
    xs = np.asarray(xs, dtype=float)
    q = np.empty((xs.size, cutoff + 1))
    q[:, 0] = (2 * math.pi) ** -0.25 * np.exp(-0.25 * xs * xs)
    if cutoff >= 1:
        q[:, 1] = xs * q[:, 0]
    for n in range(1, cutoff):
        q[:, n + 1] = (xs * q[:, n] - math.sqrt(n) * q[:, n - 1]) / math.sqrt(n + 1)
    return q
