"""Continuous-variable teleportation with a phase-unknown pump laser.

Modes of the initial state are ordered (in, 1, 2): Victor's input, Alice's
half of the two-mode squeezed state, Bob's half. Alice mixes (in, 1) on the
beamsplitter into (s1, s2) and homodynes s1 at the pump phase phi and s2 at
phi + pi/2; gamma = (x1 + i x2)/sqrt 2 is the combined outcome.

Outcome densities are normalized to unit mass over (x1, x2).
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .fock import (
    TAIL_TOL,
    LinearOp,
    PureState,
    apply_lowering_batch,
    beamsplitter_apply,
    displacement_op,
    exp_lowering,
    exp_raising,
    project_partial,
    quadrature_state,
    two_mode_squeezed,
)
from .homodyne import DEFAULT_K, PhaseEnsemble, phase_grid
from .tables import DistributionTable, stream_rng

DEFAULT_KB = 32
DEFAULT_SAMPLES = 200


def _check_eta(eta: float) -> None:
    if not 0.0 <= eta < 1.0:
        raise ValueError(
            f"eta must lie in [0, 1); eta = {eta} is not a normalizable resource, "
            "approach the ideal limit as eta = 1 - eps with eps >= 0.005"
        )


def _single_mode(state: PureState) -> np.ndarray:
    if state.n_modes != 1:
        raise ValueError("teleportation input must be a single-mode state")
    return np.asarray(state.amps)


def gamma_of(x1: float, x2: float) -> complex:
    return complex(x1, x2) / math.sqrt(2.0)


def build_cvqt_initial(input_state: PureState, eta: float, k: int = DEFAULT_K,
                       phase_offset: float = 0.0, tmsv_cutoff: int | None = None,
                       tail_tol: float | None = TAIL_TOL) -> PhaseEnsemble:
    """Mixture over the pump phase of |input>_in (x) |eta e^{2i phi}>_{1,2}.

    ``tail_tol=None`` keeps an explicit ``tmsv_cutoff`` even when the dropped
    tail exceeds the usual policy; the members are then the truncated vectors.
    """
    _check_eta(eta)
    _single_mode(input_state)
    probe = two_mode_squeezed(eta, 0.0, tmsv_cutoff, tail_tol)
    cut = probe.dims[0] - 1
    phis = phase_grid(k, phase_offset)

    def build(i: int) -> PureState:
        return input_state.kron(two_mode_squeezed(eta, phis[i], cut, None))

    params = {"kind": "cvqt", "input": input_state, "eta": eta, "tmsv_cutoff": cut}
    return PhaseEnsemble(phis, np.full(k, 1.0 / k), build, params)


def bell_kernel(gamma: complex, eta: float, phi: float, in_dim: int, out_dim: int) -> LinearOp:
    """Closed-form map in -> 2 from contracting Alice's quadrature pair with the EPR state.

    e^{-|g|^2/2} sqrt((1-eta^2)/2pi) exp(-eta g e^{i phi} a2^dag) (sum eta^n |n><n|) exp(g* e^{-i phi} a_in)
    """
    _check_eta(eta)
    dim = max(in_dim, out_dim)
    pref = math.exp(-0.5 * abs(gamma) ** 2) * math.sqrt((1 - eta**2) / (2 * math.pi))
    right = exp_lowering(np.conj(gamma) * np.exp(-1j * phi), in_dim)
    diag = np.zeros((dim, in_dim))
    diag[np.arange(in_dim), np.arange(in_dim)] = eta ** np.arange(in_dim)
    left = exp_raising(-eta * gamma * np.exp(1j * phi), out_dim, dim)
    return LinearOp(pref * (left @ diag @ right))


@dataclass(frozen=True)
class TransferKernel:
    gamma: complex
    eta: float
    phi: float
    op: LinearOp

    @property
    def matrix(self) -> np.ndarray:
        return self.op.matrix


def transfer_kernel(gamma: complex, eta: float, phi: float, cutoff: int) -> TransferKernel:
    """Outcome-conditioned map in -> 2 after Bob's displacement by eta gamma e^{i phi}.

    Built only from lowering operators and a diagonal, so the truncated matrix
    is exact.
    """
    _check_eta(eta)
    dim = cutoff + 1
    g2 = abs(gamma) ** 2
    pref = math.exp(-0.5 * g2 * (1 - eta**2)) * math.sqrt((1 - eta**2) / (2 * math.pi))
    c = np.conj(gamma) * np.exp(-1j * phi)
    m = exp_lowering(-eta * c, dim) @ np.diag(eta ** np.arange(dim)) @ exp_lowering(c, dim)
    return TransferKernel(gamma, eta, phi, LinearOp(pref * m))


@dataclass
class BellProjection:
    density: float
    states: list  # unnormalized mode-2 vectors, one per pump phase


def bell_projection(initial: PhaseEnsemble, x1: float, x2: float,
                    method: str = "kernel") -> BellProjection:
    """Alice's double homodyne outcome (x1, x2) applied to every pump-phase member.

    ``method="kernel"`` uses the closed-form in -> 2 map; ``"beamsplitter"``
    runs the explicit three-mode contraction (beamsplitter, then the two
    quadrature bras). Both return mode-2 vectors of the EPR truncation size.
    """
    if initial.params.get("kind") != "cvqt":
        raise ValueError("bell_projection needs an ensemble from build_cvqt_initial")
    psi = _single_mode(initial.params["input"])
    eta = initial.params["eta"]
    out_dim = initial.params["tmsv_cutoff"] + 1
    gamma = gamma_of(x1, x2)
    states = []
    for i in range(len(initial)):
        phi = initial.reference_phase(i)
        if method == "kernel":
            v = bell_kernel(gamma, eta, phi, psi.size, out_dim).matrix @ psi
        elif method == "beamsplitter":
            mixed = beamsplitter_apply(initial.member(i), 0, 1)
            d = mixed.dims[0] - 1
            v = project_partial(mixed, [(0, quadrature_state(x1, phi, d)),
                                        (1, quadrature_state(x2, phi + 0.5 * math.pi, d))]).amps
        else:
            raise ValueError(f"unknown method {method!r}")
        states.append(np.asarray(v))
    norms = np.array([np.vdot(v, v).real for v in states])
    return BellProjection(float(initial.weights @ norms), states)


# -- teleportation ----------------------------------------------------------

def transfer_outputs(psi: np.ndarray, gamma: complex, eta: float, phis: np.ndarray) -> np.ndarray:
    """Rows T(gamma, eta, phi) psi for every phi (shape (K, dim))."""
    dim = psi.size
    pref = math.exp(-0.5 * abs(gamma) ** 2 * (1 - eta**2)) * math.sqrt((1 - eta**2) / (2 * math.pi))
    c = np.conj(gamma) * np.exp(-1j * np.asarray(phis))
    y = apply_lowering_batch(c, psi[None, :])
    y = y * eta ** np.arange(dim)
    return pref * apply_lowering_batch(-eta * c, y)


def outcome_density(psi: np.ndarray, eta: float, x1: float, x2: float, k: int = DEFAULT_K) -> float:
    """P(x1, x2), the pump-phase average of ||T psi||^2 (Bob's unitary keeps norms)."""
    phis = phase_grid(k)
    v = transfer_outputs(psi, gamma_of(x1, x2), eta, phis)
    return float(np.mean(np.sum(np.abs(v) ** 2, axis=1)))


def _fidelities(psi: np.ndarray, eta: float, x1: float, x2: float, k: int, k_b: int):
    """(density, shared fidelity, unshared fidelity) for one outcome."""
    gamma = gamma_of(x1, x2)
    phis = phase_grid(k)
    v = transfer_outputs(psi, gamma, eta, phis)
    norms = np.sum(np.abs(v) ** 2, axis=1)
    total = float(np.mean(norms))
    shared = float(np.mean(np.abs(v @ psi.conj()) ** 2)) / total
    # Bob displaces by eta gamma e^{i phi_B}; relative to the matched
    # correction that is D(beta_B - beta_phi) acting on T psi.
    phib = phase_grid(k_b)
    dbeta = (eta * gamma * (np.exp(1j * phib)[None, :] - np.exp(1j * phis)[:, None])).ravel()
    left = apply_lowering_batch(np.conj(dbeta), psi[None, :])
    right = apply_lowering_batch(-np.conj(dbeta), np.repeat(v, k_b, axis=0))
    ov = np.exp(-0.5 * np.abs(dbeta) ** 2) * np.sum(left.conj() * right, axis=1)
    unshared = float(np.mean(np.abs(ov) ** 2)) / total
    return total, shared, unshared


@dataclass
class TeleportOutcome:
    x1: float
    x2: float
    density: float
    output: PhaseEnsemble
    fidelity: float


def teleport(input_state: PureState, eta: float, outcome: tuple[float, float],
             share_phase: bool = True, k: int = DEFAULT_K, k_b: int = DEFAULT_KB) -> TeleportOutcome:
    """Full protocol for one outcome: Alice's projection, then Bob's displacement.

    With ``share_phase`` Bob displaces by eta gamma e^{i phi} using the pump
    phase; otherwise by eta gamma e^{i phi_B} with his own independent phase.
    """
    _check_eta(eta)
    psi = _single_mode(input_state)
    x1, x2 = map(float, outcome)
    gamma = gamma_of(x1, x2)
    phis = phase_grid(k)
    v = transfer_outputs(psi, gamma, eta, phis)
    norms = np.sum(np.abs(v) ** 2, axis=1)
    total, shared, unshared = _fidelities(psi, eta, x1, x2, k, k_b)
    w = norms / norms.sum()
    if share_phase:
        states = [PureState(row / math.sqrt(n)) for row, n in zip(v, norms)]
        ens = PhaseEnsemble.from_states(phis, w, states, {"eta": eta, "shared": True})
        fid = shared
    else:
        phib = phase_grid(k_b)
        pairs = np.array([(p, q) for p in phis for q in phib])
        pw = np.repeat(w, k_b) / k_b
        dim = psi.size

        def build(i: int) -> PureState:
            j = i // k_b
            db = eta * gamma * (np.exp(1j * pairs[i, 1]) - np.exp(1j * pairs[i, 0]))
            cut = dim - 1 + int(math.ceil(abs(db) ** 2 + 10 * abs(db) + 20))
            vec = np.zeros(cut + 1, dtype=complex)
            vec[:dim] = v[j] / math.sqrt(norms[j])
            return PureState(displacement_op(db, cut).matrix @ vec)

        ens = PhaseEnsemble(pairs, pw, build, {"eta": eta, "shared": False})
        fid = unshared
    return TeleportOutcome(x1, x2, total, ens, fid)


def phase_sensitivity(input_state: PureState, eta: float, gamma: complex,
                      phi: float, phi2: float) -> float:
    """Overlap deficit 1 - |<u|u'>|^2 between normalized T psi at two pump phases."""
    psi = _single_mode(input_state)
    v = transfer_outputs(psi, gamma, eta, np.array([phi, phi2]))
    u = v / np.linalg.norm(v, axis=1)[:, None]
    return float(1.0 - abs(np.vdot(u[0], u[1])) ** 2)


# -- outcome-averaged fidelity ------------------------------------------------

def proposal_variance(psi: np.ndarray, eta: float) -> float:
    """Per-coordinate variance of the Gaussian outcome proposal.

    Vacuum input gives outcome variance 1/(1 - eta^2); brighter inputs widen
    it by about the mean photon number. The 1.5 factor keeps the proposal
    tails heavier than the target so importance weights stay bounded.
    """
    nbar = float(np.dot(np.arange(psi.size), np.abs(psi) ** 2) / np.vdot(psi, psi).real)
    return 1.5 * (nbar + 1.0) / (1.0 - eta**2)


def _sweep_chunk(args):
    psi, etas, seed, indices, k, k_b = args
    out = []
    for i in indices:
        z = stream_rng(seed, i, stream=1).standard_normal(2)
        row = []
        for eta in etas:
            var = proposal_variance(psi, eta)
            x1, x2 = math.sqrt(var) * z
            dens, fs, fu = _fidelities(psi, eta, x1, x2, k, k_b)
            q = math.exp(-0.5 * (x1 * x1 + x2 * x2) / var) / (2 * math.pi * var)
            row.append((dens / q, fs, fu))
        out.append(row)
    return out


def _chunks(n: int, parts: int):
    parts = max(1, min(parts, n))
    bounds = np.linspace(0, n, parts + 1).astype(int)
    return [range(bounds[j], bounds[j + 1]) for j in range(parts)]


def sample_fidelities(input_state: PureState, etas, samples: int, seed: int,
                      k: int = DEFAULT_K, k_b: int = DEFAULT_KB, workers: int = 1) -> np.ndarray:
    """Array (samples, len(etas), 3) of (importance weight, F_shared, F_unshared).

    Sample ``i`` draws its outcome from its own counter-based stream, so the
    array is identical for any worker count.
    """
    psi = _single_mode(input_state)
    etas = [float(e) for e in etas]
    for e in etas:
        _check_eta(e)
    tasks = [(psi, etas, seed, idx, k, k_b) for idx in _chunks(samples, workers)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_sweep_chunk, tasks))
    else:
        parts = [_sweep_chunk(t) for t in tasks]
    return np.array([row for part in parts for row in part])


def weighted_mean(weights: np.ndarray, values: np.ndarray) -> tuple[float, float]:
    """Self-normalized importance-sampling mean and its standard error."""
    wsum = float(np.sum(weights))
    mean = float(np.sum(weights * values)) / wsum
    se = math.sqrt(float(np.sum(weights**2 * (values - mean) ** 2))) / wsum
    return mean, se


def fidelity_sweep(input_state: PureState, etas, share_phase: bool = True,
                   samples: int = DEFAULT_SAMPLES, seed: int = 0, k: int = DEFAULT_K,
                   k_b: int = DEFAULT_KB, workers: int = 1) -> DistributionTable:
    """Outcome-averaged fidelity per eta with its standard error."""
    etas = list(etas)
    if not etas:
        raise ValueError("etas must be nonempty")
    arr = sample_fidelities(input_state, etas, samples, seed, k, k_b, workers)
    return sweep_table(arr, etas, [share_phase], samples, seed)


def sweep_table(arr: np.ndarray, etas, shared_flags, samples: int, seed: int) -> DistributionTable:
    cols = {c: [] for c in ("eta", "mean_fidelity", "std_err", "shared_flag", "samples", "seed")}
    for flag in shared_flags:
        for j, eta in enumerate(etas):
            mean, se = weighted_mean(arr[:, j, 0], arr[:, j, 1 if flag else 2])
            cols["eta"].append(float(eta))
            cols["mean_fidelity"].append(mean)
            cols["std_err"].append(se)
            cols["shared_flag"].append(bool(flag))
            cols["samples"].append(int(samples))
            cols["seed"].append(int(seed))
    return DistributionTable(list(cols), cols)
