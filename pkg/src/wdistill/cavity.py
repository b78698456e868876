"""Cavity-QED realization of the first distillation protocol.

Atoms 2 and 3 cross one resonant cavity (initially in vacuum) in turn, and the
cavity is then probed for a photon. Atom levels are ``g = 0`` and ``e = 1``,
so ``|gge>`` is the basis vector ``|001>`` of the abstract protocol.

Evolution follows the Jaynes-Cummings Hamiltonian

    H = omega a^dag a + omega0 S_z + epsilon (a S_+ + a^dag S_-)

restricted to the atom inside the cavity and the field. In the ``"interaction"``
frame the free part is removed and each excitation doublet
``{|e,n>, |g,n+1>}`` is rotated by ``epsilon t sqrt(n+1)``. The ``"lab"`` frame
keeps the free phases of the atom inside the cavity and of the field; atoms
outside the cavity do not accumulate phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionError, ProtocolInputError, TruncationError
from .protocols import (
    PARTICLES,
    Classification,
    ProtocolOutcome,
    WCoefficients,
    make_wprime,
    run_protocol1,
    w_state,
)
from .statevec import PureState, apply_operator, make_basis_state, measure_subsystem, remove_subsystem, tensor

CAVITY = "c"
FRAMES = ("interaction", "lab")
TRUNCATION_TOL = 1e-12


@dataclass(frozen=True)
class CavityParams:
    """Jaynes-Cummings parameters. Frequencies are angular (rad per unit time)."""

    omega: float = 0.0
    omega0: float = 0.0
    epsilon: float = 1.0
    n_max: int = 1
    frame: str = "interaction"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"coupling epsilon must be positive, got {self.epsilon}")
        if int(self.n_max) < 1:
            raise ValueError(f"n_max must be >= 1, got {self.n_max}")
        if self.frame not in FRAMES:
            raise ValueError(f"frame must be one of {FRAMES}, got {self.frame!r}")
        object.__setattr__(self, "n_max", int(self.n_max))

    @property
    def resonant(self) -> bool:
        return abs(self.omega - self.omega0) <= 1e-12 * max(1.0, abs(self.omega))

    @property
    def field_dim(self) -> int:
        return self.n_max + 1


@dataclass(frozen=True)
class InteractionTimes:
    dt1: float
    dt2: float
    epsilon: float = 1.0


def jc_hamiltonian(params: CavityParams) -> np.ndarray:
    """Dense Hamiltonian on (atom, field), big-endian.

    In the interaction frame this is the rotating-frame Hamiltonian
    ``(omega0 - omega) S_z + epsilon (a S_+ + a^dag S_-)``.
    """
    n = params.field_dim
    a = np.diag(np.sqrt(np.arange(1, n)), k=1).astype(complex)
    num = a.conj().T @ a
    s_plus = np.array([[0, 0], [1, 0]], dtype=complex)
    s_z = np.diag([-0.5, 0.5]).astype(complex)
    eye_a, eye_f = np.eye(2), np.eye(n)
    coupling = params.epsilon * (np.kron(s_plus, a) + np.kron(s_plus.conj().T, a.conj().T))
    if params.frame == "lab":
        return params.omega * np.kron(eye_a, num) + params.omega0 * np.kron(s_z, eye_f) + coupling
    return (params.omega0 - params.omega) * np.kron(s_z, eye_f) + coupling


def jc_propagator(params: CavityParams, t: float, method: str = "closed") -> np.ndarray:
    """Unitary ``exp(-i H t)`` on (atom, field).

    ``method="closed"`` uses the exact doublet rotation and needs resonance;
    ``method="expm"`` exponentiates :func:`jc_hamiltonian` densely.
    """
    if method == "expm" or not params.resonant:
        return scipy.linalg.expm(-1j * t * jc_hamiltonian(params))
    if method != "closed":
        raise ValueError(f"unknown method {method!r}")
    n = params.field_dim
    eps, w = params.epsilon, params.omega
    lab = params.frame == "lab"
    u = np.zeros((2 * n, 2 * n), dtype=complex)

    def g(k):
        return k

    def e(k):
        return n + k

    u[g(0), g(0)] = np.exp(0.5j * w * t) if lab else 1.0
    for k in range(n - 1):
        theta = eps * t * math.sqrt(k + 1)
        phase = np.exp(-1j * w * (k + 0.5) * t) if lab else 1.0
        cs, sn = math.cos(theta), math.sin(theta)
        u[e(k), e(k)] = phase * cs
        u[g(k + 1), e(k)] = -1j * phase * sn
        u[e(k), g(k + 1)] = -1j * phase * sn
        u[g(k + 1), g(k + 1)] = phase * cs
    # top level is uncoupled inside the truncation; jc_evolve refuses to populate it
    u[e(n - 1), e(n - 1)] = np.exp(-1j * w * (n - 0.5) * t) if lab else 1.0
    return u


def jc_evolve(
    state: PureState,
    atom: str,
    params: CavityParams,
    t: float,
    field: str = CAVITY,
    method: str = "closed",
) -> PureState:
    """Evolve ``atom`` and the cavity mode ``field`` for time ``t``."""
    if state.dim_of(atom) != 2:
        raise DimensionError(f"atom {atom!r} is not a two-level subsystem")
    if state.dim_of(field) != params.field_dim:
        raise DimensionError(
            f"field {field!r} has dimension {state.dim_of(field)}, params expect n_max + 1 = {params.field_dim}"
        )
    psi = state.as_tensor()
    idx = [slice(None)] * state.num_subsystems
    idx[state.index_of(atom)] = 1
    idx[state.index_of(field)] = params.n_max
    if np.max(np.abs(psi[tuple(idx)]), initial=0.0) > TRUNCATION_TOL:
        raise TruncationError(
            f"atom {atom!r} excited with {params.n_max} photons present; evolution would exceed n_max"
        )
    return apply_operator(state, jc_propagator(params, t, method), [atom, field])


def optimal_times(coeffs: WCoefficients, epsilon: float = 1.0) -> InteractionTimes:
    """Interaction times that equalize the three atomic amplitudes in the vacuum branch.

    ``dt1 = arccos(c/a)/epsilon`` and
    ``dt2 = (arcsin(b/sqrt(1-2c^2)) - arcsin(c/sqrt(1-2c^2)))/epsilon``, evaluated
    through ``atan2`` so that nearly equal coefficients keep full precision.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if coeffs.one_minus_2c2 <= 0 or coeffs.a <= 0:
        raise ProtocolInputError("optimal times need a > 0 and 1 - 2c^2 > 0")
    root_a = math.sqrt(coeffs.a2_minus_c2)
    theta1 = math.atan2(root_a, coeffs.c)
    theta2 = math.atan2(coeffs.b, root_a) - math.atan2(coeffs.c, math.sqrt(coeffs.one_minus_3c2))
    return InteractionTimes(theta1 / epsilon, max(theta2, 0.0) / epsilon, epsilon)


def prepare_atoms(coeffs: WCoefficients, params: CavityParams) -> PureState:
    """Atomic W-class state with the cavity in vacuum, register ``(1, 2, 3, c)``."""
    vacuum = make_basis_state([params.field_dim], [0], [CAVITY])
    return tensor(make_wprime(coeffs), vacuum)


def cavity_final_state(coeffs: WCoefficients, params: CavityParams, times: InteractionTimes | None = None) -> PureState:
    """State after both atoms have crossed the cavity, before photon detection."""
    if times is None:
        times = optimal_times(coeffs, params.epsilon)
    state = prepare_atoms(coeffs, params)
    state = jc_evolve(state, "3", params, times.dt1)
    return jc_evolve(state, "2", params, times.dt2)


def run_cavity_protocol(
    coeffs: WCoefficients, params: CavityParams, times: InteractionTimes | None = None
) -> list[ProtocolOutcome]:
    """Photon-number branches after both passes; ``photon=0`` heralds the W state."""
    if not params.resonant:
        raise ProtocolInputError(
            f"the distillation scheme needs a resonant cavity (omega={params.omega}, omega0={params.omega0})"
        )
    state = cavity_final_state(coeffs, params, times)
    res = measure_subsystem(state, CAVITY)
    outcomes = []
    for br in res.branches:
        kind = Classification.W_SUCCESS if br.outcome == 0 else Classification.FAILURE
        post = remove_subsystem(br.post_state, CAVITY) if br.post_state is not None else None
        outcomes.append(ProtocolOutcome(f"photon={br.outcome}", br.probability, post, kind))
    return outcomes


@dataclass(frozen=True)
class ComparisonReport:
    frame: str
    p_cavity: float
    p_abstract: float
    probability_diff: float
    success_amplitude_diff: float
    failure_amplitude_diff: float

    @property
    def max_diff(self) -> float:
        return max(self.probability_diff, self.success_amplitude_diff, self.failure_amplitude_diff)

    def ok(self, tol: float = 1e-9) -> bool:
        return self.max_diff < tol


def _magnitude_diff(state: PureState | None, reference: PureState | None) -> float:
    if state is None or reference is None:
        return 0.0 if state is None and reference is None else float("inf")
    return float(np.max(np.abs(np.abs(state.amplitudes) - np.abs(reference.amplitudes))))


def compare_with_abstract(coeffs: WCoefficients, params: CavityParams) -> ComparisonReport:
    """Cross-check the cavity scheme against the abstract protocol 1.

    Reports ``|p_cavity - 3c^2|`` and elementwise amplitude-magnitude
    differences of the success branch against ``|W3>`` and of the failure
    branch against the abstract failure state.
    """
    cav = run_cavity_protocol(coeffs, params)
    abstract = run_protocol1(coeffs)
    p_ref = 3.0 * coeffs.c**2
    w_ref = w_state(PARTICLES)
    return ComparisonReport(
        frame=params.frame,
        p_cavity=cav[0].probability,
        p_abstract=p_ref,
        probability_diff=abs(cav[0].probability - p_ref),
        success_amplitude_diff=_magnitude_diff(cav[0].post_state, w_ref if cav[0].post_state is not None else None),
        failure_amplitude_diff=_magnitude_diff(cav[1].post_state, abstract[1].post_state),
    )
