"""Distillation of W-class states ``a|001> + b|010> + c|100>``.

Two protocols are implemented on top of :mod:`wdistill.statevec`:

* protocol 1 rotates (particle 3, ancilla) with U1 and (particle 2, ancilla)
  with U2, then measures the ancilla; outcome 0 leaves ``|W3>``.
* protocol 2 uses U1', U2' instead. Outcome 1 leaves a "garbage" state that is
  a product of particle 1 with an entangled pair on particles 2, 3, which is
  recycled into a singlet either directly (``a == b``) or through U3' and a
  second ancilla.

All matrices act on ordered pairs with the ``bit(p) + 2*bit(a)`` index
convention. Probabilities reported by the ``run_*`` functions are squared
branch norms of the simulated state vector; :func:`analytic_probabilities`
holds the closed forms used as the test oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import CoefficientError, ProtocolInputError, SolverError
from .statevec import (
    NORM_TOL,
    JointUnitary,
    PureState,
    apply_joint_unitary,
    make_basis_state,
    measure_subsystem,
    partial_trace,
    remove_subsystem,
    tensor,
)

PARTICLES = ("1", "2", "3")
ANCILLA = "a"
SECOND_ANCILLA = "a2"

M_RESIDUAL_TOL = 1e-9
EQUAL_AB_RTOL = 1e-12


class Classification(str, Enum):
    W_SUCCESS = "W_SUCCESS"
    BELL_SUCCESS = "BELL_SUCCESS"
    FAILURE = "FAILURE"


@dataclass(frozen=True)
class WCoefficients:
    """Real amplitudes of ``a|001> + b|010> + c|100>``.

    Requires ``a >= b >= c >= 0`` and ``a^2 + b^2 + c^2 = 1`` to within 1e-9;
    the stored triple is rescaled to unit norm at full precision.
    """

    a: float
    b: float
    c: float

    def __post_init__(self):
        a, b, c = (float(x) for x in (self.a, self.b, self.c))
        if not all(math.isfinite(x) for x in (a, b, c)):
            raise CoefficientError(f"non-finite coefficients ({a}, {b}, {c})")
        norm2 = a * a + b * b + c * c
        if abs(norm2 - 1.0) > NORM_TOL:
            raise CoefficientError(f"a^2 + b^2 + c^2 = {norm2:.12g}, expected 1")
        if not (a >= b >= c):
            raise CoefficientError(f"ordering a >= b >= c violated by ({a:.6g}, {b:.6g}, {c:.6g})")
        if c < 0:
            raise CoefficientError(f"coefficients must be non-negative, got c = {c:.6g}")
        scale = 1.0 / math.sqrt(norm2)
        object.__setattr__(self, "a", a * scale)
        object.__setattr__(self, "b", b * scale)
        object.__setattr__(self, "c", c * scale)

    @classmethod
    def from_squares(cls, a2: float, b2: float, c2: float) -> "WCoefficients":
        if min(a2, b2, c2) < 0:
            raise CoefficientError(f"squared coefficients must be non-negative, got ({a2}, {b2}, {c2})")
        return cls(math.sqrt(a2), math.sqrt(b2), math.sqrt(c2))

    @classmethod
    def uniform(cls) -> "WCoefficients":
        s = 1.0 / math.sqrt(3.0)
        return cls(s, s, s)

    @property
    def squares(self) -> tuple[float, float, float]:
        return self.a * self.a, self.b * self.b, self.c * self.c

    @property
    def degenerate(self) -> bool:
        """True when ``c == 0``: no W state can be extracted."""
        return self.c == 0.0

    # differences of squares in cancellation-free form
    @property
    def a2_minus_c2(self) -> float:
        return max((self.a - self.c) * (self.a + self.c), 0.0)

    @property
    def b2_minus_c2(self) -> float:
        return max((self.b - self.c) * (self.b + self.c), 0.0)

    @property
    def a2_minus_b2(self) -> float:
        return max((self.a - self.b) * (self.a + self.b), 0.0)

    @property
    def one_minus_3c2(self) -> float:
        return self.a2_minus_c2 + self.b2_minus_c2

    @property
    def one_minus_2c2(self) -> float:
        return self.a2_minus_c2 + self.b * self.b


@dataclass(frozen=True)
class MParameter:
    value: float
    sign_choice: str  # "plus" or "minus"
    sqrt_one_minus_m2: float
    residual: float


@dataclass(frozen=True)
class ProtocolOutcome:
    branch_label: str
    probability: float
    post_state: PureState | None
    classification: Classification


@dataclass(frozen=True)
class AnalyticProbabilities:
    p_w: float
    p_bell: float
    p_fail: float

    def as_dict(self) -> dict:
        return {"p_w": self.p_w, "p_bell": self.p_bell, "p_fail": self.p_fail}


def w_state(labels=PARTICLES) -> PureState:
    """``(|001> + |010> + |100>)/sqrt(3)``."""
    amps = np.zeros(8, dtype=complex)
    amps[[1, 2, 4]] = 1.0 / math.sqrt(3.0)
    return PureState(amps, (2, 2, 2), labels)


def singlet(labels=("2", "3")) -> PureState:
    """``(|10> - |01>)/sqrt(2)``."""
    amps = np.array([0.0, -1.0, 1.0, 0.0], dtype=complex) / math.sqrt(2.0)
    return PureState(amps, (2, 2), labels)


def make_wprime(coeffs: WCoefficients) -> PureState:
    """Three-qubit state with ``a`` on |001>, ``b`` on |010>, ``c`` on |100>."""
    amps = np.zeros(8, dtype=complex)
    amps[0b001] = coeffs.a
    amps[0b010] = coeffs.b
    amps[0b100] = coeffs.c
    return PureState(amps, (2, 2, 2), PARTICLES)


def zero_ancilla(label: str = ANCILLA) -> PureState:
    return make_basis_state([2], [0], [label])


def _rotation(x: float, y: float, name: str) -> JointUnitary:
    # [[1,0,0,0],[0,x,y,0],[0,-y,x,0],[0,0,0,1]]
    u = np.eye(4, dtype=complex)
    u[1, 1] = x
    u[1, 2] = y
    u[2, 1] = -y
    u[2, 2] = x
    return JointUnitary(u, name=name)


def _reflection(x: float, y: float, name: str) -> JointUnitary:
    # [[1,0,0,0],[0,x,0,y],[0,0,-1,0],[0,y,0,-x]]
    u = np.zeros((4, 4), dtype=complex)
    u[0, 0] = 1.0
    u[1, 1] = x
    u[1, 3] = y
    u[2, 2] = -1.0
    u[3, 1] = y
    u[3, 3] = -x
    return JointUnitary(u, name=name)


def _ratio_pair(num_sq: float, den_sq: float, what: str) -> tuple[float, float]:
    """``(r, sqrt(1 - r^2))`` for ``r = sqrt(num_sq / den_sq)`` without cancellation."""
    if den_sq <= 0:
        raise CoefficientError(f"{what}: denominator vanishes")
    r = math.sqrt(num_sq / den_sq)
    comp = math.sqrt(max(den_sq - num_sq, 0.0) / den_sq)
    return r, comp


def build_u1(coeffs: WCoefficients) -> JointUnitary:
    """Rotation on (particle 3, ancilla) taking ``a -> c`` on |001>."""
    if coeffs.a <= 0:
        raise CoefficientError("U1 needs a > 0")
    x = coeffs.c / coeffs.a
    y = math.sqrt(coeffs.a2_minus_c2) / coeffs.a
    return _rotation(x, y, "U1")


def m_roots(coeffs: WCoefficients) -> list[MParameter]:
    """Both roots ``(bc +- sqrt((a^2-c^2)(1-3c^2)))/(1-2c^2)`` with their residuals.

    ``sqrt(1 - m^2)`` is evaluated as ``(b*sqrt(1-3c^2) -+ c*sqrt(a^2-c^2))/(1-2c^2)``,
    which equals it exactly for both roots but keeps full precision when
    ``m`` is close to +-1. The residual is ``b*m - sqrt(a^2-c^2)*sqrt(1-m^2) - c``.
    """
    a, b, c = coeffs.a, coeffs.b, coeffs.c
    denom = coeffs.one_minus_2c2
    if denom <= 0:
        raise SolverError("1 - 2c^2 must be positive")
    disc = coeffs.a2_minus_c2 * coeffs.one_minus_3c2
    if disc < -1e-12:
        raise SolverError(f"negative discriminant {disc:.3e}")
    root_a = math.sqrt(coeffs.a2_minus_c2)
    root_disc = math.sqrt(max(disc, 0.0))
    root_3 = math.sqrt(coeffs.one_minus_3c2)
    out = []
    for sign, name in ((1.0, "plus"), (-1.0, "minus")):
        m = (b * c + sign * root_disc) / denom
        if abs(m) > 1 + 1e-12:
            raise SolverError(f"|m| = {abs(m):.15g} exceeds 1")
        m = min(max(m, -1.0), 1.0)
        s = abs(b * root_3 - sign * c * root_a) / denom
        residual = b * m - root_a * s - c
        out.append(MParameter(m, name, s, residual))
    return out


def solve_m(coeffs: WCoefficients) -> MParameter:
    """Pick the root of the mixing-parameter quadratic that satisfies the linear condition.

    Squaring the condition ``b*m - sqrt((a^2-c^2)(1-m^2)) = c`` introduced a
    spurious root; only the one that meets the unsquared condition leaves the
    |010> amplitude equal to ``c``. When both qualify (coincident roots or a
    degenerate triple) the plus root is returned.
    """
    roots = m_roots(coeffs)
    good = [r for r in roots if abs(r.residual) < M_RESIDUAL_TOL]
    if not good:
        raise SolverError(
            f"no root satisfies the linear condition: residuals {[r.residual for r in roots]}"
        )
    return good[0]


def build_u2(coeffs: WCoefficients) -> JointUnitary:
    """Rotation on (particle 2, ancilla) with the solved mixing parameter ``m``."""
    m = solve_m(coeffs)
    return _rotation(m.value, m.sqrt_one_minus_m2, "U2")


def build_u1_prime(coeffs: WCoefficients) -> JointUnitary:
    if coeffs.a <= 0:
        raise CoefficientError("U1' needs a > 0")
    x, y = coeffs.c / coeffs.a, math.sqrt(coeffs.a2_minus_c2) / coeffs.a
    return _reflection(x, y, "U1'")


def build_u2_prime(coeffs: WCoefficients) -> JointUnitary:
    if coeffs.b <= 0:
        raise CoefficientError("U2' needs b > 0; with b = 0 the input is not tripartite entangled")
    x, y = coeffs.c / coeffs.b, math.sqrt(coeffs.b2_minus_c2) / coeffs.b
    return _reflection(x, y, "U2'")


def build_u3_prime(coeffs: WCoefficients) -> JointUnitary:
    """Reflection on (particle 3, second ancilla) with ratio ``sqrt(b^2-c^2)/sqrt(a^2-c^2)``.

    At ``a = c`` the ratio is 0/0; since ``a = c`` forces ``a = b`` we use the
    value it takes along the ``a = b`` line, which is 1. The gate is never
    reached there because the garbage branch is empty.
    """
    if coeffs.a2_minus_c2 <= 0:
        return _reflection(1.0, 0.0, "U3'")
    x, y = _ratio_pair(coeffs.b2_minus_c2, coeffs.a2_minus_c2, "U3'")
    return _reflection(x, y, "U3'")


def protocol1_steps(coeffs: WCoefficients) -> list[tuple[JointUnitary, str, str]]:
    """Ordered ``(unitary, particle, ancilla)`` applications of protocol 1."""
    return [(build_u1(coeffs), "3", ANCILLA), (build_u2(coeffs), "2", ANCILLA)]


def protocol2_steps(coeffs: WCoefficients) -> list[tuple[JointUnitary, str, str]]:
    return [(build_u1_prime(coeffs), "3", ANCILLA), (build_u2_prime(coeffs), "2", ANCILLA)]


def prepare_input(coeffs: WCoefficients) -> PureState:
    """W-class state with a fresh ancilla in |0>, register ``(1, 2, 3, a)``."""
    return tensor(make_wprime(coeffs), zero_ancilla())


def _evolve(state: PureState, steps) -> PureState:
    for u, p, anc in steps:
        state = apply_joint_unitary(state, u, p, anc)
    return state


def run_protocol1(coeffs: WCoefficients) -> list[ProtocolOutcome]:
    """Branches ``anc=0`` (W state) and ``anc=1`` (failure) of the first protocol."""
    state = _evolve(prepare_input(coeffs), protocol1_steps(coeffs))
    res = measure_subsystem(state, ANCILLA)
    kinds = (Classification.W_SUCCESS, Classification.FAILURE)
    outcomes = []
    for br, kind in zip(res.branches, kinds):
        post = remove_subsystem(br.post_state, ANCILLA) if br.post_state is not None else None
        outcomes.append(ProtocolOutcome(f"anc={br.outcome}", br.probability, post, kind))
    return outcomes


def particle1_purity(state: PureState) -> float:
    return partial_trace(state, ["1"]).purity


def recycle_garbage(garbage: PureState, coeffs: WCoefficients) -> list[ProtocolOutcome]:
    """Turn the failed branch of protocol 2 into a singlet on particles 2, 3.

    Probabilities are conditional on the garbage branch. With ``a == b`` the
    pair is already a singlet; otherwise U3' acts on (particle 3, fresh
    ancilla) and the ancilla is measured.
    """
    if tuple(garbage.labels) != PARTICLES:
        raise ProtocolInputError(f"garbage must live on particles {PARTICLES}, got {garbage.labels}")
    if abs(particle1_purity(garbage) - 1.0) > NORM_TOL:
        raise ProtocolInputError("particle 1 is entangled with particles 2, 3; not a protocol-2 garbage state")

    if abs(coeffs.a - coeffs.b) <= EQUAL_AB_RTOL * coeffs.a:
        return [ProtocolOutcome("direct", 1.0, garbage, Classification.BELL_SUCCESS)]

    state = apply_joint_unitary(tensor(garbage, zero_ancilla(SECOND_ANCILLA)), build_u3_prime(coeffs), "3", SECOND_ANCILLA)
    res = measure_subsystem(state, SECOND_ANCILLA)
    kinds = (Classification.BELL_SUCCESS, Classification.FAILURE)
    outcomes = []
    for br, kind in zip(res.branches, kinds):
        post = remove_subsystem(br.post_state, SECOND_ANCILLA) if br.post_state is not None else None
        outcomes.append(ProtocolOutcome(f"anc2={br.outcome}", br.probability, post, kind))
    return outcomes


def run_protocol2(coeffs: WCoefficients) -> list[ProtocolOutcome]:
    """All branches of the second protocol with joint probabilities.

    Recycling sub-branches are labelled ``anc=1;anc2=k`` (or ``anc=1;direct``)
    and weighted by the probability of the garbage branch.
    """
    state = _evolve(prepare_input(coeffs), protocol2_steps(coeffs))
    res = measure_subsystem(state, ANCILLA)
    success, garbage = res.branches
    w_post = remove_subsystem(success.post_state, ANCILLA) if success.post_state is not None else None
    outcomes = [ProtocolOutcome("anc=0", success.probability, w_post, Classification.W_SUCCESS)]
    if garbage.post_state is None:
        outcomes.append(ProtocolOutcome("anc=1", garbage.probability, None, Classification.FAILURE))
        return outcomes
    for sub in recycle_garbage(remove_subsystem(garbage.post_state, ANCILLA), coeffs):
        outcomes.append(
            ProtocolOutcome(
                f"anc=1;{sub.branch_label}",
                garbage.probability * sub.probability,
                sub.post_state,
                sub.classification,
            )
        )
    return outcomes


def analytic_probabilities(coeffs: WCoefficients) -> AnalyticProbabilities:
    """Closed forms ``3c^2``, ``2(b^2-c^2)``, ``a^2-b^2`` (protocol 2 partition)."""
    a2, b2, c2 = coeffs.squares
    return AnalyticProbabilities(3.0 * c2, 2.0 * (b2 - c2), a2 - b2)


def totals_by_class(outcomes) -> dict[Classification, float]:
    out = {k: 0.0 for k in Classification}
    for o in outcomes:
        out[o.classification] += o.probability
    return out
