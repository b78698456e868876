"""Dense pure-state engine.

States live on an ordered register of labelled subsystems. The amplitude
index is big-endian in label order, so ``|x1 x2 x3>|a>`` on the register
``("1", "2", "3", "a")`` is read left to right the way the kets are written.

Joint two-qubit unitaries follow a fixed pair convention: for an ordered
pair ``(p, a)`` the 4x4 matrix is indexed by ``bit(p) + 2 * bit(a)``, i.e.
the basis order is ``|0>p|0>a, |1>p|0>a, |0>p|1>a, |1>p|1>a``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionError, LabelError, NormalizationError, UnitarityError

NORM_TOL = 1e-9
UNITARY_TOL = 1e-12
ZERO_BRANCH_TOL = 1e-14
# density-matrix eigenvalues below this are numerical noise, see concurrence()
EIG_CUTOFF = 1e-12

PAIR_BASIS_CONVENTION = "index(p, a) = bit(p) + 2*bit(a)"

_SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_YY = np.kron(_SIGMA_Y, _SIGMA_Y)


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=complex, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class PureState:
    """Complex amplitude vector over an ordered register of subsystems.

    Parameters
    ----------
    amplitudes : array_like
        Flat vector of length ``prod(dims)``.
    dims : sequence of int
        Dimension of each subsystem (2 for qubits, ``n_max + 1`` for a Fock mode).
    labels : sequence of str
        Unique identifier of each subsystem.
    normalized : bool
        When true the L2 norm is checked against 1. Unnormalized vectors are
        only used as intermediate branch components.
    """

    amplitudes: np.ndarray
    dims: tuple[int, ...]
    labels: tuple[str, ...]
    normalized: bool = True

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        labels = tuple(str(l) for l in self.labels)
        amps = _frozen(self.amplitudes).reshape(-1)
        if len(dims) != len(labels):
            raise DimensionError(f"{len(dims)} dims but {len(labels)} labels")
        if any(d < 1 for d in dims):
            raise DimensionError(f"subsystem dimensions must be positive, got {dims}")
        if len(set(labels)) != len(labels):
            raise LabelError(f"duplicate subsystem labels in {labels}")
        if amps.size != int(np.prod(dims, dtype=np.int64)):
            raise DimensionError(f"{amps.size} amplitudes for dims {dims}")
        if self.normalized and abs(np.linalg.norm(amps) - 1.0) > NORM_TOL:
            raise NormalizationError(f"state norm {np.linalg.norm(amps):.12g} is not 1")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    @property
    def num_subsystems(self) -> int:
        return len(self.dims)

    def index_of(self, label: str) -> int:
        try:
            return self.labels.index(str(label))
        except ValueError:
            raise LabelError(f"unknown subsystem label {label!r}; register is {self.labels}") from None

    def dim_of(self, label: str) -> int:
        return self.dims[self.index_of(label)]

    def as_tensor(self) -> np.ndarray:
        return self.amplitudes.reshape(self.dims)

    def amplitude(self, occupation: Sequence[int]) -> complex:
        """Amplitude of the basis vector with the given per-subsystem levels."""
        return complex(self.as_tensor()[tuple(occupation)])

    def renormalized(self) -> "PureState":
        n = self.norm
        if n == 0.0:
            raise NormalizationError("cannot renormalize the zero vector")
        return PureState(self.amplitudes / n, self.dims, self.labels)

    def relabel(self, mapping: dict) -> "PureState":
        labels = [mapping.get(l, l) for l in self.labels]
        return PureState(self.amplitudes, self.dims, labels, self.normalized)

    def nonzero_terms(self, tol: float = 1e-12) -> list[tuple[tuple[int, ...], complex]]:
        """(occupation, amplitude) pairs with modulus above ``tol``, in index order."""
        out = []
        for idx in np.flatnonzero(np.abs(self.amplitudes) > tol):
            out.append((tuple(int(i) for i in np.unravel_index(idx, self.dims)), complex(self.amplitudes[idx])))
        return out

    def ket_string(self, tol: float = 1e-12, digits: int = 6) -> str:
        terms = []
        for occ, amp in self.nonzero_terms(tol):
            ket = "".join(str(o) for o in occ)
            if abs(amp.imag) < tol:
                coef = f"{amp.real:+.{digits}f}"
            else:
                coef = f"({amp.real:+.{digits}f}{amp.imag:+.{digits}f}j)"
            terms.append(f"{coef}|{ket}>")
        return " ".join(terms) if terms else "0"


@dataclass(frozen=True, eq=False)
class JointUnitary:
    """4x4 unitary on an ordered (particle, ancilla) qubit pair.

    Entries are indexed with ``bit(p) + 2 * bit(a)``. Unitarity is checked on
    construction to ``max|U U^dag - I| < 1e-12``.
    """

    entries: np.ndarray
    name: str = ""
    basis_convention: str = field(default=PAIR_BASIS_CONVENTION, repr=False)

    def __post_init__(self):
        u = _frozen(self.entries)
        if u.shape != (4, 4):
            raise DimensionError(f"joint unitary must be 4x4, got {u.shape}")
        err = unitarity_error(u)
        if err >= UNITARY_TOL:
            raise UnitarityError(f"{self.name or 'matrix'} is not unitary: max|UU^dag - I| = {err:.3e}")
        object.__setattr__(self, "entries", u)

    @classmethod
    def identity(cls) -> "JointUnitary":
        return cls(np.eye(4), name="I")


def unitarity_error(u: np.ndarray) -> float:
    """Elementwise max of ``|U U^dag - I|``."""
    u = np.asarray(u)
    return float(np.max(np.abs(u @ u.conj().T - np.eye(u.shape[0]))))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    entries: np.ndarray
    dims: tuple[int, ...]

    def __post_init__(self):
        rho = _frozen(self.entries)
        dims = tuple(int(d) for d in self.dims)
        d = int(np.prod(dims, dtype=np.int64))
        if rho.shape != (d, d):
            raise DimensionError(f"density matrix shape {rho.shape} does not match dims {dims}")
        if np.max(np.abs(rho - rho.conj().T)) > 1e-12:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(rho).real - 1.0) > NORM_TOL:
            raise ValueError(f"density matrix trace {np.trace(rho).real:.12g} != 1")
        if np.min(np.linalg.eigvalsh(rho)) < -1e-10:
            raise ValueError("density matrix has a negative eigenvalue")
        object.__setattr__(self, "entries", rho)
        object.__setattr__(self, "dims", dims)

    @property
    def purity(self) -> float:
        return float(np.real(np.trace(self.entries @ self.entries)))

    @classmethod
    def from_state(cls, state: PureState) -> "DensityMatrix":
        psi = state.amplitudes
        return cls(np.outer(psi, psi.conj()), state.dims)


@dataclass(frozen=True)
class Branch:
    outcome: int
    probability: float
    post_state: PureState | None


@dataclass(frozen=True)
class MeasurementResolution:
    """All outcomes of a projective measurement of one subsystem.

    Every level of the measured subsystem gets a branch, including those of
    zero probability, which carry ``post_state=None``.
    """

    subsystem: str
    branches: tuple[Branch, ...]

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([b.probability for b in self.branches])

    def branch(self, outcome: int) -> Branch:
        return self.branches[outcome]


def make_basis_state(dims: Sequence[int], occupation: Sequence[int], labels: Sequence[str] | None = None) -> PureState:
    """Computational basis vector with ``occupation[i]`` in subsystem ``i``."""
    dims = [int(d) for d in dims]
    if len(occupation) != len(dims):
        raise DimensionError(f"occupation {list(occupation)} does not match dims {dims}")
    for level, d in zip(occupation, dims):
        if not 0 <= level < d:
            raise DimensionError(f"level {level} out of range for dimension {d}")
    if labels is None:
        labels = [f"q{i}" for i in range(len(dims))]
    amps = np.zeros(int(np.prod(dims, dtype=np.int64)), dtype=complex)
    amps[np.ravel_multi_index(tuple(occupation), dims)] = 1.0
    return PureState(amps, dims, labels)


def tensor(lhs: PureState, rhs: PureState) -> PureState:
    """Kronecker product; ``lhs`` subsystems come first in the new register."""
    clash = set(lhs.labels) & set(rhs.labels)
    if clash:
        raise LabelError(f"label collision: {sorted(clash)}")
    return PureState(
        np.kron(lhs.amplitudes, rhs.amplitudes),
        lhs.dims + rhs.dims,
        lhs.labels + rhs.labels,
        normalized=lhs.normalized and rhs.normalized,
    )


def apply_operator(state: PureState, matrix: np.ndarray, labels: Sequence[str]) -> PureState:
    """Apply a k-local operator acting on ``labels`` (big-endian in that order)."""
    axes = [state.index_of(l) for l in labels]
    if len(set(axes)) != len(axes):
        raise LabelError(f"repeated subsystem in {list(labels)}")
    sub_dims = [state.dims[i] for i in axes]
    k = int(np.prod(sub_dims))
    matrix = np.asarray(matrix, dtype=complex)
    if matrix.shape != (k, k):
        raise DimensionError(f"operator shape {matrix.shape} does not act on dims {sub_dims}")
    op = matrix.reshape(sub_dims + sub_dims)
    n = len(labels)
    psi = np.tensordot(op, state.as_tensor(), axes=(list(range(n, 2 * n)), axes))
    psi = np.moveaxis(psi, list(range(n)), axes)
    return PureState(psi.reshape(-1), state.dims, state.labels, normalized=state.normalized)


def apply_joint_unitary(state: PureState, u: JointUnitary, p: str, a: str) -> PureState:
    """Apply ``u`` to the pair ``(p, a)`` using the ``bit(p) + 2*bit(a)`` convention."""
    if str(p) == str(a):
        raise LabelError("joint unitary needs two distinct subsystems")
    for label in (p, a):
        if state.dim_of(label) != 2:
            raise DimensionError(f"subsystem {label!r} is not a qubit")
    # big-endian over (a, p) gives index 2*bit(a) + bit(p)
    return apply_operator(state, u.entries, [a, p])


def project(state: PureState, q: str, level: int) -> PureState:
    """Unnormalized component of ``state`` with subsystem ``q`` in ``level``."""
    axis = state.index_of(q)
    if not 0 <= level < state.dims[axis]:
        raise DimensionError(f"level {level} out of range for subsystem {q!r}")
    psi = state.as_tensor().copy()
    mask = np.ones(state.dims[axis], dtype=bool)
    mask[level] = False
    idx = [slice(None)] * state.num_subsystems
    idx[axis] = mask
    psi[tuple(idx)] = 0.0
    return PureState(psi.reshape(-1), state.dims, state.labels, normalized=False)


def level_probabilities(state: PureState, q: str) -> np.ndarray:
    axis = state.index_of(q)
    weights = np.abs(state.as_tensor()) ** 2
    other = tuple(i for i in range(state.num_subsystems) if i != axis)
    return np.sum(weights, axis=other) / state.norm**2


def measure_subsystem(state: PureState, q: str) -> MeasurementResolution:
    """Resolve a projective measurement of ``q`` into all its branches."""
    if not state.normalized:
        raise NormalizationError("measure_subsystem expects a normalized state")
    branches = []
    for level in range(state.dim_of(q)):
        component = project(state, q, level)
        p = component.norm**2
        post = component.renormalized() if p >= ZERO_BRANCH_TOL else None
        branches.append(Branch(level, float(p), post))
    return MeasurementResolution(str(q), tuple(branches))


def sample_measurement(state: PureState, q: str, rng: np.random.Generator, size: int | None = None):
    """Draw measurement outcome(s) of ``q`` with the exact branch probabilities.

    Returns an ``int`` when ``size`` is None, else an integer array of length ``size``.
    """
    probs = level_probabilities(state, q)
    probs = np.clip(probs, 0.0, None)
    cdf = np.cumsum(probs)
    cdf /= cdf[-1]
    u = rng.random(size)
    out = np.searchsorted(cdf, u, side="right")
    out = np.minimum(out, len(probs) - 1)
    if size is None:
        return int(out)
    return out.astype(np.int64)


def remove_subsystem(state: PureState, q: str, tol: float = 1e-12) -> PureState:
    """Drop ``q`` from the register. ``q`` must sit in a single basis level."""
    axis = state.index_of(q)
    probs = level_probabilities(state, q)
    level = int(np.argmax(probs))
    if 1.0 - probs[level] > tol:
        raise DimensionError(f"subsystem {q!r} is not in a definite basis level; cannot discard it")
    psi = np.take(state.as_tensor(), level, axis=axis)
    dims = state.dims[:axis] + state.dims[axis + 1:]
    labels = state.labels[:axis] + state.labels[axis + 1:]
    return PureState(psi.reshape(-1), dims, labels, normalized=state.normalized)


def fidelity(state: PureState, target: PureState) -> float:
    """``|<target|state>|^2`` for normalized states on the same dims."""
    if state.dims != target.dims:
        raise DimensionError(f"dims mismatch: {state.dims} vs {target.dims}")
    f = abs(np.vdot(target.amplitudes, state.amplitudes)) ** 2
    return float(min(max(f, 0.0), 1.0))


def partial_trace(state: PureState, keep: Sequence[str]) -> DensityMatrix:
    """Reduced density matrix on ``keep``, listed in register order."""
    if not keep:
        raise LabelError("keep must name at least one subsystem")
    keep_axes = sorted({state.index_of(l) for l in keep})
    rest = [i for i in range(state.num_subsystems) if i not in keep_axes]
    psi = state.as_tensor() / state.norm
    psi = np.transpose(psi, keep_axes + rest)
    dk = int(np.prod([state.dims[i] for i in keep_axes]))
    psi = psi.reshape(dk, -1)
    rho = psi @ psi.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(rho, [state.dims[i] for i in keep_axes])


def purity(rho: DensityMatrix) -> float:
    return rho.purity


def concurrence(rho: DensityMatrix) -> float:
    """Wootters concurrence of a two-qubit density matrix.

    The spin-flip eigenvalues are taken as singular values of
    ``sqrt(rho) (Y x Y) conj(sqrt(rho))``. Eigenvalues of ``rho`` below
    ``EIG_CUTOFF`` are zeroed first: square roots of rounding noise would
    otherwise shift the result by ~1e-8 for pure inputs.
    """
    if tuple(rho.dims) != (2, 2):
        raise DimensionError(f"concurrence needs two qubits, got dims {rho.dims}")
    w, v = np.linalg.eigh(rho.entries)
    w = np.where(w > EIG_CUTOFF, w, 0.0)
    sqrt_rho = (v * np.sqrt(w)) @ v.conj().T
    lam = np.linalg.svd(sqrt_rho @ _YY @ sqrt_rho.conj(), compute_uv=False)
    lam = np.sort(lam)[::-1]
    c = lam[0] - lam[1] - lam[2] - lam[3]
    return float(min(max(c, 0.0), 1.0))


def pure_concurrence(state: PureState) -> float:
    """``2|a00 a11 - a01 a10|`` for a normalized two-qubit pure state."""
    if state.dims != (2, 2):
        raise DimensionError(f"pure_concurrence needs two qubits, got dims {state.dims}")
    m = state.amplitudes.reshape(2, 2) / state.norm
    return float(min(2.0 * abs(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]), 1.0))
