"""Repeated-trial sampling of protocol outcomes against the analytic law."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cavity import CAVITY, CavityParams, cavity_final_state
from .errors import ProtocolInputError
from .protocols import (
    ANCILLA,
    EQUAL_AB_RTOL,
    SECOND_ANCILLA,
    Classification,
    WCoefficients,
    analytic_probabilities,
    build_u3_prime,
    prepare_input,
    protocol1_steps,
    protocol2_steps,
    zero_ancilla,
)
from .statevec import PureState, apply_joint_unitary, project, remove_subsystem, sample_measurement, tensor

PROTOCOLS = ("protocol1", "protocol2", "cavity")
RNG_ALGORITHM = "numpy.random.PCG64/SeedSequence"
CHUNK_SIZE = 1 << 16
DEFAULT_THRESHOLD = 4.0
_DEGENERATE_P = 1e-12
CLASS_KEYS = tuple(k.value for k in Classification)


@dataclass
class _Node:
    """Measurement of ``subsystem`` on ``state``; children are leaves or further nodes."""

    state: PureState
    subsystem: str
    children: dict = field(default_factory=dict)


def _protocol_tree(protocol: str, coeffs: WCoefficients, params: CavityParams | None) -> _Node:
    W, B, F = Classification.W_SUCCESS, Classification.BELL_SUCCESS, Classification.FAILURE
    if protocol == "protocol1":
        state = prepare_input(coeffs)
        for u, p, a in protocol1_steps(coeffs):
            state = apply_joint_unitary(state, u, p, a)
        return _Node(state, ANCILLA, {0: W, 1: F})
    if protocol == "protocol2":
        state = prepare_input(coeffs)
        for u, p, a in protocol2_steps(coeffs):
            state = apply_joint_unitary(state, u, p, a)
        root = _Node(state, ANCILLA, {0: W, 1: F})
        garbage = project(state, ANCILLA, 1)
        if garbage.norm**2 > 1e-14:
            if abs(coeffs.a - coeffs.b) <= EQUAL_AB_RTOL * coeffs.a:
                root.children[1] = B
            else:
                g = remove_subsystem(garbage.renormalized(), ANCILLA)
                g = apply_joint_unitary(tensor(g, zero_ancilla(SECOND_ANCILLA)), build_u3_prime(coeffs), "3", SECOND_ANCILLA)
                root.children[1] = _Node(g, SECOND_ANCILLA, {0: B, 1: F})
        return root
    if protocol == "cavity":
        params = params or CavityParams()
        if not params.resonant:
            raise ProtocolInputError("the cavity scheme needs omega == omega0")
        state = cavity_final_state(coeffs, params)
        return _Node(state, CAVITY, {n: (W if n == 0 else F) for n in range(params.field_dim)})
    raise ValueError(f"unknown protocol {protocol!r}; choose from {PROTOCOLS}")


def _sample(node: _Node, n: int, rng: np.random.Generator, counts: dict) -> None:
    if n == 0:
        return
    draws = sample_measurement(node.state, node.subsystem, rng, size=n)
    levels, hits = np.unique(draws, return_counts=True)
    for level, m in zip(levels.tolist(), hits.tolist()):
        child = node.children[level]
        if isinstance(child, _Node):
            _sample(child, m, rng, counts)
        else:
            counts[child.value] += m


def expected_probabilities(protocol: str, coeffs: WCoefficients) -> dict[str, float]:
    """Analytic class probabilities for ``protocol``."""
    p = analytic_probabilities(coeffs)
    if protocol == "protocol2":
        return {"W_SUCCESS": p.p_w, "BELL_SUCCESS": p.p_bell, "FAILURE": p.p_fail}
    if protocol in ("protocol1", "cavity"):
        return {"W_SUCCESS": p.p_w, "BELL_SUCCESS": 0.0, "FAILURE": 1.0 - p.p_w}
    raise ValueError(f"unknown protocol {protocol!r}; choose from {PROTOCOLS}")


def z_score(freq: float, p: float, n: int) -> float | None:
    """``(freq - p)/sqrt(p(1-p)/n)``; None when ``p`` is 0 or 1."""
    if p < _DEGENERATE_P or p > 1.0 - _DEGENERATE_P:
        return None
    return (freq - p) / math.sqrt(p * (1.0 - p) / n)


@dataclass
class TrialReport:
    protocol: str
    coefficients: dict
    n_trials: int
    counts: dict
    frequencies: dict
    analytic: dict
    z_scores: dict
    seed: int | None
    rng_algorithm: str = RNG_ALGORITHM

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "coefficients": dict(self.coefficients),
            "n_trials": self.n_trials,
            "counts": dict(self.counts),
            "frequencies": dict(self.frequencies),
            "analytic": dict(self.analytic),
            "z_scores": dict(self.z_scores),
            "seed": self.seed,
            "rng_algorithm": self.rng_algorithm,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrialReport":
        return cls(**d)


def report_from_counts(protocol: str, coeffs: WCoefficients, counts: dict, seed: int | None = None) -> TrialReport:
    """Assemble a report from per-class counts (also used to inject counts in tests)."""
    counts = {k: int(counts.get(k, 0)) for k in CLASS_KEYS}
    n = sum(counts.values())
    if n < 1:
        raise ValueError("counts must sum to at least one trial")
    analytic = expected_probabilities(protocol, coeffs)
    freqs = {k: counts[k] / n for k in CLASS_KEYS}
    z = {k: z_score(freqs[k], analytic[k], n) for k in CLASS_KEYS}
    a2, b2, c2 = coeffs.squares
    return TrialReport(
        protocol=protocol,
        coefficients={"a2": a2, "b2": b2, "c2": c2},
        n_trials=n,
        counts=counts,
        frequencies=freqs,
        analytic=analytic,
        z_scores=z,
        seed=seed,
    )


def simulate_trials(
    protocol: str,
    coeffs: WCoefficients,
    n_trials: int,
    seed: int | None = None,
    params: CavityParams | None = None,
    workers: int = 1,
) -> TrialReport:
    """Sample ``n_trials`` independent protocol runs.

    Every measurement of every trial is drawn with :func:`sample_measurement`;
    trials that reach the same measurement are drawn as one vectorized batch.
    Trials are split into chunks of ``CHUNK_SIZE``, each with its own stream
    spawned from ``seed``, so the result does not depend on ``workers``. A
    missing seed is drawn from OS entropy and recorded in the report.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    if seed is None:
        seed = int(np.random.SeedSequence().entropy)
    tree = _protocol_tree(protocol, coeffs, params)
    n_chunks = -(-n_trials // CHUNK_SIZE)
    streams = np.random.SeedSequence(seed).spawn(n_chunks)
    sizes = [min(CHUNK_SIZE, n_trials - i * CHUNK_SIZE) for i in range(n_chunks)]

    def run(job):
        ss, size = job
        counts = dict.fromkeys(CLASS_KEYS, 0)
        _sample(tree, size, np.random.Generator(np.random.PCG64(ss)), counts)
        return counts

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, zip(streams, sizes)))
    else:
        parts = [run(job) for job in zip(streams, sizes)]
    total = dict.fromkeys(CLASS_KEYS, 0)
    for part in parts:
        for k, v in part.items():
            total[k] += v
    return report_from_counts(protocol, coeffs, total, seed)


@dataclass(frozen=True)
class Verdict:
    passed: bool
    z_scores: dict
    threshold: float
    impossible: tuple = ()


def compare_frequencies(report: TrialReport, threshold: float = DEFAULT_THRESHOLD) -> Verdict:
    """Pass iff every defined ``|z| < threshold``.

    Classes whose analytic probability is 0 or 1 have no z-score; observing
    such a class at the wrong frequency is reported as impossible and fails.
    """
    impossible = []
    for k, p in report.analytic.items():
        if report.z_scores.get(k) is None:
            expected = 0 if p < 0.5 else report.n_trials
            if report.counts[k] != expected:
                impossible.append(k)
    ok = all(abs(z) < threshold for z in report.z_scores.values() if z is not None) and not impossible
    return Verdict(ok, dict(report.z_scores), threshold, tuple(impossible))
