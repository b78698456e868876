"""Locality bookkeeping for distributed protocol runs.

Every subsystem has exactly one owner. Joint operations are accepted only on
subsystems held at one location, measurement outcomes are broadcast as
classical messages, and particles can be physically handed to another party.
Each action is appended to an event log that can be written as JSON lines and
replayed to rebuild the final state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .cavity import CAVITY, CavityParams, jc_propagator, optimal_times
from .errors import LocalityViolation, RegistryError
from .protocols import (
    ANCILLA,
    EQUAL_AB_RTOL,
    PARTICLES,
    SECOND_ANCILLA,
    WCoefficients,
    build_u3_prime,
    make_wprime,
    protocol1_steps,
    protocol2_steps,
)
from .statevec import (
    ZERO_BRANCH_TOL,
    JointUnitary,
    PureState,
    apply_joint_unitary,
    apply_operator,
    level_probabilities,
    make_basis_state,
    project,
    sample_measurement,
    tensor,
)

ALICE, BOB, CLIFF = "Alice", "Bob", "Cliff"
DEFAULT_OWNERSHIP = {"1": ALICE, "2": BOB, "3": BOB}


@dataclass(frozen=True)
class Event:
    seq: int
    location: str | None
    kind: str
    payload: dict

    def to_json(self) -> str:
        return json.dumps({"seq": self.seq, "location": self.location, "kind": self.kind, "payload": self.payload})

    @classmethod
    def from_json(cls, line: str) -> "Event":
        d = json.loads(line)
        return cls(int(d["seq"]), d["location"], d["kind"], d["payload"])


def _encode_complex(arr) -> list:
    return [[float(z.real), float(z.imag)] for z in np.asarray(arr, dtype=complex).reshape(-1)]


def _decode_complex(data, shape=None) -> np.ndarray:
    out = np.array([complex(re, im) for re, im in data], dtype=complex)
    return out.reshape(shape) if shape is not None else out


@dataclass
class LoccSession:
    """A pure state shared among several locations, plus its event log."""

    state: PureState
    registry: dict[str, str]
    log: list[Event] = field(default_factory=list)
    violations: int = 0

    def __post_init__(self):
        missing = [l for l in self.state.labels if l not in self.registry]
        if missing:
            raise RegistryError(f"no owner for subsystems {missing}")
        extra = [l for l in self.registry if l not in self.state.labels]
        if extra:
            raise RegistryError(f"registry names unknown subsystems {extra}")
        if not self.log:
            self._record(
                None,
                "init",
                {
                    "dims": list(self.state.dims),
                    "labels": list(self.state.labels),
                    "amplitudes": _encode_complex(self.state.amplitudes),
                    "ownership": dict(self.registry),
                },
            )

    # -- helpers -------------------------------------------------------------

    def _record(self, location, kind, payload) -> None:
        self.log.append(Event(len(self.log), location, kind, payload))

    def owner(self, label: str) -> str:
        try:
            return self.registry[str(label)]
        except KeyError:
            raise RegistryError(f"subsystem {label!r} is not registered") from None

    def holdings(self, location: str) -> list[str]:
        return [l for l in self.state.labels if self.registry[l] == location]

    def _common_owner(self, labels: Iterable[str]) -> str:
        owners = {l: self.owner(l) for l in labels}
        if len(set(owners.values())) != 1:
            self.violations += 1
            raise LocalityViolation(f"joint operation across locations: {owners}")
        return next(iter(owners.values()))

    # -- operations ----------------------------------------------------------

    def add_ancilla(self, label: str, location: str, dim: int = 2, level: int = 0) -> "LoccSession":
        """Prepare a fresh subsystem in ``|level>`` at ``location``."""
        if label in self.registry:
            raise RegistryError(f"subsystem {label!r} already exists")
        self.state = tensor(self.state, make_basis_state([dim], [level], [label]))
        self.registry[label] = location
        self._record(location, "prepare", {"label": label, "dim": dim, "level": level})
        return self

    def local_apply(self, u: JointUnitary, p: str, a: str) -> "LoccSession":
        """Apply a joint unitary to ``(p, a)``; both must share an owner."""
        where = self._common_owner([p, a])
        self.state = apply_joint_unitary(self.state, u, p, a)
        # stored in apply_operator order (a, p)
        self._record(
            where, "unitary", {"name": u.name, "labels": [a, p], "matrix": _encode_complex(u.entries)}
        )
        return self

    def local_operator(self, matrix: np.ndarray, labels: list[str], name: str = "") -> "LoccSession":
        """Apply a general k-local unitary (e.g. an atom-cavity propagator)."""
        where = self._common_owner(labels)
        self.state = apply_operator(self.state, matrix, labels)
        self._record(where, "unitary", {"name": name, "labels": list(labels), "matrix": _encode_complex(matrix)})
        return self

    def local_measure(
        self,
        q: str,
        outcome: int | None = None,
        rng: np.random.Generator | None = None,
        by: str | None = None,
    ) -> int:
        """Measure ``q`` at its owner's site and broadcast the outcome.

        With ``outcome`` given the branch is selected (postselection); otherwise
        it is drawn from ``rng``. Logs a ``measure`` and a ``broadcast`` event.
        """
        where = self.owner(q)
        if by is not None and by != where:
            self.violations += 1
            raise LocalityViolation(f"{by} cannot measure {q!r}, which is held by {where}")
        probs = level_probabilities(self.state, q)
        if outcome is None:
            if rng is None:
                raise ValueError("either outcome or rng is required")
            outcome = sample_measurement(self.state, q, rng)
        outcome = int(outcome)
        if probs[outcome] < ZERO_BRANCH_TOL:
            raise ValueError(f"outcome {outcome} of {q!r} has probability {probs[outcome]:.3e}")
        self.state = project(self.state, q, outcome).renormalized()
        self._record(where, "measure", {"label": q, "outcome": outcome, "probability": float(probs[outcome])})
        self.broadcast(where, f"{q}={outcome}")
        return outcome

    def broadcast(self, location: str, message: str) -> "LoccSession":
        self._record(location, "broadcast", {"message": message})
        return self

    def transfer_particle(self, q: str, src: str, dst: str) -> "LoccSession":
        if self.owner(q) != src:
            raise RegistryError(f"{src} does not hold {q!r} (owner is {self.owner(q)})")
        self.registry[q] = dst
        self._record(src, "transfer", {"label": q, "from": src, "to": dst})
        return self

    # -- serialization -------------------------------------------------------

    def to_jsonl(self) -> str:
        return "".join(e.to_json() + "\n" for e in self.log)

    def write_log(self, path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8", newline="\n")


def new_session(state: PureState, ownership: dict[str, str]) -> LoccSession:
    return LoccSession(state, dict(ownership))


def read_log(path) -> list[Event]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [Event.from_json(l) for l in lines if l.strip()]


def replay(events: list[Event]) -> LoccSession:
    """Rebuild a session from its log, re-checking locality on every step."""
    if not events or events[0].kind != "init":
        raise RegistryError("log must start with an init event")
    init = events[0].payload
    state = PureState(_decode_complex(init["amplitudes"]), init["dims"], init["labels"])
    session = LoccSession(state, dict(init["ownership"]))
    for ev in events[1:]:
        if ev.seq < len(session.log):
            # already regenerated, e.g. the broadcast emitted by local_measure
            if session.log[ev.seq].kind != ev.kind:
                raise RegistryError(f"log mismatch at seq {ev.seq}: {ev.kind} vs {session.log[ev.seq].kind}")
            continue
        p = ev.payload
        if ev.kind == "prepare":
            session.add_ancilla(p["label"], ev.location, p["dim"], p["level"])
        elif ev.kind == "unitary":
            labels = p["labels"]
            dim = int(np.prod([session.state.dim_of(l) for l in labels]))
            session.local_operator(_decode_complex(p["matrix"], (dim, dim)), labels, p.get("name", ""))
        elif ev.kind == "measure":
            session.local_measure(p["label"], outcome=p["outcome"], by=ev.location)
        elif ev.kind == "broadcast":
            session.broadcast(ev.location, p["message"])
        elif ev.kind == "transfer":
            session.transfer_particle(p["label"], p["from"], p["to"])
        else:
            raise RegistryError(f"unknown event kind {ev.kind!r}")
    return session


# -- protocol runs inside sessions ------------------------------------------


def _choose(outcomes: dict | None, key: str):
    return None if outcomes is None else outcomes.get(key)


def protocol1_session(
    coeffs: WCoefficients, outcome: int | None = None, rng=None, send_to_cliff: bool = True
) -> LoccSession:
    """Protocol 1 with Alice holding particle 1 and Bob particles 2, 3 and the ancilla."""
    s = new_session(make_wprime(coeffs), DEFAULT_OWNERSHIP)
    s.add_ancilla(ANCILLA, BOB)
    for u, p, anc in protocol1_steps(coeffs):
        s.local_apply(u, p, anc)
    result = s.local_measure(ANCILLA, outcome=outcome, rng=rng)
    if result == 0 and send_to_cliff:
        s.transfer_particle("3", BOB, CLIFF)
    return s


def protocol2_session(
    coeffs: WCoefficients, outcomes: dict | None = None, rng=None, send_to_cliff: bool = True
) -> LoccSession:
    """Protocol 2 including garbage recycling with a second Bob-side ancilla.

    ``outcomes`` may fix ``{"anc": k, "anc2": k}``; missing entries are sampled.
    """
    s = new_session(make_wprime(coeffs), DEFAULT_OWNERSHIP)
    s.add_ancilla(ANCILLA, BOB)
    for u, p, anc in protocol2_steps(coeffs):
        s.local_apply(u, p, anc)
    first = s.local_measure(ANCILLA, outcome=_choose(outcomes, "anc"), rng=rng)
    if first == 0:
        if send_to_cliff:
            s.transfer_particle("3", BOB, CLIFF)
        return s
    if abs(coeffs.a - coeffs.b) > EQUAL_AB_RTOL * coeffs.a:
        s.add_ancilla(SECOND_ANCILLA, BOB)
        s.local_apply(build_u3_prime(coeffs), "3", SECOND_ANCILLA)
        second = s.local_measure(SECOND_ANCILLA, outcome=_choose(outcomes, "anc2"), rng=rng)
        if second != 0:
            return s
    if send_to_cliff:
        s.transfer_particle("3", BOB, CLIFF)
    return s


def cavity_session(
    coeffs: WCoefficients, params: CavityParams, outcome: int | None = None, rng=None, send_to_cliff: bool = True
) -> LoccSession:
    """Cavity scheme with the cavity mode owned by Bob."""
    s = new_session(make_wprime(coeffs), DEFAULT_OWNERSHIP)
    s.add_ancilla(CAVITY, BOB, dim=params.field_dim)
    times = optimal_times(coeffs, params.epsilon)
    s.local_operator(jc_propagator(params, times.dt1), ["3", CAVITY], name="JC(atom 3)")
    s.local_operator(jc_propagator(params, times.dt2), ["2", CAVITY], name="JC(atom 2)")
    result = s.local_measure(CAVITY, outcome=outcome, rng=rng)
    if result == 0 and send_to_cliff:
        s.transfer_particle("3", BOB, CLIFF)
    return s


def particle_owners(session: LoccSession) -> dict[str, str]:
    return {l: session.registry[l] for l in PARTICLES}

