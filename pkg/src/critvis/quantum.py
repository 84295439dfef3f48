"""Pure qubit states and Born-rule probabilities for local spin measurements.

Each observer measures a qubit along a Bloch direction given by a pair of
angles ``(theta, phi)``.  Outcome ``0`` projects onto
``(cos(theta/2), exp(i phi) sin(theta/2))`` and outcome ``1`` onto
``(sin(theta/2), -exp(i phi) cos(theta/2))``.

Observable indices are zero-based throughout the package: observer ``j``
chooses ``o[j]`` in ``range(config.observables[j])``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class ConfigError(ValueError):
    """Invalid experiment configuration or inconsistent shapes."""


_MAX_COLUMNS = 2**31 - 2


@dataclass(frozen=True)
class ExperimentConfig:
    """Number of observers, outcomes per measurement and observables per observer."""

    observables: tuple[int, ...]
    outcomes: int = 2

    def __post_init__(self):
        obs = tuple(int(m) for m in self.observables)
        object.__setattr__(self, "observables", obs)
        if len(obs) < 2:
            raise ConfigError("at least two observers are required")
        if any(m < 1 for m in obs):
            raise ConfigError("every observer needs at least one observable")
        if self.outcomes != 2:
            raise ConfigError("only two-outcome (qubit) measurements are supported")
        if self.n_columns_structural > _MAX_COLUMNS:
            raise ConfigError("problem too large: column count overflows int32 indexing")

    @classmethod
    def uniform(cls, n_observers: int, observables: int = 2) -> "ExperimentConfig":
        return cls((observables,) * n_observers)

    @property
    def n_observers(self) -> int:
        return len(self.observables)

    @property
    def n_settings_choices(self) -> int:
        return math.prod(self.observables)

    @property
    def n_columns_structural(self) -> int:
        return math.prod(self.outcomes**m for m in self.observables)

    @property
    def n_rows_full(self) -> int:
        return self.n_settings_choices * self.outcomes**self.n_observers

    @property
    def n_rows_reduced(self) -> int:
        d = self.outcomes
        return math.prod(d + (m - 1) * (d - 1) for m in self.observables)

    @property
    def n_angles(self) -> int:
        return 2 * sum(self.observables)

    def settings_choices(self):
        """All settings tuples in lexicographic order, observer 0 most significant."""
        return itertools.product(*(range(m) for m in self.observables))


@dataclass(frozen=True)
class PureState:
    amplitudes: np.ndarray
    n_observers: int

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).ravel()
        if amps.size != 2**self.n_observers:
            raise ConfigError(
                f"state has {amps.size} amplitudes, expected {2**self.n_observers}"
            )
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > 1e-12:
            raise ConfigError(f"state is not normalized (norm^2 = {norm!r})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)


def make_ghz(n: int) -> PureState:
    """(|0...0> + |1...1>) / sqrt(2) on ``n`` qubits."""
    if n < 2:
        raise ConfigError("GHZ state needs at least two qubits")
    amps = np.zeros(2**n, dtype=complex)
    amps[0] = amps[-1] = 1 / math.sqrt(2)
    return PureState(amps, n)


def make_product_zero(n: int) -> PureState:
    amps = np.zeros(2**n, dtype=complex)
    amps[0] = 1.0
    return PureState(amps, n)


def read_state_file(path, tol: float = 1e-6) -> PureState:
    """Read a state written as ``n`` followed by ``2**n`` lines of ``re im``.

    Basis order has observer 1 as the most significant qubit.  The vector is
    renormalized when it passes the ``tol`` check but is off by more than
    rounding error.
    """
    lines = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise ConfigError(f"{path}: empty state file")
    try:
        n = int(lines[0][0])
        vals = [complex(float(a), float(b)) for a, b in lines[1:]]
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"{path}: malformed state file ({exc})") from None
    if len(vals) != 2**n:
        raise ConfigError(f"{path}: expected {2**n} amplitudes, found {len(vals)}")
    amps = np.array(vals)
    norm = float(np.vdot(amps, amps).real)
    if abs(norm - 1.0) > tol:
        raise ConfigError(f"{path}: norm^2 = {norm} deviates from 1 by more than {tol}")
    if abs(norm - 1.0) > 1e-12:
        amps = amps / math.sqrt(norm)
    return PureState(amps, n)


def write_state_file(state: PureState, path) -> None:
    rows = [str(state.n_observers)]
    rows += [f"{float(a.real)!r} {float(a.imag)!r}" for a in state.amplitudes]
    Path(path).write_text("\n".join(rows) + "\n")


@dataclass(frozen=True)
class ObservableSetting:
    theta: float
    phi: float

    def __post_init__(self):
        if not (math.isfinite(self.theta) and math.isfinite(self.phi)):
            raise ConfigError("observable angles must be finite")

    def basis(self) -> np.ndarray:
        """2x2 matrix whose column ``r`` is the eigenvector for outcome ``r``."""
        c, s = math.cos(self.theta / 2), math.sin(self.theta / 2)
        e = complex(math.cos(self.phi), math.sin(self.phi))
        return np.array([[c, s], [e * s, -e * c]])

    def normalized(self) -> "ObservableSetting":
        """Same measurement direction with theta in [0, pi] and phi in [0, 2 pi)."""
        theta = math.remainder(self.theta, 2 * math.pi)
        phi = self.phi
        if theta < 0:
            theta, phi = -theta, phi + math.pi
        return ObservableSetting(theta, phi % (2 * math.pi))


@dataclass(frozen=True)
class AngleVector:
    """Per observer, the list of observable settings it chooses from."""

    settings: tuple[tuple[ObservableSetting, ...], ...]

    @classmethod
    def from_flat(cls, config: ExperimentConfig, values: Sequence[float]) -> "AngleVector":
        """Unpack ``(theta, phi)`` pairs, observer by observer."""
        values = np.asarray(values, dtype=float).ravel()
        if values.size != config.n_angles:
            raise ConfigError(f"expected {config.n_angles} angles, got {values.size}")
        out, pos = [], 0
        for m in config.observables:
            obs = []
            for _ in range(m):
                obs.append(ObservableSetting(float(values[pos]), float(values[pos + 1])))
                pos += 2
            out.append(tuple(obs))
        return cls(tuple(out))

    @classmethod
    def random(cls, config: ExperimentConfig, rng: np.random.Generator) -> "AngleVector":
        flat = []
        for m in config.observables:
            for _ in range(m):
                flat += [rng.uniform(0, math.pi), rng.uniform(0, 2 * math.pi)]
        return cls.from_flat(config, flat)

    def flat(self) -> np.ndarray:
        return np.array([v for obs in self.settings for s in obs for v in (s.theta, s.phi)])

    def normalized(self) -> "AngleVector":
        return AngleVector(tuple(tuple(s.normalized() for s in obs) for obs in self.settings))

    def check(self, config: ExperimentConfig) -> None:
        shape = tuple(len(obs) for obs in self.settings)
        if shape != config.observables:
            raise ConfigError(f"angle shape {shape} does not match observables {config.observables}")


def _check_outcomes(n, outcomes):
    if len(outcomes) != n or any(r not in (0, 1) for r in outcomes):
        raise ConfigError(f"outcomes must be a length-{n} tuple of 0/1")


def outcome_distribution(state: PureState, chosen: Sequence[ObservableSetting]) -> np.ndarray:
    """Probabilities of all ``2**n`` joint outcomes for one setting per observer.

    Entry ``r`` (observer 1 most significant bit) is
    ``|<v_r1| x ... x <v_rn| psi>|^2``.
    """
    n = state.n_observers
    if len(chosen) != n:
        raise ConfigError(f"need {n} settings, got {len(chosen)}")
    psi = state.amplitudes.reshape((2,) * n)
    for j, setting in enumerate(chosen):
        # contract axis j with conj(basis)^T; moves the outcome index to the end
        psi = np.tensordot(psi, setting.basis().conj(), axes=([0], [0]))
    probs = np.abs(psi.ravel()) ** 2
    return np.clip(probs, 0.0, 1.0)


def outcome_probability(state: PureState, chosen: Sequence[ObservableSetting], outcomes) -> float:
    _check_outcomes(state.n_observers, outcomes)
    index = 0
    for r in outcomes:
        index = 2 * index + r
    return float(outcome_distribution(state, chosen)[index])


@dataclass(frozen=True)
class ProbabilityTable:
    """Outcome probabilities indexed by settings choice and joint outcome.

    ``probs[c, r]`` holds P(r | o) where ``c`` is the position of ``o`` in
    lexicographic order and ``r`` the joint outcome as a base-``d`` integer.
    Entries not computed (reduced mode) are NaN.
    """

    config: ExperimentConfig
    probs: np.ndarray
    full: bool = field(default=True)

    def choice_index(self, o) -> int:
        idx = 0
        for oj, m in zip(o, self.config.observables):
            idx = idx * m + oj
        return idx

    def get(self, o, r) -> float:
        idx = 0
        for rj in r:
            idx = idx * self.config.outcomes + rj
        return float(self.probs[self.choice_index(o), idx])


def reduced_outcome_mask(config: ExperimentConfig, o) -> np.ndarray:
    """Boolean mask over joint outcomes kept for settings choice ``o``.

    An outcome is dropped when some observer obtains ``d - 1`` on an
    observable other than its first.
    """
    d, n = config.outcomes, config.n_observers
    digits = np.indices((d,) * n).reshape(n, -1)
    keep = np.ones(d**n, dtype=bool)
    for j, oj in enumerate(o):
        if oj > 0:
            keep &= digits[j] != d - 1
    return keep


def probability_table(
    state: PureState, config: ExperimentConfig, angles: AngleVector, full: bool = False
) -> ProbabilityTable:
    """Fill the probability table for every settings choice.

    With ``full=False`` only the entries used by the reduced LP rows are
    stored; the rest are NaN.
    """
    angles.check(config)
    if state.n_observers != config.n_observers:
        raise ConfigError("state and configuration disagree on the number of observers")
    d, n = config.outcomes, config.n_observers
    probs = np.full((config.n_settings_choices, d**n), np.nan)
    for c, o in enumerate(config.settings_choices()):
        dist = outcome_distribution(state, [angles.settings[j][oj] for j, oj in enumerate(o)])
        if full:
            probs[c] = dist
        else:
            keep = reduced_outcome_mask(config, o)
            probs[c, keep] = dist[keep]
    probs.setflags(write=False)
    return ProbabilityTable(config, probs, full)


def uniform_table(config: ExperimentConfig) -> ProbabilityTable:
    """Table of a completely random source, P = d**-n everywhere."""
    d, n = config.outcomes, config.n_observers
    probs = np.full((config.n_settings_choices, d**n), float(d) ** -n)
    probs.setflags(write=False)
    return ProbabilityTable(config, probs, True)
