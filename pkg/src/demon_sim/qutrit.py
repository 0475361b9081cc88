"""Spin-1 model: Hamiltonians, eigenbases, thermal states and preparation gates.

Units: angular frequency with hbar = 1. The S_z basis is ordered
``(+1, 0, -1)`` throughout, so ``|+1> = e_0``, ``|0> = e_1``, ``|-1> = e_2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import ConfigError
from .linops import EXACT_TOL, is_hermitian

PLUS, ZERO, MINUS = 0, 1, 2
LEVEL_INDEX = {+1: PLUS, 0: ZERO, -1: MINUS}

SZ = np.diag([1.0, 0.0, -1.0]).astype(complex)
SX = (np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]]) / math.sqrt(2)).astype(complex)


def ket(m: int) -> np.ndarray:
    """S_z eigenket for ``m`` in {+1, 0, -1}."""
    v = np.zeros(3, dtype=complex)
    v[LEVEL_INDEX[m]] = 1.0
    return v


def projector(v) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    return np.outer(v, v.conj())


@dataclass(frozen=True)
class HamiltonianSpec:
    """Which Hamiltonian drives the unitary part of the block.

    ``delta`` (zero-field splitting) and ``zeeman`` (gamma_e * B) are used for
    the undriven ``"NV"`` kind, ``rabi`` for the rotating-frame ``"MW"`` kind.
    All values in rad/s.
    """

    kind: Literal["NV", "MW"]
    delta: float = 0.0
    zeeman: float = 0.0
    rabi: float = 0.0

    def __post_init__(self):
        if self.kind not in ("NV", "MW"):
            raise ConfigError(f"unknown Hamiltonian kind {self.kind!r}")
        if self.kind == "NV" and not self.delta > 0:
            raise ConfigError("NV Hamiltonian needs delta > 0")
        if self.kind == "MW" and not self.rabi > 0:
            raise ConfigError("MW Hamiltonian needs rabi > 0")


def build_hamiltonian(spec: HamiltonianSpec) -> np.ndarray:
    if spec.kind == "NV":
        return spec.delta * (SZ @ SZ) + spec.zeeman * SZ
    return spec.rabi * SX


@dataclass(frozen=True)
class EigenSystem:
    energies: np.ndarray
    vectors: np.ndarray  # columns are eigenvectors in the S_z basis
    projectors: tuple = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.energies)

    def vector(self, i: int) -> np.ndarray:
        return self.vectors[:, i]

    def to_energy_basis(self, rho) -> np.ndarray:
        return self.vectors.conj().T @ rho @ self.vectors

    def populations(self, rho) -> np.ndarray:
        return np.array([np.real(np.trace(p @ rho)) for p in self.projectors])


def _fix_phase(v):
    for c in v:
        if abs(c) > 1e-12:
            return v * (abs(c) / c)
    return v


def eigensystem(h) -> EigenSystem:
    """Ascending eigen-decomposition of a Hermitian operator.

    Each eigenvector is rephased so that its first nonzero component is real
    and positive.
    """
    h = np.asarray(h, dtype=complex)
    if not is_hermitian(h):
        raise ValueError("eigensystem requires a Hermitian matrix")
    evals, evecs = np.linalg.eigh(0.5 * (h + h.conj().T))
    order = np.argsort(evals, kind="stable")
    evals = evals[order]
    evecs = np.column_stack([_fix_phase(evecs[:, k]) for k in order])
    projs = tuple(projector(evecs[:, k]) for k in range(len(evals)))
    return EigenSystem(energies=evals.astype(float), vectors=evecs, projectors=projs)


@dataclass(frozen=True)
class ThermalState:
    beta: float
    rho: np.ndarray
    partition: float
    log_partition: float
    free_energy: float
    probs: np.ndarray
    energies: np.ndarray
    negative_temperature: bool = False

    @property
    def mean_energy(self) -> float:
        return float(np.dot(self.probs, self.energies))


def thermal_state(es: EigenSystem, beta: float) -> ThermalState:
    """Gibbs state of ``es`` at inverse temperature ``beta`` (s/rad).

    Negative ``beta`` is accepted and flagged through ``negative_temperature``.
    """
    beta = float(beta)
    if not math.isfinite(beta):
        raise ConfigError("beta must be finite")
    exponents = -beta * es.energies
    shift = exponents.max()
    weights = np.exp(exponents - shift)
    total = weights.sum()
    probs = weights / total
    log_z = shift + math.log(total)
    rho = sum(p * proj for p, proj in zip(probs, es.projectors))
    with np.errstate(over="ignore"):
        # subnormal beta legitimately gives an infinite free energy
        free_energy = float(-np.float64(log_z) / beta) if beta != 0 else -math.inf
    return ThermalState(
        beta=beta,
        rho=rho,
        partition=math.exp(log_z) if log_z < 700 else math.inf,
        log_partition=log_z,
        free_energy=free_energy,
        probs=probs,
        energies=es.energies.copy(),
        negative_temperature=beta < 0,
    )


def two_level_rotation(pair: tuple[int, int], theta: float, phi: float) -> np.ndarray:
    """Microwave pulse of area ``theta`` and phase ``phi`` on two S_z levels.

    ``pair`` names the levels by their m_S values, e.g. ``(0, -1)``. On the
    two levels taken in basis order ``(a, b)`` the pulse acts as
    ``exp(-i theta/2 (e^{i phi}|a><b| + e^{-i phi}|b><a|))``; the third level
    is untouched.
    """
    a, b = sorted(LEVEL_INDEX[m] for m in pair)
    if a == b:
        raise ValueError("rotation needs two distinct levels")
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    g = np.eye(3, dtype=complex)
    g[a, a] = c
    g[b, b] = c
    g[a, b] = -1j * s * np.exp(1j * phi)
    g[b, a] = -1j * s * np.exp(-1j * phi)
    return g


def _pulse_sequence(*pulses):
    g = np.eye(3, dtype=complex)
    for pair, theta, phi in pulses:
        g = two_level_rotation(pair, theta, phi) @ g
    return g


def gate_library() -> dict[str, np.ndarray]:
    """Pulse sequences taking ``|0>`` to each supported eigenstate."""
    half_pi = math.pi / 2
    second = math.acos(1 / 3)
    return {
        "0": np.eye(3, dtype=complex),
        "+1": _pulse_sequence(((0, 1), math.pi, half_pi)),
        "-1": _pulse_sequence(((0, -1), math.pi, half_pi)),
        "null": _pulse_sequence(((0, -1), half_pi, half_pi), ((0, 1), math.pi, half_pi)),
        "+omega": _pulse_sequence(((0, -1), math.pi / 3, -half_pi), ((0, 1), second, half_pi)),
        "-omega": _pulse_sequence(((0, -1), math.pi / 3, half_pi), ((0, 1), second, -half_pi)),
    }


def preparation_gate(target: int, es: EigenSystem) -> np.ndarray:
    """Gate ``G_i`` with ``G_i|0> = |E_i>`` up to a global phase.

    ``target`` is 1-based (1 = lowest energy). The readout gate is the
    adjoint of the returned matrix.
    """
    if target not in range(1, es.dim + 1):
        raise ValueError(f"target must be in 1..{es.dim}, got {target}")
    goal = es.vector(target - 1)
    start = ket(0)
    best, best_fid = None, -1.0
    for gate in gate_library().values():
        fid = abs(np.vdot(goal, gate @ start)) ** 2
        if fid > best_fid:
            best, best_fid = gate, fid
    if best_fid < 1 - EXACT_TOL:
        raise ValueError(f"eigenstate {target} is not reachable with the known pulse sequences")
    return best


def readout_gate(target: int, es: EigenSystem) -> np.ndarray:
    return preparation_gate(target, es).conj().T
