"""Two-point energy measurement statistics of the demon map."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .demon import DemonMap
from .linops import devectorize, vectorize
from .qutrit import EigenSystem, ThermalState

ROW_TOL = 1e-10
MERGE_RTOL = 1e-9


@dataclass(frozen=True)
class TpmStatistics:
    energies: np.ndarray
    initial_probs: np.ndarray
    conditional: np.ndarray  # conditional[i, j] = P(j | i)
    beta: float
    n_pulses: int

    def __post_init__(self):
        cond = np.asarray(self.conditional, dtype=float)
        if cond.shape != (len(self.energies), len(self.energies)):
            raise ValueError("conditional matrix has the wrong shape")
        if np.max(np.abs(cond.sum(axis=1) - 1)) > ROW_TOL:
            raise ValueError("conditional probability rows must sum to 1")
        if cond.min() < -ROW_TOL or cond.max() > 1 + ROW_TOL:
            raise ValueError("conditional probabilities outside [0, 1]")

    @property
    def joint(self) -> np.ndarray:
        """``joint[i, j] = P(j | i) P_i``."""
        return self.conditional * self.initial_probs[:, None]

    @property
    def delta_e(self) -> np.ndarray:
        """``delta_e[i, j] = E_j - E_i``."""
        return self.energies[None, :] - self.energies[:, None]

    def to_dict(self) -> dict:
        return {
            "energies": [float(e) for e in self.energies],
            "initial_probs": [float(p) for p in self.initial_probs],
            "conditional": [float(p) for p in np.ravel(self.conditional)],
            "beta": float(self.beta),
            "n_pulses": int(self.n_pulses),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "TpmStatistics":
        energies = np.asarray(data["energies"], dtype=float)
        n = len(energies)
        return cls(
            energies=energies,
            initial_probs=np.asarray(data["initial_probs"], dtype=float),
            conditional=np.asarray(data["conditional"], dtype=float).reshape(n, n),
            beta=float(data["beta"]),
            n_pulses=int(data["n_pulses"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "TpmStatistics":
        return cls.from_dict(json.loads(text))


def conditional_probabilities(demon: DemonMap, es: EigenSystem, n: int) -> np.ndarray:
    """``P(j | i) = Tr[P_j B^n(P_i)]`` for energy projectors ``P_i``."""
    bn = demon.power(n)
    dim = es.dim
    cond = np.empty((dim, dim))
    for i in range(dim):
        final = devectorize(bn @ vectorize(es.projectors[i]))
        for j in range(dim):
            cond[i, j] = np.real(np.trace(es.projectors[j] @ final))
    return cond


def tpm_statistics(demon: DemonMap, thermal: ThermalState, n: int, es: EigenSystem | None = None) -> TpmStatistics:
    es = demon.eigen if es is None else es
    return TpmStatistics(
        energies=es.energies.copy(),
        initial_probs=thermal.probs.copy(),
        conditional=conditional_probabilities(demon, es, n),
        beta=thermal.beta,
        n_pulses=n,
    )


@dataclass(frozen=True)
class EnergyChangeDistribution:
    support: tuple  # ((delta_e, probability), ...) sorted by delta_e

    @property
    def values(self) -> np.ndarray:
        return np.array([v for v, _ in self.support])

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.support])


def energy_distribution(stats: TpmStatistics) -> EnergyChangeDistribution:
    """Atoms ``E_j - E_i`` weighted by ``P(j|i) P_i``.

    Coincident atoms are merged and atoms of exactly zero weight dropped.
    """
    values = stats.delta_e.ravel()
    weights = stats.joint.ravel()
    scale = max(float(np.max(np.abs(stats.energies))), 1e-300)
    order = np.argsort(values, kind="stable")
    atoms: list[list[float]] = []
    for k in order:
        v, w = float(values[k]), float(weights[k])
        if atoms and abs(v - atoms[-1][0]) < MERGE_RTOL * scale:
            atoms[-1][1] += w
        else:
            atoms.append([v, w])
    return EnergyChangeDistribution(support=tuple((v, w) for v, w in atoms if w != 0))


def characteristic_function(stats: TpmStatistics, eta: float) -> float:
    """``G(eta) = sum_ij exp(-eta (E_j - E_i)) P(j|i) P_i``."""
    exponents = -eta * stats.delta_e
    joint = stats.joint
    mask = joint != 0
    if not mask.any():
        return 0.0
    shift = exponents[mask].max()
    return float(np.sum(joint[mask] * np.exp(exponents[mask] - shift)) * np.exp(shift))


def characteristic_derivative(stats: TpmStatistics, eta: float, order: int = 1) -> float:
    """``d^k G / d eta^k`` in closed form."""
    de = stats.delta_e
    return float(np.sum(stats.joint * (-de) ** order * np.exp(-eta * de)))


def mean_energy_change(stats: TpmStatistics) -> float:
    return float(np.sum(stats.joint * stats.delta_e))
