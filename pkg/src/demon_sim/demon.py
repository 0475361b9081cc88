"""The autonomous dissipative demon as a stroboscopic superoperator.

One block of the dynamics is free evolution for a time ``tau`` followed by a
short laser pulse. The pulse performs an S_z POVM with absorption probability
``p_absorb``; an absorbed photon triggers optical pumping towards ``|0>``
(duration ``t_laser``, rate ``gamma_rate``), no absorption leaves the state
alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import linops
from .errors import ConfigError, ConvergenceError, InvariantViolation, NonUniqueSteadyState
from .linops import PHYSICAL_TOL, conjugation_super, devectorize, vectorize
from .qutrit import MINUS, PLUS, ZERO, EigenSystem, HamiltonianSpec, build_hamiltonian, eigensystem, ket

# laboratory defaults; omega and p_absorb have none
DEFAULT_T_LASER = 41e-9
DEFAULT_GAMMA_RATE = 12.2e6
DEFAULT_TAU = 424e-9

UNIQUENESS_GAP = 1e-9
CLIP_TOL = 1e-10


@dataclass(frozen=True)
class DemonConfig:
    hamiltonian: HamiltonianSpec
    p_absorb: float
    tau: float = DEFAULT_TAU
    t_laser: float = DEFAULT_T_LASER
    gamma_rate: float = DEFAULT_GAMMA_RATE
    n_pulses: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p_absorb <= 1.0:
            raise ConfigError(f"p_absorb must lie in [0, 1], got {self.p_absorb}")
        for name in ("tau", "t_laser", "gamma_rate"):
            value = getattr(self, name)
            if not (value >= 0 and math.isfinite(value)):
                raise ConfigError(f"{name} must be finite and >= 0, got {value}")
        if self.n_pulses < 0:
            raise ConfigError("n_pulses must be >= 0")

    @property
    def decay_exponent(self) -> float:
        """Gamma * t_L."""
        return self.gamma_rate * self.t_laser

    @property
    def p_dissipate(self) -> float:
        return -math.expm1(-self.decay_exponent)

    @property
    def mu(self) -> float:
        """Probability that a pulse does not trigger feedback."""
        return 1.0 - self.p_dissipate * self.p_absorb


def build_povm(p_absorb: float) -> tuple[np.ndarray, ...]:
    """Measurement operators ``(m_1, m_2, m_3, m_4)``.

    ``m_1, m_2, m_3`` are ``sqrt(p_absorb)`` times the projectors on
    ``|-1>, |0>, |+1>``; ``m_4 = sqrt(1 - p_absorb) * I`` (no absorption).
    """
    if not 0.0 <= p_absorb <= 1.0:
        raise ConfigError(f"p_absorb must lie in [0, 1], got {p_absorb}")
    root = math.sqrt(p_absorb)
    ops = []
    for level in (MINUS, ZERO, PLUS):
        m = np.zeros((3, 3), dtype=complex)
        m[level, level] = root
        ops.append(m)
    ops.append(math.sqrt(1.0 - p_absorb) * np.eye(3, dtype=complex))
    return tuple(ops)


def jump_operators(gamma_rate: float) -> tuple[np.ndarray, np.ndarray]:
    """``L_0 = sqrt(Gamma)|0><+1|`` and ``L_1 = sqrt(Gamma)|0><-1|``."""
    root = math.sqrt(gamma_rate)
    l0 = root * np.outer(ket(0), ket(+1).conj())
    l1 = root * np.outer(ket(0), ket(-1).conj())
    return l0, l1


def lindblad_generator(jumps) -> np.ndarray:
    """Column-stacked generator of the dissipator built from ``jumps``."""
    n = jumps[0].shape[0]
    eye = np.eye(n)
    gen = np.zeros((n * n, n * n), dtype=complex)
    for lj in jumps:
        lld = lj.conj().T @ lj
        gen += np.kron(lj.conj(), lj) - 0.5 * np.kron(eye, lld) - 0.5 * np.kron(lld.conj(), eye)
    return gen


def lindblad_super_closed_form(decay_exponent: float) -> np.ndarray:
    """Explicit 9x9 optical-pumping superoperator for ``Gamma * t_L = decay_exponent``."""
    full = math.exp(-decay_exponent)
    half = math.exp(-decay_exponent / 2)
    lost = -math.expm1(-decay_exponent)
    diag = [full, half, full, half, 1.0, half, full, half, full]
    sup = np.diag(diag).astype(complex)
    sup[4, 0] = lost
    sup[4, 8] = lost
    return sup


def build_lindblad_super(t_laser: float, gamma_rate: float, *, check: bool = True) -> np.ndarray:
    """Optical-pumping superoperator, exponentiated from its jump operators.

    With ``check`` the result is compared against the closed-form matrix.
    """
    if t_laser * gamma_rate < 0:
        raise ConfigError("t_laser * gamma_rate must be >= 0")
    if gamma_rate == 0 or t_laser == 0:
        return np.eye(9, dtype=complex)
    gen = lindblad_generator(jumps=jump_operators(gamma_rate))
    sup = linops.expm(t_laser * gen)
    if check:
        closed = lindblad_super_closed_form(gamma_rate * t_laser)
        if np.max(np.abs(sup - closed)) > PHYSICAL_TOL:
            raise InvariantViolation("optical-pumping superoperator disagrees with its closed form")
    return sup


# Auxiliary projector algebra for the commuting (NV) case.
A1 = np.zeros((9, 9))
A1[0, 0] = A1[4, 4] = A1[8, 8] = 1.0
A2 = np.zeros((9, 9))
A2[4, 0] = A2[4, 4] = A2[4, 8] = 1.0
A3 = np.eye(9) - A1


def pulse_super_closed_form(cfg: DemonConfig) -> np.ndarray:
    mu = cfg.mu
    return mu * A1 + (1 - mu) * A2 + (1 - cfg.p_absorb) * A3


@dataclass(frozen=True)
class DemonMap:
    config: DemonConfig
    hamiltonian: np.ndarray
    eigen: EigenSystem
    unitary: np.ndarray
    u_super: np.ndarray
    lind_super: np.ndarray
    povm: tuple
    dissipators: tuple
    jump_ops: tuple
    a_super: np.ndarray
    b_super: np.ndarray
    branch_supers: tuple = field(repr=False)

    @property
    def dim(self) -> int:
        return 3

    def power(self, n: int) -> np.ndarray:
        return np.linalg.matrix_power(self.b_super, n)


def build_pulse_super(cfg: DemonConfig, lind_super=None) -> np.ndarray:
    """Mean effect of a single laser pulse, ``sum_j D_j (conj(m_j) kron m_j)``."""
    if lind_super is None:
        lind_super = build_lindblad_super(cfg.t_laser, cfg.gamma_rate)
    povm = build_povm(cfg.p_absorb)
    dissipators = (lind_super, lind_super, lind_super, np.eye(9, dtype=complex))
    return sum(d @ conjugation_super(m) for d, m in zip(dissipators, povm))


def build_block(cfg: DemonConfig) -> DemonMap:
    """Assemble ``B = A U`` together with all its ingredients."""
    h = build_hamiltonian(cfg.hamiltonian)
    es = eigensystem(h)
    u = linops.expm_hermitian_generator(h, -1j * cfg.tau)
    u_super = conjugation_super(u)
    lind = build_lindblad_super(cfg.t_laser, cfg.gamma_rate)
    povm = build_povm(cfg.p_absorb)
    eye9 = np.eye(9, dtype=complex)
    dissipators = (lind, lind, lind, eye9)
    measure = tuple(conjugation_super(m) for m in povm)
    a_super = sum(d @ m for d, m in zip(dissipators, measure))
    branches = tuple(d @ m @ u_super for d, m in zip(dissipators, measure))
    b_super = a_super @ u_super
    return DemonMap(
        config=cfg,
        hamiltonian=h,
        eigen=es,
        unitary=u,
        u_super=u_super,
        lind_super=lind,
        povm=povm,
        dissipators=dissipators,
        jump_ops=jump_operators(cfg.gamma_rate),
        a_super=a_super,
        b_super=b_super,
        branch_supers=branches,
    )


def check_state(rho, tol=CLIP_TOL) -> np.ndarray:
    """Hermitize, clip tiny negative eigenvalues, and renormalize a state.

    Raises :class:`InvariantViolation` when the matrix is not a state within
    ``tol``.
    """
    rho = np.asarray(rho, dtype=complex)
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise InvariantViolation("state is not Hermitian")
    rho = 0.5 * (rho + rho.conj().T)
    tr = np.trace(rho).real
    if abs(tr - 1) > tol:
        raise InvariantViolation(f"state trace {tr} differs from 1")
    evals, evecs = np.linalg.eigh(rho)
    if evals.min() < -tol:
        raise InvariantViolation(f"state has negative eigenvalue {evals.min()}")
    if evals.min() < 0:
        evals = np.clip(evals, 0.0, None)
        rho = (evecs * evals) @ evecs.conj().T
        rho = rho / np.trace(rho).real
    return rho


def evolve(demon: DemonMap, rho0, n: int) -> np.ndarray:
    """State after ``n`` blocks."""
    if n < 0:
        raise ValueError("n must be >= 0")
    vec = demon.power(n) @ vectorize(rho0)
    return check_state(devectorize(vec))


def _stationary_power(b, subdominant, tol=1e-16, max_power=10**15):
    # B^N with |lambda_2|^N below tol; the leading eigenvalue may sit at 1 + eps,
    # so callers renormalize traces afterwards
    if subdominant <= 0:
        n = 1
    else:
        n = int(math.ceil(math.log(tol) / math.log(subdominant)))
    if n > max_power:
        raise ConvergenceError(f"power iteration would need {n} blocks")
    return np.linalg.matrix_power(b, max(n, 1))


def spectral_gap(demon: DemonMap) -> tuple[complex, float]:
    """Leading eigenvalue and the modulus of the subdominant one."""
    evals = np.linalg.eigvals(demon.b_super)
    order = np.argsort(-np.abs(evals))
    return evals[order[0]], float(abs(evals[order[1]]))


def steady_state(demon: DemonMap, *, seed_tol: float = 1e-8) -> np.ndarray:
    """Unique fixed point of the block map.

    Taken from the eigenvalue-1 eigenvector of ``B``, then confirmed by
    power iteration from each energy eigenstate.
    """
    b = demon.b_super
    evals, evecs = np.linalg.eig(b)
    moduli = np.abs(evals)
    order = np.argsort(-moduli)
    if moduli[order[1]] >= 1 - UNIQUENESS_GAP:
        raise NonUniqueSteadyState(
            f"subdominant eigenvalue modulus {moduli[order[1]]:.12g} leaves the fixed point non-unique"
        )
    lead = order[0]
    if abs(evals[lead] - 1) > 1e-9:
        raise InvariantViolation(f"leading eigenvalue {evals[lead]} is not 1")
    vec = evecs[:, lead]
    rho = devectorize(vec)
    rho = rho / np.trace(rho)
    rho = check_state(rho)

    limit = _stationary_power(b, float(moduli[order[1]]))
    for k in range(demon.eigen.dim):
        seed = demon.eigen.projectors[k]
        reached = devectorize(limit @ vectorize(seed))
        reached = reached / np.trace(reached)
        if np.max(np.abs(reached - rho)) > seed_tol:
            raise InvariantViolation("power iteration from an eigenstate seed disagrees with the fixed point")
    return rho
