"""Efficacy of the demon and the fluctuation relation ``G(beta) = gamma``.

Also hosts the steady-state analysis of the energy scaling factor ``eta*``
solving ``G(eta*) = 1`` in the regime where every conditional row has
converged to the same stationary populations.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Literal

import numpy as np

from .demon import DemonConfig, DemonMap, spectral_gap
from .errors import ConfigError, ConvergenceError, InvariantViolation
from .linops import hs_inner, trace_of_vectorized, vectorize
from .qutrit import ThermalState, thermal_state
from .statistics import TpmStatistics, characteristic_function, mean_energy_change

SUT_TOL = 1e-10
IMAG_TOL = 1e-10


@dataclass(frozen=True)
class EfficacyReport:
    gamma: float
    gamma_asymptotic: float
    characteristic_at_beta: float
    n_pulses: int
    method: Literal["numeric", "analytic", "asymptotic"] = "numeric"

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def _real(value: complex, what: str) -> float:
    if abs(value.imag) > IMAG_TOL * max(1.0, abs(value.real)):
        raise InvariantViolation(f"{what} has imaginary part {value.imag:.3e}")
    return float(value.real)


def efficacy_numeric(demon: DemonMap, thermal: ThermalState, n: int) -> float:
    """``gamma = Tr[(B^dagger)^n col(rho_th)]``."""
    backward = np.linalg.matrix_power(demon.b_super.conj().T, n)
    return _real(trace_of_vectorized(backward @ vectorize(thermal.rho)), "efficacy")


def efficacy_analytic_nv(cfg: DemonConfig, thermal: ThermalState) -> float:
    """Closed form ``mu^N + 3 (1 - mu^N) exp(beta F)`` for the undriven NV Hamiltonian.

    ``N`` is ``cfg.n_pulses``; energies are measured from the ``|0>`` level.
    """
    if cfg.hamiltonian.kind != "NV":
        raise ConfigError("the closed-form efficacy only applies to the NV Hamiltonian")
    mu_n = cfg.mu ** cfg.n_pulses
    # exp(beta F) = 1 / Z
    return mu_n + 3.0 * (1.0 - mu_n) * math.exp(-thermal.log_partition)


def efficacy_asymptotic(rho_inf, thermal: ThermalState) -> float:
    """``n <rho_inf, rho_th>_HS`` with ``n`` the Hilbert space dimension."""
    rho_inf = np.asarray(rho_inf)
    return rho_inf.shape[0] * _real(hs_inner(rho_inf, thermal.rho), "asymptotic efficacy")


def efficacy_report(demon: DemonMap, thermal: ThermalState, n: int, rho_inf=None) -> EfficacyReport:
    from .statistics import tpm_statistics

    stats = tpm_statistics(demon, thermal, n)
    if rho_inf is None:
        from .demon import steady_state

        rho_inf = steady_state(demon)
    return EfficacyReport(
        gamma=efficacy_numeric(demon, thermal, n),
        gamma_asymptotic=efficacy_asymptotic(rho_inf, thermal),
        characteristic_at_beta=characteristic_function(stats, thermal.beta),
        n_pulses=n,
    )


@dataclass(frozen=True)
class SutCheck:
    characteristic: float
    gamma: float
    deviation: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.deviation < self.tolerance


def sut_check(stats: TpmStatistics, demon: DemonMap, thermal: ThermalState | None = None, tol: float = SUT_TOL) -> SutCheck:
    """Compare ``G(beta)`` from two-point statistics with ``gamma`` from the backward map."""
    if thermal is None:
        thermal = thermal_state(demon.eigen, stats.beta)
    g = characteristic_function(stats, stats.beta)
    gamma = efficacy_numeric(demon, thermal, stats.n_pulses)
    return SutCheck(characteristic=g, gamma=gamma, deviation=abs(g - gamma), tolerance=tol)


def asymptotic_pulse_count(demon: DemonMap, tol: float = 1e-9, cap: int = 100_000) -> int:
    """Pulse count after which the subdominant mode of ``B`` has decayed below ``tol``."""
    _, sub = spectral_gap(demon)
    if sub <= 0:
        return 1
    if sub >= 1:
        raise ConvergenceError("block map has no spectral gap")
    return min(cap, int(math.ceil(math.log(tol) / math.log(sub))))


# -- unitality witness -------------------------------------------------------

@dataclass(frozen=True)
class UnitalityWitness:
    classification: Literal["unital", "gamma-one-non-unital", "generic"]
    gamma_asymptotic: float
    populations: np.ndarray
    distance_to_mixed: float


def gamma_one_family(populations_head, thermal: ThermalState) -> np.ndarray:
    """Energy-basis populations with ``gamma_inf = 1``.

    ``populations_head`` gives ``p_1 .. p_{n-2}`` (0-based energy indices
    1..n-2); ``p_{n-1}`` is fixed by the ``gamma_inf = 1`` constraint and
    ``p_0`` by normalization.
    """
    w = np.exp(-thermal.beta * thermal.energies + thermal.beta * thermal.energies.min())
    n = len(w)
    head = np.asarray(populations_head, dtype=float)
    if len(head) != n - 2:
        raise ValueError(f"expected {n - 2} free populations")
    denom = w[0] - w[n - 1]
    if abs(denom) < 1e-300:
        raise ValueError("degenerate spectrum: the family is unconstrained")
    last = 1 / n - sum((p - 1 / n) * (w[0] - w[k]) / denom for k, p in enumerate(head, start=1))
    pops = np.empty(n)
    pops[1 : n - 1] = head
    pops[n - 1] = last
    pops[0] = 1 - pops[1:].sum()
    return pops


def unitality_witness(rho_inf, thermal: ThermalState, eigen=None, tol: float = SUT_TOL) -> UnitalityWitness:
    rho_inf = np.asarray(rho_inf, dtype=complex)
    n = rho_inf.shape[0]
    g_inf = efficacy_asymptotic(rho_inf, thermal)
    distance = float(np.max(np.abs(rho_inf - np.eye(n) / n)))
    if eigen is not None:
        pops = eigen.populations(rho_inf)
    else:
        pops = np.real(np.diag(rho_inf))
    if distance < tol:
        label = "unital"
    elif abs(g_inf - 1) < tol:
        label = "gamma-one-non-unital"
    else:
        label = "generic"
    return UnitalityWitness(label, g_inf, pops, distance)


# -- eta* in the stationary regime -------------------------------------------

def factorized_characteristic(initial_probs, ss_probs, energies, eta: float) -> float:
    """``(sum_i P_i e^{eta E_i}) (sum_j P~_j e^{-eta E_j})``, the stationary-regime ``G``."""
    e = np.asarray(energies, dtype=float)
    fwd = np.asarray(initial_probs) @ np.exp(eta * e)
    bwd = np.asarray(ss_probs) @ np.exp(-eta * e)
    return float(fwd * bwd)


def _stationary_stats(initial_probs, ss_probs, energies) -> TpmStatistics:
    ss = np.asarray(ss_probs, dtype=float)
    return TpmStatistics(
        energies=np.asarray(energies, dtype=float),
        initial_probs=np.asarray(initial_probs, dtype=float),
        conditional=np.tile(ss, (len(ss), 1)),
        beta=0.0,
        n_pulses=0,
    )


@dataclass(frozen=True)
class EtaStarResult:
    eta_star: float
    root: float
    coefficients: tuple
    all_roots: tuple
    routh_column: tuple
    sign_changes: int
    residual: float
    method: str = "cubic"

    def to_dict(self) -> dict:
        return {
            "eta_star": self.eta_star,
            "root": self.root,
            "coefficients": list(self.coefficients),
            "all_roots": [[r.real, r.imag] for r in self.all_roots],
            "routh_column": list(self.routh_column),
            "sign_changes": self.sign_changes,
            "residual": self.residual,
            "method": self.method,
        }


def _routh_first_column(coeffs):
    # first column of the Routh table for a polynomial (highest degree first)
    coeffs = [float(c) for c in coeffs]
    deg = len(coeffs) - 1
    rows = [coeffs[0::2], coeffs[1::2]]
    width = len(rows[0])
    rows = [r + [0.0] * (width - len(r)) for r in rows]
    for _ in range(deg - 1):
        upper, lower = rows[-2], rows[-1]
        if lower[0] == 0:
            lower = lower.copy()
            lower[0] = 1e-300
        nxt = [(lower[0] * upper[k + 1] - upper[0] * lower[k + 1]) / lower[0] for k in range(width - 1)] + [0.0]
        rows.append(nxt)
    return tuple(r[0] for r in rows[: deg + 1])


def _sign_changes(column):
    signs = [math.copysign(1.0, c) for c in column if c != 0]
    return sum(1 for a, b in zip(signs, signs[1:]) if a != b)


def solve_eta_star_cubic(initial_probs, ss_probs, e_bar: float, *, check_tol: float = 1e-9) -> EtaStarResult:
    """Nontrivial root of ``G(eta) = 1`` for the symmetric spectrum ``(-E, 0, E)``.

    Probabilities are ordered by ascending energy. Removing the trivial factor
    from ``G(eta) = 1`` leaves the cubic

        P1 Q3 y^3 + (P1 Q2 + P1 Q3 + P2 Q3) y^2 - (P2 Q1 + P3 Q1 + P3 Q2) y - P3 Q1 = 0

    in ``y = exp(-eta E)`` (``Q`` the stationary populations); its unique
    positive root gives ``eta* = -ln(y) / E``.
    """
    p1, p2, p3 = (float(x) for x in initial_probs)
    q1, q2, q3 = (float(x) for x in ss_probs)
    if e_bar <= 0:
        raise ValueError("e_bar must be positive")
    for probs in ((p1, p2, p3), (q1, q2, q3)):
        if min(probs) < 0 or abs(sum(probs) - 1) > 1e-9:
            raise ValueError("inputs must be probability distributions")
    coeffs = [p1 * q3, p1 * q2 + p1 * q3 + p2 * q3, -(p2 * q1 + p3 * q1 + p3 * q2), -p3 * q1]
    trimmed = list(coeffs)
    while trimmed and trimmed[0] == 0:
        trimmed.pop(0)
    if len(trimmed) < 2:
        raise ValueError("degenerate coefficients: no root can be determined")
    roots = np.roots(trimmed)
    scale = max(1.0, float(np.max(np.abs(roots)))) if len(roots) else 1.0
    positive = [r.real for r in roots if abs(r.imag) <= 1e-10 * scale and r.real > 0]
    if not positive:
        if trimmed[-1] == 0:
            # y = 0 is the only candidate: no finite eta*
            raise ValueError("inconsistent inputs: no positive real root, eta* diverges")
        raise ValueError("inconsistent inputs: no positive real root")
    routh = _routh_first_column(trimmed)
    changes = _sign_changes(routh)
    if len(positive) != 1 or changes > 1:
        raise InvariantViolation(f"expected a unique positive root, found {positive} ({changes} sign changes)")
    y = positive[0]
    energies = (-e_bar, 0.0, e_bar)
    # polish on the cubic itself
    for _ in range(3):
        f = np.polyval(trimmed, y)
        df = np.polyval(np.polyder(trimmed), y)
        if df == 0:
            break
        step = f / df
        if abs(step) > 0.5 * y:
            break
        y -= step
    eta = -math.log(y) / e_bar
    residual = factorized_characteristic(initial_probs, ss_probs, energies, eta) - 1.0
    if abs(residual) > check_tol:
        raise InvariantViolation(f"G(eta*) - 1 = {residual:.3e}")
    return EtaStarResult(
        eta_star=eta,
        root=y,
        coefficients=tuple(coeffs),
        all_roots=tuple(complex(r) for r in roots),
        routh_column=routh,
        sign_changes=changes,
        residual=residual,
    )


def _bisect_convex_root(func, slope0: float, scale: float, *, tol: float = 1e-14, max_doublings: int = 200):
    """Nonzero root of a convex ``func`` with ``func(0) = 0`` and ``func'(0) = slope0``."""
    direction = -1.0 if slope0 > 0 else 1.0
    step = 1e-6 * scale
    inner = direction * step
    while func(inner) >= 0:
        step /= 2
        inner = direction * step
        if step < 1e-15 * scale:
            return 0.0
    outer = 2 * inner
    for _ in range(max_doublings):
        if func(outer) > 0:
            break
        inner, outer = outer, 2 * outer
    else:
        raise ConvergenceError("G(eta) - 1 never changes sign: no finite nontrivial eta*")
    lo, hi = inner, outer
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if func(mid) > 0:
            hi = mid
        else:
            lo = mid
        if abs(hi - lo) <= tol * scale:
            break
    return 0.5 * (lo + hi)


def solve_eta_star_bisection(stats: TpmStatistics, *, slope_tol: float = 1e-12) -> float:
    """Nontrivial root of ``G(eta) = 1`` for arbitrary spectra, by bracketing.

    ``G`` is convex with ``G(0) = 1``, so the second root lies on the side
    where ``G`` first dips below one. Returns 0 when ``G'(0)`` vanishes.
    """
    e_scale = float(np.max(np.abs(stats.energies)))
    if e_scale == 0:
        return 0.0
    slope = -mean_energy_change(stats)
    if abs(slope) * e_scale <= slope_tol * e_scale * e_scale:
        return 0.0
    return _bisect_convex_root(lambda eta: characteristic_function(stats, eta) - 1.0, slope, 1.0 / e_scale)


# -- thermal / geometric decomposition of stationary populations ---------------

def _pair_gaps(energies):
    e1, e2, e3 = energies
    return np.array([(e2 - e3) ** 2, (e3 - e1) ** 2, (e1 - e2) ** 2])


def parametrized_populations(beta_fin: float, lam: float, energies) -> np.ndarray:
    """``P~_j`` proportional to ``exp(-beta_fin E_j) exp(lam * gap_j^2)``, normalized."""
    e = np.asarray(energies, dtype=float)
    logs = -beta_fin * e + lam * _pair_gaps(e)
    w = np.exp(logs - logs.max())
    return w / w.sum()


@dataclass(frozen=True)
class SteadyStateDecomposition:
    beta_fin: float
    lam: float
    populations: np.ndarray
    coherent_residual: np.ndarray = field(default_factory=lambda: np.zeros((3, 3), dtype=complex))
    iterations: int = 0
    residual: float = 0.0


def decompose_steady_state(ss_probs, energies, *, coherences=None, max_iter: int = 200, tol: float = 1e-8):
    """Fit ``(beta_fin, lam)`` so that the parametrized populations reproduce ``ss_probs``.

    Damped Newton on the two log-ratio equations ``ln(P~_1/P~_2)`` and
    ``ln(P~_3/P~_2)``.
    """
    q = np.asarray(ss_probs, dtype=float)
    e = np.asarray(energies, dtype=float)
    if len(q) != 3 or len(e) != 3:
        raise ValueError("decomposition is defined for three levels")
    if np.any(q <= 0):
        raise ValueError("boundary case: a zero population has no logarithm")
    if abs(q.sum() - 1) > 1e-9:
        raise ValueError("populations must sum to 1")
    target = np.log(np.array([q[0] / q[1], q[2] / q[1]]))
    gaps = _pair_gaps(e)
    jac = np.array([
        [-(e[0] - e[1]), gaps[0] - gaps[1]],
        [-(e[2] - e[1]), gaps[2] - gaps[1]],
    ])

    def residual(x):
        p = parametrized_populations(x[0], x[1], e)
        return np.log(np.array([p[0] / p[1], p[2] / p[1]])) - target

    x = np.zeros(2)
    r = residual(x)
    it = 0
    while np.max(np.abs(r)) > tol * 1e-3:
        if it >= max_iter:
            raise ConvergenceError(f"steady-state decomposition did not converge in {max_iter} iterations")
        step = np.linalg.solve(jac, -r)
        damping = 1.0
        while True:
            trial = x + damping * step
            r_trial = residual(trial)
            if np.linalg.norm(r_trial) < np.linalg.norm(r) or damping < 1e-6:
                break
            damping *= 0.5
        x, r = trial, r_trial
        it += 1
    pops = parametrized_populations(x[0], x[1], e)
    coherent = np.zeros((3, 3), dtype=complex) if coherences is None else np.asarray(coherences, dtype=complex)
    return SteadyStateDecomposition(
        beta_fin=float(x[0]),
        lam=float(x[1]),
        populations=pops,
        coherent_residual=coherent,
        iterations=it,
        residual=float(np.max(np.abs(pops - q))),
    )


def _z_sym(e_bar, b):
    return 1.0 + 2.0 * math.cosh(e_bar * b)


def ness_residual(eta: float, beta: float, beta_fin: float, lam: float, e_bar: float) -> float:
    """Right minus left side of the stationary-regime condition on ``eta``.

    For the spectrum ``(-E, 0, E)`` and ``C = exp(lam E^2)``:

        C Z_b Z_f + C (3 - Z_{b+f}) + (C^4 - C) Z_b
            = C (Z_{b-f-2 eta} + Z_{f+eta}) + C^4 Z_{b-eta}

    where ``Z_x = sum_k exp(-k E x)``. Its zeros are exactly those of
    ``G(eta) - 1`` (the residual is a positive multiple of it).
    """
    c = math.exp(lam * e_bar * e_bar)
    c4 = c**4
    z_b = _z_sym(e_bar, beta)
    z_f = _z_sym(e_bar, beta_fin)
    lhs = c * z_b * z_f + c * (3 - _z_sym(e_bar, beta + beta_fin)) + (c4 - c) * z_b
    rhs = c * (_z_sym(e_bar, beta - beta_fin - 2 * eta) + _z_sym(e_bar, beta_fin + eta)) + c4 * _z_sym(e_bar, beta - eta)
    return rhs - lhs


def solve_ness_condition(beta: float, beta_fin: float, lam: float, e_bar: float, *, slope_tol: float = 1e-12) -> float:
    """Nontrivial ``eta*`` of the stationary condition; 0 if only the trivial root exists."""
    if e_bar <= 0:
        raise ValueError("e_bar must be positive")
    h = 1e-6 / e_bar
    scale = 1.0 / e_bar
    f = lambda eta: ness_residual(eta, beta, beta_fin, lam, e_bar)
    norm = abs(f(h)) + abs(f(-h)) + 1e-300
    slope = (f(h) - f(-h)) / (2 * h)
    if abs(slope) * h <= slope_tol * max(norm, 1.0):
        return 0.0
    eta = _bisect_convex_root(f, slope, scale)
    if eta == 0.0:
        return 0.0
    # Newton polish with a central-difference derivative
    for _ in range(3):
        d = 1e-7 * scale
        df = (f(eta + d) - f(eta - d)) / (2 * d)
        if df == 0:
            break
        step = f(eta) / df
        if abs(step) > 1e-6 * scale:
            break
        eta -= step
    return eta
