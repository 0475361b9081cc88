"""Measurement-record trajectories, their Shannon entropy, and extraction bounds.

A trajectory is the sequence of POVM outcomes ``k_1 .. k_n`` (``k`` in
1..4, where 1..3 are absorption with the spin in ``|-1>, |0>, |+1>`` and 4 is
no absorption). Its probability is the trace of the branch superoperators
applied in order to the initial state.

Enumeration is breadth-first over whole levels, with each level held as a
stacked array of vectorized prefix states. Blocks that would exceed
``CHUNK_ROWS`` states are split and handled depth-first, so memory stays
bounded while each state is still produced by a single matrix product from
its parent.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, Literal

import numpy as np

from .demon import DemonConfig, DemonMap, build_block
from .errors import BudgetExceeded, ConfigError
from .fluctuation import efficacy_numeric
from .linops import devectorize, trace_row, vectorize
from .qutrit import EigenSystem, ThermalState, thermal_state

DEFAULT_MAX_PULSES = 12
ENTROPY_BUDGET = 10
CHUNK_ROWS = 4**8
PRUNE_THRESHOLD = 1e-15
SUM_TOL = 1e-10
BOUND_TOL = 1e-8
N_OUTCOMES = 4


@dataclass(frozen=True)
class TrajectoryRecord:
    outcomes: tuple  # k_1 .. k_n, each in 1..4
    probability: float


def decode_outcomes(code: int, n: int) -> tuple:
    """Outcome sequence of the trajectory with index ``code`` (``k_1`` most significant)."""
    out = [0] * n
    for pos in range(n - 1, -1, -1):
        code, k = divmod(code, N_OUTCOMES)
        out[pos] = k + 1
    return tuple(out)


@dataclass
class TrajectorySet:
    """Result of an enumeration, stored as arrays; iterate for records."""

    n_pulses: int
    codes: np.ndarray
    probabilities: np.ndarray
    pruned_mass: float = 0.0
    final_states: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.codes)

    def __iter__(self) -> Iterator[TrajectoryRecord]:
        for code, p in zip(self.codes.tolist(), self.probabilities.tolist()):
            yield TrajectoryRecord(decode_outcomes(code, self.n_pulses), p)

    def __getitem__(self, idx: int) -> TrajectoryRecord:
        return TrajectoryRecord(decode_outcomes(int(self.codes[idx]), self.n_pulses), float(self.probabilities[idx]))

    @property
    def total_probability(self) -> float:
        return math.fsum(self.probabilities.tolist())

    @property
    def pruned(self) -> bool:
        return self.pruned_mass > 0 or len(self.codes) < N_OUTCOMES**self.n_pulses


def _level_step(ops, states):
    # (M, d) prefix states -> (4M, d) children, child index = parent * 4 + k
    children = np.einsum("kab,mb->mka", ops, states)
    return children.reshape(-1, ops.shape[1])


def _walk(ops, t, final_rows, states, codes, remaining, prune, want_states, out):
    """Depth-first over chunks, breadth-first inside each chunk.

    ``t`` is the trace row and ``final_rows[k] = t @ ops[k]``, so the last
    level needs only traces.
    """
    if remaining == 1:
        child_codes = codes[:, None] * N_OUTCOMES + np.arange(N_OUTCOMES)
        if want_states:
            children = _level_step(ops, states)
            out.append((child_codes, children @ t, children))
        else:
            out.append((child_codes, states @ final_rows.T, None))
        return 0.0
    step = max(1, CHUNK_ROWS // N_OUTCOMES)
    if len(states) > step:
        pruned = 0.0
        for start in range(0, len(states), step):
            pruned += _walk(
                ops, t, final_rows, states[start:start + step], codes[start:start + step],
                remaining, prune, want_states, out,
            )
        return pruned
    children = _level_step(ops, states)
    child_codes = (codes[:, None] * N_OUTCOMES + np.arange(N_OUTCOMES)).ravel()
    pruned = 0.0
    if prune is not None:
        mass = (children @ t).real
        keep = mass >= prune
        pruned = math.fsum(mass[~keep].tolist())
        children, child_codes = children[keep], child_codes[keep]
        if len(children) == 0:
            return pruned
    return pruned + _walk(ops, t, final_rows, children, child_codes, remaining - 1, prune, want_states, out)


def _enumerate(ops, vec0, n, *, prune=None, want_states=False, workers=1):
    """Trace of every branch product applied to ``vec0``.

    Returns ``(codes, values, pruned_mass, states)``; ``values`` are complex.
    The four depth-1 subtrees are independent and merged in fixed order.
    """
    ops = np.asarray(ops)
    d = ops.shape[1]
    t = trace_row(math.isqrt(d)).astype(complex)
    final_rows = np.stack([t @ op for op in ops])

    def subtree(k):
        out = []
        root = (ops[k] @ vec0)[None, :]
        code = np.array([k], dtype=np.int64)
        if n == 1:
            out.append((code, root @ t, root if want_states else None))
            return out, 0.0
        if prune is not None:
            mass = float((root @ t).real[0])
            if mass < prune:
                return out, mass
        pruned = _walk(ops, t, final_rows, root, code, n - 1, prune, want_states, out)
        return out, pruned

    if workers > 1:
        with ThreadPoolExecutor(max_workers=min(workers, N_OUTCOMES)) as pool:
            parts = list(pool.map(subtree, range(N_OUTCOMES)))
    else:
        parts = [subtree(k) for k in range(N_OUTCOMES)]

    code_blocks, value_blocks, state_blocks = [], [], []
    pruned_mass = 0.0
    for out, pruned in parts:
        pruned_mass += pruned
        for codes, values, states in out:
            code_blocks.append(codes.ravel())
            value_blocks.append(values.ravel())
            if want_states:
                state_blocks.append(states.reshape(-1, d))
    if not code_blocks:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=complex), pruned_mass, None
    codes = np.concatenate(code_blocks)
    values = np.concatenate(value_blocks)
    states = np.concatenate(state_blocks) if want_states else None
    return codes, values, pruned_mass, states


def _initial_vector(rho):
    if isinstance(rho, ThermalState):
        rho = rho.rho
    return vectorize(np.asarray(rho, dtype=complex))


def default_workers() -> int:
    env = os.environ.get("DEMON_SIM_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"DEMON_SIM_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def enumerate_trajectories(
    demon: DemonMap,
    rho,
    n: int,
    *,
    max_pulses: int = DEFAULT_MAX_PULSES,
    prune: float | bool | None = None,
    return_states: bool = False,
    workers: int = 1,
) -> TrajectorySet:
    """All ``4**n`` outcome records starting from ``rho`` (a state or :class:`ThermalState`).

    ``prune=True`` (or a threshold) drops prefixes whose probability falls
    below the threshold; the discarded mass is reported as ``pruned_mass``.
    ``return_states`` keeps the unnormalized final state of each trajectory.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if prune is True:
        prune = PRUNE_THRESHOLD
    elif prune is False:
        prune = None
    if n > max_pulses and prune is None:
        raise BudgetExceeded(
            f"{N_OUTCOMES}**{n} trajectories exceed the cap n <= {max_pulses}; raise max_pulses or enable pruning"
        )
    codes, values, pruned_mass, states = _enumerate(
        np.stack(demon.branch_supers), _initial_vector(rho), n, prune=prune, want_states=return_states, workers=workers
    )
    probs = values.real.copy()
    if probs.size and probs.min() < -SUM_TOL:
        raise ValueError(f"negative trajectory probability {probs.min():.3e}")
    np.clip(probs, 0.0, 1.0, out=probs)
    if states is not None:
        states = np.array([devectorize(s) for s in states])
    return TrajectorySet(n_pulses=n, codes=codes, probabilities=probs, pruned_mass=pruned_mass, final_states=states)


def backward_efficacy(demon: DemonMap, thermal: ThermalState, n: int, *, max_pulses: int = DEFAULT_MAX_PULSES) -> float:
    """``gamma`` as a sum over trajectories of ``Tr[B_{k_1}^dagger ... B_{k_n}^dagger col(rho_th)]``."""
    if n == 0:
        return 1.0
    if n > max_pulses:
        raise BudgetExceeded(f"n = {n} exceeds the trajectory cap {max_pulses}")
    adjoints = np.stack([k.conj().T for k in demon.branch_supers])
    _, values, _, _ = _enumerate(adjoints, _initial_vector(thermal), n)
    return math.fsum(values.real.tolist())


def shannon_entropy(records) -> float:
    """``-sum p ln p`` in nats, with ``0 ln 0 = 0``."""
    if isinstance(records, TrajectorySet):
        p = records.probabilities
    else:
        p = np.array([r.probability for r in records], dtype=float)
    total = math.fsum(p.tolist())
    if abs(total - 1) > BOUND_TOL:
        raise ValueError(f"probabilities sum to {total}, not 1")
    p = p[p > 0]
    return max(0.0, math.fsum((-p * np.log(p)).tolist()))


@dataclass(frozen=True)
class BoundsReport:
    beta_delta_e: float
    neg_ln_gamma: float
    neg_entropy: float | None  # None when the enumeration budget is exceeded
    n_pulses: int
    gamma: float = 1.0

    @property
    def bound(self) -> float:
        if self.neg_entropy is None:
            return self.neg_ln_gamma
        return max(self.neg_ln_gamma, self.neg_entropy)

    @property
    def satisfied(self) -> bool:
        return self.beta_delta_e >= self.bound - BOUND_TOL

    @property
    def tighter(self) -> Literal["ln_gamma", "entropy", "unknown"]:
        if self.neg_entropy is None:
            return "unknown"
        return "ln_gamma" if self.neg_ln_gamma >= self.neg_entropy else "entropy"


def mean_energy_change(demon: DemonMap, thermal: ThermalState, n: int) -> float:
    """``<E>_n - <E>_0`` from the forward map."""
    final = devectorize(demon.power(n) @ vectorize(thermal.rho))
    h = demon.hamiltonian
    return float(np.real(np.trace(h @ final)) - np.real(np.trace(h @ thermal.rho)))


def bounds_report(
    cfg: DemonConfig,
    beta: float,
    n: int,
    *,
    entropy_budget: int = ENTROPY_BUDGET,
    demon: DemonMap | None = None,
) -> BoundsReport:
    """``beta <dE>``, ``-ln gamma`` and (within budget) ``-<S>`` after ``n`` pulses."""
    demon = build_block(cfg) if demon is None else demon
    thermal = thermal_state(demon.eigen, beta)
    gamma = efficacy_numeric(demon, thermal, n)
    if gamma <= 0:
        raise ValueError(f"efficacy {gamma} is not positive")
    bde = beta * mean_energy_change(demon, thermal, n)
    if n == 0:
        neg_s = 0.0
    elif n <= entropy_budget:
        neg_s = -shannon_entropy(enumerate_trajectories(demon, thermal, n, max_pulses=entropy_budget))
    else:
        neg_s = None
    return BoundsReport(beta_delta_e=bde, neg_ln_gamma=-math.log(gamma), neg_entropy=neg_s, n_pulses=n, gamma=gamma)


# -- asymptotic extraction phase diagram ---------------------------------------

PhaseClass = Literal["extraction", "zero-line", "injection"]
ZERO_LINE_RTOL = 1e-9


@dataclass(frozen=True)
class PhasePoint:
    p_a: float  # population of the lowest level
    p_b: float  # population of the highest level
    beta_delta_e: float
    classification: PhaseClass


@dataclass(frozen=True)
class PhaseDiagram:
    beta: float
    energies: np.ndarray
    initial_mean_energy: float
    points: tuple
    zero_line: tuple  # ((p_a, p_b), ...) along sum_j p_j E_j = <E>_0, inside the simplex
    unital_point: tuple
    thermal_line: tuple  # ((beta', p_a, p_b), ...)

    @property
    def rows(self):
        return [(p.p_a, p.p_b, p.beta_delta_e, p.classification) for p in self.points]


def _classify(value: float, scale: float) -> PhaseClass:
    if abs(value) <= ZERO_LINE_RTOL * scale:
        return "zero-line"
    return "extraction" if value < 0 else "injection"


def phase_point(es: EigenSystem, beta: float, p_a: float, p_b: float) -> PhasePoint:
    """``beta (sum_j p_j E_j - <E>_0)`` for asymptotic populations ``(p_a, p_mid, p_b)``."""
    if len(es.energies) != 3:
        raise ValueError("phase diagram is defined for three levels")
    p_mid = 1.0 - p_a - p_b
    for p in (p_a, p_b, p_mid):
        if p < -1e-12 or p > 1 + 1e-12:
            raise ValueError(f"point ({p_a}, {p_b}) lies off the probability simplex")
    e = es.energies
    e0 = thermal_state(es, beta).mean_energy
    value = beta * (p_a * e[0] + p_mid * e[1] + p_b * e[2] - e0)
    scale = abs(beta) * float(np.max(np.abs(e))) + 1e-300
    return PhasePoint(p_a, p_b, value, _classify(value, scale))


def _zero_line(e, e0):
    # intersect p_a E1 + p_b E3 + (1 - p_a - p_b) E2 = e0 with the simplex edges
    c_a, c_b, rhs = e[0] - e[1], e[2] - e[1], e0 - e[1]
    candidates = []
    if c_b != 0:
        candidates.append((0.0, rhs / c_b))
    if c_a != 0:
        candidates.append((rhs / c_a, 0.0))
    if c_a != c_b:
        # p_b = 1 - p_a
        pa = (rhs - c_b) / (c_a - c_b)
        candidates.append((pa, 1.0 - pa))
    pts = []
    for pa, pb in candidates:
        if -1e-12 <= pa <= 1 + 1e-12 and -1e-12 <= pb <= 1 + 1e-12 and pa + pb <= 1 + 1e-12:
            pa, pb = min(max(pa, 0.0), 1.0), min(max(pb, 0.0), 1.0)
            if not any(abs(pa - qa) < 1e-12 and abs(pb - qb) < 1e-12 for qa, qb in pts):
                pts.append((pa, pb))
    return tuple(sorted(pts))


def extraction_phase_diagram(es: EigenSystem, beta: float, grid: int = 50, thermal_points: int = 201) -> PhaseDiagram:
    """Classify asymptotic populations on a simplex grid of resolution ``1/grid``."""
    if grid < 1:
        raise ValueError("grid must be >= 1")
    e = np.asarray(es.energies, dtype=float)
    e0 = thermal_state(es, beta).mean_energy
    points = []
    for i in range(grid + 1):
        for j in range(grid + 1 - i):
            points.append(phase_point(es, beta, i / grid, j / grid))
    spread = float(np.max(e) - np.min(e))
    thermal_line = []
    if spread > 0:
        for x in np.linspace(-20.0, 20.0, thermal_points):
            b = float(x) / spread
            probs = thermal_state(es, b).probs
            thermal_line.append((b, float(probs[0]), float(probs[2])))
    return PhaseDiagram(
        beta=beta,
        energies=e.copy(),
        initial_mean_energy=e0,
        points=tuple(points),
        zero_line=_zero_line(e, e0),
        unital_point=(1 / 3, 1 / 3),
        thermal_line=tuple(thermal_line),
    )
