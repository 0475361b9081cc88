"""Command-line front end.

    demon-sim <dynamics|fluctuation|bounds|phase-diagram|eta-star> --config <path> [--out <dir>] [--plots]

The config is a single JSON document, for example::

    {
      "units": "Hz",
      "hamiltonian": {"kind": "NV", "delta": 2.87e9, "zeeman": 1e8},
      "p_absorb": 1.0,
      "beta": {"scaled": 0.297},
      "n_pulses_max": 12
    }

``hamiltonian`` may also be a list to run several kinds. With ``"units": "Hz"``
the frequencies ``delta``, ``zeeman`` and ``omega`` are multiplied by 2 pi;
``gamma_rate`` is a decay rate in 1/s and is never rescaled. ``beta`` is
either a number in s/rad or ``{"scaled": x}``, meaning ``x / E_max`` with
``E_max`` the highest eigenvalue of the Hamiltonian.

Exit codes: 0 success, 2 invariant violation, 3 config error, 4 IO error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .demon import DEFAULT_GAMMA_RATE, DEFAULT_T_LASER, DEFAULT_TAU, DemonConfig, build_block, steady_state
from .errors import ConfigError, ConvergenceError, DemonSimError, InvariantViolation, NonUniqueSteadyState
from .fluctuation import (
    _stationary_stats,
    decompose_steady_state,
    efficacy_analytic_nv,
    efficacy_asymptotic,
    efficacy_numeric,
    solve_eta_star_bisection,
    solve_eta_star_cubic,
    solve_ness_condition,
)
from .qutrit import HamiltonianSpec, thermal_state
from .statistics import characteristic_function, conditional_probabilities, tpm_statistics
from .trajectories import ENTROPY_BUDGET, bounds_report, default_workers, extraction_phase_diagram

EXIT_OK = 0
EXIT_INVARIANT = 2
EXIT_CONFIG = 3
EXIT_IO = 4

CLI_SUT_TOL = 1e-8
NESS_TOL = 1e-8
DEFAULT_DELTA_HZ = 2.87e9
DEFAULT_ZEEMAN_HZ = 100e6
TWO_PI = 2 * math.pi


@dataclass
class RunConfig:
    demons: list  # one DemonConfig per requested Hamiltonian
    beta_spec: object
    n_pulses_max: int
    output_dir: Path
    emit_plots: bool = False
    entropy_budget: int = ENTROPY_BUDGET
    grid: int = 50
    eta_method: str = "cubic"

    def beta_for(self, demon) -> float:
        if isinstance(self.beta_spec, dict):
            e_max = float(np.max(demon.eigen.energies))
            if e_max <= 0:
                raise ConfigError("scaled beta needs a positive highest energy")
            return float(self.beta_spec["scaled"]) / e_max
        return float(self.beta_spec)


def fmt(x) -> str:
    if x is None:
        return "NA"
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % float(x)


def _number(data, key, default=None, *, required=False):
    if key not in data:
        if required:
            raise ConfigError(f"missing required field {key!r}")
        return default
    value = data[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"field {key!r} must be a number")
    if not math.isfinite(value):
        raise ConfigError(f"field {key!r} must be finite")
    return float(value)


def _hamiltonian(data, scale) -> HamiltonianSpec:
    if not isinstance(data, dict):
        raise ConfigError("hamiltonian entries must be objects")
    kind = data.get("kind")
    if kind == "NV":
        delta = _number(data, "delta", None)
        delta = TWO_PI * DEFAULT_DELTA_HZ if delta is None else delta * scale
        zeeman = _number(data, "zeeman", None)
        zeeman = TWO_PI * DEFAULT_ZEEMAN_HZ if zeeman is None else zeeman * scale
        return HamiltonianSpec("NV", delta=delta, zeeman=zeeman)
    if kind == "MW":
        omega = _number(data, "omega", required=True)
        return HamiltonianSpec("MW", rabi=omega * scale)
    raise ConfigError(f"unknown Hamiltonian kind {kind!r}")


def parse_config(data: dict, output_dir=".", emit_plots=False) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    units = data.get("units", "rad/s")
    if units == "Hz":
        scale = TWO_PI
    elif units == "rad/s":
        scale = 1.0
    else:
        raise ConfigError(f"units must be 'Hz' or 'rad/s', got {units!r}")
    hams = data.get("hamiltonian")
    if hams is None:
        raise ConfigError("missing required field 'hamiltonian'")
    if isinstance(hams, dict):
        hams = [hams]
    if not isinstance(hams, list) or not hams:
        raise ConfigError("'hamiltonian' must be an object or a non-empty list")
    p_absorb = _number(data, "p_absorb", required=True)
    tau = _number(data, "tau", DEFAULT_TAU)
    t_laser = _number(data, "t_laser", DEFAULT_T_LASER)
    gamma_rate = _number(data, "gamma_rate", DEFAULT_GAMMA_RATE)
    demons = [
        DemonConfig(_hamiltonian(h, scale), p_absorb=p_absorb, tau=tau, t_laser=t_laser, gamma_rate=gamma_rate)
        for h in hams
    ]
    beta = data.get("beta")
    if isinstance(beta, dict):
        if set(beta) != {"scaled"}:
            raise ConfigError("beta object must have exactly the key 'scaled'")
        _number(beta, "scaled", required=True)
    elif beta is None:
        raise ConfigError("missing required field 'beta'")
    else:
        _number(data, "beta", required=True)
    n_max = data.get("n_pulses_max", 12)
    if isinstance(n_max, bool) or not isinstance(n_max, int) or n_max < 0:
        raise ConfigError("n_pulses_max must be an integer >= 0")
    budget = data.get("entropy_budget", ENTROPY_BUDGET)
    if isinstance(budget, bool) or not isinstance(budget, int) or budget < 0:
        raise ConfigError("entropy_budget must be an integer >= 0")
    grid = data.get("grid", 50)
    if isinstance(grid, bool) or not isinstance(grid, int) or grid < 1:
        raise ConfigError("grid must be an integer >= 1")
    method = data.get("eta_star_method", "cubic")
    if method not in ("cubic", "bisection"):
        raise ConfigError("eta_star_method must be 'cubic' or 'bisection'")
    return RunConfig(
        demons=demons,
        beta_spec=beta,
        n_pulses_max=n_max,
        output_dir=Path(output_dir),
        emit_plots=emit_plots,
        entropy_budget=budget,
        grid=grid,
        eta_method=method,
    )


def load_config(path, output_dir=".", emit_plots=False) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(data, output_dir=output_dir, emit_plots=emit_plots)


# -- output helpers -------------------------------------------------------------

class Outputs:
    """Collects file contents and writes them once the command has finished."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.files: dict[str, str] = {}

    def csv(self, name, header, rows):
        lines = [",".join(header)]
        lines += [",".join(fmt(v) for v in row) for row in rows]
        self.files[name] = "\n".join(lines) + "\n"

    def json(self, name, payload):
        self.files[name] = json.dumps(payload, indent=2, sort_keys=True) + "\n"

    def text(self, name, body):
        self.files[name] = body

    def flush(self):
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OSError(f"cannot create output directory {self.out_dir}: {exc.strerror or exc}") from exc
        for name, body in self.files.items():
            path = self.out_dir / name
            try:
                with open(path, "w", encoding="utf-8", newline="\n") as fh:
                    fh.write(body)
            except OSError as exc:
                raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
        return [self.out_dir / n for n in self.files]


def _pmap(func, items):
    workers = default_workers()
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def _tag(cfg: DemonConfig) -> str:
    return cfg.hamiltonian.kind.lower()


def _gnuplot(csv_name, title, xlabel, ylabel, series):
    lines = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        f"set title '{title}'",
        f"set xlabel '{xlabel}'",
        f"set ylabel '{ylabel}'",
    ]
    plots = [f"'{csv_name}' {spec}" for spec in series]
    lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


# -- commands -------------------------------------------------------------------

def cmd_dynamics(run: RunConfig) -> int:
    out = Outputs(run.output_dir)
    for cfg in run.demons:
        demon = build_block(cfg)

        def curve(n, demon=demon):
            return conditional_probabilities(demon, demon.eigen, n)

        rows = []
        for n, cond in zip(range(run.n_pulses_max + 1), _pmap(curve, range(run.n_pulses_max + 1))):
            for i in range(3):
                for j in range(3):
                    rows.append((n, i + 1, j + 1, cond[i, j]))
        name = f"dynamics_{_tag(cfg)}.csv"
        out.csv(name, ("n_pulses", "i", "j", "p"), rows)
        if run.emit_plots:
            series = [f"every 9::{3 * i + j} using 1:4 with linespoints title 'P({j + 1}|{i + 1})'"
                      for i in range(3) for j in range(3)]
            out.text(f"dynamics_{_tag(cfg)}.gp", _gnuplot(name, "conditional probabilities", "N_L", "P(j|i)", series))
    out.flush()
    return EXIT_OK


def _gamma_inf(demon, thermal):
    try:
        return efficacy_asymptotic(steady_state(demon), thermal)
    except NonUniqueSteadyState:
        return None


def cmd_fluctuation(run: RunConfig) -> int:
    out = Outputs(run.output_dir)
    status = EXIT_OK
    for cfg in run.demons:
        demon = build_block(cfg)
        thermal = thermal_state(demon.eigen, run.beta_for(demon))
        g_inf = _gamma_inf(demon, thermal)

        def row(n, demon=demon, thermal=thermal, cfg=cfg):
            g = characteristic_function(tpm_statistics(demon, thermal, n), thermal.beta)
            gamma = efficacy_numeric(demon, thermal, n)
            analytic = None
            if cfg.hamiltonian.kind == "NV":
                analytic = efficacy_analytic_nv(DemonConfig(**{**cfg.__dict__, "n_pulses": n}), thermal)
            return (n, g, gamma, g_inf, analytic)

        rows = _pmap(row, range(run.n_pulses_max + 1))
        worst = max(abs(r[1] - r[2]) for r in rows)
        if worst > CLI_SUT_TOL:
            print(f"SUT identity violated for {cfg.hamiltonian.kind}: |G - gamma| = {worst:.3e}", file=sys.stderr)
            status = EXIT_INVARIANT
        name = f"fluctuation_{_tag(cfg)}.csv"
        out.csv(name, ("n_pulses", "G_beta", "gamma", "gamma_inf", "gamma_analytic"), rows)
        if run.emit_plots:
            out.text(f"fluctuation_{_tag(cfg)}.gp", _gnuplot(
                name, "G(beta) and efficacy", "N_L", "value",
                ["using 1:2 with points", "using 1:3 with lines", "using 1:4 with lines dashtype 2"],
            ))
    out.flush()
    return status


def cmd_bounds(run: RunConfig) -> int:
    out = Outputs(run.output_dir)
    status = EXIT_OK
    for cfg in run.demons:
        demon = build_block(cfg)
        beta = run.beta_for(demon)
        reports = _pmap(
            lambda n, cfg=cfg, demon=demon: bounds_report(cfg, beta, n, entropy_budget=run.entropy_budget, demon=demon),
            range(run.n_pulses_max + 1),
        )
        bad = [r.n_pulses for r in reports if not r.satisfied]
        if bad:
            print(f"extraction bound violated for {cfg.hamiltonian.kind} at n = {bad}", file=sys.stderr)
            status = EXIT_INVARIANT
        name = f"bounds_{_tag(cfg)}.csv"
        out.csv(
            name,
            ("n", "beta_dE", "neg_ln_gamma", "neg_entropy"),
            [(r.n_pulses, r.beta_delta_e, r.neg_ln_gamma, r.neg_entropy) for r in reports],
        )
        if run.emit_plots:
            out.text(f"bounds_{_tag(cfg)}.gp", _gnuplot(
                name, "extraction bounds", "N_L", "value",
                ["using 1:2 with linespoints", "using 1:3 with lines", "using 1:4 with lines"],
            ))
    out.flush()
    return status


def cmd_phase_diagram(run: RunConfig) -> int:
    out = Outputs(run.output_dir)
    for cfg in run.demons:
        demon = build_block(cfg)
        beta = run.beta_for(demon)
        diagram = extraction_phase_diagram(demon.eigen, beta, run.grid)
        tag = _tag(cfg)
        out.csv(f"phase_diagram_{tag}.csv", ("p_a_inf", "p_b_inf", "beta_dE", "class"), diagram.rows)
        out.csv(f"phase_zero_line_{tag}.csv", ("p_a_inf", "p_b_inf"), diagram.zero_line)
        out.csv(f"phase_thermal_line_{tag}.csv", ("beta_prime", "p_a_inf", "p_b_inf"), diagram.thermal_line)
        model_point = None
        try:
            pops = demon.eigen.populations(steady_state(demon))
            model_point = [float(pops[0]), float(pops[2])]
        except NonUniqueSteadyState:
            pass
        out.json(f"phase_summary_{tag}.json", {
            "beta": beta,
            "energies": [float(e) for e in diagram.energies],
            "initial_mean_energy": diagram.initial_mean_energy,
            "unital_point": list(diagram.unital_point),
            "model_point": model_point,
        })
        if run.emit_plots:
            lines = [
                "set datafile separator ','",
                "set xlabel 'p_a_inf (lowest level)'",
                "set ylabel 'p_b_inf (highest level)'",
                "set palette defined (-1 'blue', 0 'white', 1 'red')",
                f"plot 'phase_diagram_{tag}.csv' every ::1 using 1:2:3 with points pt 5 palette notitle, \\",
                f"     'phase_zero_line_{tag}.csv' every ::1 using 1:2 with lines lw 2 title 'zero line', \\",
                f"     'phase_thermal_line_{tag}.csv' every ::1 using 2:3 with lines dashtype 2 title 'thermal'",
            ]
            out.text(f"phase_diagram_{tag}.gp", "\n".join(lines) + "\n")
    out.flush()
    return EXIT_OK


def _eta_star_payload(run: RunConfig, cfg: DemonConfig):
    demon = build_block(cfg)
    beta = run.beta_for(demon)
    thermal = thermal_state(demon.eigen, beta)
    energies = demon.eigen.energies
    ss_probs = demon.eigen.populations(steady_state(demon))
    ss_probs = np.clip(ss_probs, 0.0, None)
    ss_probs = ss_probs / ss_probs.sum()
    payload = {
        "kind": cfg.hamiltonian.kind,
        "beta": beta,
        "energies": [float(e) for e in energies],
        "initial_probs": [float(p) for p in thermal.probs],
        "ss_probs": [float(p) for p in ss_probs],
    }
    symmetric = abs(energies[0] + energies[2]) <= 1e-12 * abs(energies[2]) and abs(energies[1]) <= 1e-12 * abs(energies[2])
    method = run.eta_method
    if method == "cubic" and not symmetric:
        raise ConfigError("the cubic eta* route needs the symmetric MW spectrum; set eta_star_method to 'bisection'")
    payload["method"] = method
    if method == "cubic":
        e_bar = float(energies[2])
        result = solve_eta_star_cubic(thermal.probs, ss_probs, e_bar)
        payload.update(result.to_dict())
        try:
            dec = decompose_steady_state(ss_probs, energies)
            ness = solve_ness_condition(beta, dec.beta_fin, dec.lam, e_bar)
            payload["ness"] = {
                "beta_fin": dec.beta_fin,
                "lambda": dec.lam,
                "eta_star": ness,
                "agrees": abs(ness - result.eta_star) <= NESS_TOL * max(1.0, abs(result.eta_star)),
            }
        except (ValueError, ConvergenceError) as exc:
            payload["ness"] = {"error": str(exc)}
    else:
        stats = _stationary_stats(thermal.probs, ss_probs, energies)
        payload["eta_star"] = solve_eta_star_bisection(stats)
    return payload


def cmd_eta_star(run: RunConfig) -> int:
    out = Outputs(run.output_dir)
    status = EXIT_OK
    for cfg in run.demons:
        try:
            payload = _eta_star_payload(run, cfg)
        except (ConvergenceError, NonUniqueSteadyState, InvariantViolation) as exc:
            payload = {"kind": cfg.hamiltonian.kind, "eta_star": None, "error": str(exc)}
            status = EXIT_INVARIANT
        else:
            if payload.get("ness", {}).get("agrees") is False:
                status = EXIT_INVARIANT
        out.json(f"eta_star_{_tag(cfg)}.json", payload)
    out.flush()
    return status


COMMANDS = {
    "dynamics": cmd_dynamics,
    "fluctuation": cmd_fluctuation,
    "bounds": cmd_bounds,
    "phase-diagram": cmd_phase_diagram,
    "eta-star": cmd_eta_star,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="demon-sim", description="Dissipative qutrit demon simulations.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", default=".", help="output directory (default: current directory)")
    parser.add_argument("--plots", action="store_true", help="also write gnuplot scripts")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run = load_config(args.config, output_dir=args.out, emit_plots=args.plots)
        return COMMANDS[args.command](run)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (InvariantViolation, ConvergenceError, NonUniqueSteadyState, DemonSimError) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
