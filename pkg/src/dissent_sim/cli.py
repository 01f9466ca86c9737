"""Command-line front end.

Every subcommand builds one or more tables and writes them as CSV (with a
'#' provenance header) or JSON. Table rows are computed in a thread pool
capped by DISSENT_SIM_THREADS and always assembled in input order, so the
output does not depend on the thread count.

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from . import __version__
from .model_core import ConvergenceError, DomainError, squeezing_from_detuning, squeezing_from_z, xi_ideal

SIG_DIGITS = 12


# ---------------------------------------------------------------------------
# options and configuration
# ---------------------------------------------------------------------------

OPTION_HELP = {
    "z": "squeezing parameter Z = 1/(|mu| - |nu|)",
    "delta": "probe detuning (same units as --omega)",
    "omega": "Larmor frequency",
    "d": "optical depth",
    "gamma_d_add": "additional dephasing in units of Gamma",
    "x_pump": "pump parameter",
    "x_repump": "repump parameter",
    "n": "atoms per ensemble (oracle) or atom number (time-evolution)",
    "t_end": "final time in units of 1/Gamma",
    "kl": "values of k_L * L",
    "r_over_l": "ensemble separation R in units of L (0 disables the inter-ensemble column)",
}

# subcommand -> {option: default}; None means "required or derived"
COMMAND_OPTIONS = {
    "steady": {"z": None, "delta": None, "omega": None, "d": "30", "gamma_d_add": "0", "x_pump": "0"},
    "time-evolution": {"z": "2", "d": "30", "gamma_d_add": "0", "x_pump": "0", "t_end": "1", "n": "10000"},
    "figure": {"d": "30"},
    "oracle": {"z": "2", "d": "30", "gamma_d_add": "0", "x_pump": "0", "n": "2,3,4"},
    "rates": {"kl": "50,100", "r_over_l": "0"},
    "multilevel": {"d": "30", "gamma_d_add": "0", "x_pump": None, "x_repump": "0", "t_end": "1000"},
    "cesium": {"delta": "700"},
    "sweep": {"z": "1:10:19", "d": "30", "gamma_d_add": "0", "x_pump": "0"},
}

FIGURES = ("fig3", "fig4", "fig6", "fig7")


def parse_config_text(text: str, valid: Sequence[str]) -> dict:
    """key = value lines with '#' comments; keys may use '-' or '_'."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DomainError(f"config line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in valid:
            raise DomainError(f"config line {lineno}: unknown key {key!r}; valid keys: {', '.join(sorted(valid))}")
        out[key] = value
    return out


def _number(text: str, name: str) -> float:
    try:
        v = float(text)
    except (TypeError, ValueError):
        raise DomainError(f"--{name.replace('_', '-')} expects a number, got {text!r}") from None
    if not math.isfinite(v):
        raise DomainError(f"--{name.replace('_', '-')} must be finite")
    return v


def parse_values(text: str, name: str) -> list[float]:
    """Comma list '1,2,5' or inclusive linear range 'start:stop:count'."""
    text = str(text).strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise DomainError(f"--{name}: range must be start:stop:count")
        a, b = _number(parts[0], name), _number(parts[1], name)
        count = int(_number(parts[2], name))
        if count < 1:
            raise DomainError(f"--{name}: count must be >= 1")
        return [float(v) for v in np.linspace(a, b, count)]
    return [_number(p, name) for p in text.split(",") if p.strip()]


@dataclass
class RunConfig:
    experiment: str
    params: dict
    out: Optional[str]
    fmt: str
    argv: list

    def value(self, key: str) -> float:
        raw = self.params.get(key)
        if raw is None:
            raise DomainError(f"--{key.replace('_', '-')} is required")
        return _number(raw, key)

    def values(self, key: str) -> list[float]:
        raw = self.params.get(key)
        if raw is None:
            raise DomainError(f"--{key.replace('_', '-')} is required")
        vals = parse_values(raw, key)
        if not vals:
            raise DomainError(f"--{key.replace('_', '-')} is empty")
        return vals

    def given(self, key: str) -> bool:
        return self.params.get(key) is not None


# ---------------------------------------------------------------------------
# work pool and output
# ---------------------------------------------------------------------------

def thread_count() -> int:
    raw = os.environ.get("DISSENT_SIM_THREADS", "").strip()
    cpu = os.cpu_count() or 1
    if not raw:
        return cpu
    try:
        n = int(raw)
    except ValueError:
        raise DomainError(f"DISSENT_SIM_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise DomainError("DISSENT_SIM_THREADS must be >= 1")
    return n


def ordered_map(fn: Callable, items: Sequence) -> list:
    """Results of ``fn`` over ``items`` in input order, computed in the pool."""
    items = list(items)
    workers = min(thread_count(), max(1, len(items)))
    if workers == 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass
class Table:
    name: str
    columns: list
    rows: list  # list of tuples, same length as columns


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, f".{SIG_DIGITS}g")


def _json_value(v):
    if isinstance(v, (bool, np.bool_, int, np.integer)):
        return int(v)
    if isinstance(v, str):
        return v
    v = float(v)
    if not math.isfinite(v):
        return None
    return float(format(v, f".{SIG_DIGITS}g"))


def _provenance(cfg: RunConfig) -> list[tuple[str, str]]:
    params = " ".join(f"{k}={v}" for k, v in sorted(cfg.params.items()) if v is not None)
    return [("program", f"dissent_sim {__version__}"),
            ("command", " ".join(cfg.argv)),
            ("parameters", params)]


def render(cfg: RunConfig, tables: Sequence[Table]) -> str:
    if cfg.fmt == "json":
        doc = {"provenance": dict(_provenance(cfg)), "tables": []}
        for t in tables:
            doc["tables"].append({"name": t.name, "columns": list(t.columns),
                                  "rows": [[_json_value(v) for v in row] for row in t.rows]})
        return json.dumps(doc, indent=2) + "\n"
    lines = [f"# {k}: {v}" for k, v in _provenance(cfg)]
    for i, t in enumerate(tables):
        if i:
            lines.append("")
        lines.append(f"# table: {t.name}")
        lines.append(",".join(t.columns))
        lines.extend(",".join(_fmt(v) for v in row) for row in t.rows)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def _squeezing(cfg: RunConfig):
    if cfg.given("delta") or cfg.given("omega"):
        if cfg.given("z"):
            raise DomainError("give either --z or --delta/--omega, not both")
        return squeezing_from_detuning(cfg.value("delta"), cfg.value("omega"))
    return squeezing_from_z(cfg.value("z"))


def cmd_steady(cfg: RunConfig) -> list[Table]:
    from .two_level_dynamics import rates_with_pump, steady_polarization, xi_steady

    params = _squeezing(cfg)
    d = cfg.value("d")
    rates = rates_with_pump(params, cfg.value("x_pump"), cfg.value("gamma_d_add"))
    cols = ["z", "mu", "nu", "d", "x_pump", "gamma_d_add", "cool", "heat", "dephase",
            "tilde_gamma", "p2_inf", "xi_inf", "xi_ideal"]
    row = (params.z, params.mu, params.nu, d, cfg.value("x_pump"), cfg.value("gamma_d_add"),
           rates.cool, rates.heat, rates.dephase, rates.tilde_gamma(), steady_polarization(rates),
           xi_steady(d, params, rates), xi_ideal(params))
    return [Table("steady", cols, [row])]


def cmd_time_evolution(cfg: RunConfig) -> list[Table]:
    from .two_level_dynamics import coherent_state, evolve_moments, rates_with_pump, xi_time

    params = _squeezing(cfg)
    d, t_end = cfg.value("d"), cfg.value("t_end")
    rates = rates_with_pump(params, cfg.value("x_pump"), cfg.value("gamma_d_add"))
    t = np.linspace(0.0, t_end, 201)
    traj = evolve_moments(coherent_state(cfg.value("n")), d, params, rates, t_end, t_eval=t)
    quasi = xi_time(t, d, params, rates)
    rows = [(ti, xi, p2, q) for ti, xi, p2, q in zip(t, traj.xi, traj.polarization, quasi)]
    return [Table("time_evolution", ["t", "xi_moments", "p2", "xi_quasi_static"], rows)]


def _fig3(cfg: RunConfig) -> list[Table]:
    from .two_level_dynamics import NoiseModel, xi_steady_of_z

    d = cfg.value("d")
    adds = (0.0, 2.0, 5.0, 10.0, 20.0)
    zs = np.linspace(1.0, 10.0, 91)
    rows = ordered_map(lambda z: (z, *[xi_steady_of_z(z, d, NoiseModel(0.0, a)) for a in adds]), zs)
    return [Table("fig3", ["z"] + [f"xi_gamma_d_add_{a:g}" for a in adds], rows)]


def _fig4(cfg: RunConfig) -> list[Table]:
    from .two_level_dynamics import NoiseModel, rates_with_pump, steady_polarization, xi_optimal_over_z

    d = cfg.value("d")
    adds = (15.0, 20.0, 25.0, 30.0, 35.0)
    xs = np.linspace(0.0, 10.0, 41)
    z_grid = np.linspace(1.0, 10.0, 91)

    def row(x):
        best = [xi_optimal_over_z(d, NoiseModel(x, a), z_grid) for a in adds]
        return (x, *[b[1] for b in best], *[b[0] for b in best])

    main = Table("fig4", ["x"] + [f"xi_opt_gamma_d_add_{a:g}" for a in adds]
                 + [f"z_opt_gamma_d_add_{a:g}" for a in adds], ordered_map(row, xs))
    inset = [(z, steady_polarization(rates_with_pump(squeezing_from_z(z), 0.0)),
              steady_polarization(rates_with_pump(squeezing_from_z(z), 5.0))) for z in z_grid]
    return [main, Table("fig4_inset", ["z", "p2_inf_x_0", "p2_inf_x_5"], inset)]


def _fig6(cfg: RunConfig) -> list[Table]:
    from .cesium_rates import repump_sweep

    d = cfg.value("d")
    adds = (0.0, 2.0, 5.0, 10.0, 20.0)
    xs = np.logspace(-2.0, 1.0, 31)
    rows = ordered_map(lambda x: repump_sweep([x], adds, d)[0], xs)
    out = [(r.x_repump, r.pump_strength, r.n2, r.p2, *[r.xi[a] for a in adds]) for r in rows]
    cols = ["x_repump", "pump_strength", "n2", "p2"] + [f"xi_exp_gamma_d_add_{a:g}" for a in adds]
    return [Table("fig6", cols, out)]


def _fig7(cfg: RunConfig) -> list[Table]:
    from .cesium_rates import quasi_steady_cesium

    trace, _ = quasi_steady_cesium(cfg.value("d"))
    p = trace.populations
    rows = [(t, x, n2, p2, nh) for t, x, n2, p2, nh in zip(trace.t, trace.xi, p.n2, p.p2, p.pops[:, 2])]
    return [Table("fig7", ["t", "xi_exp", "n2", "p2", "n_h"], rows)]


def cmd_figure(cfg: RunConfig, name: str) -> list[Table]:
    return {"fig3": _fig3, "fig4": _fig4, "fig6": _fig6, "fig7": _fig7}[name](cfg)


def cmd_oracle(cfg: RunConfig) -> list[Table]:
    from .lindblad_oracle import MAX_N_SUPEROPERATOR, finite_n_convergence_study
    from .two_level_dynamics import rates_with_pump

    ns = cfg.values("n")
    if any(n != int(n) or not 1 <= n <= MAX_N_SUPEROPERATOR for n in ns):
        raise DomainError(f"--n values must be integers in 1..{MAX_N_SUPEROPERATOR}")
    params = _squeezing(cfg)
    rates = rates_with_pump(params, cfg.value("x_pump"), cfg.value("gamma_d_add"))
    d = cfg.value("d")
    rows = ordered_map(lambda n: finite_n_convergence_study(params, rates, d, [int(n)])[0], ns)
    return [Table("oracle", ["n", "xi_oracle", "xi_formula", "deviation"],
                  [(r.n, r.xi_oracle, r.xi_formula, r.deviation) for r in rows])]


def cmd_rates(cfg: RunConfig) -> list[Table]:
    from .collective_rates import rate_table

    kls = cfg.values("kl")
    r_over_l = cfg.value("r_over_l")
    if any(k <= 0 for k in kls) or r_over_l < 0:
        raise DomainError("--kl values must be positive and --r-over-l >= 0")
    rows = ordered_map(lambda kl: rate_table([kl], r_over_l)[0], kls)
    cols = list(rows[0].keys())
    # with k = 1 the flat regime needs (kL)^2 >> R = r_over_l * kL
    cols.append("out_of_regime")
    out = [tuple(r[c] for c in cols[:-1]) + (int(r_over_l > 0 and r["kL"] < 10.0 * r_over_l),) for r in rows]
    return [Table("rates", cols, out)]


def cmd_multilevel(cfg: RunConfig) -> list[Table]:
    from .cesium_rates import optimal_pump_strength, rates_from_strengths
    from .multilevel import MultilevelConfig, default_time_grid, quasi_steady_trace

    x_rep = cfg.value("x_repump")
    t_end = cfg.value("t_end")
    if t_end <= 0:
        raise DomainError("--t-end must be positive")
    t = default_time_grid()
    t = np.concatenate(([0.0], np.logspace(-3.0, math.log10(t_end), t.size - 1)))
    pump = cfg.value("x_pump") if cfg.given("x_pump") else optimal_pump_strength(x_rep)
    rates, params = rates_from_strengths(pump, x_rep * pump, cfg.value("gamma_d_add"))
    trace = quasi_steady_trace(MultilevelConfig(params, cfg.value("d"), Fraction(4)), rates, t)
    p = trace.populations
    rows = [(ti, *pops, xi) for ti, pops, xi in zip(trace.t, p.pops, trace.xi)]
    return [Table("multilevel", ["t", "n_up", "n_down", "n_h", "xi_exp"], rows)]


def cmd_cesium(cfg: RunConfig) -> list[Table]:
    from dataclasses import replace

    from . import cesium_rates as cs

    probe = replace(cs.PROBE_Y_BLUE, detuning=cfg.value("delta"))
    base = cs.probe_three_level(probe)
    leak = cs.leakage_ratios(probe)
    rows = [("z_probe", cs.z_of_probe(probe)),
            ("mu", base.squeezing.mu),
            ("nu", base.squeezing.nu),
            ("z_y_blue_700", cs.z_of_probe(cs.PROBE_Y_BLUE)),
            ("z_x_red_700", cs.z_of_probe(cs.PROBE_X_RED)),
            ("leak_44_42", leak["4,4->4,2"]),
            ("leak_44_32", leak["4,4->3,2"])]
    for name, v in base.rates.__dict__.items():
        if name != "dephase_add":
            rows.append((f"probe_{name}", v))
    rows.append(("pump_opt_x_repump_1", cs.optimal_pump_strength(1.0, probe)))
    return [Table("cesium", ["quantity", "value"], rows)]


def cmd_sweep(cfg: RunConfig) -> list[Table]:
    from .two_level_dynamics import rates_with_pump, steady_polarization, xi_steady

    grid = [(z, d, a, x) for z in cfg.values("z") for d in cfg.values("d")
            for a in cfg.values("gamma_d_add") for x in cfg.values("x_pump")]

    def point(p):
        z, d, a, x = p
        params = squeezing_from_z(z)
        rates = rates_with_pump(params, x, a)
        return (z, d, a, x, steady_polarization(rates), xi_steady(d, params, rates))

    return [Table("sweep", ["z", "d", "gamma_d_add", "x_pump", "p2_inf", "xi_inf"], ordered_map(point, grid))]


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dissent-sim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"dissent_sim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, opts in COMMAND_OPTIONS.items():
        p = sub.add_parser(name)
        if name == "figure":
            p.add_argument("name", choices=FIGURES)
        for key, default in opts.items():
            hint = f" (default {default})" if default is not None else ""
            p.add_argument("--" + key.replace("_", "-"), dest=key, default=None,
                           help=OPTION_HELP[key] + hint)
        if name == "steady":
            p.add_argument("--probe-only", action="store_true",
                           help="no pump and no additional dephasing")
        p.add_argument("--config", help="file of key = value lines; flags override it")
        p.add_argument("--out", help="output file (default stdout)")
        p.add_argument("--format", choices=("csv", "json"), default=None)
    return parser


def _resolve(ns: argparse.Namespace, argv: list) -> RunConfig:
    opts = COMMAND_OPTIONS[ns.command]
    valid = list(opts) + ["format"]
    file_vals = {}
    if ns.config:
        try:
            with open(ns.config, encoding="utf-8") as fh:
                file_vals = parse_config_text(fh.read(), valid)
        except OSError as exc:
            raise DomainError(f"cannot read config file: {exc}") from None
    params = {}
    for key, default in opts.items():
        flag = getattr(ns, key)
        params[key] = flag if flag is not None else file_vals.get(key, default)
    if getattr(ns, "probe_only", False):
        params["x_pump"] = params["gamma_d_add"] = "0"
    # "--z" only has a default when no detuning pair is given
    if ns.command == "steady" and params["z"] is None and params["delta"] is None and params["omega"] is None:
        params["z"] = "2"
    fmt = ns.format or file_vals.get("format", "csv")
    if fmt not in ("csv", "json"):
        raise DomainError("format must be csv or json")
    # the output path is not part of the provenance so reruns to other files match
    shown, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a == "--out":
            skip = True
            continue
        if a.startswith("--out="):
            continue
        shown.append(a)
    return RunConfig(ns.command, params, ns.out, fmt, shown)


def _execute(argv: Optional[Sequence[str]]) -> tuple[RunConfig, str]:
    argv = list(sys.argv[1:] if argv is None else argv)
    ns = build_parser().parse_args(argv)
    cfg = _resolve(ns, argv)
    handlers = {"steady": cmd_steady, "time-evolution": cmd_time_evolution, "oracle": cmd_oracle,
                "rates": cmd_rates, "multilevel": cmd_multilevel, "cesium": cmd_cesium, "sweep": cmd_sweep}
    tables = cmd_figure(cfg, ns.name) if ns.command == "figure" else handlers[ns.command](cfg)
    text = render(cfg, tables)
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return cfg, text


def run(argv: Optional[Sequence[str]] = None) -> str:
    """Parse ``argv``, run the experiment and return the rendered output."""
    return _execute(argv)[1]


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        cfg, text = _execute(argv)
    except SystemExit as exc:  # argparse usage errors exit with 2 already
        return int(exc.code or 0)
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConvergenceError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    if cfg.out is None:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
