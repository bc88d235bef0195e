"""Batch front end: ``obpm-lab {homodyne,teleport,jumps,fig2} --config FILE --out DIR``.

Exit codes: 0 success, 2 configuration error, 3 numerical-tolerance failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .cvqt import sample_fidelities, sweep_table, weighted_mean
from .fock import coherent_state, fock_state
from .homodyne import NumericalToleranceError, distribution_moments, squeezed_light_experiment
from .tables import DistributionTable
from .twin_laser import (
    ApparatusConfig,
    ValidityWarning,
    conditional_counts,
    folded_delta_histogram,
    jump_count_distribution,
    jump_count_probability,
    mcwf_run,
    mixture_quadrature,
    phase_posterior,
    photon_number_distribution,
    total_variation,
    trajectory_table,
)

EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class ConfigError(Exception):
    pass


# -- config ------------------------------------------------------------------

def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(" ", "").split(",") if v]


def _bool_or_both(text: str) -> str:
    t = text.strip().lower()
    if t not in ("true", "false", "both"):
        raise ValueError("expected true, false or both")
    return t


def _optional_int(text: str):
    return None if text.strip().lower() in ("", "auto", "none") else int(text)


SCHEMAS = {
    "homodyne": {
        "s": (float, 0.8), "varphi": (_floats, [0.0]), "varphi_sweep": (int, 0),
        "x_min": (float, None), "x_max": (float, None), "x_points": (int, None),
        "k": (int, 64), "cutoff": (_optional_int, None), "seed": (int, 0),
    },
    "teleport": {
        "input": (str, "coherent:1,0"), "etas": (_floats, [0.0, 0.3, 0.6, 0.9]),
        "share_phase": (_bool_or_both, "both"), "samples": (int, 200), "seed": (int, 0),
        "k": (int, 64), "k_b": (int, 32),
    },
    "jumps": {
        "r0": (float, math.sqrt(50.0)), "g": (float, 1.0), "tau": (float, 1e-3),
        "t": (float, -math.log(0.8) / 1e-3), "seed": (int, 12345), "trajectories": (int, 100000),
        "condition_s": (_optional_int, None), "posterior_p": (int, 5), "posterior_q": (int, 5),
        "delta_bins": (int, 8),
    },
    "fig2": {"s": (int, 100), "r_t_squared": (float, 1000.0), "seed": (int, 0)},
}


def parse_config_text(text: str, schema: dict, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines (``#`` comments) against a schema."""
    cfg = {k: default for k, (_, default) in schema.items()}
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in schema:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r} "
                              f"(allowed: {', '.join(sorted(schema))})")
        if key in seen:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        seen.add(key)
        conv = schema[key][0]
        try:
            cfg[key] = conv(value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    return cfg


def parse_input_state(spec: str):
    kind, _, arg = spec.strip().partition(":")
    try:
        if kind == "vacuum":
            return fock_state(0)
        if kind == "fock":
            return fock_state(int(arg))
        if kind == "coherent":
            vals = _floats(arg)
            r, theta = (vals + [0.0])[:2]
            return coherent_state(r, theta)
    except ValueError as exc:
        raise ConfigError(f"bad input state {spec!r}: {exc}") from None
    raise ConfigError(f"bad input state {spec!r}; use vacuum, fock:N or coherent:r[,theta]")


# -- run bookkeeping -------------------------------------------------------------

class Run:
    def __init__(self, name: str, cfg: dict, out: Path):
        self.name, self.cfg, self.out = name, cfg, out
        self.outputs: list[Path] = []
        self.checks: list[dict] = []
        self.notes: list[str] = []
        self.results: dict = {}
        self.start = time.perf_counter()
        out.mkdir(parents=True, exist_ok=True)

    def write(self, filename: str, table: DistributionTable) -> None:
        path = self.out / filename
        table.to_csv(path)
        self.outputs.append(path)

    def check(self, name: str, value: float, ok: bool, criterion: str, enforced: bool = True):
        self.checks.append({"name": name, "value": value, "criterion": criterion,
                            "passed": bool(ok), "enforced": enforced})

    def finish(self) -> int:
        files = [{"path": p.name, "sha256": hashlib.sha256(p.read_bytes()).hexdigest()}
                 for p in self.outputs]
        manifest = {
            "subcommand": self.name,
            "config": self.cfg,
            "seed": self.cfg.get("seed"),
            "version": __version__,
            "duration_s": time.perf_counter() - self.start,
            "outputs": files,
            "results": self.results,
            "checks": self.checks,
            "warnings": self.notes,
        }
        with open(self.out / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")
        failed = [c["name"] for c in self.checks if c["enforced"] and not c["passed"]]
        if failed:
            print(f"{self.name}: tolerance failure in {', '.join(failed)}", file=sys.stderr)
            return EXIT_NUMERIC
        return 0


# -- subcommands --------------------------------------------------------------------

def cmd_homodyne(cfg: dict, run: Run, workers: int) -> None:
    s = cfg["s"]
    if s < 0:
        raise ConfigError("s must be nonnegative")
    if cfg["varphi_sweep"] > 0:
        n = cfg["varphi_sweep"]
        phis = [math.pi * j / n for j in range(n)]
    else:
        phis = cfg["varphi"]
    half = max(10.0, math.ceil(8 * math.exp(s)))
    x_min = -half if cfg["x_min"] is None else cfg["x_min"]
    x_max = half if cfg["x_max"] is None else cfg["x_max"]
    points = cfg["x_points"] or int(round(40 * (x_max - x_min))) + 1
    xs = np.linspace(x_min, x_max, points)
    variances = []
    for j, phi in enumerate(phis):
        table = squeezed_light_experiment(s, phi, xs, k=cfg["k"], cutoff=cfg["cutoff"])
        run.write(f"homodyne_{j:02d}.csv", table)
        mass, _, var = distribution_moments(table)
        variances.append(var)
        run.check(f"mass_{j:02d}", mass, abs(mass - 1) < 1e-6, "|mass - 1| < 1e-6")
    run.results["varphi"] = phis
    run.results["variance"] = variances
    if cfg["varphi_sweep"] >= 2 and cfg["varphi_sweep"] % 2 == 0:
        prod = min(variances) * max(variances)
        run.check("variance_min_times_max", prod, abs(prod - 1) < 1e-4, "|min*max - 1| < 1e-4")


def cmd_teleport(cfg: dict, run: Run, workers: int) -> None:
    psi = parse_input_state(cfg["input"])
    etas = cfg["etas"]
    if not etas:
        raise ConfigError("etas must list at least one value")
    for e in etas:
        if not 0 <= e < 1:
            raise ConfigError(f"eta = {e} outside [0, 1); the ideal resource eta = 1 is "
                              "not normalizable, use eta = 1 - eps with eps >= 0.005")
    if cfg["samples"] < 1:
        raise ConfigError("samples must be >= 1")
    flags = {"true": [True], "false": [False], "both": [True, False]}[cfg["share_phase"]]
    arr = sample_fidelities(psi, etas, cfg["samples"], cfg["seed"], cfg["k"], cfg["k_b"], workers)
    table = sweep_table(arr, etas, flags, cfg["samples"], cfg["seed"])
    run.write("fidelity.csv", table)
    vac = abs(complex(psi.amps[0])) ** 2
    for j, eta in enumerate(etas):
        if eta == 0.0:
            for flag in flags:
                mean, se = weighted_mean(arr[:, j, 0], arr[:, j, 1 if flag else 2])
                run.check(f"eta0_vacuum_overlap_shared={flag}", mean,
                          abs(mean - vac) <= 2 * se + 1e-12, "|F - |<psi|0>|^2| <= 2 se")
    if True in flags and len(etas) > 1:
        order = np.argsort(etas)
        means = [weighted_mean(arr[:, j, 0], arr[:, j, 1]) for j in order]
        ok = all(b[0] - a[0] > -b[1] for a, b in zip(means, means[1:]))
        run.check("shared_fidelity_nondecreasing", float(ok), ok, "each step > -1 se",
                  enforced=False)


def cmd_jumps(cfg: dict, run: Run, workers: int) -> None:
    if cfg["trajectories"] < 1:
        raise ConfigError("trajectories must be >= 1")
    try:
        app = ApparatusConfig(cfg["r0"], cfg["g"], cfg["tau"], cfg["t"], cfg["seed"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ValidityWarning)
        records = mcwf_run(app, cfg["trajectories"], workers)
    run.notes.extend(str(w.message) for w in caught)
    run.write("trajectories.csv", trajectory_table(records))
    s = cfg["condition_s"]
    if s is None:
        s = int(round(app.expected_jumps))
    counts = conditional_counts(records, s)
    n = int(counts.sum())
    emp = counts / n if n else counts.astype(float)
    exact = jump_count_distribution(s)
    run.write("p_given_s.csv", DistributionTable.from_columns(
        p=np.arange(s + 1), count=counts, empirical=emp, exact=exact))
    if n:
        tv = total_variation(emp, exact)
        run.check(f"p_given_s{s}_tv", tv, tv < 0.02, "TV < 0.02", enforced=False)
    pp, pq = cfg["posterior_p"], cfg["posterior_q"]
    run.write("posterior.csv", phase_posterior(pp, pq).table())
    emp_d, pred_d, nd = folded_delta_histogram(records, pp, pq, cfg["delta_bins"])
    edges = np.linspace(0, math.pi, cfg["delta_bins"] + 1)
    run.write("delta_histogram.csv", DistributionTable.from_columns(
        lo=edges[:-1], hi=edges[1:], empirical=emp_d, predicted=pred_d))
    if nd:
        tv = total_variation(emp_d, pred_d)
        run.check(f"delta_posterior_{pp}_{pq}_tv", tv, tv < 0.03, "TV < 0.03", enforced=False)
    run.results.update(expected_jumps=app.expected_jumps, r_t=app.r_t, conditioned_s=s,
                       trajectories_in_s_bin=n, trajectories_in_pq_cell=nd,
                       validity_bound=app.validity_bound, valid=app.valid)


def cmd_fig2(cfg: dict, run: Run, workers: int) -> None:
    s, r2 = cfg["s"], cfg["r_t_squared"]
    if s < 0 or r2 < 0:
        raise ConfigError("s and r_t_squared must be nonnegative")
    extreme = jump_count_probability(s, 0) + jump_count_probability(s, s)
    table = photon_number_distribution(s, 0, r2)
    run.write("fig2.csv", table)
    run.results["extreme_split_probability"] = extreme
    if s == 100:
        run.check("extreme_split_probability", extreme, abs(extreme - 0.1127) <= 5e-4, "0.1127 +/- 0.0005")
    for col in ("P_c", "P_d"):
        mass = float(np.sum(table[col]))
        run.check(f"mass_{col}", mass, abs(mass - 1) < 1e-9, "|sum - 1| < 1e-9")
    peak = int(np.argmax(table["P_c"]))
    window = np.arange(max(0, peak - 20), peak + 21)
    oracle_peak = int(window[np.argmax(mixture_quadrature(s, 0, r2, window))])
    run.results.update(peak_m=peak, oracle_peak_m=oracle_peak)
    run.check("peak_vs_oracle", peak - oracle_peak, abs(peak - oracle_peak) <= 3, "|dm| <= 3")


COMMANDS = {"homodyne": cmd_homodyne, "teleport": cmd_teleport, "jumps": cmd_jumps, "fig2": cmd_fig2}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="obpm-lab", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", type=Path, help="flat key = value file")
    ap.add_argument("--out", type=Path, help="output directory (default $OBPM_LAB_OUT or ./out)")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--seed", type=int, help="overrides the config seed")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    schema = SCHEMAS[args.command]
    try:
        text = args.config.read_text(encoding="utf-8") if args.config else ""
        cfg = parse_config_text(text, schema, str(args.config or "<defaults>"))
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg["seed"] = args.seed
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        out = args.out or Path(os.environ.get("OBPM_LAB_OUT", "out"))
        run = Run(args.command, cfg, out)
        COMMANDS[args.command](cfg, run, args.workers)
    except (ConfigError, OSError) as exc:
        print(f"obpm-lab {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalToleranceError as exc:
        print(f"obpm-lab {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return run.finish()


if __name__ == "__main__":
    sys.exit(main())
