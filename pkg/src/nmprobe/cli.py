"""Command-line front end.

Every subcommand reads a flat ``key = value`` configuration (``#`` starts a
comment), lets ``-p key=value`` override it, validates the whole
configuration before computing anything and writes CSV/JSON files into the
output directory.  Floats are written with 12 significant digits.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import bec, blp, dephasing, ising, mcwf, spectral, units
from .core import SIGMA_MINUS, SIGMA_PLUS, SIGMA_Z
from .errors import ConfigError, ReservoirValidationError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

REQUIRED = object()


def fmt(x: float) -> str:
    return f"{x:.12g}"


def _r12(x: float) -> float:
    return float(fmt(x))


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class Entry:
    value: str
    where: str


def parse_config_text(text: str, source: str) -> dict[str, Entry]:
    entries: dict[str, Entry] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        if "=" not in line:
            raise ConfigError(f"{where}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{where}: missing key")
        if key in entries:
            raise ConfigError(f"{where}: duplicate key {key!r} (first set at {entries[key].where})")
        entries[key] = Entry(value, where)
    return entries


def _float(s):
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("not finite")
    return v


def _int(s):
    v = float(s)
    if v != int(v):
        raise ValueError("not an integer")
    return int(v)


def _float_list(s):
    vals = [_float(x) for x in s.replace(";", ",").split(",") if x.strip()]
    if not vals:
        raise ValueError("empty list")
    return vals


def _int_list(s):
    vals = [_int(x) for x in s.replace(";", ",").split(",") if x.strip()]
    if not vals:
        raise ValueError("empty list")
    return vals


def _choice(*options):
    def parse(s):
        if s not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return s

    return parse


def _optional(parser):
    def parse(s):
        if s.lower() in ("", "none", "default"):
            return None
        return parser(s)

    return parse


def _str(s):
    return s


RESERVOIR_KEYS: dict[str, tuple[Callable, Any]] = {
    "m_A": (_float, units.MASS_NA23),
    "m_B": (_float, units.MASS_RB87),
    "n0": (_float, 1e20),
    "a_AB": (_float, 55.0 * units.BOHR_RADIUS),
    "sigma": (_float, 45e-9),
    "L": (_float, 600e-9 / 8),
    "a_z": (_float, 200e-9),
    "a_perp": (_float, 200e-9),
}

SCHEMAS: dict[str, dict[str, tuple[Callable, Any]]] = {
    "dephasing-scan": {
        "s_min": (_float, 1.0),
        "s_max": (_float, 4.0),
        "s_step": (_float, 0.05),
        "temperatures": (_float_list, [0.0, 100.0]),
        "omega_c": (_float, 1.0),
        "t_max": (_float, 50.0),
        "n_t": (_int, 2001),
        "convexity_points": (_int, 512),
    },
    "bec-scan": {
        "dimension": (_int, 3),
        "a_B_min": (_float, 0.01),
        "a_B_max": (_optional(_float), None),
        "n_points": (_int, 16),
        "temperature_nK": (_float, 0.0),
        "t_max": (_float, bec.DEFAULT_T_MAX),
        "n_t": (_int, 2001),
        "model": (_choice(*bec.MODELS), "double-well"),
        **RESERVOIR_KEYS,
    },
    "ising-scan": {
        "N_list": (_int_list, [100]),
        "lambda_star_min": (_float, 0.9),
        "lambda_star_max": (_float, 1.1),
        "lambda_star_step": (_float, 0.005),
        "delta": (_float, 0.05),
        "t_cut": (_optional(_float), None),
        "dt": (_float, 0.01),
        "echo_lambda_star": (_optional(_float), None),
    },
    "mcwf-demo": {
        "channel": (_choice("sigma_minus", "sigma_plus", "sigma_z"), "sigma_minus"),
        "gamma": (_float, 1.0),
        "omega": (_float, 0.0),
        "initial": (_choice("excited", "ground", "plus"), "excited"),
        "n_traj": (_int, 10000),
        "dt": (_float, 0.005),
        "t_max": (_float, 5.0),
        "n_out": (_int, 51),
    },
    "spectrum-fit": {
        "source": (_choice("synthetic", "file", "bec"), "synthetic"),
        "input": (_optional(_str), None),
        "synthetic_s": (_float, 2.5),
        "omega_c": (_float, 1.0),
        "omega_max": (_float, 0.5),
        "n_samples": (_int, 400),
        "window_lo": (_optional(_float), None),
        "window_hi": (_optional(_float), None),
        "bec_dimension": (_int, 3),
        "bec_a_B": (_float, 1.0),
        "bec_model": (_choice(*bec.MODELS), "double-well"),
    },
}


def resolve_config(subcommand: str, entries: dict[str, Entry]) -> dict[str, Any]:
    schema = SCHEMAS[subcommand]
    out = {}
    for key, e in entries.items():
        if key not in schema:
            raise ConfigError(f"{e.where}: unknown key {key!r} for {subcommand}")
        parser, _ = schema[key]
        try:
            out[key] = parser(e.value)
        except ValueError as exc:
            raise ConfigError(f"{e.where}: invalid value {e.value!r} for {key!r}: {exc}") from None
    for key, (_, default) in schema.items():
        if key not in out:
            if default is REQUIRED:
                raise ConfigError(f"missing required key {key!r} for {subcommand}")
            out[key] = default
    return out


def load_config(subcommand: str, path: str | None, overrides: list[str]) -> dict[str, Any]:
    entries: dict[str, Entry] = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
        entries = parse_config_text(text, path)
    for i, ov in enumerate(overrides, start=1):
        where = f"-p #{i}"
        if "=" not in ov:
            raise ConfigError(f"{where}: expected key=value, got {ov!r}")
        k, v = (s.strip() for s in ov.split("=", 1))
        entries[k] = Entry(v, where)
    return resolve_config(subcommand, entries)


def _grid(lo, hi, step, name):
    if not step > 0:
        raise ConfigError(f"{name}_step must be positive")
    if lo > hi:
        raise ConfigError(f"empty {name} grid: {name}_min = {lo:g} > {name}_max = {hi:g}")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return np.round(lo + step * np.arange(n), 10)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(v if isinstance(v, str) else (str(v) if isinstance(v, (int, np.integer)) else fmt(v)) for v in r))
    path.write_text("\n".join(lines) + "\n")


def _map(fn, items, threads):
    if threads and threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


# ---------------------------------------------------------------------------
# subcommands


def run_dephasing_scan(cfg, out: Path, seed: int, threads: int) -> list[Path]:
    s_grid = _grid(cfg["s_min"], cfg["s_max"], cfg["s_step"], "s")
    if s_grid[0] <= 0:
        raise ConfigError("s values must be positive")
    if any(T < 0 for T in cfg["temperatures"]):
        raise ConfigError("temperatures must be nonnegative")
    if not (cfg["omega_c"] > 0 and cfg["t_max"] > 0 and cfg["n_t"] >= 3):
        raise ConfigError("need omega_c > 0, t_max > 0 and n_t >= 3")
    wc = cfg["omega_c"]
    t = np.linspace(0.0, cfg["t_max"] / wc, cfg["n_t"])

    def cell(args):
        T, s = args
        spec = spectral.OhmicSpectrum(float(s), wc)
        Tw = T * wc
        if T == 0:
            g = dephasing.gamma_analytic(float(s), wc, t[1:], "zero")
        else:
            g = dephasing.dephasing_rate(spec, Tw, t[1:]).values
        G = dephasing.decoherence_factor(spec, Tw, t)
        value = blp.blp_dephasing(G).value
        conv = spectral.is_convex(spec, Tw, n=cfg["convexity_points"]).convex
        return (T, float(s), float(np.min(g)), value, conv)

    cells = [(T, s) for T in cfg["temperatures"] for s in s_grid]
    results = _map(cell, cells, threads)
    rows = [(fmt(s), fmt(T), fmt(mg), fmt(v), "true" if c else "false") for T, s, mg, v, c in results]
    csv_path = out / "dephasing_scan.csv"
    _write_csv(csv_path, ["s", "T", "min_gamma", "blp", "convex"], rows)

    summary = {}
    for T in cfg["temperatures"]:
        sub = [r for r in results if r[0] == T]
        markov = [r[1] for r in sub if r[2] >= 0]
        non = [r[1] for r in sub if r[2] < 0]
        summary[fmt(T)] = {
            "last_markovian_s": _r12(max(markov)) if markov else None,
            "first_non_markovian_s": _r12(min(non)) if non else None,
            "convexity_disagreements": sum(1 for r in sub if (r[2] >= 0) != r[4]),
        }
    json_path = out / "dephasing_summary.json"
    _write_json(json_path, {"omega_c": wc, "t_max": cfg["t_max"], "thresholds": summary})
    return [csv_path, json_path]


def _reservoir(cfg) -> bec.ReservoirParams:
    kw = {k: cfg[k] for k in RESERVOIR_KEYS}
    return bec.ReservoirParams(dimension=cfg["dimension"], T=units.nanokelvin(cfg["temperature_nK"]), **kw)


def run_bec_scan(cfg, out: Path, seed: int, threads: int) -> list[Path]:
    D = cfg["dimension"]
    if D not in (1, 2, 3):
        raise ConfigError(f"dimension must be 1, 2 or 3, got {D}")
    hi = cfg["a_B_max"] if cfg["a_B_max"] is not None else bec.MAX_A_B_RATIO[D]
    lo = cfg["a_B_min"]
    if not (0 < lo < hi):
        raise ConfigError(f"need 0 < a_B_min < a_B_max, got {lo:g}, {hi:g}")
    if cfg["n_points"] < 8:
        raise ConfigError("n_points must be at least 8")
    if cfg["temperature_nK"] < 0 or cfg["t_max"] <= 0 or cfg["n_t"] < 3:
        raise ConfigError("need temperature_nK >= 0, t_max > 0 and n_t >= 3")
    ratios = np.linspace(lo, hi, cfg["n_points"])
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            base = _reservoir(cfg)
            for r in ratios:
                base.with_a_B_ratio(r)
    except ReservoirValidationError as exc:
        raise ConfigError(str(exc)) from None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = bec.crossover_scan(
            D, ratios, T=base.T, t_max=cfg["t_max"], params=base, model=cfg["model"], n_t=cfg["n_t"], workers=threads
        )
    csv_path = out / "bec_scan.csv"
    res.to_csv(csv_path)
    json_path = out / "bec_summary.json"
    summary = res.summary()
    summary["temperature_nK"] = cfg["temperature_nK"]
    summary["time_unit_s"] = _r12(bec.reduce(base).t_ref)
    _write_json(json_path, summary)
    return [csv_path, json_path]


def run_ising_scan(cfg, out: Path, seed: int, threads: int) -> list[Path]:
    grid = _grid(cfg["lambda_star_min"], cfg["lambda_star_max"], cfg["lambda_star_step"], "lambda_star")
    if any(N < 4 or N % 2 for N in cfg["N_list"]):
        raise ConfigError("every N must be even and >= 4")
    if grid[0] - cfg["delta"] < 0:
        raise ConfigError("lambda_star_min - delta must be nonnegative")
    if not cfg["dt"] > 0 or (cfg["t_cut"] is not None and not cfg["t_cut"] > 0):
        raise ConfigError("dt and t_cut must be positive")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rows = ising.criticality_scan(cfg["N_list"], grid, cfg["delta"], cfg["t_cut"], cfg["dt"], workers=threads)
    csv_path = out / "ising_scan.csv"
    ising.write_scan_csv(csv_path, rows)
    summary = {}
    for N in cfg["N_list"]:
        sub = [r for r in rows if r.N == N]
        ls = [r.lambda_star for r in sub]
        m = [r.measure for r in sub]
        summary[str(N)] = {
            "argmin_lambda_star": _r12(ising.locate_minimum(ls, m)),
            "min_measure": _r12(min(m)),
            "t_cut": _r12(sub[0].t_cut),
        }
    paths = [csv_path]
    if cfg["echo_lambda_star"] is not None:
        for N in cfg["N_list"]:
            p = ising.IsingParams.from_lambda_star(N, cfg["echo_lambda_star"], cfg["delta"])
            tc = ising.default_t_cut(p) if cfg["t_cut"] is None else cfg["t_cut"]
            g = np.linspace(0.0, tc, max(2, int(math.ceil(tc / cfg["dt"])) + 1))
            path = out / f"ising_echo_N{N}.csv"
            ising.write_echo_csv(path, ising.loschmidt_echo(p, g))
            paths.append(path)
    json_path = out / "ising_summary.json"
    _write_json(json_path, {"delta": cfg["delta"], "per_N": summary})
    return paths + [json_path]


_CHANNELS = {"sigma_minus": SIGMA_MINUS, "sigma_plus": SIGMA_PLUS, "sigma_z": SIGMA_Z}
_INITIAL = {
    "excited": np.array([1.0, 0.0], dtype=complex),
    "ground": np.array([0.0, 1.0], dtype=complex),
    "plus": np.array([1.0, 1.0], dtype=complex) / math.sqrt(2),
}


def run_mcwf_demo(cfg, out: Path, seed: int, threads: int) -> list[Path]:
    if cfg["gamma"] < 0 or cfg["n_traj"] < 1 or cfg["n_out"] < 2 or not cfg["t_max"] > 0 or not cfg["dt"] > 0:
        raise ConfigError("need gamma >= 0, n_traj >= 1, n_out >= 2, t_max > 0, dt > 0")
    grid = np.linspace(0.0, cfg["t_max"], cfg["n_out"])
    spacing = grid[1] - grid[0]
    n_sub = round(spacing / cfg["dt"])
    if n_sub < 1 or abs(n_sub * cfg["dt"] - spacing) > 1e-9 * spacing:
        raise ConfigError(f"output spacing {spacing:g} is not a multiple of dt = {cfg['dt']:g}")
    H = 0.5 * cfg["omega"] * SIGMA_Z
    ch = mcwf.JumpChannel(_CHANNELS[cfg["channel"]], cfg["gamma"])
    psi0 = _INITIAL[cfg["initial"]]
    res = mcwf.ensemble_average(mcwf.EnsembleConfig(cfg["n_traj"], cfg["dt"], seed), H, [ch], psi0, grid)
    ref = mcwf.lindblad_integrate(H, [ch], np.outer(psi0, psi0.conj()), grid)
    p1 = out / "mcwf_ensemble.csv"
    res.to_csv(p1)
    p2 = out / "mcwf_jumps.csv"
    res.jumps_to_csv(p2)
    p3 = out / "mcwf_lindblad.csv"
    _write_csv(
        p3,
        ["t", "rho00", "Re_rho01", "Im_rho01", "rho11"],
        [(t, r[0, 0].real, r[0, 1].real, r[0, 1].imag, r[1, 1].real) for t, r in zip(grid, ref)],
    )
    se = np.maximum(res.stderr00, 1e-300)
    z = np.abs(res.rho[:, 0, 0].real - ref[:, 0, 0].real) / se
    z = np.where(res.stderr00 > 0, z, 0.0)
    p4 = out / "mcwf_summary.json"
    _write_json(
        p4,
        {
            "seed": seed,
            "n_traj": cfg["n_traj"],
            "dt": cfg["dt"],
            "channel": cfg["channel"],
            "max_abs_z_rho00": _r12(float(z.max())),
            "total_jumps": int(sum(len(j.times) for j in res.jumps)),
        },
    )
    return [p1, p2, p3, p4]


def run_spectrum_fit(cfg, out: Path, seed: int, threads: int) -> list[Path]:
    src = cfg["source"]
    window = None
    if (cfg["window_lo"] is None) != (cfg["window_hi"] is None):
        raise ConfigError("window_lo and window_hi must be given together")
    if cfg["window_lo"] is not None:
        window = (cfg["window_lo"], cfg["window_hi"])
        if not 0 < window[0] < window[1]:
            raise ConfigError("need 0 < window_lo < window_hi")
    if cfg["n_samples"] < 16:
        raise ConfigError("n_samples must be at least 16")
    if src == "file":
        if cfg["input"] is None:
            raise ConfigError("source = file needs an input path")
        try:
            table = spectral.TabulatedSpectrum.from_csv(cfg["input"], window)
        except (OSError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
    elif src == "synthetic":
        if not (cfg["synthetic_s"] > 0 and cfg["omega_c"] > 0 and cfg["omega_max"] > 0):
            raise ConfigError("need synthetic_s, omega_c and omega_max positive")
        w = np.geomspace(cfg["omega_max"] * 1e-4, cfg["omega_max"], cfg["n_samples"])
        spec = spectral.OhmicSpectrum(cfg["synthetic_s"], cfg["omega_c"])
        table = spectral.TabulatedSpectrum(w, spec(w), window)
    else:
        D = cfg["bec_dimension"]
        if D not in (1, 2, 3):
            raise ConfigError("bec_dimension must be 1, 2 or 3")
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                p = bec.default_reservoir(D).with_a_B_ratio(cfg["bec_a_B"])
        except ReservoirValidationError as exc:
            raise ConfigError(str(exc)) from None
        w = np.geomspace(cfg["omega_max"] * 1e-5, cfg["omega_max"], cfg["n_samples"])
        try:
            t = bec.effective_spectrum(p, w, cfg["bec_model"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        table = spectral.TabulatedSpectrum(t.omega, t.j, window)
    fit = spectral.fit_effective_ohmicity(table)
    p1 = out / "spectrum.csv"
    table.to_csv(p1)
    p2 = out / "spectrum_fit.json"
    _write_json(
        p2,
        {
            "source": src,
            "s_eff": _r12(fit.s_eff),
            "stderr": _r12(fit.stderr),
            "window": [_r12(fit.window[0]), _r12(fit.window[1])],
            "n_points": fit.n_points,
        },
    )
    return [p1, p2]


RUNNERS = {
    "dephasing-scan": run_dephasing_scan,
    "bec-scan": run_bec_scan,
    "ising-scan": run_ising_scan,
    "mcwf-demo": run_mcwf_demo,
    "spectrum-fit": run_spectrum_fit,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nmprobe", description="Non-Markovianity probes of engineered reservoirs")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in RUNNERS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value parameter file")
        p.add_argument("--out", default=".", help="output directory (created if missing)")
        p.add_argument("--seed", type=int, default=0, help="master RNG seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads for scan cells")
        p.add_argument("-p", "--param", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.seed < 0 or args.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if args.threads < 1:
            raise ConfigError("threads must be at least 1")
        cfg = load_config(args.command, args.config, args.param)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        paths = RUNNERS[args.command](cfg, out, args.seed, args.threads)
    except ConfigError as exc:
        print(f"nmprobe: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"nmprobe: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for p in paths:
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
