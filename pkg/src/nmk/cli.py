"""Command-line front end.

    nmk ledger|iterate|sweep|expand|extract|tensors [--config PATH] [--out DIR]
        [--seed N] [--strict] [--verify]

Config files are flat ``key = value`` text (``#`` comments) and must set
``schema_version = 1``.  Unknown keys are rejected.  Exit codes: 0 ok,
2 config error, 3 precondition failure, 4 runtime failure, 5 verification
failure.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import math
import os
import sys
from pathlib import Path

import mpmath
import numpy as np

from . import coefficients, edge_expansion, graded, models, nash_moser, plotting
from .errors import ConfigError, NMKError, VerificationFailure
from .graded import GradedElement

log = logging.getLogger("nmk")

SCHEMA_VERSION = 1
COMMON_KEYS = {"schema_version", "command", "seed", "output_dir"}

DEFAULTS = {
    "ledger": {
        "family": "values", "d": "1", "delta": "1", "C": "1", "C1": "1", "C2": "1",
        "C_tilde": "1", "C_tilde3": "1", "C_hat": "1", "base_norm": "0", "s": "0.5",
        "tracked_t": "",
    },
    "iterate": {
        "preset": "fully-degenerate", "s": "0.5", "m": "", "d": "1", "kappa": "0.1",
        "a": "2 + cos t", "a_scale": "1e-5", "c": "1 + 1/2 sin t", "bandwidth": "64",
        "k_max": "6", "residual_tol": "1e-600", "dps": "auto",
    },
    "sweep": {
        "preset": "fully-degenerate", "d": "1", "m": "", "s_grid": "dyadic:1:8",
        "a": "2 + cos t", "a_scale": "1e-5", "c": "0", "kappa": "0", "bandwidth": "16",
        "run_iterations": "false", "k_max": "4", "workers": "2",
    },
    "expand": {"b_tilde": "cos t", "K": "1", "check_slope": "false"},
    "extract": {
        "input": "", "synthetic": "linear-B", "radii": "0.01,0.02,0.04,0.08,0.1",
        "n_theta": "32", "t_slices": "9", "t_min": "-1", "t_max": "1",
        "lipschitz": "1", "k": "1",
    },
    "tensors": {"n": "3,4,5", "trials": "100", "tol": "1e-12"},
}

SYNTHETIC = {
    "constant-A": lambda r, th, t: coefficients.z_power(r, th, 0.5),
    "linear-B": lambda r, th, t: t * coefficients.z_power(r, th, 1.5),
    "contaminated": lambda r, th, t: ((2 + np.cos(t)) * coefficients.z_power(r, th, 1.5)
                                      + coefficients.z_power(r, th, 3.5)),
}


# -- config ------------------------------------------------------------

def load_config(path: str | None, command: str) -> dict:
    params = dict(DEFAULTS[command])
    extra = {"seed": "0"}
    if path is None:
        return {**params, **extra}
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    parser.optionxform = str
    try:
        text = Path(path).read_text()
        parser.read_string("[config]\n" + text)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    raw = dict(parser["config"])
    if raw.get("schema_version") != str(SCHEMA_VERSION):
        raise ConfigError(f"config must set schema_version = {SCHEMA_VERSION}")
    if "command" in raw and raw["command"] != command:
        raise ConfigError(f"config is for '{raw['command']}', not '{command}'")
    unknown = set(raw) - set(params) - COMMON_KEYS
    if unknown:
        raise ConfigError(f"unknown keys for '{command}': {', '.join(sorted(unknown))}")
    for key in COMMON_KEYS & set(raw):
        extra[key] = raw.pop(key)
    params.update(raw)
    return {**params, **extra}


def _num(cfg, key, cast=float):
    try:
        return cast(cfg[key])
    except ValueError:
        raise ConfigError(f"{key} = {cfg[key]!r} is not a valid {cast.__name__}") from None


def _bool(cfg, key) -> bool:
    v = cfg[key].strip().lower()
    if v not in ("true", "false", "1", "0", "yes", "no"):
        raise ConfigError(f"{key} must be true or false")
    return v in ("true", "1", "yes")


def _int_list(text: str) -> list:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated integer list, got {text!r}") from None


def _s_grid(text: str) -> list:
    text = text.strip()
    if text.startswith("dyadic:"):
        try:
            _, lo, hi = text.split(":")
            return [2.0 ** -k for k in range(int(lo), int(hi) + 1)]
        except ValueError:
            raise ConfigError(f"bad dyadic grid {text!r}; use dyadic:LO:HI") from None
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"bad s grid {text!r}") from None


def _trig(text: str):
    try:
        return edge_expansion.parse_trigpoly(text)
    except NMKError as exc:
        raise ConfigError(str(exc)) from None


def _graded_from_trig(text: str, scale: float = 1.0) -> GradedElement:
    tp = _trig(text)
    if tp.is_zero():
        return GradedElement.zero()
    return GradedElement.from_modes({n: complex(v) * scale for n, v in tp.coeffs.items()})


def _model_from_cfg(cfg, s, d, m) -> models.MultiplicationModel:
    if cfg["preset"] not in models.PRESETS:
        raise ConfigError(f"unknown preset {cfg['preset']!r}; choose from {sorted(models.PRESETS)}")
    return models.PRESETS[cfg["preset"]](
        s=s, m=m, d=d, kappa=_num(cfg, "kappa"),
        a=_graded_from_trig(cfg["a"], _num(cfg, "a_scale")),
        c=_graded_from_trig(cfg["c"]), bandwidth=_num(cfg, "bandwidth", int),
        auto_precision=False)


# -- commands ----------------------------------------------------------

def cmd_ledger(cfg, args, out: Path) -> list:
    d = _num(cfg, "d", int)
    tracked = _int_list(cfg["tracked_t"]) or None
    if cfg["family"] == "declared":
        tc = models.declared_constants(_num(cfg, "s"), d, _num(cfg, "delta"))
    elif cfg["family"] == "values":
        base = _num(cfg, "base_norm")
        tc = nash_moser.TameConstants.from_values(
            d, _num(cfg, "delta"), _num(cfg, "C"), _num(cfg, "C1"), _num(cfg, "C2"),
            _num(cfg, "C_tilde"), _num(cfg, "C_tilde3"), _num(cfg, "C_hat"),
            base_norms=lambda s: base)
    else:
        raise ConfigError("family must be 'values' or 'declared'")
    ledger = nash_moser.compute_ledger(tc, tracked)
    lines = [ledger.summary()]
    lines += [f"  U_{t}: log = {v:.6g}" for t, v in ledger.log_U.items()]
    rows = ["quantity,log_value"]
    rows += [f"N,{math.log(ledger.N)!r}", f"T,{math.log(ledger.T)!r}", f"tau,{math.log(ledger.tau)!r}"]
    rows += [f"Vcal_{t},{v!r}" for t, v in ledger.log_Vcal.items()]
    rows += [f"V0,{ledger.log_V0!r}", f"V1,{ledger.log_V1!r}", f"V,{ledger.log_V!r}"]
    rows += [f"U_{t},{v!r}" for t, v in ledger.log_U.items()]
    rows += [f"C0,{ledger.log_C0!r}", f"theta0,{ledger.log_theta0!r}"]
    (out / "ledger.csv").write_text("\n".join(rows) + "\n")
    return lines


def cmd_iterate(cfg, args, out: Path) -> list:
    d = _num(cfg, "d", int)
    m = _num(cfg, "m", int) if cfg["m"] else nash_moser.required_m(d)
    model = _model_from_cfg(cfg, _num(cfg, "s"), d, m)
    if cfg["dps"] == "auto":
        model = model.with_auto_precision()
    elif cfg["dps"] not in ("", "none", "0"):
        from dataclasses import replace
        model = replace(model, dps=_num(cfg, "dps", int))
    try:
        tol = mpmath.mpf(cfg["residual_tol"])
    except ValueError:
        raise ConfigError(f"residual_tol = {cfg['residual_tol']!r} is not a number") from None
    ledger = model.ledger()
    failure = None
    try:
        u, trace = nash_moser.iterate(model, GradedElement.zero(), ledger,
                                      k_max=_num(cfg, "k_max", int), residual_tol=tol,
                                      strict=args.strict)
    except (nash_moser.BallExitError, nash_moser.DivergenceError) as exc:
        failure, trace, u = exc, exc.trace, None
    report = nash_moser.verify_lemma_bounds(trace, ledger)
    text = nash_moser.trace_to_csv(trace, report)
    (out / "trace.csv").write_text(text)
    plotting.plot_trace(nash_moser.read_trace_csv(text), out / "trace.svg")
    if u is not None:
        (out / "solution.json").write_text(graded.dumps(u) + "\n")
    lines = [
        f"model: {model.name}, s = {model.s}, m = {model.m}, d = {model.d}, kappa = {model.kappa}",
        f"precision: {'%d digits' % model.dps if model.dps else 'double'}",
        f"log10 ||phi(0)||_2d = {model.log10_phi0_norm():.6g}",
        f"log10 theta0^-4     = {-4 * ledger.log_theta0 / math.log(10):.6g}",
        f"hypothesis violated: {trace.hypothesis_violated}",
        f"termination: {trace.termination_reason}, steps = {trace.steps}",
        f"final residual: {mpmath.nstr(trace.final_residual, 6)}",
    ]
    if args.verify:
        lines.append(f"lemma checks: {'pass' if report.all_passed else 'FAIL ' + str(report.failures())}")
    if failure is not None:
        raise failure
    if args.verify and not report.all_passed:
        _write_summary(out, lines)
        raise VerificationFailure(f"lemma inequality violated: {report.failures()}")
    return lines


def cmd_sweep(cfg, args, out: Path) -> list:
    d = _num(cfg, "d", int)
    m = _num(cfg, "m", int) if cfg["m"] else nash_moser.required_m(d)
    grid = _s_grid(cfg["s_grid"])
    template = _model_from_cfg(cfg, grid[0], d, m)
    table = models.degenerate_sweep(template, grid, run_iterations=_bool(cfg, "run_iterations"),
                                    k_max=_num(cfg, "k_max", int),
                                    max_workers=_num(cfg, "workers", int))
    (out / "sweep.csv").write_text(table.to_csv())
    plotting.plot_sweep(table, out / "sweep.svg")
    lines = [
        f"slope log||B_s(0)^-1|| vs log s: {table.slope_B_inv:.6f}",
        f"slope log theta0 vs log s:       {table.slope_theta0:.6f} "
        f"(expected {table.expected_theta0_slope:.0f})",
    ]
    try:
        s1 = models.hypothesis_threshold(template)
        lines.append(f"hypothesis holds for s <= s1 = {s1:.12g}")
    except NMKError as exc:
        lines.append(f"threshold: {exc}")
    return lines


def cmd_expand(cfg, args, out: Path) -> list:
    b = _trig(cfg["b_tilde"])
    K = _num(cfg, "K", int)
    series = edge_expansion.schwartz_approximation(b, K)
    resid = edge_expansion.model_operator(series)
    (out / "series.json").write_text(edge_expansion.dumps(series) + "\n")
    lines = [f"u = {edge_expansion.pretty(series)}",
             f"residual order: {resid.order if not resid.is_zero() else 'none (exact)'}"]
    if _bool(cfg, "check_slope") and not resid.is_zero():
        slope = edge_expansion.fd_residual_slope(series, [2.0 ** -j for j in range(3, 9)])
        lines.append(f"finite-difference residual slope: {slope:.4f}")
    return lines


def cmd_extract(cfg, args, out: Path) -> list:
    if cfg["input"]:
        try:
            samples = coefficients.AnnulusSamples.from_csv(Path(cfg["input"]).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read samples: {exc}") from None
    else:
        if cfg["synthetic"] not in SYNTHETIC:
            raise ConfigError(f"unknown synthetic field {cfg['synthetic']!r}")
        radii = [float(x) for x in cfg["radii"].split(",")]
        ts = np.linspace(_num(cfg, "t_min"), _num(cfg, "t_max"), _num(cfg, "t_slices", int))
        samples = coefficients.sample_annulus(SYNTHETIC[cfg["synthetic"]], radii,
                                              _num(cfg, "n_theta", int), ts)
        (out / "samples.csv").write_text(samples.to_csv())
    lc = coefficients.extract_AB(samples)
    (out / "coefficients.csv").write_text(lc.to_csv())
    spacing = float(np.min(np.diff(lc.t))) if len(lc.t) > 1 else 0.0
    ok, low = coefficients.k_nondegeneracy_check(lc.B, _num(cfg, "k", int),
                                                 _num(cfg, "lipschitz"), spacing)
    lines = ["t, A, B, residual"]
    lines += [f"{t:+.4f}  A = {a.real:+.3e}{a.imag:+.3e}i  B = {b.real:+.10f}{b.imag:+.3e}i  "
              f"res = {r:.2e}" for t, a, b, r in zip(lc.t, lc.A, lc.B, lc.fit_residual)]
    lines.append(f"nondegenerate: {ok} (min |B| = {low:.6g})")
    return lines


def cmd_tensors(cfg, args, out: Path) -> list:
    rng = np.random.default_rng(int(cfg["seed"]) if args.seed is None else args.seed)
    trials = _num(cfg, "trials", int)
    tol = _num(cfg, "tol")
    worst_alpha = worst_trip = 0.0
    rows = ["n,alpha_error,round_trip_error"]
    for n in _int_list(cfg["n"]):
        for _ in range(trials):
            fr = coefficients.random_frame(rng, n)
            ht = coefficients.hat_T_from_alpha(fr)
            ea = float(np.max(np.abs(ht @ coefficients.raise_index(fr.omega, fr.g) - fr.alpha)))
            h = coefficients.g_variation_from_hat_T(ht, fr.g, n)
            et = float(np.max(np.abs(coefficients.hat_T_from_g_variation(h, fr.g) - ht)))
            worst_alpha, worst_trip = max(worst_alpha, ea), max(worst_trip, et)
            rows.append(f"{n},{ea!r},{et!r}")
    (out / "tensors.csv").write_text("\n".join(rows) + "\n")
    lines = [f"max |hatT(omega#, .) - alpha| = {worst_alpha:.3e}",
             f"max round-trip error          = {worst_trip:.3e}"]
    if worst_alpha > tol or worst_trip > tol:
        _write_summary(out, lines)
        raise VerificationFailure(f"tensor identity error exceeds {tol}")
    return lines


COMMANDS = {"ledger": cmd_ledger, "iterate": cmd_iterate, "sweep": cmd_sweep,
            "expand": cmd_expand, "extract": cmd_extract, "tensors": cmd_tensors}


def _write_summary(out: Path, lines: list) -> None:
    (out / "summary.txt").write_text("\n".join(lines) + "\n")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nmk", description="Constant-tracked Nash-Moser toolkit")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", metavar="PATH")
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--seed", type=int)
    p.add_argument("--strict", action="store_true",
                   help="treat a violated starting hypothesis as an error")
    p.add_argument("--verify", action="store_true", help="run lemma checks after iterate")
    return p


def main(argv=None) -> int:
    level = os.environ.get("NMK_LOG", "error").upper()
    logging.basicConfig(level=getattr(logging, level, logging.ERROR),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.command)
        out = Path(args.out or cfg.get("output_dir") or f"nmk-{args.command}")
        out.mkdir(parents=True, exist_ok=True)
        log.info("running %s into %s", args.command, out)
        lines = COMMANDS[args.command](cfg, args, out)
        _write_summary(out, lines)
        print("\n".join(lines))
        return 0
    except NMKError as exc:
        print(f"nmk: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
