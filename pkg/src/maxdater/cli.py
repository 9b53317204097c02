"""Command-line entry point: configuration loading, subcommand dispatch, and
artifact serialization.

One JSON config describes the model and per-subcommand parameters; the
subcommand is selected with --subcommand.  Artifacts (JSON always, CSV for
grids) land in the output directory and embed the master seed and a hash of
the config, so identical (config, seed) runs produce byte-identical files.

Exit status: 0 on success, 1 when a property check fails, 2 on configuration
errors.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from typing import Optional

import numpy as np

from .asymptotics import multiserver_exact, tandem_exact, tandem_w2, veraverbeke
from .bounds import (
    derive_seed,
    estimate_gamma0,
    sandwich_check,
    select_L,
    stability_verdict,
)
from .distributions import RngStream, dist_from_config
from .estimation import (
    HorizonPolicy,
    big_jump_diagnostic,
    check_assumption_H,
    comonotone_vector_sampler,
    estimate_tail,
    independent_vector_sampler,
    interarrival_insensitivity_check,
    jackson_work_sampler,
    moment_order_check,
)
from .models import JacksonModel, model_from_config
from .netcore import Kernel, PerturbationPlan, verify_axioms, verify_dater_lemmas

SUBCOMMANDS = ("axioms", "gamma0", "bounds", "tail", "asymptote", "moments",
               "bigjump", "hcheck", "insensitivity")


class ConfigError(Exception):
    pass


def _check_keys(section: str, cfg: dict, known: set) -> None:
    extra = set(cfg) - known
    if extra:
        raise ConfigError(f"unknown fields in '{section}': {sorted(extra)}")


def _policy(cfg: dict) -> HorizonPolicy:
    _check_keys("horizon", cfg, {"n0", "n_max"})
    return HorizonPolicy(n0=int(cfg.get("n0", 16)), n_max=int(cfg.get("n_max", 16384)))


def _formula_from_config(cfg: Optional[dict]):
    """Build a level -> asymptote callable from an asymptote description."""
    if cfg is None:
        return None, None
    kind = cfg.get("kind")
    if kind == "veraverbeke":
        _check_keys("asymptote", cfg, {"kind", "d", "a", "b", "dist"})
        dist = dist_from_config(cfg["dist"])
        d, a, b = float(cfg["d"]), float(cfg["a"]), float(cfg["b"])
        return (lambda x: veraverbeke(d, a, b, dist, x)), True
    if kind == "tandem_exact":
        _check_keys("asymptote", cfg, {"kind", "d1", "d2", "a", "b1", "b2", "dist"})
        dist = dist_from_config(cfg["dist"])
        d1, d2 = float(cfg["d1"]), float(cfg["d2"])
        a, b1, b2 = float(cfg["a"]), float(cfg["b1"]), float(cfg["b2"])
        return (lambda x: tandem_exact(d1, d2, a, b1, b2, dist, x)), True
    if kind == "tandem_w2":
        _check_keys("asymptote", cfg,
                    {"kind", "d1", "d2", "a", "b1", "b2", "dist", "variances"})
        dist = dist_from_config(cfg["dist"])
        d1, d2 = float(cfg["d1"]), float(cfg["d2"])
        a, b1, b2 = float(cfg["a"]), float(cfg["b1"]), float(cfg["b2"])
        variances = tuple(cfg["variances"]) if "variances" in cfg else None
        res = tandem_w2(a, b1, b2, d1, d2, dist, 1.0, variances=variances)
        return (lambda x: tandem_w2(a, b1, b2, d1, d2, dist, x,
                                    variances=variances).value), res.certified
    if kind == "multiserver":
        _check_keys("asymptote", cfg, {"kind", "a", "b", "m", "dist"})
        dist = dist_from_config(cfg["dist"])
        a, b, m = float(cfg["a"]), float(cfg["b"]), int(cfg["m"])
        return (lambda x: multiserver_exact(a, b, m, dist, x)), True
    raise ConfigError(f"unknown asymptote kind {cfg.get('kind')!r}")


# ---------------------------------------------------------------------------
# Subcommand runners; each returns (exit_code, json_payload, csv_spec)
# where csv_spec is (filename, header, rows) or None.
# ---------------------------------------------------------------------------


def _run_axioms(config: dict, seed: int, kernel: Optional[Kernel] = None):
    cfg = config.get("axioms", {})
    _check_keys("axioms", cfg, {"windows", "min_size", "max_size"})
    kernel = kernel if kernel is not None else model_from_config(config["model"])
    windows = int(cfg.get("windows", 100))
    lo = int(cfg.get("min_size", 1))
    hi = int(cfg.get("max_size", 64))
    rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "axioms:sizes")))
    failures = []
    checked = 0
    for w_idx in range(windows):
        size = int(rng.integers(lo, hi + 1))
        window = kernel.sample_window(-size + 1, 0,
                                      RngStream(derive_seed(seed, "axioms"), w_idx))
        report = verify_axioms(kernel, window, PerturbationPlan(),
                               RngStream(derive_seed(seed, "axioms:perturb"), w_idx))
        if size >= 2:
            split = int(rng.integers(window.m, window.n))
            report.update(verify_dater_lemmas(kernel, window, split))
        checked += 1
        for name, res in report.items():
            if not res.passed:
                failures.append({"window": w_idx, "check": name, **res.witness})
    payload = {"kernel": kernel.name, "windows": checked,
               "failures": failures, "passed": not failures}
    return (0 if not failures else 1), payload, None


def _run_gamma0(config: dict, seed: int):
    cfg = config.get("gamma0", {})
    _check_keys("gamma0", cfg, {"horizon", "replications"})
    kernel = model_from_config(config["model"])
    horizon = int(cfg.get("horizon", 512))
    reps = int(cfg.get("replications", 200))
    est = estimate_gamma0(kernel, horizon, reps, derive_seed(seed, "gamma0"))
    verdict = stability_verdict(kernel, est)
    payload = {**est.as_dict(), "verdict": verdict}
    return 0, payload, None


def _run_bounds(config: dict, seed: int):
    cfg = config.get("bounds", {})
    _check_keys("bounds", cfg, {"L", "delta", "windows", "blocks"})
    kernel = model_from_config(config["model"])
    delta = float(cfg.get("delta", 0.1))
    L_cfg = cfg.get("L", "auto")
    if L_cfg == "auto":
        L = select_L(kernel, derive_seed(seed, "select_L"), delta=delta)
    else:
        L = int(L_cfg)
    windows = int(cfg.get("windows", 200))
    blocks = int(cfg.get("blocks", 6))
    violations = 0
    worst = None
    for i in range(windows):
        stream = RngStream(derive_seed(seed, "bounds"), i)
        window = kernel.sample_window(-(blocks * L) + 1, 0, stream)
        rep = sandwich_check(kernel, window, L)
        if not rep.ok:
            violations += 1
        margin = min(rep.upper_margin,
                     rep.lower_margin if rep.lower_margin is not None else rep.upper_margin)
        worst = margin if worst is None else min(worst, margin)
    payload = {"L": L, "auto_L": L_cfg == "auto", "windows": windows,
               "violations": violations, "worst_margin": worst}
    return (0 if violations == 0 else 1), payload, None


def _run_tail(config: dict, seed: int, threads: int = 1):
    cfg = config.get("tail", {})
    _check_keys("tail", cfg, {"levels", "replications", "horizon", "asymptote",
                              "statistic", "chunk_size"})
    kernel = model_from_config(config["model"])
    formula, _certified = _formula_from_config(cfg.get("asymptote"))
    est = estimate_tail(kernel,
                        [float(x) for x in cfg["levels"]],
                        int(cfg.get("replications", 100_000)),
                        _policy(cfg.get("horizon", {})),
                        derive_seed(seed, "tail"),
                        formula=formula,
                        statistic=cfg.get("statistic", "dater"),
                        chunk_size=int(cfg.get("chunk_size", 65536)),
                        threads=threads)
    rows = est.rows()
    payload = {"replications": est.replications, "censored": est.censored,
               "censor_fraction": est.censor_fraction, "tainted": est.tainted,
               "rows": rows}
    csv_spec = ("tail.csv", est.CSV_HEADER.split(","), [
        [r["x"], r["p_hat"], r["ci_lo"], r["ci_hi"],
         "" if r["formula"] is None else r["formula"],
         "" if r["ratio"] is None else r["ratio"], r["censor_frac"]]
        for r in rows])
    return 0, payload, csv_spec


def _run_asymptote(config: dict, seed: int):
    cfg = config.get("asymptote", {})
    if "levels" not in cfg:
        raise ConfigError("asymptote needs a 'levels' grid")
    levels = [float(x) for x in cfg["levels"]]
    spec = {k: v for k, v in cfg.items() if k != "levels"}
    formula, certified = _formula_from_config(spec)
    rows = [[x, formula(x), bool(certified)] for x in levels]
    payload = {"rows": [{"x": x, "formula_value": v, "certified": c}
                        for x, v, c in rows]}
    return 0, payload, ("asymptote.csv", ["x", "formula_value", "certified_flag"], rows)


def _run_moments(config: dict, seed: int):
    cfg = config.get("moments", {})
    _check_keys("moments", cfg, {"service_index", "samples", "k", "horizon"})
    kernel = model_from_config(config["model"])
    report = moment_order_check(kernel, float(cfg["service_index"]),
                                _policy(cfg.get("horizon", {})),
                                derive_seed(seed, "moments"),
                                samples=int(cfg.get("samples", 200_000)),
                                k=int(cfg.get("k", 1000)))
    return 0, report.as_dict(), None


def _run_bigjump(config: dict, seed: int):
    cfg = config.get("bigjump", {})
    _check_keys("bigjump", cfg, {"level", "thetas", "target", "budget", "horizon"})
    kernel = model_from_config(config["model"])
    report = big_jump_diagnostic(kernel, float(cfg["level"]),
                                 _policy(cfg.get("horizon", {})),
                                 derive_seed(seed, "bigjump"),
                                 thetas=tuple(cfg.get("thetas", (0.1, 0.25, 0.5))),
                                 target=int(cfg.get("target", 200)),
                                 budget=int(cfg.get("budget", 1_000_000)))
    return 0, report.as_dict(), None


def _run_hcheck(config: dict, seed: int):
    cfg = config.get("hcheck", {})
    _check_keys("hcheck", cfg, {"vector", "levels", "samples"})
    vec = cfg["vector"]
    kind = vec.get("kind")
    if kind == "independent":
        sampler = independent_vector_sampler([dist_from_config(d) for d in vec["dists"]])
    elif kind == "comonotone":
        sampler = comonotone_vector_sampler(dist_from_config(vec["dist"]), int(vec["r"]))
    elif kind == "jackson":
        model = model_from_config(config["model"])
        if not isinstance(model, JacksonModel):
            raise ConfigError("the jackson work vector needs a jackson model")
        sampler = jackson_work_sampler(model)
    else:
        raise ConfigError(f"unknown vector kind {kind!r}")
    report = check_assumption_H(sampler, [float(x) for x in cfg["levels"]],
                                int(cfg.get("samples", 200_000)),
                                derive_seed(seed, "hcheck"))
    return 0, report.as_dict(), None


def _run_insensitivity(config: dict, seed: int):
    cfg = config.get("insensitivity", {})
    _check_keys("insensitivity", cfg, {"a", "levels", "replications", "horizon"})
    kernel = model_from_config(config["model"])
    report = interarrival_insensitivity_check(
        kernel, float(cfg["a"]), [float(x) for x in cfg["levels"]],
        int(cfg.get("replications", 100_000)), _policy(cfg.get("horizon", {})),
        derive_seed(seed, "insensitivity"))
    code = 1 if report.mismatch else 0
    return code, report.as_dict(), None


_RUNNERS = {
    "axioms": _run_axioms,
    "gamma0": _run_gamma0,
    "bounds": _run_bounds,
    "tail": _run_tail,
    "asymptote": _run_asymptote,
    "moments": _run_moments,
    "bigjump": _run_bigjump,
    "hcheck": _run_hcheck,
    "insensitivity": _run_insensitivity,
}

_TOP_LEVEL_KEYS = {"model", "seed", *SUBCOMMANDS}


def run(config: dict, subcommand: str, seed: int, out_dir: str,
        kernel: Optional[Kernel] = None, threads: int = 1) -> int:
    """Dispatch one subcommand and write its artifacts; returns the exit code.

    ``kernel`` overrides the config's model (used by tests to inject kernels
    that deliberately violate the axioms).  ``threads`` caps the worker pool
    of replication-parallel subcommands; results are thread-count invariant.
    """
    _check_keys("config", config, _TOP_LEVEL_KEYS)
    if subcommand not in _RUNNERS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    if subcommand == "axioms":
        code, payload, csv_spec = _run_axioms(config, seed, kernel=kernel)
    elif subcommand == "tail":
        code, payload, csv_spec = _run_tail(config, seed, threads=threads)
    else:
        code, payload, csv_spec = _RUNNERS[subcommand](config, seed)

    os.makedirs(out_dir, exist_ok=True)
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    meta = {"seed": seed, "config_sha256": hashlib.sha256(blob).hexdigest(),
            "subcommand": subcommand}
    with open(os.path.join(out_dir, f"{subcommand}.json"), "w") as fh:
        json.dump({**meta, "result": payload}, fh, sort_keys=True, indent=2)
        fh.write("\n")
    if csv_spec is not None:
        filename, header, rows = csv_spec
        with open(os.path.join(out_dir, filename), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
    print(f"{subcommand}: {'ok' if code == 0 else 'CHECK FAILED'} "
          f"(seed={seed}, out={out_dir})")
    return code


def main(argv: Optional[list] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="maxdater",
        description="simulate and analyze maximal daters of queueing networks")
    parser.add_argument("--config", required=True, help="path to the JSON config")
    parser.add_argument("--subcommand", required=True, choices=SUBCOMMANDS)
    parser.add_argument("--seed", type=int, default=None,
                        help="master seed (overrides the config)")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    args = parser.parse_args(argv)

    try:
        with open(args.config) as fh:
            config = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    seed = args.seed if args.seed is not None else int(config.get("seed", 0))
    try:
        return run(config, args.subcommand, seed, args.out,
                   threads=max(1, args.threads))
    except (ConfigError, ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
