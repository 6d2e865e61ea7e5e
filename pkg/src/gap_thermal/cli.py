"""Command-line front end: ``gap-thermal model|sample|diagnose|bohm``.

Every command reads one JSON config (``--config``), applies flag overrides,
and echoes the effective config into its JSON outputs. CSV outputs carry the
config hash in their JSON header/footer line.

Exit codes: 0 success, 2 config error, 3 I/O error, 4 internal failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from .bohm import integrate_trajectory
from .errors import InvalidParameterError, ResourceLimitError, UnsupportedModelError
from .io import (canonical_json, read_wavefunction_csv, report_json, sha256,
                 spectrum_from_dict, spectrum_hash, spectrum_to_dict, trajectory_csv,
                 wavefunction_csv, write_text)
from .models import (DEFAULT_TAIL_MASS, build_box_model, build_circle_model,
                     build_custom_model, thermalize)
from .rng import GENERATOR_NAME, RandomSeed
from .sampler import SAMPLERS, WaveFunction

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_INTERNAL = 0, 2, 3, 4

DEFAULT_SAMPLES = {"model": 1, "sample": 1, "diagnose": 10_000, "bohm": 1}

DIAGNOSTIC_DEFAULTS = {
    "covariance": {},
    "sobolev": {"ell": [1, 2, 3]},
    "exp_weighted": {"alpha": [0.25, 0.5]},
    "domain_power": {"ell": [1, 2]},
    "analytic_vector": {"epsilon": None},  # None -> beta/4
    "smoothness": {"ell": [0, 1, 2, 3, 4], "alpha": [0.5]},
    "gaussian_modulus": {"sigma": 1.0, "samples": 1_000_000},
    "increment_variance": {"q": 1.0, "dq": [1e-1, 1e-2, 1e-3]},
    "holder": {"q": 1.0, "dq": [1e-2, 3e-3, 1e-3, 3e-4, 1e-4]},
}


class ConfigError(Exception):
    pass


# -- config ---------------------------------------------------------------

def load_config(path, overrides: dict) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    for k, v in overrides.items():
        if v is not None:
            cfg[k] = v
    return cfg


def _model_section(cfg) -> dict:
    model = dict(cfg.get("model", {}))
    for k in ("kind", "N", "d", "m", "hbar", "symmetry", "weights", "eigenfunctions"):
        if k in cfg and k not in model:
            model[k] = cfg[k]
    if "kind" not in model:
        raise ConfigError("config needs a model kind")
    return model


def build_spectrum(cfg):
    spec = _model_section(cfg)
    kind = spec["kind"]
    m, hbar = float(spec.get("m", 1.0)), float(spec.get("hbar", 1.0))
    beta = cfg.get("beta")
    if kind == "custom":
        if "weights" not in spec:
            raise ConfigError("custom model needs weights")
        _, spectrum = build_custom_model([tuple(w) for w in spec["weights"]],
                                         eigenfunctions=spec.get("eigenfunctions", "circle"),
                                         beta=beta, m=m, hbar=hbar)
        return spectrum
    if beta is None:
        raise ConfigError("config needs beta")
    if kind == "circle":
        model = build_circle_model(m, hbar)
    elif kind == "box":
        model = build_box_model(int(spec.get("N", 1)), int(spec.get("d", 1)), m, hbar,
                                spec.get("symmetry", "none"))
    else:
        raise ConfigError(f"unknown model kind {kind!r}")
    return thermalize(model, float(beta), float(cfg.get("tail_mass", DEFAULT_TAIL_MASS)),
                      cutoff=cfg.get("cutoff"))


def _samples(cfg, command) -> int:
    n = cfg.get("samples")
    n = DEFAULT_SAMPLES[command] if n is None else int(n)
    if n < 1:
        raise ConfigError("samples must be >= 1")
    return n


def _seed(cfg) -> int:
    return int(cfg.get("seed", 0))


def _out(cfg) -> Path:
    return Path(cfg.get("out", "out"))


def _sampler_name(cfg) -> str:
    name = cfg.get("sampler", "GAP")
    if name not in SAMPLERS:
        raise ConfigError(f"unknown sampler {name!r}")
    return name


# keys that change where or how fast outputs are produced, never their content
_UNHASHED = ("out", "workers")


def config_hash(cfg) -> str:
    return sha256(canonical_json({k: v for k, v in cfg.items() if k not in _UNHASHED}))


def _mkdir(path: Path):
    path.mkdir(parents=True, exist_ok=True)


# -- commands -------------------------------------------------------------

def cmd_model(cfg) -> int:
    spectrum = build_spectrum(cfg)
    doc = spectrum_to_dict(spectrum)
    doc["config"] = cfg
    doc["config_hash"] = config_hash(cfg)
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    sys.stdout.write(text)
    if "out" in cfg:
        _mkdir(_out(cfg))
        write_text(_out(cfg) / "model.json", text)
    return EXIT_OK


def _mode_label(spectrum, k):
    return [int(x) for x in spectrum.indices[int(k)]]


def cmd_sample(cfg) -> int:
    spectrum = build_spectrum(cfg)
    M = _samples(cfg, "sample")
    seed = _seed(cfg)
    name = _sampler_name(cfg)
    draw = SAMPLERS[name]
    out = _out(cfg)
    chash = config_hash(cfg)
    shash = spectrum_hash(spectrum)
    _mkdir(out)

    def one(i):
        rs = RandomSeed(seed, i)
        psi = draw(spectrum, rs)
        header = {"provenance": name, "seed": seed, "stream": i, "generator": GENERATOR_NAME,
                  "spectrum_hash": shash, "config_hash": chash}
        entry = {"file": f"sample_{i:05d}.csv", "stream": i}
        if psi.mixture_mode is not None:
            header["mixture_mode"] = _mode_label(spectrum, psi.mixture_mode)
            entry["mixture_mode"] = header["mixture_mode"]
        write_text(out / entry["file"], wavefunction_csv(psi, header))
        return entry

    workers = int(cfg.get("workers", 1))
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        entries = list(pool.map(one, range(M)))

    write_text(out / "model.json", json.dumps(spectrum_to_dict(spectrum), indent=2, sort_keys=True) + "\n")
    manifest = {"config": cfg, "config_hash": chash, "generator": GENERATOR_NAME,
                "sampler": name, "seed": seed, "spectrum_hash": shash, "samples": entries,
                "created": datetime.now(timezone.utc).isoformat()}
    write_text(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def _load_saved(directory: Path):
    with open(directory / "model.json", encoding="utf-8") as fh:
        spectrum = spectrum_from_dict(json.load(fh))
    with open(directory / "manifest.json", encoding="utf-8") as fh:
        manifest = json.load(fh)
    coeffs = []
    for e in manifest["samples"]:
        psi, _ = read_wavefunction_csv(directory / e["file"], spectrum)
        coeffs.append(psi.coefficients)
    return spectrum, WaveFunction(spectrum, np.array(coeffs), manifest.get("sampler", "derived"))


def _mc(functional, name, spectrum, M, seed, stream, saved):
    """(mean, stderr) of a per-sample functional over fresh draws or saved samples."""
    if saved is not None:
        v = np.asarray(functional(saved), dtype=float)
        se = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else float("nan")
        return float(v.mean()), se
    return dg.monte_carlo_mean(functional, name, spectrum, M, RandomSeed(seed, stream))


def run_diagnostics(cfg, spectrum, saved=None):
    """Evaluate the configured diagnostics; returns (report, holder_estimate or None)."""
    wanted = cfg.get("diagnostics")
    if wanted is None:
        wanted = {k: {} for k in DIAGNOSTIC_DEFAULTS}
    elif isinstance(wanted, list):
        wanted = {k: {} for k in wanted}
    unknown = set(wanted) - set(DIAGNOSTIC_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown diagnostic(s): {', '.join(sorted(unknown))}")
    name = _sampler_name(cfg)
    M = _samples(cfg, "diagnose")
    seed = _seed(cfg)
    report = dg.DiagnosticsReport()
    holder = None
    # one RNG stream per diagnostic so adding one does not perturb the others
    streams = {k: i + 1 for i, k in enumerate(DIAGNOSTIC_DEFAULTS)}

    for key, params in wanted.items():
        p = dict(DIAGNOSTIC_DEFAULTS[key])
        p.update(params or {})
        st = streams[key]
        if key == "covariance":
            if saved is not None:
                c = saved.coefficients
                a = np.abs(c) ** 2
                p_hat, se = a.mean(axis=0), a.std(axis=0, ddof=1) / math.sqrt(len(a))
            else:
                from .sampler import estimate_covariance
                est = estimate_covariance(name, spectrum, max(M, 100), RandomSeed(seed, st))
                p_hat, se = est.p_hat, est.stderr
            z = np.abs(p_hat - spectrum.weights) / se
            report.add("covariance_max_z", dg.DiagnosticEntry(float(np.max(z)), params={"sampler": name},
                                                              check=bool(np.max(z) <= 5)))
        elif key == "sobolev":
            for ell in p["ell"]:
                w = dg.sobolev_weights(spectrum, ell)
                mean, se = _mc(lambda b: dg.weighted_sum(b, w), name, spectrum, M, seed, st, saved)
                report.add(f"sobolev_l{ell}", dg.DiagnosticEntry(mean, dg.expected_sum(spectrum, w), se,
                                                                 {"ell": ell}))
        elif key == "exp_weighted":
            for alpha in p["alpha"]:
                w = dg.exp_weights(spectrum, alpha)
                mean, se = _mc(lambda b: dg.weighted_sum(b, w), name, spectrum, M, seed, st, saved)
                report.add(f"exp_weighted_a{alpha}", dg.DiagnosticEntry(mean, dg.expected_sum(spectrum, w), se,
                                                                        {"alpha": alpha}))
        elif key == "domain_power":
            for ell in p["ell"]:
                w = spectrum.energies ** (2 * ell)
                mean, se = _mc(lambda b: dg.weighted_sum(b, w), name, spectrum, M, seed, st, saved)
                report.add(f"domain_power_l{ell}", dg.DiagnosticEntry(mean, dg.expected_sum(spectrum, w), se,
                                                                      {"ell": ell}))
        elif key == "analytic_vector":
            eps = p["epsilon"]
            if eps is None:
                if spectrum.beta is None:
                    raise ConfigError("analytic_vector needs epsilon when beta is unset")
                eps = spectrum.beta / 4.0
            # closed-form mean holds for Gaussian coefficients only
            mean, se = _mc(lambda b: dg.analytic_vector_sum(b, eps), "G", spectrum, M, seed, st,
                           saved if saved is not None and saved.provenance == "G" else None)
            report.add("analytic_vector", dg.DiagnosticEntry(
                mean, dg.analytic_vector_expectation(spectrum, eps), se,
                {"epsilon": eps, "sampler": "G",
                 "in_regime": dg.analytic_vector_in_regime(spectrum, eps)}))
        elif key == "smoothness":
            doubled = _doubled(cfg, spectrum)
            for ell in p["ell"]:
                a = dg.smoothness_condition(spectrum, ell)
                rel = abs(dg.smoothness_condition(doubled, ell) - a) / a if doubled is not None else None
                report.add(f"smoothness_l{ell}", dg.DiagnosticEntry(
                    a, params={"ell": ell, "cutoff_doubling_rel_change": rel},
                    check=None if rel is None else rel < 1e-8))
            for alpha in p["alpha"]:
                a = dg.smoothness_condition(spectrum, alpha=alpha)
                rel = abs(dg.smoothness_condition(doubled, alpha=alpha) - a) / a if doubled is not None else None
                report.add(f"analyticity_a{alpha}", dg.DiagnosticEntry(
                    a, params={"alpha": alpha, "cutoff_doubling_rel_change": rel},
                    check=None if rel is None else rel < 1e-8))
        elif key == "gaussian_modulus":
            sigma, n = float(p["sigma"]), int(p["samples"])
            mean, se = dg.gaussian_modulus_monte_carlo(sigma, n, RandomSeed(seed, st))
            report.add("gaussian_modulus", dg.DiagnosticEntry(mean, dg.gaussian_modulus_moment(sigma), se,
                                                              {"sigma": sigma, "samples": n}))
        elif key == "increment_variance":
            q = float(p["q"])
            for dq in p["dq"]:
                mean, se = _mc(lambda b: np.abs(dg.increments(b, q, dq)[..., 0]) ** 2, "G",
                               spectrum, M, seed, st, None)
                exact = dg.increment_variance(spectrum, q, dq)
                report.add(f"increment_variance_dq{dq}", dg.DiagnosticEntry(
                    mean, exact, se, {"q": q, "dq": dq, "ratio_to_dq2": exact / dq**2}))
        elif key == "holder":
            holder = dg.holder_fit(spectrum, float(p["q"]), p["dq"], max(M, 1000), RandomSeed(seed, st))
            value = 0.0 if holder.degenerate else holder.exponent
            report.add("holder_exponent", dg.DiagnosticEntry(
                value, params={"q": p["q"], "degenerate": holder.degenerate, **holder.annotations},
                check=None if holder.degenerate else 0.9 <= holder.exponent <= 1.1))
    return report, holder


def _doubled(cfg, spectrum):
    if spectrum.model.kind == "custom" or spectrum.radius is None:
        return None
    return thermalize(spectrum.model, spectrum.beta, spectrum.tail_mass, cutoff=2 * max(spectrum.radius, 1))


def cmd_diagnose(cfg) -> int:
    saved = None
    if cfg.get("inputs"):
        spectrum, saved = _load_saved(Path(cfg["inputs"]))
    else:
        spectrum = build_spectrum(cfg)
    report, holder = run_diagnostics(cfg, spectrum, saved)
    out = _out(cfg)
    _mkdir(out)
    chash = config_hash(cfg)
    text = report_json(report, {"config": cfg, "config_hash": chash,
                                "spectrum_hash": spectrum_hash(spectrum)})
    write_text(out / "report.json", text)
    if holder is not None:
        lines = ["# " + canonical_json({"config_hash": chash}), "dq,rms"]
        lines += [f"{dq!r},{r!r}" for dq, r in zip(holder.dq.tolist(), holder.rms.tolist())]
        write_text(out / "holder.csv", "\n".join(lines) + "\n")
    sys.stdout.write(text)
    return EXIT_OK


def _initial_wavefunction(cfg, spectrum, seed):
    init = cfg.get("bohm", {}).get("initial", "sample")
    if init == "sample":
        return SAMPLERS[_sampler_name(cfg)](spectrum, RandomSeed(seed, 0))
    if isinstance(init, dict) and "mode" in init:
        pos = spectrum.position()
        key = tuple(int(x) for x in np.atleast_1d(init["mode"]))
        if key not in pos:
            raise ConfigError(f"mode {key} is not retained")
        return WaveFunction.eigenstate(spectrum, pos[key])
    if isinstance(init, dict) and "coefficients" in init:
        pos = spectrum.position()
        c = np.zeros(spectrum.size, dtype=complex)
        for row in init["coefficients"]:
            idx, re, im = row[:-2], row[-2], row[-1]
            key = tuple(int(x) for x in (idx[0] if len(idx) == 1 and isinstance(idx[0], list) else idx))
            if key not in pos:
                raise ConfigError(f"mode {key} is not retained")
            c[pos[key]] = complex(re, im)
        return WaveFunction(spectrum, c)
    if isinstance(init, dict) and "file" in init:
        psi, _ = read_wavefunction_csv(init["file"], spectrum)
        return psi
    raise ConfigError(f"unrecognized bohm.initial {init!r}")


def cmd_bohm(cfg) -> int:
    spectrum = build_spectrum(cfg)
    seed = _seed(cfg)
    b = cfg.get("bohm", {})
    psi = _initial_wavefunction(cfg, spectrum, seed)
    if "t_grid" in b:
        t_grid = np.asarray(b["t_grid"], dtype=float)
    else:
        t_grid = np.linspace(0.0, float(b.get("t_end", 1.0)), int(b.get("steps", 10)) + 1)
    q0s = b.get("q0", [1.0])
    tol = float(b.get("tol", 1e-8))
    masses = b.get("masses")
    out = _out(cfg)
    _mkdir(out)
    chash = config_hash(cfg)
    shash = spectrum_hash(spectrum)

    def one(j):
        traj = integrate_trajectory(psi, q0s[j], t_grid, masses=masses, tol=tol)
        footer = {"status": traj.status, "message": traj.message, "config_hash": chash,
                  "spectrum_hash": shash, "seed": seed, "q0": q0s[j],
                  "min_density": min((s.min_density for s in traj.states), default=None),
                  "rejected_steps": traj.states[-1].rejected_steps if traj.states else 0}
        if not traj.states:
            footer["message"] = "aborted at the starting point"
        name = f"trajectory_{j:03d}.csv"
        write_text(out / name, trajectory_csv(traj, footer))
        return {"file": name, "status": traj.status}

    with ThreadPoolExecutor(max_workers=max(1, int(cfg.get("workers", 1)))) as pool:
        entries = list(pool.map(one, range(len(q0s))))
    summary = {"config": cfg, "config_hash": chash, "trajectories": entries}
    sys.stdout.write(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


COMMANDS = {"model": cmd_model, "sample": cmd_sample, "diagnose": cmd_diagnose, "bohm": cmd_bohm}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="gap-thermal",
                                     description="Thermal random wave functions and their regularity.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON experiment config")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--samples", type=int)
    parser.add_argument("--beta", type=float)
    parser.add_argument("--out")
    parser.add_argument("--workers", type=int)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = load_config(args.config, {"seed": args.seed, "samples": args.samples,
                                        "beta": args.beta, "out": args.out,
                                        "workers": args.workers})
        return COMMANDS[args.command](cfg)
    except (ConfigError, InvalidParameterError, UnsupportedModelError, ResourceLimitError,
            KeyError, TypeError) as exc:
        print(f"gap-thermal: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"gap-thermal: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # invariant failures
        print(f"gap-thermal: internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
