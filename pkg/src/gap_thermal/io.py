"""File formats: model JSON, coefficient CSV, trajectory CSV, report JSON.

All text is UTF-8 with LF line endings. Floats are written with ``repr`` so
they round-trip exactly, which keeps outputs byte-identical across runs.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path

import numpy as np

from .errors import InvalidParameterError
from .models import SpectralModel, ThermalSpectrum, build_custom_model

HEADER_PREFIX = "# "


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def spectrum_to_dict(spectrum: ThermalSpectrum) -> dict:
    model = spectrum.model
    return {
        "kind": model.kind,
        "N": model.N,
        "d": model.d,
        "m": model.m,
        "hbar": model.hbar,
        "beta": spectrum.beta,
        "tail_mass": spectrum.tail_mass,
        "symmetry": model.symmetry,
        "basis": model.basis,
        "cutoff": spectrum.radius,
        "Z_trunc": spectrum.z_trunc,
        "tail_bound": spectrum.tail_bound,
        "energy_offset": spectrum.energy_offset,
        "modes": [
            {"index": [int(x) for x in n], "energy": float(e), "weight": float(p)}
            for n, e, p in zip(spectrum.indices, spectrum.energies, spectrum.weights)
        ],
    }


def spectrum_hash(spectrum: ThermalSpectrum) -> str:
    return sha256(canonical_json(spectrum_to_dict(spectrum)))


def spectrum_from_dict(doc: dict) -> ThermalSpectrum:
    """Rebuild a spectrum from its JSON description; mode order is taken from the file."""
    kind = doc["kind"]
    modes = doc["modes"]
    if kind == "custom":
        basis = doc.get("basis")
        if basis == "table":
            raise InvalidParameterError("eigenfunction tables cannot be restored from JSON")
        weights = [(m["index"][0], m["weight"]) for m in modes]
        total = sum(w for _, w in weights)
        weights = [(lab, w / total) for lab, w in weights]
        _, spec = build_custom_model(weights, eigenfunctions=basis,
                                     energies=[m["energy"] for m in modes], beta=doc.get("beta"),
                                     m=doc.get("m", 1.0), hbar=doc.get("hbar", 1.0))
        return spec
    model = SpectralModel(kind, int(doc["N"]), int(doc["d"]), float(doc["m"]), float(doc["hbar"]),
                          doc.get("symmetry", "none"))
    idx = np.array([m["index"] for m in modes], dtype=int)
    return ThermalSpectrum(model, doc["beta"], idx,
                           np.array([m["energy"] for m in modes]),
                           np.array([m["weight"] for m in modes]),
                           z_trunc=doc["Z_trunc"], tail_bound=doc.get("tail_bound", 0.0),
                           tail_mass=doc.get("tail_mass", 0.0), radius=doc.get("cutoff"),
                           energy_offset=doc.get("energy_offset", 0.0))


def write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def wavefunction_csv(psi, header: dict) -> str:
    """One row per mode: index components, energy, Re c_n, Im c_n; JSON header line first."""
    spec = psi.spectrum
    buf = io.StringIO()
    buf.write(HEADER_PREFIX + canonical_json(header) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    D = spec.indices.shape[1]
    w.writerow([f"n{j}" for j in range(D)] + ["energy", "re", "im"])
    for n, e, c in zip(spec.indices, spec.energies, psi.coefficients):
        w.writerow([int(x) for x in n] + [repr(float(e)), repr(float(c.real)), repr(float(c.imag))])
    return buf.getvalue()


def read_wavefunction_csv(path, spectrum: ThermalSpectrum):
    """Load coefficients written by :func:`wavefunction_csv` against a matching spectrum."""
    from .sampler import WaveFunction

    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        header = json.loads(first[len(HEADER_PREFIX):])
        rows = list(csv.reader(fh))
    D = spectrum.indices.shape[1]
    body = rows[1:]
    idx = np.array([[int(x) for x in r[:D]] for r in body], dtype=int)
    if idx.shape != spectrum.indices.shape or np.any(idx != spectrum.indices):
        raise InvalidParameterError(f"{path}: mode list does not match the spectrum")
    c = np.array([float(r[D + 1]) + 1j * float(r[D + 2]) for r in body])
    prov = header.get("provenance", "derived")
    return WaveFunction(spectrum, c, prov), header


def trajectory_csv(traj, footer: dict) -> str:
    """Rows t, q components, |psi(Q)|^2, step size; JSON footer line with status."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    D = len(traj.states[0].q) if traj.states else 0
    w.writerow(["t"] + [f"q{j}" for j in range(D)] + ["density", "step"])
    for s in traj.states:
        w.writerow([repr(float(s.t))] + [repr(float(x)) for x in s.q] +
                   [repr(float(s.density)), repr(float(s.step))])
    buf.write(HEADER_PREFIX + canonical_json(footer) + "\n")
    return buf.getvalue()


def report_json(report, extra: dict = None) -> str:
    doc = dict(extra or {})
    doc["diagnostics"] = report.to_dict()
    return json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n"


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    return x
