"""
Scenario files: one YAML (or JSON) document describing a CARMA model and a run.

Example::

    name: wave_n8
    spaces:
      - {label: H1, dim: 8, basis_kind: sine_on_unit_interval, weights: wave_energy}
      - {label: L2, dim: 8, basis_kind: sine_on_unit_interval}
    companion:
      A: [zero, laplacian_sine]        # A_1 .. A_p
      I: [identity]                    # I_2 .. I_p
    noise:
      eigenvalues: [1.0, 0.25, 0.11, 0.0625, 0.04, 0.028, 0.02, 0.016]
      seed: 7
    observation: P1
    run: {dt: 0.001, T: 1.0, paths: 10, scheme: a}

Blocks are nested lists or one of ``identity``, ``zero``, ``laplacian_sine``,
``scaled_identity:<c>`` and ``dense:<row>;<row>`` (entries comma separated).
Observations are ``P1``, ``vector:<b_1>,...`` or ``dense:<rows>``.  Every
error names the offending field, e.g. ``companion.A[2]``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .carma import CarmaSystem, scheme_name, vector_observation
from .noise import JUMP_LAWS, CovarianceSpec, JumpSpec, LevyModel
from .operators import (AssemblyError, assemble_companion, identity, laplacian_sine,
                        scaled_identity, zero)
from .semigroup import MATRIX_EXPONENTIAL, METHODS
from .spaces import BASIS_KINDS, SINE, LinearMap, ProductSpace, SpaceSpec, projection_map

RUN_DEFAULTS = {
    "dt": 0.01,
    "T": 1.0,
    "paths": 1,
    "scheme": "left_point",
    "quadrature_nodes": 64,
    "series_terms": 25,
    "burn_in": 0.0,
    "method": MATRIX_EXPONENTIAL,
}


class ScenarioError(ValueError):
    """Invalid scenario; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


def _require(d: Any, path: str) -> dict:
    if not isinstance(d, dict):
        raise ScenarioError(path, f"expected a mapping, got {type(d).__name__}")
    return d


def _unknown(d: dict, allowed, path: str):
    extra = sorted(set(d) - set(allowed))
    if extra:
        raise ScenarioError(f"{path}.{extra[0]}" if path else extra[0], "unknown field")


def _number(v, path: str, positive=False, nonneg=False) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioError(path, f"expected a number, got {v!r}")
    v = float(v)
    if not math.isfinite(v):
        raise ScenarioError(path, "must be finite")
    if positive and not v > 0:
        raise ScenarioError(path, f"must be > 0, got {v}")
    if nonneg and v < 0:
        raise ScenarioError(path, f"must be >= 0, got {v}")
    return v


def _integer(v, path: str, minimum: int = 0) -> int:
    if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
        raise ScenarioError(path, f"expected an integer >= {minimum}, got {v!r}")
    return v


def _vector(v, path: str, n: int | None = None, nonneg=False) -> list:
    if not isinstance(v, (list, tuple)):
        raise ScenarioError(path, f"expected a list of numbers, got {v!r}")
    out = [_number(x, f"{path}[{i}]", nonneg=nonneg) for i, x in enumerate(v)]
    if n is not None and len(out) != n:
        raise ScenarioError(path, f"expected {n} entries, got {len(out)}")
    return out


def _parse_rows(text: str, path: str) -> list:
    try:
        rows = [[float(x) for x in row.split(",")] for row in text.split(";")]
    except ValueError:
        raise ScenarioError(path, f"cannot parse dense rows {text!r}") from None
    if len({len(r) for r in rows}) != 1:
        raise ScenarioError(path, "dense rows have unequal lengths")
    return rows


def _matrix(v, path: str) -> list:
    if not isinstance(v, (list, tuple)) or not v:
        raise ScenarioError(path, "expected a non-empty list of rows")
    rows = [_vector(r, f"{path}[{i}]") for i, r in enumerate(v)]
    if len({len(r) for r in rows}) != 1:
        raise ScenarioError(path, "rows have unequal lengths")
    return rows


def _normalise_block(v, path: str):
    """Named constructor string (kept verbatim) or a list of rows."""
    if isinstance(v, str):
        name = v.strip()
        if name in ("identity", "zero", "laplacian_sine"):
            return name
        if name.startswith("scaled_identity:"):
            try:
                float(name.split(":", 1)[1])
            except ValueError:
                raise ScenarioError(path, f"bad scale in {name!r}") from None
            return name
        if name.startswith("dense:"):
            _parse_rows(name[6:], path)
            return name
        raise ScenarioError(path, f"unknown block constructor {name!r}")
    return _matrix(v, path)


def _build_block(v, dom: SpaceSpec, cod: SpaceSpec, path: str) -> LinearMap:
    try:
        if v == "identity":
            return identity(dom, cod)
        if v == "zero":
            return zero(dom, cod)
        if v == "laplacian_sine":
            return laplacian_sine(dom, cod)
        if isinstance(v, str) and v.startswith("scaled_identity:"):
            return scaled_identity(dom, float(v.split(":", 1)[1]), cod)
        rows = _parse_rows(v[6:], path) if isinstance(v, str) else v
        m = np.array(rows, dtype=float)
        if m.shape != (cod.dim, dom.dim):
            raise ScenarioError(path, f"shape {m.shape} but layout needs {(cod.dim, dom.dim)}")
        return LinearMap(dom, cod, m)
    except AssemblyError as e:
        raise ScenarioError(path, str(e)) from None


@dataclass(frozen=True)
class Scenario:
    """A validated scenario, stored in normalised dictionary form.

    Two scenarios compare equal when their normalised forms agree, so a
    parse -> serialize -> parse round trip gives an equal object.
    """

    data: dict

    @property
    def name(self) -> str:
        return self.data["name"]

    @property
    def run(self) -> dict:
        return self.data["run"]

    @property
    def seed(self) -> int:
        return self.data["noise"]["seed"]

    def __eq__(self, other):
        return isinstance(other, Scenario) and canonical_json(self.data) == canonical_json(other.data)

    def __hash__(self):
        return hash(canonical_json(self.data))

    def to_dict(self) -> dict:
        return json.loads(canonical_json(self.data))

    def with_seed(self, seed: int) -> "Scenario":
        d = self.to_dict()
        d["noise"]["seed"] = int(seed)
        return parse_scenario(d)

    def with_run(self, **changes) -> "Scenario":
        d = self.to_dict()
        d["run"].update(changes)
        return parse_scenario(d)

    def config_hash(self) -> str:
        return hashlib.sha256(canonical_json(self.data).encode()).hexdigest()

    def build(self) -> CarmaSystem:
        return build_system(self)


def canonical_json(d: dict) -> str:
    return json.dumps(d, sort_keys=True, separators=(",", ":"))


def parse_scenario(raw: Any) -> Scenario:
    """Validate a raw mapping; the result is guaranteed to build."""
    d = _require(raw, "")
    _unknown(d, ("name", "spaces", "companion", "noise", "observation", "run", "Z0", "probes"), "")
    out: dict = {}

    name = d.get("name")
    if not isinstance(name, str) or not name:
        raise ScenarioError("name", "expected a non-empty string")
    out["name"] = name

    spaces = d.get("spaces")
    if not isinstance(spaces, list) or not spaces:
        raise ScenarioError("spaces", "expected a non-empty list of spaces")
    norm_spaces = []
    for i, s in enumerate(spaces):
        path = f"spaces[{i}]"
        s = _require(s, path)
        _unknown(s, ("label", "dim", "weights", "basis_kind"), path)
        dim = _integer(s.get("dim"), f"{path}.dim", 1)
        kind = s.get("basis_kind", "abstract")
        if kind not in BASIS_KINDS:
            raise ScenarioError(f"{path}.basis_kind", f"expected one of {BASIS_KINDS}, got {kind!r}")
        w = s.get("weights")
        if w == "wave_energy":
            if kind != SINE:
                raise ScenarioError(f"{path}.weights", "wave_energy weights need the sine basis")
        elif w is not None:
            w = _vector(w, f"{path}.weights", dim)
            if any(x <= 0 for x in w):
                raise ScenarioError(f"{path}.weights", "weights must be > 0")
        norm_spaces.append({"label": str(s.get("label", f"H{i + 1}")), "dim": dim,
                            "weights": w, "basis_kind": kind})
    out["spaces"] = norm_spaces
    p = len(norm_spaces)

    comp = _require(d.get("companion"), "companion")
    _unknown(comp, ("A", "I"), "companion")
    A = comp.get("A")
    if not isinstance(A, list) or len(A) != p:
        raise ScenarioError("companion.A", f"expected a list of {p} blocks (A_1..A_{p})")
    I = comp.get("I", ["identity"] * (p - 1))
    if not isinstance(I, list) or len(I) != p - 1:
        raise ScenarioError("companion.I", f"expected a list of {p - 1} blocks (I_2..I_{p})")
    out["companion"] = {
        "A": [_normalise_block(b, f"companion.A[{i}]") for i, b in enumerate(A)],
        "I": [_normalise_block(b, f"companion.I[{i}]") for i, b in enumerate(I)],
    }

    Np = norm_spaces[-1]["dim"]
    noise = _require(d.get("noise"), "noise")
    _unknown(noise, ("eigenvalues", "jumps", "seed"), "noise")
    ev = noise.get("eigenvalues")
    if ev is not None:
        if isinstance(ev, (int, float)) and not isinstance(ev, bool):
            ev = [_number(ev, "noise.eigenvalues", nonneg=True)] * Np
        else:
            ev = _vector(ev, "noise.eigenvalues", Np, nonneg=True)
    jumps = noise.get("jumps")
    if jumps is not None:
        jumps = _require(jumps, "noise.jumps")
        _unknown(jumps, ("rate", "jump_law", "variances"), "noise.jumps")
        law = jumps.get("jump_law", "two_point")
        if law not in JUMP_LAWS:
            raise ScenarioError("noise.jumps.jump_law", f"expected one of {JUMP_LAWS}, got {law!r}")
        v = jumps.get("variances")
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            v = [_number(v, "noise.jumps.variances", nonneg=True)] * Np
        else:
            v = _vector(v, "noise.jumps.variances", Np, nonneg=True)
        jumps = {"rate": _number(jumps.get("rate"), "noise.jumps.rate", positive=True),
                 "jump_law": law, "variances": v}
    if ev is None and jumps is None:
        raise ScenarioError("noise", "need eigenvalues, jumps, or both")
    seed = _integer(noise.get("seed", 0), "noise.seed", 0)
    if seed >= 2**64:
        raise ScenarioError("noise.seed", "must fit in 64 bits")
    out["noise"] = {"eigenvalues": ev, "jumps": jumps, "seed": seed}

    obs = d.get("observation", "P1")
    if isinstance(obs, str) and obs.startswith("vector:"):
        try:
            [float(x) for x in obs[7:].split(",")]
        except ValueError:
            raise ScenarioError("observation", f"cannot parse {obs!r}") from None
    elif isinstance(obs, str) and obs.startswith("dense:"):
        _parse_rows(obs[6:], "observation")
    elif isinstance(obs, list):
        obs = _matrix(obs, "observation")
    elif obs != "P1":
        raise ScenarioError("observation", f"expected P1, vector:..., dense:... or rows, got {obs!r}")
    out["observation"] = obs

    run = dict(RUN_DEFAULTS)
    r = _require(d.get("run", {}), "run")
    _unknown(r, RUN_DEFAULTS, "run")
    run.update(r)
    run["dt"] = _number(run["dt"], "run.dt", positive=True)
    run["T"] = _number(run["T"], "run.T", positive=True)
    run["burn_in"] = _number(run["burn_in"], "run.burn_in", nonneg=True)
    run["paths"] = _integer(run["paths"], "run.paths", 1)
    run["quadrature_nodes"] = _integer(run["quadrature_nodes"], "run.quadrature_nodes", 1)
    run["series_terms"] = _integer(run["series_terms"], "run.series_terms", 1)
    try:
        run["scheme"] = scheme_name(run["scheme"])
    except ValueError as e:
        raise ScenarioError("run.scheme", str(e)) from None
    if run["method"] not in METHODS:
        raise ScenarioError("run.method", f"expected one of {METHODS}, got {run['method']!r}")
    if run["scheme"] == "exact_gaussian" and jumps is not None:
        raise ScenarioError("run.scheme", "exact_gaussian innovations need Wiener-only noise")
    for key in ("T", "burn_in"):
        steps = run[key] / run["dt"]
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ScenarioError(f"run.{key}", f"must be a multiple of run.dt ({run['dt']})")
    out["run"] = run

    dim = sum(s["dim"] for s in norm_spaces)
    z0 = d.get("Z0")
    out["Z0"] = None if z0 is None else _vector(z0, "Z0", dim)
    probes = d.get("probes")
    if probes is not None:
        if not isinstance(probes, list):
            raise ScenarioError("probes", "expected a list of vectors")
        probes = [_vector(x, f"probes[{i}]") for i, x in enumerate(probes)]
    out["probes"] = probes

    sc = Scenario(out)
    try:
        build_system(sc)  # surfaces layout errors with field paths
    except ScenarioError:
        raise
    except ValueError as e:
        field_ = "run.method" if "wave_closed_form" in str(e) else "scenario"
        raise ScenarioError(field_, str(e)) from None
    return sc


def _space(s: dict) -> SpaceSpec:
    w = s["weights"]
    if w == "wave_energy":
        w = np.pi**2 * np.arange(1, s["dim"] + 1) ** 2.0
    return SpaceSpec(s["label"], s["dim"], w, s["basis_kind"])


def build_system(sc: Scenario) -> CarmaSystem:
    d = sc.data
    Hs = [_space(s) for s in d["spaces"]]
    p = len(Hs)
    # A_i : H_{p+1-i} -> H_p,  I_i : H_{p+2-i} -> H_{p+1-i}
    A = [_build_block(b, Hs[p - i], Hs[p - 1], f"companion.A[{i - 1}]")
         for i, b in enumerate(d["companion"]["A"], start=1)]
    I = [_build_block(b, Hs[p + 1 - i], Hs[p - i], f"companion.I[{i - 2}]")
         for i, b in enumerate(d["companion"]["I"], start=2)]
    try:
        comp = assemble_companion(Hs, A, I)
    except AssemblyError as e:
        raise ScenarioError("companion", str(e)) from None

    n = d["noise"]
    wiener = None if n["eigenvalues"] is None else CovarianceSpec(Hs[-1], n["eigenvalues"])
    jumps = None
    if n["jumps"] is not None:
        j = n["jumps"]
        jumps = JumpSpec(j["rate"], j["jump_law"], j["variances"])
    noise = LevyModel(Hs[-1], wiener, jumps, n["seed"])

    H = ProductSpace(tuple(Hs))
    obs = d["observation"]
    if obs == "P1":
        L = projection_map(H, 1)
    elif isinstance(obs, str) and obs.startswith("vector:"):
        b = [float(x) for x in obs[7:].split(",")]
        if len(b) != H.dim:
            raise ScenarioError("observation", f"vector needs {H.dim} entries, got {len(b)}")
        L = vector_observation(H, b)
    else:
        rows = _parse_rows(obs[6:], "observation") if isinstance(obs, str) else obs
        m = np.array(rows, dtype=float)
        if m.shape[1] != H.dim:
            raise ScenarioError("observation", f"dense readout needs {H.dim} columns, got {m.shape[1]}")
        L = LinearMap(H, SpaceSpec("U", m.shape[0]), m)

    if d["probes"] is not None:
        for i, x in enumerate(d["probes"]):
            if len(x) != L.codomain.dim:
                raise ScenarioError(f"probes[{i}]", f"expected {L.codomain.dim} entries, got {len(x)}")

    r = d["run"]
    return CarmaSystem.build(comp, noise, L, d["Z0"], method=r["method"],
                             series_terms=r["series_terms"], quadrature_nodes=r["quadrature_nodes"])


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ScenarioError("", f"cannot read scenario file {path}: {e.strerror}") from None
    try:
        raw = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (yaml.YAMLError, json.JSONDecodeError) as e:
        raise ScenarioError("", f"cannot parse {path}: {e}") from None
    return parse_scenario(raw)


def dump_scenario(sc: Scenario) -> str:
    """YAML text that parses back to an equal scenario."""
    return yaml.safe_dump(sc.to_dict(), sort_keys=False, default_flow_style=None)
