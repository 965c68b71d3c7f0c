"""Command line front end.

    koopman-lab check-operator system.json [--json report.json]
    koopman-lab ergodic-times rotation.json --quiet --json -
    koopman-lab suite --seed 42 --max-size 6

Exit codes: 0 every check passed, 1 a mathematical check failed (the
witness is in the report), 2 the input could not be used.  JSON reports are
deterministic: no timings, no paths, floats written with 17 significant
digits.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from fractions import Fraction
from typing import Any, Sequence

import numpy as np
from jsonschema import Draft202012Validator
from jsonschema.exceptions import best_match

from .acceptance import DEFAULT_MAX_SIZE, run_suite, summary
from .checks import CheckResult
from .ergodicity import (
    MAX_DENOMINATOR,
    RATIONAL_TOL,
    boundary_group_check,
    ergodicity_report,
    fix_dimension,
    irreducibility_check,
    nonergodic_times,
)
from .errors import InternalConsistencyError, KoopmanLabError, NotMarkovLattice
from .markov_operators import (
    MarkovOperator,
    SemiflowMap,
    classify_operator,
    extract_homomorphism,
    koopman_of_map,
    map_from_operator,
)
from .measure_space import FiniteProbabilitySpace, new_space, uniform_space
from .semigroup_engine import (
    DEFAULT_QUAD_STEPS,
    GeneratorMatrix,
    PerturbationSpec,
    adjoint_measure_check,
    classify_generator,
    expm_evolve,
    perturbed_evolve,
    verify_perturbation,
)
from .spectral_flow import (
    DiagonalGenerator,
    FourierFunction,
    SpectralFlowModel,
    additivity_derivation_check,
    evolve_spectral,
    rotation_model,
)
from .topological_model import build_finite_model, verify_model_isomorphism

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2

DEFAULT_TOL = 1e-9
DEFAULT_PERTURB_TOL = 1e-6
DEFAULT_T = 1.0
DEFAULT_T_MAX = 1.0
DEFAULT_PERTURB_TIMES = (0.25, 0.5, 1.0, 2.0)

PAYLOADS = ("map", "matrix", "generator", "perturbation", "rotation")
COMMANDS = ("check-operator", "check-generator", "evolve", "perturb", "model", "ergodic-times", "suite")

# ----- input schema -----------------------------------------------------------

_scalar = {"oneOf": [
    {"type": "number"},
    {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
]}
_vector = {"type": "array", "items": _scalar, "minItems": 1}
_matrix = {"type": "array", "items": _vector, "minItems": 1}
_rotation = {
    "type": "object",
    "properties": {
        "alpha": {"type": "array", "minItems": 1, "items": {"oneOf": [
            {"type": "number"},
            {"type": "string", "pattern": r"^\s*-?\d+\s*(/\s*\d+\s*)?$"},
        ]}},
        "N": {"oneOf": [
            {"type": "integer", "minimum": 1},
            {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        ]},
    },
    "required": ["alpha"],
    "additionalProperties": False,
}
_fourier = {
    "type": "object",
    "properties": {"modes": {"type": "array", "items": {
        "type": "array",
        "prefixItems": [
            {"oneOf": [{"type": "integer"}, {"type": "array", "items": {"type": "integer"}, "minItems": 1}]},
            {"type": "number"},
            {"type": "number"},
        ],
        "items": False,
        "minItems": 2,
    }}},
    "required": ["modes"],
    "additionalProperties": False,
}
_function = {"oneOf": [_vector, _fourier]}
_delta = {"oneOf": [
    _matrix,
    {"type": "object", "properties": {"rotation": _rotation}, "required": ["rotation"],
     "additionalProperties": False},
]}
_options = {
    "tol": {"type": "number", "exclusiveMinimum": 0},
    "quad_steps": {"type": "integer", "minimum": 1},
    "t": {"type": "number", "minimum": 0},
    "t_grid": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
    "t_max": {"type": "number", "exclusiveMinimum": 0},
    "max_denominator": {"type": "integer", "minimum": 1},
    "f": _function,
}
SCHEMA = {
    "type": "object",
    "properties": {
        "space": {
            "type": "object",
            "properties": {
                "weights": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                "labels": {"type": "array", "items": {"type": ["string", "integer"]}},
            },
            "required": ["weights"],
            "additionalProperties": False,
        },
        "map": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
        "matrix": _matrix,
        "generator": _matrix,
        "perturbation": {
            "type": "object",
            "properties": {"delta": _delta, "q": _function},
            "required": ["delta", "q"],
            "additionalProperties": False,
        },
        "delta": _delta,
        "q": _function,
        "rotation": _rotation,
        "options": {"type": "object", "properties": _options, "additionalProperties": False},
        **_options,
    },
    "additionalProperties": False,
}
_VALIDATOR = Draft202012Validator(SCHEMA)


class InputError(Exception):
    """Anything wrong with the input file; always exit code 2."""


# ----- deterministic JSON ----------------------------------------------------


def _fmt_float(x: float) -> str:
    x = float(x)
    if not math.isfinite(x):
        return "null"
    s = format(x, ".17g")
    if not any(c in s for c in ".en"):
        s += ".0"
    return s


def _plain(obj):
    """Reduce reports to dict / list / str / int / float / bool / None."""
    if obj is None or isinstance(obj, (bool, str)):
        return obj
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        z = complex(obj)
        return z.real if z.imag == 0 else [z.real, z.imag]
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()] if obj.ndim else _plain(obj.item())
    if isinstance(obj, dict):
        return {_key(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (set, frozenset)):
        return [_plain(v) for v in sorted(obj)]
    if isinstance(obj, FourierFunction):
        return fourier_as_dict(obj)
    if isinstance(obj, SemiflowMap):
        return list(obj.atom_map)
    if hasattr(obj, "as_dict"):
        return _plain(obj.as_dict())
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _key(k) -> str:
    if isinstance(k, str):
        return k
    if isinstance(k, (float, np.floating)):
        return _fmt_float(k)
    return str(_plain(k))


def _emit(obj, level: int, out: list) -> None:
    pad = "  " * (level + 1)
    if obj is None:
        out.append("null")
    elif obj is True or obj is False:
        out.append("true" if obj else "false")
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        out.append(_fmt_float(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, list):
        if all(not isinstance(v, (dict, list)) for v in obj) or not obj:
            out.append("[")
            for i, v in enumerate(obj):
                if i:
                    out.append(", ")
                _emit(v, level, out)
            out.append("]")
        else:
            out.append("[\n")
            for i, v in enumerate(obj):
                out.append(pad)
                _emit(v, level + 1, out)
                out.append(",\n" if i < len(obj) - 1 else "\n")
            out.append("  " * level + "]")
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        items = list(obj.items())
        for i, (k, v) in enumerate(items):
            out.append(pad + json.dumps(k, ensure_ascii=False) + ": ")
            _emit(v, level + 1, out)
            out.append(",\n" if i < len(items) - 1 else "\n")
        out.append("  " * level + "}")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    """Deterministic JSON text with 17 significant digits per float."""
    out: list[str] = []
    _emit(_plain(obj), 0, out)
    return "".join(out) + "\n"


def fourier_as_dict(f: FourierFunction, tol: float = 0.0) -> dict:
    modes = []
    for k in f.support(tol):
        c = f.coefficient(k)
        modes.append([list(k), float(c.real), float(c.imag)])
    return {"modes": modes}


# ----- parsing ---------------------------------------------------------------


def load_document(path: str) -> dict:
    try:
        if path == "-":
            text = sys.stdin.read()
        else:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror or exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    err = best_match(_VALIDATOR.iter_errors(doc))
    if err is not None:
        raise InputError(f"{path}: schema violation at {err.json_path}: {err.message}")
    present = [k for k in PAYLOADS if k in doc]
    if "delta" in doc or "q" in doc:
        if not ("delta" in doc and "q" in doc):
            missing = "q" if "delta" in doc else "delta"
            raise InputError(f"{path}: schema violation at $.{missing}: required alongside "
                             f"'{'delta' if missing == 'q' else 'q'}'")
        present.append("perturbation")
        doc = {**doc, "perturbation": {"delta": doc["delta"], "q": doc["q"]}}
    if len(present) != 1:
        found = ", ".join(present) if present else "none"
        raise InputError(f"{path}: schema violation at $: exactly one of {', '.join(PAYLOADS)} "
                         f"(or delta + q) is required, found {found}")
    doc["_payload"] = present[0]
    return doc


def _option(doc: dict, name: str, default=None):
    if name in doc:
        return doc[name]
    return doc.get("options", {}).get(name, default)


def _complex(v) -> complex:
    return complex(v[0], v[1]) if isinstance(v, list) else complex(v)


def _vector_of(v) -> np.ndarray:
    return np.array([_complex(x) for x in v], dtype=complex)


def _matrix_of(rows, where: str) -> np.ndarray:
    n = len(rows)
    if any(len(r) != n for r in rows):
        raise InputError(f"schema violation at {where}: matrix must be square, got {n} rows "
                         f"of lengths {sorted({len(r) for r in rows})}")
    return np.array([[_complex(x) for x in r] for r in rows], dtype=complex)


def _space(doc: dict, n: int) -> FiniteProbabilitySpace:
    if "space" not in doc:
        return uniform_space(n)
    spec = doc["space"]
    if len(spec["weights"]) != n:
        raise InputError(f"schema violation at $.space.weights: {len(spec['weights'])} weights "
                         f"for a system on {n} atoms")
    labels = spec.get("labels")
    if labels is not None and len(labels) != n:
        raise InputError(f"schema violation at $.space.labels: {len(labels)} labels for {n} atoms")
    try:
        return new_space(spec["weights"], labels)
    except ValueError as exc:
        raise InputError(f"schema violation at $.space.weights: {exc}") from None


def _rotation(spec: dict) -> SpectralFlowModel:
    alpha = [a.replace(" ", "") if isinstance(a, str) else a for a in spec["alpha"]]
    try:
        return rotation_model(alpha, spec.get("N"))
    except (ValueError, ZeroDivisionError) as exc:
        raise InputError(f"schema violation at $.rotation: {exc}") from None


def _fourier(model: SpectralFlowModel, spec: dict, where: str) -> FourierFunction:
    modes: dict[tuple, complex] = {}
    for i, row in enumerate(spec["modes"]):
        k = row[0]
        k = (k,) if isinstance(k, int) else tuple(k)
        if len(k) != model.d:
            raise InputError(f"schema violation at {where}.modes[{i}]: mode {list(k)} has "
                             f"{len(k)} components, the torus has dimension {model.d}")
        if not model.contains(k):
            raise InputError(f"schema violation at {where}.modes[{i}]: mode {list(k)} outside "
                             f"truncation {list(model.truncation)}")
        modes[k] = modes.get(k, 0) + complex(row[1], row[2] if len(row) > 2 else 0.0)
    return FourierFunction.from_modes(model, modes)


def _operator(doc: dict) -> tuple[MarkovOperator, SemiflowMap | None]:
    if doc["_payload"] == "map":
        atom_map = doc["map"]
        n = len(atom_map)
        if max(atom_map) >= n:
            i = max(range(n), key=lambda j: atom_map[j])
            raise InputError(f"schema violation at $.map[{i}]: image {atom_map[i]} is not an atom of 0..{n - 1}")
        phi = SemiflowMap(atom_map)
        return koopman_of_map(_space(doc, n), phi), phi
    if doc["_payload"] == "matrix":
        m = _matrix_of(doc["matrix"], "$.matrix")
        return MarkovOperator(m, _space(doc, len(m))), None
    raise InputError(f"schema violation at $.{doc['_payload']}: this command needs a map or matrix payload")


def _atomic_f(doc: dict, n: int) -> np.ndarray:
    f = _option(doc, "f")
    if f is None:
        return np.arange(1, n + 1, dtype=complex)
    if isinstance(f, dict):
        raise InputError("schema violation at $.f: a Fourier function needs a rotation model")
    if len(f) != n:
        raise InputError(f"schema violation at $.f: {len(f)} values for {n} atoms")
    return _vector_of(f)


def _spectral_f(doc: dict, model: SpectralFlowModel) -> FourierFunction:
    f = _option(doc, "f")
    if f is None:
        first = tuple(1 if j == 0 else 0 for j in range(model.d))
        return FourierFunction.constant(model) + FourierFunction.mode(model, first)
    if not isinstance(f, dict):
        raise InputError("schema violation at $.f: a rotation model needs {\"modes\": [...]}")
    return _fourier(model, f, "$.f")


def _perturbation(doc: dict) -> tuple[PerturbationSpec, FiniteProbabilitySpace | None]:
    spec = doc["perturbation"]
    delta, q = spec["delta"], spec["q"]
    if isinstance(delta, dict):
        model = _rotation(delta["rotation"])
        if not isinstance(q, dict):
            raise InputError("schema violation at $.perturbation.q: a rotation delta needs a Fourier q")
        return PerturbationSpec(model.generator(), _fourier(model, q, "$.perturbation.q")), None
    m = _matrix_of(delta, "$.perturbation.delta")
    if isinstance(q, dict) or len(q) != len(m):
        raise InputError(f"schema violation at $.perturbation.q: need {len(m)} values over atoms")
    space = _space(doc, len(m)) if "space" in doc else None
    return PerturbationSpec(GeneratorMatrix(m, space), _vector_of(q)), space


def _times(doc: dict, default: Sequence[float]) -> list[float]:
    grid = _option(doc, "t_grid")
    if grid is not None:
        return [float(t) for t in grid]
    t = _option(doc, "t")
    return [float(t)] if t is not None else [float(t) for t in default]


# ----- commands ----------------------------------------------------------------


def _check_row(name: str, res: CheckResult | None) -> tuple[str, str]:
    if res is None:
        return name, "n/a"
    return name, f"{'pass' if res.passed else 'FAIL'}  (residual {res.residual:.3e})"


def cmd_check_operator(doc: dict, tol: float) -> tuple[int, dict, list]:
    T, phi = _operator(doc)
    verdict = classify_operator(T, tol)
    report: dict[str, Any] = {"payload": doc["_payload"], "n": T.space.n, "tol": tol}
    report.update(verdict.as_dict())
    report["markov_lattice"] = verdict.markov_lattice
    try:
        hom = extract_homomorphism(T, tol)
        report["homomorphism"] = {"singleton_images": [sorted(s) for s in hom.singleton_images]}
    except NotMarkovLattice as exc:
        report["homomorphism"] = {"error": str(exc), "witness": exc.witness}
    try:
        report["point_map"] = list(map_from_operator(T, tol).atom_map)
    except NotMarkovLattice as exc:
        report["point_map"] = {"error": str(exc), "witness": exc.witness}
    if verdict.markov:
        report["irreducibility"] = irreducibility_check(T, tol).as_dict()
    if phi is not None and verdict.markov_lattice:
        report["ergodicity"] = ergodicity_report(T.space, phi, tol).as_dict()
    rows = [(k, "yes" if report[k] else "NO") for k in
            ("positive", "row_stochastic", "measure_preserving", "markov", "lattice", "multiplicative",
             "markov_lattice")]
    hom_ok = "singleton_images" in report["homomorphism"]
    rows.append(("homomorphism", "extracted" if hom_ok else "none"))
    rows.append(("point_map", str(report["point_map"]) if isinstance(report["point_map"], list) else "none"))
    return (EXIT_OK if verdict.markov_lattice else EXIT_FAIL), report, rows


def _spectral_generator_report(G: DiagonalGenerator, tol: float, q: FourierFunction | None = None):
    add = additivity_derivation_check(G, tol=tol)
    group = boundary_group_check(G, tol=tol)
    checks = {"derivation": add, "boundary_group": group}
    if q is not None:
        gap = float(np.abs(q.coeffs - q.conj().coeffs).max())
        checks["q_real"] = CheckResult(gap <= tol, None if gap <= tol else {"q": q, "imaginary_part": gap}, gap)
    model = G.model
    report = {
        "model": {"alpha": [str(a) if isinstance(a, Fraction) else a for a in model.alpha],
                  "truncation": list(model.truncation)},
        "checks": {k: v.as_dict() for k, v in checks.items()},
    }
    return checks, report


def cmd_check_generator(doc: dict, tol: float) -> tuple[int, dict, list]:
    kind = doc["_payload"]
    if kind == "rotation":
        checks, report = _spectral_generator_report(_rotation(doc["rotation"]).generator(), tol)
    elif kind == "perturbation" and isinstance(doc["perturbation"]["delta"], dict):
        spec, _ = _perturbation(doc)
        checks, report = _spectral_generator_report(spec.delta, tol, spec.q)
    elif kind in ("generator", "perturbation"):
        if kind == "generator":
            m = _matrix_of(doc["generator"], "$.generator")
            space = _space(doc, len(m)) if "space" in doc else None
            A = GeneratorMatrix(m, space)
        else:
            spec, space = _perturbation(doc)
            A = spec.generator()
        verdict = classify_generator(A, space, tol)
        checks = {"derivation": verdict.derivation, "kato": verdict.kato}
        report = verdict.as_dict()
        report["lattice_generator"] = verdict.lattice_generator
        report["markov_lattice_generator"] = verdict.markov_lattice_generator
        report["checks"] = {k: v.as_dict() for k, v in checks.items()}
        report["properties"] = {"markov_derivation": verdict.markov_derivation.as_dict()}
        if space is not None:
            report["properties"]["fixes_measure"] = adjoint_measure_check(A, space, tol).as_dict()
    else:
        raise InputError(f"schema violation at $.{kind}: check-generator needs a generator, "
                         "perturbation or rotation payload")
    passed = all(c.passed for c in checks.values())
    report = {"payload": kind, "tol": tol, "passed": passed, **report}
    rows = [_check_row(k, v) for k, v in checks.items()]
    return (EXIT_OK if passed else EXIT_FAIL), report, rows


def cmd_evolve(doc: dict, tol: float) -> tuple[int, dict, list]:
    kind = doc["_payload"]
    ts = _times(doc, [DEFAULT_T])
    steps = int(_option(doc, "quad_steps", DEFAULT_QUAD_STEPS))
    out = []
    if kind == "generator":
        m = _matrix_of(doc["generator"], "$.generator")
        f = _atomic_f(doc, len(m))
        out = [{"t": t, "f": expm_evolve(m, t, f)} for t in ts]
    elif kind == "rotation":
        model = _rotation(doc["rotation"])
        G = model.generator()
        f = _spectral_f(doc, model)
        out = [{"t": t, "f": evolve_spectral(G, t, f)} for t in ts]
    elif kind == "perturbation":
        spec, _ = _perturbation(doc)
        if spec.spectral:
            f = _spectral_f(doc, spec.delta.model)
        else:
            f = _atomic_f(doc, len(spec.q))
        out = [{"t": t, "f": perturbed_evolve(spec, t, f, steps)} for t in ts]
    else:
        raise InputError(f"schema violation at $.{kind}: evolve needs a generator, perturbation or rotation payload")
    report = {"payload": kind, "initial": f, "evolution": out}
    rows = [(f"t = {row['t']:g}", "evolved") for row in out]
    return EXIT_OK, report, rows


def cmd_perturb(doc: dict, tol: float | None) -> tuple[int, dict, list]:
    if doc["_payload"] != "perturbation":
        raise InputError(f"schema violation at $.{doc['_payload']}: perturb needs a perturbation (delta + q) payload")
    tol = DEFAULT_PERTURB_TOL if tol is None else tol
    spec, space = _perturbation(doc)
    f = _spectral_f(doc, spec.delta.model) if spec.spectral else _atomic_f(doc, len(spec.q))
    ts = _times(doc, DEFAULT_PERTURB_TIMES)
    steps = int(_option(doc, "quad_steps", DEFAULT_QUAD_STEPS))
    res = verify_perturbation(spec, ts, f, tol=tol, quad_steps=steps, space=space)
    norm = "l1 of Fourier coefficients" if spec.spectral else ("L1(mu)" if space is not None else "l1 over atoms")
    report = {"payload": "perturbation", "spectral": spec.spectral, "tol": tol, "quad_steps": steps,
              "norm": norm, "t_grid": ts, **res.as_dict()}
    rows = [(f"t = {t:g}", f"residual {r:.3e}") for t, r in res.details["per_t"].items()]
    rows.append(_check_row("formula vs expm", res))
    return (EXIT_OK if res.passed else EXIT_FAIL), report, rows


def cmd_model(doc: dict, tol: float) -> tuple[int, dict, list]:
    T, _ = _operator(doc)
    try:
        model = build_finite_model(T.space, T, tol)
    except NotMarkovLattice as exc:
        report = {"error": str(exc), "witness": exc.witness}
        return EXIT_FAIL, report, [("model", "none: " + str(exc))]
    check = verify_model_isomorphism(model, T, tol)
    report = {"K": list(model.K), "psi": list(model.psi.atom_map), "nu": model.nu,
              "phi": list(model.phi), "isomorphism": check.as_dict()}
    rows = [("K", str(list(model.K))), ("psi", str(list(model.psi.atom_map))),
            ("nu", " ".join(f"{w:.6g}" for w in model.nu)), _check_row("isomorphism", check)]
    return (EXIT_OK if check.passed else EXIT_FAIL), report, rows


def cmd_ergodic_times(doc: dict, tol: float | None) -> tuple[int, dict, list]:
    if doc["_payload"] != "rotation":
        raise InputError(f"schema violation at $.{doc['_payload']}: ergodic-times needs a rotation payload")
    tol = RATIONAL_TOL if tol is None else tol
    model = _rotation(doc["rotation"])
    t_max = _option(doc, "t_max", DEFAULT_T_MAX)
    max_den = int(_option(doc, "max_denominator", MAX_DENOMINATOR))
    report = nonergodic_times(model, t_max, max_den, tol)
    recheck = [(row["t"], fix_dimension(model, Fraction(row["t_exact"]) if row["t_exact"] else row["t"], tol).dimension)
               for row in report.times]
    bad = [t for t, d in recheck if d < 2]
    out = report.as_dict()
    out["recheck"] = {"passed": not bad, "witness": None if not bad else {"t": bad[0]}}
    rows = [("t", " dim  mode")]
    rows += [(f"{r['t']:.12g}", f"{r['dim']:>4}  {list(r['mode']) if r['mode'] else '-'}") for r in report.times]
    return (EXIT_OK if not bad else EXIT_FAIL), out, rows


HANDLERS = {
    "check-operator": cmd_check_operator,
    "check-generator": cmd_check_generator,
    "evolve": cmd_evolve,
    "perturb": cmd_perturb,
    "model": cmd_model,
    "ergodic-times": cmd_ergodic_times,
}
# commands whose tolerance default differs from DEFAULT_TOL
_OWN_TOL = {"perturb", "ergodic-times"}


# ----- driver ------------------------------------------------------------------


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0 or not math.isfinite(v):
        raise argparse.ArgumentTypeError(f"must be a positive number, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", metavar="PATH", help="write the JSON report here ('-' for stdout)")
    common.add_argument("--tol", type=_positive_float, help="override the tolerance")
    common.add_argument("--seed", type=int, default=42, help="RNG seed (suite only; default 42)")
    common.add_argument("--quiet", action="store_true", help="no table on stdout")

    parser = argparse.ArgumentParser(prog="koopman-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name in HANDLERS:
        p = sub.add_parser(name, parents=[common], help=f"{name} on a system description")
        p.add_argument("input", help="system description JSON ('-' for stdin)")
    p = sub.add_parser("suite", parents=[common], help="run the acceptance criteria")
    p.add_argument("--max-size", type=_positive_int, default=DEFAULT_MAX_SIZE,
                   help=f"largest atom count for the exhaustive criteria (default {DEFAULT_MAX_SIZE})")
    return parser


def _table(title: str, rows: list, verdict: str) -> list[str]:
    width = max((len(str(k)) for k, _ in rows), default=0)
    return [title, *(f"  {str(k):<{width}}  {v}" for k, v in rows), f"result: {verdict}"]


def _emit_outputs(json_path: str | None, report: dict, lines: list[str]) -> None:
    try:
        _write_json(json_path, report)
        for line in lines:
            print(line)
        sys.stdout.flush()
    except BrokenPipeError:
        # reader closed the pipe (e.g. `| head`); the exit code still reports the verdict
        sys.stdout = open(os.devnull, "w")


def _write_json(path: str | None, report: dict) -> None:
    if path is None:
        return
    text = dumps(report)
    if path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def run(command: str, input_path: str | None, json_path: str | None = None, tol: float | None = None,
        seed: int = 42, quiet: bool = False, max_size: int = DEFAULT_MAX_SIZE) -> int:
    show = not quiet and json_path != "-"
    if command == "suite":
        try:
            results = run_suite(seed, max_size)
        except ValueError as exc:
            print(f"koopman-lab: {exc}", file=sys.stderr)
            return EXIT_INPUT
        report = {"command": "suite", **summary(results, seed, max_size)}
        lines = [r.line() for r in results]
        lines.append(f"result: {'PASS' if report['all_passed'] else 'FAIL'}"
                     + (" (partial)" if report["partial"] else ""))
        _emit_outputs(json_path, report, lines if show else [])
        return EXIT_OK if report["all_passed"] else EXIT_FAIL

    if command not in HANDLERS:
        print(f"koopman-lab: unknown command {command!r}", file=sys.stderr)
        return EXIT_INPUT
    try:
        doc = load_document(input_path)
        use_tol = tol if tol is not None else _option(doc, "tol")
        if use_tol is None and command not in _OWN_TOL:
            use_tol = DEFAULT_TOL
        code, body, rows = HANDLERS[command](doc, use_tol)
    except InputError as exc:
        print(f"koopman-lab: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InternalConsistencyError as exc:
        body = {"error": f"internal consistency check failed: {exc}"}
        code, rows = EXIT_FAIL, [("error", str(exc))]
    except (KoopmanLabError, ValueError) as exc:
        print(f"koopman-lab: {input_path}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    report = {"command": command, "exit_code": code, **body}
    lines = _table(command, rows, "PASS" if code == EXIT_OK else "FAIL") if show else []
    _emit_outputs(json_path, report, lines)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return run(args.command, getattr(args, "input", None), args.json, args.tol, args.seed,
               args.quiet, getattr(args, "max_size", DEFAULT_MAX_SIZE))


if __name__ == "__main__":
    sys.exit(main())
