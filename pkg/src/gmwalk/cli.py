"""Experiment runner: declarative configs, deterministic CSV artifacts.

A config is plain text with four sections of typed key = value pairs::

    [system]
    alphabet = 3
    order = 0                  # 0 Bernoulli, 1 Markov
    weights = 1/3 1/3 1/3      # order 1: one row per state, ';'-separated
    mode = rational            # or float

    [cocycle]
    group = lattice 1          # lattice <d> | cyclic <k> | heisenberg |
                               # embedded | product(<g>, <g>)
    values = -1; 0; 1          # one tuple per symbol
    involution = 2 1 0         # optional alphabet permutation
    basis = 1; sqrt(2)         # embedded only: one row per internal rank

    [experiment]
    kind = ratio               # or any subcommand name
    ...kind-specific keys...

    [output]
    dir = out

Validation is total: a bad config reports every error at once.  Runs are
deterministic; in rational mode the CSV bytes are identical across runs.
Exit codes: 0 all checks pass, 1 a labeled check failed, 2 usage/validation
error, 3 a resource guard tripped.
"""

from __future__ import annotations

import argparse
import math
import re
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__, _kernels, oracle, pressure, spectral, walkdist
from .errors import ResourceLimitError, ValidationError
from .gm_system import Cocycle, GibbsMarkovSystem, SymmetryInvolution
from .groups import (
    DirectProduct,
    EmbeddedRealLattice,
    HeisenbergZ,
    IntegerLattice,
    cyclic_group,
)

KINDS = (
    "ratio", "cross-ratio", "stone", "window", "conditions", "spectral-scan",
    "fourier-invert", "local-limit", "mixing", "pressure", "kesten", "fekete",
    "oracle-compare",
)


@dataclass
class ExperimentConfig:
    system: GibbsMarkovSystem
    cocycle: Cocycle
    involution: SymmetryInvolution | None
    mode: str
    kind: str
    params: dict
    out_dir: str
    echo: dict = field(default_factory=dict)
    workers: int = 1


# ----------------------------------------------------------------- parsing

_SECTION_RE = re.compile(r"^\[([a-z]+)\]$")

_KNOWN_KEYS = {
    "system": {"alphabet", "order", "weights", "mode"},
    "cocycle": {"group", "values", "involution", "basis"},
    "experiment": {
        "kind", "g", "n", "n_grid", "n_max", "n0", "n1", "stride", "e", "a_box",
        "f_box", "eta", "resolution", "epsilon", "grid", "k_max", "s_max",
        "variant", "base", "cylinder", "max_cells",
    },
    "output": {"dir", "formats"},
}


def _split_sections(text, errors):
    sections = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _SECTION_RE.match(line)
        if m:
            current = m.group(1)
            if current not in _KNOWN_KEYS:
                errors.append(f"line {lineno}: unknown section [{current}]")
                current = None
            elif current in sections:
                errors.append(f"line {lineno}: duplicate section [{current}]")
            else:
                sections[current] = {}
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value', got {line!r}")
            continue
        key, val = (p.strip() for p in line.split("=", 1))
        key = key.lower()
        if current is None:
            errors.append(f"line {lineno}: key {key!r} outside any section")
            continue
        if key not in _KNOWN_KEYS[current]:
            errors.append(f"line {lineno}: unknown key {key!r} in [{current}]")
            continue
        sections[current][key] = val
    return sections


def _parse_fraction(tok):
    return Fraction(tok)


def _parse_number(tok):
    tok = tok.strip()
    m = re.fullmatch(r"sqrt\((\d+)\)", tok)
    if m:
        return math.sqrt(int(m.group(1)))
    return float(Fraction(tok))


def _parse_int_tuple(text):
    return tuple(int(t) for t in re.split(r"[,\s]+", text.strip()) if t)


def _parse_box(text):
    rows = [r for r in text.split(";") if r.strip()]
    box = []
    for r in rows:
        parts = [p for p in re.split(r"[,\s]+", r.strip()) if p]
        if len(parts) != 2:
            raise ValidationError(f"window row {r!r} needs exactly two bounds")
        box.append((_parse_number(parts[0]), _parse_number(parts[1])))
    return tuple(box)


def _parse_group(text, basis_text, errors):
    text = text.strip()
    m = re.fullmatch(r"lattice\s+(\d+)", text)
    if m:
        return IntegerLattice(int(m.group(1)))
    m = re.fullmatch(r"cyclic\s+(\d+)", text)
    if m:
        return cyclic_group(int(m.group(1)))
    if text == "heisenberg":
        return HeisenbergZ()
    if text == "embedded":
        if not basis_text:
            errors.append("embedded group requires a 'basis' key")
            return None
        rows = [r for r in basis_text.split(";") if r.strip()]
        basis = []
        for r in rows:
            basis.append(tuple(_parse_number(p) for p in re.split(r"[,\s]+", r.strip()) if p))
        return EmbeddedRealLattice(basis)
    m = re.fullmatch(r"product\((.+)\)", text)
    if m:
        depth = 0
        inner = m.group(1)
        for i, ch in enumerate(inner):
            if ch == "(":
                depth += 1
            elif ch == ")":
                depth -= 1
            elif ch == "," and depth == 0:
                left = _parse_group(inner[:i], basis_text, errors)
                right = _parse_group(inner[i + 1 :], basis_text, errors)
                if left is None or right is None:
                    return None
                return DirectProduct(left, right)
        errors.append(f"cannot split product spec {text!r}")
        return None
    errors.append(f"unknown group spec {text!r}")
    return None


def parse_config(text, kind_override=None) -> ExperimentConfig:
    """Parse and fully validate a config; raises with every error found."""
    errors: list[str] = []
    sections = _split_sections(text, errors)
    sys_sec = sections.get("system", {})
    coc_sec = sections.get("cocycle", {})
    exp_sec = sections.get("experiment", {})
    out_sec = sections.get("output", {})
    if "system" not in sections:
        errors.append("missing [system] section")
    if "cocycle" not in sections:
        errors.append("missing [cocycle] section")

    system = None
    try:
        mm = int(sys_sec.get("alphabet", "0"))
        order = int(sys_sec.get("order", "0"))
        wtext = sys_sec.get("weights", "")
        rows = [r for r in wtext.split(";") if r.strip()]
        parsed = [[_parse_fraction(t) for t in re.split(r"[,\s]+", r.strip()) if t]
                  for r in rows]
        if order == 0:
            if len(parsed) != 1 or len(parsed[0]) != mm:
                raise ValidationError(f"Bernoulli weights need {mm} entries in one row")
            system = GibbsMarkovSystem.bernoulli(parsed[0])
        else:
            if len(parsed) != mm or any(len(r) != mm for r in parsed):
                raise ValidationError(f"Markov weights need a {mm}x{mm} table")
            system = GibbsMarkovSystem.markov(parsed)
    except (ValidationError, ValueError, ZeroDivisionError) as exc:
        errors.extend(getattr(exc, "errors", [str(exc)]))
    mode = sys_sec.get("mode", "float").strip()
    if mode not in ("rational", "float"):
        errors.append(f"mode must be rational or float, got {mode!r}")

    cocycle = None
    involution = None
    spec = _parse_group(coc_sec.get("group", ""), coc_sec.get("basis"), errors) \
        if coc_sec.get("group") else None
    if coc_sec.get("group") is None and "cocycle" in sections:
        errors.append("cocycle needs a 'group' key")
    if spec is not None and "values" in coc_sec:
        try:
            vals = [
                _parse_int_tuple(r) for r in coc_sec["values"].split(";") if r.strip()
            ]
            cocycle = Cocycle(spec, tuple(vals))
            if system is not None and len(vals) != system.m:
                errors.append(
                    f"cocycle not total: {len(vals)} values for {system.m} symbols"
                )
        except (ValidationError, ValueError) as exc:
            errors.extend(getattr(exc, "errors", [str(exc)]))
    elif spec is not None:
        errors.append("cocycle needs a 'values' key")
    if "involution" in coc_sec:
        try:
            involution = SymmetryInvolution(_parse_int_tuple(coc_sec["involution"]))
            if system is not None and len(involution.perm) != system.m:
                errors.append("involution length does not match the alphabet size")
        except (ValidationError, ValueError) as exc:
            errors.extend(getattr(exc, "errors", [str(exc)]))

    kind = kind_override or exp_sec.get("kind", "").strip()
    if kind not in KINDS:
        errors.append(f"unknown experiment kind {kind!r}")
    if kind_override and exp_sec.get("kind") and exp_sec["kind"].strip() != kind_override:
        errors.append(
            f"config kind {exp_sec['kind'].strip()!r} conflicts with "
            f"subcommand {kind_override!r}"
        )

    params = {}
    try:
        params = _parse_params(kind, exp_sec, cocycle, errors)
    except (ValidationError, ValueError) as exc:
        errors.extend(getattr(exc, "errors", [str(exc)]))

    if errors:
        raise ValidationError(errors)

    echo = {}
    for sec_name, sec in (("system", sys_sec), ("cocycle", coc_sec),
                          ("experiment", exp_sec), ("output", out_sec)):
        for k, v in sorted(sec.items()):
            echo[f"{sec_name}.{k}"] = v
    echo.setdefault("system.mode", mode)
    echo.setdefault("experiment.kind", kind)
    return ExperimentConfig(
        system, cocycle, involution, mode, kind, params,
        out_sec.get("dir", "out"), echo,
    )


def _parse_params(kind, sec, cocycle, errors):
    p = {}

    def need(key, reason=None):
        if key not in sec:
            errors.append(f"experiment kind {kind!r} requires {key!r}"
                          + (f" ({reason})" if reason else ""))
            return False
        return True

    embedded = cocycle is not None and isinstance(cocycle.spec, EmbeddedRealLattice)
    if kind in ("stone", "window", "local-limit", "conditions") and not embedded:
        if kind != "conditions" or sec.get("variant", "D").upper() in ("C", "CM"):
            if kind != "local-limit" or "e" in sec:
                errors.append("window experiments require an embedded real lattice")
    if "g" in sec:
        p["g"] = _parse_int_tuple(sec["g"])
    if "n" in sec:
        p["n"] = int(sec["n"])
    if "n_grid" in sec:
        p["n_grid"] = [int(t) for t in re.split(r"[,\s]+", sec["n_grid"].strip()) if t]
    if "n_max" in sec:
        p["n_max"] = int(sec["n_max"])
    for key in ("n0", "n1", "stride", "resolution", "k_max", "s_max", "base"):
        if key in sec:
            p[key] = int(sec[key])
    for key, name in (("e", "E"), ("a_box", "A"), ("f_box", "F")):
        if key in sec:
            p[name] = _parse_box(sec[key])
    for key in ("eta", "epsilon"):
        if key in sec:
            p[key] = _parse_number(sec[key])
    if "grid" in sec:
        p["grid"] = int(sec["grid"])
    if "variant" in sec:
        p["variant"] = sec["variant"].strip()
    if "cylinder" in sec:
        p["cylinder"] = _parse_int_tuple(sec["cylinder"])
    if "max_cells" in sec:
        p["max_cells"] = int(sec["max_cells"])

    if kind == "ratio":
        need("g"), need("n_grid")
    elif kind == "cross-ratio":
        need("g"), need("n")
    elif kind == "stone":
        need("e"), need("a_box"), need("n")
    elif kind == "window":
        need("e"), need("n")
    elif kind == "conditions":
        variant = p.get("variant", "D").upper()
        p["variant"] = variant
        if variant in ("D", "C"):
            need("g"), need("n0"), need("n1"), need("n")
            if variant == "C":
                need("e")
        elif variant == "CM":
            need("cylinder"), need("f_box"), need("a_box"), need("e"), need("g"), need("n")
        else:
            errors.append(f"conditions variant must be D, C, or CM, got {variant!r}")
    elif kind == "spectral-scan":
        p.setdefault("resolution", 64)
        p.setdefault("epsilon", 0.1)
    elif kind == "fourier-invert":
        need("g"), need("n"), need("grid")
    elif kind == "local-limit":
        need("n_grid")
        if "g" not in p and "E" not in p:
            errors.append("local-limit needs a point g or a window e")
        p.setdefault("eta", 0.5)
    elif kind == "mixing":
        need("n_max")
    elif kind == "pressure":
        p.setdefault("variant", "extension")
        p.setdefault("base", 0)
        need("n_max")
    elif kind == "kesten":
        p.setdefault("k_max", 30)
    elif kind == "fekete":
        need("n_max")
    elif kind == "oracle-compare":
        p.setdefault("n_max", 8)
    return p


# ------------------------------------------------------------------ running

def _fmt(x):
    if isinstance(x, Fraction):
        return f"{x.numerator}/{x.denominator}"
    if isinstance(x, float):
        return repr(x)
    if isinstance(x, tuple):
        return " ".join(_fmt(c) for c in x)
    return str(x)


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(c) for c in row) + "\n")


def run(config: ExperimentConfig, out_dir=None):
    """Execute one experiment; returns (exit_code, artifact paths)."""
    out = Path(out_dir or config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    code = 0
    artifacts = []
    try:
        code, rows, header, extra = _dispatch(config)
    except ValidationError as exc:
        _write_manifest(out / "manifest.txt", config, 2, time.perf_counter() - t0,
                        error="; ".join(exc.errors))
        return 2, [out / "manifest.txt"]
    except ResourceLimitError as exc:
        _write_manifest(out / "manifest.txt", config, 3, time.perf_counter() - t0,
                        error=f"{exc} (completed={exc.completed})")
        return 3, [out / "manifest.txt"]
    csv_path = out / f"{config.kind.replace('-', '_')}.csv"
    _write_csv(csv_path, header, rows)
    artifacts.append(csv_path)
    manifest = out / "manifest.txt"
    _write_manifest(manifest, config, code, time.perf_counter() - t0, extra=extra)
    artifacts.append(manifest)
    return code, artifacts


def _write_manifest(path, config, code, wall, error=None, extra=None):
    lines = {}
    lines.update(config.echo)
    lines["run.version"] = __version__
    lines["run.python"] = sys.version.split()[0]
    lines["run.numpy"] = np.__version__
    lines["run.kernel_backend"] = _kernels.BACKEND
    lines["run.workers"] = str(config.workers)
    lines["run.exit_code"] = str(code)
    lines["run.wall_time_s"] = f"{wall:.3f}"
    if error:
        lines["run.error"] = error
    for k, v in (extra or {}).items():
        lines[f"result.{k}"] = _fmt(v)
    with open(path, "w") as fh:
        for k in sorted(lines):
            fh.write(f"{k} = {lines[k]}\n")


def _dispatch(config: ExperimentConfig):
    system, cocycle, mode = config.system, config.cocycle, config.mode
    p = dict(config.params)
    kind = config.kind
    kw = {}
    if "max_cells" in p:
        kw["max_cells"] = p.pop("max_cells")

    if kind == "ratio":
        rep = walkdist.ratio_sequence(system, cocycle, p["g"], p["n_grid"], mode,
                                      stride=p.get("stride", 1), **kw)
        code = 1 if (rep.periodic and not rep.ratios) else 0
        return code, rep.rows(), ("n", "statistic", "value", "target", "deviation"), {
            "worst_deviation": rep.worst(), "periodic": rep.periodic, "note": rep.note,
        }
    if kind == "cross-ratio":
        rep = walkdist.cross_ratio(system, cocycle, p["g"], p["n"], mode, **kw)
        return 0, rep.rows(), ("n", "statistic", "value", "target", "deviation"), {
            "value": rep.value, "clt_reference": rep.clt_reference,
        }
    if kind == "stone":
        rep = walkdist.stone_ratio(system, cocycle, p["E"], p["A"], p["n"], mode, **kw)
        return 0, rep.rows(), ("n", "statistic", "value", "target", "deviation"), {
            "ratio": rep.ratio, "target": rep.target,
            "boundary_atoms": rep.boundary_atoms,
        }
    if kind == "window":
        rep = walkdist.window_mass(system, cocycle, p["E"], p["n"],
                                   g_shift=p.get("g"), mode=mode, **kw)
        return 0, rep.rows(), ("n", "statistic", "value", "target", "flagged"), {
            "mass": rep.value, "boundary_atoms": rep.boundary_atoms,
        }
    if kind == "conditions":
        variant = p["variant"]
        if variant == "D":
            rep = walkdist.check_condition_D(system, cocycle, p["g"], p["n0"],
                                             p["n1"], p["n"], mode, **kw)
        elif variant == "C":
            rep = walkdist.check_condition_C(system, cocycle, p["E"], p["g"],
                                             p["n0"], p["n1"], p["n"], mode, **kw)
        else:
            rep = walkdist.check_condition_CM(system, cocycle, p["cylinder"], p["F"],
                                              p["A"], p["E"], p["g"], p["n"], mode, **kw)
        code = 1 if (variant == "CM" and rep.note != "holds") else 0
        return code, rep.rows(), ("n_prime", "statistic", "value", "target", "deviation"), {
            "worst_deviation": rep.worst_deviation, "best_nprime": rep.best_nprime,
            "note": rep.note,
        }
    if kind == "spectral-scan":
        rep = spectral.aperiodicity_scan(system, cocycle, p["resolution"],
                                         p["epsilon"], workers=config.workers)
        rows = spectral.eigenvalue_grid(system, cocycle, p["resolution"])
        d = len(rows[0]) - 3
        header = tuple(f"theta_{i}" for i in range(d)) + ("re_lambda", "im_lambda", "gap")
        extra = {"max_modulus": rep.max_modulus, "passed": rep.passed,
                 "argmax_theta": rep.argmax_theta,
                 "algebraic_full": rep.algebraic_full}
        if not rep.passed:
            extra["note"] = "aperiodicity fails: unit-modulus eigenvalue off the zero ball"
        return (0 if rep.passed else 1), rows, header, extra
    if kind == "fourier-invert":
        rep = spectral.fourier_invert(system, cocycle, p["g"], p["n"], p["grid"],
                                      compare=True)
        code = 0 if (rep.deviation is not None and rep.deviation <= 1e-10) else 1
        return code, rep.rows(), ("n", "statistic", "value", "target", "deviation"), {
            "value": rep.value, "deviation": rep.deviation,
            "aliasing_risk": rep.aliasing_risk,
        }
    if kind == "local-limit":
        rep = spectral.local_limit_check(system, cocycle, p["n_grid"],
                                         g=p.get("g"), E=p.get("E"), eta=p["eta"])
        return 0, rep.rows(), ("n", "statistic", "value", "target", "deviation"), {
            "final_deviation": rep.deviations[-1],
        }
    if kind == "mixing":
        rep = walkdist.finite_group_mixing(system, cocycle, p["n_max"], mode)
        tail = walkdist.return_time_tail(system, cocycle, p["n_max"], mode)
        rows = rep.rows() + [(n, "tail", t, 0.0, 0.0) for n, t in zip(tail.ns, tail.tail)]
        code = 1 if rep.periodic else 0
        return code, rows, ("n", "statistic", "value", "target", "deviation"), {
            "rate": rep.rate, "tail_r_squared": tail.r_squared, "note": rep.note,
        }
    if kind == "pressure":
        rep = pressure.pressure_estimate(p["variant"], system, cocycle, p["base"],
                                         p["n_max"], mode, **kw)
        code = 0 if rep.transitive else 1
        return code, rep.rows(), ("n", "estimator", "log_over_n", "fekete_lower"), {
            **{f"estimate_{k}": v for k, v in rep.estimates.items()},
            "transitive": rep.transitive,
        }
    if kind == "kesten":
        law = pressure.one_step_law(system, cocycle, mode="float")
        rep = pressure.kesten_identity_check(law, p["k_max"], p.get("stride"),
                                             "float", **kw)
        code = 0 if rep.consistent else 1
        rows = rep.convolution.rows()
        return code, rows, ("k", "conv_return", "kth_root", "stride_ratio"), {
            "estimate": rep.convolution.estimate,
            "abelianized_minimum": rep.minimizer.phi,
            "difference": rep.difference, "bracket_width": rep.bracket_width,
            "minimizer_x": tuple(rep.minimizer.x),
            "grad_norm": rep.minimizer.grad_norm,
        }
    if kind == "fekete":
        seq = walkdist.return_sequence(system, cocycle, p["n_max"], mode, **kw)
        valid = [(n, float(v)) for n, v in enumerate(seq) if n >= 1 and float(v) > 0]
        log_c = 0.0 if system.is_bernoulli else -2.0 * math.log(float(system.gibbs_constant))
        br = pressure.fekete_limit([math.log(v) for _, v in valid], log_c,
                                   [n for n, _ in valid], upper=0.0)
        rows = [(n, math.log(v) / n, br.lower) for n, v in valid]
        return (0 if br.holds else 1), rows, ("n", "log_mass_over_n", "fekete_lower"), {
            "lower": br.lower, "estimate": br.estimate, "holds": br.holds,
            "violations": len(br.violations),
        }
    if kind == "oracle-compare":
        n_max = min(p["n_max"], 10)
        rows = []
        worst = 0.0
        for n in range(1, n_max + 1):
            ref = oracle.oracle_distribution(system, cocycle, n)
            fast = walkdist.distribution(system, cocycle, n, mode="rational")
            keys = set(ref.data) | set(fast.data)
            dev = max(
                abs(float(ref.data.get(k, 0)) - float(fast.data.get(k, 0))) for k in keys
            )
            exact = ref.data == fast.data
            worst = max(worst, dev)
            rows.append((n, "distribution_max_abs_diff", dev, 0.0, 0 if exact else 1))
        code = 0 if worst == 0.0 else 1
        return code, rows, ("n", "statistic", "value", "target", "mismatch"), {
            "worst_deviation": worst,
        }
    raise ValidationError([f"unhandled kind {kind!r}"])


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="gmwalk",
        description="Deterministic walk experiments on group extensions",
    )
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        sp = sub.add_parser(kind)
        sp.add_argument("--config", required=True)
        sp.add_argument("--out", default=None)
        sp.add_argument("--mode", choices=("rational", "float"), default=None)
        sp.add_argument("--workers", type=int, default=1)
    args = parser.parse_args(argv)
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    try:
        config = parse_config(text, kind_override=args.kind)
    except ValidationError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return 2
    if args.mode:
        config.mode = args.mode
        config.echo["system.mode"] = args.mode
    config.workers = args.workers
    code, artifacts = run(config, out_dir=args.out)
    for a in artifacts:
        print(a)
    return code


if __name__ == "__main__":
    sys.exit(main())
