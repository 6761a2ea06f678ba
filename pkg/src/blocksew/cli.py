"""Batch command-line interface: JSON in, JSON/CSV out, reproducible runs.

Subcommands mirror the package layout:

    coord  {extract-c, u-op, check-huang}
    voa    {dump-mode, check-relations}
    schwarz{sd, cocycle, term}
    sew    {run, character, residue-check, invariance}
    fuchs  {solve, certify, residual}

All randomized checks take --seed (default 0); identical configuration and
inputs produce byte-identical outputs.  Relative --out paths land in
$BLOCKSEW_OUTDIR when that is set.  Identity-check commands exit nonzero on
failure and print a machine-readable discrepancy report.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import random
import sys
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional

from . import jsonio
from .coords import c2_formula, extract_c, huang_conjugation_check, u_matrix
from .fock import CONFORMAL, BOSON, VACUUM, FockModule, NilpotentToyModule, partitions_of, vacuum_module
from .fuchs import BoundViolation, FuchsError, certify, ode_residual, residual, solve_formal
from .linalg import QMat, QVec, format_rational, parse_rational
from .schwarzian import cocycle_check, projective_term, schwarzian
from .series import CoordJet, SeriesError, TruncSeries
from .sewing import INFINITY, SewingBlock, SpherePoint, genus0_invariance_check, residue_identity_check, sew

Q = Fraction


@dataclass
class RunConfig:
    subcommand: str
    inputs: List[str]
    order: Optional[int]
    fmt: str
    seed: int
    out: Optional[str]


def _read_json(path: Optional[str]):
    raw = sys.stdin.read() if path in (None, "-") else open(path, "r", encoding="utf-8").read()
    if not raw.strip():
        raise jsonio.SchemaError("input", "empty document")
    try:
        return json.loads(raw)
    except json.JSONDecodeError as e:
        raise jsonio.SchemaError("input", f"invalid JSON: {e}") from None


def _emit(text: str, args) -> None:
    out = getattr(args, "out", None)
    if out:
        base = os.environ.get("BLOCKSEW_OUTDIR", "")
        path = out if os.path.isabs(out) or not base else os.path.join(base, out)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _emit_series(series: TruncSeries, args) -> None:
    if args.format == "csv":
        buf = io.StringIO()
        buf.write("monomial,log,coefficient\n")
        for (exps, logs), val in sorted(series.terms.items()):
            mono = ";".join(
                format_rational(o + n) for o, n in zip(series.offset, exps)
            )
            lg = ";".join(str(l) for l in logs)
            buf.write(f"{mono},{lg},{jsonio.value_to_json(val)}\n")
        _emit(buf.getvalue(), args)
    else:
        _emit(jsonio.dumps_canonical(jsonio.series_to_json(series)), args)


def _fail(report: dict, args) -> int:
    _emit(jsonio.dumps_canonical({"ok": False, **report}), args)
    return 1


def _ok(report: dict, args) -> int:
    _emit(jsonio.dumps_canonical({"ok": True, **report}), args)
    return 0


# -- coord -------------------------------------------------------------------


def cmd_coord_extract_c(args) -> int:
    jet = jsonio.jet_from_json(_read_json(args.input))
    if args.order and (jet.exact or args.order <= jet.order):
        jet = jet.truncate(args.order)
    ec = extract_c(jet)
    doc = {"c0": format_rational(ec.c0), "cs": [format_rational(c) for c in ec.cs]}
    if jet.order >= 3 or jet.exact:
        doc["c2_closed_form"] = format_rational(c2_formula(jet))
    _emit(jsonio.dumps_canonical(doc), args)
    return 0


def cmd_coord_u_op(args) -> int:
    jet = jsonio.jet_from_json(_read_json(args.input))
    module = FockModule(parse_rational(args.momentum))
    n = args.trunc
    mat = u_matrix(jet, module, n)
    labels = [",".join(map(str, mu)) for mu in module.basis(n)]
    _emit(jsonio.dumps_canonical(jsonio.matrix_to_json(mat, labels)), args)
    return 0


def cmd_coord_check_huang(args) -> int:
    module = vacuum_module()
    lam = parse_rational(args.lam)
    cases = {
        "lam-z": CoordJet.from_poly([lam]),
        "quadratic": CoordJet.from_poly([1, 1]),
        "mobius": CoordJet([Q(1)] * 40),
    }
    alpha = cases[args.case]
    lo, hi = args.window
    failures = []
    vs = [{mu: Q(1)} for w in range(args.wmax + 1) for mu in partitions_of(w)]
    ws = [{mu: Q(1)} for w in range(args.wmax + 1) for mu in partitions_of(w)]
    for v in vs:
        for w in ws:
            ok, rep = huang_conjugation_check(alpha, v, w, module, lo, hi)
            if not ok:
                failures.append(
                    {
                        "v": [list(k) for k in v],
                        "w": [list(k) for k in w],
                        "first": [str(x) for x in rep["discrepancies"][0]],
                    }
                )
    report = {"case": args.case, "window": [lo, hi], "checked": len(vs) * len(ws), "failures": failures}
    return _ok(report, args) if not failures else _fail(report, args)


# -- voa ---------------------------------------------------------------------


def _parse_state(name: str):
    if name == "vacuum":
        return dict(VACUUM)
    if name == "boson":
        return dict(BOSON)
    if name == "omega":
        return dict(CONFORMAL)
    parts = tuple(sorted((int(x) for x in name.split(",") if x), reverse=True))
    return {parts: Q(1)}


def cmd_voa_dump_mode(args) -> int:
    module = FockModule(parse_rational(args.momentum))
    n = args.trunc
    if args.kind == "heisenberg":
        mat = module.heisenberg_matrix(args.index, n)
    elif args.kind == "virasoro":
        mat = module.virasoro_matrix(args.index, n)
    elif args.kind == "vertex":
        mat = module.vertex_matrix(_parse_state(args.state), args.index, n)
    else:
        mat = module.contragredient_matrix(_parse_state(args.state), args.index, n)
    labels = [",".join(map(str, mu)) for mu in module.basis(n)]
    _emit(jsonio.dumps_canonical(jsonio.matrix_to_json(mat, labels)), args)
    return 0


def cmd_voa_check_relations(args) -> int:
    module = FockModule(parse_rational(args.momentum))
    failures = []
    n = args.trunc
    rng = args.range
    basis = [{mu: Q(1)} for w in range(n + 1) for mu in partitions_of(w)]

    def comm(apply_a, apply_b, vec):
        from .fock import vec_add, vec_scale

        return vec_add(
            apply_a(apply_b(vec)), vec_scale(-1, apply_b(apply_a(vec)))
        )

    from .fock import vec_add, vec_scale

    for m in range(-rng, rng + 1):
        for k in range(-rng, rng + 1):
            for vec in basis:
                got = comm(
                    lambda x, m=m: module.apply_heisenberg(m, x),
                    lambda x, k=k: module.apply_heisenberg(k, x),
                    vec,
                )
                want = vec_scale(Q(m), vec) if m + k == 0 else {}
                if got != want:
                    failures.append(["heisenberg", m, k])
    vr = min(rng, 3)
    for m in range(-vr, vr + 1):
        for k in range(-vr, vr + 1):
            for vec in basis:
                got = comm(
                    lambda x, m=m: module.apply_virasoro(m, x),
                    lambda x, k=k: module.apply_virasoro(k, x),
                    vec,
                )
                want = vec_scale(Q(m - k), module.apply_virasoro(m + k, vec))
                if m + k == 0:
                    want = vec_add(want, vec_scale(Q(m ** 3 - m, 12), vec))
                if got != want:
                    failures.append(["virasoro", m, k])
    if module.apply_virasoro(2, CONFORMAL) != {(): Q(1, 2)}:
        failures.append(["central-charge"])
    report = {"trunc": n, "range": rng, "failures": failures}
    return _ok(report, args) if not failures else _fail(report, args)


# -- schwarz -----------------------------------------------------------------


def cmd_schwarz_sd(args) -> int:
    jet = jsonio.jet_from_json(_read_json(args.input))
    _emit_series(schwarzian(jet, args.order), args)
    return 0


def cmd_schwarz_cocycle(args) -> int:
    rnd = random.Random(args.seed)

    def rjet():
        lead = Q(rnd.choice([x for x in range(-3, 4) if x]))
        return CoordJet([lead] + [Q(rnd.randint(-3, 3), rnd.randint(1, 3)) for _ in range(args.order + 3)])

    failures = []
    for trial in range(args.count):
        eta, mu, f = rjet(), rjet(), rjet()
        if not cocycle_check(eta, mu, f, args.order):
            failures.append(trial)
    report = {"count": args.count, "order": args.order, "seed": args.seed, "failures": failures}
    return _ok(report, args) if not failures else _fail(report, args)


def cmd_schwarz_term(args) -> int:
    doc = _read_json(args.input)
    s_xi = jsonio.series_from_json(doc["S_xi"], "S_xi")
    s_pi = jsonio.series_from_json(doc["S_pi"], "S_pi")
    s_eta = [jsonio.series_from_json(x, f"S_eta[{i}]") for i, x in enumerate(doc.get("S_eta", []))]
    a = jsonio.series_from_json(doc["a"], "a")
    b = jsonio.series_from_json(doc["b"], "b")
    h = [jsonio.series_from_json(x, f"h[{i}]") for i, x in enumerate(doc.get("h", []))]
    c = parse_rational(str(doc.get("c", "1")))
    order = args.order if args.order is not None else int(doc.get("order", 6))
    _emit_series(projective_term(s_xi, s_pi, s_eta, a, b, h, c, order), args)
    return 0


# -- sew ---------------------------------------------------------------------


def _module_from_json(doc, path="module"):
    kind = doc.get("type", "fock")
    if kind == "fock":
        return FockModule(parse_rational(str(doc.get("momentum", "0"))))
    if kind == "toy":
        dims = [int(d) for d in doc["dims"]]
        nil = [
            QMat.from_rows([[parse_rational(x) for x in row] for row in m]) if m else QMat(d, d)
            for d, m in zip(dims, doc["nilpotents"])
        ]
        return NilpotentToyModule(dims, nil, offset=parse_rational(str(doc.get("offset", "0"))))
    raise jsonio.SchemaError(path, f"unknown module type {kind!r}")


def cmd_sew_run(args) -> int:
    doc = _read_json(args.input)
    module = _module_from_json(doc.get("module", {}))
    block_doc = doc["block"]
    block = SewingBlock(
        [list(map(int, d)) for d in block_doc["slots"]],
        {tuple(int(i) for i in e["idx"]): parse_rational(e["c"]) for e in block_doc.get("entries", [])},
        pair_slots=tuple(block_doc["pair"]) if "pair" in block_doc else None,
    )
    inputs = {
        int(k): QVec.from_list([parse_rational(x) for x in v])
        for k, v in doc.get("inputs", {}).items()
    }
    order = args.order if args.order is not None else int(doc.get("order", 6))
    series = sew(block, inputs, module, order, normalized=bool(doc.get("normalized", False)))
    _emit_series(series, args)
    return 0


def cmd_sew_character(args) -> int:
    if args.module == "fock":
        module = FockModule(parse_rational(args.momentum))
    else:
        raise jsonio.SchemaError("module", f"unknown module {args.module!r}")
    block = SewingBlock.pairing(module, args.order)
    series = sew(block, {}, module, args.order, normalized=args.normalized)
    if args.format == "csv":
        buf = io.StringIO()
        buf.write("n,coefficient\n")
        for (exps, _logs), val in sorted(series.terms.items()):
            buf.write(f"{format_rational(series.offset[0] + exps[0])},{format_rational(val)}\n")
        _emit(buf.getvalue(), args)
    else:
        _emit_series(series, args)
    return 0


def cmd_sew_residue_check(args) -> int:
    module = vacuum_module()
    failures = []
    spans = [{mu: Q(1)} for w in range(args.wmax + 1) for mu in partitions_of(w)]
    for u in spans:
        for ax in range(args.bidegree + 1):
            for bx in range(args.bidegree + 1):
                f = TruncSeries.monomial(
                    1, ("x", "y"), {"x": args.order, "y": args.order}, {"x": ax, "y": bx}
                )
                ok, _o, _s = residue_identity_check(u, f, module, args.order)
                if not ok:
                    failures.append({"u": [list(k) for k in u], "f": [ax, bx]})
    report = {"order": args.order, "wmax": args.wmax, "failures": failures}
    return _ok(report, args) if not failures else _fail(report, args)


def cmd_sew_invariance(args) -> int:
    module = vacuum_module()
    n = args.weight_cap + 6
    block = SewingBlock.pairing(module, n)
    points = [
        SpherePoint(Q(0), CoordJet.identity(), module, dual=False),
        SpherePoint(INFINITY, CoordJet.identity(), module, dual=True),
    ]
    failures = []
    states = {"vacuum": VACUUM, "boson": BOSON, "omega": CONFORMAL}
    for name, v in states.items():
        for k in range(args.kmin, args.kmax + 1):
            ok, fails = genus0_invariance_check(block, points, v, k, args.weight_cap)
            if not ok:
                failures.append({"v": name, "k": k, "count": len(fails)})
    report = {"weight_cap": args.weight_cap, "k": [args.kmin, args.kmax], "failures": failures}
    return _ok(report, args) if not failures else _fail(report, args)


# -- fuchs -------------------------------------------------------------------


def cmd_fuchs_solve(args) -> int:
    doc = _read_json(args.input)
    system, seeds = jsonio.fuchs_system_from_json(doc)
    order = args.order if args.order is not None else int(doc.get("order", 10))
    log_bound = int(doc.get("log_bound", 0))
    psi = solve_formal(system, seeds, order=order, log_bound=log_bound)
    _emit_series(psi, args)
    return 0


def cmd_fuchs_certify(args) -> int:
    doc = _read_json(args.input)
    system, seeds = jsonio.fuchs_system_from_json(doc)
    if "psi" in doc:
        psi = jsonio.series_from_json(doc["psi"], "psi")
    else:
        order = args.order if args.order is not None else int(doc.get("order", 30))
        psi = solve_formal(system, seeds, order=order, log_bound=int(doc.get("log_bound", 0)))
    try:
        cert = certify(system, psi, parse_rational(str(doc.get("r1", args.r1))))
    except BoundViolation as e:
        return _fail({"violation_index": e.index, "message": str(e)}, args)
    _emit(jsonio.dumps_canonical(cert.to_dict()), args)
    return 0


def cmd_fuchs_residual(args) -> int:
    doc = _read_json(args.input)
    psi = jsonio.series_from_json(doc["psi"], "psi")
    if "system" in doc:
        system, _ = jsonio.fuchs_system_from_json(doc["system"])
        res = residual(system, psi)
    elif "Omega" in doc:
        omega = jsonio.series_from_json(doc["Omega"], "Omega")
        res = ode_residual(omega, psi, var=psi.vars[0])
    else:
        raise jsonio.SchemaError("input", "need 'system' or 'Omega'")
    if res.is_zero():
        return _ok({"residual": "0"}, args)
    return _fail({"residual": jsonio.series_to_json(res)}, args)


# -- wiring ------------------------------------------------------------------


def _common(p, order_default=None, with_input=False):
    if with_input:
        p.add_argument("input", nargs="?", default="-", help="input JSON file ('-' for stdin)")
    p.add_argument("--order", type=int, default=order_default)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--out", help="output file (relative paths go under $BLOCKSEW_OUTDIR)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="blocksew")
    top = ap.add_subparsers(dest="group", required=True)

    coord = top.add_parser("coord").add_subparsers(dest="cmd", required=True)
    p = coord.add_parser("extract-c")
    _common(p, with_input=True)
    p.set_defaults(fn=cmd_coord_extract_c)
    p = coord.add_parser("u-op")
    _common(p, with_input=True)
    p.add_argument("--trunc", type=int, default=6)
    p.add_argument("--momentum", default="0")
    p.set_defaults(fn=cmd_coord_u_op)
    p = coord.add_parser("check-huang")
    _common(p)
    p.add_argument("--case", choices=["lam-z", "quadratic", "mobius"], default="lam-z")
    p.add_argument("--lam", default="3/2")
    p.add_argument("--window", type=int, nargs=2, default=[-4, 6])
    p.add_argument("--wmax", type=int, default=2)
    p.set_defaults(fn=cmd_coord_check_huang)

    voa = top.add_parser("voa").add_subparsers(dest="cmd", required=True)
    p = voa.add_parser("dump-mode")
    _common(p)
    p.add_argument("--kind", choices=["heisenberg", "virasoro", "vertex", "contragredient"], required=True)
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--trunc", type=int, default=6)
    p.add_argument("--momentum", default="0")
    p.add_argument("--state", default="boson", help="vacuum|boson|omega or comma-separated partition")
    p.set_defaults(fn=cmd_voa_dump_mode)
    p = voa.add_parser("check-relations")
    _common(p)
    p.add_argument("--trunc", type=int, default=6)
    p.add_argument("--range", type=int, default=3)
    p.add_argument("--momentum", default="0")
    p.set_defaults(fn=cmd_voa_check_relations)

    schwarz = top.add_parser("schwarz").add_subparsers(dest="cmd", required=True)
    p = schwarz.add_parser("sd")
    _common(p, order_default=8, with_input=True)
    p.set_defaults(fn=cmd_schwarz_sd)
    p = schwarz.add_parser("cocycle")
    _common(p, order_default=4)
    p.add_argument("--count", type=int, default=5)
    p.set_defaults(fn=cmd_schwarz_cocycle)
    p = schwarz.add_parser("term")
    _common(p, with_input=True)
    p.set_defaults(fn=cmd_schwarz_term)

    sew_p = top.add_parser("sew").add_subparsers(dest="cmd", required=True)
    p = sew_p.add_parser("run")
    _common(p, with_input=True)
    p.set_defaults(fn=cmd_sew_run)
    p = sew_p.add_parser("character")
    _common(p, order_default=10)
    p.add_argument("--module", default="fock")
    p.add_argument("--momentum", default="0")
    p.add_argument("--normalized", action="store_true", default=True)
    p.add_argument("--standard", dest="normalized", action="store_false")
    p.set_defaults(fn=cmd_sew_character, format="csv")
    p = sew_p.add_parser("residue-check")
    _common(p, order_default=4)
    p.add_argument("--wmax", type=int, default=2)
    p.add_argument("--bidegree", type=int, default=2)
    p.set_defaults(fn=cmd_sew_residue_check)
    p = sew_p.add_parser("invariance")
    _common(p)
    p.add_argument("--weight-cap", type=int, default=4)
    p.add_argument("--kmin", type=int, default=-2)
    p.add_argument("--kmax", type=int, default=2)
    p.set_defaults(fn=cmd_sew_invariance)

    fuchs = top.add_parser("fuchs").add_subparsers(dest="cmd", required=True)
    p = fuchs.add_parser("solve")
    _common(p, with_input=True)
    p.set_defaults(fn=cmd_fuchs_solve)
    p = fuchs.add_parser("certify")
    _common(p, with_input=True)
    p.add_argument("--r1", default="1/2")
    p.set_defaults(fn=cmd_fuchs_certify)
    p = fuchs.add_parser("residual")
    _common(p, with_input=True)
    p.set_defaults(fn=cmd_fuchs_residual)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    # byte-identical outputs are a function of this record plus input files
    args.config = RunConfig(
        subcommand=f"{args.group} {args.cmd}",
        inputs=[getattr(args, "input", None) or ""],
        order=getattr(args, "order", None),
        fmt=args.format,
        seed=args.seed,
        out=getattr(args, "out", None),
    )
    try:
        return args.fn(args)
    except jsonio.SchemaError as e:
        sys.stderr.write(f"schema error: {e}\n")
        return 2
    except (SeriesError, FuchsError, ValueError) as e:
        sys.stderr.write(f"error: {e}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
