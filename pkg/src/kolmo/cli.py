"""Command-line entry points: build, verify, export, decompose,
counterexample.

Exit codes: 0 all passed, 1 verification failure, 2 usage/parse error,
3 builder/decomposition error.  Identical invocations produce
byte-identical state files; nothing time- or environment-dependent is
written into them.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path

import kolmo
from kolmo.bigfloat import PRECISION_ENV_VAR, active_precision
from kolmo.builder import build, default_epsilon
from kolmo.counterexample import (
    LinearCandidate,
    bad_psi_level,
    check_bad_lemmas,
    collision_witness,
    family_coverage_minimum,
)
from kolmo.errors import BuilderError, DeeperBuildRequired, KolmoError
from kolmo.outer import decompose, parse_function
from kolmo.pwl import PiecewiseLinear
from kolmo.rational import format_rational, parse_rational
from kolmo.towns import RefinementState
from kolmo.verify import SeparationVerdict, check_criterion, check_cube_separation

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_USAGE = 2
EXIT_BUILDER = 3


def _rational_arg(text: str) -> Fraction:
    try:
        return parse_rational(text)
    except (ValueError, ZeroDivisionError) as ex:
        raise argparse.ArgumentTypeError(f"not a rational: {text!r} ({ex})")


def decimal_str(x: Fraction, digits: int) -> str:
    """Exact decimal rendering of a rational, rounded to `digits` places."""
    scaled = x * 10**digits
    n = round(scaled)  # ties-to-even; exact on Fractions
    sign = "-" if n < 0 else ""
    n = abs(n)
    whole, frac = divmod(n, 10**digits)
    if digits == 0:
        return f"{sign}{whole}"
    return f"{sign}{whole}.{frac:0{digits}d}"


# ---------------------------------------------------------------------------
# build
# ---------------------------------------------------------------------------


def cmd_build(args) -> int:
    n = args.n
    epsilon = args.epsilon if args.epsilon is not None else default_epsilon(n)
    if not 0 < epsilon <= Fraction(1, 2 * n):
        print(
            f"error: epsilon {epsilon} outside (0, 1/{2*n}]",
            file=sys.stderr,
        )
        return EXIT_USAGE
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    audit: list = []
    try:
        states = build(n, epsilon, args.levels, audit=audit)
    except BuilderError as ex:
        print(f"builder error: {ex}", file=sys.stderr)
        return EXIT_BUILDER

    state_names = []
    for s in states:
        name = f"state_{s.level:02d}.json"
        (out / name).write_text(s.to_json())
        state_names.append(name)
    audit_name = "audit.jsonl"
    with (out / audit_name).open("w") as fh:
        for record in audit:
            fh.write(json.dumps(record) + "\n")
    manifest = {
        "tool": "kolmo",
        "version": kolmo.__version__,
        "n": n,
        "epsilon": format_rational(epsilon),
        "levels": args.levels,
        "deterministic": True,
        "states": state_names,
        "audit": audit_name,
        "reports": [],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"built {len(states)} states in {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def _load_state(path: str, check: bool = True) -> RefinementState:
    try:
        return RefinementState.from_json(Path(path).read_text(), check=check)
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as ex:
        raise KolmoError(f"cannot parse state file {path}: {ex}")


def cmd_verify(args) -> int:
    if not args.states:
        print("error: no state files given", file=sys.stderr)
        return EXIT_USAGE
    try:
        # invariant violations belong in the report, not in a parse error
        states = [_load_state(p, check=False) for p in args.states]
    except KolmoError as ex:
        print(f"error: {ex}", file=sys.stderr)
        return EXIT_USAGE

    all_ok = True
    reports = []
    print(
        f"{'level':>5} {'towns':>6} {'maxdiam':>12} {'cov':>4} {'gapfam':>7} "
        f"{'monotone':>9} {'slope':>6} {'separation':>11}"
    )
    for s in states:
        rep = check_criterion(s)
        sep_note = "-"
        if args.cubes:
            sep = check_cube_separation(s, precision=args.precision)
            rep.image_separation_ok = sep.verdict is SeparationVerdict.PASS
            rep.min_image_gap = sep.min_gap
            sep_note = sep.verdict.value
            if sep.verdict is SeparationVerdict.FAIL:
                rep.failures.append("cube-image separation failed")
        ok = rep.ok
        all_ok = all_ok and ok
        reports.append(rep)
        print(
            f"{rep.level:>5} {len(s.towns):>6} {float(rep.max_diameter):>12.6f} "
            f"{rep.min_coverage:>4} {rep.max_gap_families:>7} "
            f"{str(rep.monotone):>9} {str(rep.slope_cap_ok):>6} {sep_note:>11}"
        )
        for failure in rep.failures:
            print(f"      FAIL: {failure}")
    if args.report:
        Path(args.report).write_text(
            json.dumps([r.to_dict() for r in reports], indent=2) + "\n"
        )
    print("verification:", "PASS" if all_ok else "FAIL")
    return EXIT_OK if all_ok else EXIT_VERIFY_FAILED


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------


def _psi_csv(state: RefinementState, samples: int, digits: int) -> str:
    psi = PiecewiseLinear.from_state(state)
    lo, hi = psi.domain
    lines = ["x,psi"]
    for i in range(samples):
        x = lo + (hi - lo) * Fraction(i, samples - 1)
        lines.append(f"{decimal_str(x, digits)},{decimal_str(psi.eval(x), digits)}")
    return "\n".join(lines) + "\n"


def _psi_svg(state: RefinementState, width: int = 900, height: int = 420) -> str:
    psi = PiecewiseLinear.from_state(state)
    lo, hi = float(psi.xs[0]), float(psi.xs[-1])
    ymax = float(max(psi.ys)) or 1.0
    pad = 40.0

    def sx(x: float) -> float:
        return pad + (x - lo) / (hi - lo) * (width - 2 * pad)

    def sy(y: float) -> float:
        return height - pad - y / ymax * (height - 2 * pad)

    pts = " ".join(
        f"{sx(float(x)):.2f},{sy(float(y)):.2f}" for x, y in psi.knots()
    )
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">\n'
        f'<rect width="{width}" height="{height}" fill="white"/>\n'
        f'<polyline points="{pts}" fill="none" stroke="#1f6fb2" '
        f'stroke-width="1.2"/>\n'
        f'<line x1="{pad}" y1="{height-pad}" x2="{width-pad}" '
        f'y2="{height-pad}" stroke="black" stroke-width="0.7"/>\n'
        f'<line x1="{sx(0.0):.2f}" y1="{pad}" x2="{sx(0.0):.2f}" '
        f'y2="{height-pad}" stroke="#999" stroke-width="0.5" '
        f'stroke-dasharray="4 3"/>\n'
        f'<text x="{pad}" y="{pad-12}" font-size="13">inner function, '
        f"level {state.level}</text>\n"
        "</svg>\n"
    )


def _towns_svg(states: list[RefinementState], width: int = 900) -> str:
    row_h = 10
    band_gap = 18
    pad = 50.0
    families = states[0].families
    band_h = families * row_h + band_gap
    height = int(2 * pad + band_h * len(states))
    x_lo, x_hi = -1.0, 2.0

    def sx(x: float) -> float:
        return pad + (x - x_lo) / (x_hi - x_lo) * (width - 2 * pad)

    colors = ["#1f6fb2", "#d1495b", "#66a182", "#edae49", "#8d6a9f",
              "#2e4057", "#c5793b"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    y = pad
    for s in states:
        parts.append(
            f'<text x="{pad}" y="{y-4:.2f}" font-size="12">level '
            f"{s.level}</text>"
        )
        for q in range(s.families):
            color = colors[q % len(colors)]
            ry = y + q * row_h
            for a, b in s.shifted_view(q):
                parts.append(
                    f'<rect x="{sx(float(a)):.2f}" y="{ry:.2f}" '
                    f'width="{max(sx(float(b)) - sx(float(a)), 0.5):.2f}" '
                    f'height="{row_h-2}" fill="{color}"/>'
                )
        # [0,1] frame markers
        for xm in (0.0, 1.0):
            parts.append(
                f'<line x1="{sx(xm):.2f}" y1="{y:.2f}" x2="{sx(xm):.2f}" '
                f'y2="{y + families*row_h - 2:.2f}" stroke="black" '
                f'stroke-width="0.6" stroke-dasharray="3 2"/>'
            )
        y += band_h
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def cmd_export(args) -> int:
    try:
        states = [_load_state(p) for p in args.states]
    except KolmoError as ex:
        print(f"error: {ex}", file=sys.stderr)
        return EXIT_USAGE
    if not states:
        print("error: no state files given", file=sys.stderr)
        return EXIT_USAGE

    if args.format == "csv":
        text = _psi_csv(states[-1], args.samples, args.digits)
    elif args.format == "knots":
        psi = PiecewiseLinear.from_state(states[-1])
        text = json.dumps(psi.knots_dict(), indent=2) + "\n"
    elif args.format == "svg":
        if args.what == "towns":
            text = _towns_svg(states)
        else:
            text = _psi_svg(states[-1])
    else:
        print(f"error: unknown format {args.format}", file=sys.stderr)
        return EXIT_USAGE

    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# decompose
# ---------------------------------------------------------------------------


def cmd_decompose(args) -> int:
    manifest_path = Path(args.manifest)
    try:
        manifest = json.loads(manifest_path.read_text())
        states = [
            _load_state(str(manifest_path.parent / name))
            for name in manifest["states"]
        ]
    except (OSError, json.JSONDecodeError, KeyError, KolmoError) as ex:
        print(f"error: cannot load manifest: {ex}", file=sys.stderr)
        return EXIT_USAGE
    try:
        f = parse_function(args.function)
    except KolmoError as ex:
        print(f"error: {ex}", file=sys.stderr)
        return EXIT_USAGE

    usable = None
    if args.max_level is not None:
        usable = range(args.max_level + 1)
    if args.verify_levels:
        usable = []
        for j, s in enumerate(states):
            res = check_cube_separation(s, precision=args.precision)
            if res.verdict is SeparationVerdict.PASS:
                usable.append(j)
        print(f"separation-verified levels: {usable}")

    rows = []
    code = EXIT_OK
    try:
        outer, _ = decompose(
            f,
            states,
            rounds=args.rounds,
            usable_levels=usable,
            grid=args.grid,
            precision=args.precision,
        )
        rows = outer.history
    except DeeperBuildRequired as ex:
        print(f"decomposition stopped: {ex}", file=sys.stderr)
        code = EXIT_BUILDER
    except KolmoError as ex:
        print(f"error: {ex}", file=sys.stderr)
        code = EXIT_BUILDER

    lines = ["round,level,error"]
    for r, j, m in rows:
        lines.append(f"{r},{j},{m:.12e}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return code


# ---------------------------------------------------------------------------
# counterexample
# ---------------------------------------------------------------------------


def cmd_counterexample(args) -> int:
    try:
        cand = LinearCandidate(gamma=args.gamma, epsilon=args.epsilon)
    except ValueError as ex:
        print(f"error: {ex}", file=sys.stderr)
        return EXIT_USAGE

    print(f"linear candidate: gamma={cand.gamma}, epsilon={cand.epsilon}, "
          f"weights (1, sqrt2)")
    cov = family_coverage_minimum(cand, 1)
    print(f"level-1 family coverage minimum: {cov} (need >= {2*cand.n})")
    rep = check_bad_lemmas(cand, k_max=args.kmax,
                           grid_sample_stride=args.stride)
    print(f"finite-level checks up to k={args.kmax}: "
          f"spacing={'ok' if rep.spacing_ok else 'FAIL'} "
          f"refinement={'ok' if rep.refinement_ok else 'FAIL'} "
          f"grid-separation={'ok' if rep.grid_separation_ok else 'FAIL'}")
    for f in rep.failures[:10]:
        print(f"  FAIL: {f}")

    w = collision_witness(cand)
    print("limit collision witness:")
    print(f"  x1 = (0, sqrt2/4)   in level-1 box {w.box1}")
    print(f"  x2 = (1/2, 0)       in level-1 box {w.box2}")
    print(f"  embedding value at both points: exactly "
          f"{format_rational(w.value.a)} (+ {format_rational(w.value.b)}*sqrt2)")
    print(f"  same box: {w.same_box}")
    print(
        "verdict: every finite level separates its grid, the limit does not"
        if rep.ok and not w.same_box
        else "verdict: UNEXPECTED configuration"
    )

    if args.staircase:
        f = bad_psi_level(cand, args.level, args.coord, args.family)
        lines = ["x,value"]
        for x, y in f.knots():
            lines.append(f"{decimal_str(Fraction(x), 9)},{float(y):.9f}")
        Path(args.staircase).write_text("\n".join(lines) + "\n")
        print(f"wrote staircase data to {args.staircase}")
    return EXIT_OK if rep.ok and not w.same_box else EXIT_VERIFY_FAILED


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="kolmo",
        description=(
            "Build a Lipschitz-1 inner function by iterative interval "
            "refinement, verify its guarantees exactly, and run "
            "superposition decompositions against it. "
            f"Set ${PRECISION_ENV_VAR} to override the big-float precision "
            f"(current: {active_precision()} bits)."
        ),
    )
    sub = ap.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build", help="run the refinement and write states")
    b.add_argument("--n", type=int, default=2, help="spatial dimension")
    b.add_argument("--epsilon", type=_rational_arg, default=None,
                   help="family shift, e.g. 1/5 (default 1/(2n+1))")
    b.add_argument("--levels", type=int, default=4)
    b.add_argument("--out", required=True, help="output directory")
    b.set_defaults(fn=cmd_build)

    v = sub.add_parser("verify", help="check built states exactly")
    v.add_argument("states", nargs="*", help="state JSON files")
    v.add_argument("--cubes", action="store_true",
                   help="also check cube-image separation per level")
    v.add_argument("--precision", type=int, default=None)
    v.add_argument("--report", default=None, help="write JSON report here")
    v.set_defaults(fn=cmd_verify)

    e = sub.add_parser("export", help="export a state's function or towns")
    e.add_argument("states", nargs="*", help="state JSON files")
    e.add_argument("--format", choices=("csv", "svg", "knots"), default="csv")
    e.add_argument("--what", choices=("psi", "towns"), default="psi")
    e.add_argument("--samples", type=int, default=10001)
    e.add_argument("--digits", type=int, default=12)
    e.add_argument("--out", default=None)
    e.set_defaults(fn=cmd_export)

    d = sub.add_parser("decompose", help="run outer-function rounds")
    d.add_argument("--manifest", required=True)
    d.add_argument("--function", required=True,
                   help="const:c | sum | product | runge2d")
    d.add_argument("--rounds", type=int, default=3)
    d.add_argument("--grid", type=int, default=101)
    d.add_argument("--precision", type=int, default=None)
    d.add_argument("--max-level", type=int, default=None,
                   help="cap the refinement level rounds may use")
    d.add_argument("--verify-levels", action="store_true",
                   help="restrict rounds to separation-verified levels")
    d.add_argument("--out", default=None, help="CSV output path")
    d.set_defaults(fn=cmd_decompose)

    c = sub.add_parser("counterexample",
                       help="exact demonstration of the linear candidate")
    c.add_argument("--gamma", type=int, default=10)
    c.add_argument("--epsilon", type=_rational_arg, default=Fraction(1, 50))
    c.add_argument("--kmax", type=int, default=2)
    c.add_argument("--stride", type=int, default=None,
                   help="grid thinning for k >= 3")
    c.add_argument("--staircase", default=None,
                   help="write staircase plot data (CSV) here")
    c.add_argument("--level", type=int, default=1)
    c.add_argument("--coord", type=int, default=2)
    c.add_argument("--family", type=int, default=0)
    c.set_defaults(fn=cmd_counterexample)
    return ap


def main(argv=None) -> int:
    ap = make_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as ex:
        return EXIT_USAGE if ex.code not in (0, None) else EXIT_OK
    try:
        return args.fn(args)
    except BuilderError as ex:
        print(f"builder error: {ex}", file=sys.stderr)
        return EXIT_BUILDER
    except KolmoError as ex:
        print(f"error: {ex}", file=sys.stderr)
        return EXIT_USAGE


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
