import argparse
import io
import json
import os
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Any, Dict, Optional, Sequence

sys.path.append(os.path.abspath(os.path.dirname(__file__)))

import numpy as np
import pandas as pd
from pydantic import BaseModel

from src.config import configure_logging, default_seed
from src.dist_core import (
    DiscreteDistribution,
    ExampleOneParams,
    load_distribution_spec,
    make_rng,
)
from src.ironing import iron, revenue_curve
from src.mechanisms import MECHANISM_KINDS, BidProfile, MechanismSpec, ReserveProfile, run
from src.revenue_eval import (
    EvalConfig,
    best_anonymous_reserve,
    best_reserves_iid,
    expected_revenue,
    reserve_counts,
)
from src.separation import (
    GridConfig,
    RefineConfig,
    asp_corollary,
    finite_ratio,
    minimize_ratio,
    report_at,
)
from src.verify import verify_suite

__version__ = "1.0.0"

RESERVE_TOKENS = ("HIGH", "LOW")


class RunManifest(BaseModel):
    subcommand: str
    params: Dict[str, Any]
    seed: Optional[int] = None
    format: str = "json"
    timestamp: str


@dataclass
class Emitted:
    """Result payload plus the optional table that --format csv prints."""

    result: Dict[str, Any]
    table: Optional[pd.DataFrame] = None


# ---------- Argument helpers ----------

def _number(token: str, params: Optional[ExampleOneParams]) -> float:
    token = token.strip()
    if token.upper() in RESERVE_TOKENS:
        if params is None:
            raise ValueError(f"reserve token {token} needs an example_one distribution")
        return params.high_value if token.upper() == "HIGH" else params.mid_value
    try:
        return float(token)
    except ValueError:
        raise ValueError(f"not a number: {token!r}")


def parse_reserves(text: str, n: int, params: Optional[ExampleOneParams] = None) -> ReserveProfile:
    """
    Reserve grammar:
      r1,r2,...                  one reserve per buyer
      anonymous:r                the same reserve for all n buyers
      two-class:zn,r_high,r_low  the first zn buyers at r_high, the rest at r_low
    HIGH and LOW stand for the example_one support values n and alpha/beta.
    """
    text = text.strip()
    if text.startswith("anonymous:"):
        return ReserveProfile.anonymous(_number(text.split(":", 1)[1], params), n)
    if text.startswith("two-class:"):
        parts = text.split(":", 1)[1].split(",")
        if len(parts) != 3:
            raise ValueError(f"two-class reserves need zn,r_high,r_low, got {text!r}")
        try:
            count_high = int(parts[0])
        except ValueError:
            raise ValueError(f"two-class zn must be an integer, got {parts[0]!r}")
        return ReserveProfile.two_class(n, count_high, _number(parts[1], params), _number(parts[2], params))
    values = [_number(t, params) for t in text.split(",") if t.strip()]
    if len(values) != n:
        raise ValueError(f"got {len(values)} reserves for {n} buyers")
    return ReserveProfile(reserves=tuple(values))


def parse_bids(text: str) -> BidProfile:
    """Inline comma list or a JSON file holding a list (or {"bids": [...]})."""
    if os.path.exists(text):
        with open(text, encoding="utf-8") as f:
            obj = json.load(f)
        if isinstance(obj, dict):
            obj = obj.get("bids")
        if not isinstance(obj, list):
            raise ValueError(f"bid file {text} must hold a JSON list of bids")
        return BidProfile(bids=tuple(float(b) for b in obj))
    return BidProfile(bids=tuple(_number(t, None) for t in text.split(",") if t.strip()))


def build_spec(
    kind: str, reserves: Optional[str], n: int, params: Optional[ExampleOneParams]
) -> MechanismSpec:
    if kind == "myerson-ex1":
        if params is None:
            raise ValueError("myerson-ex1 needs an example_one distribution (--dist)")
        return MechanismSpec(kind=kind, params=params)
    if reserves is None:
        raise ValueError(f"mechanism {kind} needs --reserves")
    if kind == "asp":
        text = reserves.strip()
        r = text.split(":", 1)[1] if text.startswith("anonymous:") else text
        return MechanismSpec(kind=kind, reserve=_number(r, params))
    return MechanismSpec(kind=kind, reserves=parse_reserves(reserves, n, params))


def _resolve_n(n: Optional[int], params: Optional[ExampleOneParams]) -> int:
    if n is not None:
        return n
    if params is not None:
        return params.n
    raise ValueError("--n is required unless the distribution is an example_one family")


def _dist_payload(dist: DiscreteDistribution, params: Optional[ExampleOneParams]) -> Dict[str, Any]:
    if params is not None:
        return {"family": "example_one", **params.model_dump()}
    return dist.to_spec()


def _eval_config(args: argparse.Namespace) -> EvalConfig:
    updates: Dict[str, Any] = {"seed": args.seed}
    if getattr(args, "samples", None) is not None:
        updates["mc_samples"] = args.samples
    if getattr(args, "enum_cap", None) is not None:
        updates["enumeration_cap"] = args.enum_cap
    if getattr(args, "mc_fallback", False):
        updates["allow_mc_fallback"] = True
    return EvalConfig(**updates)


# ---------- Subcommands ----------

def cmd_iron(args: argparse.Namespace) -> Emitted:
    dist, params = load_distribution_spec(args.dist)
    ironed = iron(revenue_curve(dist))
    table = ironed.to_frame()
    return Emitted(
        result={
            "distribution": _dist_payload(dist, params),
            "breakpoints": [list(p) for p in ironed.curve.breakpoints],
            "hull_points": [list(p) for p in ironed.hull_points],
            "hull_slopes": list(ironed.hull_slopes),
            "ironed_virtual_values": table.to_dict(orient="records"),
        },
        table=table,
    )


def cmd_run(args: argparse.Namespace) -> Emitted:
    params = None
    if args.dist:
        _, params = load_distribution_spec(args.dist)
    bids = parse_bids(args.bids)
    spec = build_spec(args.mechanism, args.reserves, bids.n, params)
    outcome = run(spec, bids, make_rng(args.seed))
    result = {"bids": list(bids.bids), **outcome.model_dump()}
    return Emitted(result=result, table=pd.DataFrame([result]).drop(columns=["bids"]))


def cmd_eval(args: argparse.Namespace) -> Emitted:
    dist, params = load_distribution_spec(args.dist)
    n = _resolve_n(args.n, params)
    spec = build_spec(args.mechanism, args.reserves, n, params)
    estimate = expected_revenue(spec, dist, n, _eval_config(args), method="mc" if args.mc else "exact")
    result = {"mechanism": args.mechanism, "n": n, **estimate.model_dump()}
    return Emitted(result=result, table=pd.DataFrame([result]))


def cmd_best_reserves(args: argparse.Namespace) -> Emitted:
    dist, params = load_distribution_spec(args.dist)
    n = _resolve_n(args.n, params)
    cfg = _eval_config(args)
    if args.kind == "asp":
        r, estimate = best_anonymous_reserve(dist, n, cfg)
        profile = ReserveProfile.anonymous(r, n)
    else:
        profile, estimate = best_reserves_iid(dist, n, cfg, kind=args.kind)
    counts = reserve_counts(profile)
    result = {
        "kind": args.kind,
        "n": n,
        "reserves": list(profile.reserves),
        "reserve_counts": [{"reserve": r, "buyers": c} for r, c in counts],
        "estimate": estimate.model_dump(),
    }
    table = pd.DataFrame(counts, columns=["reserve", "buyers"])
    return Emitted(result=result, table=table)


def cmd_separation(args: argparse.Namespace) -> Emitted:
    if args.asp_corollary:
        if args.n is None:
            raise ValueError("--asp-corollary needs --n")
        report = asp_corollary(args.n)
        return Emitted(result=report.model_dump(), table=pd.DataFrame([report.model_dump()]))

    if args.optimize:
        grid = GridConfig(step=args.grid_step)
        start = (args.alpha, args.beta) if args.alpha is not None and args.beta is not None else None
        report = minimize_ratio(grid, RefineConfig(start=start))
    else:
        if args.alpha is None or args.beta is None:
            raise ValueError("separation needs --alpha and --beta, --optimize or --asp-corollary")
        report = report_at(args.alpha, args.beta)

    if args.trace_csv:
        report.trace_frame().to_csv(args.trace_csv, index=False)
    result = report.model_dump()
    if args.n is not None:
        params = ExampleOneParams(alpha=report.alpha, beta=report.beta, n=args.n)
        best_z, value = finite_ratio(params)
        result["finite"] = {"n": args.n, "z": best_z, "ratio": value}
    table = report.trace_frame() if args.optimize else pd.DataFrame([report.model_dump(exclude={"optimizer_trace"})])
    return Emitted(result=result, table=table)


def cmd_verify(args: argparse.Namespace) -> Emitted:
    report = verify_suite(
        _eval_config(args),
        quick=args.quick,
        mc_sigmas=args.mc_sigmas,
        echo=lambda line: print(line, file=sys.stderr),
    )
    result = report.model_dump()
    result["passed"] = report.passed
    result["failures"] = report.failures
    return Emitted(result=result, table=report.to_frame())


COMMANDS = {
    "iron": cmd_iron,
    "run": cmd_run,
    "eval": cmd_eval,
    "best-reserves": cmd_best_reserves,
    "separation": cmd_separation,
    "verify": cmd_verify,
}


# ---------- Parser ----------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cli.py", description="Revenue separation between eager and lazy second price auctions"
    )
    parser.add_argument("--version", action="version", version=f"auctionsep {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging on stderr")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("json", "csv"), default="json", help="Output format")
    common.add_argument("--seed", type=int, default=None, help="RNG seed (default: AUCTIONSEP_SEED)")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("iron", parents=[common], help="Revenue curve, concave hull and ironed virtual values")
    p.add_argument("--dist", required=True, help="Distribution spec: JSON file or inline JSON")

    p = sub.add_parser("run", parents=[common], help="Run one mechanism on one bid profile")
    p.add_argument("--mechanism", required=True, choices=MECHANISM_KINDS)
    p.add_argument("--bids", required=True, help="Comma list or JSON file")
    p.add_argument("--reserves", help="r1,r2,... | anonymous:r | two-class:zn,r_high,r_low")
    p.add_argument("--dist", help="example_one spec for myerson-ex1 and HIGH/LOW tokens")

    p = sub.add_parser("eval", parents=[common], help="Expected revenue of a mechanism")
    p.add_argument("--mechanism", required=True, choices=MECHANISM_KINDS)
    p.add_argument("--dist", required=True)
    p.add_argument("--n", type=int, default=None, help="Number of buyers (default: the family n)")
    p.add_argument("--reserves", help="r1,r2,... | anonymous:r | two-class:zn,r_high,r_low")
    method = p.add_mutually_exclusive_group()
    method.add_argument("--exact", action="store_true", help="Exact enumeration (default)")
    method.add_argument("--mc", action="store_true", help="Monte Carlo estimate")
    p.add_argument("--samples", type=int, default=None, help="Monte Carlo samples")
    p.add_argument("--enum-cap", type=int, default=None, help="Largest exact enumeration allowed")

    p = sub.add_parser("best-reserves", parents=[common], help="Revenue-optimal reserves for i.i.d. buyers")
    p.add_argument("--dist", required=True)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--kind", choices=("esp", "lsp", "spm", "asp"), default="esp")
    p.add_argument("--enum-cap", type=int, default=None)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--mc-fallback", action="store_true", help="Score by Monte Carlo past the cap")

    p = sub.add_parser("separation", parents=[common], help="Large-n ESP/Myerson ratio")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--optimize", action="store_true", help="Grid scan plus local refinement")
    p.add_argument("--grid-step", type=float, default=0.01)
    p.add_argument("--asp-corollary", action="store_true", help="Anonymous reserve bound at alpha = beta = n")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--trace-csv", default=None, help="Write the optimizer trace to this CSV file")

    p = sub.add_parser("verify", parents=[common], help="Cross-oracle self-verification suite")
    p.add_argument("--quick", action="store_true", help="Small instances only (n <= 4)")
    p.add_argument("--mc-sigmas", type=float, default=3.0, help="Allowed MC deviation in standard errors")
    p.add_argument("--samples", type=int, default=None)

    return parser


# ---------- Output ----------

def _to_builtin(o: Any) -> Any:
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def render(manifest: RunManifest, emitted: Emitted) -> str:
    if manifest.format == "csv" and emitted.table is not None:
        buf = io.StringIO()
        buf.write(f"# manifest: {json.dumps(manifest.model_dump(), default=_to_builtin)}\n")
        emitted.table.to_csv(buf, index=False)
        # print() adds the final newline
        return buf.getvalue().rstrip("\n")
    payload = {"manifest": manifest.model_dump(), "result": emitted.result}
    return json.dumps(payload, indent=2, default=_to_builtin)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    configure_logging(args.verbose)
    if args.seed is None:
        args.seed = default_seed()

    params = {k: v for k, v in vars(args).items() if k not in ("command", "format", "seed", "verbose")}
    manifest = RunManifest(
        subcommand=args.command,
        params=params,
        seed=args.seed,
        format=args.format,
        timestamp=datetime.now(timezone.utc).isoformat(),
    )

    try:
        emitted = COMMANDS[args.command](args)
    except ValueError as e:
        print(f"❌ {e}", file=sys.stderr)
        return 2

    print(render(manifest, emitted))
    if args.command == "verify" and not emitted.result["passed"]:
        print(f"❌ failing properties: {', '.join(emitted.result['failures'])}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
