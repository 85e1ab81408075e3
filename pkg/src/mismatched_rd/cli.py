"""Command-line front end.

Exit codes: 0 success, 1 solver failure, 2 usage or schema error,
3 enumeration guard exceeded.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from .caratheodory import reduce_support
from .envelope import build_curve, convexify, default_grid
from .errors import GuardError, SolverError, SpecError
from .inner import InnerSolution, SolverOptions, Status, kkt_residual
from .oracle import oracle_value
from .outer import OuterCandidate, OuterOptions, evaluate_full
from .prob import Coupling
from .problem import parse_spec, to_document
from .tiebreak import delta_sweep

log = logging.getLogger("mismatched_rd")

EXIT_OK, EXIT_SOLVER, EXIT_USAGE, EXIT_GUARD = 0, 1, 2, 3
CSV_HEADER = ["rate", "c_raw", "c_envelope", "alpha", "r1", "r2", "c_e_star", "info", "status",
              "starts"]


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    rates: list
    starts: int = 64
    seed: int = 0
    workers: int = 1
    delta: float | None = None
    n_w: int | None = None
    evals_per_start: int = 150
    grid_points: int = 21
    n: int | None = None
    decoder_limit: int = 10**6
    solver: dict = field(default_factory=lambda: asdict(SolverOptions()))

    def outer_options(self):
        return OuterOptions(
            starts=self.starts, seed=self.seed, workers=self.workers, n_w=self.n_w,
            evals_per_start=self.evals_per_start, delta=self.delta,
            solver=SolverOptions(**self.solver),
        )

    def as_dict(self):
        d = asdict(self)
        d.pop("workers")  # never affects results
        return d


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, Fraction):
        x = float(x)
    if not math.isfinite(x):
        return ""
    return f"{x:.12g}"


def _plain(x):
    """JSON-safe copy: arrays to lists, non-finite floats to None, Fractions to strings."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, Status):
        return x.value
    return x


def _inner_record(pu, cand, ce_bar, R, inner, tb, cd_bar=None, opts=None):
    kkt = kkt_residual(inner, pu, cand.lam, ce_bar, R)
    rec = {
        "rate": R,
        "candidate": cand.as_dict(),
        "pu": pu,
        "ce_bar": ce_bar,
        "inner": {
            "p_star": inner.p_star.p,
            "support": list(inner.support),
            "nu1": inner.nu1,
            "nu2": inner.nu2,
            "nu3": inner.nu3,
            "encoder_value": inner.encoder_value,
            "info": inner.info,
            "status": inner.status.value,
        },
        "tiebreak": {
            "p_tilde": tb.p_tilde.p,
            "decoder_value": tb.decoder_value,
            "encoder_slack": tb.encoder_slack,
            "info": tb.info,
            "delta": tb.delta,
            "method": tb.method,
        },
        "kkt": kkt.as_dict(),
    }
    if cd_bar is not None:
        sweep = delta_sweep(pu, cand.lam, ce_bar, cd_bar, R, inner, opts=opts)
        rec["tiebreak"]["delta_sensitivity"] = [
            {"delta": d, "decoder_value": v} for d, v in sweep
        ]
    return rec


def _point_record(spec, point, opts):
    res = point.result
    if res is None:
        return {"rate": point.rate, "error": point.error}
    pu, ce, cd = spec.pu, spec.ce, spec.cd
    ce_bar = ce @ res.best.kernel.T
    cd_bar = cd @ res.best.kernel.T
    rec = _inner_record(pu, res.best, ce_bar, point.rate, res.inner, res.tiebreak,
                        cd_bar, opts.solver)
    rec["cd_bar"] = cd_bar
    rec["value"] = res.value
    rec["starts_used"] = res.starts_used
    rec["evaluations"] = res.evaluations
    rec["best_origin"] = res.best_origin
    rec["certified"] = res.certified
    if res.best.n_w > spec.n_u + 3:
        cert = reduce_support(res.best.lam, res.inner.p_star, ce_bar, rec["cd_bar"], pu, point.rate)
        rec["reduction"] = cert.as_dict()
    return rec


def cmd_value(spec, R, config):
    if R < 0:
        raise UsageError("rate must be >= 0")
    grid = sorted(set(default_grid(spec.n_u, config.grid_points)) | {float(R)})
    opts = config.outer_options()
    points = build_curve(spec, grid, opts)
    cert = convexify(points, R)
    by_rate = {p.rate: p for p in points}
    raw = by_rate[float(R)]
    mixture = [_point_record(spec, by_rate[r], opts) for r in sorted({cert.r1, cert.r2})]
    return {
        "command": "value",
        "config": config.as_dict(),
        "spec": to_document(spec),
        "rate": R,
        "value": cert.value,
        "raw_value": raw.value,
        "time_sharing": cert.alpha < 1.0,
        "upper_bound": True,
        "certificate": cert.as_dict(),
        "at_rate": _point_record(spec, raw, opts),
        "mixture": mixture,
        "curve": [{"rate": p.rate, "value": p.value} for p in points],
    }


def parse_rates(spec_str=None, rate_list=None):
    if spec_str:
        try:
            a, b, step = (float(x) for x in spec_str.split(":"))
        except ValueError:
            raise UsageError(f"bad --rates {spec_str!r}; expected A:B:STEP") from None
        if step <= 0 or b < a:
            raise UsageError("--rates needs STEP > 0 and B >= A")
        k = int(math.floor((b - a) / step + 1e-9))
        return [round(a + i * step, 12) for i in range(k + 1)]
    if rate_list:
        try:
            return [float(x) for x in rate_list.replace(",", " ").split()]
        except ValueError:
            raise UsageError(f"bad --rate-list {rate_list!r}") from None
    return []


def cmd_curve(spec, grid, config):
    """CSV text with one row per requested rate."""
    if not grid:
        raise UsageError("empty rate grid")
    if any(r < 0 for r in grid):
        raise UsageError("rates must be >= 0")
    rates = sorted(set(float(r) for r in grid) | {0.0})
    points = build_curve(spec, rates, config.outer_options())
    by_rate = {p.rate: p for p in points}
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in grid:
        p = by_rate[float(r)]
        cert = convexify(points, r)
        if p.ok:
            res = p.result
            row = [r, p.value, cert.value, cert.alpha, cert.r1, cert.r2,
                   res.inner.encoder_value, res.inner.info, res.inner.status.value,
                   res.starts_used]
        else:
            row = [r, None, cert.value, cert.alpha, cert.r1, cert.r2, None, None, "failed", 0]
        writer.writerow([_fmt(x) if not isinstance(x, int) else str(x) for x in row])
    return buf.getvalue()


def cmd_oracle(spec, n, R, config):
    ov = oracle_value(spec, n, R, config.decoder_limit)
    return {
        "command": "oracle",
        "config": config.as_dict(),
        "spec": to_document(spec),
        "n": ov.n,
        "rate": ov.R,
        "messages": ov.best_decoder.M,
        "value": ov.value,
        "value_float": float(ov.value),
        "exact": ov.exact,
        "upper_bound": True,
        "decoders_enumerated": ov.decoders_enumerated,
        "best_decoder": {f"m{m + 1}": list(b) for m, b in enumerate(ov.best_decoder.blocks)},
        "best_response": [
            {
                "source_block": list(e.source_block),
                "argmin": [f"m{m + 1}" for m in e.argmin],
                "chosen": f"m{e.chosen + 1}",
                "tie": len(e.argmin) > 1,
                "encoder_cost": e.encoder_cost,
                "decoder_cost": e.decoder_cost,
            }
            for e in ov.best_response
        ],
    }


def _records(report):
    recs = []
    for key in ("at_rate",):
        if isinstance(report.get(key), dict) and "inner" in report[key]:
            recs.append(report[key])
    for rec in report.get("mixture", []):
        if "inner" in rec:
            recs.append(rec)
    if "inner" in report:
        recs.append(report)
    if not recs:
        raise UsageError("report carries no inner solution")
    return recs


def _nan(x):
    return np.array([np.nan if v is None else v for v in x], dtype=float)


def _rebuild_inner(rec):
    inn = rec["inner"]
    return InnerSolution(
        p_star=Coupling(np.array(inn["p_star"], dtype=float), tuple(inn["support"])),
        nu1=np.array(inn["nu1"], dtype=float),
        nu2=_nan(inn["nu2"]),
        nu3=float(inn["nu3"]),
        encoder_value=float(inn["encoder_value"]),
        info=float(inn["info"]),
        status=Status(inn["status"]),
    )


def cmd_check_kkt(report):
    out = []
    ok = True
    for rec in _records(report):
        sol = _rebuild_inner(rec)
        lam = np.array(rec["candidate"]["lambda"], dtype=float)
        k = kkt_residual(sol, np.array(rec["pu"]), lam, np.array(rec["ce_bar"]), rec["rate"])
        good = k.ok()
        ok &= good
        out.append({"rate": rec["rate"], "ok": good, **k.as_dict()})
    return {"command": "check-kkt", "ok": ok, "records": out}


def cmd_reduce(report, config=None):
    out = []
    for rec in _records(report):
        lam = np.array(rec["candidate"]["lambda"], dtype=float)
        kernel = np.array(rec["candidate"]["decoder_kernel"], dtype=float)
        pu = np.array(rec["pu"], dtype=float)
        ce_bar = np.array(rec["ce_bar"], dtype=float)
        cd_bar = np.array(rec["cd_bar"], dtype=float) if "cd_bar" in rec else None
        if cd_bar is None:
            raise UsageError("report record lacks cd_bar")
        sol = _rebuild_inner(rec)
        R = rec["rate"]
        cert = reduce_support(lam, sol.p_star, ce_bar, cd_bar, pu, R)
        entry = {"rate": R, "certificate": cert.as_dict(), "ok": cert.ok}
        # the selection is re-run under the reduced weights; both values are reported
        spec = parse_spec(report["spec"])
        opts = (config or RunConfig("reduce", [R], **_config_kwargs(report))).outer_options()
        try:
            ev = evaluate_full(spec, OuterCandidate(cert.lambda_out, kernel), R, opts)
            entry["decoder_value_before"] = rec["tiebreak"]["decoder_value"]
            entry["decoder_value_after"] = ev.value
            entry["kkt_after"] = kkt_residual(sol, pu, cert.lambda_out, ce_bar, R).as_dict()
        except SolverError as exc:
            entry["rerun_error"] = str(exc)
        out.append(entry)
    return {"command": "reduce", "records": out}


def _config_kwargs(report):
    cfg = dict(report.get("config", {}))
    cfg.pop("command", None)
    cfg.pop("rates", None)
    known = RunConfig.__dataclass_fields__
    return {k: v for k, v in cfg.items() if k in known}


def _load_spec(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_spec(fh.read())
    except OSError as exc:
        raise UsageError(f"cannot read spec: {exc}") from None


def _load_report(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read report: {exc}") from None


def _emit(text, out):
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json(obj):
    return json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n"


def build_parser():
    p = argparse.ArgumentParser(prog="mismatched-rd", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def search_args(sp):
        sp.add_argument("--spec", required=True)
        sp.add_argument("--starts", type=int, default=64)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--delta", type=float, default=None)
        sp.add_argument("--workers", type=int, default=1, help="0 uses every CPU")
        sp.add_argument("--n-w", type=int, default=None)
        sp.add_argument("--evals-per-start", type=int, default=150)
        sp.add_argument("--out", default=None)

    v = sub.add_parser("value", help="envelope value at one rate")
    search_args(v)
    v.add_argument("--rate", type=float, required=True)
    v.add_argument("--grid-points", type=int, default=21)

    c = sub.add_parser("curve", help="CSV curve over a rate grid")
    search_args(c)
    g = c.add_mutually_exclusive_group(required=True)
    g.add_argument("--rates", help="A:B:STEP")
    g.add_argument("--rate-list", help="comma-separated rates")

    o = sub.add_parser("oracle", help="finite-blocklength game by enumeration")
    o.add_argument("--spec", required=True)
    o.add_argument("--n", type=int, required=True)
    o.add_argument("--rate", type=float, required=True)
    o.add_argument("--decoder-limit", type=int, default=10**6)
    o.add_argument("--out", default=None)

    k = sub.add_parser("check-kkt", help="recheck KKT residuals stored in a report")
    k.add_argument("--report", required=True)

    r = sub.add_parser("reduce", help="support reduction of a report's solutions")
    r.add_argument("--report", required=True)
    r.add_argument("--out", default=None)
    return p


def _config(args, rates):
    workers = args.workers if args.workers > 0 else (os.cpu_count() or 1)
    return RunConfig(
        command=args.command, rates=rates, starts=args.starts, seed=args.seed,
        workers=workers, delta=args.delta, n_w=args.n_w,
        evals_per_start=args.evals_per_start,
        grid_points=getattr(args, "grid_points", 21),
    )


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "value":
            spec = _load_spec(args.spec)
            report = cmd_value(spec, args.rate, _config(args, [args.rate]))
            _emit(_json(report), args.out)
        elif args.command == "curve":
            spec = _load_spec(args.spec)
            grid = parse_rates(args.rates, args.rate_list)
            _emit(cmd_curve(spec, grid, _config(args, grid)), args.out)
        elif args.command == "oracle":
            spec = _load_spec(args.spec)
            cfg = RunConfig("oracle", [args.rate], n=args.n, decoder_limit=args.decoder_limit)
            _emit(_json(cmd_oracle(spec, args.n, args.rate, cfg)), args.out)
        elif args.command == "check-kkt":
            res = cmd_check_kkt(_load_report(args.report))
            _emit(_json(res), None)
            return EXIT_OK if res["ok"] else EXIT_SOLVER
        elif args.command == "reduce":
            _emit(_json(cmd_reduce(_load_report(args.report))), args.out)
    except GuardError as exc:
        print(f"error: resource guard: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (UsageError, SpecError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverError as exc:
        print(f"error: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
