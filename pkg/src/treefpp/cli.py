"""Command-line interface: ``treefpp <command> ...``.

Exit codes: 0 on success (definite negative verdicts included), 2 when a
verdict is inconclusive, 1 on errors.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, core
from .engine import GroupPresentation, PresentationError
from .finite_type import FiniteTypeSpec
from .fpp import (FppError, conditional_fixation, cylinder_independence_check, fpp_report,
                  sample_leaves)
from .nucleus import check_jones_condition, compute_nucleus
from .quotient import (DEFAULT_ELEMENT_LIMIT, PROPERTY_ALIASES, LimitExceeded, check_fractality,
                       check_martingale_condition, enumerate_quotient, group_text,
                       is_level_transitive)
from .report import build_report, write_report
from .zoo import ZOO_KEYS, ZooEntry, ZooError, build_zoo_group

log = logging.getLogger("treefpp")

EXIT_OK, EXIT_ERROR, EXIT_INCONCLUSIVE = 0, 1, 2
CHECK_PROPERTIES = ("fractal", "strongly-fractal", "sf", "ssf", "super-strongly-fractal",
                    "martingale", "transitive")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def default_cache_dir() -> Path:
    env = os.environ.get("TREEFPP_CACHE")
    return Path(env) if env else Path.home() / ".cache" / "treefpp"


@dataclass
class RunConfig:
    command: str
    group: str | None = None
    min_level: int = 1
    max_level: int = 1
    mode: str = "auto"
    samples: int = 50000
    walk_length: int | None = None
    seed: int | None = None
    element_limit: int = DEFAULT_ELEMENT_LIMIT
    depth_cap: int = 30
    pair_cap: int = 20000
    threads: int = 1
    out: str | None = None
    csv: str | None = None
    cache_dir: str | None = None
    prop: str | None = None
    stab_levels: int = 1
    target_level: int = 1
    method: str = "auto"
    n: int = 1
    m: int | None = None
    r: int = 1
    vertex: tuple[int, ...] = ()
    pattern_a: str = "all"
    pattern_b: str = "all"
    count: int = 1
    extra: dict = field(default_factory=dict)

    def echo(self) -> dict:
        out = asdict(self)
        out.pop("extra")
        out["vertex"] = list(self.vertex)
        return out


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _nonneg(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return value


def _vertex(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.replace(",", " ").split())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad vertex {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="treefpp",
                description="Finite quotients, fractality, nuclei and fixed-point proportions "
                            "of self-similar tree groups.")
    p.add_argument("--version", action="version", version=f"treefpp {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, group=True):
        if group:
            sp.add_argument("--group", "-g", required=True, help="zoo key, e.g. grigorchuk, ggs:p=3,alpha=1.2")
        sp.add_argument("--out", "-o", help="write the JSON report here")
        sp.add_argument("--threads", type=_positive, default=1)
        sp.add_argument("--element-limit", type=_positive, default=DEFAULT_ELEMENT_LIMIT)
        sp.add_argument("--seed", type=int)
        sp.add_argument("-v", "--verbose", action="store_true")

    zoo = sub.add_parser("zoo", help="list built-in groups")
    zoo.add_argument("action", choices=["list"])
    common(zoo, group=False)

    f = sub.add_parser("fpp", help="fixed-point proportion series")
    common(f)
    f.add_argument("--max-level", type=_positive, required=True)
    f.add_argument("--min-level", type=_positive, default=1)
    f.add_argument("--mode", choices=["auto", "exact", "mc", "recursion"], default="auto")
    f.add_argument("--samples", type=_positive, default=50000)
    f.add_argument("--walk-length", type=_nonneg)
    f.add_argument("--csv", help="write the series as CSV here")
    f.add_argument("--cache-dir", help="quotient cache (default: $TREEFPP_CACHE or ~/.cache/treefpp)")
    f.add_argument("--no-cache", action="store_true")

    c = sub.add_parser("check", help="fractality, martingale or level-transitivity checks")
    common(c)
    c.add_argument("--property", dest="prop", required=True, choices=CHECK_PROPERTIES)
    c.add_argument("--stab-levels", type=_positive, default=1)
    c.add_argument("--target-level", type=_positive, default=1)
    c.add_argument("--max-level", type=_positive, default=3, help="levels for martingale/transitive")
    c.add_argument("--method", choices=["auto", "enumerate", "schreier"], default="auto")

    nu = sub.add_parser("nucleus", help="nucleus, N1 and fixed ends")
    common(nu)
    nu.add_argument("--depth-cap", type=_positive, default=30)
    nu.add_argument("--pair-cap", type=_positive, default=20000)

    j = sub.add_parser("jones-check", help="nucleus-based criterion for null FPP")
    common(j)
    j.add_argument("--max-level", type=_positive, default=3)
    j.add_argument("--depth-cap", type=_positive, default=30)
    j.add_argument("--pair-cap", type=_positive, default=20000)

    ind = sub.add_parser("independence", help="cylinder independence probe")
    common(ind)
    ind.add_argument("--n", type=_positive, required=True)
    ind.add_argument("--m", type=_positive, required=True)
    ind.add_argument("--vertex", type=_vertex, required=True, help="level-n vertex, e.g. 1,2")
    ind.add_argument("--a", dest="pattern_a", default="all",
                     help="'all', 'none', or comma-separated indices into sorted pi_n or hex encodings")
    ind.add_argument("--b", dest="pattern_b", default="all")

    co = sub.add_parser("conditional", help="mu(X_{n+m} = r | X_n = r) against its bound")
    common(co)
    co.add_argument("--n", type=_positive, required=True)
    co.add_argument("--m", type=_positive)
    co.add_argument("--r", type=_nonneg, required=True)
    co.add_argument("--mode", choices=["exact", "mc"], default="exact")
    co.add_argument("--samples", type=_positive, default=50000)
    co.add_argument("--walk-length", type=_nonneg)

    s = sub.add_parser("sample", help="draw random elements of pi_n")
    common(s)
    s.add_argument("--level", type=_positive, required=True)
    s.add_argument("--count", type=_positive, default=10)
    s.add_argument("--walk-length", type=_nonneg)
    return p


def parse_cli(argv: list[str]) -> RunConfig:
    """Parse and validate; raises :class:`UsageError`."""
    args = build_parser().parse_args(argv)
    cfg = RunConfig(command=args.command, group=getattr(args, "group", None),
                    threads=args.threads, element_limit=args.element_limit, seed=args.seed,
                    out=args.out)
    cfg.extra["verbose"] = args.verbose
    if cfg.group is not None:
        try:
            cfg.extra["entry"] = build_zoo_group(cfg.group)
        except ZooError as exc:
            raise UsageError(str(exc)) from None
    cmd = args.command
    if cmd == "fpp":
        cfg.max_level, cfg.min_level, cfg.mode = args.max_level, args.min_level, args.mode
        cfg.samples, cfg.walk_length, cfg.csv = args.samples, args.walk_length, args.csv
        if cfg.min_level > cfg.max_level:
            raise UsageError("--min-level exceeds --max-level")
        if cfg.mode == "mc" and cfg.seed is None:
            raise UsageError("--seed is required in mc mode")
        if not args.no_cache:
            cfg.cache_dir = str(args.cache_dir or default_cache_dir())
    elif cmd == "check":
        cfg.prop, cfg.stab_levels, cfg.target_level = args.prop, args.stab_levels, args.target_level
        cfg.max_level, cfg.method = args.max_level, args.method
    elif cmd in ("nucleus", "jones-check"):
        cfg.depth_cap, cfg.pair_cap = args.depth_cap, args.pair_cap
        if cmd == "jones-check":
            cfg.max_level = args.max_level
    elif cmd == "independence":
        cfg.n, cfg.m, cfg.vertex = args.n, args.m, args.vertex
        cfg.pattern_a, cfg.pattern_b = args.pattern_a, args.pattern_b
    elif cmd == "conditional":
        cfg.n, cfg.m, cfg.r, cfg.mode = args.n, args.m, args.r, args.mode
        cfg.samples, cfg.walk_length = args.samples, args.walk_length
        if cfg.mode == "mc" and cfg.seed is None:
            raise UsageError("--seed is required in mc mode")
    elif cmd == "sample":
        cfg.max_level, cfg.count, cfg.walk_length = args.level, args.count, args.walk_length
        if cfg.seed is None:
            raise UsageError("--seed is required for sampling")
    entry = cfg.extra.get("entry")
    if cmd in ("nucleus", "jones-check") and entry is not None and not entry.is_presentation:
        raise UsageError(f"{cmd} needs a presented group, {cfg.group} is finite type")
    return cfg


def _group_meta(entry: ZooEntry) -> dict:
    G = entry.group
    return {"key": entry.key, "degree": G.degree,
            "kind": "presentation" if isinstance(G, GroupPresentation) else "finite_type",
            "text": group_text(G), "facts": dict(entry.facts)}


def _patterns(text: str, G, k: int, limit: int) -> np.ndarray:
    Q = enumerate_quotient(G, k, limit)
    text = text.strip().lower()
    if text == "all":
        return Q.codes
    if text in ("none", ""):
        return Q.codes[:0]
    rows = []
    for tok in text.split(","):
        tok = tok.strip()
        if tok.isdigit():
            i = int(tok)
            if not 0 <= i < Q.order:
                raise FppError(f"pattern index {i} outside 0..{Q.order - 1}")
            rows.append(Q.codes[i])
        else:
            p = core.canonical_decode(bytes.fromhex(tok))
            rows.append(core.perm_rank(p.labels).astype(Q.codes.dtype))
    return np.array(rows, dtype=Q.codes.dtype)


def _run(cfg: RunConfig) -> tuple[dict, str]:
    """Dispatch; returns (results, status)."""
    if cfg.command == "zoo":
        return {"groups": [{"key": k, "description": v} for k, v in ZOO_KEYS.items()]}, "ok"
    entry: ZooEntry = cfg.extra["entry"]
    G = entry.group
    limit = cfg.element_limit
    if cfg.command == "fpp":
        series = fpp_report(G, cfg.max_level, cfg.mode, cfg.samples, cfg.seed, cfg.walk_length,
                            limit, cfg.threads, cfg.cache_dir, entry.key, cfg.min_level)
        return {"series": series.to_dict()}, "ok"
    if cfg.command == "check":
        if cfg.prop == "martingale":
            rep = check_martingale_condition(G, cfg.max_level, limit, cfg.method, cfg.threads)
            return {"martingale": rep.to_dict()}, "ok"
        if cfg.prop == "transitive":
            rep = is_level_transitive(G, cfg.max_level, limit)
            return {"transitive": {"levels": cfg.max_level, "transitive": rep.transitive,
                                   "orbit_sizes": list(rep.orbit_sizes)}}, "ok"
        rep = check_fractality(G, PROPERTY_ALIASES[cfg.prop.replace("-", "_")], cfg.stab_levels,
                               cfg.target_level, limit, cfg.method, cfg.threads)
        return {"fractality": rep.to_dict()}, "ok"
    if cfg.command == "nucleus":
        rep = compute_nucleus(G, cfg.depth_cap, cfg.pair_cap)
        return {"nucleus": rep.to_dict()}, "ok" if rep.conclusive else "inconclusive"
    if cfg.command == "jones-check":
        res = check_jones_condition(G, cfg.max_level, cfg.depth_cap, cfg.pair_cap, limit)
        out = res.to_dict()
        if res.nucleus is not None:
            out["nucleus"] = [e.text for e in res.nucleus.elements]
        return {"jones": out}, "inconclusive" if res.verdict == "inconclusive" else "ok"
    if cfg.command == "independence":
        A = _patterns(cfg.pattern_a, G, cfg.n, limit)
        B = _patterns(cfg.pattern_b, G, cfg.m, limit)
        res = cylinder_independence_check(G, cfg.n, cfg.m, cfg.vertex, A, B, limit)
        return {"independence": {"n": cfg.n, "m": cfg.m, "vertex": list(cfg.vertex),
                                 "size_a": int(A.shape[0]), "size_b": int(B.shape[0]),
                                 **res.to_dict()}}, "ok"
    if cfg.command == "conditional":
        res = conditional_fixation(G, cfg.n, cfg.r, cfg.m, cfg.mode, cfg.samples, cfg.seed,
                                   cfg.walk_length, limit, cfg.threads)
        return {"conditional": res.to_dict()}, "ok"
    if cfg.command == "sample":
        n = cfg.max_level
        leaves = sample_leaves(G, n, cfg.count, cfg.seed, cfg.walk_length, cfg.threads)
        codes = core.codes_from_leaves(G.degree, n, leaves)
        fixed = core.fixed_counts_from_leaves(leaves)
        elems = []
        for row, x in zip(codes, fixed):
            labels = core.perm_table(G.degree)[row.astype(np.int64)]
            p = core.Portrait._trusted(G.degree, n, labels)
            elems.append({"encoding": core.canonical_encode(p).hex(), "fixed_leaves": int(x)})
        return {"samples": {"level": n, "count": cfg.count, "elements": elems}}, "ok"
    raise UsageError(f"unknown command {cfg.command}")


def execute(cfg: RunConfig) -> tuple[dict, int]:
    """Run a validated config; returns (report, exit code)."""
    start = time.perf_counter()
    entry = cfg.extra.get("entry")
    group = _group_meta(entry) if entry is not None else None
    try:
        results, status = _run(cfg)
        error = None
    except (LimitExceeded, FppError, PresentationError, ZooError, ValueError, OSError) as exc:
        results, status = None, "error"
        error = {"type": type(exc).__name__, "message": str(exc)}
    report = build_report(cfg.command, cfg.echo(), group, results, status, error,
                          time.perf_counter() - start, __version__)
    code = {"ok": EXIT_OK, "inconclusive": EXIT_INCONCLUSIVE, "error": EXIT_ERROR}[status]
    return report, code


def _summary(report: dict) -> str:
    res = report.get("results") or {}
    if report["status"] == "error":
        return f"error: {report['error']['message']}"
    if "series" in res:
        lines = []
        for e in res["series"]["entries"]:
            if e["exact"] is not None:
                val = e["exact"]
                if len(val) >= 40:
                    num, den = (int(x) for x in val.split("/"))
                    val = f"{num / den:.12f} (exact, {len(str(den))}-digit denominator)"
            elif e["lower"] is not None:
                lo_n, lo_d = (int(x) for x in e["lower"].split("/"))
                hi_n, hi_d = (int(x) for x in e["upper"].split("/"))
                val = f"[{lo_n / lo_d:.12f}, {hi_n / hi_d:.12f}]"
            else:
                val = f"{e['mc']['estimate']:.6f} +- {e['mc']['stderr']:.6f}"
            lines.append(f"  n={e['level']:<4d} {e['provenance']:<9s} {val}")
        return "\n".join(lines)
    if "nucleus" in res:
        nu = res["nucleus"]
        if nu["status"] != "contracting_with_nucleus":
            return f"{nu['status']}: {nu['reason']}"
        return f"{nu['status']}: " + ", ".join(e["word"] for e in nu["elements"])
    if "jones" in res:
        j = res["jones"]
        return j["verdict"] + (f" {j['witness']}" if j["witness"] else "") + \
            (f" ({j['reason']})" if j["reason"] else "")
    if "fractality" in res:
        f = res["fractality"]
        return f"{f['property']}: {f['overall']}" + (f" {f['witness']}" if f["witness"] else "")
    if "martingale" in res:
        return "martingale: " + ("pass" if res["martingale"]["passed"] else f"fail {res['martingale']['witness']}")
    if "transitive" in res:
        t = res["transitive"]
        return f"level-transitive: {t['transitive']} orbit sizes {t['orbit_sizes']}"
    if "groups" in res:
        return "\n".join(f"  {g['key']:<26s} {g['description']}" for g in res["groups"])
    key = next(iter(res))
    return f"{key}: {res[key]}"


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_cli(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_ERROR
    logging.basicConfig(level=logging.INFO if cfg.extra.get("verbose") else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    report, code = execute(cfg)
    try:
        write_report(report, cfg.out, cfg.csv if report["status"] != "error" else None)
    except (OSError, ValueError) as exc:
        print(f"error: cannot write report: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(_summary(report), file=sys.stderr if code == EXIT_ERROR else sys.stdout)
    if cfg.out is None and cfg.command not in ("zoo",):
        log.info("fingerprint %s", report["fingerprint"])
    return code


if __name__ == "__main__":
    sys.exit(main())
