"""Command-line front end.

Exit codes: 0 success, 2 usage/config error, 3 data/format error,
4 numerical error (empty kernel, empty sample).
"""
from __future__ import annotations

import argparse
import io as _io
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import io
from ._parallel import default_threads
from .cache import cache_dir_from_env, get_weights
from .core import distance_from_quantiles, gmwd_from_quantiles, sliced_quantiles
from .errors import CacheMismatchError, ConfigError, InvalidArgumentError, MalformedFileError, ScwdError
from .geometry import make_center_grid, make_work_grid
from .kernel import format_range, parse_range, weights_digest
from .quantiles import QuantileGrid
from .results import AGGREGATIONS, PAPER_SUM, ScwdParams
from .synth import gen_stack, parse_synth_spec

logger = logging.getLogger("scwd")

SLICING_DEFAULTS = {"r": 2.0, "range": "1000", "centers": "60x120", "work": "361x720", "quantiles": 200}


def _shape(text):
    try:
        a, b = text.lower().split("x")
        return int(a), int(b)
    except ValueError:
        raise InvalidArgumentError(f"expected NLATxNLON, got {text!r}")


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else f"{x:.12g}"


def _slicing_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("slicing parameters")
    g.add_argument("--r", type=float, default=None, help="Wasserstein order (default 2)")
    g.add_argument("--range", dest="range", default=None, help="kernel radius in km, or 'flat' (default 1000)")
    g.add_argument("--centers", default=None, help="center grid NLATxNLON (default 60x120)")
    g.add_argument("--work", default=None, help="work grid NLATxNLON (default 361x720)")
    g.add_argument("--quantiles", type=int, default=None, help="number of quantile levels (default 200)")


def _distance_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("distance options")
    g.add_argument("--aggregation", choices=AGGREGATIONS, default=PAPER_SUM)
    g.add_argument("--strict-paper-scaling", action="store_true",
                   help="sum over quantile levels instead of averaging")
    g.add_argument("--baseline", action="store_true", help="also report the global-mean distance")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
    p.add_argument("-v", "--verbose", action="count", default=0)


def _explicit_slicing(args) -> bool:
    return any(getattr(args, k) is not None for k in ("r", "range", "centers", "work", "quantiles"))


def _params(args) -> ScwdParams:
    def pick(key):
        value = getattr(args, key)
        return SLICING_DEFAULTS[key] if value is None else value

    n_levels = pick("quantiles")
    if n_levels < 1:
        raise InvalidArgumentError("--quantiles must be >= 1")
    return ScwdParams(
        r=pick("r"),
        range_km=parse_range(pick("range")),
        centers=make_center_grid(*_shape(pick("centers"))),
        work=make_work_grid(*_shape(pick("work"))),
        quantiles=QuantileGrid.midpoints(n_levels),
        aggregation=getattr(args, "aggregation", PAPER_SUM),
        strict_paper_scaling=getattr(args, "strict_paper_scaling", False),
    )


def _threads(args) -> int:
    if args.threads is None:
        return default_threads()
    if args.threads < 1:
        raise InvalidArgumentError("--threads must be >= 1")
    return args.threads


def _out(text: str):
    sys.stdout.write(text)


# -- commands ---------------------------------------------------------------------------

def cmd_weights(args) -> int:
    params = _params(args)
    threads = _threads(args)
    cache_dir = cache_dir_from_env()
    if args.output is None and cache_dir is None:
        raise ConfigError("give -o/--output or set SCWD_CACHE_DIR")
    weights = get_weights(params.centers, params.work, params.range_km, threads=threads, cache_dir=cache_dir)
    if args.output is not None:
        io.write_weights(weights, args.output)
    nnz = weights.nonzeros_per_center()
    _out(f"centers: {weights.n_centers}\n")
    _out(f"range_km: {format_range(weights.range_km)}\n")
    _out(f"mean nonzeros per center: {nnz.mean():.6f}\n")
    return 0


def _load_weights_for(params, args, threads):
    if getattr(args, "weights", None):
        digest = weights_digest(params.centers, params.work, params.range_km)
        return io.read_weights(args.weights, expect_digest=digest)
    return get_weights(params.centers, params.work, params.range_km, threads=threads, cache_dir=cache_dir_from_env())


def cmd_slice(args) -> int:
    params = _params(args)
    threads = _threads(args)
    stack = io.read_stack(args.stack)
    weights = _load_weights_for(params, args, threads)
    name = args.name if args.name is not None else Path(args.stack).stem
    sq = sliced_quantiles(stack, params, threads=threads, name=name, weights=weights)
    io.write_quantiles(sq, args.output)
    total = sq.values.shape[0] * sq.n_times
    _out(f"dataset: {name}\n")
    _out(f"slices: {total}\n")
    _out(f"missing slices: {sq.missing_slices}\n")
    _out(f"centers without data: {int((sq.counts == 0).sum())}\n")
    return 0


def _reduce_inputs(paths, args, threads):
    """Load or compute sliced quantiles for each path, all with one parameter set."""
    kinds = [io.sniff(p) for p in paths]
    for path, kind in zip(paths, kinds):
        if kind not in ("stack", "quantiles"):
            raise MalformedFileError(f"{path}: neither a field stack nor a sliced-quantile cache")
    cached = [io.read_quantiles(p) if k == "quantiles" else None for p, k in zip(paths, kinds)]
    first = next((c for c in cached if c is not None), None)
    if first is not None and not _explicit_slicing(args):
        params = first.params.replace(aggregation=args.aggregation, strict_paper_scaling=args.strict_paper_scaling)
    else:
        params = _params(args)
    out = []
    weights = None
    for path, sq in zip(paths, cached):
        if sq is None:
            if weights is None:
                weights = get_weights(params.centers, params.work, params.range_km,
                                      threads=threads, cache_dir=cache_dir_from_env())
            sq = sliced_quantiles(io.read_stack(path), params, threads=threads,
                                  name=Path(path).stem, weights=weights)
        elif sq.digest != params.slicing_digest():
            raise CacheMismatchError(f"{path}: cache parameters differ from the requested ones")
        out.append(sq)
    return params, out


def _image_bounds(args, values):
    if args.image_bounds:
        try:
            low, high = (float(x) for x in args.image_bounds.split(","))
        except ValueError:
            raise InvalidArgumentError("--image-bounds must be LOW,HIGH")
        return low, high
    present = values[~np.isnan(values)]
    high = float(present.max()) if present.size else 1.0
    return 0.0, high if high > 0 else 1.0


def cmd_distance(args) -> int:
    threads = _threads(args)
    params, (qa, qb) = _reduce_inputs([args.a, args.b], args, threads)
    result = distance_from_quantiles(qa, qb, params)
    _out(f"a: {qa.name}\n")
    _out(f"b: {qb.name}\n")
    _out(f"range_km: {format_range(params.range_km)}\n")
    _out(f"aggregation: {params.aggregation}\n")
    _out(f"scwd: {_fmt(result.scwd)}\n")
    if args.baseline:
        _out(f"gmwd: {_fmt(gmwd_from_quantiles(qa, qb, params.strict_paper_scaling))}\n")
    if args.map_out:
        io.write_map(result.map, args.map_out)
    if args.image_out:
        low, high = _image_bounds(args, result.map.values)
        io.write_map_image(result.map, args.image_out, low, high)
    return 0


def _rank_table(rows, extra_ranges, baseline):
    """rows: (name, scwd, {range: value}, gmwd or None, error or None)."""
    ok = sorted((r for r in rows if r[4] is None), key=lambda r: (r[1], r[0]))
    failed = sorted((r for r in rows if r[4] is not None), key=lambda r: r[0])
    header = ["rank", "name", "scwd"] + [f"scwd_{format_range(x)}km" for x in extra_ranges]
    if baseline:
        header.append("gmwd")
    header.append("status")
    body = []
    for rank, (name, value, extra, base, _) in enumerate(ok, start=1):
        line = [str(rank), name, _fmt(value)] + [_fmt(extra[x]) for x in extra_ranges]
        if baseline:
            line.append(_fmt(base))
        line.append("ok")
        body.append(line)
    for name, _, _, _, error in failed:
        line = ["-", name, "-"] + ["-" for _ in extra_ranges]
        if baseline:
            line.append("-")
        line.append(f"error: {error}")
        body.append(line)
    return header, body


def _text_table(header, body) -> str:
    widths = [max(len(row[i]) for row in [header] + body) for i in range(len(header))]
    lines = []
    for row in [header] + body:
        cells = [cell.ljust(w) for cell, w in zip(row[:-1], widths[:-1])] + [row[-1]]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines) + "\n"


def _csv_table(header, body) -> str:
    out = _io.StringIO()
    for row in [header] + body:
        out.write(",".join(cell.replace(",", ";") for cell in row) + "\n")
    return out.getvalue()


def cmd_rank(args) -> int:
    threads = _threads(args)
    params = _params(args)
    extra_ranges = [parse_range(x) for x in args.extra_ranges.split(",")] if args.extra_ranges else []
    cache_dir = cache_dir_from_env()
    names = [Path(p).stem for p in args.candidates]
    if args.names:
        names = args.names.split(",")
        if len(names) != len(args.candidates):
            raise ConfigError("--names must list one name per candidate")

    range_params = {params.range_km: params}
    for extra in extra_ranges:
        range_params.setdefault(extra, params.replace(range_km=extra))

    reference = io.read_stack(args.reference)
    ref_q = {}
    for rng_km, p in range_params.items():
        weights = get_weights(p.centers, p.work, p.range_km, threads=threads, cache_dir=cache_dir)
        ref_q[rng_km] = sliced_quantiles(reference, p, threads=threads, name=Path(args.reference).stem, weights=weights)

    rows = []
    worst = 0
    for path, name in zip(args.candidates, names):
        try:
            stack = io.read_stack(path)
            values = {}
            base = None
            for rng_km, p in range_params.items():
                weights = get_weights(p.centers, p.work, p.range_km, threads=threads, cache_dir=cache_dir)
                q = sliced_quantiles(stack, p, threads=threads, name=name, weights=weights)
                values[rng_km] = distance_from_quantiles(ref_q[rng_km], q, p).scwd
                if rng_km == params.range_km and args.baseline:
                    base = gmwd_from_quantiles(ref_q[rng_km], q, params.strict_paper_scaling)
            rows.append((name, values[params.range_km], values, base, None))
        except (ScwdError, OSError) as exc:
            code = exc.exit_code if isinstance(exc, ScwdError) else 3
            worst = max(worst, code)
            logger.error("%s: %s", name, exc)
            rows.append((name, math.nan, {}, None, str(exc).replace("\n", " ")))

    header, body = _rank_table(rows, extra_ranges, args.baseline)
    _out(_text_table(header, body))
    if args.csv_out:
        with open(args.csv_out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(_csv_table(header, body))
    return worst


def cmd_synth(args) -> int:
    try:
        text = Path(args.spec).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read spec: {exc}")
    spec = parse_synth_spec(text)
    stack = gen_stack(spec, threads=_threads(args))
    io.write_stack(stack, args.output)
    _out(f"wrote {spec.timesteps} timesteps on {spec.grid.lat.size}x{spec.grid.lon.size} grid\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scwd", description="Spherical convolutional Wasserstein distances.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("weights", help="precompute kernel weights")
    _slicing_flags(p)
    _common(p)
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("slice", help="slice one stack into a quantile cache")
    p.add_argument("stack")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--weights", default=None, help="weight cache from the weights command")
    p.add_argument("--name", default=None)
    _slicing_flags(p)
    _common(p)
    p.set_defaults(func=cmd_slice)

    p = sub.add_parser("distance", help="distance between two stacks or quantile caches")
    p.add_argument("a")
    p.add_argument("b")
    _slicing_flags(p)
    _distance_flags(p)
    p.add_argument("--map-out", default=None, help="write the local WD map")
    p.add_argument("--image-out", default=None, help="write the local WD map as a P6 pixmap")
    p.add_argument("--image-bounds", default=None, help="color scale LOW,HIGH (default 0,max)")
    _common(p)
    p.set_defaults(func=cmd_distance)

    p = sub.add_parser("rank", help="rank candidate stacks against a reference")
    p.add_argument("reference")
    p.add_argument("candidates", nargs="+")
    p.add_argument("--names", default=None, help="comma-separated candidate names")
    p.add_argument("--extra-ranges", default=None, help="comma-separated additional ranges in km")
    p.add_argument("--csv-out", default=None)
    _slicing_flags(p)
    _distance_flags(p)
    _common(p)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("synth", help="generate a synthetic stack from a spec file")
    p.add_argument("spec")
    p.add_argument("-o", "--output", required=True)
    _common(p)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ScwdError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return exc.exit_code
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 3


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
