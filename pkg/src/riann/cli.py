"""Command-line pipeline: build models, stream sequences, transfer effects.

Frame sequences are directories of lossless images consumed in lexicographic
order.  Exit codes are script-friendly: 0 success, 1 usage, 2 I/O,
3 malformed file, 4 geometry mismatch.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from .engine import AnnfWriter, grid_shape, stream_fields
from .errors import DimensionError, FormatError, ModelCapacityError
from .evaluation import (
    coherency_stats,
    efficiency_report,
    field_exact_oracle,
    median_pairwise_reference_distance,
)
from .frames import (
    list_frames,
    load_gray,
    load_gray_sequence,
    load_rgb,
    save_frame,
)
from .model import (
    build_global_model,
    build_local_model,
    load_model,
    model_memory_bytes,
    save_model,
)
from .reports import (
    coherency_record,
    efficiency_record,
    frame_record,
    read_records,
    render_figures,
    write_records,
)
from .search import SearchParams
from .transforms import (
    apply_effect,
    build_effect_table,
    reconstruct_frame,
    reconstruction_error,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_FORMAT = 3
EXIT_DIMENSION = 4


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; this artifact reserves 2 for I/O.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _patch_type(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        pw, ph = int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"patch must look like 8x8, got {text!r}"
        ) from None
    if pw < 1 or ph < 1:
        raise argparse.ArgumentTypeError(f"patch sides must be >= 1, got {text!r}")
    return pw, ph


def _add_search_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--L", type=int, default=20, help="candidate-set size that stops ring drawing (default 20)")
    p.add_argument("--alpha", type=float, default=0.25, help="ring half-width as a fraction of the anchor distance (default 0.25)")
    p.add_argument("--max-rings", type=int, default=8, help="cap on rings per query, initial ring included (default 8)")
    p.add_argument("--seed", type=int, default=0, help="seed for field init and anchor choice (default 0)")
    p.add_argument("--threads", type=int, default=None, help="worker threads per frame (default: all cores)")


def _search_params(args) -> SearchParams:
    return SearchParams(L=args.L, alpha=args.alpha, max_rings=args.max_rings, seed=args.seed)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="riann", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    b = sub.add_parser("build-model", help="build a reference model from a frame or an image directory")
    b.add_argument("input", help="one image (local model) or a directory of images (global model)")
    b.add_argument("-o", "--output", required=True, help="model file to write")
    b.add_argument("--model-size", type=int, default=900, help="target number of references (default 900)")
    b.add_argument("--patch", type=_patch_type, default=(8, 8), help="patch size WxH (default 8x8)")
    b.add_argument("--seed", type=int, default=0, help="sampling seed for directory input (default 0)")
    b.add_argument("--raw-patches", type=int, default=None, help="patches to sample across a directory (required for directory input)")
    b.set_defaults(func=cmd_build_model)

    r = sub.add_parser("run", help="stream a sequence against a model, writing the match field file")
    r.add_argument("model", help="model file from build-model")
    r.add_argument("frames", help="directory of sequence frames")
    r.add_argument("-o", "--output", required=True, help="field stream file to write")
    r.add_argument("--stats-out", default=None, help="write per-frame records to this JSONL file")
    r.add_argument("--reconstruct", default=None, metavar="DIR", help="also write reconstructed frames and their errors")
    _add_search_flags(r)
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("effect", help="transfer a keyframe transform (color or patch-level) onto a sequence")
    e.add_argument("frames", help="directory of sequence frames")
    e.add_argument("-o", "--output", required=True, metavar="DIR", help="directory for output frames")
    e.add_argument("--keyframe-raw", required=True, help="untransformed keyframe image")
    e.add_argument("--keyframe-fx", required=True, help="transformed version of the same keyframe")
    e.add_argument("--effect", choices=("colorize", "patch"), default="colorize", help="payload kind: chroma transfer or whole-patch transfer (default colorize)")
    e.add_argument("--model-size", type=int, default=900, help="target number of references (default 900)")
    e.add_argument("--patch", type=_patch_type, default=(8, 8), help="patch size WxH (default 8x8)")
    _add_search_flags(e)
    e.set_defaults(func=cmd_effect)

    v = sub.add_parser("eval", help="run the engine next to the exact oracle and report errors and costs")
    v.add_argument("model", help="model file from build-model")
    v.add_argument("frames", help="directory of sequence frames")
    v.add_argument("--stats-out", default=None, help="write records to this JSONL file")
    v.add_argument("--plots", default=None, metavar="DIR", help="render figures from the records into this directory")
    _add_search_flags(v)
    v.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", help="render figures from a records file written by run or eval")
    p.add_argument("stats", help="JSONL records file")
    p.add_argument("-o", "--output", required=True, metavar="DIR", help="directory for figures")
    p.set_defaults(func=cmd_plot)
    return parser


def cmd_build_model(args) -> int:
    target = Path(args.input)
    started = time.perf_counter()
    if target.is_dir():
        if args.raw_patches is None:
            raise ValueError("directory input needs --raw-patches")
        images = [load_gray(p) for p in list_frames(target)]
        model = build_global_model(
            images, args.raw_patches, args.model_size, args.patch, seed=args.seed
        )
    else:
        model, _ = build_local_model(load_gray(target), args.model_size, args.patch)
    elapsed = time.perf_counter() - started
    save_model(args.output, model)
    print(f"references: {model.n}")
    print(f"build time: {elapsed:.2f} s")
    print(f"memory estimate: {model_memory_bytes(model.n, model.dim) / 1e6:.1f} MB")
    return EXIT_OK


def cmd_run(args) -> int:
    model = load_model(args.model)
    frames = load_gray_sequence(args.frames)
    params = _search_params(args)
    gw, gh = grid_shape(frames[0].shape, model.patch_size)

    recon_dir = None
    if args.reconstruct:
        recon_dir = Path(args.reconstruct)
        recon_dir.mkdir(parents=True, exist_ok=True)

    records = []
    stats_list = []
    started = time.perf_counter()
    with AnnfWriter(args.output, gw, gh, model.patch_size) as writer:
        for t, (frame, field, stats) in enumerate(
            stream_fields(model, frames, params, threads=args.threads)
        ):
            writer.append(field)
            stats_list.append(stats)
            extra = {}
            if recon_dir is not None:
                rec = reconstruct_frame(frame, field, model)
                save_frame(recon_dir / f"recon_{t:04d}.png", rec)
                extra["reconstruction_error"] = reconstruction_error(frame, rec)
            records.append(frame_record(t, stats, **extra))
            line = (
                f"frame {t}: evals={stats.total_distance_evals} "
                f"rings={stats.total_rings} change={stats.temporal_change:.3f}"
            )
            if "reconstruction_error" in extra:
                line += f" E={extra['reconstruction_error']:.5f}"
            print(line)
    elapsed = time.perf_counter() - started

    report = efficiency_report(stats_list, model.n, elapsed)
    records.append(efficiency_record(report))
    if args.stats_out:
        write_records(args.stats_out, records)
    print(
        f"{report.frames} frames, {report.mean_distance_evals:.1f} evals/query "
        f"({report.brute_force_ratio:.1f}x under linear scan), "
        f"{report.frames_per_second:.2f} fps"
    )
    return EXIT_OK


def cmd_effect(args) -> int:
    raw = load_gray(args.keyframe_raw)
    if args.effect == "colorize":
        fx = load_rgb(args.keyframe_fx)
    else:
        fx = load_gray(args.keyframe_fx)
    model, assignments = build_local_model(raw, args.model_size, args.patch)
    table = build_effect_table(model, raw, fx, assignments)
    frames = load_gray_sequence(args.frames)
    params = _search_params(args)
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    for t, (frame, field, _) in enumerate(
        stream_fields(model, frames, params, threads=args.threads)
    ):
        save_frame(out_dir / f"effect_{t:04d}.png", apply_effect(frame, field, table, model))
    print(f"wrote {len(frames)} frames to {out_dir} ({table.payload_kind} payloads, n={model.n})")
    return EXIT_OK


def cmd_eval(args) -> int:
    model = load_model(args.model)
    frames = load_gray_sequence(args.frames)
    params = _search_params(args)

    records = []
    stats_list = []
    oracle_cache: dict[bytes, object] = {}
    started = time.perf_counter()
    for t, (frame, field, stats) in enumerate(
        stream_fields(model, frames, params, threads=args.threads)
    ):
        stats_list.append(stats)
        key = frame.tobytes()
        if key not in oracle_cache:
            oracle_cache[key] = field_exact_oracle(frame, model)
        oracle_field = oracle_cache[key]
        rec = reconstruct_frame(frame, field, model)
        orec = reconstruct_frame(frame, oracle_field, model)
        records.append(
            frame_record(
                t,
                stats,
                reconstruction_error=reconstruction_error(frame, rec),
                oracle_error=reconstruction_error(frame, orec),
                oracle_agreement=float(np.mean(field.indices == oracle_field.indices)),
            )
        )
    elapsed = time.perf_counter() - started

    report = efficiency_report(stats_list, model.n, elapsed)
    records.append(efficiency_record(report))
    if len(frames) >= 2:
        records.append(
            coherency_record(
                coherency_stats(frames, model),
                median_pairwise_reference_distance(model),
            )
        )
    if args.stats_out:
        write_records(args.stats_out, records)
    if args.plots:
        for path in render_figures(records, args.plots):
            print(f"figure: {path}")
    first = records[0]
    last = next(r for r in reversed(records) if r["record"] == "frame_stats")
    print(
        f"E frame0={first['reconstruction_error']:.5f} -> "
        f"final={last['reconstruction_error']:.5f} "
        f"(oracle {last['oracle_error']:.5f}); "
        f"{report.mean_distance_evals:.1f} evals/query, "
        f"spearman={report.rings_change_spearman}"
    )
    return EXIT_OK


def cmd_plot(args) -> int:
    records = read_records(args.stats)
    written = render_figures(records, args.output)
    if not written:
        raise ValueError(f"no plottable records in {args.stats}")
    for path in written:
        print(f"figure: {path}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FormatError as e:
        print(f"riann: format error: {e}", file=sys.stderr)
        return EXIT_FORMAT
    except DimensionError as e:
        print(f"riann: dimension mismatch: {e}", file=sys.stderr)
        return EXIT_DIMENSION
    except (ModelCapacityError, ValueError) as e:
        print(f"riann: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"riann: i/o error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
