"""Command-line front end: encode, decode, sweep, inspect.

Exit codes: 0 ok, 2 usage or input error, 3 internal invariant violation.
Reports are line-delimited ``record key=value ...`` text on stdout.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import bitstream, codec, ingest
from .bacore import PayloadTruncatedError
from .metrics import format_record

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INTERNAL = 3

DEFAULTS = codec.EncodeParams()


def _add_encode_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lambda", dest="lambda_", type=float,
                   default=DEFAULTS.lambda_,
                   help="rate-distortion multiplier (default %(default)s)")
    p.add_argument("--s", type=int, default=DEFAULTS.s,
                   help="grid coarseness S (default %(default)s)")
    p.add_argument("--n-flags", type=int, default=DEFAULTS.n,
                   help="magnitude flag count n (default %(default)s)")
    p.add_argument("--adapt-shift", type=int,
                   default=DEFAULTS.adaptation_shift,
                   help="context adaptation shift (default %(default)s)")
    p.add_argument("--search-halfwidth", type=int,
                   default=DEFAULTS.search_halfwidth,
                   help="candidate window half width (default %(default)s)")
    p.add_argument("--uniform-eta", action="store_true",
                   help="ignore sigma entries for the distortion weighting")
    p.add_argument("--grid-floor", type=float, default=None,
                   help="absolute sigma_min when no sigma map is present "
                        "(default: w_max/1024 per layer)")
    p.add_argument("--threads", type=int, default=DEFAULTS.threads,
                   help="layer/sweep worker count (default %(default)s)")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dcnb",
        description="Weight-tensor codec: rate-distortion quantization plus "
                    "context-adaptive binary arithmetic coding.")
    sub = parser.add_subparsers(dest="command", required=True)

    enc = sub.add_parser("encode", help="compress a .dcnw tensor file")
    enc.add_argument("input", help="input .dcnw path")
    enc.add_argument("--output", required=True, help="output .dcnb path")
    _add_encode_flags(enc)

    dec = sub.add_parser("decode", help="reconstruct weights from a .dcnb")
    dec.add_argument("input", help="input .dcnb path")
    dec.add_argument("--output", required=True, help="output .dcnw path")

    swp = sub.add_parser("sweep", help="encode across an S range, keep the best")
    swp.add_argument("input", help="input .dcnw path")
    swp.add_argument("--output", required=True,
                     help="output directory for best.dcnb and sweep.txt")
    swp.add_argument("--s-range", default="0:256",
                     help="inclusive range A:B of S values (default %(default)s)")
    _add_encode_flags(swp)

    ins = sub.add_parser("inspect", help="dump .dcnb headers")
    ins.add_argument("input", help="input .dcnb path")
    return parser


def _params_from_args(args: argparse.Namespace) -> codec.EncodeParams:
    return codec.EncodeParams(
        lambda_=args.lambda_, s=args.s, n=args.n_flags,
        adaptation_shift=args.adapt_shift,
        search_halfwidth=args.search_halfwidth,
        uniform_eta=args.uniform_eta, grid_floor=args.grid_floor,
        threads=args.threads)


def _parse_s_range(text: str, parser_error) -> list[int]:
    try:
        a_str, b_str = text.split(":", 1)
        a, b = int(a_str), int(b_str)
    except ValueError:
        parser_error(f"--s-range must look like A:B, got {text!r}")
    if a < 0 or b < a:
        parser_error(f"--s-range {text!r} is empty or negative")
    return list(range(a, b + 1))


def _load_layers(path: str) -> list[ingest.CodableLayer]:
    entries = ingest.load(path)
    return ingest.select_codable(entries)


def _print_reports(result: codec.EncodeResult) -> None:
    for r in result.reports:
        print(format_record(
            "layer", name=r.name, rows=r.rows, cols=r.cols,
            payload_bytes=r.payload_bytes, sparsity=r.sparsity,
            bits_per_weight=r.bits_per_weight, ratio_pct=r.ratio_percent,
            distortion=r.distortion))
    blob_len = len(result.to_bytes())
    original = result.original_bytes
    print(format_record(
        "total", layers=len(result.model), original_bytes=original,
        compressed_bytes=blob_len,
        ratio_pct=blob_len / original * 100.0 if original else 0.0,
        distortion=result.total_distortion))


def _cmd_encode(args: argparse.Namespace) -> int:
    layers = _load_layers(args.input)
    result = codec.encode_model(layers, _params_from_args(args))
    Path(args.output).write_bytes(result.to_bytes())
    _print_reports(result)
    return EXIT_OK


def _cmd_decode(args: argparse.Namespace) -> int:
    model = bitstream.parse(Path(args.input).read_bytes())
    entries = codec.decode_model(model)
    ingest.save(args.output, entries)
    print(format_record("decoded", layers=len(entries), output=args.output))
    return EXIT_OK


def _cmd_sweep(args: argparse.Namespace, parser_error) -> int:
    s_values = _parse_s_range(args.s_range, parser_error)
    layers = _load_layers(args.input)
    result = codec.sweep(layers, _params_from_args(args), s_values)
    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    lines = [format_record("sweep", s=row.s,
                           compressed_bytes=row.compressed_bytes,
                           distortion=row.distortion)
             for row in result.rows]
    lines.append(format_record("best", s=result.best_s))
    (outdir / "sweep.txt").write_text("\n".join(lines) + "\n")
    (outdir / "best.dcnb").write_bytes(result.best_bytes)
    print("\n".join(lines))
    return EXIT_OK


def _cmd_inspect(args: argparse.Namespace) -> int:
    model = bitstream.parse(Path(args.input).read_bytes())
    print(format_record("model", layers=len(model)))
    for header, _ in model:
        print(format_record(
            "layer", name=header.name, rows=header.rows, cols=header.cols,
            orig_shape="x".join(str(d) for d in header.orig_shape),
            delta=header.delta, s=header.s, n_flags=header.n_flags,
            remainder_bits=header.remainder_bits,
            adaptation_shift=header.adaptation_shift,
            payload_len=header.payload_len))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "encode":
            return _cmd_encode(args)
        if args.command == "decode":
            return _cmd_decode(args)
        if args.command == "sweep":
            return _cmd_sweep(args, parser.error)
        if args.command == "inspect":
            return _cmd_inspect(args)
        parser.error(f"unknown command {args.command!r}")
    except SystemExit:
        raise
    except (ingest.TensorFileError, bitstream.FormatError,
            PayloadTruncatedError, ValueError, OSError) as exc:
        print(f"dcnb: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # invariant violation, not an input problem
        print(f"dcnb: internal error: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
