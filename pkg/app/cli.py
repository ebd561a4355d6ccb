from __future__ import annotations

import argparse
import asyncio
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import httpx
from pydantic import ValidationError
from tqdm import tqdm

from app.core.config import settings
from app.core.errors import ConfigError, DecoderSimError
from app.core.logs import configure_logging
from app.schemas.decoding import PRESETS, preset_names
from app.schemas.experiments import ExperimentSpec, RankHistogramRequest, SplittingRequest
from app.services.code_repository import CodeRepositoryClient
from app.services.codes import code_report, load_code
from app.services.simulation import (
    rank_histogram_experiment,
    run_experiment,
    stabilizer_splitting_experiment,
    sweep,
)
from app.services.storage import format_table, merge_reports, result_rows, rows_to_csv

logger = logging.getLogger("app.cli")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2

# Post-processing that goes with a preset; decoder settings live in PRESETS.
PRESET_POST: Dict[str, Dict[str, Any]] = {
    "threshold-si": {"post": "si", "si": {"lambda_frac": 0.02}},
    "threshold-osd": {"post": "osd0"},
}

DECODER_FLAGS = {
    "alg": "algorithm",
    "alpha": "alpha",
    "sched": "schedule",
    "iters": "max_iters",
    "gamma": "gamma",
    "clamp": "clamp",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _lambda_max(value: str) -> Union[int, str]:
    if value == "all":
        return value
    try:
        return int(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError("expected an integer or 'all'") from exc


def _p_grid(values: Sequence[str]) -> List[float]:
    grid = []
    for value in values:
        grid.extend(float(tok) for tok in value.split(",") if tok.strip())
    return grid


def _load_config(path: Optional[str]) -> Dict[str, Any]:
    if not path:
        return {}
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must hold a JSON object")
    return data


def _progress_bar(total: int, desc: str) -> tqdm:
    return tqdm(total=total, desc=desc, unit="trial", disable=not sys.stderr.isatty())


LAMBDA_POLICY_KEYS = ("lambda_max", "lambda_frac")


def _layer_si(si: Dict[str, Any], update: Dict[str, Any]) -> None:
    # One lambda policy per layer: a key set here drops the other one set earlier.
    if any(key in update for key in LAMBDA_POLICY_KEYS):
        for key in LAMBDA_POLICY_KEYS:
            si.pop(key, None)
    si.update(update)


def merge_experiment(data: Dict[str, Any], args: argparse.Namespace) -> Dict[str, Any]:
    """Preset, then config file, then command-line flags; later layers win."""
    data = dict(data)
    preset = getattr(args, "preset", None) or data.pop("preset", None)
    data.pop("preset", None)
    decoder: Dict[str, Any] = {}
    si: Dict[str, Any] = {}
    if preset:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {', '.join(preset_names())}")
        decoder.update(PRESETS[preset].model_dump(exclude_unset=True))
        extra = PRESET_POST.get(preset, {})
        if "post" in extra:
            data.setdefault("post", extra["post"])
        _layer_si(si, extra.get("si", {}))

    decoder.update(data.pop("decoder", None) or {})
    _layer_si(si, data.pop("si", None) or {})

    for flag, key in DECODER_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            decoder[key] = value
    for key in LAMBDA_POLICY_KEYS:
        if getattr(args, key, None) is not None:
            _layer_si(si, {key: getattr(args, key)})
    if getattr(args, "si_mode", None) is not None:
        si["mode"] = args.si_mode
    if getattr(args, "restricted_iters", None) is not None:
        si["restricted_iters"] = args.restricted_iters

    for flag in ("code", "post", "trials", "seed", "out", "workers", "early_stop_errors", "error_type"):
        value = getattr(args, flag, None)
        if value is not None:
            data[flag] = value
    if getattr(args, "p", None):
        data["p"] = _p_grid(args.p)

    data["decoder"] = decoder
    data["si"] = si
    return data


def build_spec(args: argparse.Namespace) -> ExperimentSpec:
    data = merge_experiment(_load_config(args.config), args)
    if "code" not in data:
        raise ConfigError("no code given; pass --code or set it in the config file")
    data.setdefault("out", settings.sim_output_dir)
    return ExperimentSpec(**data)


def cmd_run(args: argparse.Namespace) -> int:
    spec = build_spec(args)
    code = load_code(spec.code)
    with _progress_bar(spec.trials * len(spec.p), code.name) as bar:
        result = run_experiment(spec, code=code, progress=bar.update)
    print(format_table(result_rows(result)))
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    data = _load_config(args.config)
    entries = data.get("experiments")
    if not isinstance(entries, list) or not entries:
        raise ConfigError("a sweep file needs a non-empty 'experiments' list")
    shared = {k: v for k, v in data.items() if k != "experiments"}
    specs = []
    for entry in entries:
        merged = merge_experiment({**shared, **entry}, argparse.Namespace())
        merged.setdefault("out", settings.sim_output_dir)
        specs.append(ExperimentSpec(**merged))

    total = sum(s.trials * len(s.p) for s in specs)
    with _progress_bar(total, "sweep") as bar:
        report = sweep(specs, progress=bar.update)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(rows_to_csv(report.rows), encoding="utf-8")
    print(format_table(report.rows))
    return EXIT_OK


def cmd_rank_hist(args: argparse.Namespace) -> int:
    data = merge_experiment(_load_config(args.config), args)
    p_values = data.get("p") or []
    if not isinstance(p_values, list):
        p_values = [p_values]
    if len(p_values) != 1:
        raise ConfigError("rank-hist takes exactly one p")
    fields = {k: data[k] for k in ("code", "trials", "seed") if k in data}
    if data["decoder"]:
        fields["decoder"] = data["decoder"]
    request = RankHistogramRequest(p=p_values[0], bin_width=args.bin_width, **fields)
    code = load_code(request.code)
    with _progress_bar(request.trials, f"{code.name} rank") as bar:
        histogram = rank_histogram_experiment(
            code, request.p, request.decoder, request.trials, request.seed, request.bin_width, progress=bar.update
        )
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(histogram.model_dump(mode="json"), sort_keys=True, indent=2) + "\n")
    print(f"{histogram.failures} MP failures out of {histogram.trials} trials")
    for b in histogram.bins:
        print(f"[{b.lo:>4},{b.hi:>4})  {b.count}")
    return EXIT_OK


def cmd_split_prob(args: argparse.Namespace) -> int:
    data = merge_experiment(_load_config(args.config), args)
    fields = {k: data[k] for k in ("code", "p", "trials", "seed", "error_type") if k in data}
    if data["decoder"]:
        fields["decoder"] = data["decoder"]
    request = SplittingRequest(**fields)
    code = load_code(request.code)
    with _progress_bar(request.trials * len(request.p), f"{code.name} split") as bar:
        curve = stabilizer_splitting_experiment(
            code, request.p, request.decoder, request.trials, request.seed, request.error_type, progress=bar.update
        )
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(curve.model_dump(mode="json"), sort_keys=True, indent=2) + "\n")
    print(f"{curve.even_checks} even-weight checks on {curve.code}")
    print(f"{'p':>10}  {'split_frac':>10}  {'split_prob':>10}  {'split_bound':>11}  {'ler':>10}")
    for pt in curve.points:
        print(f"{pt.p:>10.4g}  {pt.split_frac:>10.4g}  {pt.split_prob:>10.4g}  {pt.split_bound:>11.4g}  {pt.ler:>10.4g}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    print(format_table(merge_reports(args.directory)))
    return EXIT_OK


def cmd_code_report(args: argparse.Namespace) -> int:
    print(json.dumps(code_report(load_code(args.code)), indent=2, default=str))
    return EXIT_OK


async def _fetch(args: argparse.Namespace) -> None:
    client = CodeRepositoryClient(base_url=args.base_url, codes_dir=args.codes_dir)
    try:
        await client.fetch_code(args.name, hx_file=args.hx_file, hz_file=args.hz_file)
    finally:
        await client.close()


def cmd_fetch(args: argparse.Namespace) -> int:
    asyncio.run(_fetch(args))
    return EXIT_OK


def _add_decoder_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON file mirroring the flags; flags override it")
    parser.add_argument("--code", help="builtin name, manifest path or <manifest>:<entry>")
    parser.add_argument("--p", nargs="+", help="depolarizing probabilities, space or comma separated")
    parser.add_argument("--preset", choices=preset_names())
    parser.add_argument("--alg", choices=["sp", "ms", "nms"])
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--sched", choices=["flooding", "serial", "layered"])
    parser.add_argument("--iters", type=int)
    parser.add_argument("--gamma", type=float, help="constant prior for MS and NMS")
    parser.add_argument("--clamp", type=float)
    parser.add_argument("--trials", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--error-type", choices=["X", "Z"])


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="decode-sim", description="Monte Carlo simulator for qLDPC decoders")
    parser.add_argument("--log-level", default=None)
    parser.add_argument("--log-json", action="store_true", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="logical error rate over a p grid")
    _add_decoder_flags(run)
    run.add_argument("--post", choices=["none", "si", "osd0"])
    lam = run.add_mutually_exclusive_group()
    lam.add_argument("--lambda-max", type=_lambda_max, help="integer or 'all'")
    lam.add_argument("--lambda-frac", type=float, help="fraction of the X-check count")
    run.add_argument("--si-mode", choices=["restrict", "zero_llr"])
    run.add_argument("--restricted-iters", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--early-stop-errors", type=int, help="0 disables early stopping")
    run.add_argument("--out", help="results directory, or a .json/.csv file name")
    run.set_defaults(handler=cmd_run)

    sw = sub.add_parser("sweep", help="several experiments sharing one p grid")
    sw.add_argument("--config", required=True, help="JSON file with an 'experiments' list")
    sw.add_argument("--out", help="combined CSV table")
    sw.set_defaults(handler=cmd_sweep)

    rank = sub.add_parser("rank-hist", help="rank of split checks after MP failure")
    _add_decoder_flags(rank)
    rank.add_argument("--bin-width", type=int, default=5)
    rank.add_argument("--out", help="JSON file for the histogram")
    rank.set_defaults(handler=cmd_rank_hist)

    split = sub.add_parser("split-prob", help="MP failures next to the stabilizer-splitting probability")
    _add_decoder_flags(split)
    split.add_argument("--out", help="JSON file for the curve")
    split.set_defaults(handler=cmd_split_prob)

    report = sub.add_parser("report", help="merge result CSVs of a directory")
    report.add_argument("directory")
    report.set_defaults(handler=cmd_report)

    fetch = sub.add_parser("fetch", help="download an external code's alist files")
    fetch.add_argument("name")
    fetch.add_argument("--hx-file")
    fetch.add_argument("--hz-file")
    fetch.add_argument("--base-url")
    fetch.add_argument("--codes-dir", type=Path)
    fetch.set_defaults(handler=cmd_fetch)

    info = sub.add_parser("code-report", help="parameters and weight distributions of a code")
    info.add_argument("code")
    info.set_defaults(handler=cmd_code_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level, args.log_json)
    try:
        return args.handler(args)
    except (DecoderSimError, ValidationError, json.JSONDecodeError) as exc:
        logger.error("bad configuration: %s", exc)
        return EXIT_CONFIG
    except (OSError, httpx.HTTPError) as exc:
        logger.error("I/O error: %s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
