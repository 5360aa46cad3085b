"""Command-line interface.

Subcommands: curate, plan-tiles, tokens, eval, stats. Validation failures
exit 1, io/transport failures exit 2, and every failure prints a single
JSON line on stderr. All file outputs are written atomically and embed the
resolved configuration that produced them.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import geometry, metrics
from .config import (
    fusion_config,
    generator_client,
    resolve_config,
    tiler_config,
)
from .errors import (
    AllPixelsInvalid,
    EarthdialError,
    MismatchedIds,
    ParseError,
    exit_code_for,
)
from .fusion import group_channels, token_budget
from .instruct import (
    assemble_stage_manifest,
    curate_records,
    filter_image,
    read_records,
    read_samples,
    write_records,
)
from .jsonio import atomic_write_text, read_jsonl
from .raster import load_raster
from .tiler import plan_for_size

STATS_SCHEMA = "earthdial-stats/1"


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, ensure_ascii=False, indent=2) + "\n"
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        atomic_write_text(out, text)


def _overrides(pairs: dict) -> dict:
    return {dotted: value for dotted, value in pairs.items() if value is not None}


# --- curate -------------------------------------------------------------------

def _image_gate(images_root: str, cfg: dict):
    root = Path(images_root)
    lum_max = cfg["filters"]["lum_max"]
    cov_min = cfg["filters"]["cov_min"]

    def check(sample) -> bool:
        raster = load_raster(root / sample.image_refs[0])
        try:
            return filter_image(raster, lum_max=lum_max, cov_min=cov_min)
        except AllPixelsInvalid:
            return False

    return check


def _cmd_curate(args) -> int:
    cfg = resolve_config(
        args.config,
        overrides=_overrides(
            {
                "filters.min_labels": args.min_labels,
                "filters.lum_max": args.lum_max,
                "filters.cov_min": args.cov_min,
                "generator.url": args.generator_url,
                "generator.model": args.model,
                "generator.max_attempts": args.max_attempts,
            }
        ),
    )
    samples = read_samples(args.samples)
    client = generator_client(cfg)
    image_check = _image_gate(args.images_root, cfg) if args.images_root else None
    records, skipped = curate_records(
        samples,
        client=client,
        min_labels=int(cfg["filters"]["min_labels"]),
        max_attempts=int(cfg["generator"]["max_attempts"]),
        seed=args.seed,
        image_check=image_check,
    )
    write_records(args.out, records)
    manifest = assemble_stage_manifest(records).to_dict()
    manifest["skipped"] = skipped
    manifest["seed"] = args.seed
    manifest["config"] = cfg
    _emit(manifest, args.manifest)
    print(
        json.dumps(
            {"records": len(records), "skipped": len(skipped), "out": str(args.out)}
        )
    )
    return 0


# --- plan-tiles / tokens --------------------------------------------------------

def _tiler_overrides(args) -> dict:
    return {
        "tiler.tile_size": args.tile_size,
        "tiler.min_tiles": args.min_tiles,
        "tiler.max_tiles": args.max_tiles,
        "tiler.use_thumbnail": args.thumbnail,
    }


def _cmd_plan_tiles(args) -> int:
    cfg = resolve_config(args.config, overrides=_overrides(_tiler_overrides(args)))
    plan = plan_for_size(args.width, args.height, tiler_config(cfg))
    _emit({"config": cfg["tiler"], "plan": plan.to_dict()}, args.out)
    return 0


def _cmd_tokens(args) -> int:
    cfg = resolve_config(
        args.config,
        overrides=_overrides(
            {
                **_tiler_overrides(args),
                "fusion.reduce_strategy": args.reduce_strategy,
                "fusion.reduced_rows": args.reduced_rows,
                "fusion.reduced_cols": args.reduced_cols,
                "fusion.aggregate": args.aggregate,
                "fusion.tokens_per_tile": args.tokens_per_tile,
                "fusion.max_timesteps": args.max_timesteps,
            }
        ),
    )
    fus = fusion_config(cfg)
    plan = plan_for_size(args.width, args.height, tiler_config(cfg))
    budget = token_budget(plan, args.bands, args.timesteps, fus)
    if args.bands <= 3:
        tiles, groups = plan.n_tiles, 1
    else:
        tiles = 1
        groups = len(group_channels(args.bands)) if fus.aggregate == "concat" else 1
    per_step = budget // args.timesteps
    payload = {
        "config": {"tiler": cfg["tiler"], "fusion": cfg["fusion"]},
        "plan": plan.to_dict(),
        "bands": args.bands,
        "timesteps": args.timesteps,
        "token_budget": budget,
        "per_timestep": [
            {"time_index": t, "tokens": per_step, "tiles": tiles, "groups": groups}
            for t in range(args.timesteps)
        ],
    }
    _emit(payload, args.out)
    return 0


# --- eval ----------------------------------------------------------------------

def _read_keyed(path: str, fields: tuple[str, ...]) -> dict[str, dict]:
    rows: dict[str, dict] = {}
    for line, obj in read_jsonl(path):
        if "image_id" not in obj:
            raise ParseError(line, "missing image_id")
        image_id = str(obj["image_id"])
        if image_id in rows:
            raise ParseError(line, f"duplicate image_id {image_id!r}")
        if not any(f in obj for f in fields):
            raise ParseError(line, f"need one of {list(fields)}")
        rows[image_id] = obj
    if not rows:
        raise ParseError(0, f"{path} contains no rows")
    return rows


def _aligned_ids(preds: dict, golds: dict) -> list[str]:
    if set(preds) != set(golds):
        missing = sorted(set(preds) ^ set(golds))
        raise MismatchedIds(f"prediction/gold ids differ on {missing[:5]}")
    return sorted(golds)


def _boxes_from_row(obj: dict, line: int = 0) -> list[geometry.RotatedBox]:
    if "boxes" in obj:
        try:
            return [geometry.RotatedBox(*([float(v) for v in b] + [0.0])[:5]) if len(b) == 4
                    else geometry.RotatedBox(*[float(v) for v in b]) for b in obj["boxes"]]
        except (TypeError, ValueError) as exc:
            raise ParseError(line, f"bad box row: {exc}") from exc
    return geometry.parse_boxes(str(obj.get("text", "")))


def _cmd_eval(args) -> int:
    cfg = resolve_config(
        args.config,
        overrides=_overrides(
            {
                "metrics.iou_threshold": args.iou_threshold,
                "metrics.unknown_label": args.unknown,
            }
        ),
    )
    task = args.task
    echo = {"pred": str(args.pred), "gold": str(args.gold), "metrics": cfg["metrics"]}
    if task == "caption":
        preds = _read_keyed(args.pred, ("text",))
        golds = _read_keyed(args.gold, ("text",))
        ids = _aligned_ids(preds, golds)
        pairs = [(str(preds[i].get("text", "")), str(golds[i].get("text", ""))) for i in ids]
        scores = {
            "rouge_1": sum(metrics.rouge_n(c, r, 1) for c, r in pairs) / len(pairs),
            "rouge_l": sum(metrics.rouge_l(c, r) for c, r in pairs) / len(pairs),
            "meteor": sum(metrics.meteor(c, r) for c, r in pairs) / len(pairs),
        }
    elif task == "classification":
        preds = _read_keyed(args.pred, ("label",))
        golds = _read_keyed(args.gold, ("label",))
        ids = _aligned_ids(preds, golds)
        classes = (
            [c.strip() for c in args.classes.split(",") if c.strip()]
            if args.classes
            else sorted({str(golds[i]["label"]).strip().lower() for i in ids})
        )
        echo["classes"] = classes
        scores = metrics.classification_scores(
            [str(preds[i].get("label", "")) for i in ids],
            [str(golds[i]["label"]) for i in ids],
            classes,
            unknown=str(cfg["metrics"]["unknown_label"]),
        )
    elif task == "detection":
        pred_rows = _read_keyed(args.pred, ("boxes", "text"))
        gold_rows = _read_keyed(args.gold, ("boxes", "text"))
        ids = _aligned_ids(pred_rows, gold_rows)
        result = metrics.detection_scores(
            {i: _boxes_from_row(pred_rows[i]) for i in ids},
            {i: _boxes_from_row(gold_rows[i]) for i in ids},
            iou_threshold=float(cfg["metrics"]["iou_threshold"]),
        )
        scores = result.to_dict()
    elif task == "multilabel":
        preds = _read_keyed(args.pred, ("labels",))
        golds = _read_keyed(args.gold, ("labels",))
        ids = _aligned_ids(preds, golds)
        scores = metrics.multilabel_scores(
            [list(preds[i].get("labels", [])) for i in ids],
            [list(golds[i].get("labels", [])) for i in ids],
        )
    else:  # pragma: no cover - argparse restricts choices
        raise ValueError(task)
    report = metrics.EvalReport(
        task=task, sample_count=len(ids), scores=scores, config=echo
    )
    _emit(report.to_dict(), args.out)
    return 0


# --- stats ---------------------------------------------------------------------

def _cmd_stats(args) -> int:
    records = read_records(args.records)
    if not records:
        raise ParseError(0, f"{args.records} contains no records")
    by_task: dict[str, int] = {}
    turn_total = 0
    for r in records:
        by_task[r.task_kind] = by_task.get(r.task_kind, 0) + 1
        turn_total += len(r.turns)
    manifest = assemble_stage_manifest(records)
    payload = {
        "schema": STATS_SCHEMA,
        "total": len(records),
        "rows": manifest.to_dict()["rows"],
        "by_task": dict(sorted(by_task.items())),
        "mean_turns": turn_total / len(records),
    }
    _emit(payload, args.out)
    return 0


# --- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="earthdial",
        description="Geospatial instruction-dataset forge and evaluation toolkit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    cur = sub.add_parser("curate", help="filter samples and emit instruction records")
    cur.add_argument("--samples", required=True, help="input samples JSONL")
    cur.add_argument("--out", required=True, help="output records JSONL")
    cur.add_argument("--manifest", default="-", help="manifest JSON path (default stdout)")
    cur.add_argument("--images-root", help="enable image filtering against this directory")
    cur.add_argument("--generator-url", help="generator endpoint (default offline templates)")
    cur.add_argument("--model", help="generator model name")
    cur.add_argument("--seed", type=int, default=0, help="subject-selection seed")
    cur.add_argument("--min-labels", type=int)
    cur.add_argument("--lum-max", type=float)
    cur.add_argument("--cov-min", type=float)
    cur.add_argument("--max-attempts", type=int)
    cur.set_defaults(func=_cmd_curate)

    def add_tiler_flags(p) -> None:
        p.add_argument("--tile-size", type=int)
        p.add_argument("--min-tiles", type=int)
        p.add_argument("--max-tiles", type=int)
        thumb = p.add_mutually_exclusive_group()
        thumb.add_argument("--thumbnail", dest="thumbnail", action="store_true", default=None)
        thumb.add_argument("--no-thumbnail", dest="thumbnail", action="store_false")

    plan = sub.add_parser("plan-tiles", help="compute the tile grid for an image size")
    plan.add_argument("--width", type=int, required=True)
    plan.add_argument("--height", type=int, required=True)
    add_tiler_flags(plan)
    plan.add_argument("--out", default="-")
    plan.set_defaults(func=_cmd_plan_tiles)

    tok = sub.add_parser("tokens", help="report the token budget for an input shape")
    tok.add_argument("--width", type=int, required=True)
    tok.add_argument("--height", type=int, required=True)
    tok.add_argument("--bands", type=int, default=3)
    tok.add_argument("--timesteps", type=int, default=1)
    add_tiler_flags(tok)
    tok.add_argument("--reduce-strategy", choices=("bilinear", "average"))
    tok.add_argument("--reduced-rows", type=int)
    tok.add_argument("--reduced-cols", type=int)
    tok.add_argument("--aggregate", choices=("concat", "mean"))
    tok.add_argument("--tokens-per-tile", type=int)
    tok.add_argument("--max-timesteps", type=int)
    tok.add_argument("--out", default="-")
    tok.set_defaults(func=_cmd_tokens)

    ev = sub.add_parser("eval", help="score predictions against gold annotations")
    ev.add_argument("--task", required=True,
                    choices=("caption", "classification", "detection", "multilabel"))
    ev.add_argument("--pred", required=True, help="predictions JSONL")
    ev.add_argument("--gold", required=True, help="gold annotations JSONL")
    ev.add_argument("--out", default="-", help="report JSON path (default stdout)")
    ev.add_argument("--iou-threshold", type=float)
    ev.add_argument("--classes", help="comma-separated class list (default: gold labels)")
    ev.add_argument("--unknown", choices=("error", "wrong"),
                    help="policy for out-of-set predicted labels")
    ev.set_defaults(func=_cmd_eval)

    st = sub.add_parser("stats", help="summarize an emitted record file")
    st.add_argument("--records", required=True)
    st.add_argument("--out", default="-")
    st.set_defaults(func=_cmd_stats)

    for p in (cur, plan, tok, ev, st):
        p.add_argument("--config", help="TOML config file (default ./earthdial.toml)")
    return parser


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EarthdialError as exc:
        _print_error(exc)
        return exit_code_for(exc)
    except OSError as exc:
        _print_error(exc)
        return 2


def _print_error(exc: BaseException) -> None:
    line = json.dumps(
        {"error": type(exc).__name__, "exit": exit_code_for(exc), "message": str(exc)},
        ensure_ascii=False,
    )
    print(line, file=sys.stderr)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
