"""Command-line pipeline: render, generate, tag, sample, assess, eval, and
the chained pipeline command.

Each stage writes one immutable artifact named ``<stage>-<digest>.<ext>``
under the output directory (digest of the file content) plus a
``manifest.json`` index, and reads only prior-stage artifacts through that
manifest. Re-running a stage over unchanged inputs reproduces its artifact
byte for byte. Exit codes: 0 success, 1 data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path
from typing import Any

from . import assess as assess_mod
from . import procgen, tagnorm, tagparse
from .config import PipelineConfig, load_config
from .errors import ProcTagError
from .ingest import (Dataset, IoFailure, dumps_json, load_dataset,
                     load_pages_dir, record_to_dict)
from .layout import associate, clean_inputs
from .metrics import Prediction, ConfusionMatrix, anls, kappa_report
from .render import (PLAINTEXT, SPATIAL, STYLES,
                     DocumentRepresentation, render_doclayprompt,
                     render_plaintext, render_spatial)

MANIFEST = "manifest.json"


# ---------------------------------------------------------------------------
# stage artifact plumbing


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


def _write_stage(output_dir: Path, stage: str, content: str, ext: str) -> Path:
    output_dir.mkdir(parents=True, exist_ok=True)
    digest = hashlib.sha256(content.encode("utf-8")).hexdigest()[:12]
    name = f"{stage}-{digest}.{ext}"
    _atomic_write(output_dir / name, content)
    manifest_path = output_dir / MANIFEST
    manifest: dict[str, str] = {}
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    manifest[stage] = name
    _atomic_write(manifest_path, dumps_json(manifest) + "\n")
    return output_dir / name


def _read_stage(output_dir: Path, stage: str) -> Path:
    manifest_path = output_dir / MANIFEST
    if not manifest_path.exists():
        raise IoFailure(f"no manifest in {output_dir}; run earlier stages first")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if stage not in manifest:
        raise IoFailure(f"stage {stage!r} not in {manifest_path}; run it first")
    path = output_dir / manifest[stage]
    if not path.exists():
        raise IoFailure(f"stage artifact {path} is missing")
    return path


def _read_jsonl(path: Path) -> list[dict[str, Any]]:
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines()
            if line.strip()]


def _records_jsonl(records: list[dict[str, Any]]) -> str:
    return "".join(dumps_json(r) + "\n" for r in records)


# ---------------------------------------------------------------------------
# config / flag plumbing


def _effective_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else PipelineConfig()
    overrides = {
        "dataset": ("paths", "dataset"),
        "pages": ("paths", "pages"),
        "out": ("paths", "output_dir"),
        "cache_dir": ("paths", "gen_cache_dir"),
        "embed_cache_dir": ("paths", "embed_cache_dir"),
        "nms_iou_threshold": ("layout", "nms_iou_threshold"),
        "row_tolerance_factor": ("layout", "row_tolerance_factor"),
        "style": ("render", "style"),
        "max_chars": ("render", "max_chars"),
        "backend": ("generation", "backend"),
        "max_inflight": ("generation", "max_inflight"),
        "temperature": ("generation", "temperature"),
        "min_count": ("tagging", "min_count"),
        "dbscan_eps": ("tagging", "dbscan_eps"),
        "dbscan_min_pts": ("tagging", "dbscan_min_pts"),
        "min_support": ("tagging", "min_support"),
        "min_confidence": ("tagging", "min_confidence"),
        "embedder": ("tagging", "embedder"),
        "mode": ("sampling", "mode"),
        "budget": ("sampling", "budget"),
        "ratio": ("sampling", "ratio"),
        "coverage": ("sampling", "coverage"),
        "seed": ("sampling", "seed"),
    }
    for flag, (section, key) in overrides.items():
        value = getattr(args, flag, None)
        if value is not None:
            setattr(getattr(cfg, section), key, value)
    return cfg


def _load_dataset(cfg: PipelineConfig) -> Dataset:
    return load_dataset(cfg.paths.dataset, cfg.paths.pages)


def _render_page(page, cfg: PipelineConfig) -> DocumentRepresentation:
    style = cfg.render.style
    if style not in STYLES:
        raise ProcTagError(f"unknown render style {style!r}")
    kwargs = {"max_chars": cfg.render.max_chars,
              "row_tolerance_factor": cfg.layout.row_tolerance_factor}
    if style == PLAINTEXT:
        return render_plaintext(page, **kwargs)
    if style == SPATIAL:
        return render_spatial(page, **kwargs)
    cleaned = clean_inputs(page, nms_iou_threshold=cfg.layout.nms_iou_threshold,
                           row_tolerance_factor=cfg.layout.row_tolerance_factor)
    return render_doclayprompt(associate(cleaned), page, **kwargs)


def _make_backend(cfg: PipelineConfig) -> procgen.GenerationBackend:
    kind = cfg.generation.backend
    if kind == "mock":
        return procgen.MockBackend()
    if kind == "cache":
        return procgen.CachingBackend(cfg.paths.gen_cache_dir, inner=None)
    if kind == "remote":
        remote = procgen.RemoteBackend(model=cfg.generation.model)
        return procgen.CachingBackend(cfg.paths.gen_cache_dir, inner=remote)
    raise ProcTagError(f"unknown generation backend {kind!r}")


def _make_embedder(cfg: PipelineConfig) -> tagnorm.EmbeddingProvider:
    kind = cfg.tagging.embedder
    if kind == "hashing":
        return tagnorm.HashingEmbedder()
    if kind == "cache":
        return tagnorm.CachingEmbedder(cfg.paths.embed_cache_dir, inner=None)
    if kind == "remote":
        return tagnorm.CachingEmbedder(cfg.paths.embed_cache_dir,
                                       inner=tagnorm.RemoteEmbedder())
    raise ProcTagError(f"unknown embedder {kind!r}")


# ---------------------------------------------------------------------------
# subcommands


def cmd_render(args: argparse.Namespace) -> int:
    cfg = _effective_config(args)
    if args.in_dir:
        # standalone mode: one representation file per page file
        pages = load_pages_dir(args.in_dir)
        out_dir = Path(args.out if args.out else "reps")
        out_dir.mkdir(parents=True, exist_ok=True)
        for page_id, page in pages.items():
            rep = _render_page(page, cfg)
            _atomic_write(out_dir / f"{page_id}.json", dumps_json(rep.to_dict()) + "\n")
        print(f"rendered {len(pages)} pages to {out_dir}")
        return 0
    dataset = _load_dataset(cfg)
    lines = "".join(dumps_json(_render_page(page, cfg).to_dict()) + "\n"
                    for page in dataset.pages.values())
    path = _write_stage(Path(cfg.paths.output_dir), "render", lines, "jsonl")
    print(f"rendered {len(dataset.pages)} pages -> {path}")
    return 0


def cmd_generate(args: argparse.Namespace) -> int:
    cfg = _effective_config(args)
    dataset = _load_dataset(cfg)
    out_dir = Path(cfg.paths.output_dir)
    reps = {obj["page_id"]: DocumentRepresentation.from_dict(obj)
            for obj in _read_jsonl(_read_stage(out_dir, "render"))}
    backend = _make_backend(cfg)
    ledger = procgen.GenerationLedger()
    params = procgen.DecodeParams(temperature=cfg.generation.temperature)
    results = procgen.generate_all(dataset.records, reps, backend, ledger,
                                   params=params, max_inflight=cfg.generation.max_inflight)
    out_records: list[dict[str, Any]] = []
    for rec, result in zip(dataset.records, results):
        ann = dict(rec.annotations)
        rep = reps[rec.page_id]
        ann["representation"] = {
            "style": rep.style,
            "digest": hashlib.sha256(rep.text.encode("utf-8")).hexdigest()[:16],
            "token_count": rep.token_count,
        }
        if isinstance(result, procgen.Discarded):
            ann["discarded"] = {"reason": result.reason, "attempts": result.attempts,
                                "last_completion": result.last_completion}
            ann.pop("process", None)
        else:
            ann["process"] = result.to_dict()
            ann.pop("discarded", None)
        obj = record_to_dict(rec)
        obj["annotations"] = ann
        out_records.append(obj)
    path = _write_stage(out_dir, "generate", _records_jsonl(out_records), "jsonl")
    _write_stage(out_dir, "ledger", dumps_json(ledger.to_dict()) + "\n", "json")
    rate = procgen.discard_rate(ledger) if ledger.total else 0.0
    print(f"generated {ledger.succeeded}/{ledger.total} processes "
          f"(discard rate {rate:.4f}) -> {path}")
    return 0


def _extract_tags(records: list[dict[str, Any]]) -> list[dict[str, Any]]:
    out = []
    for obj in records:
        ann = dict(obj.get("annotations", {}))
        record_id = obj["record_id"]
        steps = None
        completion = None
        if "process" in ann:
            steps = [tagparse.ProcessStep(index=s["index"], output_var=s["output_var"],
                                          function_name=s["function_name"],
                                          args=list(s["args"]))
                     for s in ann["process"]["steps"]]
        elif "discarded" in ann:
            completion = ann["discarded"].get("last_completion")
        try:
            seq = tagparse.extract_function_names(record_id, steps=steps,
                                                  completion=completion)
            ann["tags"] = {"raw": seq.tags, "source": seq.source}
        except tagparse.NoTags:
            ann["tags"] = {"raw": [], "source": "none"}
        obj = dict(obj)
        obj["annotations"] = ann
        out.append(obj)
    return out


def _normalize_tags(records: list[dict[str, Any]], cfg: PipelineConfig,
                    ) -> tuple[list[dict[str, Any]], dict[str, Any]]:
    profiles = [tagnorm.TagProfile(record_id=obj["record_id"],
                                   tags=list(obj["annotations"]["tags"]["raw"]),
                                   source=obj["annotations"]["tags"]["source"])
                for obj in records]
    result = tagnorm.normalize_corpus(
        profiles, _make_embedder(cfg),
        min_count=cfg.tagging.min_count,
        dbscan_eps=cfg.tagging.dbscan_eps,
        dbscan_min_pts=cfg.tagging.dbscan_min_pts,
        min_support=cfg.tagging.min_support,
        min_confidence=cfg.tagging.min_confidence)
    out = []
    for i, obj in enumerate(records):
        ann = dict(obj.get("annotations", {}))
        tags_ann = dict(ann["tags"])
        for stage in ("filtered", "clustered", "aggregated"):
            tags_ann[stage] = result.stage_profiles[stage][i].tags
        tags_ann["emptied_by_filter"] = result.stage_profiles["filtered"][i].emptied_by_filter
        ann["tags"] = tags_ann
        obj = dict(obj)
        obj["annotations"] = ann
        out.append(obj)
    vocab_report = {
        "stages": {stage: dict(sorted(v.entries.items()))
                   for stage, v in result.vocabularies.items()},
        "clusters": {str(cid): {"representative": result.assignment.representatives[cid],
                                "members": members}
                     for cid, members in result.assignment.members().items()},
        "merges": result.merges,
    }
    return out, vocab_report


def cmd_tag(args: argparse.Namespace) -> int:
    cfg = _effective_config(args)
    out_dir = Path(cfg.paths.output_dir)
    stage = args.stage
    if stage in ("extract", "all"):
        records = _read_jsonl(_read_stage(out_dir, "generate"))
        tagged = _extract_tags(records)
        path = _write_stage(out_dir, "tags_raw", _records_jsonl(tagged), "jsonl")
        print(f"extracted raw tags for {len(tagged)} records -> {path}")
    if stage in ("normalize", "all"):
        records = _read_jsonl(_read_stage(out_dir, "tags_raw"))
        tagged, vocab_report = _normalize_tags(records, cfg)
        path = _write_stage(out_dir, "tags", _records_jsonl(tagged), "jsonl")
        _write_stage(out_dir, "vocab", dumps_json(vocab_report) + "\n", "json")
        n_merges = len(vocab_report["merges"])
        print(f"normalized tags for {len(tagged)} records "
              f"({n_merges} merges) -> {path}")
    return 0


def _profiles_from_tags_artifact(out_dir: Path) -> list[tagnorm.TagProfile]:
    records = _read_jsonl(_read_stage(out_dir, "tags"))
    profiles = []
    for obj in records:
        tags_ann = obj.get("annotations", {}).get("tags", {})
        profiles.append(tagnorm.TagProfile(
            record_id=obj["record_id"],
            tags=list(tags_ann.get("aggregated") or []),
            stage="aggregated",
            source=tags_ann.get("source", "none"),
            emptied_by_filter=bool(tags_ann.get("emptied_by_filter", False))))
    return profiles


def cmd_sample(args: argparse.Namespace) -> int:
    cfg = _effective_config(args)
    out_dir = Path(cfg.paths.output_dir)
    profiles = _profiles_from_tags_artifact(out_dir)
    mode = cfg.sampling.mode
    if mode == "random":
        if cfg.sampling.ratio is None:
            raise ProcTagError("random sampling requires a ratio")
        selected = assess_mod.random_sample(profiles, cfg.sampling.ratio,
                                            cfg.sampling.seed)
    else:
        spec = assess_mod.SampleSpec(mode=mode, budget=cfg.sampling.budget,
                                     ratio=cfg.sampling.ratio,
                                     coverage_target=cfg.sampling.coverage,
                                     seed=cfg.sampling.seed)
        selected = assess_mod.sample(profiles, spec)
    chosen = set(selected)
    subset = [p for p in profiles if p.record_id in chosen]
    report = {
        "mode": mode,
        "selected": selected,
        "count": len(selected),
        "assessment": assess_mod.assess_dataset(subset).to_dict() if subset else None,
        "coverage": (assess_mod.tag_coverage(subset, profiles)
                     if subset and assess_mod.complexity(profiles) else None),
    }
    path = _write_stage(out_dir, "sample", dumps_json(report) + "\n", "json")
    print(f"selected {len(selected)}/{len(profiles)} records -> {path}")
    return 0


def cmd_assess(args: argparse.Namespace) -> int:
    cfg = _effective_config(args)
    out_dir = Path(cfg.paths.output_dir)
    profiles = _profiles_from_tags_artifact(out_dir)
    report = assess_mod.assess_dataset(profiles).to_dict()
    _write_stage(out_dir, "assess", dumps_json(report) + "\n", "json")
    print(dumps_json(report))
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    if args.metric == "anls":
        preds_by_id = {obj["record_id"]: obj["predicted"]
                       for obj in _read_jsonl(Path(args.pred))}
        predictions = []
        for obj in _read_jsonl(Path(args.gold)):
            rid = obj["record_id"]
            if rid not in preds_by_id:
                raise ProcTagError(f"no prediction for record {rid!r}")
            golds = obj.get("answers") or obj.get("golds") or []
            predictions.append(Prediction(record_id=rid, predicted=preds_by_id[rid],
                                          golds=list(golds)))
        score = anls(predictions, tau=args.tau)
        print(dumps_json({"anls": score, "count": len(predictions), "tau": args.tau}))
        return 0
    matrix = json.loads(Path(args.matrix).read_text(encoding="utf-8"))
    report = kappa_report(ConfusionMatrix(counts=matrix))
    print(dumps_json(report))
    return 0


def cmd_pipeline(args: argparse.Namespace) -> int:
    for fn in (cmd_render, cmd_generate, cmd_tag, cmd_sample):
        if fn is cmd_tag:
            args.stage = "all"
        code = fn(args)
        if code != 0:
            return code
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML config file")
    p.add_argument("--dataset", help="record file (JSONL)")
    p.add_argument("--pages", help="pages directory")
    p.add_argument("--out", help="output directory for stage artifacts")


def _add_render_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--style", choices=STYLES)
    p.add_argument("--max-chars", type=int, dest="max_chars")
    p.add_argument("--nms-iou-threshold", type=float, dest="nms_iou_threshold")
    p.add_argument("--row-tolerance-factor", type=float, dest="row_tolerance_factor")


def _add_generate_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--backend", choices=("mock", "cache", "remote"))
    p.add_argument("--max-inflight", type=int, dest="max_inflight")
    p.add_argument("--cache-dir", dest="cache_dir")
    p.add_argument("--temperature", type=float)


def _add_tag_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--min-count", type=int, dest="min_count")
    p.add_argument("--dbscan-eps", type=float, dest="dbscan_eps")
    p.add_argument("--dbscan-min-pts", type=int, dest="dbscan_min_pts")
    p.add_argument("--min-support", type=int, dest="min_support")
    p.add_argument("--min-confidence", type=float, dest="min_confidence")
    p.add_argument("--embedder", choices=("hashing", "cache", "remote"))
    p.add_argument("--embed-cache-dir", dest="embed_cache_dir")


def _add_sample_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=("budget", "ratio", "coverage", "random"))
    p.add_argument("--budget", type=int)
    p.add_argument("--ratio", type=float)
    p.add_argument("--coverage", type=float)
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="proctag",
        description="Layout-aware document prompting and execution-process "
                    "tagging for instruction data curation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="render page representations")
    _add_common(p)
    _add_render_flags(p)
    p.add_argument("--in", dest="in_dir", help="pages directory (standalone mode)")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("generate", help="generate execution processes")
    _add_common(p)
    _add_generate_flags(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("tag", help="extract and normalize process tags")
    _add_common(p)
    _add_tag_flags(p)
    p.add_argument("--stage", choices=("extract", "normalize", "all"), default="all")
    p.set_defaults(func=cmd_tag)

    p = sub.add_parser("sample", help="select a subset by tag coverage")
    _add_common(p)
    _add_sample_flags(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("assess", help="report complexity and diversity")
    _add_common(p)
    p.set_defaults(func=cmd_assess)

    p = sub.add_parser("eval", help="score answers or rater agreement")
    ev = p.add_subparsers(dest="metric", required=True)
    pa = ev.add_parser("anls", help="average normalized Levenshtein similarity")
    pa.add_argument("--pred", required=True, help="JSONL of {record_id, predicted}")
    pa.add_argument("--gold", required=True, help="JSONL of {record_id, answers[]}")
    pa.add_argument("--tau", type=float, default=0.5)
    pa.set_defaults(func=cmd_eval)
    pk = ev.add_parser("kappa", help="chance-corrected agreement")
    pk.add_argument("--matrix", required=True, help="JSON file with a square count matrix")
    pk.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", help="run render -> generate -> tag -> sample")
    _add_common(p)
    _add_render_flags(p)
    _add_generate_flags(p)
    _add_tag_flags(p)
    _add_sample_flags(p)
    p.set_defaults(func=cmd_pipeline, in_dir=None)

    return parser


def run(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return args.func(args)
    except (ProcTagError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
