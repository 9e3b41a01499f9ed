"""``ngl`` command line: schema, run, compile, pattern, eval."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .compiler import CompileError, compile_document, load_mapping
from .evalkit import evaluate_dirs
from .patterngen import (
    BodyMeasurements, PatternDocument, PatternError, check_pattern, generate_pattern,
    merge_patterns, render_svg,
)
from .pipeline import (
    HttpBackendConfig, HttpChatBackend, InteractiveBackend, ManifestEntry, OracleBackend,
    OutfitResult, failure_rate, load_labels, load_manifest, process_outfit, write_outputs,
)
from .planner import FailureRecord
from .schema import NGLDocument, SchemaError, load_schema, validate_document
from .serialize import canonical_json


@dataclass(frozen=True)
class CliConfig:
    schema: str | None = None
    lod: int = 1
    mapping: str | None = None
    backend: str = "oracle"
    endpoint: str | None = None
    model: str | None = None
    body: str | None = None
    out: str | None = None
    jobs: int = 1

    def __post_init__(self):
        if self.lod not in (0, 1):
            raise ValueError(f"lod must be 0 or 1, got {self.lod}")
        if self.jobs < 1:
            raise ValueError(f"jobs must be >= 1, got {self.jobs}")

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "CliConfig":
        return cls(**{k: getattr(args, k) for k in cls.__dataclass_fields__ if hasattr(args, k)})

    def load_schema(self):
        return load_schema(self.schema, lod=self.lod)

    def load_body(self) -> BodyMeasurements:
        return BodyMeasurements.load(self.body) if self.body else BodyMeasurements()


def _read_json(path: str):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _emit(text: str, out: str | None, name: str) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    target = Path(out)
    if target.suffix == "":
        target.mkdir(parents=True, exist_ok=True)
        target = target / name
    else:
        target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(text, encoding="utf-8")


def _documents(data) -> list[NGLDocument]:
    return [NGLDocument.from_json(d) for d in (data if isinstance(data, list) else [data])]


def cmd_schema(args, cfg: CliConfig) -> int:
    schema = cfg.load_schema()
    if args.action == "dump":
        _emit(canonical_json(schema.to_json()), cfg.out, "schema.json")
        return 0
    status = 0
    for path in args.paths:
        for doc in _documents(_read_json(path)):
            report = validate_document(schema, doc, partial=args.partial)
            print(f"{path} [layer {doc.layer_index}]: {'ok' if report.ok else 'INVALID'}")
            for issue in report.issues:
                print(f"  {issue.kind}: {issue.attribute_id}: {issue.message}")
            status |= 0 if report.ok else 1
    return status


def _make_backend(cfg: CliConfig, entry: ManifestEntry):
    if cfg.backend == "oracle":
        if entry.label is None:
            return None
        return OracleBackend(load_labels(entry.label))
    if cfg.backend == "interactive":
        return InteractiveBackend()
    return HttpChatBackend(HttpBackendConfig.from_env(cfg.endpoint, cfg.model))


def cmd_run(args, cfg: CliConfig) -> int:
    schema = cfg.load_schema()
    table = load_mapping(cfg.mapping)
    body = cfg.load_body()
    entries = load_manifest(args.manifest)
    out_root = Path(cfg.out or "ngl-out")
    # the terminal cannot be shared between concurrent sessions
    jobs = 1 if cfg.backend == "interactive" else cfg.jobs
    http_backend = None
    if cfg.backend == "http":
        config = HttpBackendConfig.from_env(cfg.endpoint, cfg.model, max_in_flight=max(1, jobs))
        http_backend = HttpChatBackend(config)

    def one(entry: ManifestEntry) -> OutfitResult:
        backend = http_backend or _make_backend(cfg, entry)
        if backend is None:
            result = OutfitResult(failures=[FailureRecord("layer-id", "invalid-answer", None,
                                                          "oracle backend needs a label file")])
        else:
            try:
                result = process_outfit(backend, entry.media, schema, table, body)
            except (OSError, ValueError) as exc:
                result = OutfitResult(failures=[FailureRecord("layer-id", "transport-error", None, str(exc))])
        write_outputs(result, out_root / entry.id)
        return result

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        results = list(pool.map(one, entries))
    for entry, result in zip(entries, results):
        state = "ok" if result.ok else "; ".join(
            f"{f.stage}/{f.reason}" + ("" if f.layer_index is None else f"@{f.layer_index}")
            for f in result.failures)
        print(f"{entry.id}: {len(result.layers)} layer(s) {state}")
    if results:
        rate = failure_rate(results)
        print(f"failure rate: {sum(1 for r in results if r.failures)}/{len(results)} = {rate:.2%}")
    return 0 if all(r.ok for r in results) else 1


def cmd_compile(args, cfg: CliConfig) -> int:
    schema = cfg.load_schema()
    table = load_mapping(cfg.mapping)
    docs = _documents(_read_json(args.document))
    compiled = []
    for doc in docs:
        report = validate_document(schema, doc)
        if not report.ok:
            for issue in report.issues:
                print(f"{issue.kind}: {issue.attribute_id}: {issue.message}", file=sys.stderr)
            return 1
        compiled.append(compile_document(doc, schema, table))
    payload = compiled if isinstance(_read_json(args.document), list) else compiled[0]
    _emit(canonical_json(payload), cfg.out, "garmentcode.json")
    return 0


def cmd_pattern(args, cfg: CliConfig) -> int:
    data = _read_json(args.params)
    params_list = data if isinstance(data, list) else [data]
    body = cfg.load_body()
    patterns: list[PatternDocument] = []
    status = 0
    for i, params in enumerate(params_list):
        try:
            pattern = generate_pattern(params, body)
        except PatternError as exc:
            print(f"layer {i}: {exc}", file=sys.stderr)
            return 1
        for v in check_pattern(pattern):
            print(f"layer {i}: {v.kind} at {v.where}: {v.message}", file=sys.stderr)
            status = 1
        patterns.append(pattern)
    merged = patterns[0] if len(patterns) == 1 else merge_patterns(
        patterns, [f"layer{i}/" for i in range(len(patterns))])
    payload = [p.to_json() for p in patterns] if isinstance(data, list) else patterns[0].to_json()
    if cfg.out is None:
        sys.stdout.write(canonical_json(payload))
    else:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "pattern.json").write_text(canonical_json(payload), encoding="utf-8")
        (out / "pattern.svg").write_text(render_svg(merged), encoding="utf-8")
    return status


def cmd_eval(args, cfg: CliConfig) -> int:
    # reporting needs both LOD groups, so the LOD-1 schema is always used here
    schema = load_schema(cfg.schema, lod=1)
    report = evaluate_dirs(args.labels, args.predictions, schema)
    sys.stdout.write(report.to_text())
    if cfg.out:
        _emit(canonical_json(report.to_json()), cfg.out, "report.json")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--schema", help="schema JSON file (default: bundled schema)")
    common.add_argument("--lod", type=int, choices=(0, 1), default=1, help="level of detail")
    common.add_argument("--mapping", help="mapping table JSON (default: bundled table)")
    common.add_argument("--body", help="body measurements JSON (cm)")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--jobs", type=int, default=1, help="parallel inputs")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="ngl", description="Natural Garment Language toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("schema", help="dump the schema or validate documents")
    actions = p.add_subparsers(dest="action", required=True)
    a = actions.add_parser("dump", parents=[common], help="print the loaded schema")
    a.set_defaults(func=cmd_schema, paths=[], partial=False)
    a = actions.add_parser("validate", parents=[common], help="validate NGL documents")
    a.add_argument("paths", nargs="+")
    a.add_argument("--partial", action="store_true", help="allow partially labeled documents")
    a.set_defaults(func=cmd_schema)

    p = sub.add_parser("run", parents=[common], help="process a batch manifest end to end")
    p.add_argument("manifest")
    p.add_argument("--backend", choices=("http", "oracle", "interactive"), default="oracle")
    p.add_argument("--endpoint", help="chat-completions base URL")
    p.add_argument("--model", help="model name sent to the endpoint")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compile", parents=[common], help="NGL document -> GarmentCode parameters")
    p.add_argument("document")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("pattern", parents=[common], help="GarmentCode parameters -> sewing pattern")
    p.add_argument("params")
    p.set_defaults(func=cmd_pattern)

    p = sub.add_parser("eval", parents=[common], help="F1 report for predictions against labels")
    p.add_argument("labels", help="directory of <id>.json label documents")
    p.add_argument("predictions", help="directory of <id>.json predictions")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = CliConfig.from_args(args)
        return args.func(args, cfg)
    except (SchemaError, CompileError, PatternError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
