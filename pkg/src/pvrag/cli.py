"""Command-line entry point.

Subcommands cover the whole pipeline: manifest ingestion, index building,
retrieval inspection, assessment, evaluation, the three ablations, and the
feeder simulation. Every subcommand is deterministic given its flags
(including seeds): identical invocations write byte-identical files.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import evaluation
from .assess import AssessmentMode, assess
from .backends import AuditLog, MockBackend, RemoteBackend
from .dataset import (
    ManifestRecord,
    Split,
    build_reference_index,
    load_manifest,
    validate_split,
)
from .descriptors import (
    PVDescriptor,
    location_from_text,
    presence_from_text,
    quantity_from_text,
)
from .evaluation import ScoredRecord, aggregate, emit_report, score_record
from .network import parse_case
from .profiles import DayProfiles, TimeGrid
from .prompts import PromptTemplates
from .simulation import (
    ModelAccuracy,
    ScenarioConfig,
    compute_metrics,
    emit_simulation_report,
    generate_sites,
    load_sites,
    perturb_all_models,
    run_day_simulation,
)
from .vindex import load_embedding_file, normalize

logger = logging.getLogger(__name__)

DEFAULT_K_SWEEP = (0, 1, 3, 5, 10)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except BrokenPipeError:
        return 1
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pvrag",
        description="Rooftop PV assessment pipeline and feeder impact simulation",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("ingest", help="validate a manifest and report split counts")
    p.add_argument("--manifest", required=True)
    p.add_argument("--expected-eval", type=int, default=240)
    p.add_argument("--expected-reference", type=int, default=240)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("index", help="build and save a reference index")
    p.add_argument("--manifest", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--exclude-city")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("retrieve", help="show nearest references for one query")
    p.add_argument("--manifest", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--query-id", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--leave-out", help="exclude this city from the index")
    p.add_argument("--csv", help="also write the hit listing to this file")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("assess", help="assess evaluation records with a backend")
    p.add_argument("--manifest", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True, help="results file (JSON lines)")
    p.add_argument("--mode", choices=("plain", "rag", "random"), default="rag")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--backend", choices=("mock", "remote"), default="mock")
    p.add_argument("--city", help="restrict queries to this city")
    p.add_argument("--leave-out", help="exclude this city from the index")
    p.add_argument("--config", help="JSON config file mirroring backend flags")
    p.add_argument("--backend-url")
    p.add_argument("--api-key")
    p.add_argument("--model-name")
    p.add_argument("--temperature", type=float)
    p.add_argument("--audit-log", help="append raw request/response records here")
    p.set_defaults(func=cmd_assess)

    p = sub.add_parser("evaluate", help="score result files against the manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--results", action="append", required=True,
                   help="results file; repeat for multiple runs")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("csv", "markdown"), default="csv")
    p.add_argument("--average", choices=("micro", "macro"), default="micro")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="retrieval ablations with the mock backend")
    p.add_argument("--kind", required=True,
                   choices=("k-sweep", "random-vs-similar", "leave-one-out"))
    p.add_argument("--manifest", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--k-values", default=",".join(str(k) for k in DEFAULT_K_SWEEP),
                   help="comma-separated K list for k-sweep (0 means plain)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("simulate", help="feeder-level day simulation")
    p.add_argument("--case", required=True)
    p.add_argument("--sites", required=True,
                   help="site file, or synth:N:SEED for a generated population")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--alpha-load", type=float, default=1.3)
    p.add_argument("--penetration", type=float, default=0.6)
    p.add_argument("--under-bias", type=float, default=0.75)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model", action="append", default=[],
                   metavar="NAME=A_Q,A_L",
                   help="model accuracies, e.g. RAG=0.862,0.802 (repeatable)")
    p.add_argument("--profiles", help="directory with 96-value profile files")
    p.add_argument("--pf-tol", type=float, default=1e-8)
    p.add_argument("--pf-max-iter", type=int, default=20)
    p.set_defaults(func=cmd_simulate)

    return parser


# ----------------------------------------------------------------------
# Shared helpers
# ----------------------------------------------------------------------


def _load_data(manifest_path, embeddings_path):
    records = load_manifest(manifest_path)
    batch = load_embedding_file(embeddings_path)
    return records, batch


def _query_records(records: list[ManifestRecord], city: Optional[str] = None):
    out = [r for r in records if r.split is Split.EVAL]
    if city is not None:
        out = [r for r in out if r.city == city]
    if not out:
        raise ValueError("no evaluation records match the query selection")
    return out


def _query_embedding(batch, record: ManifestRecord) -> np.ndarray:
    vec = batch.vectors.get(record.embedding_key)
    if vec is None:
        raise ValueError(f"no embedding for record {record.id!r}")
    return normalize(vec)


def _make_backend(args) -> MockBackend | RemoteBackend:
    if args.backend == "mock":
        return MockBackend()
    cfg = {}
    if args.config:
        cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
    # Precedence: flag > config file > environment (handled by RemoteBackend).
    return RemoteBackend(
        url=args.backend_url or cfg.get("backend_url"),
        api_key=args.api_key or cfg.get("api_key"),
        model=args.model_name or cfg.get("model_name", "gpt-4o"),
        temperature=(
            args.temperature if args.temperature is not None
            else cfg.get("temperature", 0.0)
        ),
        audit=AuditLog(args.audit_log) if args.audit_log else None,
    )


def _mode_from_args(mode: str, k: int, seed: int) -> AssessmentMode:
    if mode == "plain" or k == 0:
        return AssessmentMode.plain()
    if mode == "rag":
        return AssessmentMode.rag(k)
    return AssessmentMode.random(k, seed)


def _run_assessments(
    records: list[ManifestRecord],
    batch,
    mode: AssessmentMode,
    backend,
    templates: PromptTemplates,
    city: Optional[str] = None,
    exclude_city: Optional[str] = None,
) -> list[tuple[ManifestRecord, PVDescriptor]]:
    queries = _query_records(records, city)
    index = None
    if mode.kind != "plain":
        index = build_reference_index(records, batch, exclude_city=exclude_city)
    out = []
    for rec in queries:
        result = assess(
            query_id=rec.id,
            query_embedding=_query_embedding(batch, rec),
            index=index,
            mode=mode,
            backend=backend,
            templates=templates,
            query_image_ref=rec.image_ref or None,
        )
        out.append((rec, result.descriptor))
    return out


def _score_pairs(pairs) -> list[ScoredRecord]:
    return [score_record(rec.id, rec.city, pred, rec.label) for rec, pred in pairs]


def _accuracies(scored: list[ScoredRecord]) -> tuple[float, float, float]:
    n = len(scored)
    return (
        sum(s.presence_match for s in scored) / n,
        sum(s.quantity_match for s in scored) / n,
        sum(s.location_match for s in scored) / n,
    )


# ----------------------------------------------------------------------
# Subcommands
# ----------------------------------------------------------------------


def cmd_ingest(args) -> int:
    records = load_manifest(args.manifest)
    splits = validate_split(records)
    print(f"manifest: {len(records)} records, {len(splits)} cities")
    mismatches = 0
    for city in sorted(splits):
        region = splits[city]
        ok = (
            len(region.eval_ids) == args.expected_eval
            and len(region.reference_ids) == args.expected_reference
        )
        status = "ok" if ok else (
            f"PATTERN MISMATCH (expected {args.expected_eval}"
            f"/{args.expected_reference})"
        )
        mismatches += 0 if ok else 1
        print(
            f"  {city}: eval={len(region.eval_ids)} "
            f"reference={len(region.reference_ids)}  {status}"
        )
    print(f"{mismatches} of {len(splits)} cities violate the expected pattern")
    return 0


def cmd_index(args) -> int:
    records, batch = _load_data(args.manifest, args.embeddings)
    index = build_reference_index(records, batch, exclude_city=args.exclude_city)
    index.save(args.out)
    print(f"wrote index with {len(index)} entries (dimension {index.dimension}) "
          f"to {args.out}")
    return 0


def cmd_retrieve(args) -> int:
    records, batch = _load_data(args.manifest, args.embeddings)
    by_id = {r.id: r for r in records}
    if args.query_id not in by_id:
        raise ValueError(f"unknown query id {args.query_id!r}")
    record = by_id[args.query_id]
    index = build_reference_index(records, batch, exclude_city=args.leave_out)
    if args.k > len(index):
        logger.warning("k=%d exceeds index size %d; returning all entries",
                       args.k, len(index))
    hits = index.search_topk(
        _query_embedding(batch, record),
        min(args.k, len(index)),
        predicate=lambda e: e.id != record.id,
    )
    rows = [
        (rank, h.entry.id, h.entry.city, f"{h.distance:.4f}", f"{h.similarity:.4f}")
        for rank, h in enumerate(hits, start=1)
    ]
    print("rank,id,city,distance,similarity")
    for row in rows:
        print(",".join(str(v) for v in row))
    if args.csv:
        lines = ["rank,id,city,distance,similarity"]
        lines += [",".join(str(v) for v in row) for row in rows]
        Path(args.csv).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


def cmd_assess(args) -> int:
    records, batch = _load_data(args.manifest, args.embeddings)
    templates = PromptTemplates.load_default()
    mode = _mode_from_args(args.mode, args.k, args.seed)
    backend = _make_backend(args)
    pairs = _run_assessments(
        records, batch, mode, backend, templates,
        city=args.city, exclude_city=args.leave_out,
    )
    with open(args.out, "w", encoding="utf-8") as fh:
        for rec, descriptor in pairs:
            fields = descriptor.as_strings()
            fh.write(json.dumps(
                {
                    "query_id": rec.id,
                    "presence": fields["presence"],
                    "quantity": fields["quantity"],
                    "location": fields["location"],
                    "explanation": fields["explanation"],
                    "backend": backend.name,
                    "mode": mode.kind,
                    "k": mode.k,
                },
                sort_keys=True,
            ) + "\n")
    print(f"assessed {len(pairs)} records -> {args.out}")
    return 0


def _load_results(path) -> dict[str, PVDescriptor]:
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                descriptor = PVDescriptor(
                    presence=presence_from_text(obj["presence"]),
                    quantity=quantity_from_text(obj["quantity"]),
                    location=location_from_text(obj["location"]),
                    explanation=obj.get("explanation", ""),
                )
                query_id = obj["query_id"]
            except (KeyError, ValueError) as exc:
                raise ValueError(f"{path}: line {i}: {exc}") from None
            if query_id in out:
                raise ValueError(f"{path}: line {i}: duplicate query id {query_id!r}")
            out[query_id] = descriptor
    return out


def cmd_evaluate(args) -> int:
    records = load_manifest(args.manifest)
    by_id = {r.id: r for r in records}
    runs = []
    for path in args.results:
        preds = _load_results(path)
        scored = []
        for query_id, pred in preds.items():
            ref = by_id.get(query_id)
            if ref is None:
                raise ValueError(f"{path}: unknown query id {query_id!r}")
            scored.append(score_record(query_id, ref.city, pred, ref.label))
        runs.append(scored)
    rows = aggregate(runs, average=args.average)
    emit_report(rows, args.out, fmt=args.format)
    for row in rows:
        if row.city == evaluation.OVERALL:
            print(f"overall {row.task}: {row.mean:.4f} +/- {row.std:.4f} "
                  f"(n={row.n_records}, runs={row.n_runs})")
    print(f"report -> {args.out}")
    return 0


def cmd_ablate(args) -> int:
    records, batch = _load_data(args.manifest, args.embeddings)
    templates = PromptTemplates.load_default()
    backend = MockBackend()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.kind == "k-sweep":
        k_values = [int(tok) for tok in str(args.k_values).split(",") if tok != ""]
        lines = ["k,presence_accuracy,quantity_accuracy,location_accuracy"]
        for k in k_values:
            mode = AssessmentMode.plain() if k == 0 else AssessmentMode.rag(k)
            scored = _score_pairs(
                _run_assessments(records, batch, mode, backend, templates)
            )
            acc = _accuracies(scored)
            lines.append(f"{k},{acc[0]!r},{acc[1]!r},{acc[2]!r}")
        path = out_dir / "k_sweep.csv"
    elif args.kind == "random-vs-similar":
        lines = ["mode,k,presence_accuracy,quantity_accuracy,location_accuracy"]
        for label, mode in (
            ("similar", AssessmentMode.rag(args.k)),
            ("random", AssessmentMode.random(args.k, args.seed)),
        ):
            scored = _score_pairs(
                _run_assessments(records, batch, mode, backend, templates)
            )
            acc = _accuracies(scored)
            lines.append(f"{label},{args.k},{acc[0]!r},{acc[1]!r},{acc[2]!r}")
        path = out_dir / "random_vs_similar.csv"
    else:
        cities = sorted({r.city for r in records})
        lines = ["city,presence_accuracy,quantity_accuracy,location_accuracy"]
        for city in cities:
            scored = _score_pairs(
                _run_assessments(
                    records, batch, AssessmentMode.rag(args.k), backend,
                    templates, city=city, exclude_city=city,
                )
            )
            acc = _accuracies(scored)
            lines.append(f"{city},{acc[0]!r},{acc[1]!r},{acc[2]!r}")
        path = out_dir / "leave_one_out.csv"

    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"{args.kind} report -> {path}")
    return 0


def _parse_model_flags(specs: list[str]) -> dict[str, ModelAccuracy]:
    models = {}
    for spec in specs:
        try:
            name, values = spec.split("=", 1)
            a_q, a_l = (float(v) for v in values.split(","))
        except ValueError:
            raise ValueError(
                f"bad --model value {spec!r}; expected NAME=A_Q,A_L"
            ) from None
        models[name.strip()] = ModelAccuracy(quantity=a_q, location=a_l)
    return models


def cmd_simulate(args) -> int:
    net = parse_case(args.case)
    if args.sites.startswith("synth:"):
        try:
            _, n_text, seed_text = args.sites.split(":")
            sites = generate_sites(net, int(n_text), int(seed_text))
        except ValueError:
            raise ValueError(
                f"bad --sites value {args.sites!r}; expected synth:N:SEED or a path"
            ) from None
    else:
        sites = load_sites(args.sites, net)
    cfg = ScenarioConfig(
        models=_parse_model_flags(args.model),
        alpha_load=args.alpha_load,
        penetration=args.penetration,
        under_bias=args.under_bias,
        seed=args.seed,
        pf_tol=args.pf_tol,
        pf_max_iter=args.pf_max_iter,
    )
    grid = TimeGrid()
    profiles = (
        DayProfiles.from_dir(args.profiles, grid) if args.profiles
        else DayProfiles.default(grid)
    )
    sites_per_model = perturb_all_models(sites, net, cfg)
    result = run_day_simulation(net, sites_per_model, cfg, profiles, grid)
    metrics = compute_metrics(result, cfg)
    emit_simulation_report(result, metrics, args.out)
    print(f"kappa={result.kappa:.6f}  sites={len(sites)}  "
          f"buses={len(net.buses)}  steps={grid.steps}")
    print(f"{'model':<12} {'capacity_mw':>12} {'rmse_mw':>10} {'mape_pct':>10}")
    for model, sm in metrics.items():
        rmse_text = "--" if sm.rmse_mw is None else f"{sm.rmse_mw:.2f}"
        mape_text = "--" if sm.mape_pct is None else f"{sm.mape_pct:.2f}"
        print(f"{model:<12} {sm.total_capacity_mw:>12.2f} "
              f"{rmse_text:>10} {mape_text:>10}")
    print(f"reports -> {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
