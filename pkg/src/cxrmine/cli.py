"""Command-line pipeline runner.

Each subcommand is a pure function of (config, input files) writing its
artifacts atomically under the output directory, plus a manifest holding
input digests, the seed, tool version, and timings. Timestamps live only
in the manifest, so rerunning with identical config and inputs yields
byte-identical artifacts. Every artifact's first line names the seed and
the config digest that produced it.

Exit codes: 0 ok, 2 missing input, 3 validation failure, 4 internal
invariant breach.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .classify import (
    DEFAULT_ONTOLOGY_PATH,
    DEFAULT_RULES_PATH,
    classify_report,
    load_ontology,
    load_rules,
    load_tag_store,
)
from .fileio import atomic_write, sha256_file, sha256_text
from .ingest import IngestError, corpus_stats, load_reports
from .labels import (
    ANY_HIT,
    FULLY_COVERED,
    POLICIES,
    build_broad_test_set,
    build_label_sets,
    estimate_label_noise,
    partition_by_patient,
    read_labels_csv,
    select_validation_subset,
    write_labels_csv,
    write_noise_csv,
)
from .sentences import (
    DEFAULT_ABBREVIATIONS,
    build_sentence_pool,
    coverage_curve,
    load_abbreviations,
    read_pool_csv,
    write_pool_csv,
)
from .stats import (
    EvalRow,
    evaluate_matrix,
    load_rating_matrices,
    read_predictions_csv,
    select_threshold,
    write_eval_csv,
)

ENV_DATA_DIR = "CXRMINE_DATA_DIR"

SUBCOMMANDS = ("ingest", "pool", "coverage", "classify", "build-labels", "eval", "noise", "serve")


class InvariantError(Exception):
    """An internal consistency check failed; artifacts were not written."""


@dataclass
class RunConfig:
    reports: str = ""
    rules: str = str(DEFAULT_RULES_PATH)
    ontology: str = str(DEFAULT_ONTOLOGY_PATH)
    tag_store: str = ""
    abbreviations: str = ""
    out_dir: str = "out"
    seed: int = 0
    ratios: tuple[int, int, int] = (80, 10, 10)
    policy: str = ANY_HIT
    strict: bool = False
    validation_min_pos: int = 25
    test_base: int = 5000
    test_min_pos: int = 100
    bootstrap_n: int = 10_000
    bootstrap_level: float = 0.95
    threshold_reference: str = "labels"  # or "raters"
    predictions: str = ""
    ratings: str = ""
    labels: str = ""
    pool: str = ""
    eval_sets: str = ""
    event_log: str = ""
    images_dir: str = ""
    ui_dir: str = ""
    host: str = "127.0.0.1"
    port: int = 8642
    queue_coverage: str = "single"

    _INT_KEYS = ("seed", "validation_min_pos", "test_base", "test_min_pos", "bootstrap_n", "port")
    _FLOAT_KEYS = ("bootstrap_level",)
    _BOOL_KEYS = ("strict",)

    def digest(self) -> str:
        # out_dir only says where artifacts land, not what they contain
        lines = [f"{k}={v}" for k, v in sorted(dataclasses.asdict(self).items())
                 if k != "out_dir"]
        return sha256_text("\n".join(lines))[:12]

    def header(self, subcommand: str) -> str:
        return f"cxrmine v{__version__} {subcommand} seed={self.seed} config={self.digest()}"


class ConfigError(ValueError):
    pass


def load_config(path: str | Path) -> RunConfig:
    """Parse a key = value config file ('#' comments, blank lines ignored)."""
    config = RunConfig()
    valid = {f.name for f in dataclasses.fields(RunConfig) if not f.name.startswith("_")}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in valid:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        try:
            if key == "ratios":
                parts = tuple(int(p) for p in value.replace("/", ",").split(","))
                if len(parts) != 3:
                    raise ValueError("need three ratio values")
                setattr(config, key, parts)
            elif key in RunConfig._INT_KEYS:
                setattr(config, key, int(value))
            elif key in RunConfig._FLOAT_KEYS:
                setattr(config, key, float(value))
            elif key in RunConfig._BOOL_KEYS:
                setattr(config, key, value.lower() in ("1", "true", "yes"))
            else:
                setattr(config, key, value)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from exc
    return config


def _resolve(path: str) -> Path:
    """Resolve an input path, honoring the default data directory env var."""
    p = Path(path)
    base = os.environ.get(ENV_DATA_DIR)
    if base and not p.is_absolute():
        return Path(base) / p
    return p


def _require(path: str, label: str) -> Path:
    if not path:
        raise FileNotFoundError(f"config is missing the {label} path")
    resolved = _resolve(path)
    if not resolved.exists():
        raise FileNotFoundError(f"{label} file not found: {resolved}")
    return resolved


class PipelineRun:
    """Shared context for one subcommand invocation."""

    def __init__(self, subcommand: str, config: RunConfig):
        self.subcommand = subcommand
        self.config = config
        self.out_dir = Path(config.out_dir)
        self.inputs: dict[str, Path] = {}
        self.artifacts: list[Path] = []
        self.extras: dict = {}
        self.started = time.time()

    def input_file(self, path: str, label: str) -> Path:
        resolved = _require(path, label)
        self.inputs[label] = resolved
        return resolved

    def artifact(self, name: str) -> Path:
        path = self.out_dir / name
        self.artifacts.append(path)
        return path

    def write_manifest(self) -> Path:
        manifest = {
            "tool": {"name": "cxrmine", "version": __version__},
            "subcommand": self.subcommand,
            "config_digest": self.config.digest(),
            "config": dataclasses.asdict(self.config),
            "seed": self.config.seed,
            "inputs": {
                label: {"path": str(path), "sha256": sha256_file(path)}
                for label, path in sorted(self.inputs.items())
            },
            "artifacts": [str(p) for p in self.artifacts],
            "extras": self.extras,
            "timings": {
                "started_unix": self.started,
                "finished_unix": time.time(),
                "seconds": round(time.time() - self.started, 3),
            },
        }
        path = self.out_dir / f"manifest_{self.subcommand.replace('-', '_')}.json"
        with atomic_write(path) as fh:
            json.dump(manifest, fh, indent=2)
            fh.write("\n")
        return path


def _load_abbreviations(run: PipelineRun) -> tuple[str, ...]:
    if run.config.abbreviations:
        return load_abbreviations(run.input_file(run.config.abbreviations, "abbreviations"))
    return DEFAULT_ABBREVIATIONS


def _load_corpus(run: PipelineRun):
    path = run.input_file(run.config.reports, "reports")
    return load_reports(path, strict=run.config.strict)


def _load_ontology(run: PipelineRun):
    return load_ontology(run.input_file(run.config.ontology, "ontology"))


def _load_rules(run: PipelineRun):
    return load_rules(run.input_file(run.config.rules, "rules"))


def _analyses(run: PipelineRun, corpus, ontology, rules, abbreviations):
    tags = load_tag_store(run.input_file(run.config.tag_store, "tag_store"), ontology)
    return [classify_report(s, tags, rules, ontology, abbreviations) for s in corpus.studies]


# -- subcommand bodies -------------------------------------------------------

def _cmd_ingest(run: PipelineRun) -> None:
    corpus = _load_corpus(run)
    stats = corpus_stats(corpus)
    with atomic_write(run.artifact("corpus_stats.json")) as fh:
        json.dump({
            "header": run.config.header("ingest"),
            "n_studies": stats.n_studies,
            "n_rejected": stats.n_rejected,
            "lateral_fraction": stats.lateral_fraction,
            "rejects_by_reason": dict(stats.rejects_by_reason),
        }, fh, indent=2)
        fh.write("\n")
    with atomic_write(run.artifact("rejects.csv")) as fh:
        fh.write(f"# {run.config.header('ingest')}\n")
        fh.write("line_number,reason\n")
        for rej in corpus.rejected:
            fh.write(f"{rej.line_number},{rej.reason}\n")
    run.extras["n_studies"] = stats.n_studies
    run.extras["n_rejected"] = stats.n_rejected


def _cmd_pool(run: PipelineRun) -> None:
    corpus = _load_corpus(run)
    pool = build_sentence_pool(corpus, _load_abbreviations(run))
    write_pool_csv(pool, run.artifact("pool.csv"), header_comment=run.config.header("pool"))
    run.extras["n_unique_sentences"] = len(pool)


def _cmd_coverage(run: PipelineRun) -> None:
    corpus = _load_corpus(run)
    abbreviations = _load_abbreviations(run)
    rules = _load_rules(run)
    pool = build_sentence_pool(corpus, abbreviations)
    curve = coverage_curve(pool, corpus, rules, abbreviations)
    for (k0, c0), (_, c1) in zip(curve, curve[1:]):
        if c1 < c0:
            raise InvariantError(f"coverage curve decreased at k={k0 + 1}")
    with atomic_write(run.artifact("coverage.csv")) as fh:
        fh.write(f"# {run.config.header('coverage')}\n")
        fh.write("k,covered_reports\n")
        for k, covered in curve:
            fh.write(f"{k},{covered}\n")


def _cmd_classify(run: PipelineRun) -> None:
    corpus = _load_corpus(run)
    ontology = _load_ontology(run)
    rules = _load_rules(run)
    analyses = _analyses(run, corpus, ontology, rules, _load_abbreviations(run))
    with atomic_write(run.artifact("analyses.csv")) as fh:
        fh.write(f"# {run.config.header('classify')}\n")
        fh.write("study_id,excluded,has_unknown_candidate,positive_findings\n")
        for a in analyses:
            names = "|".join(sorted(a.positive_findings))
            fh.write(f"{a.study_id},{int(a.excluded)},{int(a.has_unknown_candidate)},{names}\n")
    run.extras["n_excluded"] = sum(a.excluded for a in analyses)
    run.extras["n_with_unknown"] = sum(a.has_unknown_candidate for a in analyses)


def _cmd_build_labels(run: PipelineRun) -> None:
    config = run.config
    if config.policy not in POLICIES:
        raise ConfigError(f"unknown policy {config.policy!r}")
    corpus = _load_corpus(run)
    ontology = _load_ontology(run)
    rules = _load_rules(run)
    analyses = _analyses(run, corpus, ontology, rules, _load_abbreviations(run))
    patient_of = {s.study_id: s.patient_id for s in corpus.studies}

    labeled = build_label_sets(analyses, patient_of, ontology, config.policy)
    labeled = partition_by_patient(labeled, config.ratios, config.seed)

    if config.policy == ANY_HIT:
        fully = {s.study_id for s in build_label_sets(analyses, patient_of, ontology, FULLY_COVERED)}
        any_ids = {s.study_id for s in labeled}
        if not fully <= any_ids:
            raise InvariantError("fully_covered studies escaped the any_hit set")
    parts_by_patient: dict[str, str] = {}
    for s in labeled:
        if parts_by_patient.setdefault(s.patient_id, s.partition) != s.partition:
            raise InvariantError(f"patient {s.patient_id} split across partitions")

    header = config.header("build-labels")
    write_labels_csv(labeled, ontology, run.artifact(f"labels_{config.policy}.csv"), header)

    validation = [s for s in labeled if s.partition == "validation"]
    val_subset, val_short = select_validation_subset(validation, ontology, config.validation_min_pos)
    write_labels_csv(val_subset, ontology,
                     run.artifact(f"validation_subset_{config.policy}.csv"), header)

    test = [s for s in labeled if s.partition == "test"]
    test_subset, test_short = build_broad_test_set(
        test, ontology, config.test_base, config.test_min_pos, config.seed)
    write_labels_csv(test_subset, ontology,
                     run.artifact(f"test_subset_{config.policy}.csv"), header)

    run.extras["n_labeled"] = len(labeled)
    run.extras["partition_counts"] = {
        part: sum(1 for s in labeled if s.partition == part)
        for part in ("train", "validation", "test")
    }
    run.extras["validation_subset"] = {"size": len(val_subset), "shortfalls": val_short}
    run.extras["test_subset"] = {"size": len(test_subset), "shortfalls": test_short}


def _cmd_eval(run: PipelineRun) -> None:
    config = run.config
    ontology = _load_ontology(run)
    predictions = read_predictions_csv(run.input_file(config.predictions, "predictions"), ontology)
    matrices = load_rating_matrices(run.input_file(config.ratings, "ratings"))
    labeled = read_labels_csv(run.input_file(config.labels, "labels"), ontology)
    validation = [s for s in labeled if s.partition == "validation"]

    rows: list[EvalRow] = []
    for (set_id, finding) in sorted(matrices, key=lambda k: (k[1], k[0])):
        matrix = matrices[(set_id, finding)]
        if finding not in ontology.by_name:
            raise ConfigError(f"ratings reference unknown finding {finding!r}")
        fi = ontology.by_name[finding].id - 1
        missing = [sid for sid in matrix.studies if sid not in predictions]
        if missing:
            raise ConfigError(f"predictions missing for {len(missing)} studies "
                              f"in set {set_id!r} (first: {missing[0]!r})")
        conf = np.array([predictions[sid][fi] for sid in matrix.studies])

        if config.threshold_reference == "raters":
            threshold = select_threshold(conf, matrix)
        else:
            val_with_pred = [s for s in validation if s.study_id in predictions]
            if not val_with_pred:
                raise ConfigError("threshold_reference=labels needs validation-partition "
                                  "studies with predictions")
            val_conf = np.array([predictions[s.study_id][fi] for s in val_with_pred])
            val_ref = np.array([s.labels[fi] for s in val_with_pred])
            threshold = select_threshold(val_conf, val_ref)

        rows.append(evaluate_matrix(matrix, conf, threshold, config.bootstrap_n,
                                    config.bootstrap_level, config.seed))
    write_eval_csv(rows, run.artifact("eval_report.csv"), run.config.header("eval"))
    run.extras["n_matrices"] = len(rows)


def _cmd_noise(run: PipelineRun) -> None:
    config = run.config
    corpus = _load_corpus(run)
    ontology = _load_ontology(run)
    rules = _load_rules(run)
    analyses = _analyses(run, corpus, ontology, rules, _load_abbreviations(run))
    patient_of = {s.study_id: s.patient_id for s in corpus.studies}
    labeled_by_policy = {
        policy: {s.study_id: s for s in build_label_sets(analyses, patient_of, ontology, policy)}
        for policy in POLICIES
    }
    matrices = load_rating_matrices(run.input_file(config.ratings, "ratings"))
    ordered = [matrices[key] for key in sorted(matrices, key=lambda k: (k[1], k[0]))]
    report = estimate_label_noise(ordered, labeled_by_policy, ontology)
    for row in report:
        fc, ah = row.included_fully_covered, row.included_any_hit
        if fc is not None and ah is not None and ah < fc - 1e-9:
            raise InvariantError(f"any_hit inclusion below fully_covered for {row.finding!r}")
    write_noise_csv(report, run.artifact("noise_report.csv"), run.config.header("noise"))
    run.extras["n_findings"] = len(report)


def _cmd_serve(run: PipelineRun) -> None:
    import uvicorn

    from .service import AnnotationState, ServiceConfig, create_app, load_eval_sets

    config = run.config
    ontology = _load_ontology(run)
    rules = _load_rules(run)
    if config.pool:
        pool = read_pool_csv(run.input_file(config.pool, "pool"))
    elif config.reports:
        pool = build_sentence_pool(_load_corpus(run), _load_abbreviations(run))
    else:
        pool = None
    eval_sets = {}
    if config.eval_sets:
        eval_sets = load_eval_sets(run.input_file(config.eval_sets, "eval_sets"))
    log_path = Path(config.event_log) if config.event_log else run.out_dir / "events.jsonl"
    state = AnnotationState(
        log_path=log_path, ontology=ontology, pool=pool, rules=rules, eval_sets=eval_sets,
        config=ServiceConfig(queue_coverage=config.queue_coverage, shuffle_seed=config.seed),
    )
    app = create_app(
        state,
        images_dir=config.images_dir or None,
        ui_dir=config.ui_dir or None,
    )
    uvicorn.run(app, host=config.host, port=config.port)


_COMMANDS = {
    "ingest": _cmd_ingest,
    "pool": _cmd_pool,
    "coverage": _cmd_coverage,
    "classify": _cmd_classify,
    "build-labels": _cmd_build_labels,
    "eval": _cmd_eval,
    "noise": _cmd_noise,
    "serve": _cmd_serve,
}


def run(subcommand: str, config: RunConfig) -> list[Path]:
    """Execute one subcommand; returns the artifact paths it wrote."""
    if subcommand not in _COMMANDS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    pipeline = PipelineRun(subcommand, config)
    pipeline.out_dir.mkdir(parents=True, exist_ok=True)
    _COMMANDS[subcommand](pipeline)
    if subcommand != "serve":
        pipeline.write_manifest()
    return pipeline.artifacts


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cxrmine",
        description="Mine CXR reports into finding labels and evaluate them.",
    )
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", "-c", help="key = value config file")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int, help="RNG seed recorded in artifacts")
    parser.add_argument("--policy", choices=POLICIES, help="label admission policy")
    parser.add_argument("--reports", help="reports JSONL file")
    parser.add_argument("--rules", help="filter rules TSV")
    parser.add_argument("--ontology", help="ontology JSON")
    parser.add_argument("--tag-store", dest="tag_store", help="sentence tag store JSONL")
    parser.add_argument("--abbreviations", help="splitter abbreviation list")
    parser.add_argument("--predictions", help="model predictions CSV")
    parser.add_argument("--ratings", help="rating events JSONL")
    parser.add_argument("--labels", help="labels CSV (threshold selection reference)")
    parser.add_argument("--pool", help="sentence pool CSV (serve)")
    parser.add_argument("--eval-sets", dest="eval_sets", help="evaluation sets JSON (serve)")
    parser.add_argument("--event-log", dest="event_log", help="service event log path")
    parser.add_argument("--images-dir", dest="images_dir", help="static images directory (serve)")
    parser.add_argument("--ui-dir", dest="ui_dir", help="built browser UI directory (serve)")
    parser.add_argument("--threshold-reference", dest="threshold_reference",
                        choices=("labels", "raters"))
    parser.add_argument("--strict", action="store_true", default=None,
                        help="abort on the first malformed report line")
    parser.add_argument("--host")
    parser.add_argument("--port", type=int)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = load_config(_require(args.config, "config")) if args.config else RunConfig()
        overrides = {
            "out_dir": args.out, "seed": args.seed, "policy": args.policy,
            "reports": args.reports, "rules": args.rules, "ontology": args.ontology,
            "tag_store": args.tag_store, "abbreviations": args.abbreviations,
            "predictions": args.predictions, "ratings": args.ratings, "labels": args.labels,
            "pool": args.pool, "eval_sets": args.eval_sets, "event_log": args.event_log,
            "images_dir": args.images_dir, "ui_dir": args.ui_dir,
            "threshold_reference": args.threshold_reference, "strict": args.strict,
            "host": args.host, "port": args.port,
        }
        for key, value in overrides.items():
            if value is not None:
                setattr(config, key, value)
        run(args.subcommand, config)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, IngestError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except InvariantError as exc:
        print(f"internal invariant breach: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
