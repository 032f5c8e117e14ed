"""End-to-end experiment pipeline with seeded, resumable stages.

Stages: suite -> sample -> encode -> features, suite -> bench, then
select (features + bench) and report. Each stage persists its artifacts
under the output directory together with a manifest carrying the config
hash and master seed; a dependent stage refuses to run when an upstream
manifest is missing or was produced by a different config, and re-running
a completed stage with an unchanged config is a no-op.

All randomness is derived from the master seed, so two runs with the same
config produce byte-identical artifacts. `jobs > 1` parallelizes the
per-instance work with processes; results are written in deterministic
order, keeping outputs bit-identical to a sequential run.
"""

from __future__ import annotations

import csv
import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .design import load_design, load_numeric_design, normalize, sample_initial_design, save_design, save_numeric_design
from .ela import FEATURE_NAMES, FeatureVector, compute_feature_vector
from .encoding import ENCODINGS, EncoderConfig, encode
from .errors import ConfigError, StageError
from .forest import ForestParams
from .metrics import emit_report, relert
from .portfolio import (
    ALGORITHMS,
    build_performance_table,
    load_performance_table,
    run_portfolio,
    save_performance_table,
    save_traces,
)
from .problem import (
    SuiteConfig,
    generate_synthetic_suite,
    load_suite_manifest,
    read_suite_manifest,
    save_suite_manifest,
    suite_manifest,
)
from .seeding import derive_seed
from .selector import build_labeled_dataset, load_outcomes, run_cv_experiment, save_audit, save_outcomes

STAGES = ("suite", "sample", "encode", "features", "bench", "select", "report")

_DEPENDENCIES = {
    "suite": (),
    "sample": ("suite",),
    "encode": ("sample",),
    "features": ("encode",),
    "bench": ("suite",),
    "select": ("features", "bench"),
    "report": ("suite", "bench", "select"),
}


@dataclass(frozen=True)
class PipelineConfig:
    """Experiment configuration; defaults follow the standard protocol
    (50*D design, 20 repetitions, 100*D budget, 10 folds)."""

    suite: SuiteConfig
    design_multiplier: int = 50
    repetitions: int = 20
    budget_multiplier: int = 100
    cv_folds: int = 10
    inner_folds: int = 5
    encodings: tuple[str, ...] = ("target", "shap")
    encoder: EncoderConfig = EncoderConfig()
    selector_forest: ForestParams = ForestParams(feature_subsample="sqrt")
    seed: int = 0

    def __post_init__(self):
        for tag in self.encodings:
            if tag not in ENCODINGS:
                raise ConfigError(f"unknown encoding {tag!r}")
        for name in ("design_multiplier", "repetitions", "budget_multiplier", "cv_folds"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")

    def to_dict(self) -> dict:
        fp = self.selector_forest
        return {
            "suite": self.suite.to_dict(),
            "design_multiplier": self.design_multiplier,
            "repetitions": self.repetitions,
            "budget_multiplier": self.budget_multiplier,
            "cv_folds": self.cv_folds,
            "inner_folds": self.inner_folds,
            "encodings": list(self.encodings),
            "encoder": self.encoder.to_dict(),
            "selector_forest": {
                "n_trees": fp.n_trees,
                "max_depth": fp.max_depth,
                "min_samples_leaf": fp.min_samples_leaf,
                "feature_subsample": fp.feature_subsample,
                "bootstrap": fp.bootstrap,
                "seed": fp.seed,
            },
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(data: dict) -> "PipelineConfig":
        kwargs = dict(data)
        kwargs["suite"] = SuiteConfig.from_dict(kwargs["suite"])
        if "encoder" in kwargs:
            kwargs["encoder"] = EncoderConfig.from_dict(kwargs["encoder"])
        if "selector_forest" in kwargs:
            kwargs["selector_forest"] = ForestParams(**kwargs["selector_forest"])
        if "encodings" in kwargs:
            kwargs["encodings"] = tuple(kwargs["encodings"])
        return PipelineConfig(**kwargs)

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def load_config(path: str | Path) -> PipelineConfig:
    return PipelineConfig.from_dict(json.loads(Path(path).read_text()))


def save_config(config: PipelineConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True))


# ---------------------------------------------------------------------------
# stage plumbing
# ---------------------------------------------------------------------------


class _Paths:
    def __init__(self, out_dir: str | Path):
        self.root = Path(out_dir)
        self.manifests = self.root / "manifests"
        self.suite_manifest = self.root / "suite_manifest.json"
        self.designs = self.root / "designs"
        self.encoded = self.root / "encoded"
        self.features = self.root / "features"
        self.traces = self.root / "traces"
        self.performance = self.root / "performance.csv"
        self.outcomes = self.root / "selection_outcomes.csv"
        self.cv_audit = self.root / "cv_audit.json"
        self.shap_diag = self.root / "shap_diagnostics.json"
        self.report = self.root / "report"

    def stage_manifest(self, stage: str) -> Path:
        return self.manifests / f"{stage}.json"

    def design_csv(self, instance_id: str, rep: int) -> Path:
        return self.designs / f"{instance_id}_r{rep:02d}.csv"

    def encoded_csv(self, tag: str, instance_id: str, rep: int) -> Path:
        return self.encoded / tag / f"{instance_id}_r{rep:02d}.csv"

    def features_csv(self, tag: str) -> Path:
        return self.features / f"{tag}.csv"

    def traces_csv(self, instance_id: str) -> Path:
        return self.traces / f"{instance_id}.csv"


def stage_status(config: PipelineConfig, out_dir: str | Path) -> dict[str, str]:
    """Per-stage status: 'complete', 'stale' (other config), or 'missing'."""
    paths = _Paths(out_dir)
    status = {}
    for stage in STAGES:
        path = paths.stage_manifest(stage)
        if not path.exists():
            status[stage] = "missing"
            continue
        manifest = json.loads(path.read_text())
        status[stage] = (
            "complete" if manifest.get("config_hash") == config.config_hash() else "stale"
        )
    return status


def _require(stage: str, dependency: str, status: dict[str, str]) -> None:
    if status[dependency] == "missing":
        raise StageError(stage, f"missing artifacts from stage '{dependency}'")
    if status[dependency] == "stale":
        raise StageError(
            stage,
            f"artifacts from stage '{dependency}' were built with a different config",
        )


def _mark_complete(paths: _Paths, stage: str, config: PipelineConfig) -> None:
    paths.manifests.mkdir(parents=True, exist_ok=True)
    paths.stage_manifest(stage).write_text(
        json.dumps(
            {
                "stage": stage,
                "status": "complete",
                "config_hash": config.config_hash(),
                "master_seed": config.seed,
            },
            indent=2,
            sort_keys=True,
        )
    )


def run_pipeline(
    config: PipelineConfig,
    out_dir: str | Path,
    stages: tuple[str, ...] | None = None,
    jobs: int = 1,
) -> dict[str, list[str]]:
    """Run the requested stages (all by default) in dependency order."""
    requested = STAGES if stages is None else tuple(stages)
    for stage in requested:
        if stage not in STAGES:
            raise ConfigError(f"unknown stage {stage!r}; expected one of {STAGES}")
    executed, skipped = [], []
    for stage in STAGES:
        if stage not in requested:
            continue
        if run_stage(config, out_dir, stage, jobs=jobs):
            executed.append(stage)
        else:
            skipped.append(stage)
    return {"executed": executed, "skipped": skipped}


def run_stage(config: PipelineConfig, out_dir: str | Path, stage: str, jobs: int = 1) -> bool:
    """Run one stage; returns False when it is already complete (no-op)."""
    if stage not in STAGES:
        raise ConfigError(f"unknown stage {stage!r}; expected one of {STAGES}")
    paths = _Paths(out_dir)
    paths.root.mkdir(parents=True, exist_ok=True)
    status = stage_status(config, out_dir)
    if status[stage] == "complete":
        return False
    for dependency in _DEPENDENCIES[stage]:
        _require(stage, dependency, status)
    _STAGE_RUNNERS[stage](config, paths, jobs)
    _mark_complete(paths, stage, config)
    return True


def _pmap(fn, items: list, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (jobs * 4))))


def _load_problems(paths: _Paths):
    manifest = read_suite_manifest(paths.suite_manifest)
    problems = load_suite_manifest(manifest)
    groups = {entry["instance_id"]: entry["group"] for entry in manifest["problems"]}
    return problems, groups


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------


def _stage_suite(config: PipelineConfig, paths: _Paths, jobs: int) -> None:
    suite_seed = derive_seed(config.seed, "suite")
    problems = generate_synthetic_suite(config.suite, suite_seed)
    manifest = suite_manifest(config.suite, suite_seed, problems)
    manifest["config_hash"] = config.config_hash()
    manifest["master_seed"] = config.seed
    save_suite_manifest(manifest, paths.suite_manifest)


def _sample_task(args) -> str:
    problem, rep, multiplier, seed, csv_path, meta = args
    design = sample_initial_design(problem, multiplier=multiplier, seed=seed)
    save_design(design, csv_path, extra_meta=meta)
    return str(csv_path)


def _stage_sample(config: PipelineConfig, paths: _Paths, jobs: int) -> None:
    problems, _ = _load_problems(paths)
    paths.designs.mkdir(parents=True, exist_ok=True)
    meta = {"config_hash": config.config_hash(), "master_seed": config.seed}
    tasks = [
        (
            problem,
            rep,
            config.design_multiplier,
            derive_seed(config.seed, "design", problem.instance_id, rep),
            paths.design_csv(problem.instance_id, rep),
            meta,
        )
        for problem in problems
        for rep in range(config.repetitions)
    ]
    _pmap(_sample_task, tasks, jobs)


def _encode_task(args):
    design_path, tags, encoder_dict, seed, out_paths, meta = args
    design = load_design(design_path)
    base = EncoderConfig.from_dict(encoder_dict)
    gaps = {}
    for tag in tags:
        tag_config = replace(base, seed=derive_seed(seed, tag))
        encoded = encode(design, tag, tag_config)
        save_numeric_design(normalize(encoded), out_paths[tag], extra_meta=meta)
        gaps[tag] = encoded.max_efficiency_gap
    return gaps


def _stage_encode(config: PipelineConfig, paths: _Paths, jobs: int) -> None:
    problems, _ = _load_problems(paths)
    for tag in config.encodings:
        (paths.encoded / tag).mkdir(parents=True, exist_ok=True)
    meta = {"config_hash": config.config_hash(), "master_seed": config.seed}
    tasks = []
    keys = []
    for problem in problems:
        for rep in range(config.repetitions):
            tasks.append(
                (
                    paths.design_csv(problem.instance_id, rep),
                    config.encodings,
                    config.encoder.to_dict(),
                    derive_seed(config.seed, "encode", problem.instance_id, rep),
                    {tag: paths.encoded_csv(tag, problem.instance_id, rep) for tag in config.encodings},
                    meta,
                )
            )
            keys.append(f"{problem.instance_id}_r{rep:02d}")
    gaps = _pmap(_encode_task, tasks, jobs)
    overall = 0.0
    per_design = {}
    for key, gap in zip(keys, gaps):
        per_design[key] = gap
        overall = max(overall, *gap.values())
    paths.shap_diag.write_text(
        json.dumps(
            {"max_efficiency_gap": overall, "per_design": per_design},
            indent=2,
            sort_keys=True,
        )
    )


def _features_task(args):
    encoded_path, seed, instance_id, rep = args
    numeric = load_numeric_design(encoded_path)
    fv = compute_feature_vector(numeric, seed=seed, repetition=rep)
    return (instance_id, rep, fv.encoding_tag, fv.values, fv.flags)


def _stage_features(config: PipelineConfig, paths: _Paths, jobs: int) -> None:
    problems, _ = _load_problems(paths)
    paths.features.mkdir(parents=True, exist_ok=True)
    for tag in config.encodings:
        tasks = [
            (
                paths.encoded_csv(tag, problem.instance_id, rep),
                derive_seed(config.seed, "features", tag, problem.instance_id, rep),
                problem.instance_id,
                rep,
            )
            for problem in problems
            for rep in range(config.repetitions)
        ]
        rows = _pmap(_features_task, tasks, jobs)
        with paths.features_csv(tag).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["instance", "repetition", "encoding"] + list(FEATURE_NAMES) + ["flags"])
            for instance_id, rep, encoding_tag, values, flags in rows:
                writer.writerow(
                    [instance_id, rep, encoding_tag]
                    + [repr(float(v)) for v in values]
                    + [";".join(flags)]
                )


def load_features(path: str | Path) -> list[FeatureVector]:
    features = []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            values = np.array([float(row[name]) for name in FEATURE_NAMES])
            flags = tuple(f for f in row["flags"].split(";") if f)
            features.append(
                FeatureVector(
                    problem_id=row["instance"],
                    repetition=int(row["repetition"]),
                    encoding_tag=row["encoding"],
                    names=FEATURE_NAMES,
                    values=values,
                    flags=flags,
                )
            )
    return features


def _bench_task(args):
    problem, budget_multiplier, repetitions, seed = args
    return problem.instance_id, run_portfolio(
        problem,
        budget_multiplier=budget_multiplier,
        repetitions=repetitions,
        seed=seed,
    )


def _stage_bench(config: PipelineConfig, paths: _Paths, jobs: int) -> None:
    problems, _ = _load_problems(paths)
    paths.traces.mkdir(parents=True, exist_ok=True)
    tasks = [
        (
            problem,
            config.budget_multiplier,
            config.repetitions,
            derive_seed(config.seed, "bench", problem.instance_id),
        )
        for problem in problems
    ]
    results = _pmap(_bench_task, tasks, jobs)
    traces_by_instance = dict(results)
    for instance_id, per_algorithm in traces_by_instance.items():
        save_traces(per_algorithm, paths.traces_csv(instance_id))
    table = build_performance_table(traces_by_instance, algorithms=ALGORITHMS)
    save_performance_table(table, paths.performance)


def _stage_select(config: PipelineConfig, paths: _Paths, jobs: int) -> None:
    if not {"target", "shap"} <= set(config.encodings):
        raise StageError("select", "needs both 'target' and 'shap' encodings in the config")
    perf = load_performance_table(paths.performance)
    te = build_labeled_dataset(load_features(paths.features_csv("target")), perf, "target")
    sh = build_labeled_dataset(load_features(paths.features_csv("shap")), perf, "shap")
    outcomes, audit = run_cv_experiment(
        te,
        sh,
        perf,
        k=config.cv_folds,
        seed=derive_seed(config.seed, "select"),
        forest_params=config.selector_forest,
        inner_k=config.inner_folds,
    )
    save_outcomes(outcomes, paths.outcomes)
    save_audit(audit, paths.cv_audit)


def _stage_report(config: PipelineConfig, paths: _Paths, jobs: int) -> None:
    _, groups = _load_problems(paths)
    perf = load_performance_table(paths.performance)
    outcomes = load_outcomes(paths.outcomes)
    rel = relert(perf, outcomes)
    emit_report(
        rel,
        groups,
        paths.report,
        seed=config.seed,
        config_hash=config.config_hash(),
    )


_STAGE_RUNNERS = {
    "suite": _stage_suite,
    "sample": _stage_sample,
    "encode": _stage_encode,
    "features": _stage_features,
    "bench": _stage_bench,
    "select": _stage_select,
    "report": _stage_report,
}
