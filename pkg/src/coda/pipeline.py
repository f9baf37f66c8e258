"""End-to-end orchestration: discover -> align -> eval, plus artifact I/O.

Artifacts are deterministic for a fixed (config, seed): JSON manifests are
written with sorted keys and carry a config echo plus a version stamp, and
no wall-clock values ever land on disk.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .benchmark import Benchmark, BenchmarkSpec, make_benchmark
from .clustering import cluster_report, hdbscan
from .diffusion import (
    GuidanceConfig,
    GuidedSampleSet,
    fit_score_model,
    generate_class_set,
    make_schedule,
)
from .embeddings import EmbeddingSet, group_by_class, load_embeddings, make_embedding_set, save_embeddings
from .errors import ValidationError
from .evaluation import EvalReport, evaluate, fit_proxy, frechet_distance
from .matching import RepresentativeEntry, match_ipc, provenance_fractions
from .preprocess import fit_pca, transform
from .seeding import (
    STAGE_ALIGN,
    STAGE_DISCOVER,
    STAGE_SCORE_MODEL,
    rng_for,
)


@dataclass
class RunConfig:
    embeddings: str | None = None
    labels: str | None = None
    format: str = "binary"
    out_dir: str = "runs/out"
    ipc: int = 10
    min_cluster_size: int = 10
    min_samples: int = 3
    preprocess: str = "none"         # "pca" | "none"
    reduce_dim: int = 50
    gamma: float = 0.1
    pis: int = 5
    steps: int = 50
    cfg_scale: float = 5.0
    seed: int = 0
    score_components: int = 5
    bench: BenchmarkSpec | None = None
    test_embeddings: str | None = None
    test_labels: str | None = None

    def validate(self) -> None:
        if self.ipc < 1:
            raise ValidationError(f"ipc must be >= 1, got {self.ipc}")
        if self.min_cluster_size < 2:
            raise ValidationError("min_cluster_size must be >= 2")
        if self.min_samples < 1:
            raise ValidationError("min_samples must be >= 1")
        if self.preprocess not in ("pca", "none"):
            raise ValidationError(f"unknown preprocess {self.preprocess!r}")
        if self.steps < 2:
            raise ValidationError("steps must be >= 2")
        if not 0 <= self.pis <= self.steps:
            raise ValidationError(f"pis={self.pis} outside [0, steps={self.steps}]")
        if self.gamma < 0 or not np.isfinite(self.gamma):
            raise ValidationError("gamma must be finite and >= 0")
        if self.bench is None and self.embeddings is None:
            raise ValidationError("either --embeddings or a benchmark spec is required")

    def echo(self) -> dict:
        d = asdict(self)
        d["version"] = version_stamp()
        return d


def version_stamp() -> str:
    return f"coda-{__version__}"


@dataclass
class ClassDiscovery:
    class_id: int
    entries: list[RepresentativeEntry]
    sample_ids: list[str]
    latents: np.ndarray        # (IPC, D) in the original full-D space
    cluster_summary: dict


@dataclass
class DiscoveryResult:
    per_class: dict[int, ClassDiscovery] = field(default_factory=dict)

    def representative_set(self) -> EmbeddingSet:
        vectors, ids, labels = [], [], []
        for c in sorted(self.per_class):
            d = self.per_class[c]
            vectors.append(d.latents)
            ids.extend(d.sample_ids)
            labels.extend([c] * len(d.sample_ids))
        return make_embedding_set(np.vstack(vectors), ids, labels)

    def manifest(self, config: RunConfig) -> dict:
        per_class = {}
        for c in sorted(self.per_class):
            d = self.per_class[c]
            per_class[str(c)] = {
                "ipc": len(d.entries),
                "entries": [
                    {
                        "sample_id": sid,
                        "row": e.row,
                        "provenance": e.provenance.value,
                        "cluster_size": e.source_cluster_size,
                    }
                    for sid, e in zip(d.sample_ids, d.entries)
                ],
                "provenance_fractions": provenance_fractions(d.entries),
                "clusters": d.cluster_summary,
            }
        return {"classes": per_class, "config": config.echo()}


def discover(emb: EmbeddingSet, config: RunConfig) -> DiscoveryResult:
    """Per-class reduction, clustering, and IPC matching.

    Clustering decisions use the (optionally reduced) space; the stored
    representative latents always come from the original full-D vectors
    since reduced coordinates cannot be inverted for guidance.
    """
    result = DiscoveryResult()
    for class_id in emb.classes:
        view = group_by_class(emb, class_id)
        X_full = view.vectors.astype(np.float64)
        Z = X_full
        if config.preprocess == "pca" and config.reduce_dim < X_full.shape[1]:
            reducer = fit_pca(X_full, min(config.reduce_dim, X_full.shape[0]))
            Z = transform(reducer, X_full)
        cluster = hdbscan(Z, config.min_cluster_size, config.min_samples)
        entries = match_ipc(
            Z,
            cluster,
            config.ipc,
            config.min_cluster_size,
            config.min_samples,
            rng_for(config.seed, STAGE_DISCOVER, class_id),
        )
        rows = [e.row for e in entries]
        result.per_class[class_id] = ClassDiscovery(
            class_id,
            entries,
            [view.sample_ids[r] for r in rows],
            X_full[rows],
            cluster_report(cluster),
        )
    return result


@dataclass
class AlignmentResult:
    per_class: dict[int, GuidedSampleSet] = field(default_factory=dict)

    def sample_set(self) -> EmbeddingSet:
        vectors, ids, labels = [], [], []
        for c in sorted(self.per_class):
            s = self.per_class[c]
            vectors.append(s.samples)
            ids.extend(f"gen_c{c}_j{j}" for j in range(s.samples.shape[0]))
            labels.extend([c] * s.samples.shape[0])
        return make_embedding_set(np.vstack(vectors), ids, labels)

    def manifest(self, config: RunConfig) -> dict:
        per_class = {}
        for c in sorted(self.per_class):
            s = self.per_class[c]
            per_class[str(c)] = [
                {
                    "j": t.guide_index,
                    "checksum": t.checksum,
                    "diverged": t.diverged,
                    "max_norm": t.max_norm,
                    "final_guidance_norm": t.steps[-1].guidance_norm if t.steps else None,
                    "max_interp_deviation": max(
                        (st.interp_deviation for st in t.steps), default=0.0
                    ),
                }
                for t in s.trajectories
            ]
        return {"classes": per_class, "config": config.echo()}


def align(emb: EmbeddingSet, discovery: DiscoveryResult, config: RunConfig) -> AlignmentResult:
    """Guided generation: one trajectory per representative, per class."""
    by_class = {
        c: group_by_class(emb, c).vectors.astype(np.float64) for c in emb.classes
    }
    model = fit_score_model(
        by_class, config.score_components, rng_for(config.seed, STAGE_SCORE_MODEL)
    )
    schedule = make_schedule(config.steps, "linear-beta")
    guidance = GuidanceConfig(config.gamma, config.pis, config.cfg_scale, config.seed)
    result = AlignmentResult()
    for class_id in sorted(discovery.per_class):
        prototypes = discovery.per_class[class_id].latents

        def rng_factory(j: int, _c=class_id):
            return rng_for(config.seed, STAGE_ALIGN, _c, j)

        result.per_class[class_id] = generate_class_set(
            model, class_id, prototypes, guidance, schedule, rng_factory
        )
    return result


def evaluate_sets(
    train: EmbeddingSet,
    test: EmbeddingSet,
    config: RunConfig,
    provenance: dict[str, float] | None = None,
) -> EvalReport:
    """Proxy accuracy of train-on-selected / test-on-held-out, plus mean per-class Fréchet."""
    clf = fit_proxy(train.vectors, train.labels, kind="nearest-centroid")
    report = evaluate(clf, test.vectors, test.labels)
    shared = sorted(set(train.classes) & set(test.classes))
    fds = []
    for c in shared:
        a = group_by_class(train, c).vectors
        b = group_by_class(test, c).vectors
        if a.shape[0] >= 2 and b.shape[0] >= 2:
            fds.append(frechet_distance(a, b))
    report.frechet = float(np.mean(fds)) if fds else None
    report.provenance = provenance
    report.config_echo = config.echo()
    return report


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def run_pipeline(config: RunConfig) -> EvalReport:
    """Full run; writes all artifacts under config.out_dir and returns the report."""
    config.validate()
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    test_emb = None
    if config.bench is not None:
        bench = make_benchmark(config.bench, config.seed)
        emb, test_emb = bench.train, bench.test
        save_embeddings(emb, out / "benchmark.bin")
        _write_json(out / "benchmark.manifest.json", bench.manifest())
        if test_emb is not None:
            save_embeddings(test_emb, out / "test.bin")
    else:
        emb = load_embeddings(config.embeddings, config.format, config.labels)
        if config.test_embeddings:
            test_emb = load_embeddings(
                config.test_embeddings, config.format, config.test_labels
            )

    discovery = discover(emb, config)
    save_embeddings(discovery.representative_set(), out / "discovery" / "repset.bin")
    _write_json(out / "discovery" / "repset.json", discovery.manifest(config))

    alignment = align(emb, discovery, config)
    generated = alignment.sample_set()
    save_embeddings(generated, out / "alignment" / "samples.bin")
    _write_json(out / "alignment" / "manifest.json", alignment.manifest(config))

    all_entries = [e for d in discovery.per_class.values() for e in d.entries]
    report = evaluate_sets(
        generated, test_emb if test_emb is not None else emb, config,
        provenance=provenance_fractions(all_entries),
    )
    _write_json(out / "eval" / "report.json", report.to_json())
    return report


def grid_report_rows(grid_dir: Path) -> list[dict]:
    """Collect (min_cluster_size, accuracy, provenance fractions) across run dirs."""
    rows = []
    for sub in sorted(Path(grid_dir).iterdir()):
        manifest_path = sub / "discovery" / "repset.json"
        if not manifest_path.exists():
            continue
        manifest = json.loads(manifest_path.read_text())
        fractions = _mean_fractions(manifest)
        accuracy = None
        eval_path = sub / "eval" / "report.json"
        if eval_path.exists():
            accuracy = json.loads(eval_path.read_text()).get("accuracy")
        rows.append(
            {
                "min_cluster_size": manifest["config"]["min_cluster_size"],
                "accuracy": accuracy,
                **fractions,
            }
        )
    rows.sort(key=lambda r: r["min_cluster_size"])
    return rows


def _mean_fractions(manifest: dict) -> dict[str, float]:
    keys = ["InitCluster", "Split", "Outlier", "ForcedSplit"]
    per_class = [c["provenance_fractions"] for c in manifest["classes"].values()]
    return {k: float(np.mean([p[k] for p in per_class])) for k in keys}


def write_grid_csv(rows: list[dict], path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fields = ["min_cluster_size", "accuracy", "InitCluster", "Split", "Outlier", "ForcedSplit"]
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k) for k in fields})
