"""Synthetic GZSL point-scene benchmark with controllable structure.

Every class is a Gaussian cluster in R^3 (optionally with a color triple).
Scenes draw a subset of classes; training scenes contain only seen classes
(the inductive guarantee), evaluation scenes mix seen and unseen. Each
scene is rigidly shifted by a composition-dependent offset (the mean of
fixed per-class displacement vectors over the classes present, scaled by
``context_scale``), so feature distributions genuinely depend on scene
composition and a scene-conditioned decoder has signal to exploit.

Class embeddings carry the cluster mean and per-axis spread as their six
leading components, so semantic-to-geometric transfer is learnable; the
trailing components are constructed so each unseen embedding has cosine
similarity exactly ``relatedness`` to its designated seen relative.

Dataset layout: spec.json, classes.json (the semantics embedding format),
train.jsonl and eval.jsonl with one scene per line:
{"scene_id": str, "points": [[x,y,z(,r,g,b)], ...], "labels": [int, ...]}.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .semantics import ClassCatalog, ClassInfo, save_embeddings

GEOMETRY_DIMS = 6  # cluster mean (3) + per-axis spread (3)


@dataclass(frozen=True)
class BenchSpec:
    n_seen: int = 6
    n_unseen: int = 2
    points_per_scene: int = 512
    train_scenes: int = 40
    eval_scenes: int = 10
    cluster_std: float = 0.6
    embedding_dim: int = 16
    relatedness: float = 0.8
    seed: int = 1
    with_color: bool = False
    context_scale: float = 1.5
    mean_scale: float = 3.0

    def __post_init__(self):
        if self.n_seen < 2:
            raise ValueError("need at least two seen classes")
        if self.n_unseen < 1:
            raise ValueError("need at least one unseen class")
        if not 0.0 <= self.relatedness <= 1.0:
            raise ValueError("relatedness must lie in [0, 1]")
        if self.embedding_dim < GEOMETRY_DIMS + 2:
            raise ValueError(
                f"embedding_dim must be >= {GEOMETRY_DIMS + 2} to control the cosine structure")
        if self.points_per_scene < self.n_seen + self.n_unseen:
            raise ValueError("points_per_scene too small for the class count")

    @property
    def n_classes(self) -> int:
        return self.n_seen + self.n_unseen

    @property
    def point_dims(self) -> int:
        return 6 if self.with_color else 3


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


TRAIL_FRACTION = 0.5  # trailing-block energy relative to the geometry block
RELATIVE_DISPLACEMENT = 1.0  # unseen-to-relative distance in units of (1-rho)*mean_scale


def _unseen_trailing(leading_u: np.ndarray, relative: np.ndarray, rho: float,
                     rng: np.random.Generator) -> np.ndarray:
    """Trailing block giving cos(e_u, e_rel) == rho with the leading part fixed.

    With trailing budget s, the block is beta * that_rel + gamma * w for a
    random w orthogonal to the relative's trailing block; beta solves the
    cosine equation exactly and gamma fills the remaining energy.
    """
    lead_r, trail_r = relative[:GEOMETRY_DIMS], relative[GEOMETRY_DIMS:]
    c0 = float(leading_u @ lead_r)
    t_r = float(np.linalg.norm(trail_r))
    r_r = float(np.linalg.norm(relative))
    s = TRAIL_FRACTION * float(np.linalg.norm(leading_u))
    norm_u = np.sqrt(float(leading_u @ leading_u) + s * s)
    beta = (rho * norm_u * r_r - c0) / t_r
    if abs(beta) > s * (1.0 + 1e-9):
        raise ValueError(
            f"relatedness {rho} infeasible for this geometry/embedding_dim combination")
    gamma = np.sqrt(max(s * s - beta * beta, 0.0))
    w = rng.normal(size=trail_r.size)
    w -= (w @ _unit(trail_r)) * _unit(trail_r)
    return beta * _unit(trail_r) + gamma * _unit(w)


def _build_classes(spec: BenchSpec, rng: np.random.Generator):
    """Cluster geometry, embeddings, per-class context displacements.

    The geometry block dominates each embedding (the trailing block carries
    half its energy), so the semantic-to-feature map rests mostly on
    components that transfer across classes. An unseen cluster sits at a
    displacement shrinking with relatedness from its relative, and its
    trailing block is solved so the full-embedding cosine to the relative
    equals relatedness exactly.
    """
    means = rng.normal(scale=spec.mean_scale, size=(spec.n_classes, 3))
    stds = spec.cluster_std * (0.75 + 0.5 * rng.random((spec.n_classes, 3)))
    colors = rng.random((spec.n_classes, 3))
    context = rng.normal(size=(spec.n_classes, 3))
    trail_dim = spec.embedding_dim - GEOMETRY_DIMS
    embeddings = np.zeros((spec.n_classes, spec.embedding_dim))

    for c in range(spec.n_seen):
        lead = np.concatenate([means[c], stds[c]])
        embeddings[c, :GEOMETRY_DIMS] = lead
        embeddings[c, GEOMETRY_DIMS:] = (
            _unit(rng.normal(size=trail_dim)) * TRAIL_FRACTION * np.linalg.norm(lead))

    relatives = {}
    rho = spec.relatedness
    for j in range(spec.n_unseen):
        uid = spec.n_seen + j
        rel = int(rng.integers(spec.n_seen))
        relatives[uid] = rel
        direction = _unit(rng.normal(size=3))
        means[uid] = means[rel] + RELATIVE_DISPLACEMENT * (1.0 - rho) * spec.mean_scale * direction
        stds[uid] = stds[rel] * (1.0 + (1.0 - rho) * (rng.random(3) - 0.5))
        lead = np.concatenate([means[uid], stds[uid]])
        embeddings[uid, :GEOMETRY_DIMS] = lead
        embeddings[uid, GEOMETRY_DIMS:] = _unseen_trailing(
            lead, embeddings[rel], rho, rng)
    return means, stds, colors, context, relatives, embeddings


def _sample_scene(spec: BenchSpec, rng: np.random.Generator, class_ids: np.ndarray,
                  means, stds, colors, context):
    labels = class_ids[rng.integers(len(class_ids), size=spec.points_per_scene)]
    # every selected class keeps at least one point
    labels[: len(class_ids)] = class_ids
    labels = labels[rng.permutation(spec.points_per_scene)]
    offset = spec.context_scale * context[class_ids].mean(axis=0)
    coords = means[labels] + offset + stds[labels] * rng.normal(size=(labels.size, 3))
    if spec.with_color:
        color = np.clip(colors[labels] + 0.08 * rng.normal(size=(labels.size, 3)), 0.0, 1.0)
        points = np.concatenate([coords, color], axis=1)
    else:
        points = coords
    return points, labels


def _scene_class_choice(rng: np.random.Generator, pool: np.ndarray, minimum: int,
                        required: list[int]) -> np.ndarray:
    k = int(rng.integers(minimum, len(pool) + 1))
    chosen = set(required)
    order = rng.permutation(pool)
    for cid in order:
        if len(chosen) >= max(k, len(required)):
            break
        chosen.add(int(cid))
    return np.array(sorted(chosen), dtype=np.int64)


def generate(spec: BenchSpec, out_dir) -> ClassCatalog:
    """Write a complete dataset to ``out_dir`` and return its catalog.

    A pure function of (spec, seed): identical specs produce byte-identical
    files. Training scenes draw classes from the seen pool only; every
    seen class is forced into at least one training scene and every class
    into at least one evaluation scene.
    """
    rng = np.random.default_rng(spec.seed)
    means, stds, colors, context, relatives, embeddings = _build_classes(spec, rng)

    classes = []
    for c in range(spec.n_classes):
        seen = c < spec.n_seen
        name = f"seen_{c}" if seen else f"unseen_{c - spec.n_seen}"
        classes.append(ClassInfo(name=name, id=c, seen=seen, embedding=embeddings[c]))
    catalog = ClassCatalog(classes)

    os.makedirs(out_dir, exist_ok=True)
    seen_pool = np.arange(spec.n_seen)
    unseen_pool = np.arange(spec.n_seen, spec.n_classes)

    def write_scenes(path, count, split):
        with open(path, "w", encoding="utf-8") as f:
            for i in range(count):
                if split == "train":
                    required = [int(seen_pool[i % spec.n_seen])]
                    class_ids = _scene_class_choice(rng, seen_pool, 3, required)
                else:
                    required = [int(seen_pool[i % spec.n_seen]),
                                int(unseen_pool[i % spec.n_unseen])]
                    class_ids = _scene_class_choice(
                        rng, np.concatenate([seen_pool, unseen_pool]), 4, required)
                points, labels = _sample_scene(spec, rng, class_ids, means, stds,
                                               colors, context)
                record = {
                    "scene_id": f"{split}-{i:03d}",
                    "points": [[float(v) for v in row] for row in points],
                    "labels": [int(v) for v in labels],
                }
                f.write(json.dumps(record, separators=(",", ":")))
                f.write("\n")

    write_scenes(os.path.join(out_dir, "train.jsonl"), spec.train_scenes, "train")
    write_scenes(os.path.join(out_dir, "eval.jsonl"), spec.eval_scenes, "eval")

    save_embeddings(catalog, os.path.join(out_dir, "classes.json"))
    meta = {
        "spec": asdict(spec),
        "relatives": {catalog.classes[u].name: catalog.classes[r].name
                      for u, r in sorted(relatives.items())},
        "class_names": [c.name for c in catalog.classes],
    }
    with open(os.path.join(out_dir, "spec.json"), "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=1, sort_keys=True)
        f.write("\n")
    return catalog


@dataclass
class SceneSet:
    """One split: parallel lists of point arrays and label arrays."""

    scenes: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)

    def __len__(self):
        return len(self.scenes)

    def __getitem__(self, i):
        return self.scenes[i]

    @property
    def total_points(self) -> int:
        return int(sum(lbl.size for _, lbl in self.scenes))

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        pts = np.concatenate([p for p, _ in self.scenes])
        lbl = np.concatenate([l for _, l in self.scenes])
        return pts, lbl


@dataclass
class Dataset:
    catalog: ClassCatalog
    train: SceneSet
    eval: SceneSet
    meta: dict


def _read_scenes(path) -> SceneSet:
    scenes = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f):
            if not line.strip():
                continue
            record = json.loads(line)
            points = np.asarray(record["points"], dtype=np.float64)
            labels = np.asarray(record["labels"], dtype=np.int64)
            if points.ndim != 2 or points.shape[0] != labels.shape[0]:
                raise ValueError(f"{path}:{line_no + 1}: points/labels shape mismatch")
            scenes.append((points, labels))
    return SceneSet(scenes)


def load_dataset(data_dir) -> Dataset:
    from .semantics import load_embeddings

    catalog = load_embeddings(os.path.join(data_dir, "classes.json"))
    with open(os.path.join(data_dir, "spec.json"), encoding="utf-8") as f:
        meta = json.load(f)
    return Dataset(
        catalog=catalog,
        train=_read_scenes(os.path.join(data_dir, "train.jsonl")),
        eval=_read_scenes(os.path.join(data_dir, "eval.jsonl")),
        meta=meta,
    )


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate(data_dir, cosine_tolerance: float = 0.05) -> ValidationReport:
    """Structural checks on a generated dataset directory.

    Checks: training labels stay inside the seen set, label ids are dense,
    every class has evaluation points, point dimensionality is consistent,
    and each unseen embedding's cosine to its recorded relative is within
    ``cosine_tolerance`` of the spec's relatedness.
    """
    report = ValidationReport()
    try:
        ds = load_dataset(data_dir)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        report.violations.append(f"unreadable-dataset: {exc}")
        return report

    catalog, meta = ds.catalog, ds.meta
    seen_ids = set(int(i) for i in catalog.seen_ids)
    n_classes = catalog.n_classes

    train_labels = np.concatenate([l for _, l in ds.train.scenes]) if len(ds.train) else np.empty(0, np.int64)
    eval_labels = np.concatenate([l for _, l in ds.eval.scenes]) if len(ds.eval) else np.empty(0, np.int64)

    bad_train = set(np.unique(train_labels).tolist()) - seen_ids
    if bad_train:
        report.violations.append(f"unseen-in-train: classes {sorted(bad_train)}")

    all_labels = np.concatenate([train_labels, eval_labels])
    if all_labels.size and (all_labels.min() < 0 or all_labels.max() >= n_classes):
        report.violations.append("label-out-of-range")

    eval_counts = np.bincount(eval_labels, minlength=n_classes)
    missing = np.flatnonzero(eval_counts == 0)
    if missing.size:
        report.violations.append(f"missing-eval-class: classes {missing.tolist()}")

    dims = {p.shape[1] for p, _ in ds.train.scenes} | {p.shape[1] for p, _ in ds.eval.scenes}
    if len(dims) > 1 or (dims and dims.pop() not in (3, 6)):
        report.violations.append("inconsistent-point-dims")

    rho = meta.get("spec", {}).get("relatedness")
    relatives = meta.get("relatives", {})
    if rho is None or not relatives:
        report.violations.append("missing-relatedness-metadata")
    else:
        by_name = {c.name: c for c in catalog.classes}
        for uname, rname in relatives.items():
            if uname not in by_name or rname not in by_name:
                report.violations.append(f"unknown-relative-pair: {uname}->{rname}")
                continue
            eu, er = by_name[uname].embedding, by_name[rname].embedding
            cos = float(eu @ er / (np.linalg.norm(eu) * np.linalg.norm(er)))
            if abs(cos - rho) > cosine_tolerance:
                report.violations.append(
                    f"cosine-structure: {uname}->{rname} cos {cos:.4f} vs target {rho}")
    return report
