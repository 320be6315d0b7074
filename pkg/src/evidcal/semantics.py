"""Class catalogs, scene composition descriptors, and semantic tuning.

A catalog holds every class with its seen/unseen flag and description
embedding. The tuning layer turns a +-1 scene composition descriptor into a
bounded modulation vector s = tanh(W d + b); a class embedding t is fused as
t * s elementwise before conditioning the feature decoder.

Embedding files are JSON: {class_name: {"seen": bool, "vector": [floats]}}.
Extra keys per class are tolerated and ignored on load. Class ids are
assigned by file order and are dense in [0, n_classes).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from .diffcore.tape import Tensor


@dataclass(frozen=True)
class ClassInfo:
    name: str
    id: int
    seen: bool
    embedding: np.ndarray


@dataclass(frozen=True)
class ClassCatalog:
    classes: list[ClassInfo] = field(default_factory=list)

    def __post_init__(self):
        if not self.classes:
            raise ValueError("catalog must contain at least one class")
        ids = sorted(c.id for c in self.classes)
        if ids != list(range(len(self.classes))):
            raise ValueError("class ids must be dense in [0, n_classes)")
        names = [c.name for c in self.classes]
        if len(set(names)) != len(names):
            raise ValueError("duplicate class name in catalog")
        dims = {c.embedding.shape for c in self.classes}
        if len(dims) != 1 or self.classes[0].embedding.ndim != 1:
            raise ValueError(f"inconsistent embedding dimensions: {sorted(dims)}")

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def n_seen(self) -> int:
        return int(sum(c.seen for c in self.classes))

    @property
    def n_unseen(self) -> int:
        return self.n_classes - self.n_seen

    @property
    def embedding_dim(self) -> int:
        return self.classes[0].embedding.shape[0]

    @property
    def seen_ids(self) -> np.ndarray:
        return np.array(sorted(c.id for c in self.classes if c.seen), dtype=np.int64)

    @property
    def unseen_ids(self) -> np.ndarray:
        return np.array(sorted(c.id for c in self.classes if not c.seen), dtype=np.int64)

    @property
    def seen_class_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_classes, dtype=bool)
        mask[self.seen_ids] = True
        return mask

    def seen_position(self) -> np.ndarray:
        """Map global class id -> index into the seen-class ordering (-1 if unseen)."""
        pos = np.full(self.n_classes, -1, dtype=np.int64)
        for i, cid in enumerate(self.seen_ids):
            pos[cid] = i
        return pos

    def embedding_matrix(self) -> np.ndarray:
        ordered = sorted(self.classes, key=lambda c: c.id)
        return np.stack([c.embedding for c in ordered])

    def to_json_dict(self) -> dict:
        out = {}
        for c in sorted(self.classes, key=lambda c: c.id):
            out[c.name] = {"seen": bool(c.seen), "vector": [float(v) for v in c.embedding]}
        return out


def scene_descriptor(present_ids, n_classes: int) -> np.ndarray:
    """+1 at class ids present in the scene, -1 elsewhere."""
    desc = np.full(n_classes, -1.0)
    for cid in present_ids:
        if not 0 <= int(cid) < n_classes:
            raise IndexError(f"class id {cid} outside [0, {n_classes})")
        desc[int(cid)] = 1.0
    return desc


class TuningLayer:
    """Scene-conditioned modulation: s = tanh(weight @ descriptor + bias).

    Initialized with small random weights and bias 1.0 so the initial s is
    around tanh(1) componentwise; zero init would start every fused
    embedding at zero and erase the semantic signal.
    """

    def __init__(self, n_classes: int, embedding_dim: int, rng: np.random.Generator):
        self.weight = Tensor(rng.uniform(-0.05, 0.05, size=(n_classes, embedding_dim)))
        self.bias = Tensor(np.ones(embedding_dim))

    def modulation(self, descriptor: np.ndarray):
        """s for a batch of descriptors, shape (batch, embedding_dim)."""
        desc = np.atleast_2d(np.asarray(descriptor, dtype=np.float64))
        return dc.tanh(dc.affine(desc, self.weight, self.bias))

    @property
    def params(self) -> list[Tensor]:
        return [self.weight, self.bias]


def tune(embedding, descriptor, layer: TuningLayer):
    """Fused embeddings t * s for one descriptor; t has shape (k, N_t)."""
    emb = embedding if isinstance(embedding, Tensor) else np.atleast_2d(np.asarray(embedding, dtype=np.float64))
    emb_dim = emb.data.shape[-1] if isinstance(emb, Tensor) else emb.shape[-1]
    s = layer.modulation(descriptor)
    if emb_dim != s.data.shape[-1]:
        raise ValueError("embedding and tuning dimensions disagree")
    return emb * s


def load_embeddings(path) -> ClassCatalog:
    """Load a class catalog from an embedding JSON file."""
    with open(path, encoding="utf-8") as f:
        raw = json.load(f)
    if not isinstance(raw, dict) or not raw:
        raise ValueError(f"{path}: expected a nonempty JSON object")
    classes = []
    for i, (name, entry) in enumerate(raw.items()):
        if not isinstance(entry, dict) or "seen" not in entry or "vector" not in entry:
            raise ValueError(f"{path}: class {name!r} needs 'seen' and 'vector'")
        vec = np.asarray(entry["vector"], dtype=np.float64)
        if vec.ndim != 1 or vec.size == 0 or not np.isfinite(vec).all():
            raise ValueError(f"{path}: class {name!r} has a malformed vector")
        classes.append(ClassInfo(name=name, id=i, seen=bool(entry["seen"]), embedding=vec))
    return ClassCatalog(classes)


def save_embeddings(catalog: ClassCatalog, path, extra: dict | None = None) -> None:
    data = catalog.to_json_dict()
    if extra:
        for name, fields in extra.items():
            data[name].update(fields)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=1, sort_keys=False)
        f.write("\n")
