"""Three-phase training, prediction, and evaluation orchestration.

Phase 1 trains the point encoder from scratch with cross-entropy over seen
classes through a throwaway linear head. Phase 2 fits the feature decoder
and tuning layer against the frozen encoder. Phase 3 trains the final
classifier on real seen features mixed with synthesized unseen features,
and the uncertainty head on the same batches with the evidential loss
(provenance supplies the seen flags: real rows are seen, synthetic rows
unseen).

All randomness in phase k flows from ``default_rng([seed, k])``. Given a
seed, a config and a dataset, every checkpoint byte is determined (per
kernel backend; see diffcore.special).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import diffcore as dc
from .benchgen import SceneSet
from .calibration import (calibrated_stack, cross_entropy, dynamic_eta,
                          estimate_u_bar, softmax_posterior)
from .checkpoint import load_checkpoint, save_checkpoint
from .diffcore.tape import Tape
from .evidential import EvidentialLossWeights, evidence_from_logits, loss_ev, uncertainty
from .metrics import ConfusionMatrix, segmentation_report, uncertainty_by_class
from .optim import build_optimizer, poly_lr
from .semantics import ClassCatalog, TuningLayer, scene_descriptor, tune
from .synthesis import Decoder, DecoderConfig, train_decoder


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 1
    epochs: int = 30
    batch_points: int = 256
    learning_rate: float = 0.02
    optimizer: str = "adam"
    lambda_dl: float = 0.005
    lambda_bl: float = 0.1
    bl_orientation: str = "textual-intent"
    poly_power: float = 0.9
    synth_fraction: float = 0.5
    synth_seen_fraction: float = 0.2
    feature_dim: int = 32
    encoder_hidden: tuple[int, ...] = (64,)
    semantic_tuning: bool = True
    decoder: DecoderConfig = field(default_factory=DecoderConfig)

    def __post_init__(self):
        if self.batch_points < 1:
            raise ValueError("batch_points must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.lambda_dl < 0 or self.lambda_bl < 0:
            raise ValueError("loss weights must be >= 0")
        if not 0.0 <= self.synth_fraction <= 1.0:
            raise ValueError("synth_fraction must lie in [0, 1]")
        if self.synth_seen_fraction < 0.0 or self.synth_fraction + self.synth_seen_fraction > 1.0:
            raise ValueError("synth_seen_fraction must be >= 0 with synth fractions summing <= 1")
        if self.optimizer not in ("adam", "sgd-momentum"):
            raise ValueError("optimizer must be 'adam' or 'sgd-momentum'")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        data = dict(data)
        if "decoder" in data and isinstance(data["decoder"], dict):
            dec = dict(data["decoder"])
            for key in ("hidden", "bandwidths"):
                if key in dec:
                    dec[key] = tuple(dec[key])
            data["decoder"] = DecoderConfig(**dec)
        if "encoder_hidden" in data:
            data["encoder_hidden"] = tuple(data["encoder_hidden"])
        return cls(**data)

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()

    def weights(self) -> EvidentialLossWeights:
        return EvidentialLossWeights(self.lambda_dl, self.lambda_bl, self.bl_orientation)


def _phase_rng(seed: int, phase: int, stream: int = 0) -> np.random.Generator:
    """Deterministic split rule: one stream per (seed, phase, purpose).

    Stream 0 initializes parameters, stream 1 drives the training loop.
    """
    return np.random.default_rng([seed, phase, stream])


@dataclass
class GzslModel:
    """All trained parameters plus the catalog they were trained against."""

    catalog: ClassCatalog
    config: TrainConfig
    encoder: dc.MLP
    decoder: Decoder
    tuning: TuningLayer
    classifier: dc.Affine
    uncertainty_head: dc.Affine

    def encode(self, points: np.ndarray) -> np.ndarray:
        return self.encoder(np.asarray(points, dtype=np.float64)).data

    def named_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for prefix, net in (("encoder", self.encoder), ("decoder", self.decoder.net)):
            for i, layer in enumerate(net.layers):
                out[f"{prefix}.{i}.weight"] = layer.weight.data
                out[f"{prefix}.{i}.bias"] = layer.bias.data
        out["tuning.weight"] = self.tuning.weight.data
        out["tuning.bias"] = self.tuning.bias.data
        out["classifier.weight"] = self.classifier.weight.data
        out["classifier.bias"] = self.classifier.bias.data
        out["uncertainty.weight"] = self.uncertainty_head.weight.data
        out["uncertainty.bias"] = self.uncertainty_head.bias.data
        return out

    def params_checksum(self, prefixes=("encoder", "decoder", "tuning")) -> str:
        h = hashlib.sha256()
        for name, arr in sorted(self.named_arrays().items()):
            if name.split(".")[0] in prefixes:
                h.update(name.encode())
                h.update(arr.tobytes())
        return h.hexdigest()


def build_model(catalog: ClassCatalog, config: TrainConfig, point_dims: int) -> GzslModel:
    """Fresh model with per-phase deterministic initialization."""
    enc = dc.MLP([point_dims, *config.encoder_hidden, config.feature_dim],
                 _phase_rng(config.seed, 1))
    dec_rng = _phase_rng(config.seed, 2)
    decoder = Decoder(config.decoder.noise_dim, catalog.embedding_dim, config.feature_dim,
                      config.decoder.hidden, dec_rng)
    tuning = TuningLayer(catalog.n_classes, catalog.embedding_dim, dec_rng)
    head_rng = _phase_rng(config.seed, 3)
    classifier = dc.Affine(config.feature_dim, catalog.n_classes, head_rng)
    u_head = dc.Affine(config.feature_dim, catalog.n_seen, head_rng)
    return GzslModel(catalog, config, enc, decoder, tuning, classifier, u_head)


def _check_finite_loss(value: float, phase: int, epoch: int, step: int) -> None:
    if not np.isfinite(value):
        raise FloatingPointError(f"phase {phase} loss diverged at epoch {epoch}, step {step}")


def phase1_train_encoder(model: GzslModel, train: SceneSet, epochs: int | None = None):
    """Cross-entropy training of the encoder via a throwaway seen-class head.

    Returns (head, history); the head is kept only for inspection and is
    not part of the final model.
    """
    cfg = model.config
    epochs = cfg.epochs if epochs is None else epochs
    rng = _phase_rng(cfg.seed, 1, stream=1)
    catalog = model.catalog
    head = dc.Affine(cfg.feature_dim, catalog.n_seen, rng)
    seen_pos = catalog.seen_position()

    points, labels = train.stacked()
    targets = seen_pos[labels]
    if (targets < 0).any():
        raise ValueError("phase 1 requires a dataset with only seen labels")

    params = model.encoder.params + head.params
    opt = build_optimizer(cfg.optimizer, params)
    steps_per_epoch = max(1, points.shape[0] // cfg.batch_points)
    total_steps = max(1, epochs * steps_per_epoch)
    history = []
    step = 0
    for epoch in range(epochs):
        order = rng.permutation(points.shape[0])
        epoch_loss = 0.0
        correct = 0
        counted = 0
        for b in range(steps_per_epoch):
            idx = order[b * cfg.batch_points:(b + 1) * cfg.batch_points]
            x, y = points[idx], targets[idx]
            with Tape() as tape:
                logits = head(model.encoder(x))
                loss = cross_entropy(softmax_posterior(logits), y)
                tape.backward(loss)
            _check_finite_loss(loss.item(), 1, epoch, step)
            opt.step(poly_lr(cfg.learning_rate, step, total_steps, cfg.poly_power))
            opt.zero_grad()
            epoch_loss += loss.item()
            correct += int((np.argmax(logits.data, axis=1) == y).sum())
            counted += y.size
            step += 1
        history.append({"phase": 1, "epoch": epoch,
                        "loss": epoch_loss / steps_per_epoch,
                        "accuracy": correct / max(counted, 1)})
    return head, history


def phase2_train_decoder(model: GzslModel, train: SceneSet, epochs: int | None = None):
    """Fit decoder and tuning layer against the frozen encoder."""
    cfg = model.config
    epochs = cfg.epochs if epochs is None else epochs
    rng = _phase_rng(cfg.seed, 2, stream=1)
    _, _, history = train_decoder(
        model.encode, train.scenes, model.catalog, cfg.decoder,
        feature_dim=cfg.feature_dim, epochs=epochs, batch_points=cfg.batch_points,
        lr=cfg.learning_rate, optimizer=cfg.optimizer, poly_power=cfg.poly_power,
        rng=rng, use_tuning=cfg.semantic_tuning, decoder=model.decoder,
        tuning=model.tuning)
    return history


def synthesize_classes(model: GzslModel, present_ids, class_ids: np.ndarray,
                       rng: np.random.Generator) -> np.ndarray:
    """Detached synthetic features for the given global class ids.

    Builds one descriptor marking the scene's classes plus everything being
    synthesized and runs the frozen decoder on it.
    """
    catalog = model.catalog
    class_ids = np.asarray(class_ids, dtype=np.int64)
    descriptor = scene_descriptor(
        sorted(set(int(c) for c in present_ids) | set(class_ids.tolist())),
        catalog.n_classes)
    embeddings = catalog.embedding_matrix()
    z = rng.random((class_ids.size, model.decoder.noise_dim))
    if model.config.semantic_tuning:
        fused = tune(embeddings[class_ids], descriptor, model.tuning).data
    else:
        fused = embeddings[class_ids]
    return model.decoder(z, fused).data


def synthesize_unseen(model: GzslModel, present_ids, count: int,
                      rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Synthetic features for ``count`` uniformly drawn unseen classes."""
    unseen_ids = model.catalog.unseen_ids
    chosen = unseen_ids[rng.integers(unseen_ids.size, size=count)]
    return synthesize_classes(model, present_ids, chosen, rng), chosen


def phase3_train_classifier(model: GzslModel, train: SceneSet, epochs: int | None = None):
    """Train classifier C and uncertainty head U on real + synthetic batches.

    The encoder, decoder and tuning layer are frozen; a checksum before and
    after guards against accidental mutation.
    """
    cfg = model.config
    epochs = cfg.epochs if epochs is None else epochs
    rng = _phase_rng(cfg.seed, 3, stream=1)
    catalog = model.catalog
    seen_pos = catalog.seen_position()
    weights = cfg.weights()
    frozen_before = model.params_checksum()

    n_synth_unseen = int(round(cfg.batch_points * cfg.synth_fraction))
    n_synth_seen = int(round(cfg.batch_points * cfg.synth_seen_fraction))
    n_real = max(1, cfg.batch_points - n_synth_unseen - n_synth_seen)

    opt_c = build_optimizer(cfg.optimizer, model.classifier.params)
    opt_u = build_optimizer(cfg.optimizer, model.uncertainty_head.params)
    total_steps = max(1, epochs * len(train.scenes))
    history = []
    step = 0
    for epoch in range(epochs):
        order = rng.permutation(len(train.scenes))
        sums = {"ce": 0.0, "ev": 0.0, "sl": 0.0, "dl": 0.0, "bl": 0.0}
        for scene_index in order:
            points, labels = train.scenes[scene_index]
            idx = rng.choice(points.shape[0], size=min(n_real, points.shape[0]), replace=False)
            real_feats = model.encode(points[idx])
            real_labels = labels[idx]
            present = np.unique(labels)
            feat_blocks, label_blocks, flag_blocks = [real_feats], [real_labels], \
                [np.ones(real_labels.size, dtype=bool)]
            if n_synth_seen > 0:
                # synthetic seen rows keep U from keying on synthetic-vs-real
                # artifacts instead of the class semantics
                seen_choice = present[rng.integers(present.size, size=n_synth_seen)]
                feat_blocks.append(synthesize_classes(model, present, seen_choice, rng))
                label_blocks.append(seen_choice)
                flag_blocks.append(np.ones(seen_choice.size, dtype=bool))
            if n_synth_unseen > 0:
                synth_feats, synth_labels = synthesize_unseen(model, present,
                                                              n_synth_unseen, rng)
                feat_blocks.append(synth_feats)
                label_blocks.append(synth_labels)
                flag_blocks.append(np.zeros(synth_labels.size, dtype=bool))
            feats = np.concatenate(feat_blocks)
            global_labels = np.concatenate(label_blocks)
            seen_flags = np.concatenate(flag_blocks)

            lr = poly_lr(cfg.learning_rate, step, total_steps, cfg.poly_power)

            with Tape() as tape:
                logits_c = model.classifier(feats)
                ce = cross_entropy(softmax_posterior(logits_c), global_labels)
                tape.backward(ce)
            _check_finite_loss(ce.item(), 3, epoch, step)
            opt_c.step(lr)
            opt_c.zero_grad()

            u_labels = np.where(seen_flags, seen_pos[global_labels], -1)
            with Tape() as tape:
                alpha = evidence_from_logits(model.uncertainty_head(feats))
                ev, parts = loss_ev(alpha, u_labels, seen_flags, weights)
                tape.backward(ev)
            _check_finite_loss(ev.item(), 3, epoch, step)
            opt_u.step(lr)
            opt_u.zero_grad()

            sums["ce"] += ce.item()
            sums["ev"] += parts["total"]
            sums["sl"] += parts["sl"]
            sums["dl"] += parts["dl"]
            sums["bl"] += parts["bl"]
            step += 1
        history.append({"phase": 3, "epoch": epoch,
                        **{k: v / len(train.scenes) for k, v in sums.items()}})
    if model.params_checksum() != frozen_before:
        raise RuntimeError("phase 3 mutated frozen encoder/decoder/tuning parameters")
    return history


@dataclass
class PredictionSet:
    """Per-point evaluation outputs, concatenated across scenes."""

    p: np.ndarray
    u: np.ndarray
    gt: np.ndarray
    scene_ids: np.ndarray


def predict(model: GzslModel, scenes: SceneSet) -> PredictionSet:
    ps, us, gts, sids = [], [], [], []
    for i, (points, labels) in enumerate(scenes.scenes):
        feats = model.encode(points)
        p = softmax_posterior(model.classifier(feats).data)
        alpha = evidence_from_logits(model.uncertainty_head(feats).data)
        ps.append(p)
        us.append(uncertainty(alpha))
        gts.append(labels)
        sids.append(np.full(labels.size, i))
    return PredictionSet(np.concatenate(ps), np.concatenate(us),
                         np.concatenate(gts), np.concatenate(sids))


def evaluate(model: GzslModel, scenes: SceneSet, calibration: str = "dynamic",
             static_eta: float = 0.0, u_bar_scope: str = "dataset") -> dict:
    """Full evaluation under a calibration mode: none | static | dynamic.

    Dynamic mode estimates u_bar in a pre-pass over the whole evaluation
    set (or per scene with ``u_bar_scope='scene'``), then applies the
    per-point factor clamp(u - u_bar, 0, 1).
    """
    if calibration not in ("none", "static", "dynamic"):
        raise ValueError("calibration must be none, static or dynamic")
    pred = predict(model, scenes)
    catalog = model.catalog
    mask = catalog.seen_class_mask
    if calibration == "none":
        eta = 0.0
        u_bar = None
    elif calibration == "static":
        eta = float(static_eta)
        u_bar = None
    else:
        if u_bar_scope == "dataset":
            u_bar = estimate_u_bar(pred.p, pred.u, mask)
            eta = dynamic_eta(pred.u, u_bar)
        elif u_bar_scope == "scene":
            eta = np.empty_like(pred.u)
            scene_bars = []
            for i in np.unique(pred.scene_ids):
                sel = pred.scene_ids == i
                bar = estimate_u_bar(pred.p[sel], pred.u[sel], mask)
                scene_bars.append(bar)
                eta[sel] = dynamic_eta(pred.u[sel], bar)
            u_bar = float(np.mean(scene_bars))
        else:
            raise ValueError("u_bar_scope must be 'dataset' or 'scene'")
    _, preds = calibrated_stack(pred.p, eta, mask)
    cm = ConfusionMatrix.from_predictions(pred.gt, preds, catalog.n_classes)
    report = segmentation_report(cm, catalog.seen_ids, catalog.unseen_ids)
    per_class_iou = report.pop("per_class_iou")
    seen_gt = mask[pred.gt]
    report.update({
        "calibration": calibration,
        "static_eta": float(static_eta) if calibration == "static" else None,
        "u_bar": None if u_bar is None else float(u_bar),
        "mean_eta": float(np.mean(eta)) if calibration != "none" else 0.0,
        "mean_u_seen": float(pred.u[seen_gt].mean()) if seen_gt.any() else None,
        "mean_u_unseen": float(pred.u[~seen_gt].mean()) if (~seen_gt).any() else None,
        "points": int(pred.gt.size),
        "per_class_iou": {str(k): v for k, v in sorted(per_class_iou.items())},
        "uncertainty_by_class": {str(k): v for k, v in
                                 sorted(uncertainty_by_class(pred.u, pred.gt, catalog.n_classes).items())},
        "confusion_matrix": cm.counts.tolist(),
    })
    return report


def save_model(model: GzslModel, path, phase: int, extra_meta: dict | None = None) -> None:
    meta = {
        "phase": phase,
        "config": model.config.to_dict(),
        "config_hash": model.config.config_hash(),
        "dims": {
            "point_dims": model.encoder.layers[0].weight.data.shape[0],
            "feature_dim": model.config.feature_dim,
            "n_classes": model.catalog.n_classes,
            "n_seen": model.catalog.n_seen,
            "embedding_dim": model.catalog.embedding_dim,
        },
    }
    if extra_meta:
        meta.update(extra_meta)
    save_checkpoint(path, model.named_arrays(), meta)


def load_model(path, catalog: ClassCatalog) -> tuple[GzslModel, dict]:
    arrays, meta = load_checkpoint(path)
    config = TrainConfig.from_dict(meta["config"])
    point_dims = int(meta["dims"]["point_dims"])
    model = build_model(catalog, config, point_dims)
    expected = model.named_arrays()
    if set(expected) != set(arrays):
        raise ValueError(f"{path}: checkpoint parameter names do not match the model")
    for prefix, net in (("encoder", model.encoder), ("decoder", model.decoder.net)):
        for i, layer in enumerate(net.layers):
            layer.weight.data[...] = arrays[f"{prefix}.{i}.weight"]
            layer.bias.data[...] = arrays[f"{prefix}.{i}.bias"]
    model.tuning.weight.data[...] = arrays["tuning.weight"]
    model.tuning.bias.data[...] = arrays["tuning.bias"]
    model.classifier.weight.data[...] = arrays["classifier.weight"]
    model.classifier.bias.data[...] = arrays["classifier.bias"]
    model.uncertainty_head.weight.data[...] = arrays["uncertainty.weight"]
    model.uncertainty_head.bias.data[...] = arrays["uncertainty.bias"]
    return model, meta
