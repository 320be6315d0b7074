"""Synthetic feature generation for unseen classes.

The decoder is an MLP over [noise ; fused embedding] trained by moment
matching: a multi-kernel Gaussian MMD matches the synthetic feature
distribution to the real one per class, an InfoNCE term pulls synthetic
features toward real features of the same class and away from other
classes, and a prototype hinge keeps synthetic class means at least a
margin apart. The concrete loss forms are artifact choices; only their
roles (discrepancy / contrastive / prototype) are fixed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore.tape import Tape, Tensor, _data
from .optim import build_optimizer, poly_lr
from .semantics import ClassCatalog, TuningLayer, scene_descriptor, tune

log = logging.getLogger(__name__)

DEFAULT_BANDWIDTHS = (1.0, 2.0, 4.0, 8.0, 16.0)


@dataclass(frozen=True)
class DecoderConfig:
    noise_dim: int = 32
    hidden: tuple[int, ...] = (128, 128)
    bandwidths: tuple[float, ...] = DEFAULT_BANDWIDTHS
    temperature: float = 0.1
    margin: float = 1.0
    w_disc: float = 1.0
    w_con: float = 1.0
    w_proto: float = 1.0
    embedding_jitter: float = 0.1

    def __post_init__(self):
        if self.noise_dim < 1:
            raise ValueError("noise_dim must be >= 1")
        if not self.bandwidths or any(b <= 0 for b in self.bandwidths):
            raise ValueError("bandwidths must be positive")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.margin < 0:
            raise ValueError("margin must be >= 0")
        if self.embedding_jitter < 0:
            raise ValueError("embedding_jitter must be >= 0")


class Decoder:
    """MLP mapping [z ; t*s] to a feature vector."""

    def __init__(self, noise_dim: int, embedding_dim: int, feature_dim: int,
                 hidden: tuple[int, ...], rng: np.random.Generator):
        self.noise_dim = noise_dim
        self.embedding_dim = embedding_dim
        self.feature_dim = feature_dim
        self.net = dc.MLP([noise_dim + embedding_dim, *hidden, feature_dim], rng)

    def __call__(self, z, fused):
        if _data(z).shape[-1] != self.noise_dim or _data(fused).shape[-1] != self.embedding_dim:
            raise ValueError("decoder input dimensions disagree with its configuration")
        return self.net(dc.concat(z, fused, axis=1))

    @property
    def params(self) -> list[Tensor]:
        return self.net.params


def synthesize(decoder: Decoder, z_batch, fused_embeddings):
    """Features for a batch of noise vectors and fused embeddings."""
    return decoder(z_batch, fused_embeddings)


def _pairwise_sq(a, b):
    """All-pairs squared Euclidean distances, clamped at zero."""
    aa = dc.sum_(a * a, axis=1, keepdims=True)
    bb = dc.transpose(dc.sum_(b * b, axis=1, keepdims=True))
    cross = dc.matmul(a, dc.transpose(b))
    return dc.relu(aa + bb - 2.0 * cross)


def mmd2(real_feats, synth_feats, bandwidths=DEFAULT_BANDWIDTHS):
    """Biased squared MMD with Gaussian kernels summed over bandwidths.

    mean k(x,x') + mean k(y,y') - 2 mean k(x,y) with k = exp(-d^2/(2 s^2)).
    Symmetric in its two set arguments and >= 0 up to roundoff.
    """
    x, y = real_feats, synth_feats
    if _data(x).shape[0] == 0 or _data(y).shape[0] == 0:
        raise ValueError("mmd2 requires two nonempty sets")
    total = 0.0
    for a, b, sign in ((x, x, 1.0), (y, y, 1.0), (x, y, -2.0)):
        d2 = _pairwise_sq(a, b)
        for s in bandwidths:
            total = total + sign * dc.mean_(dc.exp(d2 * (-1.0 / (2.0 * s * s))))
    return total


def _row_normalize(x, eps: float = 1e-12):
    return x / dc.sqrt(dc.sum_(x * x, axis=1, keepdims=True) + eps)


def contrastive_loss(synth_feats, real_feats, synth_labels, real_labels,
                     temperature: float = 0.1):
    """Cosine InfoNCE between synthetic anchors and real features.

    Each same-class real feature acts as the positive in turn, against all
    other-class reals as negatives; per-anchor losses average over the
    positives, the result over anchors. Anchors without any positive are
    skipped and logged.
    """
    synth_labels = np.asarray(synth_labels)
    real_labels = np.asarray(real_labels)
    sims = dc.matmul(_row_normalize(synth_feats), dc.transpose(_row_normalize(real_feats)))
    e = dc.exp(sims * (1.0 / temperature))
    pos_mask = (synth_labels[:, None] == real_labels[None, :]).astype(np.float64)
    pos_counts = pos_mask.sum(axis=1)
    valid = pos_counts > 0
    if not valid.all():
        log.warning("contrastive_loss: %d anchors without a positive skipped",
                    int((~valid).sum()))
    if not valid.any():
        raise ValueError("contrastive_loss: no anchor has a same-class positive")
    neg_sum = dc.sum_(e * (1.0 - pos_mask), axis=1, keepdims=True)
    # -log(e_ip / (e_ip + sum_neg)) at every positive position
    per_pos = (dc.log(e + neg_sum) - dc.log(e)) * pos_mask
    per_anchor = dc.sum_(per_pos, axis=1) / np.maximum(pos_counts, 1.0)
    return dc.mean_(dc.select_rows(per_anchor, valid))


def prototype_loss(synth_feats, labels, margin: float = 1.0):
    """Hinge on pairwise distances between per-class synthetic means.

    mean over unordered class pairs of max(0, margin - ||mu_a - mu_b||).
    """
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if classes.size < 2:
        raise ValueError("prototype_loss needs at least two classes in the batch")
    protos = [dc.mean_(dc.select_rows(synth_feats, labels == c), axis=0) for c in classes]
    hinges = []
    for i in range(len(protos)):
        for j in range(i + 1, len(protos)):
            diff = protos[i] - protos[j]
            dist = dc.sqrt(dc.sum_(diff * diff))
            hinges.append(dc.relu(margin - dist))
    total = hinges[0]
    for h in hinges[1:]:
        total = total + h
    return total / float(len(hinges))


def decoder_batch_loss(decoder: Decoder, tuning: TuningLayer | None, feats: np.ndarray,
                       labels: np.ndarray, present_ids, embeddings: np.ndarray,
                       cfg: DecoderConfig, rng: np.random.Generator, n_classes: int):
    """Total decoder loss on one batch of real features.

    Real features are standardized by their own batch statistics before the
    per-class MMD so the fixed bandwidths stay on scale. When ``tuning`` is
    None the decoder is conditioned on the raw class embedding (the
    no-semantic-tuning ablation).
    """
    class_ids = np.unique(labels)
    descriptor = scene_descriptor(present_ids, n_classes)
    mu = feats.mean(axis=0, keepdims=True)
    sd = feats.std(axis=0, keepdims=True) + 1e-6

    synth_rows, synth_labels = [], []
    for c in class_ids:
        count = int((labels == c).sum())
        z = rng.random((count, decoder.noise_dim))
        emb = np.repeat(embeddings[c][None, :], count, axis=0)
        if cfg.embedding_jitter > 0.0:
            # jitter regularizes the conditional map between training embeddings
            scale = cfg.embedding_jitter * np.linalg.norm(embeddings[c]) / np.sqrt(emb.shape[1])
            emb = emb + scale * rng.normal(size=emb.shape)
        fused = tune(emb, descriptor, tuning) if tuning is not None else emb
        synth_rows.append(synthesize(decoder, z, fused))
        synth_labels.append(np.full(count, c))
    synth_labels = np.concatenate(synth_labels)

    if len(synth_rows) == 1:
        synth = synth_rows[0]
    else:
        synth = synth_rows[0]
        for block in synth_rows[1:]:
            synth = dc.concat(synth, block, axis=0)

    disc = 0.0
    for c in class_ids:
        real_c = (feats[labels == c] - mu) / sd
        synth_c = (dc.select_rows(synth, synth_labels == c) - mu) / sd
        disc = disc + mmd2(real_c, synth_c, cfg.bandwidths)
    disc = disc / float(class_ids.size)

    con = contrastive_loss(synth, feats, synth_labels, labels, cfg.temperature)
    if class_ids.size >= 2 and cfg.w_proto > 0.0:
        proto = prototype_loss(synth, synth_labels, cfg.margin)
    else:
        proto = dc.constant(0.0)
    total = cfg.w_disc * disc + cfg.w_con * con + cfg.w_proto * proto
    parts = {"disc": disc.item() if isinstance(disc, Tensor) else float(disc),
             "con": con.item(), "proto": proto.item(), "total": total.item()}
    return total, parts


def train_decoder(encode, scenes, catalog: ClassCatalog, cfg: DecoderConfig, *,
                  feature_dim: int, epochs: int, batch_points: int, lr: float,
                  optimizer: str, poly_power: float, rng: np.random.Generator,
                  use_tuning: bool = True, decoder: Decoder | None = None,
                  tuning: TuningLayer | None = None):
    """Fit the decoder (and tuning layer) to frozen-encoder features.

    ``encode`` maps a (n, n_point_dims) array to (n, feature_dim) features
    and must not be trainable here. Scenes are (points, labels) pairs with
    global class ids. Returns (decoder, tuning_layer, per-epoch history);
    with ``use_tuning`` false the decoder sees raw class embeddings and the
    tuning layer stays untrained.
    """
    embeddings = catalog.embedding_matrix()
    if decoder is None:
        decoder = Decoder(cfg.noise_dim, catalog.embedding_dim, feature_dim, cfg.hidden, rng)
    if tuning is None:
        tuning = TuningLayer(catalog.n_classes, catalog.embedding_dim, rng)
    params = decoder.params + (tuning.params if use_tuning else [])
    opt = build_optimizer(optimizer, params)
    total_steps = max(1, epochs * len(scenes))
    history = []
    step = 0
    for epoch in range(epochs):
        order = rng.permutation(len(scenes))
        sums: dict[str, float] = {}
        for scene_index in order:
            points, labels = scenes[scene_index]
            take = min(batch_points, points.shape[0])
            idx = rng.choice(points.shape[0], size=take, replace=False)
            feats = encode(points[idx])
            batch_labels = labels[idx]
            present = np.unique(labels)
            with Tape() as tape:
                loss, parts = decoder_batch_loss(
                    decoder, tuning if use_tuning else None, feats, batch_labels,
                    present, embeddings, cfg, rng, catalog.n_classes)
                if not np.isfinite(parts["total"]):
                    raise FloatingPointError(
                        f"decoder loss diverged at epoch {epoch}, step {step}: {parts}")
                tape.backward(loss)
            opt.step(poly_lr(lr, step, total_steps, poly_power))
            opt.zero_grad()
            step += 1
            for key, value in parts.items():
                sums[key] = sums.get(key, 0.0) + value
        history.append({"epoch": epoch, "phase": 2,
                        **{k: v / len(scenes) for k, v in sums.items()}})
    return decoder, tuning, history
