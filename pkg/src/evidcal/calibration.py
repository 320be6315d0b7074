"""Class posteriors, cross-entropy, and calibrated stacking.

Calibrated stacking subtracts a factor eta from the seen-class entries of a
posterior before the argmax, which re-ranks seen against unseen classes
without touching the ordering within either group. In dynamic mode eta is
per point: eta = clamp(u - u_bar, 0, 1), where u_bar is the average
uncertainty of the points the uncalibrated classifier already places in
unseen classes (estimated in one pre-pass over the evaluation set).

The calibrated scores are not renormalized or clamped: only the argmax is
consumed downstream, and renormalization cannot change it.
"""

from __future__ import annotations

import numpy as np

from . import diffcore as dc
from .diffcore.tape import Tensor, _data

PROB_CLAMP = 1e-12


def softmax_posterior(logits):
    """Row-wise softmax with max-shift for overflow safety."""
    if isinstance(logits, Tensor):
        shift = logits.data.max(axis=-1, keepdims=True)
        e = dc.exp(logits - shift)
        return e / dc.sum_(e, axis=-1, keepdims=True)
    data = np.asarray(logits, dtype=np.float64)
    squeeze = data.ndim == 1
    if squeeze:
        data = data[None, :]
    e = np.exp(data - data.max(axis=-1, keepdims=True))
    out = e / e.sum(axis=-1, keepdims=True)
    return out[0] if squeeze else out


def cross_entropy(p, labels):
    """Mean negative log-probability of the true class, p clamped at 1e-12."""
    data = _data(p)
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= data.shape[1]):
        raise IndexError("label outside the class range")
    picked = dc.pick(p, labels)
    return -dc.mean_(dc.log(dc.clip(picked, PROB_CLAMP, np.inf)))


def calibrated_stack(p: np.ndarray, eta, seen_class_mask: np.ndarray):
    """Subtract eta from seen-class scores and take the argmax.

    ``eta`` may be a scalar or a per-point vector. Returns (p_prime, preds);
    argmax ties break toward the lowest class index.
    """
    p = np.asarray(p, dtype=np.float64)
    seen = np.asarray(seen_class_mask, dtype=bool)
    eta_arr = np.asarray(eta, dtype=np.float64)
    if np.any(eta_arr < 0.0) or np.any(eta_arr > 1.0):
        raise ValueError("eta must lie in [0, 1]")
    if eta_arr.ndim == 1:
        eta_arr = eta_arr[:, None]
    p_prime = p - eta_arr * seen[None, :].astype(np.float64)
    return p_prime, np.argmax(p_prime, axis=1)


def dynamic_eta(u, u_bar: float):
    """Per-point calibration factor clamp(u - u_bar, 0, 1)."""
    return np.clip(np.asarray(u, dtype=np.float64) - u_bar, 0.0, 1.0)


def estimate_u_bar(p: np.ndarray, u: np.ndarray, seen_class_mask: np.ndarray) -> float:
    """Mean uncertainty over points whose uncalibrated argmax is unseen.

    Falls back to the mean over all points when the uncalibrated classifier
    predicts no point as unseen, which keeps eta small and well defined.
    """
    p = np.asarray(p, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if p.shape[0] == 0:
        raise ValueError("cannot estimate u_bar from an empty batch")
    seen = np.asarray(seen_class_mask, dtype=bool)
    predicted_unseen = ~seen[np.argmax(p, axis=1)]
    if predicted_unseen.any():
        return float(u[predicted_unseen].mean())
    return float(u.mean())
