"""Dirichlet evidence and the three evidential losses.

Concentration vectors live in (batch, n_seen) arrays with every entry >= 1,
built as alpha = evidence + 1 from exponential-activated logits. Uncertainty
is u = n_seen / alpha_0. Every loss accepts either plain arrays or diffcore
Tensors, so the same code path is differentiable during training and cheap
at evaluation.

The binary loss supports two orientations. The default, "textual-intent",
drives uncertainty down on seen samples (-log(1-u)) and up on unseen ones
(-log u). "as-printed" swaps the indicators; it exists for fidelity
experiments and is not the default because the two published forms
contradict each other (see the orientation note in EvidentialLossWeights).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore.tape import Tensor, _data

LOG_CLAMP = 1e-7
LOGIT_CLIP = 40.0

BL_ORIENTATIONS = ("textual-intent", "as-printed")


@dataclass(frozen=True)
class EvidentialLossWeights:
    """Weights and orientation for the composite evidential loss.

    ``bl_orientation`` selects which group of samples the binary loss pushes
    toward low uncertainty: "textual-intent" (default) penalizes high u on
    seen samples and low u on unseen ones; "as-printed" does the opposite.
    """

    lambda_dl: float = 0.005
    lambda_bl: float = 0.1
    bl_orientation: str = "textual-intent"

    def __post_init__(self):
        if not (np.isfinite(self.lambda_dl) and self.lambda_dl >= 0.0):
            raise ValueError("lambda_dl must be finite and >= 0")
        if not (np.isfinite(self.lambda_bl) and self.lambda_bl >= 0.0):
            raise ValueError("lambda_bl must be finite and >= 0")
        if self.bl_orientation not in BL_ORIENTATIONS:
            raise ValueError(f"bl_orientation must be one of {BL_ORIENTATIONS}")


def evidence_from_logits(logits):
    """alpha = exp(clamped logit) + 1, per seen class.

    Logits are clamped into [-LOGIT_CLIP, LOGIT_CLIP] before exponentiation
    so alpha stays finite in double precision.
    """
    return dc.exp_clip(logits, -LOGIT_CLIP, LOGIT_CLIP) + 1.0


def uncertainty(alpha):
    """u = n_seen / alpha_0 for each row; u in (0, 1] when alpha >= 1."""
    n_seen = _data(alpha).shape[1]
    return float(n_seen) / dc.sum_(alpha, axis=1)


def loss_sl(alpha, labels, seen_mask=None):
    """Expected cross-entropy under the Dirichlet posterior, seen rows only.

    -(1/N') sum_j psi(alpha_{j,y_j}) - psi(alpha_{j,0}) over rows flagged
    seen; 0.0 when no row is seen. ``labels`` index seen-class columns.
    """
    data = _data(alpha)
    n_rows = data.shape[0]
    if seen_mask is None:
        seen_mask = np.ones(n_rows, dtype=bool)
    else:
        seen_mask = np.asarray(seen_mask, dtype=bool)
    labels = np.asarray(labels)
    if seen_mask.any():
        lab = labels[seen_mask]
        if lab.min() < 0 or lab.max() >= data.shape[1]:
            raise IndexError("seen label outside the seen-class range")
    else:
        return dc.constant(0.0) if isinstance(alpha, Tensor) else 0.0
    rows = dc.select_rows(alpha, seen_mask)
    alpha0 = dc.sum_(rows, axis=1)
    picked = dc.pick(rows, labels[seen_mask])
    return dc.mean_(dc.digamma(alpha0) - dc.digamma(picked))


def modify_alpha(alpha, labels, seen_mask):
    """Remove label-supported evidence before the divergence penalty.

    Seen rows: alpha~ = y * (1 + 1/sqrt(alpha)) + (1 - y) * sqrt(alpha).
    Unseen rows pass through unchanged.
    """
    data = _data(alpha)
    n_rows, n_seen = data.shape
    seen_mask = np.asarray(seen_mask, dtype=bool)
    labels = np.asarray(labels)
    one_hot = np.zeros((n_rows, n_seen))
    seen_idx = np.flatnonzero(seen_mask)
    if seen_idx.size:
        lab = labels[seen_idx]
        if lab.min() < 0 or lab.max() >= n_seen:
            raise IndexError("seen label outside the seen-class range")
        one_hot[seen_idx, lab] = 1.0
    root = dc.sqrt(alpha)
    seen_col = seen_mask.astype(np.float64)[:, None]
    modified = one_hot * (1.0 + 1.0 / root) + (1.0 - one_hot) * root
    return seen_col * modified + (1.0 - seen_col) * alpha


def loss_dl(alpha_tilde):
    """Mean KL divergence from Dir(alpha~) to the uniform Dirichlet.

    (1/N) sum_j [ lgamma(a~_{j,0}) - lgamma(K) - sum_k lgamma(a~_{j,k})
                  + sum_k (a~_{j,k}-1)(psi(a~_{j,k}) - psi(a~_{j,0})) ].
    """
    data = _data(alpha_tilde)
    if data.size and data.min() <= 0.0:
        raise ValueError("alpha~ components must be positive")
    n_seen = data.shape[1]
    alpha0 = dc.sum_(alpha_tilde, axis=1, keepdims=True)
    log_norm = (
        dc.lgamma(dc.sum_(alpha_tilde, axis=1))
        - dc.sum_(dc.lgamma(alpha_tilde), axis=1)
        - float(dc.lgamma_value(float(n_seen)))
    )
    inner = dc.sum_((alpha_tilde - 1.0) * (dc.digamma(alpha_tilde) - dc.digamma(alpha0)), axis=1)
    return dc.mean_(log_norm + inner)


def loss_bl(u, seen_mask, orientation: str = "textual-intent"):
    """Binary uncertainty loss over the whole batch.

    u is clamped into [LOG_CLAMP, 1 - LOG_CLAMP] before the logs.
    """
    if orientation not in BL_ORIENTATIONS:
        raise ValueError(f"bl_orientation must be one of {BL_ORIENTATIONS}")
    seen = np.asarray(seen_mask, dtype=np.float64)
    uc = dc.clip(u, LOG_CLAMP, 1.0 - LOG_CLAMP)
    log_u = dc.log(uc)
    log_1mu = dc.log(1.0 - uc)
    if orientation == "textual-intent":
        terms = seen * log_1mu + (1.0 - seen) * log_u
    else:
        terms = seen * log_u + (1.0 - seen) * log_1mu
    return -dc.mean_(terms)


def loss_ev(alpha, labels, seen_mask, weights: EvidentialLossWeights):
    """Composite evidential loss and its per-term breakdown.

    total = L_SL + lambda_dl * L_DL + lambda_bl * L_BL, where L_SL averages
    over seen rows only and the other terms over the full batch.
    """
    seen_mask = np.asarray(seen_mask, dtype=bool)
    sl = loss_sl(alpha, labels, seen_mask)
    dl = loss_dl(modify_alpha(alpha, labels, seen_mask))
    bl = loss_bl(uncertainty(alpha), seen_mask, weights.bl_orientation)
    total = sl + weights.lambda_dl * dl + weights.lambda_bl * bl

    def val(x):
        return x.item() if isinstance(x, Tensor) else float(x)

    breakdown = {"sl": val(sl), "dl": val(dl), "bl": val(bl), "total": val(total)}
    return total, breakdown
