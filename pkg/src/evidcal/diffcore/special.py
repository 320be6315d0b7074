"""Gamma-family special functions with a compiled/pure backend switch.

``digamma``, ``trigamma`` and ``lgamma`` accept scalars or float64 arrays of
any shape over the domain x > 0 and dispatch to the Cython kernels when the
extension is importable, otherwise to the numpy fallback. The backend is
chosen at import from the ``EVIDCAL_KERNELS`` environment variable
(``auto`` | ``cy`` | ``py``) and can be overridden at runtime with
``set_backend`` for benchmarking and reproducibility pinning.

The two backends implement identical arithmetic but link different
transcendental libraries (libm vs numpy), so results may differ in the last
few ulps; anything that must be byte-reproducible should pin one backend.
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

try:
    from . import _kernels as _kernels_cy
except ImportError:
    _kernels_cy = None

_impl = None
_backend_name = ""


def available_backends() -> tuple[str, ...]:
    return ("cy", "py") if _kernels_cy is not None else ("py",)


def set_backend(name: str) -> None:
    """Select the kernel backend: 'auto', 'cy' or 'py'."""
    global _impl, _backend_name
    if name == "auto":
        name = "cy" if _kernels_cy is not None else "py"
    if name == "cy":
        if _kernels_cy is None:
            raise RuntimeError("compiled kernels requested but the extension is not built")
        _impl = _kernels_cy
    elif name == "py":
        _impl = _kernels_py
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    _backend_name = name


def active_backend() -> str:
    return _backend_name


set_backend(os.environ.get("EVIDCAL_KERNELS", "auto"))


def _apply(kernel_name: str, x):
    arr = np.asarray(x, dtype=np.float64)
    if arr.size and not (np.isfinite(arr).all() and (arr > 0.0).all()):
        raise ValueError(f"{kernel_name} requires finite arguments > 0")
    flat = np.ascontiguousarray(arr.reshape(-1))
    out = getattr(_impl, kernel_name)(flat).reshape(arr.shape)
    if np.isscalar(x) or arr.ndim == 0:
        return float(out)
    return out


def digamma(x):
    """psi(x) = d/dx log Gamma(x), for x > 0."""
    return _apply("digamma", x)


def trigamma(x):
    """psi'(x), the derivative of digamma, for x > 0."""
    return _apply("trigamma", x)


def lgamma(x):
    """log Gamma(x), for x > 0."""
    return _apply("lgamma", x)


def log_beta(alpha) -> float:
    """log of the multivariate beta function of a positive vector.

    log B(alpha) = sum_k log Gamma(alpha_k) - log Gamma(sum_k alpha_k).
    """
    arr = np.asarray(alpha, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("log_beta expects a nonempty 1-D vector")
    return float(np.sum(lgamma(arr)) - lgamma(float(arr.sum())))
