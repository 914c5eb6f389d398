"""Training losses over a predicted vector e_hat and a unit target e(w).

Each loss returns its value together with the gradient with respect to
e_hat.  The vMF family decomposes e_hat into a direction mu = e_hat/kappa
and a concentration kappa = |e_hat|:

    nllvmf            -log C_m(kappa) - e_hat . e(w)
    nllvmf_reg1       + lambda1 * kappa                  (penalize growth of kappa)
    nllvmf_reg1_reg2  -log C_m(kappa) - lambda2 * e_hat . e(w) + lambda1 * kappa

e_hat enters the dot product unnormalized, exactly as in the density; only
e(w) is unit norm.  The gradient of the normalizer term routes through the
Bessel ratio (specfun.log_cm_and_grad), which switches to its closed-form
surrogate in the underflow regime so value and gradient stay consistent.

The regression baselines (squared/rooted l2, cosine) and the max-margin
ranking loss with a single informative negative are provided for
comparison.  Batch variants operate row-wise over (N, m) matrices and are
what the sequence models call; they are the same formulas, vectorized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import specfun
from .embed import EmbeddingTable

__all__ = [
    "VARIANTS",
    "LossConfig",
    "LossResult",
    "nllvmf_loss",
    "l2_loss",
    "cosine_loss",
    "max_margin_loss",
    "point_loss",
    "batch_loss",
]

VARIANTS = (
    "nllvmf",
    "nllvmf_reg1",
    "nllvmf_reg1_reg2",
    "l2_squared",
    "l2_root",
    "cosine",
    "max_margin",
)

_VMF_VARIANTS = ("nllvmf", "nllvmf_reg1", "nllvmf_reg1_reg2")


@dataclass
class LossConfig:
    """Loss selection plus the scalar hyperparameters.

    Defaults follow the reference settings: lambda1=0.02, lambda2=0.1,
    gamma=0.5.
    """

    variant: str
    m: int
    lambda1: float = 0.02
    lambda2: float = 0.1
    gamma: float = 0.5

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown loss variant {self.variant!r}")
        if self.m < 2:
            raise ValueError(f"embedding dimension must be >= 2, got {self.m}")
        if self.lambda1 < 0:
            raise ValueError("lambda1 must be >= 0")
        if not 0.0 < self.lambda2 <= 1.0:
            raise ValueError("lambda2 must be in (0, 1]")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")


@dataclass
class LossResult:
    value: float
    grad_e_hat: np.ndarray


def _as_vec(x, m: int, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (m,):
        raise ValueError(f"{name} has shape {x.shape}, expected ({m},)")
    return x


def nllvmf_loss(e_hat, e_target, cfg: LossConfig) -> LossResult:
    """vMF negative log-likelihood (optionally regularized) of e(w) under
    the density parameterized by e_hat."""
    if cfg.variant not in _VMF_VARIANTS:
        raise ValueError(f"nllvmf_loss got non-vMF variant {cfg.variant!r}")
    m = cfg.m
    e_hat = _as_vec(e_hat, m, "e_hat")
    e_target = _as_vec(e_target, m, "e_target")
    tnorm = np.linalg.norm(e_target)
    if abs(tnorm - 1.0) > 1e-6:
        raise ValueError(f"target norm {tnorm} is not 1 within 1e-6")
    kappa = float(np.linalg.norm(e_hat))
    if kappa == 0.0:
        raise ValueError("zero-norm e_hat")

    log_c, dlog_c, _ = specfun.log_cm_and_grad(m, np.array(kappa))
    log_c, dlog_c = float(log_c), float(dlog_c)
    u = e_hat / kappa
    dot = float(e_hat @ e_target)

    dot_scale = cfg.lambda2 if cfg.variant == "nllvmf_reg1_reg2" else 1.0
    value = -log_c - dot_scale * dot
    grad = -dlog_c * u - dot_scale * e_target
    if cfg.variant in ("nllvmf_reg1", "nllvmf_reg1_reg2"):
        value += cfg.lambda1 * kappa
        grad = grad + cfg.lambda1 * u
    return LossResult(value=float(value), grad_e_hat=grad)


def l2_loss(e_hat, e_target, rooted: bool = False) -> LossResult:
    """|e_hat - e(w)|^2, or its square root (gradient defined as zero at
    the target itself)."""
    e_hat = np.asarray(e_hat, dtype=np.float64)
    e_target = np.asarray(e_target, dtype=np.float64)
    if e_hat.shape != e_target.shape:
        raise ValueError(f"shape mismatch {e_hat.shape} vs {e_target.shape}")
    diff = e_hat - e_target
    sq = float(diff @ diff)
    if not rooted:
        return LossResult(value=sq, grad_e_hat=2.0 * diff)
    dist = np.sqrt(sq)
    grad = np.zeros_like(diff) if dist == 0.0 else diff / dist
    return LossResult(value=float(dist), grad_e_hat=grad)


def cosine_loss(e_hat, e_target) -> LossResult:
    """1 - cos(e_hat, e(w)); scale-invariant in e_hat."""
    e_hat = np.asarray(e_hat, dtype=np.float64)
    e_target = np.asarray(e_target, dtype=np.float64)
    if e_hat.shape != e_target.shape:
        raise ValueError(f"shape mismatch {e_hat.shape} vs {e_target.shape}")
    kappa = float(np.linalg.norm(e_hat))
    if kappa == 0.0:
        raise ValueError("zero-norm e_hat")
    dot = float(e_hat @ e_target)
    value = 1.0 - dot / kappa
    grad = -e_target / kappa + dot * e_hat / kappa**3
    return LossResult(value=value, grad_e_hat=grad)


def _dcos(e_hat: np.ndarray, u: np.ndarray, kappa: float) -> np.ndarray:
    # gradient of cos(e_hat, u) for unit u
    return u / kappa - (u @ e_hat) * e_hat / kappa**3


def max_margin_loss(e_hat, target_word: int, table: EmbeddingTable, gamma: float = 0.5) -> LossResult:
    """Hinge on the single most competitive negative.

    The negative is the vocabulary word (other than the target) whose
    embedding has the highest cosine with e_hat -- equivalently the word
    contributing the largest term of the full ranking sum.  Ties break to
    the lowest word id.  Inactive hinge (or a one-word vocabulary) gives
    zero loss and zero gradient.
    """
    e_hat = np.asarray(e_hat, dtype=np.float64)
    if not 0 <= target_word < len(table):
        raise ValueError(f"unknown target word id {target_word}")
    kappa = float(np.linalg.norm(e_hat))
    if kappa == 0.0:
        raise ValueError("zero-norm e_hat")
    zero = LossResult(value=0.0, grad_e_hat=np.zeros_like(e_hat))
    if len(table) == 1:
        return zero
    cos = table.scores(e_hat) / kappa
    cos_target = float(cos[target_word])
    cos = cos.copy()
    cos[target_word] = -np.inf
    neg = int(np.argmax(cos))
    hinge = gamma + float(cos[neg]) - cos_target
    if hinge <= 0.0:
        return zero
    grad = _dcos(e_hat, table.vectors[neg], kappa) - _dcos(e_hat, table.vectors[target_word], kappa)
    return LossResult(value=float(hinge), grad_e_hat=grad)


def point_loss(e_hat, target_id: int, table: EmbeddingTable, cfg: LossConfig) -> LossResult:
    """Dispatch a single (e_hat, target word) pair to the configured loss."""
    if cfg.variant == "max_margin":
        return max_margin_loss(e_hat, target_id, table, cfg.gamma)
    target = table.vectors[target_id]
    if cfg.variant in _VMF_VARIANTS:
        return nllvmf_loss(e_hat, target, cfg)
    if cfg.variant == "l2_squared":
        return l2_loss(e_hat, target, rooted=False)
    if cfg.variant == "l2_root":
        return l2_loss(e_hat, target, rooted=True)
    if cfg.variant == "cosine":
        return cosine_loss(e_hat, target)
    raise ValueError(f"unknown loss variant {cfg.variant!r}")


def batch_loss(e_hat: np.ndarray, target_ids: np.ndarray, table: EmbeddingTable, cfg: LossConfig):
    """Row-wise loss over an (N, m) prediction matrix.

    Returns (values (N,), grads (N, m)).  Same formulas as the point
    losses; this is the training path, so per-row input validation is
    reduced to the zero-norm check.
    """
    e_hat = np.asarray(e_hat, dtype=np.float64)
    ids = np.asarray(target_ids, dtype=np.intp)
    n, m = e_hat.shape
    targets = table.vectors[ids]

    if cfg.variant in ("l2_squared", "l2_root"):
        diff = e_hat - targets
        sq = np.sum(diff * diff, axis=1)
        if cfg.variant == "l2_squared":
            return sq, 2.0 * diff
        dist = np.sqrt(sq)
        safe = np.where(dist == 0.0, 1.0, dist)
        grads = diff / safe[:, None]
        grads[dist == 0.0] = 0.0
        return dist, grads

    kappa = np.linalg.norm(e_hat, axis=1)
    if np.any(kappa == 0.0):
        raise ValueError("zero-norm e_hat row in batch")
    u = e_hat / kappa[:, None]

    if cfg.variant in _VMF_VARIANTS:
        log_c, dlog_c, _ = specfun.log_cm_and_grad(cfg.m, kappa)
        dot = np.sum(e_hat * targets, axis=1)
        dot_scale = cfg.lambda2 if cfg.variant == "nllvmf_reg1_reg2" else 1.0
        values = -log_c - dot_scale * dot
        grads = -dlog_c[:, None] * u - dot_scale * targets
        if cfg.variant in ("nllvmf_reg1", "nllvmf_reg1_reg2"):
            values = values + cfg.lambda1 * kappa
            grads = grads + cfg.lambda1 * u
        return values, grads

    if cfg.variant == "cosine":
        dot = np.sum(e_hat * targets, axis=1)
        values = 1.0 - dot / kappa
        grads = -targets / kappa[:, None] + (dot / kappa**3)[:, None] * e_hat
        return values, grads

    if cfg.variant == "max_margin":
        if len(table) == 1:
            return np.zeros(n), np.zeros_like(e_hat)
        cos = (e_hat @ table.vectors.T) / kappa[:, None]  # (N, V)
        cos_target = cos[np.arange(n), ids].copy()
        cos[np.arange(n), ids] = -np.inf
        neg = np.argmax(cos, axis=1)
        cos_neg = cos[np.arange(n), neg]
        hinge = cfg.gamma + cos_neg - cos_target
        active = hinge > 0.0
        values = np.where(active, hinge, 0.0)
        grads = np.zeros_like(e_hat)
        if np.any(active):
            eh = e_hat[active]
            ka = kappa[active]
            tn = table.vectors[neg[active]]
            tt = targets[active]
            diff_dot = np.sum((tn - tt) * eh, axis=1)
            grads[active] = (tn - tt) / ka[:, None] - (diff_dot / ka**3)[:, None] * eh
        return values, grads

    raise ValueError(f"unknown loss variant {cfg.variant!r}")
