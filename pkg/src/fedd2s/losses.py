"""Classification and distillation losses with analytic logit gradients.

All losses are means over the batch. The *_grad variants return
(loss, gradient w.r.t. the logits argument) so callers can feed the
gradient straight into the engine's backward pass. Probabilities are
clamped to [EPS, 1] inside logarithms; the gradient formulas account for
the clamp so they stay consistent with finite differences.
"""

from __future__ import annotations

import numpy as np

EPS = 1e-12


def tempered_softmax(logits: np.ndarray, tau: float) -> np.ndarray:
    """softmax(logits / tau), stabilized by max-subtraction."""
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    z = np.asarray(logits, dtype=np.float64) / tau
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _softmax_vjp(probs: np.ndarray, g: np.ndarray, tau: float) -> np.ndarray:
    """Pull a gradient w.r.t. softmax(logits/tau) back to the logits."""
    inner = (g * probs).sum(axis=-1, keepdims=True)
    return probs * (g - inner) / tau


def _check_labels(labels: np.ndarray, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes})")
    return labels.astype(np.int64)


def cross_entropy(logits: np.ndarray, labels: np.ndarray, tau: float = 1.0) -> float:
    """Mean negative log-probability of the true class under tempered softmax."""
    probs = tempered_softmax(logits, tau)
    labels = _check_labels(labels, probs.shape[-1])
    p_true = probs[np.arange(len(labels)), labels]
    return float(-np.mean(np.log(np.clip(p_true, EPS, 1.0))))


def cross_entropy_grad(logits: np.ndarray, labels: np.ndarray, tau: float = 1.0):
    probs = tempered_softmax(logits, tau)
    labels = _check_labels(labels, probs.shape[-1])
    n = len(labels)
    p_true = probs[np.arange(n), labels]
    loss = float(-np.mean(np.log(np.clip(p_true, EPS, 1.0))))
    g_probs = np.zeros_like(probs)
    # rows clamped to EPS see a constant loss, so their gradient is zero
    live = p_true > EPS
    g_probs[np.arange(n), labels] = -np.where(live, 1.0 / np.clip(p_true, EPS, 1.0), 0.0) / n
    return loss, _softmax_vjp(probs, g_probs, tau)


def kl_divergence(student_probs: np.ndarray, teacher_probs: np.ndarray) -> float:
    """Mean KL(teacher || student) over the batch; zero teacher entries drop out."""
    s = np.asarray(student_probs, dtype=np.float64)
    t = np.asarray(teacher_probs, dtype=np.float64)
    if s.shape != t.shape:
        raise ValueError(f"shape mismatch {s.shape} vs {t.shape}")
    terms = t * (np.log(np.clip(t, EPS, 1.0)) - np.log(np.clip(s, EPS, 1.0)))
    return float(terms.sum(axis=-1).mean())


def kd_loss_grad(
    student_logits: np.ndarray,
    teacher_probs: np.ndarray,
    tau: float,
    order: str = "teacher_student",
):
    """Distillation loss tau^2 * KL and its gradient w.r.t. the student logits.

    The teacher distribution is treated as a constant. order selects which
    argument is the reference measure: "teacher_student" is KL(t || s), the
    standard distillation direction; "student_teacher" is KL(s || t).
    """
    s = tempered_softmax(student_logits, tau)
    t = np.asarray(teacher_probs, dtype=np.float64)
    if s.shape != t.shape:
        raise ValueError(f"shape mismatch {s.shape} vs {t.shape}")
    n = s.shape[0]
    cs = np.clip(s, EPS, 1.0)
    ct = np.clip(t, EPS, 1.0)
    if order == "teacher_student":
        loss = float((t * (np.log(ct) - np.log(cs))).sum(axis=-1).mean())
        g_probs = -(t / cs) * (s > EPS) / n
    elif order == "student_teacher":
        loss = float((s * (np.log(cs) - np.log(ct))).sum(axis=-1).mean())
        g_probs = (np.log(cs) - np.log(ct) + (s > EPS)) / n
    else:
        raise ValueError(f"unknown KL order {order!r}")
    scale = tau * tau
    return scale * loss, scale * _softmax_vjp(s, g_probs, tau)


def mse(a: np.ndarray, b: np.ndarray) -> float:
    """Mean of squared element-wise differences."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def mse_grad(a: np.ndarray, b: np.ndarray):
    """mse(a, b) and its gradient w.r.t. a (b is a constant target)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    diff = a - b
    return float(np.mean(diff**2)), 2.0 * diff / a.size
