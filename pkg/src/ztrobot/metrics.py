"""Kinetostatic performance indices and their joint-space gradients.

All functions take the *weighted* Jacobian (linear rows divided by the
characteristic length). Gradients take its joint partials as an array of
shape (n, rows, n), slice ``i`` being the derivative with respect to ``q_i``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ztrobot.errors import BadWeights, DegenerateInput, SingularJacobian

EPS_SINGULAR = 1e-12


@dataclass(frozen=True)
class Twist:
    linear: tuple = (0.0, 0.0, 0.0)
    angular: tuple = (0.0, 0.0, 0.0)

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([np.asarray(self.linear, float), np.asarray(self.angular, float)])


@dataclass(frozen=True)
class Wrench:
    force: tuple = (0.0, 0.0, 0.0)
    moment: tuple = (0.0, 0.0, 0.0)

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([np.asarray(self.force, float), np.asarray(self.moment, float)])


@dataclass(frozen=True)
class MetricSample:
    eta1: float
    eta2: float
    eta: float
    gamma1: float
    gamma2: float


def _as6(v) -> np.ndarray:
    if isinstance(v, (Twist, Wrench)):
        return v.vector
    v = np.asarray(v, dtype=float)
    if v.shape != (6,):
        raise ValueError(f"expected a 6-vector, got shape {v.shape}")
    return v


def homogenize(twist, wrench, length: float) -> tuple[np.ndarray, np.ndarray]:
    """Divide the twist's linear part and the wrench's moment by ``length``."""
    t = _as6(twist).copy()
    w = _as6(wrench).copy()
    t[:3] /= length
    w[3:] /= length
    return t, w


def _gram_inverse(jw: np.ndarray, eps: float) -> np.ndarray:
    gram = jw @ jw.T
    lowest = np.linalg.eigvalsh(gram)[0]
    if not lowest > eps:
        raise SingularJacobian(f"smallest eigenvalue of J J^T is {lowest:.3e}")
    return np.linalg.inv(gram)


def dexterity(jw, eps: float = EPS_SINGULAR) -> tuple[float, float, float]:
    """Frobenius-norm inverse condition number.

    Returns ``(eta1, gamma1, gamma2)`` with ``gamma1 = sqrt(tr(J J^T))``,
    ``gamma2 = sqrt(tr((J J^T)^-1))`` and ``eta1 = m / (gamma1 * gamma2)``
    where ``m`` is the number of rows.
    """
    jw = np.asarray(jw, dtype=float)
    inv = _gram_inverse(jw, eps)
    g1 = float(np.sqrt(np.sum(jw * jw)))
    g2 = float(np.sqrt(np.trace(inv)))
    return jw.shape[0] / (g1 * g2), g1, g2


def dexterity_gradient(jw, partials, eps: float = EPS_SINGULAR) -> np.ndarray:
    """d(eta1)/dq.

    Uses d tr(M^-1) = -tr(M^-1 dM M^-1) with M = J J^T, which reduces to
    d(gamma2) = -tr(M^-2 J dJ^T) / gamma2.
    """
    jw = np.asarray(jw, dtype=float)
    partials = np.asarray(partials, dtype=float)
    inv = _gram_inverse(jw, eps)
    eta1, g1, g2 = dexterity(jw, eps)
    dg1 = np.einsum("rc,irc->i", jw, partials) / g1
    dg2 = -np.einsum("rc,irc->i", inv @ inv @ jw, partials) / g2
    return -eta1 * (dg1 / g1 + dg2 / g2)


def pinv(a, eps: float = EPS_SINGULAR) -> np.ndarray:
    """Moore-Penrose pseudo-inverse with singular values below ``eps`` dropped."""
    u, s, vt = np.linalg.svd(np.asarray(a, dtype=float), full_matrices=False)
    inv = np.zeros_like(s)
    keep = s > eps
    inv[keep] = 1.0 / s[keep]
    return (vt.T * inv) @ u.T


def _rtr_parts(jw, t, w, eps):
    jw = np.asarray(jw, dtype=float)
    jp = pinv(jw, eps)
    tau = jw.T @ w
    qd = jp @ t
    a = float(np.linalg.norm(tau))
    b = float(np.linalg.norm(qd))
    if not (a > eps and b > eps):
        raise DegenerateInput(f"|J^T w| = {a:.3e}, |J^+ t| = {b:.3e}")
    return jp, tau, qd, a, b


def rtr(jw, twist, wrench, length: float, eps: float = EPS_SINGULAR) -> float:
    """Robot transmission ratio |w.t| / (|J^T w| |J^+ t|) on homogenized inputs."""
    t, w = homogenize(twist, wrench, length)
    _, _, _, a, b = _rtr_parts(jw, t, w, eps)
    return min(1.0, abs(float(w @ t)) / (a * b))


def pinv_derivative(j, jp, dj) -> np.ndarray:
    """Derivative of the pseudo-inverse for a constant-rank matrix.

    ``dj`` may be a stack (k, rows, cols); the three-term form is
    -J+ dJ J+ + J+ J+^T dJ^T (I - J J+) + (I - J+ J) dJ^T J+^T J+.
    """
    rows, cols = j.shape
    left = np.eye(rows) - j @ jp
    right = np.eye(cols) - jp @ j
    djt = np.swapaxes(dj, -1, -2)
    return -jp @ dj @ jp + (jp @ jp.T) @ djt @ left + right @ djt @ (jp.T @ jp)


def rtr_gradient(jw, partials, twist, wrench, length: float, eps: float = EPS_SINGULAR) -> np.ndarray:
    """d(eta2)/dq for fixed twist and wrench.

    With a = |J^T w| and b = |J^+ t|,
    d(eta2) = -eta2 * (w^T J dJ^T w / a^2 + (J^+ t)^T dJ^+ t / b^2).
    """
    jw = np.asarray(jw, dtype=float)
    partials = np.asarray(partials, dtype=float)
    _gram_inverse(jw, eps)  # full row rank is required by the derivative identity
    t, w = homogenize(twist, wrench, length)
    jp, tau, qd, a, b = _rtr_parts(jw, t, w, eps)
    eta2 = abs(float(w @ t)) / (a * b)
    # w^T J dJ_i^T w = tau . (dJ_i^T w)
    da = np.einsum("c,irc,r->i", tau, partials, w)
    djp = pinv_derivative(jw, jp, partials)
    db = np.einsum("c,icr,r->i", qd, djp, t)
    return -eta2 * (da / a**2 + db / b**2)


def combined_score(eta1: float, eta2: float, lambda1: float = 0.5, lambda2: float = 0.5) -> float:
    if lambda1 < 0 or lambda2 < 0 or abs(lambda1 + lambda2 - 1.0) > 1e-12:
        raise BadWeights(f"weights must be non-negative and sum to 1, got {lambda1}, {lambda2}")
    return lambda1 * eta1 + lambda2 * eta2


def evaluate(jw, twist, wrench, length: float, weights=(0.5, 0.5), eps: float = EPS_SINGULAR) -> MetricSample:
    eta1, g1, g2 = dexterity(jw, eps)
    eta2 = rtr(jw, twist, wrench, length, eps)
    return MetricSample(eta1, eta2, combined_score(eta1, eta2, *weights), g1, g2)
