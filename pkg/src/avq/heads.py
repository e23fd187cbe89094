"""Quality heads: softmax classifier over MOS classes and epsilon-SVR regressor.

Both heads consume a d-by-n feature matrix (one column per frame) and emit
n scores on the 1..5 MOS scale.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, DimensionError, TrainingError, ValidationError
from .optim import Adam

log = logging.getLogger(__name__)

MOS_MIN, MOS_MAX = 1.0, 5.0


def class_edges(n_classes: int = 4) -> np.ndarray:
    if n_classes < 2:
        raise ValidationError(f"need at least 2 quality classes, got {n_classes}")
    return np.linspace(MOS_MIN, MOS_MAX, n_classes + 1)


def class_centers(n_classes: int = 4) -> np.ndarray:
    """Midpoints of the equal-width MOS bins."""
    e = class_edges(n_classes)
    return 0.5 * (e[:-1] + e[1:])


def mos_to_class(mos, n_classes: int = 4):
    """0-based index of the equal-width MOS bin; the top bin is closed.

    Works on scalars and arrays alike.
    """
    arr = np.asarray(mos, dtype=np.float64)
    if np.any(~np.isfinite(arr)) or np.any(arr < MOS_MIN) or np.any(arr > MOS_MAX):
        raise ValidationError(f"MOS must lie in [{MOS_MIN}, {MOS_MAX}]")
    idx = np.searchsorted(class_edges(n_classes)[1:-1], arr, side="right")
    return int(idx) if idx.ndim == 0 else idx


def one_hot(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    T = np.zeros((n_classes, labels.size))
    T[labels, np.arange(labels.size)] = 1.0
    return T


def softmax(logits, axis: int = 0) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def posterior_to_score(p, centers) -> float:
    """Expected class center under the posterior ``p``, clamped to [1, 5]."""
    p = np.asarray(p, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64)
    if p.shape != centers.shape:
        raise DimensionError(f"posterior has {p.shape} entries, centers {centers.shape}")
    if abs(p.sum() - 1.0) > 1e-6:
        raise ValidationError(f"posterior sums to {p.sum()!r}, not 1")
    return float(np.clip(p @ centers, MOS_MIN, MOS_MAX))


def _check_features(F, d: int) -> np.ndarray:
    F = np.asarray(F, dtype=np.float64)
    if F.ndim == 1:
        F = F[:, None]
    if F.ndim != 2 or F.shape[0] != d:
        raise DimensionError(f"head expects {d}-row features, got shape {F.shape}")
    return F


# --------------------------------------------------------------------------
# softmax head


@dataclass
class SoftmaxHead:
    W: np.ndarray
    b: np.ndarray
    class_centers: np.ndarray
    score_mode: str = "expected"  # or "argmax"
    loss_history: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        Q, _ = self.W.shape
        if Q < 2 or self.b.shape != (Q,) or np.shape(self.class_centers) != (Q,):
            raise DimensionError("softmax head needs Q >= 2 and matching b / class_centers")
        if self.score_mode not in ("expected", "argmax"):
            raise ValidationError(f"unknown score_mode {self.score_mode!r}")

    @property
    def input_dim(self) -> int:
        return self.W.shape[1]

    @property
    def n_classes(self) -> int:
        return self.W.shape[0]

    def posterior(self, F) -> np.ndarray:
        F = _check_features(F, self.input_dim)
        return softmax(self.W @ F + self.b[:, None], axis=0)

    def predict(self, F) -> np.ndarray:
        P = self.posterior(F)
        if self.score_mode == "argmax":
            scores = self.class_centers[np.argmax(P, axis=0)]
        else:
            scores = self.class_centers @ P
        return np.clip(scores, MOS_MIN, MOS_MAX)


def softmax_loss(head: SoftmaxHead, F, T, l2_weight: float = 1e-4):
    """Mean cross-entropy plus ``l2_weight * ||W||_F^2``, with analytic gradients."""
    F = _check_features(F, head.input_dim)
    T = np.asarray(T, dtype=np.float64)
    if T.shape != (head.n_classes, F.shape[1]):
        raise DimensionError(f"targets shape {T.shape} != {(head.n_classes, F.shape[1])}")
    n = F.shape[1]
    Z = head.W @ F + head.b[:, None]
    Z = Z - Z.max(axis=0, keepdims=True)
    logP = Z - np.log(np.exp(Z).sum(axis=0, keepdims=True))
    J = -np.sum(T * logP) / n + l2_weight * np.sum(head.W**2)
    dZ = (np.exp(logP) - T) / n
    grads = {"W": dZ @ F.T + 2.0 * l2_weight * head.W, "b": dZ.sum(axis=1)}
    return float(J), grads


def train_softmax(
    F,
    targets,
    l2_weight: float = 1e-4,
    *,
    centers=None,
    max_epochs: int = 1000,
    learning_rate: float = 1e-2,
    tolerance: float = 1e-9,
    seed: int = 0,
    score_mode: str = "expected",
) -> SoftmaxHead:
    """Fit the softmax head by full-batch Adam on one-hot ``targets`` (Q-by-n)."""
    F = np.asarray(F, dtype=np.float64)
    T = np.asarray(targets, dtype=np.float64)
    if F.ndim != 2 or T.ndim != 2 or T.shape[1] != F.shape[1]:
        raise DimensionError(f"features {F.shape} and targets {T.shape} disagree")
    Q, d = T.shape[0], F.shape[0]
    missing = np.flatnonzero(T.sum(axis=1) == 0)
    if missing.size:
        warnings.warn(f"classes {missing.tolist()} have no training samples", stacklevel=2)
    centers = class_centers(Q) if centers is None else np.asarray(centers, dtype=np.float64)

    rng = np.random.default_rng(seed)
    r = np.sqrt(6.0 / (d + Q))
    head = SoftmaxHead(rng.uniform(-r, r, size=(Q, d)) * 0.01, np.zeros(Q), centers, score_mode)
    params = {"W": head.W, "b": head.b}
    opt = Adam(learning_rate)
    history = []
    prev = None
    for epoch in range(max_epochs):
        J, grads = softmax_loss(head, F, T, l2_weight)
        if not np.isfinite(J):
            raise TrainingError(f"non-finite softmax loss at epoch {epoch}", epoch=epoch)
        history.append(J)
        if prev is not None and abs(prev - J) < tolerance * J:
            break
        prev = J
        opt.step(params, grads)
    head.loss_history = history
    return head


# --------------------------------------------------------------------------
# epsilon-SVR


def rbf_kernel(A, B, gamma: float) -> np.ndarray:
    """RBF Gram matrix between the columns of A (d-by-p) and B (d-by-q)."""
    a2 = np.sum(A * A, axis=0)
    b2 = np.sum(B * B, axis=0)
    d2 = a2[:, None] + b2[None, :] - 2.0 * (A.T @ B)
    np.maximum(d2, 0.0, out=d2)
    return np.exp(-gamma * d2)


@dataclass
class SvrHead:
    support_vectors: np.ndarray  # d-by-s
    coefficients: np.ndarray  # alpha - alpha*, length s
    bias: float
    gamma: float
    C: float = 1.0
    epsilon: float = 0.1
    kkt_residual: float = 0.0
    iterations: int = 0

    @property
    def input_dim(self) -> int:
        return self.support_vectors.shape[0]

    def decision(self, F) -> np.ndarray:
        F = _check_features(F, self.input_dim)
        if self.coefficients.size == 0:
            return np.full(F.shape[1], self.bias)
        return self.coefficients @ rbf_kernel(self.support_vectors, F, self.gamma) + self.bias

    def predict(self, F) -> np.ndarray:
        return np.clip(self.decision(F), MOS_MIN, MOS_MAX)


def default_gamma(F) -> float:
    var = float(np.var(F))
    return 1.0 / (F.shape[0] * var) if var > 0 else 1.0


def _smo_solve(K, y, C, epsilon, tol, max_iter):
    """Pairwise (SMO) solver for the epsilon-SVR dual.

    Uses the 2n-variable form: beta[:n] = alpha (sign +1), beta[n:] = alpha*
    (sign -1); minimizes 0.5 beta'Q beta + p'beta, Q_ij = s_i s_j K_ij,
    subject to 0 <= beta <= C and s'beta = 0. Working pairs come from
    second-order maximal-violation selection.

    Returns (coef, bias, gap, iterations) with coef = alpha - alpha*.
    """
    n = y.size
    s = np.concatenate([np.ones(n), -np.ones(n)])
    p = np.concatenate([epsilon - y, epsilon + y])
    beta = np.zeros(2 * n)
    G = p.copy()
    Kdiag = np.diag(K).copy()
    idx_of = np.concatenate([np.arange(n), np.arange(n)])
    tau = 1e-12

    gap = np.inf
    it = 0
    while True:
        up = ((s > 0) & (beta < C)) | ((s < 0) & (beta > 0))
        low = ((s > 0) & (beta > 0)) | ((s < 0) & (beta < C))
        minus_sG = -s * G
        cand_up = np.where(up, minus_sG, -np.inf)
        i = int(np.argmax(cand_up))
        m_val = cand_up[i]
        cand_low = np.where(low, minus_sG, np.inf)
        M_val = cand_low.min()
        gap = m_val - M_val
        if gap < tol:
            break
        if it >= max_iter:
            raise ConvergenceError(
                f"SVR solver stopped after {it} pair updates with KKT gap {gap:.3g}", residual=gap
            )
        ki = idx_of[i]
        b_t = m_val - minus_sG  # > 0 on violating candidates
        a_t = Kdiag[ki] + Kdiag[idx_of] - 2.0 * K[ki, idx_of]
        a_t = np.where(a_t > 0, a_t, tau)
        score = np.where(low & (minus_sG < m_val), -(b_t * b_t) / a_t, np.inf)
        j = int(np.argmin(score))
        kj = idx_of[j]

        Qij = s[i] * s[j] * K[ki, kj]
        old_i, old_j = beta[i], beta[j]
        if s[i] != s[j]:
            quad = Kdiag[ki] + Kdiag[kj] + 2.0 * Qij
            quad = quad if quad > 0 else tau
            delta = (-G[i] - G[j]) / quad
            diff = beta[i] - beta[j]
            beta[i] += delta
            beta[j] += delta
            if diff > 0:
                if beta[j] < 0:
                    beta[j] = 0.0
                    beta[i] = diff
            elif beta[i] < 0:
                beta[i] = 0.0
                beta[j] = -diff
            if diff > 0:
                if beta[i] > C:
                    beta[i] = C
                    beta[j] = C - diff
            elif beta[j] > C:
                beta[j] = C
                beta[i] = C + diff
        else:
            quad = Kdiag[ki] + Kdiag[kj] - 2.0 * Qij
            quad = quad if quad > 0 else tau
            delta = (G[i] - G[j]) / quad
            total = beta[i] + beta[j]
            beta[i] -= delta
            beta[j] += delta
            if total > C:
                if beta[i] > C:
                    beta[i] = C
                    beta[j] = total - C
            elif beta[j] < 0:
                beta[j] = 0.0
                beta[i] = total
            if total > C:
                if beta[j] > C:
                    beta[j] = C
                    beta[i] = total - C
            elif beta[i] < 0:
                beta[i] = 0.0
                beta[j] = total
        di = beta[i] - old_i
        dj = beta[j] - old_j
        # Q[:, t] = s * s_t * K[idx_of, idx_of[t]]
        G += s * (s[i] * di * K[idx_of, ki] + s[j] * dj * K[idx_of, kj])
        it += 1

    sG = s * G
    at_ub = beta >= C
    at_lb = beta <= 0
    free = ~(at_ub | at_lb)
    if free.any():
        r = sG[free].mean()
    else:
        ub_mask = (at_ub & (s < 0)) | (at_lb & (s > 0))
        lb_mask = (at_ub & (s > 0)) | (at_lb & (s < 0))
        ub = sG[ub_mask].min() if ub_mask.any() else np.inf
        lb = sG[lb_mask].max() if lb_mask.any() else -np.inf
        r = 0.5 * (ub + lb)
    coef = beta[:n] - beta[n:]
    return coef, -float(r), float(max(gap, 0.0)), it


def train_svr(
    F,
    targets,
    C: float = 1.0,
    epsilon: float = 0.1,
    gamma: float | None = None,
    *,
    tol: float = 1e-3,
    max_iter: int = 100_000,
) -> SvrHead:
    """Fit an RBF epsilon-SVR on the columns of ``F``.

    ``gamma`` defaults to ``1 / (d * var(F))``. Raises ConvergenceError if the
    KKT gap is still above ``tol`` after ``max_iter`` pair updates.
    """
    F = np.asarray(F, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64).ravel()
    if F.ndim != 2 or F.shape[1] != y.size:
        raise DimensionError(f"features {F.shape} and {y.size} targets disagree")
    if y.size < 2:
        raise ValidationError("SVR needs at least 2 training samples")
    if C <= 0 or epsilon < 0:
        raise ValidationError("need C > 0 and epsilon >= 0")
    gamma = default_gamma(F) if gamma is None else float(gamma)
    K = rbf_kernel(F, F, gamma)
    coef, bias, gap, it = _smo_solve(K, y, float(C), float(epsilon), tol, max_iter)
    sv = np.flatnonzero(coef != 0.0)
    log.debug("SVR: %d pair updates, %d support vectors, gap %.3g", it, sv.size, gap)
    return SvrHead(F[:, sv].copy(), coef[sv].copy(), bias, gamma, float(C), float(epsilon), gap, it)


def predict_head(head, F) -> np.ndarray:
    """Per-column quality scores in [1, 5] for either head type."""
    return head.predict(F)
