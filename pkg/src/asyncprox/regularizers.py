"""Nonsmooth regularizers, their closed-form proximal maps, and optimality certificates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .validation import check_matrix, check_positive

_KINDS = ("none", "l1", "l2", "elastic", "nuclear")


@dataclass(frozen=True)
class Regularizer:
    """Descriptor of the nonsmooth penalty h(x).

    `lam` weights absolute entries (l1/elastic) or singular values (nuclear);
    `lam_sq` weights the squared Frobenius half-norm (l2/elastic).
    """

    kind: str = "none"
    lam: float = 0.0
    lam_sq: float = 0.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown regularizer kind {self.kind!r}, expected one of {_KINDS}")
        if self.lam < 0 or self.lam_sq < 0:
            raise ValueError("regularization weights must be nonnegative")

    @classmethod
    def none(cls) -> "Regularizer":
        return cls("none")

    @classmethod
    def l1(cls, lam: float) -> "Regularizer":
        return cls("l1", lam=lam)

    @classmethod
    def squared_l2(cls, lam: float) -> "Regularizer":
        return cls("l2", lam_sq=lam)

    @classmethod
    def elastic_net(cls, lam: float, lam_sq: float) -> "Regularizer":
        return cls("elastic", lam=lam, lam_sq=lam_sq)

    @classmethod
    def nuclear(cls, lam: float) -> "Regularizer":
        return cls("nuclear", lam=lam)

    @classmethod
    def from_name(cls, name: str, weight: float) -> "Regularizer":
        """Build from a CLI-style name; `elastic` uses `weight` for both terms."""
        if name == "none":
            return cls.none()
        if name == "l1":
            return cls.l1(weight)
        if name == "l2":
            return cls.squared_l2(weight)
        if name == "elastic":
            return cls.elastic_net(weight, weight)
        if name == "nuclear":
            return cls.nuclear(weight)
        raise ValueError(f"unknown regularizer name {name!r}")


@dataclass(frozen=True)
class ProxResult:
    """A proximal gradient step together with its optimality certificate.

    `subgradient_witness` is (x - x_prime)/eta - grad_estimate, which lies in
    the subdifferential of the penalty at `x_prime` when the step is exact.
    """

    x_prime: np.ndarray
    penalty_value: float
    subgradient_witness: np.ndarray


def soft_threshold(x: np.ndarray, threshold: float) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - threshold, 0.0)


def regularizer_value(reg: Regularizer, x) -> float:
    """Evaluate the penalty h(x)."""
    x = np.asarray(x, dtype=np.float64)
    if reg.kind == "none":
        return 0.0
    if reg.kind == "l1":
        return reg.lam * float(np.abs(x).sum())
    if reg.kind == "l2":
        return 0.5 * reg.lam_sq * float(np.vdot(x, x))
    if reg.kind == "elastic":
        return reg.lam * float(np.abs(x).sum()) + 0.5 * reg.lam_sq * float(np.vdot(x, x))
    # nuclear: sum of singular values; numpy raises LinAlgError on non-convergence
    s = np.linalg.svd(np.atleast_2d(x), compute_uv=False)
    return reg.lam * float(s.sum())


def prox(reg: Regularizer, x, eta: float) -> np.ndarray:
    """Proximal map of h at x with scale eta: argmin_y ||y - x||^2/(2 eta) + h(y)."""
    check_positive(eta, "eta")
    x = np.asarray(x, dtype=np.float64)
    if reg.kind == "none" or (reg.lam == 0.0 and reg.lam_sq == 0.0):
        return x.copy()
    if reg.kind == "l1":
        return soft_threshold(x, eta * reg.lam)
    if reg.kind == "l2":
        return x / (1.0 + eta * reg.lam_sq)
    if reg.kind == "elastic":
        return soft_threshold(x, eta * reg.lam) / (1.0 + eta * reg.lam_sq)
    u, s, vt = np.linalg.svd(np.atleast_2d(x), full_matrices=False)
    return (u * soft_threshold(s, eta * reg.lam)) @ vt


def prox_gradient_step(reg: Regularizer, x: np.ndarray, grad_estimate: np.ndarray, eta: float) -> ProxResult:
    """One certified proximal gradient step from x along `grad_estimate`."""
    y = x - eta * grad_estimate
    x_prime = prox(reg, y, eta)
    witness = (x - x_prime) / eta - grad_estimate
    return ProxResult(x_prime, regularizer_value(reg, x_prime), witness)


def prox_optimality_residual(reg: Regularizer, x, x_prime, eta: float) -> float:
    """Distance from (x - x_prime)/eta to the subdifferential of h at x_prime.

    Zero certifies that x_prime is exactly prox(reg, x, eta).
    """
    check_positive(eta, "eta")
    x = check_matrix(x, name="x")
    x_prime = check_matrix(x_prime, x.shape[0], x.shape[1], name="x_prime")
    g = (x - x_prime) / eta
    if reg.kind == "none":
        return float(np.linalg.norm(g))
    if reg.kind == "l2":
        return float(np.linalg.norm(g - reg.lam_sq * x_prime))
    if reg.kind in ("l1", "elastic"):
        if reg.kind == "elastic":
            g = g - reg.lam_sq * x_prime
        dist = np.where(
            x_prime != 0.0,
            np.abs(g - reg.lam * np.sign(x_prime)),
            np.maximum(np.abs(g) - reg.lam, 0.0),
        )
        return float(np.linalg.norm(dist))
    return _nuclear_subdiff_distance(g, x_prime, reg.lam)


def _nuclear_subdiff_distance(g: np.ndarray, x_prime: np.ndarray, lam: float) -> float:
    # Rotate into the singular basis of x_prime; the subdifferential is
    # lam * I on the positive-spectrum block, zero on the mixed blocks, and a
    # lam-radius spectral ball on the complementary block.
    u, s, vt = np.linalg.svd(x_prime)
    gp = u.T @ g @ vt.T
    if s.size and s[0] > 0.0:
        cutoff = s[0] * max(x_prime.shape) * np.finfo(np.float64).eps
    else:
        cutoff = 0.0
    r = int(np.count_nonzero(s > cutoff))
    top = gp[:r, :r] - lam * np.eye(r)
    dist_sq = float(np.vdot(top, top))
    dist_sq += float(np.vdot(gp[:r, r:], gp[:r, r:]))
    dist_sq += float(np.vdot(gp[r:, :r], gp[r:, :r]))
    tail = gp[r:, r:]
    if tail.size:
        st = np.linalg.svd(tail, compute_uv=False)
        excess = np.maximum(st - lam, 0.0)
        dist_sq += float(np.vdot(excess, excess))
    return float(np.sqrt(dist_sq))
