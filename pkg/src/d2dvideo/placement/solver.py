"""Optimal probabilistic caching of multi-quality video files.

Each device caches file ``i`` at quality ``q`` with probability ``p[i, q]``.
The placement maximizes the popularity-weighted quality that can be
delivered over a link meeting the rate threshold::

    maximize    sum_i f_i sum_q w_q (1 - exp(-k[i, q] p[i, q]))
    subject to  sum_i sum_q M_q p[i, q] <= M,   0 <= p <= 1

where ``k`` is the decay rate of the miss probability. The problem is
convex; for a fixed storage multiplier ``nu`` the KKT conditions give
``p`` in closed form and the storage used decreases with ``nu``, so the
optimal multiplier is found by bisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.special import gamma

from ..model import Catalog, QualityProfile, RadioParams

__all__ = [
    "SolverError",
    "PlacementSolution",
    "rate_coefficient",
    "delivery_success_prob",
    "expected_quality_sum",
    "caching_prob_given_nu",
    "multiplier_bracket",
    "solve_placement",
]

QualityScale = Literal["linear", "db"]


class SolverError(RuntimeError):
    """Bisection did not reach the storage tolerance."""

    def __init__(self, message: str, bracket: tuple[float, float], storage_gap: float):
        super().__init__(message)
        self.bracket = bracket
        self.storage_gap = storage_gap


def rate_coefficient(device_intensity, noise_var, rate_threshold, bandwidth):
    """Coefficient ``C = pi * lambda * Gamma(2) / (sigma^2 (2^(rho/B) - 1))``.

    ``1 - exp(-C p)`` is the probability that the strongest device of a PPP
    with intensity ``lambda * p`` supports rate ``rho`` over a Rayleigh
    channel with inverse-square path loss. Works elementwise on arrays.
    """
    rho = np.asarray(rate_threshold, dtype=float)
    if np.any(rho == 0):
        raise ZeroDivisionError("rate threshold of zero gives an unbounded coefficient")
    kappa = math.pi * device_intensity * gamma(2.0)
    coeff = kappa / (noise_var * (np.exp2(rho / bandwidth) - 1.0))
    return float(coeff) if np.ndim(coeff) == 0 else coeff


def delivery_success_prob(p, coeff):
    p = np.asarray(p, dtype=float)
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("caching probability must lie in [0, 1]")
    out = -np.expm1(-np.asarray(coeff, dtype=float) * p)
    return float(out) if np.ndim(out) == 0 else out


def expected_quality_sum(p, popularity, quality, coeff) -> float:
    """Popularity-weighted sum of quality times delivery success probability."""
    p = np.asarray(p, dtype=float)
    popularity = np.asarray(popularity, dtype=float)
    quality = np.asarray(quality, dtype=float)
    if p.ndim != 2 or p.shape != (popularity.size, quality.size):
        raise ValueError(
            f"p has shape {p.shape}, expected {(popularity.size, quality.size)}"
        )
    success = delivery_success_prob(p, np.broadcast_to(coeff, p.shape))
    return float(popularity @ (success * quality).sum(axis=1))


def _marginal_gain(popularity, quality, coeff, storage_size):
    # f_i w_q k_iq / M_q: the multiplier at which p[i, q] leaves zero
    return popularity[:, None] * quality[None, :] * coeff / storage_size[None, :]


def multiplier_bracket(popularity, quality, coeff, storage_size) -> tuple[float, float]:
    """Interval of storage multipliers outside which ``p`` is all ones or all zeros."""
    gain = _marginal_gain(popularity, quality, coeff, storage_size)
    return float(np.min(gain * np.exp(-coeff))), float(np.max(gain))


def caching_prob_given_nu(nu, popularity, quality, coeff, storage_size):
    """Closed-form KKT caching probabilities for a fixed storage multiplier.

    Returns ``(p, mu)`` where ``mu`` are the multipliers of the ``p <= 1``
    constraints.
    """
    popularity = np.asarray(popularity, dtype=float)
    quality = np.asarray(quality, dtype=float)
    storage_size = np.asarray(storage_size, dtype=float)
    coeff = np.broadcast_to(np.asarray(coeff, dtype=float), (popularity.size, quality.size))
    if nu < 0:
        raise ValueError("storage multiplier must be nonnegative")

    weight = popularity[:, None] * quality[None, :] * coeff
    mu = np.maximum(0.0, weight * np.exp(-coeff) - nu * storage_size[None, :])
    denom = nu * storage_size[None, :] + mu
    if np.any(denom <= 0):
        raise FloatingPointError("log of zero: nu and mu vanish together")
    with np.errstate(divide="ignore"):
        p = (np.log(weight) - np.log(denom)) / coeff
    return np.clip(p, 0.0, 1.0), mu


@dataclass(frozen=True)
class PlacementSolution:
    """Result of :func:`solve_placement`.

    ``coeff`` holds the rate coefficients ``C`` and ``decay`` the exponent
    actually used in the objective (``C`` times ``ln(log_base)``).
    """

    p: np.ndarray
    nu: float
    mu: np.ndarray
    coeff: np.ndarray
    decay: np.ndarray
    popularity: np.ndarray
    quality: np.ndarray
    storage_size: np.ndarray
    storage: float
    storage_used: float
    iterations: int
    bracket: tuple[float, float]

    @property
    def shape(self) -> tuple[int, int]:
        return self.p.shape

    def objective(self, p=None) -> float:
        return expected_quality_sum(self.p if p is None else p, self.popularity,
                                    self.quality, self.decay)

    def kkt_residuals(self) -> dict[str, float]:
        grad = (-self.popularity[:, None] * self.quality[None, :] * self.decay
                * np.exp(-self.decay * self.p)
                + self.nu * self.storage_size[None, :] + self.mu)
        zero = self.p <= 0
        stationarity = np.where(zero, np.maximum(0.0, -grad), np.abs(grad))
        binding = self.storage < self.storage_size.sum() * self.p.shape[0]
        return {
            "stationarity": float(stationarity.max()),
            "upper_slackness": float(np.abs(self.mu * (self.p - 1.0)).max()),
            "storage_slackness": float(abs(self.nu * (self.storage_used - self.storage)))
            if binding else 0.0,
            "storage_violation": float(max(0.0, self.storage_used - self.storage)),
        }

    def to_report(self) -> dict:
        return {
            "nu": self.nu,
            "mu": self.mu.tolist(),
            "p": self.p.tolist(),
            "storage": self.storage,
            "storage_used": self.storage_used,
            "iterations": self.iterations,
            "bracket": list(self.bracket),
            "kkt": self.kkt_residuals(),
        }


def solve_placement(
    catalog: Catalog,
    profile: QualityProfile,
    radio: RadioParams,
    storage: float,
    tol: float = 1e-6,
    max_iter: int = 200,
    *,
    quality_scale: QualityScale = "linear",
    log_base: float = 2.0,
) -> PlacementSolution:
    """Optimal caching probabilities by bisection on the storage multiplier.

    Parameters
    ----------
    storage : float
        Device storage ``M`` in the same normalized units as
        ``profile.storage_size``.
    tol : float
        Stop once ``|sum M_q p - M| < tol``.
    quality_scale : {"linear", "db"}
        Whether the quality measure enters the objective as ``10**(dB/10)``
        or directly in dB.
    log_base : float
        Base of the logarithm in the closed-form ``p``. Base 2 reproduces the
        published reference table; ``math.e`` is the exact optimum of the
        natural-exponential success probability.

    Raises
    ------
    SolverError
        If ``max_iter`` halvings do not reach ``tol``.
    """
    if not storage > 0 or not tol > 0:
        raise ValueError("storage and tol must be positive")
    if quality_scale not in ("linear", "db"):
        raise ValueError(f"unknown quality scale {quality_scale!r}")

    F, Q = catalog.file_count, profile.level_count
    f = np.asarray(catalog.popularity, dtype=float)
    w = profile.measure_linear if quality_scale == "linear" else np.asarray(profile.measure_db)
    sizes = np.asarray(profile.storage_size, dtype=float)
    rho = radio.threshold_table(F, Q)
    coeff = np.asarray(rate_coefficient(radio.device_intensity, radio.noise_var, rho,
                                        radio.bandwidth), dtype=float)
    coeff = np.broadcast_to(coeff, (F, Q)).copy()
    decay = coeff * math.log(log_base)
    weight = f[:, None] * w[None, :] * decay

    def pack(p, mu, nu, used, iterations, bracket):
        return PlacementSolution(p=p, nu=nu, mu=mu, coeff=coeff, decay=decay,
                                 popularity=f, quality=w, storage_size=sizes,
                                 storage=float(storage), storage_used=used,
                                 iterations=iterations, bracket=bracket)

    full = F * sizes.sum()
    if not np.any(decay > 0):
        # no caching devices: every placement is worth zero, so fill storage evenly
        p = np.full((F, Q), min(1.0, storage / full))
        return pack(p, np.zeros((F, Q)), 0.0, float((p * sizes).sum()), 0, (0.0, 0.0))
    if np.any(decay <= 0):
        raise ValueError("rate coefficients must be all positive or all zero")
    if storage >= full:
        p = np.ones((F, Q))
        return pack(p, weight * np.exp(-decay), 0.0, float(full), 0, (0.0, 0.0))

    # p is piecewise linear in log(nu), so bisect there: the bracket can
    # span hundreds of orders of magnitude when the decay is large
    log_gain = np.log(weight) - np.log(sizes)[None, :]
    lo, hi = float(np.min(log_gain - decay)), float(np.max(log_gain))
    bracket = (math.exp(lo), math.exp(hi))
    for it in range(1, max_iter + 1):
        t = 0.5 * (lo + hi)
        p = np.clip((log_gain - t) / decay, 0.0, 1.0)
        used = float((p * sizes[None, :]).sum())
        if abs(used - storage) < tol:
            nu = math.exp(t)
            mu = np.maximum(0.0, weight * np.exp(-decay) - nu * sizes[None, :])
            return pack(p, mu, nu, used, it, bracket)
        if used > storage:
            lo = t
        else:
            hi = t
    lo, hi = math.exp(lo), math.exp(hi)
    raise SolverError(
        f"bisection did not converge in {max_iter} iterations "
        f"(bracket [{lo:.6g}, {hi:.6g}], storage gap {used - storage:.3g})",
        (lo, hi), used - storage,
    )
