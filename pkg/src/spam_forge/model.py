"""Model parameters, torus geometry, profile/attachment functions and regime arithmetic."""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, optimize, special

from .errors import ArgumentError, RegimeError


@dataclass(frozen=True)
class ModelParams:
    gamma: float
    gamma_prime: float
    delta: float
    dimension: int = 1
    volume: float = 1000.0
    intensity: float = 1.0
    seed: int = 0

    def __post_init__(self):
        problems = []
        if not 0.0 < self.gamma < 1.0:
            problems.append(f"gamma={self.gamma} must lie in (0,1)")
        if not self.gamma_prime > 0.0:
            problems.append(f"gamma_prime={self.gamma_prime} must be > 0")
        if not self.delta > 1.0:
            problems.append(f"delta={self.delta} must be > 1")
        if int(self.dimension) != self.dimension or self.dimension < 1:
            problems.append(f"dimension={self.dimension} must be an integer >= 1")
        if not (self.volume > 0.0 and math.isfinite(self.volume)):
            problems.append(f"volume={self.volume} must be a finite positive number")
        if not (self.intensity > 0.0 and math.isfinite(self.intensity)):
            problems.append(f"intensity={self.intensity} must be a finite positive number")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            problems.append(f"seed={self.seed} must be an unsigned 64-bit integer")
        if problems:
            raise ArgumentError("; ".join(problems))

    @property
    def side(self) -> float:
        return self.volume ** (1.0 / self.dimension)

    @property
    def box(self) -> "TorusBox":
        return TorusBox(self.dimension, self.side)

    def replace(self, **changes) -> "ModelParams":
        values = {k: getattr(self, k) for k in self.__dataclass_fields__}
        values.update(changes)
        return ModelParams(**values)

    def fingerprint(self) -> str:
        """Short stable digest of the parameters (seed excluded)."""
        text = "gamma=%r gamma_prime=%r delta=%r d=%d n=%r lambda=%r" % (
            float(self.gamma), float(self.gamma_prime), float(self.delta),
            int(self.dimension), float(self.volume), float(self.intensity))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class TorusBox:
    dimension: int
    side: float

    def __post_init__(self):
        if not self.side > 0:
            raise ArgumentError(f"torus side must be positive, got {self.side}")

    def wrap(self, x):
        """Map coordinates into [-side/2, side/2)."""
        h = 0.5 * self.side
        y = np.mod(np.asarray(x, dtype=float) + h, self.side) - h
        return np.where(y >= h, -h, y)

    def distance(self, x, y) -> float:
        return torus_distance(x, y, self)


def torus_distance(x, y, box: TorusBox) -> float:
    """Euclidean distance on the torus, coordinate differences wrapped."""
    a = np.atleast_1d(np.asarray(x, dtype=float))
    b = np.atleast_1d(np.asarray(y, dtype=float))
    if a.shape != (box.dimension,) or b.shape != (box.dimension,):
        raise ArgumentError(
            f"expected {box.dimension} coordinates, got {a.shape[0]} and {b.shape[0]}")
    dx = np.abs(a - b)
    dx = np.where(box.side - dx < dx, box.side - dx, dx)
    return float(np.sqrt(np.sum(dx * dx)))


def wrapped_distances(points: np.ndarray, origin: np.ndarray, side: float) -> np.ndarray:
    """Torus distances from ``origin`` to each row of ``points``.

    The arithmetic (sequential sum over axes, no fused ops) matches the
    compiled builder so that both produce identical doubles.
    """
    d = points.shape[1]
    s2 = None
    for a in range(d):
        dx = np.abs(points[:, a] - origin[a])
        dx = np.where(side - dx < dx, side - dx, dx)
        s2 = dx * dx if s2 is None else s2 + dx * dx
    return np.sqrt(s2)


def ball_volume(d: int) -> float:
    """Volume of the Euclidean unit ball in dimension ``d``."""
    if int(d) != d or d < 1:
        raise ArgumentError(f"dimension must be a positive integer, got {d}")
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


def profile_kappa(delta: float) -> float:
    """Normalizing constant making the integral of min(kappa x^-delta, 1) equal 1/2."""
    if not delta > 1.0:
        raise ArgumentError(f"profile integral diverges for delta={delta} <= 1")
    return ((delta - 1.0) / (2.0 * delta)) ** delta


@dataclass(frozen=True)
class ProfileFunction:
    """Decreasing profile phi; ``slowly_varying`` multiplies the power tail by L(x)."""

    kind: str
    delta: float
    kappa: float
    slowly_varying: Optional[Callable[[float], float]] = field(default=None, compare=False)

    @classmethod
    def power(cls, delta: float) -> "ProfileFunction":
        return cls("power", float(delta), profile_kappa(delta))

    @classmethod
    def with_slowly_varying(cls, delta: float, L: Callable[[float], float]) -> "ProfileFunction":
        if not delta > 1.0:
            raise ArgumentError(f"profile integral diverges for delta={delta} <= 1")

        def mass(kappa):
            f = lambda x: min(kappa * x ** (-delta) * L(x), 1.0)
            # the kink sits where kappa x^-delta L(x) = 1; split there for accuracy
            k0 = kappa ** (1.0 / delta)
            head = integrate.quad(f, 0.0, k0, limit=200)[0]
            tail = integrate.quad(f, k0, np.inf, limit=400)[0]
            return head + tail - 0.5

        kappa = optimize.brentq(mass, 1e-12, 1e3, xtol=1e-14, rtol=1e-12)
        phi = cls("slowly_varying", float(delta), float(kappa), L)
        xs = np.logspace(-6, 6, 2001)
        vals = phi(xs)
        if np.any(np.diff(vals) > 1e-12):
            raise ArgumentError("profile with this slowly varying factor is not nonincreasing")
        return phi

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", over="ignore"):
            v = self.kappa * np.power(x, -self.delta)
            if self.kind == "slowly_varying":
                v = v * np.vectorize(self.slowly_varying, otypes=[float])(np.maximum(x, 1e-300))
        v = np.where(x <= 0.0, 1.0, v)
        out = np.minimum(v, 1.0)
        return float(out) if out.ndim == 0 else out


def profile_eval(phi: ProfileFunction, x: float) -> float:
    if x < 0:
        raise ArgumentError(f"profile argument must be >= 0, got {x}")
    return float(phi(x))


@dataclass(frozen=True)
class AttachmentRule:
    """Attachment function f; affine gamma*z + gamma' or a monotone table/function."""

    kind: str
    gamma: float
    gamma_prime: float = 0.0
    table: tuple = ()
    function: Optional[Callable[[int], float]] = field(default=None, compare=False)

    @classmethod
    def affine(cls, gamma: float, gamma_prime: float) -> "AttachmentRule":
        if not 0.0 < gamma < 1.0 or not gamma_prime > 0.0:
            raise ArgumentError("affine attachment needs gamma in (0,1) and gamma_prime > 0")
        return cls("affine", float(gamma), float(gamma_prime))

    @classmethod
    def general(cls, gamma: float, table: Sequence[float] = (),
                function: Optional[Callable[[int], float]] = None) -> "AttachmentRule":
        """Tabulated values extended linearly with slope ``gamma``, or an explicit function."""
        if (function is None) == (len(table) == 0):
            raise ArgumentError("give exactly one of table or function")
        rule = cls("general", float(gamma), 0.0, tuple(float(v) for v in table), function)
        probe = rule(np.arange(max(len(table), 1) + 64))
        if np.any(probe <= 0) or np.any(np.diff(probe) < 0):
            raise ArgumentError("attachment function must be positive and nondecreasing")
        return rule

    def __call__(self, z):
        z = np.asarray(z)
        if self.kind == "affine":
            out = self.gamma * z.astype(float) + self.gamma_prime
        elif self.function is not None:
            out = np.vectorize(self.function, otypes=[float])(z)
        else:
            tab = np.asarray(self.table)
            last = len(tab) - 1
            zi = z.astype(np.int64)
            out = np.where(zi <= last, tab[np.minimum(zi, last)],
                           tab[last] + self.gamma * (zi - last))
        return float(out) if np.ndim(out) == 0 else out


def attachment_eval(f: AttachmentRule, z: int) -> float:
    if z < 0:
        raise ArgumentError(f"in-degree must be >= 0, got {z}")
    return float(f(z))


def default_functions(params: ModelParams):
    return ProfileFunction.power(params.delta), AttachmentRule.affine(params.gamma, params.gamma_prime)


def connection_probability(older_indegree: int, distance: float, t: float,
                           params: ModelParams, phi: Optional[ProfileFunction] = None,
                           f: Optional[AttachmentRule] = None) -> float:
    """phi(t * distance^d / f(Z)) for a younger vertex born at ``t``."""
    if not 0.0 < t <= 1.0:
        raise ArgumentError(f"birth time must lie in (0,1], got {t}")
    if distance < 0 or older_indegree < 0:
        raise ArgumentError("distance and in-degree must be nonnegative")
    if phi is None or f is None:
        p0, f0 = default_functions(params)
        phi = phi or p0
        f = f or f0
    return float(phi(t * distance ** params.dimension / f(older_indegree)))


@dataclass(frozen=True)
class RegimeReport:
    robust: bool
    rho: float
    alpha: float
    beta: float
    nu: float
    K: int
    K_empty: bool = False

    def layer_threshold(self, k: int, volume: float) -> float:
        """Birth-time threshold n^(-alpha^-k) of layer k."""
        return math.exp(-(self.alpha ** -k) * math.log(volume))


def distance_prefactor(gamma: float, delta: float) -> float:
    """rho = 1 / ln(gamma / (delta (1 - gamma))); only meaningful when robust."""
    if not gamma > delta / (1.0 + delta):
        raise RegimeError(f"gamma={gamma} <= delta/(1+delta)={delta / (1 + delta):.6g}: not robust")
    return 1.0 / math.log(gamma / (delta * (1.0 - gamma)))


def layer_count(log_n: float, alpha: float, nu: float):
    """Largest k >= 1 with alpha^-k ln n >= ln ln n / nu, or (0, True) if none."""
    if log_n <= 1.0:
        return 0, True
    target = math.log(log_n) / nu
    if log_n < target:
        return 0, True
    # alpha^-k log_n >= target  <=>  k <= ln(log_n / target) / ln(alpha)
    k = int(math.floor(math.log(log_n / target) / math.log(alpha) + 1e-12))
    while k >= 1 and alpha ** (-k) * log_n < target:
        k -= 1
    while alpha ** (-(k + 1)) * log_n >= target:
        k += 1
    return (k, False) if k >= 1 else (0, True)


def regime_report(params: ModelParams, alpha_choice: Optional[float] = None,
                  beta_choice: Optional[float] = None,
                  log_volume: Optional[float] = None) -> RegimeReport:
    """Robustness flag, distance prefactor, layer parameters alpha, beta, nu and K.

    ``log_volume`` overrides ln(n) for volumes too large to hold in a float.
    Outside the robust regime only ``robust`` is meaningful; the other fields are NaN
    and K is 0 with the empty flag set.
    """
    g, dl, d = params.gamma, params.delta, params.dimension
    if not g > dl / (1.0 + dl):
        if alpha_choice is not None or beta_choice is not None:
            raise RegimeError("layer parameters only exist in the robust regime")
        nan = float("nan")
        return RegimeReport(False, nan, nan, nan, nan, 0, True)
    rho = distance_prefactor(g, dl)
    a_hi = g / (dl * (1.0 - g))
    alpha = 0.5 * (1.0 + a_hi) if alpha_choice is None else float(alpha_choice)
    if not 1.0 < alpha < a_hi:
        raise ArgumentError(f"alpha={alpha} outside (1, {a_hi:.6g})")
    b_hi = g / dl + alpha * g
    beta = 0.5 * (alpha + b_hi) if beta_choice is None else float(beta_choice)
    if not alpha < beta < b_hi:
        raise ArgumentError(f"beta={beta} outside ({alpha:.6g}, {b_hi:.6g})")
    nu = min(-beta * dl + g + alpha * g * dl, (beta - alpha) / d)
    log_n = math.log(params.volume) if log_volume is None else float(log_volume)
    K, empty = layer_count(log_n, alpha, nu)
    return RegimeReport(True, rho, alpha, beta, nu, K, empty)


def distance_budget(params: ModelParams, eps: float = 1.0) -> float:
    """(4 + eps) * rho * ln ln n."""
    return (4.0 + eps) * distance_prefactor(params.gamma, params.delta) * math.log(math.log(params.volume))
