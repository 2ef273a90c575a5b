"""Fully nonlinear operators F(x, r, p, X) and Robin/Dirichlet boundary laws.

Second-order information is passed as a list of curvatures (eigenvalues of
the Hessian, or directional second differences on a grid) rather than as a
full matrix. Every variant is positively 1-homogeneous and vanishes at
(r, p, X) = 0 by construction.

Variants
--------
``PucciPlus``      F = -M+(X) + b(x).p + c(x) r
``PucciMinus``     F = -M-(X) + b(x).p + c(x) r
``Linear``         F = -sum_i A_i(x) X_i + b(x).p + c(x) r   (diagonal diffusion)
``Bellman``        F = max over families of Linear
``Isaacs``         F = max over groups of min within a group (``outer="max"``),
                   or min over groups of max within a group (``outer="min"``)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .coefficients import CoefficientField, as_coefficient
from .errors import ConfigurationError

__all__ = [
    "EllipticityBounds",
    "PucciPlus",
    "PucciMinus",
    "Linear",
    "Bellman",
    "Isaacs",
    "Robin",
    "Dirichlet",
    "pucci_extremal",
    "evaluate_operator",
    "evaluate_boundary",
    "dual_operator",
    "linear_families",
    "structure_constants",
    "check_ellipticity",
]


@dataclass(frozen=True)
class EllipticityBounds:
    a: float
    A: float

    def __post_init__(self):
        if not (0 < self.a <= self.A):
            raise ConfigurationError(f"ellipticity bounds need 0 < a <= A, got a={self.a}, A={self.A}")


def _coeffs(values) -> tuple[CoefficientField, ...]:
    if values is None:
        return ()
    if isinstance(values, (str, int, float, CoefficientField)) or callable(values):
        values = [values]
    return tuple(as_coefficient(v) for v in values)


@dataclass(frozen=True)
class _Pucci:
    bounds: EllipticityBounds
    drift: tuple[CoefficientField, ...] = ()
    zeroth: CoefficientField = field(default_factory=lambda: CoefficientField.constant(0.0))

    def __post_init__(self):
        object.__setattr__(self, "drift", _coeffs(self.drift))
        object.__setattr__(self, "zeroth", as_coefficient(self.zeroth))


@dataclass(frozen=True)
class PucciPlus(_Pucci):
    """F = -M+_{a,A}(X) + b(x).p + c(x) r."""


@dataclass(frozen=True)
class PucciMinus(_Pucci):
    """F = -M-_{a,A}(X) + b(x).p + c(x) r."""


@dataclass(frozen=True)
class Linear:
    """F = -sum_i A_i(x) X_i + b(x).p + c(x) r.

    ``diffusion`` is one field (isotropic) or one field per axis.
    """

    diffusion: tuple[CoefficientField, ...] = ()
    drift: tuple[CoefficientField, ...] = ()
    zeroth: CoefficientField = field(default_factory=lambda: CoefficientField.constant(0.0))

    def __post_init__(self):
        diffusion = _coeffs(self.diffusion) or (CoefficientField.constant(1.0),)
        object.__setattr__(self, "diffusion", diffusion)
        object.__setattr__(self, "drift", _coeffs(self.drift))
        object.__setattr__(self, "zeroth", as_coefficient(self.zeroth))


@dataclass(frozen=True)
class Bellman:
    """Pointwise maximum over a finite list of linear families."""

    families: tuple[Linear, ...]

    def __post_init__(self):
        object.__setattr__(self, "families", tuple(self.families))
        if not self.families:
            raise ConfigurationError("Bellman operator needs at least one family")


@dataclass(frozen=True)
class Isaacs:
    """Max over groups of min within each group (or min-max when ``outer='min'``)."""

    groups: tuple[tuple[Linear, ...], ...]
    outer: str = "max"

    def __post_init__(self):
        groups = tuple(tuple(g) for g in self.groups)
        object.__setattr__(self, "groups", groups)
        if not groups or any(not g for g in groups):
            raise ConfigurationError("Isaacs operator needs non-empty groups")
        if self.outer not in ("max", "min"):
            raise ConfigurationError(f"outer must be 'max' or 'min', got {self.outer!r}")


OperatorSpec = Union[PucciPlus, PucciMinus, Linear, Bellman, Isaacs]


@dataclass(frozen=True)
class Robin:
    """B(x, r, p) = gamma(x) r + <p, n(x)> with gamma >= 0; gamma = 0 is pure Neumann."""

    gamma: CoefficientField = field(default_factory=lambda: CoefficientField.constant(0.0))

    def __post_init__(self):
        object.__setattr__(self, "gamma", as_coefficient(self.gamma))


@dataclass(frozen=True)
class Dirichlet:
    """Homogeneous Dirichlet condition u = 0."""


BoundaryLaw = Union[Robin, Dirichlet]


def pucci_extremal(bounds: EllipticityBounds, eigenvalues: Sequence[float], sign: str = "plus") -> float:
    e = np.asarray(eigenvalues, dtype=float)
    pos = e[e > 0].sum()
    neg = e[e < 0].sum()
    if sign == "plus":
        return float(bounds.A * pos + bounds.a * neg)
    if sign == "minus":
        return float(bounds.a * pos + bounds.A * neg)
    raise ValueError(f"sign must be 'plus' or 'minus', got {sign!r}")


def _dot_drift(drift, x, p) -> float:
    p = np.atleast_1d(np.asarray(p, dtype=float))
    total = 0.0
    for b, pi in zip(drift, p):
        total += b(x) * pi
    return total


def _linear_value(op: Linear, x, r, p, eigs) -> float:
    eigs = np.atleast_1d(np.asarray(eigs, dtype=float))
    if len(op.diffusion) == 1:
        second = op.diffusion[0](x) * eigs.sum()
    else:
        if len(op.diffusion) != len(eigs):
            raise ConfigurationError("per-axis diffusion needs one curvature per axis")
        second = sum(d(x) * e for d, e in zip(op.diffusion, eigs))
    return -second + _dot_drift(op.drift, x, p) + op.zeroth(x) * r


def evaluate_operator(spec: OperatorSpec, x, r: float, p, X_eigs) -> float:
    """F(x, r, p, X) with X given by its eigenvalues (curvatures)."""
    if isinstance(spec, PucciPlus):
        return -pucci_extremal(spec.bounds, X_eigs, "plus") + _dot_drift(spec.drift, x, p) + spec.zeroth(x) * r
    if isinstance(spec, PucciMinus):
        return -pucci_extremal(spec.bounds, X_eigs, "minus") + _dot_drift(spec.drift, x, p) + spec.zeroth(x) * r
    if isinstance(spec, Linear):
        return _linear_value(spec, x, r, p, X_eigs)
    if isinstance(spec, Bellman):
        return max(_linear_value(f, x, r, p, X_eigs) for f in spec.families)
    if isinstance(spec, Isaacs):
        inner = max if spec.outer == "min" else min
        outer = min if spec.outer == "min" else max
        return outer(inner(_linear_value(f, x, r, p, X_eigs) for f in g) for g in spec.groups)
    raise ConfigurationError(f"unknown operator {spec!r}")


def evaluate_boundary(law: BoundaryLaw, x, r: float, p_dot_n: float) -> float:
    if isinstance(law, Dirichlet):
        return float(r)
    return law.gamma(x) * r + p_dot_n


def dual_operator(spec: OperatorSpec) -> OperatorSpec:
    """The operator G(x, r, p, X) = -F(x, -r, -p, -X).

    Pucci plus and minus swap, linear operators are self-dual, and max/min
    over families exchange roles.
    """
    if isinstance(spec, PucciPlus):
        return PucciMinus(spec.bounds, spec.drift, spec.zeroth)
    if isinstance(spec, PucciMinus):
        return PucciPlus(spec.bounds, spec.drift, spec.zeroth)
    if isinstance(spec, Linear):
        return spec
    if isinstance(spec, Bellman):
        # a single group under an outer max is a plain min over the families
        return Isaacs((spec.families,), outer="max")
    if isinstance(spec, Isaacs):
        return Isaacs(spec.groups, outer="min" if spec.outer == "max" else "max")
    raise ConfigurationError(f"unknown operator {spec!r}")


def linear_families(spec: OperatorSpec) -> list[Linear]:
    """All linear families appearing in ``spec`` (empty for Pucci operators)."""
    if isinstance(spec, Linear):
        return [spec]
    if isinstance(spec, Bellman):
        return list(spec.families)
    if isinstance(spec, Isaacs):
        return [f for g in spec.groups for f in g]
    return []


def zeroth_fields(spec: OperatorSpec) -> list[CoefficientField]:
    if isinstance(spec, (PucciPlus, PucciMinus)):
        return [spec.zeroth]
    return [f.zeroth for f in linear_families(spec)]


def drift_fields(spec: OperatorSpec) -> list[tuple[CoefficientField, ...]]:
    if isinstance(spec, (PucciPlus, PucciMinus)):
        return [spec.drift]
    return [f.drift for f in linear_families(spec)]


def structure_constants(spec: OperatorSpec, points: np.ndarray) -> tuple[float, float]:
    """Sup-norm estimates ``(b, c)`` of drift and zeroth-order coefficients on ``points``."""
    b = 0.0
    for drift in drift_fields(spec):
        if drift:
            vals = np.column_stack([d.evaluate(points) for d in drift])
            b = max(b, float(np.max(np.linalg.norm(vals, axis=1))))
    c = max(float(np.max(np.abs(z.evaluate(points)))) for z in zeroth_fields(spec))
    return b, c


def ellipticity_bounds(spec: OperatorSpec, points: np.ndarray) -> EllipticityBounds:
    """Bounds (a, A) valid on ``points``: exact for Pucci, sampled for families."""
    if isinstance(spec, (PucciPlus, PucciMinus)):
        return spec.bounds
    lo, hi = np.inf, -np.inf
    for fam in linear_families(spec):
        for d in fam.diffusion:
            vals = d.evaluate(points)
            lo, hi = min(lo, float(vals.min())), max(hi, float(vals.max()))
    return EllipticityBounds(lo, hi) if lo > 0 else _bad_diffusion(lo)


def _bad_diffusion(lo):
    raise ConfigurationError(f"diffusion must be positive on the grid, found minimum {lo}")


def check_ellipticity(spec: OperatorSpec, points: np.ndarray, bounds: EllipticityBounds | None = None) -> None:
    """Raise if some family's diffusion leaves [a, A] on the sampled points."""
    sampled = ellipticity_bounds(spec, points)
    if bounds is None:
        return
    if sampled.a < bounds.a - 1e-14 or sampled.A > bounds.A + 1e-14:
        raise ConfigurationError(
            f"diffusion range [{sampled.a}, {sampled.A}] violates ellipticity bounds [{bounds.a}, {bounds.A}]"
        )
