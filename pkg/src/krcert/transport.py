"""Monotone triangular (Knothe-Rosenblatt) transport maps.

A triangular map ``T`` on ``d`` coordinates evaluates coordinate ``i`` from
the inputs ``z[0..i]`` only, and is strictly increasing in ``z[i]`` for any
fixed prefix.  The module provides

* factorizing reference measures (uniform unit cube, standard normal product),
* map components: integrated Bernstein densities and monotone affine forms,
* composition nodes and reference restrictions to axis-box unions,
* forward / prefix-inverse / conditional / pushforward sampling, and
* a JSON/TOML map-definition file format.

All map and measure objects are immutable after construction and safe to
share across threads.  Sampling is deterministic given an explicit seed (see
:mod:`krcert.parallel` for the chunked-seed contract).
"""

from __future__ import annotations

import itertools
import json
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.stats import norm

from .errors import (
    ConstructionError,
    DegenerateSetError,
    DomainError,
    NoRootError,
    ParameterError,
)
from .parallel import run_chunked, sub_seed

UNIFORM = "uniform-unit-cube"
NORMAL = "standard-normal-product"

DEFAULT_INVERT_TOL = 1e-10
MAX_BISECT_ITER = 200


# ---------------------------------------------------------------------------
# Reference measures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReferenceMeasure:
    """A factorizing reference measure: d i.i.d. coordinates.

    kind is one of ``uniform-unit-cube`` or ``standard-normal-product``
    (short aliases ``uniform`` / ``normal`` accepted).
    """

    kind: str
    dim: int

    def __post_init__(self):
        aliases = {"uniform": UNIFORM, "normal": NORMAL, UNIFORM: UNIFORM, NORMAL: NORMAL}
        if self.kind not in aliases:
            raise ConstructionError(f"unknown reference kind {self.kind!r}")
        object.__setattr__(self, "kind", aliases[self.kind])
        if int(self.dim) < 1:
            raise ConstructionError(f"dimension must be >= 1, got {self.dim}")
        object.__setattr__(self, "dim", int(self.dim))

    @property
    def is_uniform(self) -> bool:
        return self.kind == UNIFORM

    def domain_bounds(self) -> tuple[float, float]:
        return (0.0, 1.0) if self.is_uniform else (-np.inf, np.inf)

    def marginal_cdf(self, x: np.ndarray) -> np.ndarray:
        if self.is_uniform:
            return np.clip(x, 0.0, 1.0)
        return norm.cdf(x)

    def marginal_ppf(self, u: np.ndarray) -> np.ndarray:
        if self.is_uniform:
            return np.clip(u, 0.0, 1.0)
        return norm.ppf(u)

    def with_dim(self, dim: int) -> "ReferenceMeasure":
        return ReferenceMeasure(self.kind, dim)

    def sample(self, n: int, seed: int) -> np.ndarray:
        """Draw ``n`` i.i.d. rows; chunk-seeded, deterministic given seed."""
        if n < 1:
            raise ParameterError(f"need at least one sample, got n={n}")
        d = self.dim

        if self.is_uniform:
            def worker(s, m):
                return np.random.default_rng(s).random((m, d))
        else:
            def worker(s, m):
                return np.random.default_rng(s).standard_normal((m, d))

        return run_chunked(worker, seed, n)


def sample_reference(ref: ReferenceMeasure, n: int, seed: int) -> np.ndarray:
    """Sample an ``n x d`` matrix of i.i.d. reference draws."""
    return ref.sample(n, seed)


# ---------------------------------------------------------------------------
# Bernstein basis helpers
# ---------------------------------------------------------------------------


def bernstein_basis(degree: int, x: np.ndarray) -> np.ndarray:
    """Evaluate the full Bernstein basis of the given degree.

    Returns an array of shape ``x.shape + (degree + 1,)`` whose rows form a
    partition of unity on [0, 1].
    """
    x = np.asarray(x, dtype=float)
    k = np.arange(degree + 1)
    binom = np.array([math.comb(degree, int(j)) for j in k], dtype=float)
    xk = np.power(x[..., None], k)
    yk = np.power(1.0 - x[..., None], degree - k)
    return binom * xk * yk


# ---------------------------------------------------------------------------
# Map components
# ---------------------------------------------------------------------------


class MonotoneComponent(ABC):
    """One triangular map coordinate: strictly increasing in its last input.

    ``arity`` is the total number of consumed inputs (prefix length + 1).
    """

    arity: int

    @abstractmethod
    def evaluate(self, prefix: np.ndarray, t: np.ndarray) -> np.ndarray:
        """Evaluate at prefix rows ``(n, arity-1)`` and last inputs ``(n,)``."""

    def invert(self, prefix: np.ndarray, x: np.ndarray, tol: float) -> np.ndarray:
        """Solve ``evaluate(prefix, t) == x`` for t; default is bisection."""
        return _bisect_component(self, prefix, x, tol)

    @property
    def requires_unit_cube(self) -> bool:
        return False

    def to_dict(self) -> dict:
        raise ParameterError(f"{type(self).__name__} is not serializable")


class BernsteinComponent(MonotoneComponent):
    """Integrated nonnegative Bernstein density (polynomial ansatz).

    The component value at prefix ``p`` and last input ``t`` is

        integral over [0, t] of  sum_k  beta_k(p) * B_k^m(tau)  d tau

    where ``beta_k(p)`` expands the prefix in a tensor-product Bernstein
    basis with one axis per prefix argument.  The coefficient tensor has
    shape ``(deg_1+1, ..., deg_{r}+1, m+1)``; the basis index runs over the
    full range ``0..m`` (m+1 functions), so constant-one coefficients give
    the identity via the partition of unity.

    Coefficients must be nonnegative and are rescaled at construction so
    every prefix-fiber sums to ``m + 1``; this pins ``evaluate(p, 1) == 1``
    for every prefix and makes the component a bijection of [0, 1].
    """

    def __init__(self, coefficients: np.ndarray):
        coeffs = np.array(coefficients, dtype=float)
        if coeffs.ndim < 1:
            raise ConstructionError("coefficient tensor must have at least one axis")
        if not np.all(np.isfinite(coeffs)):
            raise ConstructionError("coefficients must be finite")
        if np.any(coeffs < 0):
            raise ConstructionError("Bernstein coefficients must be nonnegative")
        fiber_sums = coeffs.sum(axis=-1, keepdims=True)
        if np.any(fiber_sums <= 0):
            raise ConstructionError(
                "every coefficient fiber needs a positive entry (degenerate density)"
            )
        m = coeffs.shape[-1] - 1
        coeffs = coeffs * ((m + 1) / fiber_sums)
        coeffs.flags.writeable = False
        self._coeffs = coeffs
        self.arity = coeffs.ndim
        self.degrees = tuple(s - 1 for s in coeffs.shape)

    @property
    def coefficients(self) -> np.ndarray:
        return self._coeffs

    @property
    def requires_unit_cube(self) -> bool:
        return True

    def density_coefficients(self, prefix: np.ndarray) -> np.ndarray:
        """Contract the prefix axes: per-row integrand coefficients (n, m+1)."""
        out = self._coeffs
        for a in range(self.arity - 1):
            basis = bernstein_basis(self.degrees[a], prefix[:, a])
            if a == 0:
                # (n, S_a) x (S_a, rest) -> (n, rest)
                out = np.tensordot(basis, out, axes=(1, 0))
            else:
                out = np.einsum("ns,ns...->n...", basis, out)
        return out

    def _beta(self, prefix: np.ndarray, n: int) -> np.ndarray:
        if self.arity == 1:
            return np.broadcast_to(self._coeffs, (n, self._coeffs.shape[0]))
        return self.density_coefficients(prefix)

    def evaluate(self, prefix: np.ndarray, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        beta = self._beta(prefix, t.shape[0])
        return self.evaluate_prepared(beta, t)

    @staticmethod
    def evaluate_prepared(beta: np.ndarray, t: np.ndarray) -> np.ndarray:
        """Evaluate from precomputed integrand coefficients (bisection path).

        The antiderivative of a degree-m Bernstein combination is the
        degree-(m+1) combination with scaled cumulative-sum coefficients.
        """
        m = beta.shape[-1] - 1
        gamma = np.concatenate(
            [np.zeros(beta.shape[:-1] + (1,)), np.cumsum(beta, axis=-1)], axis=-1
        ) / (m + 1)
        basis = bernstein_basis(m + 1, t)
        return np.einsum("...k,...k->...", gamma, basis)

    def density(self, prefix: np.ndarray, t: np.ndarray) -> np.ndarray:
        """Derivative in the last argument (the transported density factor)."""
        t = np.asarray(t, dtype=float)
        beta = self._beta(prefix, t.shape[0])
        basis = bernstein_basis(beta.shape[-1] - 1, t)
        return np.einsum("...k,...k->...", beta, basis)

    def invert(self, prefix: np.ndarray, x: np.ndarray, tol: float) -> np.ndarray:
        beta = self._beta(prefix, np.asarray(x).shape[0])
        return _bisect_prepared(
            lambda t: self.evaluate_prepared(beta, t), x, lo=0.0, hi=1.0, tol=tol
        )

    def to_dict(self) -> dict:
        return {
            "type": "bernstein",
            "degrees": list(self.degrees),
            "coefficients": self._coeffs.tolist(),
        }


class AffineComponent(MonotoneComponent):
    """Monotone affine coordinate ``intercept + w . prefix + w_last * t``.

    The last weight must be strictly positive.  Used for identity maps and
    linear test maps; unlike Bernstein components it admits a nonzero value
    at ``t = 0``.
    """

    def __init__(self, intercept: float, weights: Sequence[float]):
        w = np.array(weights, dtype=float)
        if w.ndim != 1 or w.size < 1:
            raise ConstructionError("weights must be a nonempty vector")
        if not (np.all(np.isfinite(w)) and np.isfinite(intercept)):
            raise ConstructionError("affine parameters must be finite")
        if w[-1] <= 0:
            raise ConstructionError("last affine weight must be positive (monotonicity)")
        w.flags.writeable = False
        self.intercept = float(intercept)
        self.weights = w
        self.arity = w.size

    def evaluate(self, prefix: np.ndarray, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = self.intercept + self.weights[-1] * t
        if self.arity > 1:
            out = out + prefix[:, : self.arity - 1] @ self.weights[:-1]
        return out

    def invert(self, prefix: np.ndarray, x: np.ndarray, tol: float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        shift = self.intercept
        if self.arity > 1:
            shift = shift + prefix[:, : self.arity - 1] @ self.weights[:-1]
        return (x - shift) / self.weights[-1]

    def to_dict(self) -> dict:
        return {
            "type": "affine",
            "intercept": self.intercept,
            "weights": self.weights.tolist(),
        }


def _bisect_prepared(fn, x, lo, hi, tol):
    """Vectorized bisection of a monotone scalar family on [lo, hi].

    ``fn`` maps a vector of t-values to function values; each lane stops once
    its forward error is below tol or its bracket collapses to fp resolution.
    Raises NoRootError when a target is outside the bracket range.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    lo_arr = np.full(n, lo, dtype=float)
    hi_arr = np.full(n, hi, dtype=float)
    f_lo = fn(lo_arr)
    f_hi = fn(hi_arr)
    if np.any(x < f_lo - tol) or np.any(x > f_hi + tol):
        raise NoRootError(
            "inversion target outside component range "
            f"[{float(np.min(f_lo)):.6g}, {float(np.max(f_hi)):.6g}]"
        )
    x_clipped = np.clip(x, f_lo, f_hi)
    for _ in range(MAX_BISECT_ITER):
        mid = 0.5 * (lo_arr + hi_arr)
        f_mid = fn(mid)
        go_up = f_mid < x_clipped
        lo_arr = np.where(go_up, mid, lo_arr)
        hi_arr = np.where(go_up, hi_arr, mid)
        done = (np.abs(f_mid - x_clipped) <= 0.5 * tol) | (hi_arr - lo_arr < 1e-15)
        if np.all(done):
            break
    return 0.5 * (lo_arr + hi_arr)


def _bisect_component(comp, prefix, x, tol):
    return _bisect_prepared(lambda t: comp.evaluate(prefix, t), x, 0.0, 1.0, tol)


# ---------------------------------------------------------------------------
# Triangular maps
# ---------------------------------------------------------------------------


class TriangularMap(ABC):
    """Common interface of componentwise, composed and restriction maps."""

    @property
    @abstractmethod
    def dim(self) -> int: ...

    @property
    def requires_unit_cube(self) -> bool:
        return False

    @abstractmethod
    def forward_partial(self, z: np.ndarray, upto: int) -> np.ndarray:
        """First ``upto`` output coordinates from the first ``upto`` inputs."""

    def forward(self, z: np.ndarray) -> np.ndarray:
        """Evaluate the full map on rows ``(n, d)``."""
        z = _as_points(z, self.dim)
        return self.forward_partial(z, self.dim)

    @abstractmethod
    def invert_prefix(self, x_prefix: np.ndarray, tol: float = DEFAULT_INVERT_TOL) -> np.ndarray:
        """Recover the unique z-prefix with ``forward(z)[:i] == x_prefix``."""


def _as_points(z, dim: int | None = None, name: str = "z") -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[None, :]
    if z.ndim != 2:
        raise ParameterError(f"{name} must be a point or a point matrix")
    if dim is not None and z.shape[1] != dim:
        raise ParameterError(f"{name} has {z.shape[1]} columns, map needs {dim}")
    return z


def _check_cube(z: np.ndarray) -> None:
    if z.size and (np.min(z) < -1e-12 or np.max(z) > 1 + 1e-12):
        raise DomainError("point outside the unit-cube domain")


class ComponentwiseMap(TriangularMap):
    """Triangular map given by an ordered list of monotone components."""

    def __init__(self, components: Sequence[MonotoneComponent]):
        comps = list(components)
        if not comps:
            raise ConstructionError("a map needs at least one component")
        for i, c in enumerate(comps):
            if c.arity != i + 1:
                raise ConstructionError(
                    f"component {i} consumes {c.arity} inputs, expected {i + 1}"
                )
        self._components = tuple(comps)

    @property
    def dim(self) -> int:
        return len(self._components)

    @property
    def components(self) -> tuple[MonotoneComponent, ...]:
        return self._components

    @property
    def requires_unit_cube(self) -> bool:
        return any(c.requires_unit_cube for c in self._components)

    def forward_partial(self, z: np.ndarray, upto: int) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape[1] < upto:
            raise ParameterError(f"need {upto} input columns, got {z.shape[1]}")
        if self.requires_unit_cube:
            _check_cube(z[:, :upto])
        out = np.empty((z.shape[0], upto))
        for i in range(upto):
            out[:, i] = self._components[i].evaluate(z[:, :i], z[:, i])
        return out

    def invert_prefix(self, x_prefix: np.ndarray, tol: float = DEFAULT_INVERT_TOL) -> np.ndarray:
        x = _as_points(x_prefix, None, "x_prefix")
        i = x.shape[1]
        if i > self.dim:
            raise ParameterError(f"prefix length {i} exceeds dimension {self.dim}")
        z = np.empty_like(x)
        for k in range(i):
            z[:, k] = self._components[k].invert(z[:, :k], x[:, k], tol)
        return z

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "dimension": self.dim,
            "components": [c.to_dict() for c in self._components],
        }


class CompositionMap(TriangularMap):
    """Lazy composition node ``outer o inner`` (no coefficient re-expansion)."""

    def __init__(self, outer: TriangularMap, inner: TriangularMap):
        if outer.dim != inner.dim:
            raise ConstructionError(
                f"dimension mismatch: outer has {outer.dim}, inner has {inner.dim}"
            )
        self.outer = outer
        self.inner = inner

    @property
    def dim(self) -> int:
        return self.outer.dim

    @property
    def requires_unit_cube(self) -> bool:
        return self.inner.requires_unit_cube

    def forward_partial(self, z: np.ndarray, upto: int) -> np.ndarray:
        return self.outer.forward_partial(self.inner.forward_partial(z, upto), upto)

    def invert_prefix(self, x_prefix: np.ndarray, tol: float = DEFAULT_INVERT_TOL) -> np.ndarray:
        return self.inner.invert_prefix(self.outer.invert_prefix(x_prefix, tol), tol)


def compose(outer: TriangularMap, inner: TriangularMap) -> TriangularMap:
    """The triangular map ``z -> outer(inner(z))``."""
    return CompositionMap(outer, inner)


def identity_map(d: int) -> ComponentwiseMap:
    """The identity as a triangular map on d coordinates."""
    return ComponentwiseMap(
        [AffineComponent(0.0, [0.0] * i + [1.0]) for i in range(d)]
    )


def forward(tmap: TriangularMap, z) -> np.ndarray:
    """Evaluate a triangular map on a point or point matrix."""
    single = np.asarray(z).ndim == 1
    out = tmap.forward(_as_points(z, tmap.dim))
    return out[0] if single else out


# ---------------------------------------------------------------------------
# Good sets and reference restriction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GoodSetSpec:
    """A good set in the reference domain.

    Either a union of axis-aligned boxes (used exactly by
    :func:`restrict_reference`) or a membership predicate for
    validation-only rejection sampling.
    """

    boxes: tuple[tuple[tuple[float, ...], tuple[float, ...]], ...] = ()
    predicate: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False)

    @classmethod
    def from_boxes(cls, boxes: Sequence[tuple[Sequence[float], Sequence[float]]]) -> "GoodSetSpec":
        frozen = []
        for lo, hi in boxes:
            lo = tuple(float(v) for v in lo)
            hi = tuple(float(v) for v in hi)
            if len(lo) != len(hi):
                raise ConstructionError("box lo/hi lengths differ")
            frozen.append((lo, hi))
        return cls(boxes=tuple(frozen))

    @classmethod
    def from_predicate(cls, fn: Callable[[np.ndarray], np.ndarray]) -> "GoodSetSpec":
        return cls(predicate=fn)

    def contains(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.predicate is not None:
            return np.asarray(self.predicate(z), dtype=bool)
        if not self.boxes:
            return np.zeros(z.shape[0], dtype=bool)
        inside = np.zeros(z.shape[0], dtype=bool)
        for lo, hi in self.boxes:
            lo_a, hi_a = np.asarray(lo), np.asarray(hi)
            inside |= np.all((z >= lo_a) & (z <= hi_a), axis=1)
        return inside


def _boxes_overlap(a, b) -> bool:
    (alo, ahi), (blo, bhi) = a, b
    return all(max(l1, l2) < min(h1, h2) for l1, h1, l2, h2 in zip(alo, ahi, blo, bhi))


def _disjoint_cells(boxes, d: int):
    """Canonicalize a box union into boxes with pairwise-disjoint interiors."""
    boxes = [b for b in boxes if all(h > l for l, h in zip(b[0], b[1]))]
    if not boxes:
        return []
    if not any(
        _boxes_overlap(boxes[i], boxes[j])
        for i in range(len(boxes))
        for j in range(i + 1, len(boxes))
    ):
        return boxes
    # Grid decomposition: the union is exactly a union of grid cells.
    edges = []
    for j in range(d):
        vals = sorted({b[0][j] for b in boxes} | {b[1][j] for b in boxes})
        edges.append(vals)
    cells = []
    for idx in itertools.product(*(range(len(e) - 1) for e in edges)):
        lo = tuple(edges[j][idx[j]] for j in range(d))
        hi = tuple(edges[j][idx[j] + 1] for j in range(d))
        center = np.array([(l + h) / 2 for l, h in zip(lo, hi)])[None, :]
        for blo, bhi in boxes:
            if np.all(center[0] >= blo) and np.all(center[0] <= bhi):
                cells.append((lo, hi))
                break
    return cells


class BoxRestrictionMap(TriangularMap):
    """KR map pushing a factorizing reference onto its restriction to a box
    union, built by sequential conditional-CDF inversion.

    For the uniform reference the per-coordinate conditional CDFs are
    piecewise linear; for the normal reference they are piecewise normal-CDF
    segments.  Forward maps the whole domain onto the good set; the prefix
    inverse is analytic.
    """

    def __init__(self, ref: ReferenceMeasure, good: GoodSetSpec):
        if good.boxes is None or len(good.boxes) == 0:
            raise DegenerateSetError("good set is an empty box union")
        d = ref.dim
        for lo, hi in good.boxes:
            if len(lo) != d:
                raise ConstructionError(f"box arity {len(lo)} != reference dim {d}")
        dom_lo, dom_hi = ref.domain_bounds()
        clipped = []
        for lo, hi in good.boxes:
            lo = tuple(min(max(v, dom_lo), dom_hi) for v in lo)
            hi = tuple(min(max(v, dom_lo), dom_hi) for v in hi)
            clipped.append((lo, hi))
        cells = _disjoint_cells(clipped, d)
        if not cells:
            raise DegenerateSetError("good set has zero reference measure")
        self._ref = ref
        self._lo = np.array([c[0] for c in cells])  # (C, d)
        self._hi = np.array([c[1] for c in cells])
        self._lo.flags.writeable = False
        self._hi.flags.writeable = False
        # F-measure of every cell interval, per coordinate: (C, d)
        self._flo = ref.marginal_cdf(self._lo)
        self._fhi = ref.marginal_cdf(self._hi)
        self._fmeas = self._fhi - self._flo
        mass = float(np.prod(self._fmeas, axis=1).sum())
        if mass <= 0:
            raise DegenerateSetError("good set has zero reference measure")
        self._mass = mass
        # Per coordinate: sorted unique segment edges over all cells.
        self._seg_edges = [
            np.unique(np.concatenate([self._lo[:, j], self._hi[:, j]])) for j in range(d)
        ]

    @property
    def dim(self) -> int:
        return self._ref.dim

    @property
    def reference(self) -> ReferenceMeasure:
        return self._ref

    @property
    def good_measure(self) -> float:
        return self._mass

    def _segment_weights(self, i: int, x_prefix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-point conditional weights over coordinate-i segments.

        Returns (weights (n, K), segment F-measures (K,)).  The weight of a
        segment is the suffix reference mass of all cells whose prefix box
        contains the point's prefix and whose i-interval covers the segment.
        """
        edges = self._seg_edges[i]
        fedges = self._ref.marginal_cdf(edges)
        n = x_prefix.shape[0]
        k = len(edges) - 1
        weights = np.zeros((n, k))
        mids = 0.5 * (edges[:-1] + edges[1:])
        for c in range(self._lo.shape[0]):
            if i == 0:
                active = np.ones(n, dtype=bool)
            else:
                active = np.all(
                    (x_prefix >= self._lo[c, :i] - 1e-12)
                    & (x_prefix <= self._hi[c, :i] + 1e-12),
                    axis=1,
                )
            if not active.any():
                continue
            suffix_mass = float(np.prod(self._fmeas[c, i + 1 :]))
            covers = (mids > self._lo[c, i]) & (mids < self._hi[c, i])
            weights[np.ix_(active, covers)] += suffix_mass
        return weights, fedges

    def forward_partial(self, z: np.ndarray, upto: int) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        n = z.shape[0]
        out = np.empty((n, upto))
        for i in range(upto):
            u = self._ref.marginal_cdf(z[:, i])
            weights, fedges = self._segment_weights(i, out[:, :i])
            seg_f = np.diff(fedges)  # (K,)
            mass = weights * seg_f
            total = mass.sum(axis=1)
            if np.any(total <= 0):
                raise DomainError("prefix escaped the good set (zero conditional mass)")
            target = u * total
            cum = np.cumsum(mass, axis=1)
            idx = np.minimum((cum < target[:, None] - 1e-300).sum(axis=1), mass.shape[1] - 1)
            rows = np.arange(n)
            cum_before = cum[rows, idx] - mass[rows, idx]
            seg_mass = mass[rows, idx]
            frac = np.where(seg_mass > 0, (target - cum_before) / np.where(seg_mass > 0, seg_mass, 1.0), 0.0)
            f_x = fedges[idx] + np.clip(frac, 0.0, 1.0) * seg_f[idx]
            x = self._ref.marginal_ppf(f_x)
            out[:, i] = np.clip(x, self._seg_edges[i][idx], self._seg_edges[i][idx + 1])
        return out

    def invert_prefix(self, x_prefix: np.ndarray, tol: float = DEFAULT_INVERT_TOL) -> np.ndarray:
        x = _as_points(x_prefix, None, "x_prefix")
        if x.shape[1] > self.dim:
            raise ParameterError("prefix longer than map dimension")
        n = x.shape[0]
        z = np.empty_like(x)
        for i in range(x.shape[1]):
            weights, fedges = self._segment_weights(i, x[:, :i])
            seg_f = np.diff(fedges)
            mass = weights * seg_f
            total = mass.sum(axis=1)
            edges = self._seg_edges[i]
            idx = np.clip(np.searchsorted(edges, x[:, i], side="right") - 1, 0, len(edges) - 2)
            rows = np.arange(n)
            inside = (
                (x[:, i] >= edges[0] - tol)
                & (x[:, i] <= edges[-1] + tol)
                & (weights[rows, idx] > 0)
                & (total > 0)
            )
            if not np.all(inside):
                raise NoRootError("point outside the range of the restriction map")
            fx = self._ref.marginal_cdf(x[:, i])
            cum = np.cumsum(mass, axis=1)
            cum_before = cum[rows, idx] - mass[rows, idx]
            g = (cum_before + weights[rows, idx] * (fx - fedges[idx])) / total
            z[:, i] = self._ref.marginal_ppf(np.clip(g, 0.0, 1.0))
        return z


def restrict_reference(ref: ReferenceMeasure, good: GoodSetSpec) -> TriangularMap:
    """The unique KR map pushing ``ref`` onto ``ref`` conditioned on the good set."""
    if good.predicate is not None and not good.boxes:
        raise ParameterError(
            "restrict_reference needs an axis-box union; predicates support "
            "rejection-sampling validation only"
        )
    return BoxRestrictionMap(ref, good)


# ---------------------------------------------------------------------------
# Sampling through maps
# ---------------------------------------------------------------------------


def pushforward_sample(tmap: TriangularMap, ref: ReferenceMeasure, n: int, seed: int) -> np.ndarray:
    """Rows ``T(z)`` for z drawn from the reference; deterministic given seed."""
    if ref.dim != tmap.dim:
        raise ParameterError(f"reference dim {ref.dim} != map dim {tmap.dim}")
    return tmap.forward(ref.sample(n, seed))


def conditional_sample(
    tmap: TriangularMap,
    ref: ReferenceMeasure,
    x_prefix: Sequence[float],
    n: int,
    seed: int,
    tol: float = DEFAULT_INVERT_TOL,
) -> np.ndarray:
    """Sample the conditional law of the trailing coordinates given a prefix.

    Inverts the prefix through the first components and pushes fresh
    reference draws through the trailing ones; returns ``(n, d - i)`` rows.
    """
    x_prefix = np.asarray(x_prefix, dtype=float).reshape(-1)
    i = x_prefix.size
    d = tmap.dim
    if not 1 <= i < d:
        raise ParameterError(f"prefix length must be in [1, {d - 1}], got {i}")
    zbar = tmap.invert_prefix(x_prefix[None, :], tol)
    tau = ref.with_dim(d - i).sample(n, seed)
    full = np.empty((n, d))
    full[:, :i] = zbar
    full[:, i:] = tau
    return tmap.forward(full)[:, i:]


def rejection_sample_good(
    tmap: TriangularMap,
    ref: ReferenceMeasure,
    good: GoodSetSpec,
    n: int,
    seed: int,
    max_batches: int = 200,
) -> np.ndarray:
    """Validation-only sampler of the pushforward conditioned on ``T(good)``.

    Draws reference points, keeps those inside the good set and pushes them
    forward; used as the independent route when testing restrictions.
    """
    if n < 1:
        raise ParameterError(f"need at least one sample, got n={n}")
    out = []
    got = 0
    for b in range(max_batches):
        z = ref.sample(max(2 * n, 1024), sub_seed(seed, b))
        keep = good.contains(z)
        if keep.any():
            out.append(tmap.forward(z[keep]))
            got += int(keep.sum())
        if got >= n:
            break
    if got < n:
        raise DegenerateSetError("rejection sampling starved: good set too small")
    return np.concatenate(out, axis=0)[:n]


# ---------------------------------------------------------------------------
# Map definition files
# ---------------------------------------------------------------------------


def _component_from_dict(spec: dict) -> MonotoneComponent:
    kind = spec.get("type", "bernstein")
    if kind == "bernstein":
        coeffs = np.array(spec["coefficients"], dtype=float)
        if "degrees" in spec:
            declared = tuple(int(v) for v in spec["degrees"])
            if tuple(s - 1 for s in coeffs.shape) != declared:
                raise ConstructionError(
                    f"coefficient shape {coeffs.shape} does not match degrees {declared}"
                )
        return BernsteinComponent(coeffs)
    if kind == "affine":
        return AffineComponent(float(spec.get("intercept", 0.0)), spec["weights"])
    raise ConstructionError(f"unknown component type {kind!r}")


def map_from_dict(spec: dict) -> ComponentwiseMap:
    try:
        comps = [_component_from_dict(c) for c in spec["components"]]
    except KeyError as e:
        raise ConstructionError(f"map definition missing key {e}") from e
    tmap = ComponentwiseMap(comps)
    if "dimension" in spec and int(spec["dimension"]) != tmap.dim:
        raise ConstructionError(
            f"declared dimension {spec['dimension']} != {tmap.dim} components"
        )
    return tmap


def load_map(path: str | Path) -> ComponentwiseMap:
    """Load a map definition from a JSON or TOML file."""
    path = Path(path)
    if path.suffix == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python 3.10
            import tomli as tomllib
        spec = tomllib.loads(path.read_text())
    else:
        spec = json.loads(path.read_text())
    return map_from_dict(spec)


def save_map(tmap: ComponentwiseMap, path: str | Path) -> None:
    """Write a componentwise map as a JSON definition file."""
    Path(path).write_text(json.dumps(tmap.to_dict(), indent=2, sort_keys=True))
