"""Pure characteristics demand: shares and welfare as exact normal integrals
over the upper envelope of per-consumer utility lines.

Conditional on a consumer's simulated tastes, utility for product j is a line
a_j + b_j*t in the remaining scalar coefficient t ~ N(0,1), with slope
b_j = z_j1 shared by all consumers. The product chosen at t is the owner of
the upper-envelope segment containing t, so shares are normal interval masses
and welfare is the exact normal moment of a piecewise-linear function. No
quadrature is involved; true zero shares come out as exact zeros.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .core import (
    DemandModel,
    InvalidInputError,
    ModelEvaluation,
    as_mean_utility,
    set_frozen_array,
)

# Owner sentinel for the outside option's zero line.
OUTSIDE = -1

_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _phi(t):
    """Standard normal pdf, exact 0 at +-inf."""
    return _INV_SQRT2PI * np.exp(-0.5 * np.square(t))


@dataclass(frozen=True)
class EnvelopeSegment:
    """One maximal interval of the upper envelope.

    owner is a product index or OUTSIDE; the owner's line a + b*t weakly
    dominates every other line on [lower, upper].
    """

    owner: int
    lower: float
    upper: float
    a: float
    b: float


def upper_envelope(lines, include_zero_line: bool = True) -> list[EnvelopeSegment]:
    """Upper envelope of affine functions t -> a + b*t.

    Args:
        lines: iterable of (owner, a, b) triples with integer owner >= 0.
        include_zero_line: also include the outside option's zero line,
            owned by OUTSIDE.

    Returns:
        Minimal left-to-right segment list covering (-inf, +inf): breakpoints
        strictly increasing, slopes strictly increasing, no zero-width pieces.
        Coincident lines are merged with the tie going to the lowest product
        index; OUTSIDE loses ties to any product.
    """
    entries = []
    for owner, a, b in lines:
        a = float(a)
        b = float(b)
        if not (math.isfinite(a) and math.isfinite(b)):
            raise InvalidInputError(f"line owned by {owner} has non-finite coefficients")
        entries.append((int(owner), a, b))
    if include_zero_line:
        entries.append((OUTSIDE, 0.0, 0.0))
    if not entries:
        raise InvalidInputError("need at least one line or the zero line")

    def tie_rank(owner: int) -> float:
        return math.inf if owner == OUTSIDE else owner

    # Among lines of equal slope only the highest intercept can ever win;
    # among coincident lines the preferred owner keeps the segment.
    best: dict[float, tuple[int, float, float]] = {}
    for owner, a, b in entries:
        cur = best.get(b)
        if cur is None or a > cur[1] or (a == cur[1] and tie_rank(owner) < tie_rank(cur[0])):
            best[b] = (owner, a, b)
    cand = sorted(best.values(), key=lambda e: e[2])

    # Convex-hull-style sweep in slope order: pop the stack top whenever the
    # incoming line overtakes it at or before the top's own start.
    stack = [cand[0]]
    starts = [-math.inf]
    for ent in cand[1:]:
        _, a, b = ent
        while True:
            _, ta, tb = stack[-1]
            t = (ta - a) / (b - tb)
            if t <= starts[-1]:
                stack.pop()
                starts.pop()
            else:
                break
        stack.append(ent)
        starts.append(t)

    uppers = starts[1:] + [math.inf]
    return [
        EnvelopeSegment(owner=o, lower=lo, upper=hi, a=a, b=b)
        for (o, a, b), lo, hi in zip(stack, starts, uppers)
    ]


@dataclass(frozen=True, eq=False)
class PureCharMarket(DemandModel):
    """One synthetic pure-characteristics market.

    Attributes:
        z: (J, M) product attributes; column 0 holds the slopes b_j that
            multiply the analytically integrated N(0,1) coefficient.
        nu_rest: (n, M-1) simulated draws for the remaining coefficients.
        beta: (M,) taste parameter with beta[0] == 1 (scale normalization);
            used only to construct true utilities.
    """

    z: np.ndarray
    nu_rest: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        z = set_frozen_array(self, "z", self.z)
        if z.ndim != 2 or z.shape[0] < 1 or z.shape[1] < 2:
            raise InvalidInputError(f"z must be a (J, M) matrix with J >= 1, M >= 2, got {z.shape}")
        J, M = z.shape
        nu = set_frozen_array(self, "nu_rest", self.nu_rest)
        if nu.ndim != 2 or nu.shape[0] < 1 or nu.shape[1] != M - 1:
            raise InvalidInputError(f"nu_rest must be (n, {M - 1}) with n >= 1, got {nu.shape}")
        beta = set_frozen_array(self, "beta", self.beta, shape=(M,))
        if beta[0] != 1.0:
            raise InvalidInputError(f"beta[0] must be exactly 1, got {beta[0]!r}")

        # Slope data shared by every consumer, precomputed once. The fast
        # interval-based evaluator needs all K = J+1 slopes (products plus the
        # zero line) distinct; ties fall back to the per-consumer sweep.
        slopes = np.append(z[:, 0], 0.0)
        order = np.argsort(slopes, kind="stable")
        object.__setattr__(self, "_slopes", slopes)
        object.__setattr__(self, "_order", order)
        object.__setattr__(self, "_generic", np.unique(slopes).size == slopes.size)

    @property
    def J(self) -> int:
        return self.z.shape[0]

    @property
    def M(self) -> int:
        return self.z.shape[1]

    @property
    def n(self) -> int:
        return self.nu_rest.shape[0]

    def intercepts(self, x) -> np.ndarray:
        """Per-consumer line intercepts a_ij = x_j + z_j[1:]'nu_i, shape (n, J)."""
        x = as_mean_utility(x, self.J)
        return x + self.nu_rest @ self.z[:, 1:].T

    def evaluate(self, x, want_jacobian: bool = False) -> ModelEvaluation:
        a = self.intercepts(x)
        if self._generic:
            return self._evaluate_intervals(a, want_jacobian)
        return self._evaluate_sweep(a, want_jacobian)

    def _evaluate_intervals(self, a, want_jacobian):
        """Vectorized evaluation via the interval formulation.

        With all slopes distinct, line c is on the envelope exactly on
        (L_c, R_c) where L_c is the largest crossing with a lower-slope line
        and R_c the smallest crossing with a higher-slope line. Valid only in
        the generic (distinct slopes) case.
        """
        J = self.J
        K = J + 1
        n = self.n
        order = self._order
        bs = self._slopes[order]

        diffb = bs[:, None] - bs[None, :]
        np.fill_diagonal(diffb, 1.0)  # diagonal is masked below
        lower_mask = np.tril(np.ones((K, K), dtype=bool), -1)
        upper_mask = np.triu(np.ones((K, K), dtype=bool), 1)
        positions = np.arange(K)

        width_sum = np.zeros(K)
        welfare_sum = 0.0
        flux = np.zeros((K, K)) if want_jacobian else None

        chunk = max(1, int(2_000_000) // (K * K))
        for i0 in range(0, n, chunk):
            block = a[i0 : i0 + chunk]
            m = block.shape[0]
            A = np.concatenate([block, np.zeros((m, 1))], axis=1)[:, order]
            cross = (A[:, None, :] - A[:, :, None]) / diffb
            L = np.where(lower_mask, cross, -np.inf).max(axis=2)
            R = np.where(upper_mask, cross, np.inf).min(axis=2)
            alive = L < R

            cdf_L = ndtr(L)
            cdf_R = ndtr(R)
            pdf_L = _phi(L)
            pdf_R = _phi(R)
            width = np.where(alive, np.maximum(cdf_R - cdf_L, 0.0), 0.0)
            width_sum += width.sum(axis=0)
            piece = A * (cdf_R - cdf_L) + bs * (pdf_L - pdf_R)
            welfare_sum += float(np.where(alive, piece, 0.0).sum())

            if want_jacobian:
                # Adjacent alive classes p < c share the breakpoint L_c; each
                # contributes the rank-one flux w*(e_p - e_q)(e_p - e_q)'.
                idx = np.where(alive, positions, -1)
                prev = np.maximum.accumulate(idx, axis=1)
                left = np.full_like(idx, -1)
                left[:, 1:] = prev[:, :-1]
                pair = alive & (left >= 0)
                rows, cs = np.nonzero(pair)
                ps = left[rows, cs]
                w = _phi(L[rows, cs]) / (bs[cs] - bs[ps])
                op = order[ps]
                oc = order[cs]
                flat = np.concatenate([op * K + op, oc * K + oc, op * K + oc, oc * K + op])
                vals = np.concatenate([w, w, -w, -w])
                flux += np.bincount(flat, weights=vals, minlength=K * K).reshape(K, K)

        widths = np.empty(K)
        widths[order] = width_sum
        shares = widths[:J] / n
        welfare = welfare_sum / n
        jac = flux[:J, :J] / n if want_jacobian else None
        return ModelEvaluation(welfare, shares, jac)

    def _evaluate_sweep(self, a, want_jacobian):
        """Reference evaluation: one envelope sweep per consumer.

        Handles duplicate slopes; also serves as the cross-check oracle for
        the vectorized path.
        """
        J = self.J
        K = J + 1
        b = self._slopes[:J]
        # owner OUTSIDE = -1 indexes the trailing slot, sliced off below
        width_sum = np.zeros(K)
        welfare_sum = 0.0
        flux = np.zeros((K, K)) if want_jacobian else None
        for i in range(self.n):
            segs = upper_envelope(
                [(j, a[i, j], b[j]) for j in range(J)], include_zero_line=True
            )
            lo = np.array([s.lower for s in segs])
            hi = np.array([s.upper for s in segs])
            sa = np.array([s.a for s in segs])
            sb = np.array([s.b for s in segs])
            owners = np.array([s.owner for s in segs])
            width = np.maximum(ndtr(hi) - ndtr(lo), 0.0)
            np.add.at(width_sum, owners, width)
            welfare_sum += float(sa @ width + sb @ (_phi(lo) - _phi(hi)))
            if want_jacobian:
                for s in range(1, len(segs)):
                    p = segs[s - 1].owner
                    q = segs[s].owner
                    w = float(_phi(segs[s].lower)) / (segs[s].b - segs[s - 1].b)
                    flux[p, p] += w
                    flux[q, q] += w
                    flux[p, q] -= w
                    flux[q, p] -= w
        shares = width_sum[:J] / self.n
        welfare = welfare_sum / self.n
        jac = flux[:J, :J] / self.n if want_jacobian else None
        return ModelEvaluation(welfare, shares, jac)


def make_purechar_instance(J: int, M: int, n: int, seed):
    """Draw a synthetic pure-characteristics market with its true utilities and shares.

    beta = (1, beta_rest) with beta_rest ~ Uniform[0,1]^(M-1), z_j ~ N(0, I_M),
    nu_i ~ N(0, I_(M-1)), each from its own child of the seeded stream.
    x* = z beta and sigma* = shares at x*; degenerate instances (some share
    numerically zero) are expected and kept.

    Returns:
        (market, x_star, sigma_star)
    """
    if J < 1 or M < 2 or n < 1:
        raise InvalidInputError("need J >= 1, M >= 2, n >= 1")
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    ss_beta, ss_z, ss_nu = root.spawn(3)
    beta = np.concatenate([[1.0], np.random.Generator(np.random.Philox(ss_beta)).random(M - 1)])
    z = np.random.Generator(np.random.Philox(ss_z)).standard_normal((J, M))
    nu_rest = np.random.Generator(np.random.Philox(ss_nu)).standard_normal((n, M - 1))
    market = PureCharMarket(z=z, nu_rest=nu_rest, beta=beta)
    x_star = z @ beta
    sigma_star = market.evaluate(x_star).shares
    return market, x_star, sigma_star
