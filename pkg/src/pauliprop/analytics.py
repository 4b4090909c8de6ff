"""Operator-complexity measures, truncation-error bounds, and structure checks.

The central quantity is the squared-coefficient Renyi entropy of a sparse
operator: S_alpha = (1/(1-alpha)) ln Sum_a (c_a^2)^alpha in natural log.
It is computed on the coefficients as given (no forced normalization); a
warning is emitted when the squared mass is not 1 within 1e-6, since the
entropy's usual interpretation assumes a norm-preserving evolution of a
normalized observable.

From the entropy follow two calculators: an upper bound on the log tail
mass past rank K, and the minimal retained-term budget sufficient for a
target error.  Both are restricted to order parameters strictly between
0 and 1.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from .sparse import PauliSum, squared_tail

LN_FLOAT_MAX = math.log(np.finfo(np.float64).max)


class UnnormalizedOperatorWarning(UserWarning):
    """Entropy requested for an operator whose squared mass is not 1."""


@dataclass(frozen=True)
class OseResult:
    """Squared-coefficient Renyi entropy of order alpha, in nats.

    alpha = 1 encodes the Shannon limit.
    """

    alpha: float
    value: float


@dataclass(frozen=True)
class BoundReport:
    """Entropy-based truncation bound summary for one (K, alpha) choice.

    ln_delta_bound bounds the log of the squared tail mass past rank K.
    When produced by a budget query, epsilon is the target error and
    K_required the smallest sufficient budget.
    """

    K: int
    alpha: float
    S: float
    ln_delta_bound: float
    epsilon: float | None = None
    K_required: int | None = None


class TruncationError(NamedTuple):
    exact: float
    bound: float


def _squares(sum_: PauliSum) -> np.ndarray:
    sq = np.fromiter(
        (c * c for _, c in sum_.key_items()), dtype=np.float64, count=len(sum_)
    )
    return sq


def _renyi_from_squares(sq: np.ndarray, alpha: float) -> float:
    """Entropy of a positive squared-coefficient array; no normalization."""
    total = float(sq.sum())
    if alpha == 1.0:
        p = sq / total
        return float(-(p * np.log(p)).sum() + math.log(total))
    return float(logsumexp(alpha * np.log(sq)) / (1.0 - alpha))


def ose(sum_: PauliSum, alpha: float) -> OseResult:
    """Squared-coefficient Renyi entropy of the operator, order alpha in (0, 1].

    alpha = 1 returns the Shannon limit -Sum p ln p + ln Sum c^2 with
    p = c^2 / Sum c^2.  Raises on an empty operator.
    """
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if len(sum_) == 0:
        raise ValueError("entropy of an empty operator is undefined")
    sq = _squares(sum_)
    total = float(sq.sum())
    if abs(total - 1.0) > 1e-6:
        warnings.warn(
            f"operator squared mass is {total:.6g}, not 1; entropy uses raw coefficients",
            UnnormalizedOperatorWarning,
            stacklevel=2,
        )
    return OseResult(alpha=alpha, value=_renyi_from_squares(sq, alpha))


def ose_values_from_squares(sq: np.ndarray) -> tuple[float, float]:
    """(alpha = 1/2, Shannon) entropies of a squared-coefficient array.

    The array is normalized to unit mass first; used for trajectory columns
    where the evolving operator's own norm is tracked separately.
    """
    total = float(sq.sum())
    if total <= 0.0 or sq.size == 0:
        raise ValueError("entropy of an empty operator is undefined")
    p = sq / total
    return _renyi_from_squares(p, 0.5), _renyi_from_squares(p, 1.0)


def delta_bound(S: float, K: int, alpha: float) -> float:
    """Log upper bound on the squared tail mass past rank K.

    ln Delta(K) <= ((1-alpha)/alpha) (S - ln K) + ln(alpha/(1-alpha))
    for the order-alpha entropy S, valid for 0 < alpha < 1.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if K < 1:
        raise ValueError("K must be >= 1")
    return ((1.0 - alpha) / alpha) * (S - math.log(K)) + math.log(alpha / (1.0 - alpha))


def k_prescription(S: float, epsilon: float, alpha: float) -> int:
    """Smallest retained-term budget sufficient for error epsilon.

    Returns ceil(exp(S) * (2 alpha / ((1-alpha) epsilon^2))^(alpha/(1-alpha))),
    clamped to 1 when epsilon^2 >= 2 (a tail mass of 1 already suffices).
    Raises OverflowError, reporting the log of the required budget, when it
    exceeds the representable range.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if epsilon <= 0.0:
        raise ValueError("epsilon must be > 0")
    if epsilon * epsilon >= 2.0:
        return 1
    ratio = alpha / (1.0 - alpha)
    ln_k = S + ratio * math.log(2.0 * alpha / ((1.0 - alpha) * epsilon * epsilon))
    if ln_k > LN_FLOAT_MAX:
        raise OverflowError(
            f"required K exceeds representable budget (ln K = {ln_k:.6g})"
        )
    return max(1, math.ceil(math.exp(ln_k)))


def truncation_error(sum_: PauliSum, K: int) -> TruncationError:
    """Exact norm distance to the rescaled rank-K approximant, and its bound.

    The approximant keeps the K largest squared coefficients and is rescaled
    to the original norm; the exact distance follows from the overlap
    identity |O - O_K|^2 = 2 |O|^2 (1 - F) with F the normalized overlap.
    The bound is sqrt(2 * tail mass) and always dominates the exact value.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    tail = squared_tail(sum_, K)
    if tail == 0.0:
        return TruncationError(0.0, 0.0)
    total = float(np.sum(_squares(sum_)))
    overlap = math.sqrt((total - tail) / total)
    exact = math.sqrt(2.0 * total * (1.0 - overlap))
    return TruncationError(exact, math.sqrt(2.0 * tail))


@dataclass(frozen=True)
class XyStructureReport:
    """Outcome of the XY-evolution structure check.

    ok is the conjunction of the three sub-checks; witness carries a
    human-readable first counterexample when a sub-check fails.
    """

    ok: bool
    terms: int
    count_bound: int | None
    family_ok: bool
    cone_ok: bool
    count_ok: bool
    witness: str | None = None


def _contiguous_interval(bits: int) -> tuple[int, int] | None:
    """(lo, hi) when the set bits form one contiguous run, else None."""
    if bits == 0:
        return None
    lo = (bits & -bits).bit_length() - 1
    hi = bits.bit_length() - 1
    span = ((1 << (hi - lo + 1)) - 1) << lo
    return (lo, hi) if bits == span else None


def _in_family(x: int, z: int) -> bool:
    """Single Z, or a contiguous string with X/Y endpoints and Z interior."""
    if x == 0:
        return z != 0 and (z & (z - 1)) == 0
    support = _contiguous_interval(x | z)
    if support is None:
        return False
    lo, hi = support
    if lo == hi:
        return False
    if x != (1 << lo) | (1 << hi):
        return False
    interior = (((1 << (hi - lo + 1)) - 1) << lo) & ~x
    return (z & interior) == interior


def xy_structure_check(sum_: PauliSum, l: int, s: int) -> XyStructureReport:
    """Check the structural invariants of a pure-XY evolved single-site Z.

    Verifies that every term is either a single Z or a contiguous string
    with X/Y endpoints and all-Z interior, that supports stay inside the
    interval [l - s, l + s], and (for s >= 1) that the term count does not
    exceed 2s + 4s(2s - 1).  Returns the first counterexample on failure.
    """
    if not (0 <= l < sum_.n):
        raise ValueError(f"site {l} outside 0..{sum_.n - 1}")
    if s < 0:
        raise ValueError("step count must be >= 0")
    family_ok = True
    cone_ok = True
    witness = None
    lo_cone = l - s
    hi_cone = l + s
    for word, _ in sum_.items():
        if family_ok and not _in_family(word.x, word.z):
            family_ok = False
            witness = witness or f"term outside family: {word.to_string()}"
        support = word.x | word.z
        if support and cone_ok:
            lo = (support & -support).bit_length() - 1
            hi = support.bit_length() - 1
            if lo < lo_cone or hi > hi_cone:
                cone_ok = False
                witness = witness or (
                    f"support [{lo}, {hi}] outside cone [{lo_cone}, {hi_cone}]: "
                    f"{word.to_string()}"
                )
    count_bound = 2 * s + 4 * s * (2 * s - 1) if s >= 1 else None
    count_ok = count_bound is None or len(sum_) <= count_bound
    if not count_ok and witness is None:
        witness = f"term count {len(sum_)} exceeds bound {count_bound}"
    return XyStructureReport(
        ok=family_ok and cone_ok and count_ok,
        terms=len(sum_),
        count_bound=count_bound,
        family_ok=family_ok,
        cone_ok=cone_ok,
        count_ok=count_ok,
        witness=witness,
    )


def weight_truncation_bound(sum_: PauliSum, M: int) -> float:
    """(2/3)^M * |O|^2 + squared mass at Hamming weight >= M.

    Upper-bounds the mean squared expectation error of the weight-truncated
    operator over the single-site-scrambled state ensemble.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    total = 0.0
    heavy = 0.0
    for (x, z), c in sum_.key_items():
        c2 = c * c
        total += c2
        if (x | z).bit_count() >= M:
            heavy += c2
    return (2.0 / 3.0) ** M * total + heavy


def distributions(
    sum_: PauliSum,
) -> tuple[dict[int, float], dict[int, float], int]:
    """Squared-coefficient histograms of an operator.

    Returns (magnitude histogram, weight histogram, term count).  The
    magnitude histogram buckets squared coefficients into binades keyed by
    b with 2^b <= c^2 < 2^(b+1); the weight histogram maps Hamming weight
    to total squared mass.
    """
    mag: dict[int, float] = {}
    wt: dict[int, float] = {}
    for (x, z), c in sum_.key_items():
        c2 = c * c
        b = math.frexp(c2)[1] - 1
        mag[b] = mag.get(b, 0.0) + c2
        w = (x | z).bit_count()
        wt[w] = wt.get(w, 0.0) + c2
    return mag, wt, len(sum_)
