"""Sparse real-coefficient sums of Pauli words: aggregation, norms, truncation.

A PauliSum maps words (stored as packed (x, z) integer pairs) to real
coefficients.  The truncation selectors come in three flavors: exact Top-K,
bucketed approximate Top-K, and a hard Hamming-weight cap.  All selectors
break magnitude ties by ascending lexicographic order on the site-0-first
(x, z) bit strings, which makes retained sets deterministic and independent
of iteration or thread order.

The module also exposes a packed-array view (uint64 words, one row per
term) so bulk consumers can run the same selectors without per-term Python
overhead; `PauliSum.to_arrays` / `PauliSum.from_arrays` convert between the
two representations.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .pauli import PauliWord

PRUNE_EPS_DEFAULT = 1e-15

_WORD_BITS = 64
_WORD_MASK = (1 << _WORD_BITS) - 1


class DegenerateTruncationWarning(UserWarning):
    """A weight cap removed every term of a non-empty operator."""


def n_words(n: int) -> int:
    return (n + _WORD_BITS - 1) // _WORD_BITS


def _int_to_words(value: int, width: int) -> tuple[int, ...]:
    return tuple((value >> (_WORD_BITS * w)) & _WORD_MASK for w in range(width))


def _row_to_int(row: np.ndarray) -> int:
    value = 0
    for w in range(row.shape[0] - 1, -1, -1):
        value = (value << _WORD_BITS) | int(row[w])
    return value


class PauliSum:
    """Sparse real-coefficient operator Sum_a c_a P_a on n sites.

    Keys are (x, z) integer pairs; no key maps to an exactly-zero
    coefficient.  Single-writer: mutate from one thread only.
    """

    __slots__ = ("n", "_data")

    def __init__(self, n: int, data: dict[tuple[int, int], float] | None = None):
        if n < 1:
            raise ValueError("operator needs at least one site")
        self.n = n
        self._data: dict[tuple[int, int], float] = dict(data) if data else {}

    @classmethod
    def from_terms(cls, n: int, terms) -> "PauliSum":
        """Build from (PauliWord, coefficient) pairs, aggregating duplicates."""
        out = cls(n)
        for word, coeff in terms:
            accumulate(out, word, coeff)
        return out

    @classmethod
    def from_arrays(cls, n: int, xs: np.ndarray, zs: np.ndarray, cs: np.ndarray) -> "PauliSum":
        out = cls(n)
        data = out._data
        for i in range(cs.shape[0]):
            data[(_row_to_int(xs[i]), _row_to_int(zs[i]))] = float(cs[i])
        return out

    def to_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Packed view: (xs, zs) as (m, W) uint64, coefficients as (m,) float64."""
        width = n_words(self.n)
        m = len(self._data)
        xs = np.empty((m, width), dtype=np.uint64)
        zs = np.empty((m, width), dtype=np.uint64)
        cs = np.empty(m, dtype=np.float64)
        for i, ((x, z), c) in enumerate(self._data.items()):
            xs[i] = _int_to_words(x, width)
            zs[i] = _int_to_words(z, width)
            cs[i] = c
        return xs, zs, cs

    def items(self):
        """Iterate (PauliWord, coefficient) pairs."""
        for (x, z), c in self._data.items():
            yield PauliWord(self.n, x, z), c

    def key_items(self):
        """Iterate ((x, z), coefficient) pairs without building PauliWord objects."""
        return self._data.items()

    def coefficient(self, word: PauliWord) -> float:
        if word.n != self.n:
            raise ValueError(f"word length {word.n} does not match operator ({self.n})")
        return self._data.get((word.x, word.z), 0.0)

    def copy(self) -> "PauliSum":
        return PauliSum(self.n, self._data)

    def __len__(self) -> int:
        return len(self._data)

    def __contains__(self, word: PauliWord) -> bool:
        return (word.x, word.z) in self._data

    def __repr__(self) -> str:
        return f"PauliSum(n={self.n}, terms={len(self._data)})"


@dataclass(frozen=True)
class TruncationPolicy:
    """How the evolving operator is cut back after each rotation.

    kind:
        "top_k_exact"  - keep the K largest-magnitude terms.
        "top_k_bucket" - bucketed approximate Top-K; may keep up to 2K terms.
        "weight_cap"   - keep terms of Hamming weight < M.
        "combined"     - weight cap first, then exact Top-K.
    """

    kind: str = "top_k_exact"
    K: int = 1
    B: int = 32
    M: int = 0
    prune_eps: float = PRUNE_EPS_DEFAULT

    _KINDS = ("top_k_exact", "top_k_bucket", "weight_cap", "combined")

    def __post_init__(self) -> None:
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown truncation kind {self.kind!r}")
        if self.kind != "weight_cap" and self.K < 1:
            raise ValueError("budget K must be >= 1")
        if self.B < 1:
            raise ValueError("bucket count B must be >= 1")
        if self.M < 0:
            raise ValueError("weight threshold M must be >= 0")
        if self.kind in ("weight_cap", "combined") and self.M < 1:
            raise ValueError(f"kind {self.kind!r} needs a weight threshold M >= 1")
        if self.prune_eps < 0:
            raise ValueError("prune_eps must be >= 0")

    @property
    def cap(self) -> int | None:
        """Largest term count a single application may retain (None = unbounded)."""
        if self.kind == "top_k_exact" or self.kind == "combined":
            return self.K
        if self.kind == "top_k_bucket":
            return 2 * self.K
        return None


# -- scalar operations --------------------------------------------------------


def accumulate(
    sum_: PauliSum,
    word: PauliWord,
    coeff: float,
    prune_eps: float = PRUNE_EPS_DEFAULT,
) -> PauliSum:
    """Add coeff to word's entry in place; drop the entry if |result| <= prune_eps."""
    if word.n != sum_.n:
        raise ValueError(f"word length {word.n} does not match operator ({sum_.n})")
    key = (word.x, word.z)
    data = sum_._data
    value = data.get(key, 0.0) + coeff
    if abs(value) <= prune_eps:
        data.pop(key, None)
    else:
        data[key] = value
    return sum_


def pauli_norm2(sum_: PauliSum) -> float:
    """sqrt(Sum c^2): the Hilbert-Schmidt norm normalized by 2^(n/2)."""
    return math.sqrt(math.fsum(c * c for c in sum_._data.values()))


def squared_tail(sum_: PauliSum, K: int) -> float:
    """Sum of squared coefficients beyond rank K (squares sorted descending)."""
    if K < 0:
        raise ValueError("K must be >= 0")
    if len(sum_) <= K:
        return 0.0
    sq = np.fromiter((c * c for c in sum_._data.values()), dtype=np.float64, count=len(sum_))
    sq.sort()
    return float(sq[: sq.size - K].sum())


def top_k_exact(sum_: PauliSum, K: int) -> PauliSum:
    """The K entries of largest |c|; cutoff ties broken by ascending lex order."""
    if K < 1:
        raise ValueError("K must be >= 1")
    if len(sum_) <= K:
        return sum_.copy()
    xs, zs, cs = sum_.to_arrays()
    keep = _take_largest(xs, zs, np.abs(cs), np.arange(cs.size), K, sum_.n)
    return PauliSum.from_arrays(sum_.n, xs[keep], zs[keep], cs[keep])


def top_k_bucket(sum_: PauliSum, K: int, B: int) -> PauliSum:
    """Bucketed approximate Top-K.

    Terms are binned by magnitude relative to the current maximum (bucket b
    covers [2^-(b+1), 2^-b) x cmax, b = 0..B-1, plus an underflow bucket) and
    whole buckets are retained from the largest down until the running count
    reaches K.  The boundary bucket is kept wholesale unless that would
    exceed 2K entries, in which case it is filled to exactly 2K, largest
    magnitudes first with lexicographic tie-break.  The result is always a
    superset of the exact Top-ceil(K/2) set and has between min(K, |sum|)
    and 2K entries.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if B < 1:
        raise ValueError("B must be >= 1")
    if len(sum_) <= K:
        return sum_.copy()
    xs, zs, cs = sum_.to_arrays()
    keep = _bucket_select(xs, zs, cs, K, B, sum_.n)
    return PauliSum.from_arrays(sum_.n, xs[keep], zs[keep], cs[keep])


def weight_truncate(sum_: PauliSum, M: int) -> PauliSum:
    """Keep only terms of Hamming weight strictly below M.

    Emits DegenerateTruncationWarning when a non-empty input is emptied;
    the caller decides whether that aborts the run.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    out = PauliSum(sum_.n)
    data = out._data
    for (x, z), c in sum_._data.items():
        if (x | z).bit_count() < M:
            data[(x, z)] = c
    if not data and len(sum_) > 0:
        warnings.warn(
            f"weight cap M={M} removed all {len(sum_)} terms",
            DegenerateTruncationWarning,
            stacklevel=2,
        )
    return out


def scale(sum_: PauliSum, factor: float) -> PauliSum:
    out = PauliSum(sum_.n)
    if factor != 0.0:
        out._data = {key: c * factor for key, c in sum_._data.items()}
    return out


def add(a: PauliSum, b: PauliSum, prune_eps: float = PRUNE_EPS_DEFAULT) -> PauliSum:
    if a.n != b.n:
        raise ValueError("operator sizes differ")
    out = a.copy()
    data = out._data
    for key, c in b._data.items():
        value = data.get(key, 0.0) + c
        if abs(value) <= prune_eps:
            data.pop(key, None)
        else:
            data[key] = value
    return out


def tensor_product(a: PauliSum, b: PauliSum) -> PauliSum:
    """Operator on a.n + b.n sites; b's sites follow a's."""
    out = PauliSum(a.n + b.n)
    data = out._data
    shift = a.n
    for (ax, az), ac in a._data.items():
        for (bx, bz), bc in b._data.items():
            data[(ax | (bx << shift), az | (bz << shift))] = ac * bc
    return out


# -- packed-array selectors ----------------------------------------------------
# Shared by the scalar operations above and by the propagation engine, which
# keeps the evolving operator in packed form throughout a run.


def _lex_order(xs: np.ndarray, zs: np.ndarray, idx: np.ndarray, n: int) -> np.ndarray:
    """Sort the given row indices by the site-0-first (x, z) bit strings."""

    def key(i: int) -> tuple[str, str]:
        x = _row_to_int(xs[i])
        z = _row_to_int(zs[i])
        return format(x, f"0{n}b")[::-1], format(z, f"0{n}b")[::-1]

    return np.asarray(sorted(map(int, idx), key=key), dtype=np.intp)


def _take_largest(
    xs: np.ndarray,
    zs: np.ndarray,
    mags: np.ndarray,
    cand: np.ndarray,
    count: int,
    n: int,
) -> np.ndarray:
    """Indices of the `count` largest-magnitude candidates, lex tie-break at the cutoff."""
    if cand.size <= count:
        return cand
    cmags = mags[cand]
    part = np.argpartition(cmags, cand.size - count)[cand.size - count :]
    cutoff = cmags[part].min()
    above = cand[cmags > cutoff]
    need = count - above.size
    if need == 0:
        return above
    ties = cand[cmags == cutoff]
    if ties.size == need:
        return np.concatenate([above, ties])
    return np.concatenate([above, _lex_order(xs, zs, ties, n)[:need]])


def _bucket_select(
    xs: np.ndarray, zs: np.ndarray, cs: np.ndarray, K: int, B: int, n: int
) -> np.ndarray:
    mags = np.abs(cs)
    cmax = mags.max()
    # frexp maps |c|/cmax in [2^-(b+1), 2^-b) to exponent -b; the maximum
    # itself (ratio 1.0) lands at -1 and is clipped into bucket 0.
    _, exponents = np.frexp(mags / cmax)
    buckets = np.clip(-exponents.astype(np.int64), 0, B)
    counts = np.bincount(buckets, minlength=B + 1)
    cum = np.cumsum(counts)
    boundary = int(np.searchsorted(cum, K))
    before = int(cum[boundary - 1]) if boundary > 0 else 0
    through = int(cum[boundary])
    keep_mask = buckets < boundary
    if through <= 2 * K:
        keep_mask |= buckets == boundary
        return np.flatnonzero(keep_mask)
    in_boundary = np.flatnonzero(buckets == boundary)
    fill = _take_largest(xs, zs, mags, in_boundary, 2 * K - before, n)
    return np.concatenate([np.flatnonzero(keep_mask), fill])


def _weight_mask(xs: np.ndarray, zs: np.ndarray, M: int) -> np.ndarray:
    return np.bitwise_count(xs | zs).sum(axis=1) < M


def apply_policy_arrays(
    xs: np.ndarray,
    zs: np.ndarray,
    cs: np.ndarray,
    policy: TruncationPolicy,
    n: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """Apply a truncation policy to packed term arrays.

    Returns (xs, zs, cs, discarded) where discarded is the squared mass of
    the removed terms.  Input arrays are returned unchanged when nothing is
    removed.
    """
    kind = policy.kind
    if kind in ("weight_cap", "combined"):
        mask = _weight_mask(xs, zs, policy.M)
        if not mask.all():
            discarded = float((cs[~mask] ** 2).sum())
            xs, zs, cs = xs[mask], zs[mask], cs[mask]
        else:
            discarded = 0.0
        if kind == "weight_cap":
            return xs, zs, cs, discarded
    else:
        discarded = 0.0

    if cs.size <= policy.K:
        return xs, zs, cs, discarded
    if kind == "top_k_bucket":
        keep = _bucket_select(xs, zs, cs, policy.K, policy.B, n)
    else:
        keep = _take_largest(xs, zs, np.abs(cs), np.arange(cs.size), policy.K, n)
    if keep.size == cs.size:
        return xs, zs, cs, discarded
    dropped = np.ones(cs.size, dtype=bool)
    dropped[keep] = False
    discarded += float((cs[dropped] ** 2).sum())
    return xs[keep], zs[keep], cs[keep], discarded


# -- operator dump format ------------------------------------------------------


def format_operator(sum_: PauliSum) -> str:
    """Dump as text lines "<coefficient> <pauli-string>" (17 significant digits).

    Lines are emitted in canonical word order so equal operators dump to
    identical text regardless of how they were assembled.
    """
    pairs = sorted(sum_.items(), key=lambda wc: wc[0].sort_key())
    lines = [f"{coeff:.17g} {word.to_string()}" for word, coeff in pairs]
    return "\n".join(lines) + ("\n" if lines else "")


def parse_operator(text: str) -> PauliSum:
    """Parse the dump format; '#' starts a comment line."""
    n = None
    terms: list[tuple[PauliWord, float]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"line {lineno}: expected '<coefficient> <pauli-string>'")
        try:
            coeff = float(parts[0])
        except ValueError:
            raise ValueError(f"line {lineno}: bad coefficient {parts[0]!r}") from None
        word = PauliWord.from_string(parts[1])
        if n is None:
            n = word.n
        elif word.n != n:
            raise ValueError(f"line {lineno}: string length {word.n} != {n}")
        terms.append((word, coeff))
    if n is None:
        raise ValueError("operator dump holds no terms")
    return PauliSum.from_terms(n, terms)
