"""Phase-exact algebra of n-site Pauli words in binary symplectic form.

A word is a pair of bit vectors (x, z), packed little-endian into Python
integers (bit j describes site j).  The operator denoted by (x, z) is the
Hermitian product

    P(x, z) = prod_j  i^(x_j z_j) X_j^(x_j) Z_j^(z_j)

so the single-site codes are I=(0,0), X=(1,0), Y=(1,1), Z=(0,1).  Under
this convention every word is Hermitian with eigenvalues +-1, and the
product of two words is another word times an integer power of i.  That
power is tracked exactly (mod 4) so that rotation coefficients built from
word products stay real.

Textual form: one character per site from {I, X, Y, Z}, site 0 leftmost.
"""

from __future__ import annotations

from dataclasses import dataclass

_CHAR_BITS = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}
_BITS_CHAR = {bits: char for char, bits in _CHAR_BITS.items()}


@dataclass(frozen=True)
class PauliWord:
    """An n-site Pauli word.

    Attributes:
        n: number of sites (positive).
        x: X-part bit vector, bit j = site j.
        z: Z-part bit vector, bit j = site j.
    """

    n: int
    x: int
    z: int

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("a Pauli word needs at least one site")
        mask = (1 << self.n) - 1
        if not (0 <= self.x <= mask):
            raise ValueError("x bits do not fit the declared site count")
        if not (0 <= self.z <= mask):
            raise ValueError("z bits do not fit the declared site count")

    @classmethod
    def identity(cls, n: int) -> "PauliWord":
        return cls(n, 0, 0)

    @classmethod
    def single(cls, n: int, site: int, kind: str) -> "PauliWord":
        """The word acting as `kind` (X, Y or Z) on one site, identity elsewhere."""
        if not 0 <= site < n:
            raise ValueError(f"site {site} outside 0..{n - 1}")
        xb, zb = _CHAR_BITS[kind]
        return cls(n, xb << site, zb << site)

    @classmethod
    def from_string(cls, text: str) -> "PauliWord":
        """Parse "IXYZ..." (site 0 leftmost)."""
        if not text:
            raise ValueError("empty Pauli string")
        x = z = 0
        for j, char in enumerate(text):
            try:
                xb, zb = _CHAR_BITS[char]
            except KeyError:
                raise ValueError(f"invalid Pauli character {char!r} at site {j}") from None
            x |= xb << j
            z |= zb << j
        return cls(len(text), x, z)

    def to_string(self) -> str:
        """Render as "IXYZ..." (site 0 leftmost)."""
        return "".join(
            _BITS_CHAR[(self.x >> j) & 1, (self.z >> j) & 1] for j in range(self.n)
        )

    def is_identity(self) -> bool:
        return self.x == 0 and self.z == 0

    def sort_key(self) -> tuple[str, str]:
        """Site-0-first bit strings of (x, z); ascending order on this key is
        the lexicographic tie-break order used by the truncation selectors."""
        return (
            format(self.x, f"0{self.n}b")[::-1],
            format(self.z, f"0{self.n}b")[::-1],
        )

    def __str__(self) -> str:
        return self.to_string()


def _check_lengths(p: PauliWord, q: PauliWord) -> None:
    if p.n != q.n:
        raise ValueError(f"word lengths differ: {p.n} vs {q.n}")


def commutes(p: PauliWord, q: PauliWord) -> bool:
    """True iff [p, q] = 0: parity of the symplectic product x_p.z_q + z_p.x_q."""
    _check_lengths(p, q)
    return ((p.x & q.z).bit_count() + (p.z & q.x).bit_count()) % 2 == 0


def multiply(p: PauliWord, q: PauliWord) -> tuple[PauliWord, int]:
    """Product p.q = i^k P(r) with r = (p.x^q.x, p.z^q.z); returns (r, k mod 4).

    The exponent follows from commuting Z factors past X factors and from
    restoring the Hermitian phase of each word:
    k = x_p.z_p + x_q.z_q + 2 (z_p.x_q) - (x_p^x_q).(z_p^z_q)   (mod 4),
    all dots counting overlapping set bits.
    """
    _check_lengths(p, q)
    rx = p.x ^ q.x
    rz = p.z ^ q.z
    k = (
        (p.x & p.z).bit_count()
        + (q.x & q.z).bit_count()
        + 2 * (p.z & q.x).bit_count()
        - (rx & rz).bit_count()
    ) % 4
    return PauliWord(p.n, rx, rz), k


def weight(p: PauliWord) -> int:
    """Number of sites where the word acts non-trivially."""
    return (p.x | p.z).bit_count()
