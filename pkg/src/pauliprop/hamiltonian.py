"""Spin-chain Hamiltonians as ordered lists of weighted Pauli words.

Term order is load-bearing: the propagation engine applies the per-term
rotations in exactly the order stored here, so two Hamiltonians with the
same terms in different orders are different inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

from .pauli import PauliWord
from .sparse import PauliSum


@dataclass(frozen=True)
class Hamiltonian:
    """H = Sum_i w_i P_i with real weights and a fixed term order."""

    n: int
    terms: tuple[tuple[float, PauliWord], ...]
    description: str = ""

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("Hamiltonian needs at least one site")
        for w, word in self.terms:
            if word.n != self.n:
                raise ValueError(
                    f"term {word.to_string()} acts on {word.n} sites, expected {self.n}"
                )
            if w != w:
                raise ValueError("NaN weight")

    def __len__(self) -> int:
        return len(self.terms)

    def to_sum(self) -> PauliSum:
        """Collapse to an unordered sparse operator (duplicates aggregate)."""
        return PauliSum.from_terms(self.n, ((word, w) for w, word in self.terms))


def build_xxz_chain(
    L: int,
    Jx: float,
    Jy: float,
    Jz: float,
    boundary: str = "open",
) -> Hamiltonian:
    """Nearest-neighbor XXZ chain on L sites.

    Terms are emitted bond-major: for each bond (i, i+1) in ascending i, the
    XX term, then YY, then ZZ, skipping any coupling that is exactly zero.
    boundary "periodic" adds the (L-1, 0) bond after the bulk bonds.
    """
    if L < 2:
        raise ValueError("chain needs at least two sites")
    if boundary not in ("open", "periodic"):
        raise ValueError(f"boundary must be 'open' or 'periodic', got {boundary!r}")
    couplings = (("X", Jx), ("Y", Jy), ("Z", Jz))
    bonds = [(i, i + 1) for i in range(L - 1)]
    if boundary == "periodic":
        bonds.append((L - 1, 0))
    terms: list[tuple[float, PauliWord]] = []
    for i, j in bonds:
        for kind, w in couplings:
            if w == 0.0:
                continue
            a = PauliWord.single(L, i, kind)
            b = PauliWord.single(L, j, kind)
            word = PauliWord(L, a.x | b.x, a.z | b.z)
            terms.append((w, word))
    name = f"xxz L={L} Jx={Jx:g} Jy={Jy:g} Jz={Jz:g} {boundary}"
    return Hamiltonian(L, tuple(terms), description=name)


def parse_hamiltonian(text: str) -> Hamiltonian:
    """Parse lines of "<weight> <pauli-string>" into a Hamiltonian.

    Blank lines and lines starting with '#' are skipped.  All Pauli strings
    must share one length; errors carry the 1-based line number.  Term order
    is the file order.
    """
    n: int | None = None
    terms: list[tuple[float, PauliWord]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"line {lineno}: expected '<weight> <pauli-string>'")
        try:
            w = float(parts[0])
        except ValueError:
            raise ValueError(f"line {lineno}: bad weight {parts[0]!r}") from None
        try:
            word = PauliWord.from_string(parts[1])
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
        if n is None:
            n = word.n
        elif word.n != n:
            raise ValueError(f"line {lineno}: string length {word.n} != {n}")
        terms.append((w, word))
    if n is None:
        raise ValueError("Hamiltonian text holds no terms")
    return Hamiltonian(n, tuple(terms), description="from text")


def format_hamiltonian(h: Hamiltonian) -> str:
    """Inverse of parse_hamiltonian; weights at 17 significant digits."""
    lines = [f"{w:.17g} {word.to_string()}" for w, word in h.terms]
    return "\n".join(lines) + "\n"
