"""Dense reference implementations for small systems.

Everything here builds explicit state vectors, density matrices, or operator
tensors, so sizes are capped (see the per-function limits).  The circuit
convention matches the sparse engine exactly: one time step applies
G_i = exp(-i w_i tau P_i) for each Hamiltonian term in listed order, and the
engine's backward-propagated observable satisfies

    tr(O_0 rho) = tr(O rho(t)),    rho(t) stepped by rho <- G* rho G
                                   for terms in reversed order.

Site 0 is the most significant qubit of dense indices, matching the
left-to-right reading of Pauli strings.
"""

from __future__ import annotations

import math

import numpy as np

from .hamiltonian import Hamiltonian
from .pauli import PauliWord
from .propagation import ProductState
from .sparse import PauliSum

_SIGMA = {
    0: np.eye(2, dtype=np.complex128),
    1: np.array([[0.0, 1.0], [1.0, 0.0]], dtype=np.complex128),
    2: np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=np.complex128),
    3: np.array([[1.0, 0.0], [0.0, -1.0]], dtype=np.complex128),
}

MAX_DENSE_SITES = 12
MAX_COEFF_SITES = 8
MAX_MC_SITES = 10


_CODE_OF_BITS = (0, 1, 3, 2)  # (x, z) bit pair packed as x + 2z -> I, X, Z, Y


def _site_codes(word: PauliWord) -> list[int]:
    """Per-site codes 0..3 (I, X, Y, Z), site 0 first."""
    codes = []
    for j in range(word.n):
        xb = (word.x >> j) & 1
        zb = (word.z >> j) & 1
        codes.append(_CODE_OF_BITS[xb + 2 * zb])
    return codes


def dense_word(word: PauliWord) -> np.ndarray:
    """The 2^n x 2^n matrix of a Pauli word."""
    out = np.array([[1.0 + 0.0j]])
    for code in _site_codes(word):
        out = np.kron(out, _SIGMA[code])
    return out


def dense_operator(sum_: PauliSum) -> np.ndarray:
    """The 2^n x 2^n matrix of a sparse operator."""
    dim = 1 << sum_.n
    out = np.zeros((dim, dim), dtype=np.complex128)
    for word, c in sum_.items():
        out += c * dense_word(word)
    return out


def _apply_axes(M: np.ndarray, T: np.ndarray, axes: list[int]) -> np.ndarray:
    """Contract matrix M into tensor T on the given axes.

    M is 2^k x 2^k acting on len(axes) = k tensor legs, its index order
    matching the order of `axes`.  The result keeps T's axis layout.
    """
    k = len(axes)
    Mt = M.reshape((2,) * (2 * k))
    T = np.tensordot(Mt, T, axes=(list(range(k, 2 * k)), list(axes)))
    return np.moveaxis(T, list(range(k)), axes)


def _support(word: PauliWord) -> list[int]:
    bits = word.x | word.z
    return [j for j in range(word.n) if (bits >> j) & 1]


def _local_matrix(word: PauliWord, support: list[int]) -> np.ndarray:
    """The word restricted to its support sites, in ascending site order."""
    out = np.array([[1.0 + 0.0j]])
    codes = _site_codes(word)
    for j in support:
        out = np.kron(out, _SIGMA[codes[j]])
    return out


class _Gate:
    """One rotation exp(-i w tau P), prepared as a local dense matrix."""

    __slots__ = ("support", "G", "Gd")

    def __init__(self, word: PauliWord, w: float, tau: float):
        self.support = _support(word)
        k = len(self.support)
        P = _local_matrix(word, self.support)
        a = w * tau
        eye = np.eye(1 << k, dtype=np.complex128)
        self.G = math.cos(a) * eye - 1.0j * math.sin(a) * P
        self.Gd = self.G.conj().T


def _is_pure(state: ProductState) -> bool:
    norms = np.sqrt((state.bloch ** 2).sum(axis=1))
    return bool(np.all(np.abs(norms - 1.0) <= 1e-12))


def _state_vector(state: ProductState) -> np.ndarray:
    """Tensor of shape (2,)*n for a pure product state."""
    psi = np.array([1.0 + 0.0j])
    for mx, my, mz in state.bloch:
        theta = math.acos(max(-1.0, min(1.0, mz)))
        phi = math.atan2(my, mx)
        amp = np.array(
            [math.cos(theta / 2.0), math.sin(theta / 2.0) * complex(math.cos(phi), math.sin(phi))],
            dtype=np.complex128,
        )
        psi = np.kron(psi, amp)
    return psi.reshape((2,) * state.n)


def _density_matrix(state: ProductState) -> np.ndarray:
    """Tensor of shape (2,)*2n; row legs first, column legs last."""
    rho = np.array([[1.0 + 0.0j]])
    for mx, my, mz in state.bloch:
        site = 0.5 * (_SIGMA[0] + mx * _SIGMA[1] + my * _SIGMA[2] + mz * _SIGMA[3])
        rho = np.kron(rho, site)
    n = state.n
    return rho.reshape((2,) * (2 * n))


def _expect_vector(O: PauliSum, psi: np.ndarray) -> float:
    flat = psi.reshape(-1)
    total = 0.0 + 0.0j
    for word, c in O.items():
        phi = psi
        codes = _site_codes(word)
        for j in _support(word):
            phi = _apply_axes(_SIGMA[codes[j]], phi, [j])
        total += c * np.vdot(flat, phi.reshape(-1))
    return float(total.real)


def _expect_density(O: PauliSum, rho: np.ndarray) -> float:
    n = O.n
    dim = 1 << n
    total = 0.0 + 0.0j
    for word, c in O.items():
        tmp = rho
        codes = _site_codes(word)
        for j in _support(word):
            tmp = _apply_axes(_SIGMA[codes[j]], tmp, [j])
        total += c * np.trace(tmp.reshape(dim, dim))
    return float(total.real)


def dense_trotter_trajectory(
    H: Hamiltonian,
    state: ProductState,
    O: PauliSum,
    t: float,
    N: int,
    record_every: int = 1,
) -> list[tuple[int, float, float]]:
    """Exact circuit values tr(O rho(j tau)) as (step, time, value) triples.

    The state is stepped through the same first-order circuit the sparse
    engine inverts; recorded steps are the multiples of record_every plus
    the final step.  Limited to n <= 12 sites.
    """
    n = H.n
    if n > MAX_DENSE_SITES:
        raise ValueError(f"dense path is limited to {MAX_DENSE_SITES} sites, got {n}")
    if O.n != n or state.n != n:
        raise ValueError("observable, state, and Hamiltonian sizes must agree")
    if N < 1:
        raise ValueError("N must be >= 1")
    tau = t / N
    gates = [_Gate(word, w, tau) for w, word in H.terms]
    out: list[tuple[int, float, float]] = []
    if _is_pure(state):
        psi = _state_vector(state)
        for j in range(1, N + 1):
            # psi <- V* psi, V = G_m ... G_1, so G_m acts first
            for g in reversed(gates):
                psi = _apply_axes(g.Gd, psi, g.support)
            if j % record_every == 0 or j == N:
                out.append((j, j * tau, _expect_vector(O, psi)))
        return out
    rho = _density_matrix(state)
    for j in range(1, N + 1):
        for g in reversed(gates):
            rho = _apply_axes(g.Gd, rho, g.support)
            rho = _apply_axes(g.G.T, rho, [n + s for s in g.support])
        if j % record_every == 0 or j == N:
            out.append((j, j * tau, _expect_density(O, rho)))
    return out


def dense_trotter_expectation(
    H: Hamiltonian,
    state: ProductState,
    O: PauliSum,
    t: float,
    N: int,
) -> float:
    """tr(O rho(t)) for the first-order circuit; n <= 12 sites."""
    return dense_trotter_trajectory(H, state, O, t, N, record_every=N)[-1][2]


def dense_heisenberg_coefficients(
    H: Hamiltonian,
    O: PauliSum,
    t: float,
    N: int,
) -> PauliSum:
    """Exact Heisenberg-picture coefficients of O pulled back through N steps.

    Conjugates the dense operator by every rotation in engine order and
    decomposes the result in the Pauli basis.  Limited to n <= 8 sites.
    """
    n = H.n
    if n > MAX_COEFF_SITES:
        raise ValueError(f"coefficient oracle is limited to {MAX_COEFF_SITES} sites, got {n}")
    if O.n != n:
        raise ValueError("observable and Hamiltonian sizes must agree")
    if N < 1:
        raise ValueError("N must be >= 1")
    tau = t / N
    gates = [_Gate(word, w, tau) for w, word in H.terms]
    T = dense_operator(O).reshape((2,) * (2 * n))
    for _ in range(N):
        for g in gates:
            # O <- G O G*
            T = _apply_axes(g.G, T, g.support)
            T = _apply_axes(g.Gd.T, T, [n + s for s in g.support])
    # collapse each (row, column) leg pair into one component axis
    # (0 = I, 1 = X, 2 = Y, 3 = Z); after j collapses the row leg of site j
    # sits at axis j and its column leg at axis n - 1
    for j in range(n):
        a = np.take(T, 0, axis=j)
        b = np.take(T, 1, axis=j)
        a0 = np.take(a, 0, axis=n - 1)
        a1 = np.take(a, 1, axis=n - 1)
        b0 = np.take(b, 0, axis=n - 1)
        b1 = np.take(b, 1, axis=n - 1)
        T = np.stack(
            [(a0 + b1) * 0.5, (a1 + b0) * 0.5, (a1 - b0) * 0.5j, (a0 - b1) * 0.5],
            axis=j,
        )
    if T.size and float(np.abs(T.imag).max()) > 1e-12:
        raise AssertionError("Heisenberg coefficients of a real combination must be real")
    coeffs = T.real
    out = PauliSum(n)
    data = out._data
    for idx in np.argwhere(np.abs(coeffs) > 1e-12):
        x = 0
        z = 0
        for j, code in enumerate(idx):
            if code in (1, 2):
                x |= 1 << j
            if code in (2, 3):
                z |= 1 << j
        data[(x, z)] = float(coeffs[tuple(idx)])
    return out


def random_product_state(rng: np.random.Generator, n: int) -> ProductState:
    """Product of single-site states drawn from the uniform (Haar) measure."""
    raw = rng.standard_normal((n, 4))
    a = raw[:, 0] + 1.0j * raw[:, 1]
    b = raw[:, 2] + 1.0j * raw[:, 3]
    norm = np.sqrt(np.abs(a) ** 2 + np.abs(b) ** 2)
    a /= norm
    b /= norm
    w = np.conj(a) * b
    bloch = np.stack([2.0 * w.real, 2.0 * w.imag, np.abs(a) ** 2 - np.abs(b) ** 2], axis=1)
    return ProductState(bloch)


def local_scrambling_mc(
    O: PauliSum,
    O_hat: PauliSum,
    samples: int,
    seed: int,
) -> tuple[float, float]:
    """Monte Carlo mean squared deviation of tr(O_hat rho) from tr(O rho).

    rho ranges over random product states with independently Haar-uniform
    single-site states.  Returns (mse, standard error of the mse).  Needs
    samples >= 2 and n <= 10 sites.
    """
    if O.n != O_hat.n:
        raise ValueError("operators must act on the same sites")
    if O.n > MAX_MC_SITES:
        raise ValueError(f"Monte Carlo check is limited to {MAX_MC_SITES} sites, got {O.n}")
    if samples < 2:
        raise ValueError("samples must be >= 2 for a standard error")
    from .propagation import _expectation_packed
    from .sparse import add, scale

    diff = add(O, scale(O_hat, -1.0), prune_eps=0.0)
    xs, zs, cs = diff.to_arrays()
    rng = np.random.default_rng(seed)
    sq = np.empty(samples, dtype=np.float64)
    for s in range(samples):
        state = random_product_state(rng, O.n)
        d = _expectation_packed(xs, zs, cs, state.bloch)
        sq[s] = d * d
    mse = float(sq.mean())
    stderr = float(sq.std(ddof=1) / math.sqrt(samples))
    return mse, stderr
