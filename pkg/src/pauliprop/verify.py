"""Invariant suites behind the `verify` subcommand.

Each suite returns a CheckResult with a pass flag, a one-line metric
summary, and the first counterexamples on failure.  Suite sizes default to
full scale; keyword arguments let tests run them smaller.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .analytics import (
    UnnormalizedOperatorWarning,
    delta_bound,
    ose,
    truncation_error,
    weight_truncation_bound,
    xy_structure_check,
)
from .hamiltonian import Hamiltonian, build_xxz_chain
from .oracle import (
    dense_heisenberg_coefficients,
    dense_trotter_expectation,
    dense_word,
    local_scrambling_mc,
    random_product_state,
)
from .pauli import PauliWord, commutes, multiply
from .propagation import RunConfig, backpropagate, conjugate_rotation
from .sparse import (
    PauliSum,
    add,
    pauli_norm2,
    scale,
    squared_tail,
    tensor_product,
    weight_truncate,
)


@dataclass
class CheckResult:
    """Outcome of one verification suite."""

    name: str
    ok: bool
    detail: str
    failures: list[str] = field(default_factory=list)

    def lines(self) -> list[str]:
        status = "PASS" if self.ok else "FAIL"
        out = [f"{status} {self.name}: {self.detail}"]
        out.extend(f"  counterexample: {f}" for f in self.failures[:10])
        extra = len(self.failures) - 10
        if extra > 0:
            out.append(f"  ... and {extra} more")
        return out


def _random_unit_sum(
    rng: np.random.Generator, n: int, terms: int, signed: bool = True
) -> PauliSum:
    terms = min(terms, 4**n)
    out = PauliSum(n)
    while len(out) < terms:
        x = int(rng.integers(0, 1 << n))
        z = int(rng.integers(0, 1 << n))
        c = float(rng.standard_normal())
        if not signed:
            c = abs(c)
        if c != 0.0:
            out._data[(x, z)] = c
    return scale(out, 1.0 / pauli_norm2(out))


def suite_algebra(seed: int = 0) -> CheckResult:
    """Products and commutators of all two-site word pairs vs dense matrices."""
    del seed  # exhaustive, nothing to randomize
    words = [PauliWord(2, x, z) for x in range(4) for z in range(4)]
    phases = (1.0, 1.0j, -1.0, -1.0j)
    failures: list[str] = []
    checked = 0
    for p, q in itertools.product(words, repeat=2):
        dp, dq = dense_word(p), dense_word(q)
        word, k = multiply(p, q)
        if not np.array_equal(dp @ dq, phases[k] * dense_word(word)):
            failures.append(f"product {p.to_string()} * {q.to_string()} (k={k})")
        dense_commutes = np.array_equal(dp @ dq, dq @ dp)
        if commutes(p, q) != dense_commutes:
            failures.append(f"commutator {p.to_string()} vs {q.to_string()}")
        checked += 1
    return CheckResult(
        name="algebra",
        ok=not failures,
        detail=f"{checked} word pairs, products and commutators exact",
        failures=failures,
    )


def _random_hamiltonian(rng: np.random.Generator, n: int) -> Hamiltonian:
    if rng.random() < 0.5 and n >= 2:
        return build_xxz_chain(
            n,
            float(rng.uniform(0.3, 1.2)),
            float(rng.uniform(0.3, 1.2)),
            float(rng.uniform(-0.8, 0.8)),
            boundary="periodic" if (n >= 3 and rng.random() < 0.3) else "open",
        )
    terms = []
    for _ in range(int(rng.integers(n, 3 * n + 1))):
        while True:
            x = int(rng.integers(0, 1 << n))
            z = int(rng.integers(0, 1 << n))
            if x | z:
                break
        terms.append((float(rng.uniform(-1.0, 1.0)), PauliWord(n, x, z)))
    return Hamiltonian(n, tuple(terms), description="random")


def suite_oracle(
    seed: int = 7,
    instances: int = 50,
    tol: float = 1e-9,
) -> CheckResult:
    """Untruncated engine vs dense state evolution on randomized instances."""
    rng = np.random.default_rng(seed)
    failures: list[str] = []
    worst = 0.0
    for i in range(instances):
        n = int(rng.integers(2, 9))
        H = _random_hamiltonian(rng, n)
        state = random_product_state(rng, n)
        site = int(rng.integers(0, n))
        O = PauliSum.from_terms(n, [(PauliWord.single(n, site, "Z"), 1.0)])
        t = float(rng.uniform(0.2, 1.2))
        N = int(rng.integers(1, 21))
        _, records = backpropagate(O, H, RunConfig(t=t, N=N, record_every=N), state=state)
        engine = records[-1].value
        dense = dense_trotter_expectation(H, state, O, t, N)
        dev = abs(engine - dense)
        worst = max(worst, dev)
        if dev > tol:
            failures.append(
                f"instance {i}: n={n} t={t:.3f} N={N} |engine-dense|={dev:.3e}"
            )
    return CheckResult(
        name="oracle",
        ok=not failures,
        detail=f"max |engine - dense| = {worst:.3e} over {instances} instances",
        failures=failures,
    )


def suite_xy_structure(
    seed: int = 0,
    L: int = 50,
    steps: int = 200,
    tau: float = 0.05,
) -> CheckResult:
    """Structural claims for pure-XY propagation of a central Z.

    Checks, per step s and under both boundaries: (a) the five-pattern
    family, (b) support within [l-s, l+s], (c) term count within
    2s + 4s(2s-1).  Also requires that switching on a ZZ coupling produces
    a family violation witness.
    """
    del seed
    l = L // 2
    failures: list[str] = []
    detail_bits: list[str] = []
    for boundary in ("open", "periodic"):
        H = build_xxz_chain(L, 1.0, 1.0, 0.0, boundary=boundary)
        current = PauliSum.from_terms(L, [(PauliWord.single(L, l, "Z"), 1.0)])
        first_fail = {"family": None, "cone": None, "count": None}
        max_terms = 0
        witness_tag = {"family": "family", "cone": "cone", "count": "count"}
        for s in range(1, steps + 1):
            current, _ = backpropagate(current, H, RunConfig(t=tau, N=1))
            rep = xy_structure_check(current, l, s)
            max_terms = max(max_terms, rep.terms)
            for part, part_ok in (
                ("family", rep.family_ok),
                ("cone", rep.cone_ok),
                ("count", rep.count_ok),
            ):
                if not part_ok and first_fail[part] is None:
                    first_fail[part] = s
                    # rep.witness describes whichever sub-check failed first,
                    # so attach it only when it belongs to this part
                    note = (
                        f": {rep.witness}"
                        if rep.witness and witness_tag[part] in rep.witness
                        else ""
                    )
                    failures.append(f"{boundary} {part} first fails at s={s}{note}")
        parts = ", ".join(
            f"{part} {'ok' if step is None else f'fails from s={step}'}"
            for part, step in first_fail.items()
        )
        detail_bits.append(f"{boundary}: {parts}, peak {max_terms} terms")

    H = build_xxz_chain(min(L, 8), 1.0, 1.0, 0.5)
    O = PauliSum.from_terms(H.n, [(PauliWord.single(H.n, H.n // 2, "Z"), 1.0)])
    out, _ = backpropagate(O, H, RunConfig(t=4 * tau, N=4))
    rep = xy_structure_check(out, H.n // 2, 4)
    if rep.family_ok:
        failures.append("ZZ coupling produced no family violation witness")
    else:
        detail_bits.append(f"Jz=0.5 witness: {rep.witness}")
    return CheckResult(
        name="xy-structure",
        ok=not failures,
        detail="; ".join(detail_bits),
        failures=failures,
    )


def suite_entropy_properties(
    seed: int = 0,
    operators: int = 200,
    tol: float = 1e-9,
) -> CheckResult:
    """The four entropy properties on randomized operators."""
    rng = np.random.default_rng(seed)
    failures: list[str] = []

    for i in range(operators):
        a = _random_unit_sum(rng, int(rng.integers(1, 3)), int(rng.integers(1, 8)))
        b = _random_unit_sum(rng, int(rng.integers(1, 4)), int(rng.integers(1, 12)))
        ab = tensor_product(a, b)
        for alpha in (0.25, 0.5, 0.75, 1.0):
            gap = abs(ose(ab, alpha).value - ose(a, alpha).value - ose(b, alpha).value)
            if gap > tol:
                failures.append(f"additivity op {i} alpha={alpha}: gap {gap:.3e}")

    for i in range(operators):
        s = _random_unit_sum(rng, 3, int(rng.integers(1, 20)))
        while True:
            word = PauliWord(3, int(rng.integers(0, 8)), int(rng.integers(0, 8)))
            if not word.is_identity():
                break
        rotated = conjugate_rotation(s, word, 1.0, math.pi / 4)
        for alpha in (0.25, 0.5, 1.0):
            gap = abs(ose(rotated, alpha).value - ose(s, alpha).value)
            if gap > tol:
                failures.append(f"clifford op {i} alpha={alpha}: gap {gap:.3e}")

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnnormalizedOperatorWarning)
        for i in range(operators):
            a = _random_unit_sum(rng, 2, int(rng.integers(1, 10)), signed=False)
            b = _random_unit_sum(rng, 2, int(rng.integers(1, 10)), signed=False)
            lam = float(rng.uniform(0.05, 0.95))
            mix = add(scale(a, lam), scale(b, 1.0 - lam), prune_eps=0.0)
            for alpha in (0.1, 0.25, 0.49):
                lhs = ose(mix, alpha).value
                rhs = lam * ose(a, alpha).value + (1.0 - lam) * ose(b, alpha).value
                if lhs < rhs - tol:
                    failures.append(f"concavity op {i} alpha={alpha}: {lhs:.6f} < {rhs:.6f}")

        for i in range(operators):
            a = _random_unit_sum(rng, 2, int(rng.integers(1, 10)))
            b = _random_unit_sum(rng, 2, int(rng.integers(1, 10)))
            lam = float(rng.uniform(0.05, 0.95))
            mix = add(scale(a, lam), scale(b, 1.0 - lam), prune_eps=0.0)
            if len(mix) == 0:
                continue
            for alpha in (0.5, 0.75, 0.99):
                lhs = math.exp(ose(mix, alpha).value)
                rhs = lam * math.exp(ose(a, alpha).value) + (1.0 - lam) * math.exp(
                    ose(b, alpha).value
                )
                if lhs > rhs + tol:
                    failures.append(
                        f"exp-convexity op {i} alpha={alpha}: {lhs:.6f} > {rhs:.6f}"
                    )

    return CheckResult(
        name="entropy-properties",
        ok=not failures,
        detail=f"additivity, rotation invariance, concavity, exp-convexity x {operators}",
        failures=failures,
    )


def _evolved_operator_set(rng: np.random.Generator) -> list[PauliSum]:
    """Exactly evolved single-site observables at several times and couplings."""
    out = []
    for Jz in (0.0, 0.5):
        H = build_xxz_chain(6, 1.0, 1.0, Jz)
        O = PauliSum.from_terms(6, [(PauliWord.single(6, 3, "Z"), 1.0)])
        for t, N in ((0.4, 8), (0.8, 16), (1.6, 32)):
            out.append(dense_heisenberg_coefficients(H, O, t, N))
    for _ in range(20):
        out.append(_random_unit_sum(rng, 3, int(rng.integers(2, 40))))
    return out


_K_GRID = (1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024, 2048)


def suite_tail_bound(seed: int = 0) -> CheckResult:
    """ln(tail mass beyond rank K) never exceeds the entropic ln-bound."""
    rng = np.random.default_rng(seed)
    failures: list[str] = []
    checked = 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnnormalizedOperatorWarning)
        for idx, s in enumerate(_evolved_operator_set(rng)):
            for alpha in (0.25, 0.5, 0.75):
                S = ose(s, alpha).value
                for K in _K_GRID:
                    tail = squared_tail(s, K)
                    if tail <= 0.0:
                        continue
                    checked += 1
                    bound = delta_bound(S, K, alpha)
                    if math.log(tail) > bound + 1e-12:
                        failures.append(
                            f"operator {idx} alpha={alpha} K={K}: "
                            f"ln tail {math.log(tail):.6f} > bound {bound:.6f}"
                        )
    return CheckResult(
        name="tail-bound",
        ok=not failures,
        detail=f"{checked} (operator, K, alpha) points, zero violations required",
        failures=failures,
    )


def suite_truncation_error(seed: int = 0) -> CheckResult:
    """Exact rescaled Top-K error never exceeds sqrt(2 * tail mass)."""
    rng = np.random.default_rng(seed)
    failures: list[str] = []
    checked = 0
    for idx, s in enumerate(_evolved_operator_set(rng)):
        for K in _K_GRID:
            exact, bound = truncation_error(s, K)
            checked += 1
            if exact > bound + 1e-12:
                failures.append(
                    f"operator {idx} K={K}: exact {exact:.6e} > bound {bound:.6e}"
                )
    return CheckResult(
        name="truncation-error",
        ok=not failures,
        detail=f"{checked} (operator, K) points, exact <= bound throughout",
        failures=failures,
    )


def suite_weight_mc(
    seed: int = 0,
    samples: int = 4000,
    operators: int = 5,
) -> CheckResult:
    """Monte Carlo truncation error vs the weight-cap expectation bound."""
    rng = np.random.default_rng(seed)
    failures: list[str] = []
    margins: list[float] = []
    for i in range(operators):
        O = _random_unit_sum(rng, 6, int(rng.integers(20, 60)))
        for M in (2, 3, 4):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                O_hat = weight_truncate(O, M)
            mse, stderr = local_scrambling_mc(O, O_hat, samples, seed=seed + 1000 * i + M)
            bound = weight_truncation_bound(O, M)
            margins.append(bound + 4.0 * stderr - mse)
            if mse > bound + 4.0 * stderr:
                failures.append(
                    f"operator {i} M={M}: mse {mse:.6f} > bound {bound:.6f} "
                    f"+ 4*stderr {4 * stderr:.6f}"
                )
    return CheckResult(
        name="weight-mc",
        ok=not failures,
        detail=(
            f"{operators} operators x M in (2,3,4), {samples} samples each, "
            f"min margin {min(margins):.4f}"
        ),
        failures=failures,
    )


SUITES: dict[str, Callable[..., CheckResult]] = {
    "algebra": suite_algebra,
    "oracle": suite_oracle,
    "xy-structure": suite_xy_structure,
    "entropy-properties": suite_entropy_properties,
    "truncation-error": suite_truncation_error,
    "tail-bound": suite_tail_bound,
    "weight-mc": suite_weight_mc,
}


def run_suites(names: list[str], seed: int = 0) -> list[CheckResult]:
    return [SUITES[name](seed=seed) for name in names]
