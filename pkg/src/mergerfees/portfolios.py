"""Set-function machinery on the portfolio hypercube.

A portfolio is a subset of the n products an intermediary may carry,
encoded as a bit pattern. Everything downstream (profit classification,
bargaining, merger statistics) reduces to second differences of real-valued
functions on this hypercube: f(both) - f(only j) - f(only i) + f(neither).
A positive second difference means i and j are complements in terms of f,
a negative one means substitutes.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Mapping, Sequence

MAX_PRODUCTS = 24  # exhaustive enumeration of 2^n portfolios must stay feasible

DEFAULT_TOLERANCE = 1e-9  # profit units; optimizer residuals sit well below this


class PairKind(str, enum.Enum):
    STRICT_COMPLEMENTS = "strict_complements"
    STRICT_SUBSTITUTES = "strict_substitutes"
    ADDITIVE = "additive"
    MIXED = "mixed"


class ModularityKind(str, enum.Enum):
    SUPERMODULAR = "supermodular"
    SUBMODULAR = "submodular"
    ADDITIVE = "additive"
    NEITHER = "neither"


@dataclass(frozen=True)
class Portfolio:
    """Immutable subset of products 1..n, stored as a bitmask.

    Product labels are 1-based; bit (i-1) of ``mask`` is product i.
    """

    n: int
    mask: int = 0

    def __post_init__(self):
        if not 1 <= self.n <= MAX_PRODUCTS:
            raise ValueError(f"product count must be in [1, {MAX_PRODUCTS}], got {self.n}")
        if not 0 <= self.mask < (1 << self.n):
            raise ValueError(f"mask {self.mask:#x} out of range for n={self.n}")

    @classmethod
    def empty(cls, n: int) -> "Portfolio":
        return cls(n, 0)

    @classmethod
    def full(cls, n: int) -> "Portfolio":
        return cls(n, (1 << n) - 1)

    @classmethod
    def from_indices(cls, n: int, indices: Iterable[int]) -> "Portfolio":
        mask = 0
        for i in indices:
            if not 1 <= i <= n:
                raise IndexError(f"product index {i} out of range 1..{n}")
            mask |= 1 << (i - 1)
        return cls(n, mask)

    @classmethod
    def from_bits(cls, bits: Sequence[int]) -> "Portfolio":
        mask = 0
        for k, b in enumerate(bits):
            if b not in (0, 1):
                raise ValueError(f"bit {k} must be 0 or 1, got {b!r}")
            mask |= b << k
        return cls(len(bits), mask)

    def contains(self, i: int) -> bool:
        self._check_index(i)
        return bool(self.mask >> (i - 1) & 1)

    def with_product(self, i: int, on: bool = True) -> "Portfolio":
        self._check_index(i)
        bit = 1 << (i - 1)
        return Portfolio(self.n, self.mask | bit if on else self.mask & ~bit)

    def union(self, other: "Portfolio") -> "Portfolio":
        self._check_same_n(other)
        return Portfolio(self.n, self.mask | other.mask)

    def bits(self) -> tuple[int, ...]:
        return tuple(self.mask >> k & 1 for k in range(self.n))

    def indices(self) -> tuple[int, ...]:
        return tuple(i for i in range(1, self.n + 1) if self.mask >> (i - 1) & 1)

    def size(self) -> int:
        return bin(self.mask).count("1")

    def dot(self, values: Sequence[float]) -> float:
        """Inner product x . values with values indexed by product - 1."""
        if len(values) != self.n:
            raise ValueError(f"expected {self.n} values, got {len(values)}")
        return float(sum(values[i - 1] for i in self.indices()))

    def key(self) -> str:
        """Bit string 'x1x2...xn', product 1 leftmost."""
        return "".join(str(b) for b in self.bits())

    def _check_index(self, i: int) -> None:
        if not 1 <= i <= self.n:
            raise IndexError(f"product index {i} out of range 1..{self.n}")

    def _check_same_n(self, other: "Portfolio") -> None:
        if other.n != self.n:
            raise ValueError(f"portfolio sizes differ: {self.n} vs {other.n}")

    def __str__(self) -> str:
        return "{" + ",".join(map(str, self.indices())) + "}"


def all_portfolios(n: int) -> Iterator[Portfolio]:
    for mask in range(1 << n):
        yield Portfolio(n, mask)


def rest_portfolios(n: int, i: int, j: int) -> Iterator[Portfolio]:
    """All 2^(n-2) portfolios over the products other than i and j.

    Yielded portfolios live on the same n-product index space with bits
    i and j forced off.
    """
    others = [k for k in range(1, n + 1) if k not in (i, j)]
    for combo in itertools.chain.from_iterable(
        itertools.combinations(others, r) for r in range(len(others) + 1)
    ):
        yield Portfolio.from_indices(n, combo)


class SetFunction:
    """Memoized real-valued function on the n-product hypercube.

    Evaluation must be pure: the cache stores the first computed value per
    bit pattern and is never invalidated. Writes are single-writer-per-key
    in effect because re-computation yields the identical value, so
    concurrent hypercube scans are safe.
    """

    def __init__(self, n: int, fn: Callable[[Portfolio], float], name: str = ""):
        if not 1 <= n <= MAX_PRODUCTS:
            raise ValueError(f"product count must be in [1, {MAX_PRODUCTS}], got {n}")
        self.n = n
        self.name = name
        self._fn = fn
        self._cache: dict[int, float] = {}

    def __call__(self, x: Portfolio) -> float:
        if x.n != self.n:
            raise ValueError(f"portfolio has {x.n} products, function expects {self.n}")
        v = self._cache.get(x.mask)
        if v is None:
            v = float(self._fn(x))
            self._cache[x.mask] = v
        return v

    @property
    def cache(self) -> Mapping[int, float]:
        return dict(self._cache)

    def table(self) -> dict[str, float]:
        """Evaluate every portfolio; keys are 'x1x2...xn' bit strings."""
        return {x.key(): self(x) for x in all_portfolios(self.n)}

    def restrict(self, fixed: Mapping[int, int]) -> "SetFunction":
        """View with some products pinned on/off, remaining ones renumbered.

        Free products keep their relative order and get labels 1..m.
        """
        for i, b in fixed.items():
            if not 1 <= i <= self.n:
                raise IndexError(f"product index {i} out of range 1..{self.n}")
            if b not in (0, 1):
                raise ValueError(f"fixed value for product {i} must be 0 or 1")
        free = [i for i in range(1, self.n + 1) if i not in fixed]
        if not free:
            raise ValueError("restriction pins every product")
        base_mask = 0
        for i, b in fixed.items():
            base_mask |= b << (i - 1)

        def fn(y: Portfolio) -> float:
            mask = base_mask
            for k, i in enumerate(free):
                mask |= (y.mask >> k & 1) << (i - 1)
            return self(Portfolio(self.n, mask))

        return SetFunction(len(free), fn, name=f"{self.name}|restricted")

    def negated(self) -> "SetFunction":
        return SetFunction(self.n, lambda x: -self(x), name=f"-{self.name}")


def additive_function(weights: Sequence[float]) -> SetFunction:
    w = tuple(float(x) for x in weights)
    return SetFunction(len(w), lambda x: x.dot(w), name="additive")


def second_difference(f: SetFunction, i: int, j: int, rest: Portfolio) -> float:
    """f(i on, j on, rest) - f(i off, j on, rest) - f(i on, j off, rest) + f(rest).

    ``rest`` assigns membership to every product except i and j (its bits for
    i and j must be off). Positive means complements at this rest portfolio,
    negative means substitutes. Symmetric in (i, j) exactly.
    """
    if i == j:
        raise ValueError("second difference needs two distinct products")
    if rest.n != f.n:
        raise ValueError(f"rest portfolio has {rest.n} products, expected {f.n}")
    if rest.contains(i) or rest.contains(j):
        raise ValueError(f"rest portfolio must exclude products {i} and {j}")
    lo, hi = min(i, j), max(i, j)
    both = rest.with_product(lo).with_product(hi)
    # fixed evaluation order keeps the value exactly symmetric in (i, j)
    return (f(both) + f(rest)) - (f(rest.with_product(lo)) + f(rest.with_product(hi)))


@dataclass(frozen=True)
class Witness:
    rest: Portfolio
    value: float


@dataclass(frozen=True)
class PairRelation:
    """Verdict for one product pair, with the second differences behind it."""

    i: int
    j: int
    kind: PairKind
    tolerance: float
    witnesses: tuple[Witness, ...]
    most_positive: Witness
    most_negative: Witness

    @property
    def values(self) -> tuple[float, ...]:
        return tuple(w.value for w in self.witnesses)


def classify_pair(
    f: SetFunction, i: int, j: int, tolerance: float = DEFAULT_TOLERANCE
) -> PairRelation:
    """Aggregate second differences over all rest portfolios into one verdict.

    strict complements: every difference > +tolerance
    strict substitutes: every difference < -tolerance
    additive:           every |difference| <= tolerance
    mixed:              anything else; the extreme witnesses show where the
                        sign pattern breaks
    """
    if tolerance < 0:
        raise ValueError("tolerance must be >= 0")
    witnesses = tuple(
        Witness(rest, second_difference(f, i, j, rest))
        for rest in rest_portfolios(f.n, i, j)
    )
    hi = max(witnesses, key=lambda w: w.value)
    lo = min(witnesses, key=lambda w: w.value)
    if lo.value > tolerance:
        kind = PairKind.STRICT_COMPLEMENTS
    elif hi.value < -tolerance:
        kind = PairKind.STRICT_SUBSTITUTES
    elif abs(hi.value) <= tolerance and abs(lo.value) <= tolerance:
        kind = PairKind.ADDITIVE
    else:
        kind = PairKind.MIXED
    return PairRelation(i, j, kind, tolerance, witnesses, hi, lo)


def classify_pair_at(
    f: SetFunction, i: int, j: int, rest: Portfolio, tolerance: float = DEFAULT_TOLERANCE
) -> PairRelation:
    """Single-rest variant of classify_pair (one witness, one difference)."""
    w = Witness(rest, second_difference(f, i, j, rest))
    if w.value > tolerance:
        kind = PairKind.STRICT_COMPLEMENTS
    elif w.value < -tolerance:
        kind = PairKind.STRICT_SUBSTITUTES
    else:
        kind = PairKind.ADDITIVE
    return PairRelation(i, j, kind, tolerance, (w,), w, w)


@dataclass(frozen=True)
class ModularityReport:
    kind: ModularityKind
    tolerance: float
    pairs: Mapping[tuple[int, int], PairRelation] = field(repr=False)

    def pair(self, i: int, j: int) -> PairRelation:
        return self.pairs[(min(i, j), max(i, j))]


def classify_modularity(
    f: SetFunction, tolerance: float = DEFAULT_TOLERANCE
) -> ModularityReport:
    """Classify f over every product pair.

    Supermodular: all pairs strict complements or additive, at least one
    strict. Submodular: the mirror image. Additive: all pairs additive.
    Neither: anything else (including any mixed pair).
    """
    if f.n < 2:
        raise ValueError("modularity needs at least two products")
    pairs = {
        (i, j): classify_pair(f, i, j, tolerance)
        for i, j in itertools.combinations(range(1, f.n + 1), 2)
    }
    kinds = {rel.kind for rel in pairs.values()}
    if kinds == {PairKind.ADDITIVE}:
        verdict = ModularityKind.ADDITIVE
    elif kinds <= {PairKind.STRICT_COMPLEMENTS, PairKind.ADDITIVE}:
        verdict = ModularityKind.SUPERMODULAR
    elif kinds <= {PairKind.STRICT_SUBSTITUTES, PairKind.ADDITIVE}:
        verdict = ModularityKind.SUBMODULAR
    else:
        verdict = ModularityKind.NEITHER
    return ModularityReport(verdict, tolerance, pairs)
