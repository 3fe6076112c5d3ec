"""Core model: signal grids, valuation instances, and structural parameters.

A valuation instance holds, for each of n bidders, a nonnegative value for
every point of the discrete signal grid {0..k_1} x ... x {0..k_n}.  This
module measures the two structural constants everything else depends on:

* the crossing constant ``c``: how much faster a bidder's own signal can move
  someone else's value than her own (clamped below at 1, INFINITE when an
  own-increment of zero coexists with a positive cross-increment);
* the concavity constant ``d``: how much an increment in one direction can
  grow as the remaining signals rise (d = 1 means concave).

Both are exact suprema over the tabulated grid, not estimates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

INFINITE = math.inf

#: Default bound on the number of grid points a dense instance may have.
DEFAULT_PROFILE_CAP = 10_000_000


class ValidationError(ValueError):
    """Raised when an instance, profile, or parameter is malformed."""


class CapExceeded(RuntimeError):
    """Raised when an enumeration would exceed its configured cap."""


@dataclass(frozen=True)
class SignalSpace:
    """Discrete signal grid.  Bidder i draws signals from {0, 1, ..., sizes[i]}."""

    sizes: tuple[int, ...]
    profile_cap: int = field(default=DEFAULT_PROFILE_CAP, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(k) for k in self.sizes))
        if len(self.sizes) < 1:
            raise ValidationError("need at least one bidder")
        if any(k < 1 for k in self.sizes):
            raise ValidationError(f"every signal bound must be >= 1, got {self.sizes}")
        count = 1
        for k in self.sizes:
            count *= k + 1
            if count > self.profile_cap:
                raise ValidationError(
                    f"profile count exceeds cap {self.profile_cap}; "
                    "raise the cap explicitly for larger grids"
                )

    @property
    def n(self) -> int:
        return len(self.sizes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(k + 1 for k in self.sizes)

    @property
    def profile_count(self) -> int:
        return int(np.prod([k + 1 for k in self.sizes], dtype=object))

    def profiles(self) -> Iterator[tuple[int, ...]]:
        """All profiles in row-major order (last coordinate fastest)."""
        return iter(np.ndindex(*self.shape))

    def index_of(self, profile: Sequence[int]) -> int:
        """Row-major index: sum_i s_i * prod_{j>i} (k_j + 1).  Part of the JSON contract."""
        idx = 0
        for s, size in zip(profile, self.shape):
            idx = idx * size + int(s)
        return idx

    def profile_at(self, index: int) -> tuple[int, ...]:
        out = []
        for size in reversed(self.shape):
            out.append(index % size)
            index //= size
        return tuple(reversed(out))

    def validate_profile(self, profile: Sequence[int]) -> tuple[int, ...]:
        p = tuple(int(s) for s in profile)
        if len(p) != self.n:
            raise ValidationError(f"profile length {len(p)} != {self.n} bidders")
        for i, (s, k) in enumerate(zip(p, self.sizes)):
            if not 0 <= s <= k:
                raise ValidationError(f"signal {s} out of range [0, {k}] for bidder {i}")
        return p


@dataclass(frozen=True)
class ValuationInstance:
    """n bidders' valuations over a signal grid.

    Either tabulated (``values`` is a dense (n, *grid) array) or backed by a
    deterministic evaluator ``evaluate(bidder, profile)``.  ``vector_evaluate``
    is an optional fast path returning all n values at one profile.  Instances
    are immutable; all operations are pure and thread-safe.
    """

    space: SignalSpace
    values: Optional[np.ndarray] = None
    evaluate: Optional[Callable[[int, tuple[int, ...]], float]] = None
    vector_evaluate: Optional[Callable[[tuple[int, ...]], np.ndarray]] = None
    name: str = ""

    def __post_init__(self):
        if self.values is None and self.evaluate is None and self.vector_evaluate is None:
            raise ValidationError("instance needs tabulated values or an evaluator")
        if self.values is not None:
            arr = np.asarray(self.values, dtype=np.float64)
            expected = (self.space.n,) + self.space.shape
            if arr.shape != expected:
                raise ValidationError(f"values shape {arr.shape} != {expected}")
            if not np.all(np.isfinite(arr)):
                raise ValidationError("values must be finite")
            if np.any(arr < 0):
                raise ValidationError("values must be nonnegative")
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, "values", arr)

    @property
    def n(self) -> int:
        return self.space.n

    @property
    def is_tabulated(self) -> bool:
        return self.values is not None

    def value(self, bidder: int, profile: Sequence[int]) -> float:
        if not 0 <= bidder < self.n:
            raise ValidationError(f"bidder {bidder} out of range")
        p = tuple(profile)
        if self.values is not None:
            return float(self.values[(bidder,) + p])
        if self.evaluate is not None:
            return float(self.evaluate(bidder, p))
        return float(self.vector_evaluate(p)[bidder])

    def values_at(self, profile: Sequence[int]) -> np.ndarray:
        """All n values at one profile."""
        p = tuple(profile)
        if self.values is not None:
            return self.values[(slice(None),) + p]
        if self.vector_evaluate is not None:
            return np.asarray(self.vector_evaluate(p), dtype=np.float64)
        return np.array([self.evaluate(i, p) for i in range(self.n)], dtype=np.float64)

    def tabulated(self, cap: Optional[int] = None) -> "ValuationInstance":
        """Dense copy.  Refuses above the cap rather than sampling.

        The default cap is the global one, not the space's declared bound, so
        evaluator-backed instances on deliberately huge grids still refuse.
        """
        if self.is_tabulated:
            return self
        cap = DEFAULT_PROFILE_CAP if cap is None else cap
        if self.space.profile_count > cap:
            raise CapExceeded(
                f"cannot tabulate {self.space.profile_count} profiles (cap {cap})"
            )
        arr = np.empty((self.n,) + self.space.shape, dtype=np.float64)
        for p in self.space.profiles():
            arr[(slice(None),) + p] = self.values_at(p)
        return ValuationInstance(space=self.space, values=arr, name=self.name)

    def scaled(self, factor: float) -> "ValuationInstance":
        if factor <= 0:
            raise ValidationError("scale factor must be positive")
        return ValuationInstance(
            space=self.space, values=self._dense() * factor, name=self.name
        )

    def _dense(self) -> np.ndarray:
        return self.tabulated().values


def discrete_derivative(
    v: ValuationInstance, target: int, direction: int, s: Sequence[int]
) -> float:
    """v_target(s) - v_target(s with s_direction lowered by one).  Needs s_direction >= 1."""
    p = v.space.validate_profile(s)
    if not 0 <= target < v.n or not 0 <= direction < v.n:
        raise ValidationError("bidder index out of range")
    if p[direction] < 1:
        raise ValidationError(f"signal of bidder {direction} must be >= 1 at {p}")
    lower = list(p)
    lower[direction] -= 1
    return v.value(target, p) - v.value(target, tuple(lower))


def check_value_monotone(v: ValuationInstance) -> list[tuple[int, int, tuple[int, ...], float, float]]:
    """Violations of coordinate-wise monotonicity: (bidder, axis, profile, lower, upper).

    Empty list means every v_i is non-decreasing in every signal.
    """
    dense = v._dense()
    violations = []
    for axis in range(v.n):
        diffs = np.diff(dense, axis=axis + 1)
        bad = np.argwhere(diffs < 0)
        for loc in bad:
            bidder = int(loc[0])
            lower_p = tuple(int(x) for x in loc[1:])
            upper_p = list(lower_p)
            upper_p[axis] += 1
            violations.append(
                (
                    bidder,
                    axis,
                    tuple(upper_p),
                    float(dense[(bidder,) + lower_p]),
                    float(dense[(bidder,) + tuple(upper_p)]),
                )
            )
    return violations


def spot_check_value_monotone(
    v: ValuationInstance, samples: int = 1000, seed: int = 0
) -> list[tuple[int, int, tuple[int, ...], float, float]]:
    """Sampled monotonicity check for evaluator-backed instances over huge grids.

    Draws random (bidder, profile, axis) triples with a seeded generator and
    compares each value against its lower neighbor.  Same violation tuples as
    the exhaustive check; an empty list is evidence, not proof.
    """
    import random as _random

    rng = _random.Random(seed)
    sizes = v.space.sizes
    violations = []
    for _ in range(samples):
        profile = tuple(rng.randint(0, k) for k in sizes)
        axis = rng.randrange(v.n)
        if profile[axis] == 0:
            continue
        bidder = rng.randrange(v.n)
        lower = list(profile)
        lower[axis] -= 1
        lo = v.value(bidder, tuple(lower))
        hi = v.value(bidder, profile)
        if hi < lo:
            violations.append((bidder, axis, profile, lo, hi))
    return violations


def _require_monotone(v: ValuationInstance) -> np.ndarray:
    dense = v._dense()
    bad = check_value_monotone(v)
    if bad:
        i, j, s, lo, hi = bad[0]
        raise ValidationError(
            f"valuations not monotone: v_{i} drops {lo} -> {hi} "
            f"when bidder {j}'s signal rises to reach {s}"
        )
    return dense


@dataclass(frozen=True)
class CrossingReport:
    """Measured crossing constant with its witness.

    ``c`` is clamped below at 1; ``raw`` is the unclamped supremum ratio
    (0 when no cross-increment is ever positive).  The witness is the
    (direction bidder, target bidder, profile) triple attaining the supremum,
    or None for degenerate instances.
    """

    c: float
    raw: float
    witness: Optional[tuple[int, int, tuple[int, ...]]]


def single_crossing_report(v: ValuationInstance) -> CrossingReport:
    dense = _require_monotone(v)
    n = v.n
    best_raw = 0.0
    witness = None
    infinite = False
    for i in range(n):
        diffs = np.diff(dense, axis=i + 1)  # (n, ..., k_i, ...)
        own = diffs[i]
        for j in range(n):
            if j == i:
                continue
            cross = diffs[j]
            blow_up = (own == 0) & (cross > 0)
            if np.any(blow_up):
                if not infinite:
                    loc = np.argwhere(blow_up)[0]
                    p = list(int(x) for x in loc)
                    p[i] += 1  # diff at index t compares signals t and t+1
                    witness = (i, j, tuple(p))
                    infinite = True
                continue
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(own > 0, cross / np.where(own > 0, own, 1.0), 0.0)
            local = float(ratios.max()) if ratios.size else 0.0
            if not infinite and local > best_raw:
                best_raw = local
                loc = np.unravel_index(int(np.argmax(ratios)), ratios.shape)
                p = list(int(x) for x in loc)
                p[i] += 1
                witness = (i, j, tuple(p))
    if infinite:
        return CrossingReport(c=INFINITE, raw=INFINITE, witness=witness)
    return CrossingReport(c=max(1.0, best_raw), raw=best_raw, witness=witness)


def compute_c(v: ValuationInstance) -> float:
    """Smallest c >= 1 with c * own-increment >= cross-increment everywhere.

    INFINITE when a zero own-increment coexists with a positive cross-increment.
    """
    return single_crossing_report(v).c


@dataclass(frozen=True)
class ConcavityReport:
    d: float
    raw: float
    witness: Optional[tuple[int, int, tuple[int, ...], tuple[int, ...]]]


def _upset_max(arr: np.ndarray) -> np.ndarray:
    """out[a] = max of arr over the coordinate-wise up-set of a."""
    out = arr.copy()
    for axis in range(arr.ndim):
        out = np.flip(np.maximum.accumulate(np.flip(out, axis=axis), axis=axis), axis=axis)
    return out


def concavity_report(v: ValuationInstance) -> ConcavityReport:
    """Measured concavity constant d.

    For every value owner i, direction j, and signal level s_j >= 1, compares
    the j-increment at every context against the same increment at every
    coordinate-wise higher context.  d = max growth ratio (clamped at 1);
    INFINITE when a zero increment sits below a positive one.
    """
    dense = _require_monotone(v)
    n = v.n
    best_raw = 0.0
    witness = None
    infinite = False
    for j in range(n):
        diffs = np.diff(dense, axis=j + 1)  # (n, ..., k_j, ...)
        for i in range(n):
            slab_all = np.moveaxis(diffs[i], j, 0)  # (k_j, contexts...)
            for t in range(slab_all.shape[0]):
                low = slab_all[t]
                high = _upset_max(low)
                blow_up = (low == 0) & (high > 0)
                if np.any(blow_up):
                    if not infinite:
                        loc = tuple(int(x) for x in np.argwhere(blow_up)[0])
                        witness = (i, j, _context_profile(loc, j, t + 1), None)
                        infinite = True
                    continue
                with np.errstate(divide="ignore", invalid="ignore"):
                    ratios = np.where(low > 0, high / np.where(low > 0, low, 1.0), 1.0)
                local = float(ratios.max()) if ratios.size else 1.0
                if not infinite and local > best_raw:
                    best_raw = local
                    loc = np.unravel_index(int(np.argmax(ratios)), ratios.shape)
                    witness = (i, j, _context_profile(tuple(int(x) for x in loc), j, t + 1), None)
    if infinite:
        return ConcavityReport(d=INFINITE, raw=INFINITE, witness=witness)
    return ConcavityReport(d=max(1.0, best_raw), raw=best_raw, witness=witness)


def _context_profile(context: tuple[int, ...], axis: int, level: int) -> tuple[int, ...]:
    p = list(context)
    p.insert(axis, level)
    return tuple(p)


def compute_d(v: ValuationInstance) -> float:
    """Smallest d >= 1 bounding how much increments grow as other signals rise."""
    return concavity_report(v).d


def alpha_approximates(
    v: ValuationInstance, i: int, j: int, s: Sequence[int], alpha: float
) -> bool:
    """True iff v_j(s) <= alpha * v_i(s).  Exact comparison, no epsilon."""
    if alpha < 0:
        raise ValidationError("alpha must be nonnegative")
    p = v.space.validate_profile(s)
    return v.value(j, p) <= alpha * v.value(i, p)


def intermediate_profile(
    s: Sequence[int], pi: Sequence[int], i: int
) -> tuple[int, ...]:
    """Profile keeping the signals of the first i bidders of ordering pi, zeroing the rest."""
    n = len(s)
    order = validate_permutation(pi, n)
    if not 0 <= i <= n:
        raise ValidationError(f"prefix length {i} out of range [0, {n}]")
    out = [0] * n
    for pos in range(i):
        out[order[pos]] = int(s[order[pos]])
    return tuple(out)


def validate_permutation(pi: Sequence[int], n: int) -> tuple[int, ...]:
    order = tuple(int(x) for x in pi)
    if sorted(order) != list(range(n)):
        raise ValidationError(f"{order} is not a permutation of 0..{n - 1}")
    return order


def restrict_box(
    v: ValuationInstance, lo: Sequence[int], hi: Sequence[int]
) -> ValuationInstance:
    """Sub-instance on the box [lo, hi] (inclusive), signals re-indexed from 0."""
    lo = tuple(int(x) for x in lo)
    hi = tuple(int(x) for x in hi)
    if len(lo) != v.n or len(hi) != v.n:
        raise ValidationError("box bounds must have one entry per bidder")
    for b, (a, z, k) in enumerate(zip(lo, hi, v.space.sizes)):
        if not 0 <= a < z <= k:
            raise ValidationError(f"bad box [{a}, {z}] for bidder {b} (k={k})")
    dense = v._dense()
    slices = (slice(None),) + tuple(slice(a, z + 1) for a, z in zip(lo, hi))
    sizes = tuple(z - a for a, z in zip(lo, hi))
    return ValuationInstance(
        space=SignalSpace(sizes, profile_cap=v.space.profile_cap),
        values=dense[slices],
        name=v.name,
    )


def restrict_bidders(
    v: ValuationInstance, bidders: Sequence[int], fixed: Sequence[int]
) -> ValuationInstance:
    """Sub-market over ``bidders``: the rest report ``fixed`` and cannot win.

    Valuations of the kept bidders are evaluated at the combined profile, so
    the dropped bidders' signals enter every evaluation as constants.
    """
    keep = tuple(int(b) for b in bidders)
    if len(set(keep)) != len(keep) or any(not 0 <= b < v.n for b in keep):
        raise ValidationError(f"bad bidder subset {keep}")
    base = v.space.validate_profile(fixed)
    sizes = tuple(v.space.sizes[b] for b in keep)
    space = SignalSpace(sizes, profile_cap=v.space.profile_cap)

    def embed(sub_profile: tuple[int, ...]) -> tuple[int, ...]:
        full = list(base)
        for b, s in zip(keep, sub_profile):
            full[b] = s
        return tuple(full)

    def vector_evaluate(sub_profile: tuple[int, ...]) -> np.ndarray:
        return v.values_at(embed(sub_profile))[list(keep)]

    sub = ValuationInstance(space=space, vector_evaluate=vector_evaluate, name=v.name)
    if space.profile_count <= 4096 and v.is_tabulated:
        sub = sub.tabulated()
    return sub


# ---------------------------------------------------------------------------
# JSON wire format.  Tables of values are row-major per bidder:
# index = sum_i s_i * prod_{j>i} (k_j + 1).
# ---------------------------------------------------------------------------


def instance_to_json(v: ValuationInstance) -> dict:
    dense = v._dense()
    n = v.n
    flat = dense.reshape(n, -1)  # C order == row-major contract
    return {
        "sizes": list(v.space.sizes),
        "values": [[float(x) for x in row] for row in flat],
    }


def instance_from_json(obj: dict, profile_cap: int = DEFAULT_PROFILE_CAP) -> ValuationInstance:
    if "sizes" not in obj or "values" not in obj:
        raise ValidationError("instance JSON needs 'sizes' and 'values'")
    space = SignalSpace(tuple(obj["sizes"]), profile_cap=profile_cap)
    rows = obj["values"]
    if len(rows) != space.n:
        raise ValidationError(f"expected {space.n} value rows, got {len(rows)}")
    count = space.profile_count
    arr = np.empty((space.n,) + space.shape, dtype=np.float64)
    for i, row in enumerate(rows):
        if len(row) != count:
            raise ValidationError(
                f"bidder {i} row has {len(row)} entries, expected {count}"
            )
        arr[i] = np.asarray(row, dtype=np.float64).reshape(space.shape)
    return ValuationInstance(space=space, values=arr, name=str(obj.get("name", "")))
