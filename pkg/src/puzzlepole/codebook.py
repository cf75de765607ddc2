"""Code stripes, quasiperiodic windows, and patch-code encoding/decoding.

The board pattern is a chessboard whose cell edges carry tab/knob bits taken
from two small periodic stripes:

  * the vertical-edge stripe (167 rows x 3 cols): the edge between cells
    (x-1, y) and (x, y) carries bit V[y mod 167, x mod 3];
  * the horizontal-edge stripe (3 rows x 167 cols): the edge between cells
    (x, y-1) and (x, y) carries bit H[y mod 3, x mod 167].

Cell (x, y) is black iff x + y is even.  Bit 1 means a knob protruding from
the black cell across the edge midpoint; bit 0 means a tab indenting it.
The overlay repeats every 501 = 3 * 167 cells in both directions.

A 3x3 block of cells exposes 18 distinct edge bits: three stripe columns of
the vertical-edge stripe (the block's left border column plus the two
interior columns, each over three rows) and symmetrically three stripe rows
of the horizontal-edge stripe.  These 18 bits form the block's patch code;
the right/top border edges repeat the left/bottom ones and add nothing.
Serialization order: vertical-edge bits row-major (block row j = 0..2 outer,
edge column i = 0..2 inner, i = 0 being the block's left border), then
horizontal-edge bits row-major (edge row j = 0..2 outer, j = 0 the bottom
border, cell column i = 0..2 inner).  Bit k of the integer value is slot k.

Uniqueness of all 501 x 501 patch codes factorizes: each stripe, read as a
cyclic sequence of 167 three-bit symbols (one per row of the vertical-edge
stripe, one per column of the horizontal-edge stripe), must have all 167
consecutive symbol triples pairwise distinct *up to simultaneous cyclic bit
rotation* and none fixed under rotation.  There are (2^9 - 8)/3 = 168
rotation orbits of non-fixed triples, so a length-167 ring uses all but one:
the packing is maximal, which is why the stripes are 167 long.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

STRIPE_PERIOD = 167
STRIPE_WIDTH = 3
BOARD_PERIOD = STRIPE_PERIOD * STRIPE_WIDTH  # 501
PATCH_BITS = 18
# Periods every synthesized vertical-edge stripe is guaranteed to support
# with at least one quasiperiodic window (multiples of 6 up to 48).
GUARANTEED_PERIODS = (12, 18, 24, 30, 36, 42, 48)

DEFAULT_SEARCH_BUDGET = 10_000_000
_RESTART_STEPS = 200_000


class SearchExhausted(RuntimeError):
    """Stripe synthesis ran out of its backtracking-step budget."""


class InvalidPeriod(ValueError):
    """Cylinder period must be a positive multiple of 6."""


class WindowMismatch(ValueError):
    """Quasiperiodic window does not match the stripe it is applied to."""


class StripeFormatError(ValueError):
    """Stripe file is malformed."""


class Orientation(Enum):
    EDGES_VERTICAL = "edges-vertical"
    EDGES_HORIZONTAL = "edges-horizontal"


@dataclass(frozen=True)
class CodeStripe:
    """Bit matrix assigning tab/knob bits to one family of chessboard edges.

    Lookups tile: ``bit(x, y)`` wraps both indices.  Canonical synthesized
    stripes are 167x3 (edges-vertical) or 3x167 (edges-horizontal); spliced
    cyclic stripes keep the 3-wide axis but shorten the 167 one.
    """

    bits: np.ndarray
    orientation: Orientation

    def __post_init__(self):
        b = np.asarray(self.bits, dtype=np.uint8)
        if b.ndim != 2 or not np.all((b == 0) | (b == 1)):
            raise ValueError("stripe bits must be a 2-D 0/1 matrix")
        if self.orientation is Orientation.EDGES_VERTICAL and b.shape[1] != STRIPE_WIDTH:
            raise ValueError("edges-vertical stripe must have 3 columns")
        if self.orientation is Orientation.EDGES_HORIZONTAL and b.shape[0] != STRIPE_WIDTH:
            raise ValueError("edges-horizontal stripe must have 3 rows")
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    @property
    def rows(self) -> int:
        return self.bits.shape[0]

    @property
    def cols(self) -> int:
        return self.bits.shape[1]

    @property
    def is_canonical(self) -> bool:
        return max(self.rows, self.cols) == STRIPE_PERIOD

    def bit(self, x: int, y: int) -> int:
        return int(self.bits[y % self.rows, x % self.cols])


@dataclass(frozen=True)
class PatchCode:
    """The 18 edge bits of a 3x3 cell block, packed little-endian."""

    value: int

    def __post_init__(self):
        if not 0 <= self.value < (1 << PATCH_BITS):
            raise ValueError("patch code out of range")

    @property
    def bits(self) -> tuple[int, ...]:
        return tuple((self.value >> k) & 1 for k in range(PATCH_BITS))


@dataclass(frozen=True)
class QuasiperiodicWindow:
    """A stripe row window whose first row pair repeats ``period`` rows later."""

    start_row: int
    period: int

    @property
    def height(self) -> int:
        # Corner rows on the printed wrap sheet: period + 1 cell rows (one
        # duplicated piece row for the overlap) bound period + 2 corner rows.
        return self.period + 2


class PatchDecode(NamedTuple):
    """Decode outcome: ``position`` is None unless exactly one candidate."""

    position: Optional[tuple[int, int]]
    candidates: int


# --------------------------------------------------------------------------
# Symbol/orbit arithmetic for the ring search.
#
# A 3-bit symbol a has rho(a) defined by: bit c of rho(a) = bit (c+1) mod 3
# of a.  Shifting the board window one cell in the tiling direction rotates
# every symbol of the stripe window by rho, so windows collide across shifts
# exactly when symbol triples collide up to simultaneous rotation.

def _rho(a: int) -> int:
    return (a >> 1) | ((a & 1) << 2)


_ROT = [(a, _rho(a), _rho(_rho(a))) for a in range(8)]


def _orbit_key(u: int, v: int, w: int) -> int:
    k0 = (u << 6) | (v << 3) | w
    k1 = (_ROT[u][1] << 6) | (_ROT[v][1] << 3) | _ROT[w][1]
    k2 = (_ROT[u][2] << 6) | (_ROT[v][2] << 3) | _ROT[w][2]
    return min(k0, k1, k2)


def _rotation_fixed(u: int, v: int, w: int) -> bool:
    return u in (0, 7) and v in (0, 7) and w in (0, 7)


class _SplitMix64:
    """Tiny fixed-specification PRNG so synthesis is reproducible forever.

    SplitMix64 (Steele et al.); unaffected by Python or numpy RNG changes.
    """

    _MASK = (1 << 64) - 1

    def __init__(self, seed: int):
        self._state = seed & self._MASK

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & self._MASK
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & self._MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & self._MASK
        return z ^ (z >> 31)

    def randbelow(self, n: int) -> int:
        return (self.next_u64() * n) >> 64

    def shuffled_symbols(self) -> list[int]:
        syms = list(range(8))
        for i in range(7, 0, -1):
            j = self.randbelow(i + 1)
            syms[i], syms[j] = syms[j], syms[i]
        return syms


def _search_ring(rng: _SplitMix64, budget: int) -> tuple[Optional[list[int]], int]:
    """One backtracking attempt capped at ``budget`` steps.

    Returns (ring, steps_used); ring is None when the cap is hit.
    """
    steps = 0
    n = STRIPE_PERIOD
    seq = [rng.randbelow(8), rng.randbelow(8)]
    used: dict[int, bool] = {}
    stack: list[tuple[list[int], int]] = [(rng.shuffled_symbols(), 0)]
    while stack and steps < budget:
        cands, idx = stack[-1]
        if idx >= len(cands):
            stack.pop()
            if len(seq) > 2:
                w = seq.pop()
                del used[_orbit_key(seq[-2], seq[-1], w)]
            continue
        stack[-1] = (cands, idx + 1)
        w = cands[idx]
        steps += 1
        u, v = seq[-2], seq[-1]
        if _rotation_fixed(u, v, w):
            continue
        key = _orbit_key(u, v, w)
        if key in used:
            continue
        if len(seq) == n - 1:
            # Closing the cycle adds two wrap triples; both must be fresh.
            ka = _orbit_key(v, w, seq[0])
            kb = _orbit_key(w, seq[0], seq[1])
            if (_rotation_fixed(v, w, seq[0]) or _rotation_fixed(w, seq[0], seq[1])
                    or ka == key or kb == key or ka == kb
                    or ka in used or kb in used):
                continue
            seq.append(w)
            return seq, steps
        used[key] = True
        seq.append(w)
        stack.append((rng.shuffled_symbols(), 0))
    return None, steps


def _ring_window_gaps(seq: Sequence[int]) -> set[int]:
    pos: dict[tuple[int, int], list[int]] = {}
    n = len(seq)
    for r in range(n):
        pos.setdefault((seq[r], seq[(r + 1) % n]), []).append(r)
    gaps: set[int] = set()
    for ps in pos.values():
        for a in ps:
            for b in ps:
                if a != b:
                    gaps.add((b - a) % n)
    return gaps


def synthesize_stripes(
    seed: int, *, max_steps: int = DEFAULT_SEARCH_BUDGET
) -> tuple[CodeStripe, CodeStripe]:
    """Synthesize a verified stripe pair by seeded randomized backtracking.

    The vertical-edge stripe is additionally required to contain at least
    one quasiperiodic window for every period in ``GUARANTEED_PERIODS`` so
    the standard cylinder sizes are always buildable.  Pure function of
    ``seed``; raises :class:`SearchExhausted` if ``max_steps`` backtracking
    steps are spent first.
    """
    rng = _SplitMix64(seed)
    remaining = max_steps
    want = set(GUARANTEED_PERIODS)

    ring_v = None
    while ring_v is None:
        if remaining <= 0:
            raise SearchExhausted(f"no vertical-edge ring within {max_steps} steps")
        ring, steps = _search_ring(rng, min(_RESTART_STEPS, remaining))
        remaining -= max(steps, 1)
        if ring is not None and want <= _ring_window_gaps(ring):
            ring_v = ring

    ring_h = None
    while ring_h is None:
        if remaining <= 0:
            raise SearchExhausted(f"no horizontal-edge ring within {max_steps} steps")
        ring, steps = _search_ring(rng, min(_RESTART_STEPS, remaining))
        remaining -= max(steps, 1)
        ring_h = ring

    v_bits = np.zeros((STRIPE_PERIOD, 3), dtype=np.uint8)
    for y, a in enumerate(ring_v):
        for c in range(3):
            v_bits[y, c] = (a >> c) & 1
    h_bits = np.zeros((3, STRIPE_PERIOD), dtype=np.uint8)
    for x, a in enumerate(ring_h):
        for r in range(3):
            h_bits[r, x] = (a >> r) & 1
    return (
        CodeStripe(v_bits, Orientation.EDGES_VERTICAL),
        CodeStripe(h_bits, Orientation.EDGES_HORIZONTAL),
    )


# --------------------------------------------------------------------------
# Patch codes.

def _require_pair(v_stripe: CodeStripe, h_stripe: CodeStripe) -> None:
    if v_stripe.orientation is not Orientation.EDGES_VERTICAL:
        raise ValueError("first stripe must be edges-vertical")
    if h_stripe.orientation is not Orientation.EDGES_HORIZONTAL:
        raise ValueError("second stripe must be edges-horizontal")


def patch_code_at(v_stripe: CodeStripe, h_stripe: CodeStripe, x: int, y: int) -> PatchCode:
    """Encode the patch code of the 3x3 cell block with lower corner (x, y)."""
    _require_pair(v_stripe, h_stripe)
    value = 0
    k = 0
    for j in range(3):
        for i in range(3):
            value |= v_stripe.bit(x + i, y + j) << k
            k += 1
    for j in range(3):
        for i in range(3):
            value |= h_stripe.bit(x + i, y + j) << k
            k += 1
    return PatchCode(value)


def _code_grid(v_stripe: CodeStripe, h_stripe: CodeStripe,
               xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Vectorized patch codes for coordinate grids ``xs``, ``ys``."""
    v = v_stripe.bits
    h = h_stripe.bits
    code = np.zeros(np.broadcast(xs, ys).shape, dtype=np.int64)
    k = 0
    for j in range(3):
        for i in range(3):
            code |= v[(ys + j) % v.shape[0], (xs + i) % v.shape[1]].astype(np.int64) << k
            k += 1
    for j in range(3):
        for i in range(3):
            code |= h[(ys + j) % h.shape[0], (xs + i) % h.shape[1]].astype(np.int64) << k
            k += 1
    return code


def _full_period_codes(v_stripe: CodeStripe, h_stripe: CodeStripe) -> np.ndarray:
    xs, ys = np.meshgrid(np.arange(BOARD_PERIOD), np.arange(BOARD_PERIOD), indexing="ij")
    return _code_grid(v_stripe, h_stripe, xs, ys)


@dataclass(frozen=True)
class UniquenessResult:
    unique: bool
    collision: Optional[tuple[tuple[int, int], tuple[int, int]]] = None

    def __bool__(self) -> bool:
        return self.unique


def verify_patch_uniqueness(v_stripe: CodeStripe, h_stripe: CodeStripe) -> UniquenessResult:
    """Exhaustively check all 501x501 patch codes for collisions.

    Scans positions in (x, y) lexicographic order and reports the first
    position whose code was already seen, paired with the earlier holder.
    """
    _require_pair(v_stripe, h_stripe)
    if not (v_stripe.is_canonical and h_stripe.is_canonical):
        raise ValueError("uniqueness check requires canonical 167-period stripes")
    codes = _full_period_codes(v_stripe, h_stripe).ravel()  # index = x*501 + y
    uniq, first = np.unique(codes, return_index=True)
    if uniq.size == codes.size:
        return UniquenessResult(True)
    dup = np.ones(codes.size, dtype=bool)
    dup[first] = False
    j = int(np.argmax(dup))
    i = int(first[np.searchsorted(uniq, codes[j])])
    return UniquenessResult(False, (divmod(i, BOARD_PERIOD), divmod(j, BOARD_PERIOD)))


def find_quasiperiodic_windows(stripe: CodeStripe, period: int) -> list[QuasiperiodicWindow]:
    """All start rows where rows (r, r+1) equal rows (r+period, r+period+1).

    Row indices are scanned cyclically over the stripe's row period.  The
    period must be a positive multiple of 6: the stripe tiles with period 3
    and the chessboard parity with period 2, so any other circumference
    would break the pattern at the seam.
    """
    if period <= 0 or period % 6 != 0:
        raise InvalidPeriod(f"period must be a positive multiple of 6, got {period}")
    rows = stripe.rows
    if rows < period + 2:
        raise ValueError(f"stripe has {rows} rows; need at least period + 2 = {period + 2}")
    b = stripe.bits
    out = []
    for r in range(rows):
        if (np.array_equal(b[r], b[(r + period) % rows])
                and np.array_equal(b[(r + 1) % rows], b[(r + period + 1) % rows])):
            out.append(QuasiperiodicWindow(start_row=r, period=period))
    return out


def splice_cyclic(stripe: CodeStripe, window: QuasiperiodicWindow) -> CodeStripe:
    """Cut rows [start, start+period) and declare them cyclic.

    Because the window's first row pair repeats at start+period, every
    wrapped 3-row window of the result also occurs in the source stripe, so
    no new patch codes appear at the seam.
    """
    rows = stripe.rows
    L = window.period
    r = window.start_row
    idx = (r + np.arange(L)) % rows
    pair_ok = (np.array_equal(stripe.bits[r % rows], stripe.bits[(r + L) % rows])
               and np.array_equal(stripe.bits[(r + 1) % rows], stripe.bits[(r + L + 1) % rows]))
    if not pair_ok:
        raise WindowMismatch(
            f"rows ({r}, {r + 1}) do not repeat at offset {L}; stale window?")
    return CodeStripe(stripe.bits[idx].copy(), stripe.orientation)


# --------------------------------------------------------------------------
# Codebooks.

class Codebook:
    """Lookup table from patch code to the cell position that produced it.

    Built over a set of board positions (one full 501x501 period, or the
    patch positions of a single pole).  Decoding is exact-match first; a
    full-known code that misses is retried with every single-bit flip and
    accepted only on a unique hit.  A code carrying exactly one unknown bit
    is tried with both completions, again accepted only on a unique hit.
    """

    def __init__(self, table: dict[int, tuple[int, int]]):
        self._table = table

    @classmethod
    def from_stripes(cls, v_stripe: CodeStripe, h_stripe: CodeStripe) -> "Codebook":
        _require_pair(v_stripe, h_stripe)
        codes = _full_period_codes(v_stripe, h_stripe)
        xs, ys = np.meshgrid(np.arange(BOARD_PERIOD), np.arange(BOARD_PERIOD), indexing="ij")
        table = dict(zip(codes.ravel().tolist(),
                         zip(xs.ravel().tolist(), ys.ravel().tolist())))
        if len(table) != BOARD_PERIOD * BOARD_PERIOD:
            raise ValueError("stripes do not produce unique patch codes")
        return cls(table)

    @classmethod
    def from_positions(cls, v_stripe: CodeStripe, h_stripe: CodeStripe,
                       positions: Iterable[tuple[int, int]]) -> "Codebook":
        _require_pair(v_stripe, h_stripe)
        table: dict[int, tuple[int, int]] = {}
        for x, y in positions:
            code = patch_code_at(v_stripe, h_stripe, x, y).value
            if code in table and table[code] != (x, y):
                raise ValueError(f"patch code collision between {table[code]} and {(x, y)}")
            table[code] = (x, y)
        return cls(table)

    def __len__(self) -> int:
        return len(self._table)

    def __contains__(self, code) -> bool:
        return self._as_value(code) in self._table

    @staticmethod
    def _as_value(code) -> int:
        return code.value if isinstance(code, PatchCode) else int(code)

    def decode(self, code, unknown_mask: int = 0) -> PatchDecode:
        value = self._as_value(code)
        unknown = [k for k in range(PATCH_BITS) if (unknown_mask >> k) & 1]
        if len(unknown) > 1:
            return PatchDecode(None, 0)
        if len(unknown) == 1:
            b = unknown[0]
            cands = {self._table[c] for c in (value & ~(1 << b), value | (1 << b))
                     if c in self._table}
            return PatchDecode(cands.pop() if len(cands) == 1 else None, len(cands))
        hit = self._table.get(value)
        if hit is not None:
            return PatchDecode(hit, 1)
        cands = {self._table[c] for c in (value ^ (1 << k) for k in range(PATCH_BITS))
                 if c in self._table}
        return PatchDecode(cands.pop() if len(cands) == 1 else None, len(cands))


def decode_patch(code, codebook: Codebook) -> PatchDecode:
    """Exact-match decode with single-bit error correction (see Codebook)."""
    return codebook.decode(code)


# --------------------------------------------------------------------------
# Stripe files: "puzzlepole-stripe v1 <orientation> <rows> <cols>", then one
# line of 0/1 characters per row.

_MAGIC = "puzzlepole-stripe"
_VERSION = "v1"


def write_stripe(stripe: CodeStripe, path: str | Path) -> None:
    lines = [f"{_MAGIC} {_VERSION} {stripe.orientation.value} {stripe.rows} {stripe.cols}"]
    lines += ["".join("01"[b] for b in row) for row in stripe.bits]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_stripe(path: str | Path) -> CodeStripe:
    text = Path(path).read_text(encoding="ascii")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise StripeFormatError(f"{path}: empty stripe file")
    head = lines[0].split()
    if len(head) != 5 or head[0] != _MAGIC or head[1] != _VERSION:
        raise StripeFormatError(f"{path}: bad header {lines[0]!r}")
    try:
        orientation = Orientation(head[2])
        rows, cols = int(head[3]), int(head[4])
    except ValueError as exc:
        raise StripeFormatError(f"{path}: bad header {lines[0]!r}") from exc
    if len(lines) - 1 != rows:
        raise StripeFormatError(f"{path}: expected {rows} rows, found {len(lines) - 1}")
    bits = np.zeros((rows, cols), dtype=np.uint8)
    for r, line in enumerate(lines[1:]):
        if len(line) != cols or set(line) - {"0", "1"}:
            raise StripeFormatError(f"{path}: bad row {r}: {line!r}")
        bits[r] = [int(ch) for ch in line]
    try:
        return CodeStripe(bits, orientation)
    except ValueError as exc:
        raise StripeFormatError(f"{path}: {exc}") from exc
