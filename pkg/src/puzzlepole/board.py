"""Finite pattern windows and cylindrical poles.

Cell colors, edge bits, corner IDs, 3D corner geometry, and printable
renderings.  The circumferential direction of a pole is the pattern's y
direction: a window of ``period`` cell rows starting at a quasiperiodic
window row wraps onto the cylinder so that row ``period`` lands back on row
0 without breaking any 3x3 patch code.  The cylinder axis is the pole
frame's y axis; corner (i, j) sits at angle 2*pi*j/period from the x axis.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from .codebook import (
    BOARD_PERIOD,
    CodeStripe,
    InvalidPeriod,
    WindowMismatch,
)
from .images import GrayImage

KNOB_RADIUS = 0.25  # in cell units; half-cell-wide disk on each edge midpoint
_METERS_PER_INCH = 0.0254


class IndexOutOfRange(IndexError):
    """Corner index outside the pole's axial extent."""


class RegistryError(ValueError):
    """Pole registry is inconsistent or its file is malformed."""


def pack_corner_id(x: int, y: int) -> int:
    """Pack a global corner coordinate pair into one stable integer."""
    return BOARD_PERIOD * (y % BOARD_PERIOD) + (x % BOARD_PERIOD)


def unpack_corner_id(corner_id: int) -> tuple[int, int]:
    y, x = divmod(int(corner_id), BOARD_PERIOD)
    return x, y


@dataclass(frozen=True)
class BoardSpec:
    """A flat rectangular window of the infinite pattern."""

    start_x: int
    start_y: int
    width: int
    height: int
    edge_length: float

    def __post_init__(self):
        if self.width < 3 or self.height < 3:
            raise ValueError("smallest decodable window is 3x3 cells")
        if not self.edge_length > 0:
            raise ValueError("edge_length must be positive")


@dataclass(frozen=True)
class PoleSpec:
    """A cylindrical pole carrying one quasiperiodic pattern window.

    ``period`` cells wrap the circumference (pattern y), ``axial_cells``
    run along the cylinder axis (pattern x).  The radius is fixed by the
    cell size: period * edge_length = 2 * pi * radius.
    """

    pole_id: str
    period: int
    start_y: int
    axial_cells: int
    axial_start_x: int
    edge_length: float
    radius: Optional[float] = None

    def __post_init__(self):
        if self.period <= 0 or self.period % 6 != 0:
            raise InvalidPeriod(f"pole period must be a positive multiple of 6,"
                                f" got {self.period}")
        if self.axial_cells < 3:
            raise ValueError("poles need at least 3 axial cells to be decodable")
        if not self.edge_length > 0:
            raise ValueError("edge_length must be positive")
        exact = self.period * self.edge_length / (2.0 * math.pi)
        if self.radius is None:
            object.__setattr__(self, "radius", exact)
        elif abs(self.radius - exact) > 1e-12 * exact:
            raise ValueError(f"radius {self.radius} inconsistent with"
                             f" period * edge_length / 2 pi = {exact}")

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    @property
    def corner_rings(self) -> int:
        return self.axial_cells + 1

    def corner_positions(self) -> list[tuple[int, int]]:
        """Global (x, y) of every corner, reduced mod the pattern period."""
        return [((self.axial_start_x + i) % BOARD_PERIOD,
                 (self.start_y + j) % BOARD_PERIOD)
                for i in range(self.axial_cells + 1)
                for j in range(self.period)]

    def corner_id_set(self) -> frozenset[int]:
        return frozenset(pack_corner_id(x, y) for x, y in self.corner_positions())

    def patch_positions(self) -> list[tuple[int, int]]:
        """Lower corners of every 3x3 cell block on the pole (y wraps)."""
        return [((self.axial_start_x + i) % BOARD_PERIOD,
                 (self.start_y + j) % BOARD_PERIOD)
                for i in range(self.axial_cells - 2)
                for j in range(self.period)]


def corner_point_3d(pole: PoleSpec, axial: int, circ: int) -> np.ndarray:
    """3D position of corner (axial ring i, circumferential index j).

    Pole frame: y = cylinder axis, origin on the axis at the lowest corner
    ring, theta measured from x toward z.  The circumferential index wraps.
    """
    if not 0 <= axial <= pole.axial_cells:
        raise IndexOutOfRange(
            f"axial index {axial} outside [0, {pole.axial_cells}]")
    theta = 2.0 * math.pi * (circ % pole.period) / pole.period
    return np.array([pole.radius * math.cos(theta),
                     axial * pole.edge_length,
                     pole.radius * math.sin(theta)])


@dataclass(frozen=True)
class BoardPattern:
    """Materialized pattern window: colors, edge bits, corner IDs.

    Arrays are indexed [i, j] with i along x and j along y.  For cyclic
    (pole) patterns j wraps modulo the period and there is no top edge row.
    ``cell_colors`` is True on black cells.
    """

    spec: BoardSpec | PoleSpec
    cell_colors: np.ndarray       # (w, h) bool
    v_edge_bits: np.ndarray       # (w+1, h)
    h_edge_bits: np.ndarray       # (w, h+1) flat / (w, h) cyclic
    corner_ids: np.ndarray        # (w+1, h+1, 2) flat / (w+1, h, 2) cyclic
    cyclic: bool = False

    @property
    def width_cells(self) -> int:
        return self.cell_colors.shape[0]

    @property
    def height_cells(self) -> int:
        return self.cell_colors.shape[1]

    def corner_id(self, i: int, j: int) -> tuple[int, int]:
        if self.cyclic:
            j = j % self.height_cells
        return tuple(int(c) for c in self.corner_ids[i, j])

    def intensity(self, u, w):
        """Pattern intensity (0 black, 1 white) at local fractional coords.

        u in [0, width], w in [0, height] (cyclic patterns wrap w).  The
        midpoint of the edge between two adjacent corners is black exactly
        when the edge bit is 1 (a knob of the black cell covers it) and
        white when it is 0 (a tab lets the white cell through).
        """
        u = np.asarray(u, dtype=np.float64)
        w = np.asarray(w, dtype=np.float64)
        wi, hi = self.width_cells, self.height_cells
        if self.cyclic:
            w = np.mod(w, hi)
        ci = np.clip(np.floor(u), 0, wi - 1).astype(np.int64)
        cj = np.clip(np.floor(w), 0, hi - 1).astype(np.int64)
        out = np.where(self.cell_colors[ci, cj], 0.0, 1.0)

        # disks never overlap: centers of a vertical-edge and a
        # horizontal-edge disk are at least sqrt(0.5) > 2 * KNOB_RADIUS apart
        ue = np.clip(np.rint(u), 0, wi).astype(np.int64)
        in_v = (u - ue) ** 2 + (w - (cj + 0.5)) ** 2 < KNOB_RADIUS ** 2
        vbit = self.v_edge_bits[ue, cj]
        out = np.where(in_v, np.where(vbit == 1, 0.0, 1.0), out)

        we = np.rint(w).astype(np.int64)
        dh2 = (u - (ci + 0.5)) ** 2 + (w - we) ** 2
        if self.cyclic:
            we = we % hi
        else:
            we = np.clip(we, 0, hi)
        in_h = dh2 < KNOB_RADIUS ** 2
        hbit = self.h_edge_bits[ci, we]
        out = np.where(in_h, np.where(hbit == 1, 0.0, 1.0), out)
        return out


def _edge_arrays(v_stripe: CodeStripe, h_stripe: CodeStripe,
                 start_x: int, start_y: int, width: int, height: int,
                 cyclic: bool):
    xs = start_x + np.arange(width)
    ys = start_y + np.arange(height)
    colors = ((xs[:, None] + ys[None, :]) % 2) == 0
    vx = start_x + np.arange(width + 1)
    v_bits = v_stripe.bits[np.mod(ys[None, :], v_stripe.rows),
                           np.mod(vx[:, None], v_stripe.cols)]
    hy = start_y + np.arange(height if cyclic else height + 1)
    h_bits = h_stripe.bits[np.mod(hy[None, :], h_stripe.rows),
                           np.mod(xs[:, None], h_stripe.cols)]
    cy = start_y + np.arange(height if cyclic else height + 1)
    ids = np.stack(np.broadcast_arrays(np.mod(vx[:, None], BOARD_PERIOD),
                                       np.mod(cy[None, :], BOARD_PERIOD)), axis=-1)
    return colors, v_bits, h_bits, ids


def build_board(spec: BoardSpec, stripes: tuple[CodeStripe, CodeStripe]) -> BoardPattern:
    """Materialize a flat window.  Stripes are assumed verified unique."""
    v_stripe, h_stripe = stripes
    colors, v_bits, h_bits, ids = _edge_arrays(
        v_stripe, h_stripe, spec.start_x, spec.start_y, spec.width, spec.height,
        cyclic=False)
    return BoardPattern(spec, colors, v_bits, h_bits, ids, cyclic=False)


def build_pole_pattern(pole: PoleSpec,
                       stripes: tuple[CodeStripe, CodeStripe]) -> BoardPattern:
    """Materialize the cyclic pattern wrapped around a pole.

    Requires start_y to open a quasiperiodic window of the pole's period on
    the vertical-edge stripe; otherwise the seam would corrupt the codes.
    """
    v_stripe, h_stripe = stripes
    r, L = pole.start_y, pole.period
    rows = v_stripe.rows
    if not (np.array_equal(v_stripe.bits[r % rows], v_stripe.bits[(r + L) % rows])
            and np.array_equal(v_stripe.bits[(r + 1) % rows],
                               v_stripe.bits[(r + L + 1) % rows])):
        raise WindowMismatch(
            f"start_y={r} does not open a period-{L} window on this stripe")
    colors, v_bits, h_bits, ids = _edge_arrays(
        v_stripe, h_stripe, pole.axial_start_x, pole.start_y,
        pole.axial_cells, L, cyclic=True)
    return BoardPattern(pole, colors, v_bits, h_bits, ids, cyclic=True)


def render_raster(pattern: BoardPattern, pixels_per_cell: int) -> GrayImage:
    """Axis-aligned rendering, row 0 at the top (highest pattern y)."""
    if pixels_per_cell < 4:
        raise ValueError("need at least 4 pixels per cell")
    wi, hi = pattern.width_cells, pattern.height_cells
    cols = wi * pixels_per_cell
    rows = hi * pixels_per_cell
    u = (np.arange(cols) + 0.5) / pixels_per_cell
    w = hi - (np.arange(rows) + 0.5) / pixels_per_cell
    vals = pattern.intensity(u[None, :], w[:, None])
    return GrayImage(vals.astype(np.float32))


@dataclass(frozen=True)
class WrapSheet:
    """Printable strip for one pole plus its physical dimensions."""

    image: GrayImage
    axial_width_m: float
    wrap_length_m: float      # content + overlap, the direction that wraps
    content_length_m: float   # exactly the cylinder circumference
    overlap_length_m: float   # one duplicated piece row
    pixels_per_cell: float


def render_wrap_sheet(pole: PoleSpec, stripes: tuple[CodeStripe, CodeStripe],
                      dpi: float) -> WrapSheet:
    """Render the print strip: period + 1 cell rows, last row = first row.

    Wrapped onto a cylinder of circumference period * edge_length, the
    duplicated top row lands exactly on the bottom row.
    """
    ppc = dpi * pole.edge_length / _METERS_PER_INCH
    if ppc < 4:
        raise ValueError(f"{dpi} dpi gives {ppc:.2f} px per cell; need >= 4")
    s = pole.edge_length
    L = pole.period
    spec = BoardSpec(pole.axial_start_x, pole.start_y,
                     pole.axial_cells, L + 1, s)
    pattern = build_board(spec, stripes)
    cols = round(pole.axial_cells * ppc)
    rows = round((L + 1) * ppc)
    u = (np.arange(cols) + 0.5) / ppc
    w = (L + 1) - (np.arange(rows) + 0.5) / ppc
    vals = pattern.intensity(u[None, :], w[:, None])
    return WrapSheet(
        image=GrayImage(vals.astype(np.float32)),
        axial_width_m=pole.axial_cells * s,
        wrap_length_m=(L + 1) * s,
        content_length_m=L * s,
        overlap_length_m=s,
        pixels_per_cell=ppc,
    )


def write_board_svg(pattern: BoardPattern, path: str | Path) -> None:
    """Vector rendering for print: cells as rectangles, knobs as circles."""
    if pattern.cyclic:
        raise ValueError("render the pole's wrap sheet pattern, not the cyclic one")
    s_mm = pattern.spec.edge_length * 1000.0
    wi, hi = pattern.width_cells, pattern.height_cells
    w_mm, h_mm = wi * s_mm, hi * s_mm
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w_mm}mm" height="{h_mm}mm"'
        f' viewBox="0 0 {wi} {hi}">',
        f'<rect x="0" y="0" width="{wi}" height="{hi}" fill="white"/>',
    ]
    for i in range(wi):
        for j in range(hi):
            if pattern.cell_colors[i, j]:
                parts.append(f'<rect x="{i}" y="{hi - 1 - j}" width="1" height="1"'
                             f' fill="black"/>')
    def disk(cx, cy, bit):
        fill = "black" if bit else "white"
        parts.append(f'<circle cx="{cx}" cy="{hi - cy}" r="{KNOB_RADIUS}"'
                     f' fill="{fill}"/>')
    for i in range(wi + 1):
        for j in range(hi):
            disk(i, j + 0.5, int(pattern.v_edge_bits[i, j]))
    for i in range(wi):
        for j in range(hi + 1):
            disk(i + 0.5, j, int(pattern.h_edge_bits[i, j]))
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts), encoding="ascii")


@dataclass(frozen=True)
class PoleRegistry:
    """The poles a detector should look for; corner-ID sets must not overlap."""

    poles: tuple[PoleSpec, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "poles", tuple(self.poles))
        seen_ids: dict[int, str] = {}
        names = set()
        for pole in self.poles:
            if pole.pole_id in names:
                raise RegistryError(f"duplicate pole_id {pole.pole_id!r}")
            names.add(pole.pole_id)
            for cid in pole.corner_id_set():
                if cid in seen_ids:
                    raise RegistryError(
                        f"poles {seen_ids[cid]!r} and {pole.pole_id!r} share"
                        f" corner ID {cid}")
                seen_ids[cid] = pole.pole_id

    def __iter__(self) -> Iterator[PoleSpec]:
        return iter(self.poles)

    def __len__(self) -> int:
        return len(self.poles)

    def get(self, pole_id: str) -> PoleSpec:
        for pole in self.poles:
            if pole.pole_id == pole_id:
                return pole
        raise KeyError(pole_id)


def write_registry(registry: PoleRegistry, path: str | Path) -> None:
    cp = configparser.ConfigParser()
    for pole in registry:
        sec = f"pole:{pole.pole_id}"
        cp[sec] = {
            "period": str(pole.period),
            "start_y": str(pole.start_y),
            "axial_start_x": str(pole.axial_start_x),
            "axial_cells": str(pole.axial_cells),
            "edge_length_m": repr(pole.edge_length),
        }
    with open(path, "w", encoding="ascii") as fh:
        cp.write(fh)


def read_registry(path: str | Path) -> PoleRegistry:
    cp = configparser.ConfigParser()
    try:
        with open(path, encoding="ascii") as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error, UnicodeDecodeError) as exc:
        raise RegistryError(f"{path}: {exc}") from exc
    poles = []
    for sec in cp.sections():
        if not sec.startswith("pole:"):
            continue
        try:
            poles.append(PoleSpec(
                pole_id=sec[len("pole:"):],
                period=cp.getint(sec, "period"),
                start_y=cp.getint(sec, "start_y"),
                axial_start_x=cp.getint(sec, "axial_start_x"),
                axial_cells=cp.getint(sec, "axial_cells"),
                edge_length=cp.getfloat(sec, "edge_length_m"),
            ))
        except (configparser.Error, ValueError) as exc:
            raise RegistryError(f"{path}: [{sec}]: {exc}") from exc
    if not poles:
        raise RegistryError(f"{path}: no [pole:NAME] sections found")
    return PoleRegistry(tuple(poles))
