"""Corner detection, grid linking, edge-bit sampling, and grid decoding.

Pipeline: detect_corners -> link_grid -> sample_edge_bits -> decode_grid ->
partition_by_pole.  Image convention: I[v, u] with u right and v down;
subpixel positions are (u, v).

Decoding never guesses: a component is labeled only when its patch votes
agree on a single rigid lattice offset with a clear margin, and a single
unsupported patch is trusted only on an exact full-width code match.  A
wrong ID poisons the pose solve downstream, so misses are always preferred
over mislabels.
"""

from __future__ import annotations

import base64
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .board import PoleRegistry, PoleSpec, corner_point_3d
from .codebook import BOARD_PERIOD, Codebook, CodeStripe, PATCH_BITS
from .images import GrayImage

RESPONSE_SIGMA = 1.2          # px, smoothing for the saddle response
THRESHOLD_FRACTION = 0.1      # of the 99th-percentile response
RELATIVE_STRENGTH = 0.45      # of the strongest maximum; see detect_corners
DEDUPE_RADIUS = 2.0           # px
PROBE_CONTRAST = 0.08         # minimum |left - right| at link probes
STEP_RESIDUAL_TOL = 0.35      # lattice step matching: |d - expected|/|expected|
UNKNOWN_CONFIDENCE = 0.2      # bits below this are unknown
VOTE_MARGIN = 0.2             # runner-up must stay below this fraction
MIN_IMAGE_SIDE = 16


class DecodeAmbiguous(RuntimeError):
    """A component's patch votes did not single out one lattice offset."""


class UnknownId(KeyError):
    """A corner label matches no registered pole."""


@dataclass
class CornerObservation:
    """A detected chessboard corner; ``id`` is set by decode_grid."""

    position: np.ndarray          # (u, v) subpixel
    response: float
    id: Optional[tuple[int, int]] = None


@dataclass
class EdgeBit:
    bit: int
    confidence: float
    known: bool


@dataclass
class GridGraph:
    """Linked corners with lattice coordinates per connected component.

    ``neighbors[i]`` maps 'right'/'left'/'up'/'down' to a node index; links
    are symmetric (right/left and up/down pair up).  ``lattice[i]`` is the
    component-local integer coordinate, None for isolated nodes.
    ``edge_bits`` is keyed by the sorted node-index pair.
    """

    nodes: list[CornerObservation]
    neighbors: list[dict[str, int]]
    lattice: list[Optional[tuple[int, int]]]
    components: list[list[int]]
    edge_bits: dict[tuple[int, int], EdgeBit] = field(default_factory=dict)
    component_status: list[str] = field(default_factory=list)

    def links(self) -> list[tuple[int, int]]:
        out = []
        for i, nbrs in enumerate(self.neighbors):
            for j in nbrs.values():
                if i < j:
                    out.append((i, j))
        return out


# --------------------------------------------------------------------------
# Corner detection.

_QX, _QY = np.meshgrid([-1.0, 0.0, 1.0], [-1.0, 0.0, 1.0], indexing="xy")
_QA = np.stack([_QX.ravel() ** 2, _QY.ravel() ** 2, (_QX * _QY).ravel(),
                _QX.ravel(), _QY.ravel(), np.ones(9)], axis=1)
_QFIT = np.linalg.pinv(_QA)   # least-squares quadratic surface on a 3x3 patch


def _subpixel_offset(patch: np.ndarray) -> tuple[float, float]:
    a, b, c, d, e, _ = _QFIT @ patch.ravel()
    det = 4.0 * a * b - c * c
    if abs(det) < 1e-12:
        return 0.0, 0.0
    dx = (-2.0 * b * d + c * e) / det
    dy = (-2.0 * a * e + c * d) / det
    if abs(dx) > 1.0 or abs(dy) > 1.0:
        return 0.0, 0.0
    return dx, dy


def saddle_response(image: GrayImage) -> np.ndarray:
    """Chessboard-corner response: Ixy^2 - Ixx*Iyy on the smoothed image.

    This is minus the Hessian determinant, rotation invariant and positive
    at saddle points regardless of the pattern's in-image orientation.
    """
    I = image.pixels.astype(np.float64)
    ixx = ndimage.gaussian_filter(I, RESPONSE_SIGMA, order=(0, 2))
    iyy = ndimage.gaussian_filter(I, RESPONSE_SIGMA, order=(2, 0))
    ixy = ndimage.gaussian_filter(I, RESPONSE_SIGMA, order=(1, 1))
    return ixy * ixy - ixx * iyy


def detect_corners(image: GrayImage) -> list[CornerObservation]:
    """Subpixel saddle-point corners above an adaptive threshold.

    Two thresholds apply: an absolute floor from the 99th-percentile
    response, and a cut at RELATIVE_STRENGTH times the strongest maximum.
    The knob disks meet the cell edges in arcs that form weaker secondary
    saddles (at most about a third of the corner response once the disks
    are resolved); the relative cut removes them without fixing a scale.
    Near the resolution limit the arc pairs blur into saddles that pass
    any pointwise test; those sit off-lattice and die in link_grid.
    """
    if image.width < MIN_IMAGE_SIDE or image.height < MIN_IMAGE_SIDE:
        raise ValueError(f"image must be at least {MIN_IMAGE_SIDE} px per side")
    resp = saddle_response(image)
    threshold = max(THRESHOLD_FRACTION * np.percentile(resp, 99.0), 1e-8)
    is_max = (resp == ndimage.maximum_filter(resp, size=3)) & (resp > threshold)
    is_max[:2, :] = is_max[-2:, :] = False
    is_max[:, :2] = is_max[:, -2:] = False
    vs, us = np.nonzero(is_max)
    if vs.size == 0:
        return []
    order = np.argsort(resp[vs, us])[::-1]
    vs, us = vs[order], us[order]
    positions = np.stack([us, vs], axis=1).astype(np.float64)
    keep = np.ones(vs.size, dtype=bool)
    tree = cKDTree(positions)
    for i in range(vs.size):                     # strongest first
        if not keep[i]:
            continue
        for j in tree.query_ball_point(positions[i], DEDUPE_RADIUS):
            if j != i and keep[j] and resp[vs[j], us[j]] <= resp[vs[i], us[i]]:
                keep[j] = False
    strong = RELATIVE_STRENGTH * float(resp[vs[0], us[0]])
    corners = []
    for i in np.nonzero(keep)[0]:
        v, u = int(vs[i]), int(us[i])
        if resp[v, u] < strong:
            break                                # sorted, rest are weaker
        dx, dy = _subpixel_offset(resp[v - 1:v + 2, u - 1:u + 2])
        corners.append(CornerObservation(
            position=np.array([u + dx, v + dy]),
            response=float(resp[v, u])))
    return corners


# --------------------------------------------------------------------------
# Grid linking.

def _sampler(image: GrayImage):
    I = image.pixels.astype(np.float64)

    def sample(pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return ndimage.map_coordinates(I, [pts[:, 1], pts[:, 0]],
                                       order=1, mode="nearest")
    return sample


def _link_valid(sample, pa: np.ndarray, pb: np.ndarray) -> bool:
    """Segment check: one chessboard edge, not two, and not a diagonal.

    Probe pairs straddle the segment.  The pairs at 1/8 and 7/8 (offset
    an eighth of the length) see one constant cell per side on a true
    edge, so their contrast keeps its sign; a double-length link crosses
    a corner where the colors swap sides.  The midpoint pairs reach into
    the two cells adjacent to a true edge; on a cell diagonal the
    midpoint is a cell center and the probes stay inside one cell,
    killing the contrast.  Two midpoint offsets are tried because under
    foreshortening the knob disk (radius a quarter of the perpendicular
    cell size) can swallow the near probe; the far one then decides.
    """
    d = pb - pa
    ell = float(np.hypot(*d))
    if ell < 4.0:
        return False
    n = np.array([-d[1], d[0]]) / ell
    off = n * (ell / 8.0)
    p1, p2, pm = pa + d * 0.125, pa + d * 0.875, pa + d * 0.5
    offm1, offm2 = n * (ell / 4.0), n * (0.45 * ell)
    vals = sample(np.stack([p1 + off, p1 - off, p2 + off, p2 - off,
                            pm + offm1, pm - offm1, pm + offm2, pm - offm2]))
    d1 = vals[0] - vals[1]
    d2 = vals[2] - vals[3]
    if (abs(d1) < PROBE_CONTRAST or abs(d2) < PROBE_CONTRAST
            or (d1 > 0) != (d2 > 0)):
        return False
    for dm in (vals[4] - vals[5], vals[6] - vals[7]):
        if abs(dm) > PROBE_CONTRAST and (dm > 0) == (d1 > 0):
            return True
    return False


def _angle_between(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.hypot(*a), np.hypot(*b)
    if na == 0 or nb == 0:
        return 180.0
    cosv = np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0)
    return math.degrees(math.acos(cosv))


def _cross2(a: np.ndarray, b: np.ndarray) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def link_grid(corners: list[CornerObservation], image: GrayImage) -> GridGraph:
    """Link corners into lattice components (see module docstring)."""
    n = len(corners)
    neighbors: list[dict[str, int]] = [{} for _ in range(n)]
    lattice: list[Optional[tuple[int, int]]] = [None] * n
    if n < 2:
        return GridGraph(corners, neighbors, lattice, [])
    sample = _sampler(image)
    pos = np.stack([c.position for c in corners])
    tree = cKDTree(pos)
    # enough slots that off-lattice secondary saddles (up to ~8 around a
    # corner at the resolution limit) cannot crowd out the 4 grid neighbors
    k = min(17, n)
    dists, idxs = tree.query(pos, k=k)

    def interior_clear(i: int, j: int, dij: float) -> bool:
        # a multi-cell jump passes over detected corners; a unit link has
        # none near its interior (low-resolution spurious saddles keep at
        # least a quarter cell away from the edge segments)
        mid = 0.5 * (pos[i] + pos[j])
        d = pos[j] - pos[i]
        for m in tree.query_ball_point(mid, 0.38 * dij):
            if m == i or m == j:
                continue
            tau = float(np.dot(pos[m] - pos[i], d)) / (dij * dij)
            perp = abs(_cross2(pos[m] - pos[i], d)) / (dij * dij)
            if 0.15 <= tau <= 0.85 and perp <= 0.2:
                return False
        return True

    # all validated links within reach; the lattice step matching below is
    # what selects one neighbor per direction
    valid: dict[tuple[int, int], bool] = {}
    adj: dict[int, set[int]] = {i: set() for i in range(n)}
    for i in range(n):
        near = dists[i, 1]
        if not np.isfinite(near) or near <= 0:
            continue
        for col in range(1, k):
            j = int(idxs[i, col])
            dij = float(dists[i, col])
            if j == i or not np.isfinite(dij) or dij > 3.5 * near:
                continue
            key = (min(i, j), max(i, j))
            if key not in valid:
                valid[key] = (interior_clear(i, j, dij)
                              and _link_valid(sample, pos[i], pos[j]))
            if valid[key]:
                adj[i].add(j)
                adj[j].add(i)

    # lattice unfolding: BFS propagating a local frame (image vectors of the
    # lattice steps), dropping links that disagree with the lattice.  Steps
    # are matched on the full vector residual, so a link must agree with the
    # expected step in direction and length; secondary saddles between the
    # knob disks form a denser off-lattice point set whose links fail this.
    visited = [False] * n
    components: list[list[int]] = []
    steps = {(1, 0): "right", (-1, 0): "left", (0, 1): "up", (0, -1): "down"}
    for seed in range(n):
        if visited[seed] or not adj[seed]:
            continue
        # median-length link: robust to a short spurious link on the seed
        by_len = sorted(adj[seed], key=lambda j: np.hypot(*(pos[j] - pos[seed])))
        first = by_len[len(by_len) // 2]
        f1 = pos[first] - pos[seed]
        ell1 = float(np.hypot(*f1))
        f2 = np.array([-f1[1], f1[0]])
        best = None
        for j in adj[seed]:
            d = pos[j] - pos[seed]
            if 60.0 < _angle_between(d, f1) < 120.0:
                gap = abs(float(np.hypot(*d)) - ell1)
                if best is None or gap < best[0]:
                    best = (gap, d if _cross2(f1, d) > 0 else -d)
        if best is not None:
            f2 = best[1]
        comp = []
        frames = {seed: (f1, f2)}
        taken = {(0, 0): seed}
        lattice[seed] = (0, 0)
        visited[seed] = True
        queue = [seed]
        while queue:
            a = queue.pop(0)
            comp.append(a)
            fa1, fa2 = frames[a]
            for b in sorted(adj[a]):
                d = pos[b] - pos[a]
                resid, step = min(
                    (float(np.hypot(*(d - vec))) / float(np.hypot(*vec)), s)
                    for s, vec in [((1, 0), fa1), ((-1, 0), -fa1),
                                   ((0, 1), fa2), ((0, -1), -fa2)])
                if resid > STEP_RESIDUAL_TOL:
                    continue
                coord = (lattice[a][0] + step[0], lattice[a][1] + step[1])
                if not visited[b] and coord not in taken:
                    visited[b] = True
                    lattice[b] = coord
                    taken[coord] = b
                    nf1 = d * step[0] if step[0] else fa1
                    nf2 = d * step[1] if step[1] else fa2
                    frames[b] = (nf1, nf2)
                    queue.append(b)

        # keep only links that land on unit lattice steps; links whose far
        # end never step-matched (lattice still None) or lies in another
        # component are not lattice links either
        comp_set = set(comp)
        for a in comp:
            for b in list(adj[a]):
                if (b not in comp_set or lattice[b] is None
                        or (lattice[b][0] - lattice[a][0],
                            lattice[b][1] - lattice[a][1]) not in steps):
                    adj[a].discard(b)
                    adj[b].discard(a)

        # normalize handedness: a pattern seen from outside the cylinder
        # always projects with cross(x_img, y_img) < 0 in u-right/v-down
        # coords, so force the lattice q axis to obey it
        cross = 0.0
        for a in comp:
            for b in adj[a]:
                delta = (lattice[b][0] - lattice[a][0],
                         lattice[b][1] - lattice[a][1])
                d = pos[b] - pos[a]
                if delta == (1, 0):
                    cross += _cross2(d, frames[a][1])
                elif delta == (0, 1):
                    cross += _cross2(frames[a][0], d)
        if cross > 0:
            for a in comp:
                lattice[a] = (lattice[a][0], -lattice[a][1])

        for a in comp:
            for b in adj[a]:
                delta = (lattice[b][0] - lattice[a][0],
                         lattice[b][1] - lattice[a][1])
                if delta in steps:
                    neighbors[a][steps[delta]] = b
        components.append(sorted(comp))

    graph = GridGraph(corners, neighbors, lattice, components)
    graph.component_status = ["unlabeled"] * len(components)
    return graph


# --------------------------------------------------------------------------
# Corner refinement.

REFINE_RADIUS_FRAC = 0.20     # window reach along each link, in link lengths
REFINE_ITERS = 3
REFINE_GRID = 9               # samples per axis in the link-aligned window
REFINE_MIN_SADDLE = 0.04      # least |st| coefficient accepted as a saddle
REFINE_WEIGHT_SIGMA = 0.6     # radial weight; rim samples nearest the knob
                              # disks get ~6% of the center weight

# weighted design matrix of the bilinear model over the normalized sample
# lattice, inverted once: columns 1, s, t, s*t on [-1, 1]^2
_RG = np.linspace(-1.0, 1.0, REFINE_GRID)
_RS, _RT = np.meshgrid(_RG, _RG, indexing="ij")
_RW = np.sqrt(np.exp(-(_RS ** 2 + _RT ** 2)
                     / (2.0 * REFINE_WEIGHT_SIGMA ** 2))).ravel()
_REFINE_PINV = np.linalg.pinv(np.stack(
    [np.ones(_RS.size), _RS.ravel(), _RT.ravel(),
     (_RS * _RT).ravel()], axis=1) * _RW[:, None]) * _RW[None, :]


def refine_corners(grid: GridGraph, image: GrayImage) -> GridGraph:
    """Pull each linked corner onto the gray-level saddle of the raw image.

    The detection-stage quadratic fit on the smoothed response surface
    drifts under foreshortening: anisotropic cells skew the response peak
    by a tenth of a pixel or more, which a pose solve then converts into
    a systematic depth error.  Here the image is resampled on a small
    lattice aligned with the two incident link directions and fit with
    the bilinear saddle model q0 + q1 s + q2 t + q3 s t, whose stationary
    point is the corner.  The linear terms absorb first-order shading
    and foreshortening drift, and the window reaches only a quarter link
    along each axis, clear of the knob disks and, on cylinders, of the
    compressed cells near the silhouette.
    """
    I = image.pixels.astype(np.float64)

    def sample(pts):
        return ndimage.map_coordinates(I, [pts[:, 1], pts[:, 0]],
                                       order=1, mode="nearest")

    def side(i: int, fwd: str, bwd: str) -> Optional[np.ndarray]:
        """Step vector toward `fwd`; extrapolated when only `bwd` exists.

        Foreshortening makes step lengths vary smoothly along a row, so a
        missing boundary step is estimated by continuing the geometric
        ratio of the two nearest steps on the other side.  A symmetric
        mirror would over-reach into the compressed cells (and their knob
        disks) near a cylinder's silhouette.
        """
        nbrs = grid.neighbors[i]
        if fwd in nbrs:
            return grid.nodes[nbrs[fwd]].position - grid.nodes[i].position
        if bwd not in nbrs:
            return None
        j = nbrs[bwd]
        d1 = grid.nodes[i].position - grid.nodes[j].position
        if bwd in grid.neighbors[j]:
            d2 = (grid.nodes[j].position
                  - grid.nodes[grid.neighbors[j][bwd]].position)
            n1, n2 = float(np.hypot(*d1)), float(np.hypot(*d2))
            if n2 > 1e-9:
                return d1 * min(1.0, n1 / n2)
        return d1

    sr, tr = _RS.ravel(), _RT.ravel()
    sp, sm = np.maximum(sr, 0.0), np.maximum(-sr, 0.0)
    tp, tm = np.maximum(tr, 0.0), np.maximum(-tr, 0.0)
    for i, node in enumerate(grid.nodes):
        d_r, d_l = side(i, "right", "left"), side(i, "left", "right")
        d_u, d_d = side(i, "up", "down"), side(i, "down", "up")
        if d_r is None or d_u is None:
            continue
        basis = np.stack([d_r, d_l, d_u, d_d]) * REFINE_RADIUS_FRAC
        if abs(_cross2(d_r, d_u)) < 1e-6:
            continue
        weights = np.stack([sp, sm, tp, tm], axis=1)      # (n, 4)

        def warp(sn: float, tn: float) -> np.ndarray:
            w = np.array([max(sn, 0), max(-sn, 0), max(tn, 0), max(-tn, 0)])
            return w @ basis

        c = node.position.copy()
        start = node.position.copy()
        ok = False
        for _ in range(REFINE_ITERS):
            pts = c[None, :] + weights @ basis
            q = _REFINE_PINV @ sample(pts)
            if abs(q[3]) < REFINE_MIN_SADDLE:
                break
            sn, tn = -q[2] / q[3], -q[1] / q[3]
            if abs(sn) > 1.0 or abs(tn) > 1.0:
                break
            c = c + warp(sn, tn)
            ok = True
            if np.hypot(sn, tn) < 1e-3:
                break
        limit = REFINE_RADIUS_FRAC * min(
            float(np.hypot(*v)) for v in (d_r, d_l, d_u, d_d))
        if ok and float(np.hypot(*(c - start))) <= limit:
            node.position[:] = c
    return grid


# --------------------------------------------------------------------------
# Edge bits.

_DISK = np.array([(0.0, 0.0)] + [(math.cos(t), math.sin(t))
                                 for t in np.linspace(0, 2 * math.pi, 8, endpoint=False)])


def sample_edge_bits(grid: GridGraph, image: GrayImage) -> GridGraph:
    """Sample each link's midpoint disk against local black/white levels.

    Bit 1 means the midpoint is dark (a knob of the black cell covers it).
    Confidence is |nu - 0.5| * 2 where nu is the midpoint level normalized
    between the darker and brighter pair of adjacent cell-center samples;
    bits with confidence < 0.2 (or degenerate references) are unknown.
    """
    sample = _sampler(image)
    pos = np.stack([c.position for c in grid.nodes]) if grid.nodes else None
    for i, j in grid.links():
        pa, pb = pos[i], pos[j]
        d = pb - pa
        ell = float(np.hypot(*d))
        mid = (pa + pb) / 2.0
        n = np.array([-d[1], d[0]]) / ell
        a = d / ell
        mid_val = float(np.mean(sample(mid + _DISK * (0.1 * ell))))
        side1 = sample(np.stack([mid + (n * 0.25 + a * 0.25) * ell,
                                 mid + (n * 0.25 - a * 0.25) * ell]))
        side2 = sample(np.stack([mid + (-n * 0.25 + a * 0.25) * ell,
                                 mid + (-n * 0.25 - a * 0.25) * ell]))
        lo = min(float(np.mean(side1)), float(np.mean(side2)))
        hi = max(float(np.mean(side1)), float(np.mean(side2)))
        if hi - lo < PROBE_CONTRAST:
            grid.edge_bits[(i, j)] = EdgeBit(0, 0.0, False)
            continue
        nu = (mid_val - lo) / (hi - lo)
        confidence = min(abs(nu - 0.5) * 2.0, 1.0)
        bit = 1 if nu < 0.5 else 0
        grid.edge_bits[(i, j)] = EdgeBit(bit, confidence,
                                         confidence >= UNKNOWN_CONFIDENCE)
    return grid


# --------------------------------------------------------------------------
# Decoding.

def pole_codebooks(registry: PoleRegistry,
                   stripes: tuple[CodeStripe, CodeStripe]) -> dict[str, Codebook]:
    """One codebook per registered pole, over that pole's patch positions."""
    return {pole.pole_id: Codebook.from_positions(*stripes, pole.patch_positions())
            for pole in registry}


def _rotate(coord: tuple[int, int], h: int) -> tuple[int, int]:
    p, q = coord
    if h == 0:
        return p, q
    if h == 1:
        return q, -p
    if h == 2:
        return -p, -q
    return -q, p


def _component_votes(grid: GridGraph, comp: list[int],
                     codebooks: dict[str, Codebook],
                     poles: dict[str, PoleSpec]):
    """Decode every available 3x3-cell patch under all 4 rotation
    hypotheses and collect votes on (pole, rotation, lattice offset)."""
    votes: dict[tuple, float] = {}
    exact: dict[tuple, int] = {}
    for h in range(4):
        coords = {_rotate(grid.lattice[i], h): i for i in comp}
        v_meas: dict[tuple[int, int], tuple[int, float]] = {}
        h_meas: dict[tuple[int, int], tuple[int, float]] = {}
        for i in comp:
            ci = _rotate(grid.lattice[i], h)
            for j in grid.neighbors[i].values():
                if j < i:
                    continue      # each undirected link once
                cj = _rotate(grid.lattice[j], h)
                key = (min(i, j), max(i, j))
                eb = grid.edge_bits.get(key)
                if eb is None or not eb.known:
                    continue
                dlt = (cj[0] - ci[0], cj[1] - ci[1])
                if dlt == (0, 1):
                    v_meas[ci] = (eb.bit, eb.confidence)
                elif dlt == (0, -1):
                    v_meas[cj] = (eb.bit, eb.confidence)
                elif dlt == (1, 0):
                    h_meas[ci] = (eb.bit, eb.confidence)
                elif dlt == (-1, 0):
                    h_meas[cj] = (eb.bit, eb.confidence)
        if not v_meas and not h_meas:
            continue
        ps = [c[0] for c in coords]
        qs = [c[1] for c in coords]
        for p0 in range(min(ps), max(ps) + 1):
            for q0 in range(min(qs), max(qs) + 1):
                acc = np.zeros(PATCH_BITS)
                seen = np.zeros(PATCH_BITS, dtype=bool)
                for jj in range(3):
                    for ii in range(4):
                        m = v_meas.get((p0 + ii, q0 + jj))
                        if m is not None:
                            slot = 3 * jj + ii % 3
                            acc[slot] += m[1] * (1.0 if m[0] else -1.0)
                            seen[slot] = True
                for jj in range(4):
                    for ii in range(3):
                        m = h_meas.get((p0 + ii, q0 + jj))
                        if m is not None:
                            slot = 9 + 3 * (jj % 3) + ii
                            acc[slot] += m[1] * (1.0 if m[0] else -1.0)
                            seen[slot] = True
                known = seen & (np.abs(acc) >= UNKNOWN_CONFIDENCE)
                n_unknown = PATCH_BITS - int(known.sum())
                if n_unknown > 1:
                    continue
                code = int(np.sum((acc > 0).astype(np.int64) << np.arange(PATCH_BITS)))
                mask = int(np.sum((~known).astype(np.int64) << np.arange(PATCH_BITS)))
                for pole_id, book in codebooks.items():
                    res = book.decode(code, unknown_mask=mask)
                    if res.position is None:
                        continue
                    x_g, y_g = res.position
                    pole = poles[pole_id]
                    eta = (y_g - pole.start_y) % BOARD_PERIOD
                    if eta >= pole.period:
                        continue
                    key = (pole_id, h, (x_g - p0) % BOARD_PERIOD,
                           (eta - q0) % pole.period)
                    votes[key] = votes.get(key, 0.0) + 1.0
                    if n_unknown == 0 and code in book:
                        exact[key] = exact.get(key, 0) + 1
    return votes, exact


def decode_grid(grid: GridGraph, codebooks: dict[str, Codebook],
                registry: PoleRegistry, *,
                raise_on_ambiguous: bool = False) -> GridGraph:
    """Assign global corner IDs per connected component by patch vote.

    Accepts a component's winning offset only if the runner-up holds at
    most 20% of the winner's votes, and, when only a single patch decoded,
    only if that patch matched its code exactly with all 18 bits known.
    Components failing the margin are marked ambiguous (optionally raising
    DecodeAmbiguous) and receive no labels.
    """
    poles = {pole.pole_id: pole for pole in registry}
    corner_sets = {pole.pole_id: frozenset(pole.corner_positions())
                   for pole in registry}
    ambiguous = []
    for ci, comp in enumerate(grid.components):
        votes, exact = _component_votes(grid, comp, codebooks, poles)
        if not votes:
            grid.component_status[ci] = "undecoded"
            continue
        ranked = sorted(votes.items(), key=lambda kv: kv[1], reverse=True)
        best_key, best = ranked[0]
        runner = ranked[1][1] if len(ranked) > 1 else 0.0
        if runner > VOTE_MARGIN * best:
            grid.component_status[ci] = "ambiguous"
            ambiguous.append(ci)
            continue
        if best == 1.0 and exact.get(best_key, 0) == 0:
            # one corrected/incomplete patch alone is not trustworthy
            grid.component_status[ci] = "ambiguous"
            ambiguous.append(ci)
            continue
        pole_id, h, ox, oeta = best_key
        pole = poles[pole_id]
        labeled = 0
        for i in comp:
            p, q = _rotate(grid.lattice[i], h)
            x = (p + ox) % BOARD_PERIOD
            y = (pole.start_y + (q + oeta) % pole.period) % BOARD_PERIOD
            if (x, y) in corner_sets[pole_id]:
                grid.nodes[i].id = (x, y)
                labeled += 1
        grid.component_status[ci] = (f"decoded:{pole_id}" if labeled
                                     else "undecoded")
    if ambiguous and raise_on_ambiguous:
        raise DecodeAmbiguous(f"components {ambiguous} failed the vote margin")
    return grid


# --------------------------------------------------------------------------
# Partitioning.

@dataclass(frozen=True)
class Correspondence:
    corner: CornerObservation
    point_3d: np.ndarray
    corner_id: tuple[int, int]


@dataclass
class PolePartition:
    """Per-pole 2D-3D correspondences; unknown labels are counted, not kept."""

    by_pole: dict[str, list[Correspondence]]
    unknown_id_count: int = 0

    def __getitem__(self, pole_id: str) -> list[Correspondence]:
        return self.by_pole[pole_id]

    def __iter__(self):
        return iter(self.by_pole)

    def __len__(self) -> int:
        return len(self.by_pole)

    def items(self):
        return self.by_pole.items()


def partition_by_pole(grid: GridGraph, registry: PoleRegistry) -> PolePartition:
    """Pair every labeled corner with its pole-frame 3D point."""
    lookup: dict[tuple[int, int], tuple[str, int, int]] = {}
    for pole in registry:
        for i in range(pole.axial_cells + 1):
            for j in range(pole.period):
                x = (pole.axial_start_x + i) % BOARD_PERIOD
                y = (pole.start_y + j) % BOARD_PERIOD
                lookup[(x, y)] = (pole.pole_id, i, j)
    by_pole: dict[str, list[Correspondence]] = {}
    unknown = 0
    for node in grid.nodes:
        if node.id is None:
            continue
        hit = lookup.get(node.id)
        if hit is None:
            unknown += 1
            continue
        pole_id, i, j = hit
        by_pole.setdefault(pole_id, []).append(Correspondence(
            corner=node,
            point_3d=corner_point_3d(registry.get(pole_id), i, j),
            corner_id=node.id))
    return PolePartition(by_pole, unknown)


# --------------------------------------------------------------------------
# Diagnostics.

def write_overlay_svg(image: GrayImage, grid: GridGraph, path: str | Path) -> None:
    """Debug overlay: the image with corners, links, and decoded IDs."""
    from PIL import Image as PILImage

    buf = io.BytesIO()
    PILImage.fromarray(image.to_uint8(), mode="L").save(buf, format="PNG")
    b64 = base64.b64encode(buf.getvalue()).decode("ascii")
    w, h = image.width, image.height
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" xmlns:xlink="http://www.w3.org/1999/xlink"'
        f' width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
        f'<image width="{w}" height="{h}"'
        f' xlink:href="data:image/png;base64,{b64}"/>',
    ]
    pos = [c.position for c in grid.nodes]
    for i, j in grid.links():
        eb = grid.edge_bits.get((i, j))
        color = "#808080" if eb is None or not eb.known else (
            "#d01030" if eb.bit else "#1060d0")
        parts.append(f'<line x1="{pos[i][0]:.2f}" y1="{pos[i][1]:.2f}"'
                     f' x2="{pos[j][0]:.2f}" y2="{pos[j][1]:.2f}"'
                     f' stroke="{color}" stroke-width="1"/>')
    for c in grid.nodes:
        fill = "#20c040" if c.id is not None else "#e0a000"
        parts.append(f'<circle cx="{c.position[0]:.2f}" cy="{c.position[1]:.2f}"'
                     f' r="2.5" fill="none" stroke="{fill}" stroke-width="1.2"/>')
        if c.id is not None:
            parts.append(f'<text x="{c.position[0] + 3:.2f}"'
                         f' y="{c.position[1] - 3:.2f}" font-size="7"'
                         f' fill="#20c040">{c.id[0]},{c.id[1]}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts), encoding="ascii")
