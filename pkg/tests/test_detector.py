"""Detector pipeline tests against rendered ground truth.

Ground-truth corner positions come from the renderer's geometry: board
corner (i, j) lands at pixel-center coordinates (i*ppc - 0.5,
height - j*ppc - 0.5).  The half-pixel shift is the continuous-to-pixel-
center conversion, not a detector property.
"""

import numpy as np
import pytest

from puzzlepole.board import (
    BoardSpec,
    PoleRegistry,
    PoleSpec,
    build_board,
    corner_point_3d,
    render_raster,
)
from puzzlepole.detector import (
    CornerObservation,
    decode_grid,
    detect_corners,
    link_grid,
    partition_by_pole,
    pole_codebooks,
    sample_edge_bits,
    write_overlay_svg,
)
from puzzlepole.images import GrayImage

BOARD_W = BOARD_H = 10
START_Y = 56


@pytest.fixture(scope="module")
def board(stripes):
    return build_board(BoardSpec(0, START_Y, BOARD_W, BOARD_H, 0.03), stripes)


@pytest.fixture(scope="module")
def registry():
    return PoleRegistry([PoleSpec("front", 12, START_Y, 6, 0, 0.03)])


@pytest.fixture(scope="module")
def books(registry, stripes):
    return pole_codebooks(registry, stripes)


def truth_grid(ppc, height):
    """Interior corner (i, j) -> pixel position, i, j in 1..9."""
    return {
        (i, j): np.array([i * ppc - 0.5, height - j * ppc - 0.5])
        for i in range(1, BOARD_W)
        for j in range(1, BOARD_H)
    }


def match_truth(corners, ppc, height, tol=1.5):
    """Map each truth corner to its nearest detection within tol."""
    truth = truth_grid(ppc, height)
    out = {}
    for key, g in truth.items():
        best, best_d = None, tol
        for c in corners:
            d = float(np.linalg.norm(c.position - g))
            if d < best_d:
                best, best_d = c, d
        if best is not None:
            out[key] = (best, best_d)
    return out


# --------------------------------------------------------------------------
# detect_corners


def test_uniform_gray_finds_nothing():
    img = GrayImage(np.full((128, 128), 0.5, dtype=np.float32))
    assert detect_corners(img) == []


def test_small_image_rejected():
    img = GrayImage(np.zeros((8, 64), dtype=np.float32))
    with pytest.raises(ValueError):
        detect_corners(img)


def test_board_at_20ppc_exactly_81_corners(board):
    img = render_raster(board, 20)
    corners = detect_corners(img)
    assert len(corners) == 81
    matched = match_truth(corners, 20, img.height, tol=0.25)
    assert len(matched) == 81


def test_subpixel_accuracy_at_16ppc_and_up(board):
    for ppc in (16, 20, 28):
        img = render_raster(board, ppc)
        corners = detect_corners(img)
        errs = [d for _, d in match_truth(corners, ppc, img.height).values()]
        assert len(errs) == 81
        assert np.mean(errs) < 0.1, f"ppc={ppc}"
        assert np.max(errs) < 0.3, f"ppc={ppc}"


def test_every_true_corner_found_down_to_10ppc(board):
    # near the resolution limit extra saddle points appear between the
    # knob disks; they must not displace or absorb any true corner
    for ppc in (10, 12, 14):
        img = render_raster(board, ppc)
        corners = detect_corners(img)
        matched = match_truth(corners, ppc, img.height, tol=1.0)
        assert len(matched) == 81, f"ppc={ppc}"


def test_detection_under_noise(board):
    img = render_raster(board, 20)
    found = 0
    for seed in range(5):
        rng = np.random.default_rng(seed)
        noisy = GrayImage(
            np.clip(img.pixels + rng.normal(0, 0.02, img.pixels.shape), 0, 1)
            .astype(np.float32))
        corners = detect_corners(noisy)
        matched = match_truth(corners, 20, img.height, tol=0.5)
        found += len(matched)
    assert found >= 0.95 * 5 * 81


def test_responses_positive_and_sorted(board):
    corners = detect_corners(render_raster(board, 16))
    resp = [c.response for c in corners]
    assert all(r > 0 for r in resp)
    assert resp == sorted(resp, reverse=True)


# --------------------------------------------------------------------------
# link_grid


def test_link_grid_shape(board):
    img = render_raster(board, 20)
    grid = link_grid(detect_corners(img), img)
    # 9x9 interior corners: 2 * 9 * 8 undirected links
    assert len(grid.links()) == 144
    assert sorted(len(c) for c in grid.components) == [81]
    # inner 7x7 corners have all four neighbors
    truth = truth_grid(20, img.height)
    pos_of = {i: c.position for i, c in enumerate(grid.nodes)}
    for (ti, tj), g in truth.items():
        node = min(pos_of, key=lambda i: np.linalg.norm(pos_of[i] - g))
        want = 4 if 1 < ti < 9 and 1 < tj < 9 else None
        if want:
            assert len(grid.neighbors[node]) == 4


def test_links_are_symmetric(board):
    img = render_raster(board, 16)
    grid = link_grid(detect_corners(img), img)
    pair = {"right": "left", "left": "right", "up": "down", "down": "up"}
    for i, nbrs in enumerate(grid.neighbors):
        for name, j in nbrs.items():
            assert grid.neighbors[j][pair[name]] == i


def test_lattice_rigid_up_to_rotation(board):
    from puzzlepole.detector import _rotate

    for ppc in (10, 12, 16, 20):
        img = render_raster(board, ppc)
        corners = detect_corners(img)
        grid = link_grid(corners, img)
        big = max(grid.components, key=len)
        assert len(big) == 81, f"ppc={ppc}"
        hits = []
        for h in range(4):
            offsets = set()
            for i in big:
                p = corners[i].position
                bi = round((p[0] + 0.5) / ppc)
                bj = round((img.height - p[1] - 0.5) / ppc)
                li, lj = _rotate(grid.lattice[i], h)
                offsets.add((bi - li, bj - lj))
            hits.append(len(offsets) == 1)
        assert sum(hits) == 1, f"ppc={ppc}"


def test_lattice_handedness_normalized(board):
    # with u right / v down, the lattice q axis must project so that
    # cross(step_p, step_q) < 0: mirror images are rejected by convention
    img = render_raster(board, 16)
    grid = link_grid(detect_corners(img), img)
    pos = [c.position for c in grid.nodes]
    checked = 0
    for i, nbrs in enumerate(grid.neighbors):
        if "right" in nbrs and "up" in nbrs:
            e1 = pos[nbrs["right"]] - pos[i]
            e2 = pos[nbrs["up"]] - pos[i]
            assert e1[0] * e2[1] - e1[1] * e2[0] < 0
            checked += 1
    assert checked > 0


def test_two_separate_boards_two_components(stripes):
    b = build_board(BoardSpec(0, START_Y, 6, 6, 0.03), stripes)
    tile = render_raster(b, 16).pixels
    canvas = np.full((tile.shape[0], tile.shape[1] * 2 + 64), 0.5,
                     dtype=np.float32)
    canvas[:, :tile.shape[1]] = tile
    canvas[:, tile.shape[1] + 64:] = tile
    img = GrayImage(canvas)
    grid = link_grid(detect_corners(img), img)
    sizes = sorted(len(c) for c in grid.components)
    assert sizes == [25, 25]


# --------------------------------------------------------------------------
# sample_edge_bits


def edge_truth(board, grid, img, ppc):
    """Expected bit for every link, from the board's edge arrays."""
    out = {}
    for i, j in grid.links():
        pi, pj = grid.nodes[i].position, grid.nodes[j].position
        bi = round((pi[0] + 0.5) / ppc)
        bj = round((img.height - pi[1] - 0.5) / ppc)
        ci = round((pj[0] + 0.5) / ppc)
        cj = round((img.height - pj[1] - 0.5) / ppc)
        if bi == ci:  # vertical edge column
            out[(i, j)] = board.v_edge_bits[bi, min(bj, cj)]
        else:
            out[(i, j)] = board.h_edge_bits[min(bi, ci), bj]
    return out


def test_edge_bits_all_known_and_correct(board):
    for ppc in (12, 16, 20):
        img = render_raster(board, ppc)
        grid = sample_edge_bits(
            link_grid(detect_corners(img), img), img)
        truth = edge_truth(board, grid, img, ppc)
        main = max(grid.components, key=len)
        main_set = set(main)
        checked = 0
        for (i, j), eb in grid.edge_bits.items():
            if i not in main_set:
                continue
            assert eb.known, f"ppc={ppc} link=({i},{j})"
            assert eb.bit == truth[(i, j)], f"ppc={ppc} link=({i},{j})"
            checked += 1
        assert checked == 144


def test_gray_midpoint_is_unknown(board):
    img = render_raster(board, 20)
    px = img.pixels.copy()
    grid = link_grid(detect_corners(img), img)
    # paint one link's midpoint disk mid-gray
    i, j = grid.links()[0]
    mid = (grid.nodes[i].position + grid.nodes[j].position) / 2
    uu, vv = int(round(mid[0])), int(round(mid[1]))
    px[vv - 3:vv + 4, uu - 3:uu + 4] = 0.5
    doctored = GrayImage(px)
    grid = sample_edge_bits(link_grid(detect_corners(doctored), doctored),
                            doctored)
    key = min(grid.edge_bits,
              key=lambda k: np.linalg.norm(
                  (grid.nodes[k[0]].position + grid.nodes[k[1]].position) / 2
                  - mid))
    assert not grid.edge_bits[key].known


# --------------------------------------------------------------------------
# decode_grid / partition_by_pole


def decoded_pipeline(board, registry, books, ppc):
    img = render_raster(board, ppc)
    grid = sample_edge_bits(link_grid(detect_corners(img), img), img)
    return decode_grid(grid, books, registry), img


def test_decode_labels_correct(board, registry, books):
    for ppc in (12, 16, 20):
        grid, img = decoded_pipeline(board, registry, books, ppc)
        assert "decoded:front" in grid.component_status
        labeled = wrong = 0
        for c in grid.nodes:
            if c.id is None:
                continue
            labeled += 1
            bi = round((c.position[0] + 0.5) / ppc)
            bj = round((img.height - c.position[1] - 0.5) / ppc)
            if c.id != (bi, START_Y + bj):
                wrong += 1
        # pole covers axial x in [0, 6], all 12 rings: 6 x 9 interior
        assert labeled == 54, f"ppc={ppc}"
        assert wrong == 0, f"ppc={ppc}"


def test_junk_components_never_labeled(board, registry, books):
    # near the resolution limit, secondary-saddle components must all
    # stay undecoded: a wrong label would poison the pose downstream
    grid, _ = decoded_pipeline(board, registry, books, 12)
    main = max(grid.components, key=len)
    for ci, comp in enumerate(grid.components):
        status = grid.component_status[ci]
        if comp is not main and len(comp) < 16:
            assert status in ("undecoded", "ambiguous")
            for i in comp:
                assert grid.nodes[i].id is None


def test_no_false_ids_under_noise(board, registry, books):
    img = render_raster(board, 20)
    for seed in range(5):
        rng = np.random.default_rng(100 + seed)
        noisy = GrayImage(
            np.clip(img.pixels + rng.normal(0, 0.03, img.pixels.shape), 0, 1)
            .astype(np.float32))
        grid = sample_edge_bits(link_grid(detect_corners(noisy), noisy),
                                noisy)
        grid = decode_grid(grid, books, registry)
        for c in grid.nodes:
            if c.id is None:
                continue
            bi = round((c.position[0] + 0.5) / 20)
            bj = round((img.height - c.position[1] - 0.5) / 20)
            assert c.id == (bi, START_Y + bj)


def test_scrambled_bits_do_not_decode(board, registry, books):
    img = render_raster(board, 20)
    grid = sample_edge_bits(link_grid(detect_corners(img), img), img)
    rng = np.random.default_rng(3)
    for key in grid.edge_bits:
        eb = grid.edge_bits[key]
        if rng.random() < 0.5:
            eb.bit ^= 1
    grid = decode_grid(grid, books, registry)
    for ci, status in enumerate(grid.component_status):
        assert not status.startswith("decoded") or all(
            grid.nodes[i].id is None for i in grid.components[ci]) or (
            # a decode surviving scrambling must still be margin-clean;
            # verify no node got an id pointing at the wrong corner
            all(_id_matches(grid.nodes[i], img) for i in grid.components[ci]
                if grid.nodes[i].id is not None))


def _id_matches(node, img):
    bi = round((node.position[0] + 0.5) / 20)
    bj = round((img.height - node.position[1] - 0.5) / 20)
    return node.id == (bi, START_Y + bj)


def test_partition_pairs_2d_with_3d(board, registry, books):
    grid, img = decoded_pipeline(board, registry, books, 20)
    parts = partition_by_pole(grid, registry)
    assert set(parts) == {"front"}
    assert parts.unknown_id_count == 0
    corr = parts["front"]
    assert len(corr) == 54
    pole = registry.get("front")
    for c in corr:
        x, y = c.corner_id
        i = x - pole.axial_start_x
        j = (y - pole.start_y) % pole.period
        assert np.allclose(c.point_3d, corner_point_3d(pole, i, j))
        assert np.isfinite(c.corner.position).all()


def test_partition_empty_without_ids(board, registry):
    img = render_raster(board, 16)
    grid = link_grid(detect_corners(img), img)
    parts = partition_by_pole(grid, registry)
    assert len(parts) == 0
    assert parts.unknown_id_count == 0


# --------------------------------------------------------------------------
# diagnostics


def test_overlay_svg(tmp_path, board, registry, books):
    grid, img = decoded_pipeline(board, registry, books, 16)
    out = tmp_path / "overlay.svg"
    write_overlay_svg(img, grid, out)
    text = out.read_text()
    assert text.startswith("<svg") or "<svg" in text
    assert "circle" in text and "line" in text and "image" in text
