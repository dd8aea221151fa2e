import json
import math

import numpy as np
import pytest

from betascope import (boundary_audit, boundary_layer_mass, build_lattice,
                       cantor4, check_lattice, classify_doubling,
                       cover_by_doubling, lattice_to_json, lipschitz_graph,
                       segment, square_area)


@pytest.fixture(scope="module")
def seg_lattice():
    return build_lattice(segment(120))


@pytest.fixture(scope="module")
def cantor_lattice():
    return build_lattice(cantor4(4), a0=4.0, c0=400.0)


def brute_check(lat):
    """Invariants checked directly against the cell lists, not through
    check_lattice (which is itself under test here)."""
    m = lat.measure if hasattr(lat, "measure") else None
    n_atoms = len(lat.root.point_indices)
    for k in range(lat.max_depth + 1):
        cells = lat.level_cells(k)
        seen = np.concatenate([c.point_indices for c in cells])
        assert len(seen) == n_atoms
        assert len(np.unique(seen)) == n_atoms
    # nesting: every child's atoms inside parent's
    for k in range(1, lat.max_depth + 1):
        for c in lat.level_cells(k):
            parent = lat.cell(c.parent)
            assert set(c.point_indices) <= set(parent.point_indices)


class TestConstruction:
    def test_level_zero_is_single_root(self, seg_lattice):
        roots = seg_lattice.level_cells(0)
        assert len(roots) == 1
        assert roots[0].id == seg_lattice.root.id

    def test_partition_and_nesting(self, seg_lattice):
        brute_check(seg_lattice)

    def test_cantor_partition_and_nesting(self, cantor_lattice):
        brute_check(cantor_lattice)

    def test_side_lengths_geometric(self, seg_lattice):
        a0 = seg_lattice.a0
        for k in range(seg_lattice.max_depth):
            assert seg_lattice.side(k + 1) == pytest.approx(
                seg_lattice.side(k) / a0, rel=1e-12)

    def test_scale_alignment_on_cantor(self, cantor_lattice):
        # with a0 = 4, levels 2..5 match Cantor generations 1..4 (level 1's
        # net separation still exceeds the diameter, so it stays one cell)
        counts = [len(cantor_lattice.level_cells(k))
                  for k in range(cantor_lattice.max_depth + 1)]
        assert counts == [1, 1, 4, 16, 64, 256, 256]

    def test_rejects_bad_params(self):
        m = segment(10)
        with pytest.raises(ValueError):
            build_lattice(m, a0=1.0)
        with pytest.raises(ValueError):
            build_lattice(m, c0=1.0)
        with pytest.raises(ValueError):
            build_lattice(m, strict=True)   # needs a0 > 5000 c0

    def test_rejects_oversized_measure(self):
        pts = np.array([[0.0, 0.0], [100.0, 0.0]])
        m = __import__("betascope").WeightedPointMeasure(pts, np.ones(2), 1)
        with pytest.raises(ValueError, match="rescale"):
            build_lattice(m)

    def test_deepest_level_singletons(self, seg_lattice):
        for c in seg_lattice.level_cells(seg_lattice.max_depth):
            assert len(c.point_indices) == 1

    def test_chain_walks_root_to_leaf(self, seg_lattice):
        chain = seg_lattice.chain(17)
        assert chain[0].level == 0
        assert chain[-1].level == seg_lattice.max_depth
        for a, b in zip(chain, chain[1:]):
            assert b.parent == a.id
            assert 17 in a.point_indices and 17 in b.point_indices

    def test_cell_of_consistent_with_chain(self, seg_lattice):
        for level in (0, 1, seg_lattice.max_depth):
            c = seg_lattice.cell_of(5, level)
            assert 5 in c.point_indices
            assert c.level == level


class TestInvariantReport:
    def test_segment_all_green(self, seg_lattice):
        rep = check_lattice(seg_lattice)
        assert rep["partition_ok"]
        assert rep["nesting_ok"]
        assert rep["radius_bracket_ok"]
        assert rep["center_membership_ok"]
        assert rep["five_b_violations"] == 0
        assert rep["diam_upper_ok"]

    def test_cantor_all_green(self, cantor_lattice):
        rep = check_lattice(cantor_lattice)
        assert rep["partition_ok"] and rep["nesting_ok"]
        assert rep["five_b_violations"] == 0
        assert rep["diam_upper_ok"]

    def test_conformity_fraction_small(self, seg_lattice):
        rep = check_lattice(seg_lattice)
        assert rep["nonconforming_fraction"] <= 0.5

    def test_five_b_separation_brute(self, seg_lattice):
        # conforming same-level cells: 5B(Q) and 5B(Q') disjoint (open balls)
        for k in range(seg_lattice.max_depth + 1):
            cells = [c for c in seg_lattice.level_cells(k) if c.conforming]
            for i, a in enumerate(cells):
                for b in cells[i + 1:]:
                    gap = np.linalg.norm(a.center - b.center)
                    assert gap >= 5.0 * (a.radius + b.radius) - 1e-12


class TestDoubling:
    def test_flags_match_definition(self, cantor_lattice):
        classify_doubling(cantor_lattice)
        mu = cantor_lattice.measure
        for k in range(cantor_lattice.max_depth + 1):
            for c in cantor_lattice.level_cells(k):
                big = mu.ball_mass(c.center, 100.0 * c.radius)
                small = mu.ball_mass(c.center, c.radius)
                assert c.doubling == (big <= cantor_lattice.c0 * small)

    def test_cover_by_doubling_disjoint_cover(self, cantor_lattice):
        root = cantor_lattice.root
        emitted, uncovered = cover_by_doubling(cantor_lattice, root.id)
        atoms = []
        for cid in emitted:
            atoms.extend(cantor_lattice.cell(cid).point_indices)
        atoms.extend(uncovered)
        assert sorted(atoms) == sorted(root.point_indices)
        assert len(set(atoms)) == len(atoms)


class TestBoundary:
    def test_layer_mass_monotone_in_lambda(self, seg_lattice):
        cell = seg_lattice.level_cells(2)[0]
        prev = -1.0
        for lam in (0.02, 0.05, 0.1, 0.2, 1.0):
            mass, _ = boundary_layer_mass(seg_lattice, cell, lam)
            assert mass >= prev
            prev = mass

    def test_layer_lambda_validation(self, seg_lattice):
        cell = seg_lattice.level_cells(1)[0]
        for bad in (0.0, -0.5, 1.5):
            with pytest.raises(ValueError):
                boundary_layer_mass(seg_lattice, cell, bad)

    def test_audit_returns_requested_lambdas(self, seg_lattice):
        out = boundary_audit(seg_lattice, (0.1, 0.2))
        assert set(out) == {0.1, 0.2}
        assert all(v >= 0.0 for v in out.values())


def test_json_dump(tmp_path, seg_lattice):
    path = tmp_path / "lat.json"
    lattice_to_json(seg_lattice, path)
    data = json.loads(path.read_text())
    assert data["a0"] == seg_lattice.a0
    assert data["levels"][0] == [seg_lattice.root.id]
    root_rec = data["cells"][seg_lattice.root.id]
    assert root_rec["n_points"] == len(seg_lattice.root.point_indices)
    assert root_rec["parent"] is None


def test_lipschitz_graph_invariants():
    lat = build_lattice(lipschitz_graph(400, seed=3))
    rep = check_lattice(lat)
    assert rep["partition_ok"] and rep["nesting_ok"]
    assert rep["five_b_violations"] == 0


def test_square_area_invariants():
    lat = build_lattice(square_area(12))
    rep = check_lattice(lat)
    assert rep["partition_ok"] and rep["nesting_ok"]
    assert rep["five_b_violations"] == 0
    assert rep["diam_upper_ok"]
