"""Hierarchical cell lattice over the support of a weighted point measure.

Levels k = 0, 1, ..., max_depth each carry a partition of the atoms into
cells.  Cells at level k are generated by a greedy maximal separated net of
the support (deterministic: previous-level centres first, then remaining
atoms in lexicographic coordinate order with index tie-break); every atom
joins its nearest centre, ties to the earlier centre, and whole level-(k+1)
cells attach to the level-k cell owning their centre so nesting is exact by
construction.

Scale conventions at level k, with A0 the inter-level ratio and C0 the
doubling constant:

    net separation      NET_FACTOR * A0^-k
    ball radius r(Q)    A0^-k          (smallest admissible, clamped bracket
                                        [A0^-k, C0 * A0^-k])
    side length l(Q)    56 * C0 * A0^-k
    big ball B_Q        28 * B(Q)

The net separation sits one order above r(Q): with a separation equal to
r(Q) the enlarged balls 5*B(Q) of adjacent cells always overlap and the
containment support(mu) inter B(z_Q, r(Q)) inside Q fails for any dense
input, so none of the advertised cell properties would ever hold.  A factor
of NET_FACTOR = 10 makes all of them hold with margin on every input:
foreign atoms stay at distance > (1/2 - 1/(A0-1)) * separation from a
centre, cells have radius < separation * A0/(A0-1) <= 28 * r(Q), and centre
gaps >= 10 * r(Q) keep the open enlarged balls 5*B(Q) pairwise disjoint.

Inputs are expected at unit scale: the construction requires the support
diameter to be below the level-0 separation (rescale otherwise).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .measure import Ball, WeightedPointMeasure

__all__ = [
    "Cell",
    "Lattice",
    "build_lattice",
    "classify_doubling",
    "boundary_layer_mass",
    "boundary_audit",
    "cover_by_doubling",
    "check_lattice",
    "lattice_to_json",
]

NET_FACTOR = 10.0         # net separation = NET_FACTOR * A0^-k
COVER_FACTOR = 28.0       # Q subset of 28 B(Q);  B_Q := 28 B(Q)
SIDE_FACTOR = 56.0        # l(Q) = 56 * C0 * A0^-k
FIVE_B = 5.0              # enlarged-ball disjointness factor
DOUBLING_FACTOR = 100.0   # doubling cells: mu(100 B(Q)) <= C0 mu(B(Q))
BOUNDARY_BALL_FACTOR = 3.5
DEFAULT_A0 = 20.0
DEFAULT_C0 = 4.0
MAX_DEPTH_CAP = 14


@dataclass
class Cell:
    """One lattice cell Q."""

    id: int
    level: int
    center_index: int            # atom index of the centre z_Q
    center: np.ndarray
    radius: float                # r(Q)
    side: float                  # l(Q)
    point_indices: np.ndarray    # sorted atom indices of Q
    parent: int | None
    children: list[int] = field(default_factory=list)
    conforming: bool = True
    doubling: bool | None = None

    @property
    def ball(self) -> Ball:
        return Ball(self.center, self.radius)

    @property
    def big_ball(self) -> Ball:
        """B_Q = 28 B(Q)."""
        return Ball(self.center, COVER_FACTOR * self.radius)

    def mass(self, measure: WeightedPointMeasure) -> float:
        return float(np.sum(measure.weights[self.point_indices]))


class Lattice:
    def __init__(self, measure, cells, levels, assignment, a0, c0, strict):
        self.measure = measure
        self.cells: list[Cell] = cells
        self.levels: list[list[int]] = levels      # cell ids per level
        self._assignment = assignment              # (max_depth+1, N) cell ids
        self.a0 = float(a0)
        self.c0 = float(c0)
        self.strict = bool(strict)

    @property
    def max_depth(self) -> int:
        return len(self.levels) - 1

    @property
    def root(self) -> Cell:
        return self.cells[self.levels[0][0]]

    def cell(self, cell_id: int) -> Cell:
        return self.cells[cell_id]

    def level_cells(self, k: int) -> list[Cell]:
        return [self.cells[i] for i in self.levels[k]]

    def cell_of(self, point_index: int, level: int) -> Cell:
        """The level-k cell containing a given atom."""
        return self.cells[self._assignment[level, point_index]]

    def separation(self, k: int) -> float:
        return NET_FACTOR * self.a0 ** (-k)

    def side(self, k: int) -> float:
        return SIDE_FACTOR * self.c0 * self.a0 ** (-k)

    def chain(self, point_index: int) -> list[Cell]:
        """Root-to-leaf chain of cells containing an atom."""
        return [self.cell_of(point_index, k) for k in range(self.max_depth + 1)]


def _lex_order(points: np.ndarray) -> np.ndarray:
    keys = [np.arange(points.shape[0])]
    keys.extend(points[:, j] for j in range(points.shape[1] - 1, -1, -1))
    return np.lexsort(tuple(keys))


def _greedy_net(points, order, separation, seeds):
    """Greedy maximal net: accept a site iff all accepted so far are >= s away.

    ``seeds`` (atom indices, already pairwise >= s apart) are accepted first
    in their given order, then the remaining sites in ``order``.  Uses a
    uniform grid hash of bucket size s, so only the 3^d neighbouring buckets
    are scanned per candidate.
    """
    sep_sq = separation * separation
    d = points.shape[1]
    buckets: dict[tuple, list[int]] = {}
    accepted: list[int] = []
    offsets = np.stack(
        np.meshgrid(*([np.arange(-1, 2)] * d), indexing="ij"), axis=-1
    ).reshape(-1, d)

    def try_accept(i, force):
        p = points[i]
        key = tuple(np.floor(p / separation).astype(np.int64))
        if not force:
            for off in offsets:
                neigh = tuple(key + off)
                for j in buckets.get(neigh, ()):
                    diff = points[j] - p
                    if float(diff @ diff) < sep_sq:
                        return False
        buckets.setdefault(key, []).append(i)
        accepted.append(i)
        return True

    for i in seeds:
        try_accept(int(i), force=True)
    seed_set = set(int(i) for i in seeds)
    for i in order:
        i = int(i)
        if i not in seed_set:
            try_accept(i, force=False)
    return accepted


def _nearest_center(points, centers):
    """Index of the nearest centre per point; ties to the earlier centre."""
    n_pts = points.shape[0]
    n_ctr = centers.shape[0]
    out = np.empty(n_pts, dtype=np.int64)
    if n_ctr == 1:
        out[:] = 0
        return out
    chunk = max(1, int(4_000_000 // max(1, n_ctr)))
    for lo in range(0, n_pts, chunk):
        hi = min(lo + chunk, n_pts)
        diff = points[lo:hi, None, :] - centers[None, :, :]
        dist_sq = np.einsum("ijk,ijk->ij", diff, diff)
        out[lo:hi] = np.argmin(dist_sq, axis=1)
    return out


def build_lattice(
    measure: WeightedPointMeasure,
    a0: float = DEFAULT_A0,
    c0: float = DEFAULT_C0,
    max_depth: int | None = None,
    strict: bool = False,
) -> Lattice:
    """Construct the cell hierarchy for a nonempty measure.

    ``strict`` enforces the regime A0 > 5000 * C0 > 5000; the default
    relaxed mode accepts any A0 > 1, C0 > 1 (desk-scale constants) and the
    lattice records which mode produced it.
    """
    if measure.is_empty:
        raise ValueError("cannot build a lattice over an empty measure")
    a0, c0 = float(a0), float(c0)
    if c0 <= 1.0:
        raise ValueError(f"C0 must exceed 1, got {c0}")
    if strict:
        if not a0 > 5000.0 * c0:
            raise ValueError(
                f"strict mode needs A0 > 5000*C0: got A0={a0}, C0={c0}"
            )
    elif a0 <= 1.0:
        raise ValueError(f"A0 must exceed 1, got {a0}")

    points = measure.points
    n_pts = measure.size
    if max_depth is None:
        max_depth = math.ceil(
            math.log(NET_FACTOR / measure.r_min) / math.log(a0) - 1e-9
        )
        max_depth = min(max(max_depth, 1), MAX_DEPTH_CAP)
    max_depth = int(max_depth)
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")

    if measure.diameter >= NET_FACTOR:
        raise ValueError(
            f"support diameter {measure.diameter:.3g} reaches the level-0 "
            f"separation {NET_FACTOR:g}; rescale the input to unit size"
        )

    order = _lex_order(points)

    # Nets and provisional nearest-centre assignments per level.  Seeding
    # each net with the previous centres keeps the nets nested, so every
    # centre owns its own chain downward (z_Q in Q is then automatic).
    nets: list[list[int]] = []
    voronoi: list[np.ndarray] = []
    seeds: list[int] = []
    for k in range(max_depth + 1):
        net = _greedy_net(points, order, NET_FACTOR * a0 ** (-k), seeds)
        if k == 0 and len(net) != 1:
            raise ValueError(
                "support is not contained in a single root cell; rescale input"
            )
        nets.append(net)
        voronoi.append(_nearest_center(points, points[net]))
        seeds = net

    # Cells, deepest level first: the finest partition is the provisional
    # one; a coarser cell is the union of the cells whose centre it owns.
    cells: list[Cell] = []
    levels: list[list[int]] = [[] for _ in range(max_depth + 1)]
    assignment = np.empty((max_depth + 1, n_pts), dtype=np.int64)

    cell_ids_per_level: list[dict[int, int]] = [dict() for _ in range(max_depth + 1)]
    for k in range(max_depth + 1):
        r = a0 ** (-k)
        side = SIDE_FACTOR * c0 * a0 ** (-k)
        for local, center_idx in enumerate(nets[k]):
            cid = len(cells)
            cells.append(
                Cell(
                    id=cid,
                    level=k,
                    center_index=int(center_idx),
                    center=points[center_idx].copy(),
                    radius=r,
                    side=side,
                    point_indices=np.empty(0, dtype=np.intp),
                    parent=None,
                )
            )
            levels[k].append(cid)
            cell_ids_per_level[k][local] = cid

    # Deepest level: provisional assignment is final.
    deepest = max_depth
    assignment[deepest] = np.array(
        [cell_ids_per_level[deepest][int(v)] for v in voronoi[deepest]]
    )
    # Parent of a level-(k+1) cell: the level-k cell owning its centre.
    for k in range(max_depth - 1, -1, -1):
        parent_of_local = voronoi[k]  # per atom: local centre index at level k
        child_to_parent = {}
        for local, cid in cell_ids_per_level[k + 1].items():
            center_idx = cells[cid].center_index
            parent_local = int(parent_of_local[center_idx])
            parent_cid = cell_ids_per_level[k][parent_local]
            child_to_parent[cid] = parent_cid
            cells[cid].parent = parent_cid
            cells[parent_cid].children.append(cid)
        remap = np.empty(len(cells), dtype=np.int64)
        for cid, pcid in child_to_parent.items():
            remap[cid] = pcid
        assignment[k] = remap[assignment[k + 1]]

    for k in range(max_depth + 1):
        for cid in levels[k]:
            cells[cid].point_indices = np.flatnonzero(
                assignment[k] == cid
            ).astype(np.intp)

    lattice = Lattice(measure, cells, levels, assignment, a0, c0, strict)
    _verify_conformity(lattice)
    classify_doubling(lattice)
    return lattice


def _verify_conformity(lattice: Lattice) -> None:
    """Re-verify the two ball inclusions per cell at the clamped radius.

    r(Q) is the lower clamp A0^-k (ball containment only shrinks with the
    radius, so the smallest admissible radius in the bracket is its lower
    edge).  A cell is conforming when support inter B(z_Q, r(Q)) stays
    inside Q and Q stays inside 28 B(Q).
    """
    measure = lattice.measure
    for cell in lattice.cells:
        inside = measure.ball_indices(cell.center, cell.radius)
        member = np.isin(inside, cell.point_indices, assume_unique=True)
        containment_ok = bool(member.all())
        span = np.linalg.norm(
            measure.points[cell.point_indices] - cell.center, axis=1
        )
        covering_ok = bool((span <= COVER_FACTOR * cell.radius).all())
        cell.conforming = containment_ok and covering_ok


def classify_doubling(lattice: Lattice) -> None:
    """Flag cells with mu(100 B(Q)) <= C0 * mu(B(Q))."""
    measure = lattice.measure
    for cell in lattice.cells:
        small = measure.ball_mass(cell.center, cell.radius)
        big = measure.ball_mass(cell.center, DOUBLING_FACTOR * cell.radius)
        cell.doubling = bool(big <= lattice.c0 * small)


def boundary_layer_mass(
    lattice: Lattice, cell: Cell, lam: float
) -> tuple[float, float]:
    """Inner and outer boundary-layer masses of a cell at thickness lam*l(Q).

    inner: atoms of Q within lam * l(Q) of the complement of Q;
    outer: atoms of 4 B_Q outside Q within lam * l(Q) of Q.
    The distance to an empty set is +inf, giving mass 0.
    """
    lam = float(lam)
    if not 0.0 < lam <= 1.0:
        raise ValueError(f"layer thickness must lie in (0, 1], got {lam}")
    measure = lattice.measure
    width = lam * cell.side
    members = cell.point_indices
    outside_mask = np.ones(measure.size, dtype=bool)
    outside_mask[members] = False
    outside = np.flatnonzero(outside_mask)

    if outside.size == 0:
        inner = 0.0
    else:
        tree = cKDTree(measure.points[outside])
        dist, _ = tree.query(measure.points[members], k=1)
        inner = float(np.sum(measure.weights[members][dist <= width]))

    ring = measure.ball_indices(cell.center, 4.0 * COVER_FACTOR * cell.radius)
    ring = ring[~np.isin(ring, members, assume_unique=True)]
    if ring.size == 0:
        outer = 0.0
    else:
        tree_q = cKDTree(measure.points[members])
        dist, _ = tree_q.query(measure.points[ring], k=1)
        outer = float(np.sum(measure.weights[ring][dist <= width]))
    return inner, outer


def boundary_audit(lattice: Lattice, lambdas, cell_ids=None) -> dict:
    """Max over cells of (inner+outer) / (sqrt(lam) * mu(3.5 B_Q)) per lam.

    A diagnostic for the thin-boundary property; values are recorded per
    input as regression constants rather than asserted universally.
    """
    measure = lattice.measure
    if cell_ids is None:
        cell_ids = [c.id for c in lattice.cells]
    out = {}
    for lam in lambdas:
        worst = 0.0
        for cid in cell_ids:
            cell = lattice.cells[cid]
            denom = measure.ball_mass(
                cell.center, BOUNDARY_BALL_FACTOR * COVER_FACTOR * cell.radius
            )
            if denom == 0.0:
                continue
            inner, outer = boundary_layer_mass(lattice, cell, lam)
            worst = max(worst, (inner + outer) / (math.sqrt(lam) * denom))
        out[float(lam)] = worst
    return out


def cover_by_doubling(lattice: Lattice, cell_id: int):
    """Maximal doubling cells at or below a cell, plus uncovered atoms.

    Greedy top-down: a doubling cell is emitted whole, a non-doubling cell
    recurses into its children, and non-doubling cells at the deepest level
    contribute their atoms to the uncovered remainder.
    """
    emitted: list[int] = []
    uncovered: list[np.ndarray] = []
    stack = [cell_id]
    while stack:
        cid = stack.pop()
        cell = lattice.cells[cid]
        if cell.doubling:
            emitted.append(cid)
        elif cell.children:
            stack.extend(reversed(cell.children))
        else:
            uncovered.append(cell.point_indices)
    emitted.sort()
    if uncovered:
        uncovered_idx = np.sort(np.concatenate(uncovered))
    else:
        uncovered_idx = np.empty(0, dtype=np.intp)
    return emitted, uncovered_idx


def check_lattice(lattice: Lattice) -> dict:
    """Exact invariant audit; the reference oracle for the lattice tests.

    Partition and nesting are set properties checked per level; the
    enlarged-ball disjointness uses the open-ball criterion
    |z - z'| >= 5 (r + r'), and the cell-diameter window is reported for
    cells with at least two atoms.
    """
    measure = lattice.measure
    n_pts = measure.size
    report = {
        "partition_ok": True,
        "nesting_ok": True,
        "radius_bracket_ok": True,
        "center_membership_ok": True,
        "five_b_violations": 0,
        "nonconforming": 0,
        "cells": len(lattice.cells),
        "diam_upper_ok": True,
        "diam_lower_violations": 0,
    }
    for k, ids in enumerate(lattice.levels):
        seen = np.zeros(n_pts, dtype=np.int64)
        for cid in ids:
            cell = lattice.cells[cid]
            seen[cell.point_indices] += 1
            if not (
                lattice.a0 ** (-k) - 1e-15
                <= cell.radius
                <= lattice.c0 * lattice.a0 ** (-k) + 1e-15
            ):
                report["radius_bracket_ok"] = False
            if cell.center_index not in set(cell.point_indices.tolist()):
                report["center_membership_ok"] = False
            if cell.parent is not None:
                parent = lattice.cells[cell.parent]
                if not np.isin(
                    cell.point_indices, parent.point_indices, assume_unique=True
                ).all():
                    report["nesting_ok"] = False
            pts = measure.points[cell.point_indices]
            if pts.shape[0] >= 2:
                diff = pts[:, None, :] - pts[None, :, :]
                diam = float(np.sqrt((diff**2).sum(-1).max()))
                if diam > cell.side * (1 + 1e-12):
                    report["diam_upper_ok"] = False
                if diam < cell.side / (COVER_FACTOR * lattice.c0):
                    report["diam_lower_violations"] += 1
        if not (seen == 1).all():
            report["partition_ok"] = False
        centers = np.array([lattice.cells[c].center for c in ids])
        radii = np.array([lattice.cells[c].radius for c in ids])
        if len(ids) > 1:
            tree = cKDTree(centers)
            pairs = tree.query_pairs(float(2 * FIVE_B * radii.max()), output_type="ndarray")
            for i, j in pairs:
                gap = float(np.linalg.norm(centers[i] - centers[j]))
                if gap < FIVE_B * (radii[i] + radii[j]):
                    report["five_b_violations"] += 1
    report["nonconforming"] = sum(1 for c in lattice.cells if not c.conforming)
    report["nonconforming_fraction"] = report["nonconforming"] / max(
        1, len(lattice.cells)
    )
    return report


def lattice_to_json(lattice: Lattice, path=None):
    """Serializable description of the lattice (optionally written to path)."""
    payload = {
        "a0": lattice.a0,
        "c0": lattice.c0,
        "strict": lattice.strict,
        "max_depth": lattice.max_depth,
        "levels": lattice.levels,
        "cells": [
            {
                "id": c.id,
                "level": c.level,
                "center_index": c.center_index,
                "center": [float(v) for v in c.center],
                "radius": c.radius,
                "side": c.side,
                "parent": c.parent,
                "children": list(c.children),
                "n_points": int(c.point_indices.size),
                "conforming": bool(c.conforming),
                "doubling": bool(c.doubling),
            }
            for c in lattice.cells
        ],
    }
    if path is not None:
        with open(path, "w", encoding="ascii") as fh:
            json.dump(payload, fh, sort_keys=True, indent=1)
            fh.write("\n")
    return payload
