"""Inequality checks: square-function bounds, Cotlar-type maximal control,
pointwise domination of tree operators, and the capacity lower bound.

Every check returns a structured record with the inputs needed to reproduce
it and a finite headline number (usually a ratio).  Constants the theory
leaves unspecified become measured values; acceptance is stability of those
values under refinement, handled by the test suite and the baseline
comparison below.
"""

from __future__ import annotations

import math

import numpy as np

from ._util import geometric_grid, parallel_map
from .beta import BetaProfile, _plane_residual_sq, _weighted_plane, jones_integral
from .corona import TreeGeometry
from .lattice import COVER_FACTOR
from .measure import WeightedPointMeasure
from .operators import (
    k_r_chain,
    m_tilde,
    t_phi_eps,
    t_phi_star,
    truncated_field,
)

__all__ = [
    "jones_field",
    "main_lemma_check",
    "t1_ball_check",
    "cotlar_check",
    "pointwise_domination_check",
    "capacity_lower_bound",
    "make_report",
    "compare_baseline",
]

REPORT_SCHEMA = "betascope-report/1"


def jones_field(measure: WeightedPointMeasure, r_lo=None, r_hi=None,
                scales_per_octave: int = 4, threads: int = 1) -> np.ndarray:
    """Per-atom multiscale flatness energy over [r_lo, r_hi]."""
    if measure.is_empty:
        return np.zeros(0)
    if r_lo is None:
        # same half-step offset as the default truncation grid: scale radii
        # must not land on exact inter-atom distances, or ball membership
        # flips under float-level perturbations of the coordinates
        r_lo = measure.r_min * 2.0 ** (1.0 / (2 * scales_per_octave))
    else:
        r_lo = float(r_lo)
    r_hi = measure.diameter if r_hi is None else float(r_hi)
    if r_hi <= r_lo:
        return np.zeros(measure.size)

    def one(i):
        x = measure.points[i]
        return jones_integral(
            measure, x, r_lo, r_hi, scales_per_octave=scales_per_octave,
            profile=BetaProfile(measure, x),
        )

    return np.array(parallel_map(one, range(measure.size), threads))


def _field_norms_sq(kernel, measure, eps_grid, threads: int) -> np.ndarray:
    """For each cutoff, the weighted square sum of |T_eps| over the atoms."""

    def one(i):
        row = truncated_field(kernel, measure, measure.points[i], eps_grid)[0]
        return np.sum(row**2, axis=1)

    rows = parallel_map(one, range(measure.size), threads)
    out = np.zeros(len(eps_grid))
    for w, row in zip(measure.weights, rows):
        out += w * row
    return out


def main_lemma_check(measure, kernel, eps_grid=None,
                     scales_per_octave: int = 4, threads: int = 1) -> dict:
    """Square-function bound: worst truncation energy against mass + flatness.

    lhs is the max over cutoffs of sum_i w_i |T_eps(x_i)|^2; rhs is the
    total mass plus the atom-weighted flatness energy up to the diameter.
    """
    if measure.is_empty:
        raise ValueError("measure is empty")
    if eps_grid is None:
        hi = max(measure.diameter, measure.r_min)
        # the half-step offset keeps grid points away from dyadic multiples
        # of the minimum gap, where the truncation jumps and a float-level
        # perturbation of the input could flip an atom across the cutoff
        lo = measure.r_min / 2 * 2.0 ** (1.0 / (2 * scales_per_octave))
        eps_grid = geometric_grid(lo, hi, scales_per_octave)
    eps_grid = np.asarray(eps_grid, dtype=float)
    energies = _field_norms_sq(kernel, measure, eps_grid, threads)
    lhs = float(np.max(energies))
    jones = jones_field(measure, scales_per_octave=scales_per_octave,
                        threads=threads)
    rhs = measure.total_mass + float(measure.weights @ jones)
    return {
        "name": "main_lemma",
        "lhs": lhs,
        "rhs": rhs,
        "ratio": lhs / rhs,
        "samples": int(measure.size * eps_grid.size),
        "params": {
            "kernel": kernel.name,
            "eps_grid": [float(e) for e in eps_grid],
            "scales_per_octave": scales_per_octave,
        },
    }


def t1_ball_check(measure, kernel, balls, scales_per_octave: int = 4,
                  threads: int = 1) -> dict:
    """main_lemma_check on ball restrictions; the worst ratio over the sample."""
    ratios = []
    for ball in balls:
        part = measure.restrict_ball(ball)
        if part.is_empty:
            ratios.append(0.0)
            continue
        rec = main_lemma_check(part, kernel,
                               scales_per_octave=scales_per_octave,
                               threads=threads)
        ratios.append(rec["ratio"])
    worst = max(ratios) if ratios else 0.0
    return {
        "name": "t1_balls",
        "lhs": worst,
        "rhs": 1.0,
        "ratio": worst,
        "samples": len(ratios),
        "params": {"kernel": kernel.name, "per_ball": ratios},
    }


def _strided(indices: np.ndarray, cap: int) -> np.ndarray:
    if indices.size <= cap:
        return indices
    return indices[:: max(1, indices.size // cap)][:cap]


def cotlar_check(measure, kernel, corona, top_id: int, s: float = 1.0,
                 max_samples: int = 128, f=None, threads: int = 1) -> dict:
    """Maximal suppressed operator against maximal functions of its output.

    With sigma the restriction to B0(R) and Phi_R the tree suppression:
    lhs(x) = sup_eps |T_{Phi,eps}(f sigma)(x)| and
    rhs(x) = Mtilde_sigma(|T_Phi(f sigma)|^s)(x)^(1/s) + Mtilde_{sigma,3/2}f(x),
    sampled over atoms of sigma.  Samples with rhs = 0 < lhs are excluded
    and counted in the record.
    """
    if s not in (1.0, 0.5):
        raise ValueError(f"s must be 1 or 0.5, got {s}")
    geometry = TreeGeometry(corona, top_id)
    b0 = geometry.b0
    sigma = measure.restrict_ball(b0)
    if sigma.is_empty:
        return {"name": "cotlar", "lhs": 0.0, "rhs": 0.0, "ratio": 0.0,
                "samples": 0, "params": {"kernel": kernel.name, "s": s,
                                         "flagged": 0, "top": top_id}}
    phi_sigma = geometry.phi(sigma.points)
    f_sigma = np.ones(sigma.size) if f is None else np.asarray(f, dtype=float)

    # suppressed operator applied to f sigma, at every sigma atom
    def t_phi_at(j):
        dists = np.linalg.norm(sigma.points - sigma.points[j], axis=1)
        positive = dists[dists > 0]
        if positive.size == 0:
            return 0.0
        eps = float(positive.min()) / 2.0
        val = t_phi_eps(kernel, sigma, sigma.points[j], eps,
                        phi_sigma[j], phi_sigma, f_sigma)
        return float(np.linalg.norm(val))

    t_vals = np.array(parallel_map(t_phi_at, range(sigma.size), threads))

    sample = _strided(np.arange(sigma.size), max_samples)

    def one(j):
        x = sigma.points[j]
        lhs, _ = t_phi_star(kernel, sigma, x, phi_sigma[j], phi_sigma, f_sigma)
        inner = m_tilde(sigma, t_vals**s, x, variant="plain")
        rhs = inner ** (1.0 / s) + m_tilde(sigma, f_sigma, x, variant="3/2")
        return lhs, rhs

    pairs = parallel_map(one, sample, threads)
    flagged = 0
    best = 0.0
    worst_lhs = worst_rhs = 0.0
    for lhs, rhs in pairs:
        if rhs == 0.0:
            if lhs > 0.0:
                flagged += 1
            continue
        if lhs / rhs > best:
            best, worst_lhs, worst_rhs = lhs / rhs, lhs, rhs
    return {
        "name": "cotlar",
        "lhs": worst_lhs,
        "rhs": worst_rhs,
        "ratio": best,
        "samples": int(sample.size),
        "params": {"kernel": kernel.name, "s": s, "flagged": flagged,
                   "top": top_id},
    }


def pointwise_domination_check(measure, kernel, corona, bump, top_id: int,
                               max_samples: int = 128,
                               threads: int = 1) -> dict:
    """Excess of the tree operator over the suppressed maximal operator.

    Per sampled atom x of the tree root R:
    c_x = max(0, |K_R(x)| - T_{Phi_R,*}(chi_{B0} mu)(x)) / theta(B_R);
    the record's ratio is the largest c_x.
    """
    geometry = TreeGeometry(corona, top_id)
    top_cell = corona.lattice.cells[top_id]
    sigma = measure.restrict_ball(geometry.b0)
    phi_sigma = geometry.phi(sigma.points)
    theta_ref = corona.theta_ref.get(top_id)
    if theta_ref is None:
        radius = COVER_FACTOR * top_cell.radius
        theta_ref = measure.ball_mass(top_cell.center, radius) / radius**measure.target_dim
    sample = _strided(top_cell.point_indices, max_samples)

    def one(atom):
        x = measure.points[atom]
        k_r = float(np.linalg.norm(k_r_chain(corona, kernel, bump, top_id,
                                             int(atom))))
        phi_x = float(geometry.phi(x[None, :])[0])
        star, _ = t_phi_star(kernel, sigma, x, phi_x, phi_sigma)
        return max(0.0, k_r - star) / theta_ref

    excesses = parallel_map(one, sample, threads)
    worst = max(excesses) if excesses else 0.0
    return {
        "name": "pointwise_domination",
        "lhs": worst,
        "rhs": 1.0,
        "ratio": worst,
        "samples": int(sample.size),
        "params": {"kernel": kernel.name, "top": top_id,
                   "bump_a0": bump.a0},
    }


def capacity_lower_bound(candidates, scales_per_octave: int = 8,
                         threads: int = 1) -> dict:
    """Largest admissible multiple of each candidate measure, and its mass.

    Per support atom x of a candidate: A(x) is the sup over radii of the
    density theta(x, r), restricted to r >= max(r_min, diam/sqrt(N)) so a
    single atom's mass spike below the sampling scale cannot dominate;
    I(x) is the flatness energy over [r_min, diam] plus the exact tail
    integral beyond the diameter, where the in-ball set is frozen:
    there beta(x,r)^2 theta(x,r) = res * mass * r^(-2n-2) with res the
    whole-set plane residual, and the dr/r integral from diam to infinity
    is res * mass / ((2n+2) diam^(2n+2)).  The admissible multiple solves
    t A + t^2 I = 1, evaluated in the cancellation-free form
    t = 2/(A + sqrt(A^2 + 4 I)); the reported bound is t* ||mu|| for the
    worst atom, and the best candidate wins.
    """
    if isinstance(candidates, WeightedPointMeasure):
        candidates = [candidates]
    if not candidates:
        raise ValueError("need at least one candidate measure")
    entries = []
    for idx, mu in enumerate(candidates):
        if mu.is_empty:
            raise ValueError(f"candidate {idx} is empty")
        n = mu.target_dim
        diam = mu.diameter
        sub_resolution = diam <= mu.r_min
        if sub_resolution:
            floor = mu.r_min
            jones = np.zeros(mu.size)
            tail = 0.0
        else:
            floor = max(mu.r_min, diam / math.sqrt(mu.size))
            jones = jones_field(mu, mu.r_min, diam,
                                scales_per_octave=scales_per_octave,
                                threads=threads)
            centroid, basis, _ = _weighted_plane(mu.points, mu.weights, n)
            res = _plane_residual_sq(mu.points - centroid, mu.weights, basis)
            tail = res * mu.total_mass / ((2 * n + 2) * diam ** (2 * n + 2))

        def density_at(i):
            return mu.sup_density(mu.points[i], floor)

        dens = np.array(parallel_map(density_at, range(mu.size), threads))
        energy = jones + tail
        t_vals = 2.0 / (dens + np.sqrt(dens**2 + 4.0 * energy))
        worst = int(np.argmin(t_vals))
        t_star_val = float(t_vals[worst])
        entries.append({
            "candidate": idx,
            "t_star": t_star_val,
            "bound": t_star_val * mu.total_mass,
            "worst_atom": worst,
            "density_floor": floor,
            "tail": tail,
            "sub_resolution": sub_resolution,
            "size": mu.size,
        })
    best = max(e["bound"] for e in entries)
    return {
        "name": "capacity",
        "lhs": best,
        "rhs": 1.0,
        "ratio": best,
        "samples": len(entries),
        "params": {"scales_per_octave": scales_per_octave,
                   "candidates": entries},
    }


def make_report(input_desc: dict, checks: list, config: dict,
                baseline_failures=None, stamp=None) -> dict:
    """Assemble the serializable report envelope."""
    return {
        "schema": REPORT_SCHEMA,
        "input": input_desc,
        "config": config,
        "checks": {rec["name"]: rec for rec in checks},
        "baseline_failures": baseline_failures,
        "generated_at": stamp,
    }


def compare_baseline(report: dict, baseline: dict) -> list:
    """Mismatches of report check fields against stored baseline entries.

    Baseline format: {"checks": {name: {"value": v, "rel_tol": t,
    "field": "ratio"}}}; field defaults to "ratio".
    """
    failures = []
    for name, entry in baseline.get("checks", {}).items():
        record = report["checks"].get(name)
        field = entry.get("field", "ratio")
        if record is None or field not in record:
            failures.append(f"{name}: missing from report")
            continue
        actual = float(record[field])
        target = float(entry["value"])
        rel_tol = float(entry.get("rel_tol", 0.2))
        if not abs(actual - target) <= rel_tol * abs(target):
            failures.append(
                f"{name}.{field}: got {actual:.6g}, baseline {target:.6g} "
                f"(rel_tol {rel_tol})"
            )
    return failures
