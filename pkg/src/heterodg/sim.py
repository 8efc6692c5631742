"""Seeded long-horizon simulations and their post-processing.

Initial states sit at the healthy rest concentration with a localized
misfolded seed; post-processing turns trajectories into region biomarker
curves (misfolded fraction of total protein), threshold-based onset times,
and a traveling-front speed fit, and exports fields as VTK or CSV.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .assembly import assemble_forcing, assemble_system
from .timestepping import run


@dataclass(frozen=True)
class Region:
    """Named element set, given directly or as a geometric predicate.

    ``kind`` is "elements" (ids), "ball" (center + radius) or "box"
    (lo/hi corners); geometric regions collect the elements whose centroid
    they contain.
    """

    name: str
    kind: str
    data: tuple

    @classmethod
    def ball(cls, name, center, radius):
        return cls(name, "ball", (tuple(float(x) for x in center),
                                  float(radius)))

    @classmethod
    def box(cls, name, lo, hi):
        return cls(name, "box", (tuple(float(x) for x in lo),
                                 tuple(float(x) for x in hi)))

    @classmethod
    def elements(cls, name, ids):
        return cls(name, "elements", tuple(int(i) for i in ids))

    def resolve(self, mesh):
        """Element ids selected by this region; empty regions are an error."""
        cen = mesh.elem_centroids
        if self.kind == "elements":
            ids = np.asarray(self.data, dtype=np.int64)
            if ids.size and (ids.min() < 0 or ids.max() >= mesh.n_elements):
                raise ValueError(f"region {self.name!r} references missing "
                                 "elements")
        elif self.kind == "ball":
            center, radius = self.data
            dist = np.linalg.norm(cen - np.asarray(center), axis=1)
            ids = np.flatnonzero(dist <= radius)
        elif self.kind == "box":
            lo, hi = np.asarray(self.data[0]), np.asarray(self.data[1])
            inside = np.all((cen >= lo) & (cen <= hi), axis=1)
            ids = np.flatnonzero(inside)
        else:
            raise ValueError(f"unknown region kind {self.kind!r}")
        if ids.size == 0:
            raise ValueError(f"region {self.name!r} selects no elements")
        return ids


@dataclass
class BiomarkerSeries:
    """Misfolded fraction of one region over time; values lie in [0, 1]
    whenever both fields are nonnegative."""

    region: str
    times: np.ndarray
    values: np.ndarray

    def crossing(self, level):
        """First time the curve reaches ``level`` (linear interpolation),
        or None if it never does."""
        above = self.values >= level
        if not above.any():
            return None
        k = int(np.argmax(above))
        if k == 0:
            return float(self.times[0])
        t0, t1 = self.times[k - 1], self.times[k]
        v0, v1 = self.values[k - 1], self.values[k]
        return float(t0 + (level - v0) / (v1 - v0) * (t1 - t0))


def seeded_initial_state(space, params, seed_region, seed_value):
    """Healthy field at its rest value k0/k1 everywhere; misfolded field
    equal to ``seed_value`` on the seed elements and zero elsewhere.

    Both fields are element-wise constant and therefore exactly
    representable in the space.
    """
    mesh = space.mesh
    ids = seed_region.resolve(mesh)
    c_rest = params.k0 / params.k1
    c0 = space.project(lambda x: np.full(x.shape[0], c_rest))
    q_elem = np.zeros(mesh.n_elements)
    q_elem[ids] = float(seed_value)

    vt = space.volume_tables(2 * space.p + 1)
    rhs = np.einsum("eq,eqi->ei", vt.w * q_elem[:, None], vt.phi)
    gram = np.einsum("eq,eqi,eqj->eij", vt.w, vt.phi, vt.phi)
    q0 = np.linalg.solve(gram, rhs[..., None])[..., 0].ravel()
    return c0, q0


def region_integrals(space, coeffs, ids):
    """Integral of a discrete field over a set of elements."""
    ints = np.einsum("ei,ei->e", space.phi_integrals()[ids],
                     space.blocks(coeffs)[ids])
    return float(ints.sum())


def biomarker(space, c, q, region_ids):
    """Misfolded fraction int(q) / int(c + q) over the region."""
    num = region_integrals(space, q, region_ids)
    den = num + region_integrals(space, c, region_ids)
    if den <= 0:
        raise ValueError(
            "biomarker undefined: total concentration is not positive "
            "(nonphysical state)"
        )
    return num / den


def biomarker_series(space, traj, region):
    ids = region.resolve(space.mesh)
    values = np.array([
        biomarker(space, c, q, ids) for c, q in traj.states
    ])
    return BiomarkerSeries(region.name, np.asarray(traj.times), values)


def staging(space, traj, regions, q_crit, criterion="average"):
    """Onset time per region: first snapshot whose misfolded level exceeds
    ``q_crit`` (infinity if never reached), sorted by onset.

    ``criterion`` is "average" (region mean of q) or "max" (largest element
    average in the region).
    """
    if criterion not in ("average", "max"):
        raise ValueError(f"unknown staging criterion {criterion!r}")
    out = []
    for region in regions:
        ids = region.resolve(space.mesh)
        vols = space.mesh.elem_measures[ids]
        onset = np.inf
        for t, (c, q) in zip(traj.times, traj.states):
            avgs = space.element_averages(q)[ids]
            level = (avgs * vols).sum() / vols.sum() \
                if criterion == "average" else avgs.max()
            if level > q_crit:
                onset = t
                break
        out.append((region.name, float(onset)))
    out.sort(key=lambda item: item[1])
    return out


@dataclass
class FrontFit:
    speed: float
    times: np.ndarray
    positions: np.ndarray


def front_positions(space, traj, threshold, axis=0):
    """Leading threshold crossing of the misfolded field along an axis.

    Element averages are pooled into slabs of equal axis coordinate; the
    front is the interpolated position where the slab profile falls through
    ``threshold``.  Positions are NaN before a front exists and after it
    leaves the domain.
    """
    mesh = space.mesh
    coord = mesh.elem_centroids[:, axis]
    slabs = np.unique(np.round(coord, 9))
    slab_of = np.searchsorted(slabs, np.round(coord, 9))
    vols = mesh.elem_measures
    positions = np.full(len(traj.times), np.nan)
    for k, (_c, q) in enumerate(traj.states):
        avg = space.element_averages(q)
        prof = np.bincount(slab_of, weights=avg * vols, minlength=len(slabs))
        prof /= np.bincount(slab_of, weights=vols, minlength=len(slabs))
        above = prof >= threshold
        if not above.any() or above.all():
            continue
        # the furthest slab above threshold, interpolated to the next one
        idx = int(np.flatnonzero(above).max())
        if idx == len(slabs) - 1:
            continue
        x0, x1 = slabs[idx], slabs[idx + 1]
        v0, v1 = prof[idx], prof[idx + 1]
        positions[k] = x0 + (v0 - threshold) / (v0 - v1) * (x1 - x0)
    return np.asarray(traj.times), positions


def front_speed(space, traj, threshold, axis=0, window=(0.2, 0.8)):
    """Least-squares front speed over the steady-propagation window.

    Only positions inside the central ``window`` fraction of the domain
    enter the fit, which excludes seeding transients and boundary
    interaction.
    """
    times, positions = front_positions(space, traj, threshold, axis)
    if np.all(np.isnan(positions)):
        raise ValueError("front never forms at the requested threshold")
    lo = space.mesh.vertices[:, axis].min()
    hi = space.mesh.vertices[:, axis].max()
    x_lo = lo + window[0] * (hi - lo)
    x_hi = lo + window[1] * (hi - lo)
    keep = ~np.isnan(positions) & (positions >= x_lo) & (positions <= x_hi)
    if keep.sum() < 3:
        raise ValueError(
            f"measurement window too short: {int(keep.sum())} usable "
            "front positions"
        )
    slope = np.polyfit(times[keep], positions[keep], 1)[0]
    return FrontFit(float(slope), times[keep], positions[keep])


# -- field export -----------------------------------------------------------


def export_fields(space, c, q, path, fmt="vtk"):
    """Write element-averaged fields: legacy-VTK sub-simplex cells or a CSV
    of element centroids."""
    if fmt == "vtk":
        _export_vtk(space, c, q, path)
    elif fmt == "csv":
        _export_csv(space, c, q, path)
    else:
        raise ValueError(f"unknown export format {fmt!r}")


def _export_vtk(space, c, q, path):
    mesh = space.mesh
    avg_c = space.element_averages(c)
    avg_q = space.element_averages(q)
    apex = np.array([mesh.vertices[v].mean(axis=0)
                     for v in mesh.elem_vertices])
    n_pts = mesh.n_vertices + mesh.n_elements
    cells = []
    cell_elem = []
    for e, faces in enumerate(mesh.elem_faces):
        for f in faces:
            ids = [mesh.n_vertices + e] + list(mesh.face_vertices[f])
            cells.append(ids)
            cell_elem.append(e)
    cell_type = 5 if mesh.dim == 2 else 10        # triangle / tetrahedron
    with open(path, "w") as out:
        out.write("# vtk DataFile Version 3.0\n")
        out.write("heterodimer fields\n")
        out.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        out.write(f"POINTS {n_pts} double\n")
        for v in mesh.vertices:
            coords = list(v) + [0.0] * (3 - mesh.dim)
            out.write(" ".join(f"{x:.17g}" for x in coords) + "\n")
        for a in apex:
            coords = list(a) + [0.0] * (3 - mesh.dim)
            out.write(" ".join(f"{x:.17g}" for x in coords) + "\n")
        total = sum(len(ids) + 1 for ids in cells)
        out.write(f"CELLS {len(cells)} {total}\n")
        for ids in cells:
            out.write(" ".join(str(i) for i in [len(ids)] + ids) + "\n")
        out.write(f"CELL_TYPES {len(cells)}\n")
        for _ in cells:
            out.write(f"{cell_type}\n")
        out.write(f"CELL_DATA {len(cells)}\n")
        for name, avg in (("c", avg_c), ("q", avg_q)):
            out.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            for e in cell_elem:
                out.write(f"{avg[e]:.17g}\n")


def _export_csv(space, c, q, path):
    mesh = space.mesh
    avg_c = space.element_averages(c)
    avg_q = space.element_averages(q)
    cols = ["x", "y", "z"][: mesh.dim]
    with open(path, "w", newline="") as out:
        writer = csv.writer(out)
        writer.writerow(cols + ["c", "q"])
        for e in range(mesh.n_elements):
            row = [f"{x:.17g}" for x in mesh.elem_centroids[e]]
            writer.writerow(row + [f"{avg_c[e]:.17g}", f"{avg_q[e]:.17g}"])


def write_biomarker_csv(series_list, path):
    with open(path, "w", newline="") as out:
        writer = csv.writer(out)
        writer.writerow(["time", "region", "B"])
        for series in series_list:
            for t, v in zip(series.times, series.values):
                writer.writerow([f"{t:.17g}", series.region, f"{v:.17g}"])


def write_staging_csv(onsets, path):
    with open(path, "w", newline="") as out:
        writer = csv.writer(out)
        writer.writerow(["region", "onset_time"])
        for name, onset in onsets:
            writer.writerow([name, f"{onset:.17g}"])


# -- scenario driver --------------------------------------------------------


def run_seeded(space, params, gamma0, scheme_cfg, seed_region, seed_value,
               record_stride=10, callbacks=()):
    """Assemble, seed and integrate a no-flux scenario.

    The forcing is the constant production term of the healthy species.
    Returns the trajectory and the assembled operators.
    """
    ops = assemble_system(space, params, gamma0)
    c0, q0 = seeded_initial_state(space, params, seed_region, seed_value)
    f_c = assemble_forcing(space, lambda x, t: np.full(x.shape[0], params.k0),
                           0.0)
    f_q = np.zeros(space.n_dofs)

    def forcing(_t):
        return f_c, f_q

    traj = run(c0, q0, scheme_cfg, ops, forcing, callbacks=callbacks,
               record_stride=record_stride)
    return traj, ops


def sensitivity_diffusion_split(space, params_split, gamma0, scheme_cfg,
                                seed_region, seed_value, record_stride=10):
    """Compare a split-diffusivity run against its equal-coefficient baseline.

    The baseline uses the misfolded species' extracellular diffusivity for
    both species; every other setting is shared.  Returns both global
    biomarker series and the delay of the split run at the 0.5 crossing
    (None when either curve never reaches it).
    """
    from dataclasses import replace

    params_base = replace(params_split, d_ext_c=params_split.d_ext_q)
    whole = Region.box("domain", space.mesh.vertices.min(axis=0) - 1.0,
                       space.mesh.vertices.max(axis=0) + 1.0)
    series = []
    for params in (params_base, params_split):
        traj, _ops = run_seeded(space, params, gamma0, scheme_cfg,
                                seed_region, seed_value, record_stride)
        series.append(biomarker_series(space, traj, whole))
    base, split = series
    t_base = base.crossing(0.5)
    t_split = split.crossing(0.5)
    shift = None if t_base is None or t_split is None else t_split - t_base
    return base, split, shift
