"""Range-only recovery of the relative robot formation.

Positions are estimated in a gauge-fixed frame A: robot 0 pinned at the
origin, robot 1 on the +x axis, robot 2 on the z=0 plane with y >= 0.
A pairwise distance matrix determines 3-D positions only up to a global
reflection, so every estimate carries its mirror twin (z negated); the
anchor alignment stage picks between the two.

The residual is the L1 misfit of squared distances,

    sum_i sum_{j != i} | r_ij^2 - ||x_i - x_j||^2 |,

minimized by iteratively reweighted least squares over a smooth surrogate,
with classical multidimensional scaling as the cold-start initializer.
"""

import math
from dataclasses import dataclass

import numpy as np

from .ranging import RangeSet

# Second/third singular value of the centered formation below which the
# geometry is treated as degenerate / planar (meters).
DEGENERATE_TOL = 0.05
TRIANGLE_SLACK = 1.0


@dataclass(frozen=True)
class StructureEstimate:
    """A gauge-fixed formation estimate and its reflection twin."""

    step: int
    positions: np.ndarray  # (n, 3) in frame A
    mirror_positions: np.ndarray  # (n, 3), z negated
    residual: float
    planar: bool

    def __post_init__(self):
        p = np.array(self.positions, dtype=float)
        m = np.array(self.mirror_positions, dtype=float)
        if p.ndim != 2 or p.shape[1] != 3 or p.shape != m.shape:
            raise ValueError("positions must be (n, 3) arrays")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(m))):
            raise ValueError("structure has non-finite entries")
        p.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "mirror_positions", m)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def distances(self) -> np.ndarray:
        return pairwise_distances(self.positions)


def pairwise_distances(positions) -> np.ndarray:
    p = np.asarray(positions, dtype=float)
    diff = p[:, None, :] - p[None, :, :]
    return np.sqrt((diff**2).sum(axis=2))


def default_zeta(n: int) -> float:
    """Default structure acceptance threshold, 0.1 per ordered pair."""
    return 0.1 * n * (n - 1)


def _range_matrix(ranges) -> np.ndarray:
    """Full (n, n) distance matrix from a RangeSet or a plain array."""
    if isinstance(ranges, RangeSet):
        if not ranges.all_valid:
            raise ValueError("incomplete range set")
        return ranges.distances
    r = np.asarray(ranges, dtype=float)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise ValueError("ranges must be a square matrix")
    if not np.all(np.isfinite(r[~np.eye(r.shape[0], dtype=bool)])):
        raise ValueError("incomplete range set")
    return r


def structure_residual(positions, ranges) -> float:
    """L1 misfit of squared distances over all ordered pairs."""
    r = _range_matrix(ranges)
    p = np.asarray(positions, dtype=float)
    if p.shape != (r.shape[0], 3):
        raise ValueError("positions do not match the range matrix")
    d2 = ((p[:, None, :] - p[None, :, :]) ** 2).sum(axis=2)
    off = ~np.eye(r.shape[0], dtype=bool)
    return float(np.abs(r**2 - d2)[off].sum())


def accept_structure(estimate: StructureEstimate, zeta=None) -> bool:
    """Gate an estimate on its residual (strict comparison against zeta)."""
    if zeta is None:
        zeta = default_zeta(estimate.n)
    return estimate.residual < zeta


def mds_embedding(distances) -> np.ndarray:
    """Classical MDS: 3-D embedding of a distance matrix.

    Double-centers the squared distances and keeps the top three
    non-negative eigenpairs. Used only as the cold-start initializer.
    """
    d = np.asarray(distances, dtype=float)
    n = d.shape[0]
    d2 = d**2
    J = np.eye(n) - np.full((n, n), 1.0 / n)
    B = -0.5 * (J @ d2 @ J)
    eigvals, eigvecs = np.linalg.eigh(B)
    order = np.argsort(eigvals)[::-1][:3]
    vals = np.clip(eigvals[order], 0.0, None)
    pts = eigvecs[:, order] * np.sqrt(vals)[None, :]
    if pts.shape[1] < 3:
        pts = np.hstack([pts, np.zeros((n, 3 - pts.shape[1]))])
    return pts


def gauge_normalize(positions) -> np.ndarray:
    """Rotate/translate positions into the canonical frame-A gauge.

    Only proper rigid motions are used, so pairwise distances are
    preserved exactly and the constrained coordinates end up pinned:
    p[0] = 0, p[1] = (d01, 0, 0), p[2] = (x, y>=0, 0).
    """
    p = np.array(positions, dtype=float)
    if p.ndim != 2 or p.shape[1] != 3 or p.shape[0] < 3:
        raise ValueError("gauge normalization needs at least 3 points in 3-D")
    p -= p[0]

    # rotate robot 1 onto the +x axis
    v = p[1]
    norm = np.linalg.norm(v)
    if norm > 1e-12:
        u = v / norm
        c = u[0]
        axis = np.cross(u, [1.0, 0.0, 0.0])
        s = np.linalg.norm(axis)
        if s > 1e-12:
            axis = axis / s
            K = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
            R = np.eye(3) + math.sin(math.atan2(s, c)) * K + (1 - c) * (K @ K)
            p = p @ R.T
        elif c < 0.0:  # anti-parallel: half turn about z
            p = p @ np.diag([-1.0, -1.0, 1.0]).T
    # rotate about x so robot 2 lands on z = 0 with y >= 0
    y, z = p[2, 1], p[2, 2]
    rho = math.hypot(y, z)
    if rho > 1e-12:
        cx, sx = y / rho, z / rho
        Rx = np.array([[1.0, 0.0, 0.0], [0.0, cx, sx], [0.0, -sx, cx]])
        p = p @ Rx.T

    # pin the constrained coordinates exactly
    p[0] = 0.0
    p[1, 1] = p[1, 2] = 0.0
    p[1, 0] = abs(p[1, 0])
    p[2, 2] = 0.0
    p[2, 1] = max(p[2, 1], 0.0)
    return p


def _check_triangle_sanity(r: np.ndarray) -> None:
    n = r.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(n):
                if k == i or k == j:
                    continue
                if r[i, j] > r[i, k] + r[k, j] + TRIANGLE_SLACK:
                    raise ValueError(
                        f"range triangle sanity violated for robots ({i}, {j}, {k})"
                    )


def _free_parameter_index(n: int) -> np.ndarray:
    """Flat coordinate indices that are free under the frame-A gauge."""
    free = [3 * 1 + 0, 3 * 2 + 0, 3 * 2 + 1]  # x1x, x2x, x2y (0-based robots)
    for i in range(3, n):
        free.extend([3 * i + 0, 3 * i + 1, 3 * i + 2])
    return np.asarray(free, dtype=int)


def estimate_structure(ranges, init=None, *, max_iterations=100, tol=1e-10,
                       irls_delta=1e-6, step: int | None = None) -> StructureEstimate:
    """Estimate the formation from a fully valid set of pairwise ranges.

    Args:
        ranges: RangeSet (all pairs valid) or (n, n) distance matrix.
        init: optional (n, 3) warm start, e.g. the previous accepted
            structure; classical MDS is used otherwise.
        max_iterations: outer IRLS/Gauss-Newton iteration cap.
        tol: stop when the L1 residual improves by less than this.

    Raises:
        ValueError: fewer than 4 robots, missing pairs, triangle-sanity
            violations, or a (near-)degenerate final geometry.
        RuntimeError: optimizer divergence.
    """
    r = _range_matrix(ranges)
    n = r.shape[0]
    if n < 4:
        raise ValueError("structure estimation needs at least 4 robots")
    _check_triangle_sanity(r)
    if step is None:
        step = ranges.step if isinstance(ranges, RangeSet) else 0

    if init is not None:
        p = gauge_normalize(np.asarray(init, dtype=float))
    else:
        p = gauge_normalize(mds_embedding(r))

    iu, ju = np.triu_indices(n, k=1)
    r2 = r[iu, ju] ** 2
    free = _free_parameter_index(n)

    def residual_l1(pos):
        d2 = ((pos[iu] - pos[ju]) ** 2).sum(axis=1)
        return 2.0 * float(np.abs(r2 - d2).sum())

    initial = residual_l1(p)
    current = initial
    mu = 1e-6
    for _ in range(max_iterations):
        diff = p[iu] - p[ju]
        f = r2 - (diff**2).sum(axis=1)
        w = 2.0 / (np.abs(f) + irls_delta)
        # Jacobian of f over all 3n coordinates, then restricted to free ones
        J = np.zeros((len(iu), 3 * n))
        for k in range(len(iu)):
            J[k, 3 * iu[k] : 3 * iu[k] + 3] = -2.0 * diff[k]
            J[k, 3 * ju[k] : 3 * ju[k] + 3] = 2.0 * diff[k]
        Jf = J[:, free]
        H = (Jf * w[:, None]).T @ Jf
        g = Jf.T @ (w * f)
        accepted = False
        for _ in range(12):
            try:
                delta = np.linalg.solve(H + mu * np.eye(len(free)), -g)
            except np.linalg.LinAlgError:
                mu *= 10.0
                continue
            cand = p.copy()
            cand.reshape(-1)[free] += delta
            cand_res = residual_l1(cand)
            if cand_res < current:
                p = cand
                improvement = current - cand_res
                current = cand_res
                mu = max(mu / 3.0, 1e-12)
                accepted = True
                break
            mu *= 10.0
            if mu > 1e12:
                break
        if not accepted or improvement < tol:
            break

    if not math.isfinite(current) or current > 10.0 * max(initial, 1e-12):
        raise RuntimeError("structure optimization failed")

    p = gauge_normalize(p)
    centered = p - p.mean(axis=0)
    svals = np.linalg.svd(centered, compute_uv=False)
    if svals[1] < DEGENERATE_TOL:
        raise ValueError("degenerate configuration")
    planar = bool(svals[2] < DEGENERATE_TOL)
    mirror = p * np.array([1.0, 1.0, -1.0])
    return StructureEstimate(
        step=step,
        positions=p,
        mirror_positions=mirror,
        residual=structure_residual(p, r),
        planar=planar,
    )
