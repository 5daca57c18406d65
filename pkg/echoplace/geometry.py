"""
Vectorized geometry helpers shared by the solvers: axis-aligned boxes, ray/triangle intersection and
coplanar surface grouping.
"""
from dataclasses import dataclass

import numpy as np

__all__ = (
    'Plane',
    'box_triangles',
    'intersect_rays',
    'plane_groups',
    'points_in_boxes',
    'points_in_triangles',
    'segments_blocked',
    'triangle_normals',
)

# Barycentric slack so that rays hitting a shared edge never slip between two triangles
EDGE_TOLERANCE = 1e-9

# Upper bound on rays x triangles evaluated at once
CHUNK_ELEMENTS = 262_144


@dataclass(frozen=True, eq=False)
class Plane:
    """
    A set of coplanar triangles. Points x on the plane satisfy normal . x = offset.
    """
    normal: np.ndarray
    offset: float
    triangles: np.ndarray

    def distance(self, points):
        return np.asarray(points) @ self.normal - self.offset

    def mirror(self, point):
        return point - 2.0 * self.distance(point) * self.normal


def box_triangles(lo, hi):
    """
    Return the 12 triangles bounding the box [lo, hi] as a (12, 3, 3) array.
    """
    (x0, y0, z0), (x1, y1, z1) = lo, hi
    corners = np.array([
        (x0, y0, z0), (x1, y0, z0), (x1, y1, z0), (x0, y1, z0),
        (x0, y0, z1), (x1, y0, z1), (x1, y1, z1), (x0, y1, z1),
    ], dtype=float)
    faces = (
        (0, 2, 1), (0, 3, 2),  # z = lo
        (4, 5, 6), (4, 6, 7),  # z = hi
        (0, 1, 5), (0, 5, 4),  # y = lo
        (3, 7, 6), (3, 6, 2),  # y = hi
        (0, 4, 7), (0, 7, 3),  # x = lo
        (1, 2, 6), (1, 6, 5),  # x = hi
    )
    return corners[np.array(faces)]


def points_in_boxes(points, los, his, tolerance=1e-9):
    """
    Return a boolean mask of the points lying inside (or on) any of the boxes.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    los = np.atleast_2d(np.asarray(los, dtype=float))
    his = np.atleast_2d(np.asarray(his, dtype=float))
    if not len(los):
        return np.zeros(len(points), dtype=bool)
    inside = (
        (points[:, None, :] >= los[None, :, :] - tolerance) &
        (points[:, None, :] <= his[None, :, :] + tolerance)
    )
    return inside.all(axis=2).any(axis=1)


def triangle_normals(triangles):
    """
    Unit normals of a (T, 3, 3) triangle array (right-handed vertex order).
    """
    normals = np.cross(triangles[:, 1] - triangles[:, 0], triangles[:, 2] - triangles[:, 0])
    lengths = np.linalg.norm(normals, axis=1, keepdims=True)
    return normals / np.where(lengths > 0, lengths, 1.0)


def _intersect_chunk(origins, directions, triangles, t_min, t_max):
    v0 = triangles[:, 0]
    e1 = triangles[:, 1] - v0
    e2 = triangles[:, 2] - v0

    pvec = np.cross(directions[:, None, :], e2[None, :, :])
    det = np.einsum('tk,ntk->nt', e1, pvec)
    valid = np.abs(det) > 1e-12
    inv_det = np.divide(1.0, det, out=np.zeros_like(det), where=valid)

    tvec = origins[:, None, :] - v0[None, :, :]
    u = np.einsum('ntk,ntk->nt', tvec, pvec) * inv_det
    qvec = np.cross(tvec, e1[None, :, :])
    v = np.einsum('nk,ntk->nt', directions, qvec) * inv_det
    t = np.einsum('tk,ntk->nt', e2, qvec) * inv_det

    hit = (
        valid &
        (u >= -EDGE_TOLERANCE) & (v >= -EDGE_TOLERANCE) & (u + v <= 1.0 + EDGE_TOLERANCE) &
        (t > t_min) & (t < t_max[:, None])
    )
    return np.where(hit, t, np.inf)


def intersect_rays(origins, directions, triangles, t_min=1e-7, t_max=None):
    """
    Find the nearest triangle hit by each ray.

    Returns:
        (distance, index): the ray parameter of the nearest hit (inf when nothing is hit) and the index
        of the hit triangle (-1 when nothing is hit). Directions need not be normalized; distances are
        expressed in multiples of the direction vector.
    """
    origins = np.atleast_2d(np.asarray(origins, dtype=float))
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    count = len(origins)
    nearest = np.full(count, np.inf)
    index = np.full(count, -1, dtype=np.int64)
    if t_max is None:
        t_max = np.full(count, np.inf)
    else:
        t_max = np.broadcast_to(np.asarray(t_max, dtype=float), (count,))
    if not len(triangles) or not count:
        return nearest, index

    tri_chunk = max(1, min(len(triangles), CHUNK_ELEMENTS // max(1, min(count, 4096))))
    ray_chunk = max(1, CHUNK_ELEMENTS // tri_chunk)
    for r0 in range(0, count, ray_chunk):
        rs = slice(r0, r0 + ray_chunk)
        for t0 in range(0, len(triangles), tri_chunk):
            distances = _intersect_chunk(origins[rs], directions[rs], triangles[t0:t0 + tri_chunk], t_min, t_max[rs])
            best = np.argmin(distances, axis=1)
            best_t = distances[np.arange(len(best)), best]
            closer = best_t < nearest[rs]
            nearest[rs] = np.where(closer, best_t, nearest[rs])
            index[rs] = np.where(closer, best + t0, index[rs])
    return nearest, index


def segments_blocked(starts, ends, triangles, epsilon=1e-6):
    """
    Return a boolean mask of the segments start->end crossing any triangle strictly between their
    endpoints.
    """
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    ends = np.atleast_2d(np.asarray(ends, dtype=float))
    distance, _ = intersect_rays(starts, ends - starts, triangles, t_min=epsilon, t_max=1.0 - epsilon)
    return np.isfinite(distance)


def points_in_triangles(points, triangles, tolerance=1e-7):
    """
    For points known to lie on the plane of the given (coplanar) triangles, return the index of the
    first triangle containing each point, or -1.
    """
    points = np.atleast_2d(points)
    v0 = triangles[:, 0]
    e1 = triangles[:, 1] - v0
    e2 = triangles[:, 2] - v0
    d00 = np.einsum('tk,tk->t', e1, e1)
    d01 = np.einsum('tk,tk->t', e1, e2)
    d11 = np.einsum('tk,tk->t', e2, e2)
    denom = d00 * d11 - d01 * d01
    w = points[:, None, :] - v0[None, :, :]
    d20 = np.einsum('ntk,tk->nt', w, e1)
    d21 = np.einsum('ntk,tk->nt', w, e2)
    with np.errstate(divide='ignore', invalid='ignore'):
        b1 = (d11 * d20 - d01 * d21) / denom
        b2 = (d00 * d21 - d01 * d20) / denom
    inside = (b1 >= -tolerance) & (b2 >= -tolerance) & (b1 + b2 <= 1.0 + tolerance)
    return np.where(inside.any(axis=1), inside.argmax(axis=1), -1)


def plane_groups(triangles, decimals=6):
    """
    Group triangles by the plane they lie on. Orientation is ignored: a plane's normal is signed so
    that its first nonzero component is positive.
    """
    normals = triangle_normals(triangles)
    groups = {}
    for i, normal in enumerate(normals):
        if not normal.any():
            continue
        leading = normal[np.flatnonzero(np.abs(normal) > 1e-9)[0]]
        normal = normal * np.sign(leading)
        offset = float(normal @ triangles[i, 0])
        key = (*np.round(normal, decimals), round(offset, decimals))
        groups.setdefault(key, (normal, offset, []))[2].append(i)
    return [
        Plane(normal=normal, offset=offset, triangles=np.array(indices))
        for normal, offset, indices in groups.values()
    ]
