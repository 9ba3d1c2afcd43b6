"""Small exact-ish polyhedral helpers for dimensions 1 to 3.

Everything here works on plain numpy arrays; the higher-level types live in
:mod:`convexsc.convex_core`.
"""

from itertools import combinations

import numpy as np
from scipy.spatial import ConvexHull, QhullError, cKDTree


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull_2d(points):
    """Counter-clockwise hull of planar points (Andrew's monotone chain).

    Collinear points on hull edges are dropped. Returns an ``(h, 2)`` array;
    ``h`` may be 1 or 2 for degenerate input.
    """
    pts = np.unique(np.asarray(points, dtype=float).reshape(-1, 2), axis=0)
    if len(pts) <= 2:
        return pts
    lower = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0.0:
            lower.pop()
        lower.append(p)
    upper = []
    for p in pts[::-1]:
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0.0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    return np.array(hull)


def polygon_area(vertices):
    """Shoelace area of a simple polygon given in order (sign dropped)."""
    v = np.asarray(vertices, dtype=float)
    if len(v) < 3:
        return 0.0
    x, y = v[:, 0], v[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def hull_volume(points):
    """Volume of the convex hull of ``points`` in their ambient dimension."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if len(pts) == 0:
        return 0.0
    n = pts.shape[1]
    if n == 1:
        return float(pts.max() - pts.min())
    if n == 2:
        return polygon_area(convex_hull_2d(pts))
    if len(pts) <= n:
        return 0.0
    try:
        return float(ConvexHull(pts).volume)
    except QhullError:
        # flat point sets
        return 0.0


def affine_rank(points, tol=1e-9):
    pts = np.asarray(points, dtype=float)
    if len(pts) <= 1:
        return 0
    d = pts[1:] - pts[0]
    scale = max(1.0, float(np.abs(pts).max()))
    s = np.linalg.svd(d, compute_uv=False)
    return int(np.sum(s > tol * scale))


def clip_polygon(poly, normal, offset):
    """Clip a convex polygon (ordered vertices) to ``normal . x <= offset``."""
    if len(poly) == 0:
        return poly
    out = []
    m = len(poly)
    vals = poly @ normal - offset
    for k in range(m):
        p, q = poly[k], poly[(k + 1) % m]
        fp, fq = vals[k], vals[(k + 1) % m]
        if fp <= 0.0:
            out.append(p)
        if (fp < 0.0 < fq) or (fq < 0.0 < fp):
            t = fp / (fp - fq)
            out.append(p + t * (q - p))
    if not out:
        return np.empty((0, 2))
    return np.array(out)


def dedupe_points(points, tol):
    """Merge points closer than ``tol``; keeps the first of each cluster."""
    pts = np.asarray(points, dtype=float)
    if len(pts) <= 1:
        return pts
    tree = cKDTree(pts)
    pairs = tree.query_pairs(tol, output_type="ndarray")
    parent = np.arange(len(pts))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in pairs:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    roots = np.array([find(i) for i in range(len(pts))])
    return pts[np.unique(roots)]


def enumerate_vertices(A, b, tol=1e-9):
    """Vertices of the bounded polyhedron ``A x <= b`` by brute force.

    Intended for the handful of facets of a domain polytope in dimension at
    most 3; every n-subset of constraints is solved and feasible points kept.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    n = A.shape[1]
    scale = 1.0 + float(np.abs(b).max(initial=0.0))
    found = []
    for rows in combinations(range(len(A)), n):
        M = A[list(rows)]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        x = np.linalg.solve(M, b[list(rows)])
        if np.all(A @ x <= b + tol * scale):
            found.append(x)
    if not found:
        return np.empty((0, n))
    return dedupe_points(np.array(found), tol * scale)


def ball_box_volume(center, radius, lower, upper):
    """Volume of ``B(center, radius) ∩ [lower, upper]`` for n <= 3.

    The last coordinate is integrated in closed form (a clipped chord); the
    remaining ones by scipy quadrature with the kinks passed as breakpoints.
    """
    from scipy.integrate import quad

    c = np.asarray(center, dtype=float).ravel()
    lo = np.asarray(lower, dtype=float).ravel()
    hi = np.asarray(upper, dtype=float).ravel()
    n = len(c)
    if n > 3:
        raise ValueError("ball_box_volume supports n <= 3")

    def section(k, r):
        """Volume of the k-dimensional slice of radius ``r`` against the trailing box axes."""
        if r <= 0:
            return 0.0
        i = n - k
        a, b = max(lo[i], c[i] - r), min(hi[i], c[i] + r)
        if b <= a:
            return 0.0
        if k == 1:
            return b - a
        def g(t):
            return section(k - 1, np.sqrt(max(r * r - (t - c[i]) ** 2, 0.0)))
        # the slice changes form where its own clipping switches on or off
        pts = [c[i]]
        for j in range(i + 1, n):
            for edge in (lo[j], hi[j]):
                d = edge - c[j]
                if abs(d) < r:
                    s = np.sqrt(r * r - d * d)
                    pts += [c[i] - s, c[i] + s]
        pts = sorted(p for p in pts if a < p < b)
        return quad(g, a, b, points=pts or None, epsabs=1e-13, epsrel=1e-11, limit=200)[0]

    return float(section(n, float(radius)))
