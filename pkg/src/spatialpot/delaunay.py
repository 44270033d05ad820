"""Incremental Delaunay triangulation (Bowyer-Watson) with exact predicates.

The unbounded side of the hull is covered by ghost triangles ``(u, v, GHOST)``
so no super-triangle is needed and hull edges are never lost.  Predicates are
evaluated in floating point first; results that fall inside the rounding error
bound are recomputed exactly with rationals.

Cocircular ties: a point lying exactly on a circumcircle does not invalidate
that triangle (open-disk test).  Points are inserted in lexicographic order,
so the triangulation chosen among the valid ones is deterministic.
"""

from fractions import Fraction

GHOST = -1

_EPS = 2.0 ** -53
_ORIENT_BOUND = (3.0 + 16.0 * _EPS) * _EPS
_INCIRCLE_BOUND = (10.0 + 96.0 * _EPS) * _EPS


class DegenerateInputError(ValueError):
    """Raised for point sets that have no 2-D triangulation."""


def orient(a, b, c):
    """Sign of twice the signed area of ``abc`` (+1 counter-clockwise)."""
    detleft = (a[0] - c[0]) * (b[1] - c[1])
    detright = (a[1] - c[1]) * (b[0] - c[0])
    det = detleft - detright
    if abs(det) > _ORIENT_BOUND * (abs(detleft) + abs(detright)):
        return int(det > 0) - int(det < 0)
    ax, ay, bx, by, cx, cy = (Fraction(v) for v in (*a, *b, *c))
    det = (ax - cx) * (by - cy) - (ay - cy) * (bx - cx)
    return int(det > 0) - int(det < 0)


def incircle(a, b, c, d):
    """+1 if ``d`` is strictly inside the circle through ccw ``a, b, c``."""
    adx, ady = a[0] - d[0], a[1] - d[1]
    bdx, bdy = b[0] - d[0], b[1] - d[1]
    cdx, cdy = c[0] - d[0], c[1] - d[1]
    alift = adx * adx + ady * ady
    blift = bdx * bdx + bdy * bdy
    clift = cdx * cdx + cdy * cdy
    bc = bdx * cdy - cdx * bdy
    ca = cdx * ady - adx * cdy
    ab = adx * bdy - bdx * ady
    det = alift * bc + blift * ca + clift * ab
    permanent = (
        (abs(bdx * cdy) + abs(cdx * bdy)) * alift
        + (abs(cdx * ady) + abs(adx * cdy)) * blift
        + (abs(adx * bdy) + abs(bdx * ady)) * clift
    )
    if abs(det) > _INCIRCLE_BOUND * permanent:
        return int(det > 0) - int(det < 0)
    a, b, c, d = ([Fraction(v) for v in p] for p in (a, b, c, d))
    adx, ady = a[0] - d[0], a[1] - d[1]
    bdx, bdy = b[0] - d[0], b[1] - d[1]
    cdx, cdy = c[0] - d[0], c[1] - d[1]
    det = (
        (adx * adx + ady * ady) * (bdx * cdy - cdx * bdy)
        + (bdx * bdx + bdy * bdy) * (cdx * ady - adx * cdy)
        + (cdx * cdx + cdy * cdy) * (adx * bdy - bdx * ady)
    )
    return int(det > 0) - int(det < 0)


def _strictly_between(u, v, p):
    # p is known to be collinear with u, v
    if u[0] != v[0]:
        return min(u[0], v[0]) < p[0] < max(u[0], v[0])
    return min(u[1], v[1]) < p[1] < max(u[1], v[1])


class _Triangulation:
    def __init__(self, pts):
        self.pts = pts
        self.tris = {}  # insertion-ordered set of live triangles
        self.owner = {}  # directed edge -> triangle holding it

    def add(self, t):
        self.tris[t] = None
        a, b, c = t
        self.owner[(a, b)] = t
        self.owner[(b, c)] = t
        self.owner[(c, a)] = t

    def remove(self, t):
        del self.tris[t]
        a, b, c = t
        for e in ((a, b), (b, c), (c, a)):
            if self.owner.get(e) == t:
                del self.owner[e]

    def in_circumdisk(self, t, p):
        a, b, c = t
        pts = self.pts
        if c == GHOST:
            s = orient(pts[a], pts[b], p)
            return s > 0 or (s == 0 and _strictly_between(pts[a], pts[b], p))
        return incircle(pts[a], pts[b], pts[c], p) > 0

    def insert(self, i):
        p = self.pts[i]
        start = None
        # recent triangles sit next to the previous insertion
        for t in reversed(self.tris):
            if self.in_circumdisk(t, p):
                start = t
                break
        if start is None:  # pragma: no cover - impossible for distinct points
            raise DegenerateInputError("point not covered by any circumdisk")
        cavity = {start}
        stack = [start]
        boundary = []
        while stack:
            t = stack.pop()
            a, b, c = t
            for x, y in ((a, b), (b, c), (c, a)):
                nb = self.owner[(y, x)]
                if nb in cavity:
                    continue
                if self.in_circumdisk(nb, p):
                    cavity.add(nb)
                    stack.append(nb)
                else:
                    boundary.append((x, y))
        for t in cavity:
            self.remove(t)
        for x, y in boundary:
            if x == GHOST:
                self.add((y, i, GHOST))
            elif y == GHOST:
                self.add((i, x, GHOST))
            else:
                self.add((x, y, i))


def triangulate(points):
    """Delaunay triangles of ``points`` as ccw index triples.

    Raises DegenerateInputError for fewer than 3 points, duplicates, or a
    fully collinear set.
    """
    pts = [(float(x), float(y)) for x, y in points]
    n = len(pts)
    if n < 3:
        raise DegenerateInputError("need at least 3 points")
    order = sorted(range(n), key=lambda i: (pts[i], i))
    for i, j in zip(order, order[1:]):
        if pts[i] == pts[j]:
            raise DegenerateInputError(f"duplicate points {i} and {j}")
    a, b = order[0], order[1]
    for pos in range(2, n):
        s = orient(pts[a], pts[b], pts[order[pos]])
        if s != 0:
            break
    else:
        raise DegenerateInputError("all points are collinear")
    c = order.pop(pos)
    if s < 0:
        a, b = b, a
    tri = _Triangulation(pts)
    tri.add((a, b, c))
    tri.add((b, a, GHOST))
    tri.add((c, b, GHOST))
    tri.add((a, c, GHOST))
    for i in order[2:]:
        tri.insert(i)
    return [t for t in tri.tris if GHOST not in t]


def delaunay_edges(points):
    """Undirected Delaunay edges as a sorted list of ``(i, j)`` with ``i < j``."""
    edges = set()
    for a, b, c in triangulate(points):
        for u, v in ((a, b), (b, c), (c, a)):
            edges.add((u, v) if u < v else (v, u))
    return sorted(edges)
