"""Finite rooted planar maps as rotation systems.

A map on ``2E`` darts ``0..2E-1`` is given by two permutations: ``alpha``
pairs the two darts of each edge and ``sigma`` sends a dart to the next one
counterclockwise around its tail vertex. Vertices are the orbits of
``sigma`` and faces the orbits of ``phi = sigma o alpha``. The dart ``d`` and
``phi(d)`` are consecutive along the face of ``d``; ``alpha(d)`` arrives at
the tail of ``d`` and ``sigma(d)`` leaves it, so the corner between ``d``
and ``sigma(d)`` belongs to the face of ``sigma(d)``.

A quadrangulation with a boundary is rooted on the boundary: the boundary
face is the face of the root dart.

Quadrangulation/map correspondence. For a sphere quadrangulation every face
has two circle corners (even distance from the root vertex); joining them
gives one map edge per face. The map dart attached to the corner after
quadrangulation dart ``d`` at a circle vertex is rotated like ``d``, and the
map is rooted at the corner after the root dart. The inverse puts a square
vertex in every map face, joins it to every corner of that face, and roots
the quadrangulation at the corner dart ``c(sigma^{-1}(root))``. This is the
convention that makes both round trips exact.
"""

from __future__ import annotations

import itertools
import json
from collections import deque
from dataclasses import dataclass
from functools import lru_cache

from .errors import DomainError

MAX_ENUM_EDGES = 4
MAX_ENUM_FACES = 4
MAX_ENUM_HALF_PERIMETER = 3


# ---------------------------------------------------------------------------
# permutation helpers


def _orbits(perm) -> list:
    seen = [False] * len(perm)
    out = []
    for d in range(len(perm)):
        if not seen[d]:
            orb = []
            e = d
            while not seen[e]:
                seen[e] = True
                orb.append(e)
                e = perm[e]
            out.append(orb)
    return out


def _orbit_index(perm) -> list:
    idx = [0] * len(perm)
    for i, orb in enumerate(_orbits(perm)):
        for d in orb:
            idx[d] = i
    return idx


def _inverse(perm) -> list:
    inv = [0] * len(perm)
    for i, j in enumerate(perm):
        inv[j] = i
    return inv


def _canonical(alpha, sigma, root):
    """Relabel darts in breadth-first order from ``root``; ``None`` if disconnected."""
    n = len(alpha)
    label = {root: 0}
    order = [root]
    i = 0
    while i < len(order):
        d = order[i]
        i += 1
        for e in (alpha[d], sigma[d]):
            if e not in label:
                label[e] = len(order)
                order.append(e)
    if len(order) != n:
        return None
    return (tuple(label[alpha[d]] for d in order), tuple(label[sigma[d]] for d in order))


# ---------------------------------------------------------------------------
# maps


@dataclass(frozen=True)
class HalfEdgeMap:
    """Rooted map given by its rotation system.

    Parameters
    ----------
    alpha : tuple of int
        Edge involution.
    sigma : tuple of int
        Counterclockwise successor of each dart around its tail vertex.
    root : int
        Root dart.
    """

    alpha: tuple
    sigma: tuple
    root: int = 0

    def __post_init__(self):
        object.__setattr__(self, "alpha", tuple(int(x) for x in self.alpha))
        object.__setattr__(self, "sigma", tuple(int(x) for x in self.sigma))
        object.__setattr__(self, "root", int(self.root))

    @property
    def n_darts(self) -> int:
        return len(self.alpha)

    @property
    def n_edges(self) -> int:
        return len(self.alpha) // 2

    @property
    def phi(self) -> tuple:
        return tuple(self.sigma[a] for a in self.alpha)

    def vertices(self) -> list:
        return _orbits(self.sigma)

    def faces(self) -> list:
        return _orbits(self.phi)

    def vertex_index(self) -> list:
        return _orbit_index(self.sigma)

    def face_index(self) -> list:
        return _orbit_index(self.phi)

    def edges(self) -> list:
        """Edges as ``(d, alpha(d))`` with ``d < alpha(d)``."""
        return [(d, a) for d, a in enumerate(self.alpha) if d < a]

    def distances(self) -> list:
        """Graph distance of every vertex from the tail of the root dart."""
        vid = self.vertex_index()
        nv = max(vid) + 1
        adj = [[] for _ in range(nv)]
        for d, a in enumerate(self.alpha):
            adj[vid[d]].append(vid[a])
        dist = [-1] * nv
        start = vid[self.root]
        dist[start] = 0
        dq = deque([start])
        while dq:
            v = dq.popleft()
            for w in adj[v]:
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    dq.append(w)
        return dist

    def key(self) -> tuple:
        """Isomorphism invariant of the rooted map."""
        c = _canonical(self.alpha, self.sigma, self.root)
        if c is None:
            raise DomainError("map is not connected")
        return c

    def canonical(self) -> "HalfEdgeMap":
        a, s = self.key()
        return HalfEdgeMap(a, s, 0)

    def is_isomorphic(self, other: "HalfEdgeMap") -> bool:
        return self.key() == other.key()

    def to_json(self) -> str:
        return json.dumps(map_to_dict(self), sort_keys=True)


@dataclass(frozen=True)
class MapDiagnostics:
    involution: bool
    permutation: bool
    connected: bool
    vertices: int
    edges: int
    faces: int
    euler: int
    genus: float
    planar: bool

    @property
    def valid(self) -> bool:
        return self.involution and self.permutation and self.connected


def validate(m: HalfEdgeMap) -> MapDiagnostics:
    """Check the involution, connectivity and the Euler relation of ``m``."""
    n = m.n_darts
    perm = sorted(m.sigma) == list(range(n)) and len(m.sigma) == n
    inv = (n % 2 == 0 and sorted(m.alpha) == list(range(n))
           and all(m.alpha[m.alpha[d]] == d and m.alpha[d] != d for d in range(n)))
    if not (perm and inv) or not 0 <= m.root < max(n, 1):
        return MapDiagnostics(inv, perm, False, 0, n // 2, 0, 0, float("nan"), False)
    connected = _canonical(m.alpha, m.sigma, m.root) is not None
    v, e, f = len(m.vertices()), m.n_edges, len(m.faces())
    chi = v - e + f
    genus = (2 - chi) / 2
    return MapDiagnostics(inv, perm, connected, v, e, f, chi, genus, connected and chi == 2)


def _require_planar(m: HalfEdgeMap):
    diag = validate(m)
    if not diag.valid:
        raise DomainError("not a valid connected rotation system")
    if not diag.planar:
        raise DomainError(f"map has genus {diag.genus:g}, not planar")


def map_to_dict(m: HalfEdgeMap) -> dict:
    """Exchange form ``{darts, alpha, sigma, root}``."""
    return {"darts": list(range(m.n_darts)), "alpha": list(m.alpha), "sigma": list(m.sigma), "root": m.root}


def map_from_dict(data: dict) -> HalfEdgeMap:
    darts = list(data["darts"])
    if darts != list(range(len(darts))):
        raise DomainError("darts must be 0..2E-1")
    m = HalfEdgeMap(data["alpha"], data["sigma"], data["root"])
    if not validate(m).valid:
        raise DomainError("not a valid connected rotation system")
    return m


# ---------------------------------------------------------------------------
# quadrangulations


@dataclass(frozen=True)
class Quadrangulation:
    """A quadrangulation, optionally with a boundary face through the root dart."""

    map: HalfEdgeMap
    has_boundary: bool = False

    @property
    def boundary_darts(self) -> list:
        if not self.has_boundary:
            return []
        phi = self.map.phi
        out = [self.map.root]
        d = phi[self.map.root]
        while d != self.map.root:
            out.append(d)
            d = phi[d]
        return out

    @property
    def half_perimeter(self) -> int:
        return len(self.boundary_darts) // 2

    @property
    def inner_faces(self) -> int:
        return len(self.map.faces()) - (1 if self.has_boundary else 0)

    def is_simple_boundary(self) -> bool:
        vid = self.map.vertex_index()
        tails = [vid[d] for d in self.boundary_darts]
        return len(set(tails)) == len(tails)

    def labels(self) -> list:
        """``'circle'`` or ``'square'`` per vertex, by parity of the distance to the root vertex."""
        return ["circle" if d % 2 == 0 else "square" for d in self.map.distances()]

    def check(self):
        """Raise :class:`DomainError` unless this is a valid quadrangulation."""
        _require_planar(self.map)
        root_face = self.map.face_index()[self.map.root]
        for i, f in enumerate(self.map.faces()):
            boundary = self.has_boundary and root_face == self.map.face_index()[f[0]]
            if boundary:
                if len(f) % 2:
                    raise DomainError("boundary face has odd degree")
            elif len(f) != 4:
                raise DomainError(f"face of degree {len(f)}")
        dist = self.map.distances()
        vid = self.map.vertex_index()
        for d, a in enumerate(self.map.alpha):
            if dist[vid[d]] % 2 == dist[vid[a]] % 2:
                raise DomainError("graph is not bipartite")

    def key(self) -> tuple:
        return (self.has_boundary, self.map.key())

    def rerooted(self, root: int) -> "Quadrangulation":
        return Quadrangulation(HalfEdgeMap(self.map.alpha, self.map.sigma, root), self.has_boundary)

    def to_json(self) -> str:
        data = map_to_dict(self.map)
        data["boundary"] = self.has_boundary
        return json.dumps(data, sort_keys=True)


def quad_to_map(q: Quadrangulation) -> HalfEdgeMap:
    """Rooted map whose edges are the faces of the sphere quadrangulation ``q``."""
    if q.has_boundary:
        raise DomainError("the correspondence needs a quadrangulation of the sphere")
    q.check()
    m = q.map
    if m.n_darts == 0:
        raise DomainError("empty quadrangulation")
    dist = m.distances()
    vid = m.vertex_index()
    circle = [d for d in range(m.n_darts) if dist[vid[d]] % 2 == 0]
    idx = {d: i for i, d in enumerate(circle)}
    phi = m.phi
    sigma = [idx[m.sigma[d]] for d in circle]
    alpha = [idx[m.alpha[phi[m.sigma[d]]]] for d in circle]
    return HalfEdgeMap(alpha, sigma, idx[m.root]).canonical()


def map_to_quad(m: HalfEdgeMap) -> Quadrangulation:
    """Sphere quadrangulation with one square vertex per face of ``m``."""
    _require_planar(m)
    if m.n_edges == 0:
        raise DomainError("empty map")
    n = m.n_darts
    sig_inv = _inverse(m.sigma)
    alpha = [0] * (2 * n)
    sigma = [0] * (2 * n)
    for d in range(n):
        # 2d runs from the tail of d to the face holding the corner after d;
        # the four darts of the face built on the edge of d are 2d, then the
        # reverse of the corner before alpha(d), and so on
        alpha[2 * d], alpha[2 * d + 1] = 2 * d + 1, 2 * d
        sigma[2 * d] = 2 * m.sigma[d]
        sigma[2 * d + 1] = 2 * sig_inv[m.alpha[d]] + 1
    return Quadrangulation(HalfEdgeMap(alpha, sigma, 2 * sig_inv[m.root]).canonical(), False)


def dual_map(m: HalfEdgeMap) -> HalfEdgeMap:
    """Dual rooted map: reverse the root of the quadrangulation and map back."""
    q = map_to_quad(m)
    return quad_to_map(q.rerooted(q.map.alpha[q.map.root]))


# ---------------------------------------------------------------------------
# balls


@dataclass(frozen=True)
class Ball:
    """Submap of a rooted map given by its edge set (edges named by their smaller dart)."""

    parent: HalfEdgeMap
    radius: int
    mode: str
    edges: frozenset

    def issubset(self, other: "Ball") -> bool:
        return self.edges <= other.edges

    def __le__(self, other: "Ball") -> bool:
        return self.issubset(other)

    def to_map(self) -> HalfEdgeMap:
        """The submap as a rooted map, with rotations induced from the parent."""
        keep = set()
        for e in self.edges:
            keep.update((e, self.parent.alpha[e]))
        darts = sorted(keep)
        idx = {d: i for i, d in enumerate(darts)}
        sigma = []
        for d in darts:
            e = self.parent.sigma[d]
            while e not in keep:
                e = self.parent.sigma[e]
            sigma.append(idx[e])
        alpha = [idx[self.parent.alpha[d]] for d in darts]
        return HalfEdgeMap(alpha, sigma, idx[self.parent.root])


def ball(m: HalfEdgeMap, r: int, mode: str = "edge") -> Ball:
    """Ball of radius ``r`` around the root vertex.

    ``mode="edge"`` keeps every edge with an endpoint at distance ``< r``;
    ``mode="face"`` keeps every edge of every face with a vertex at
    distance ``< r``.
    """
    if r < 1:
        raise DomainError("radius must be at least 1")
    if mode not in ("edge", "face"):
        raise DomainError(f"unknown ball mode {mode!r}")
    dist = m.distances()
    vid = m.vertex_index()
    near = [dist[vid[d]] < r for d in range(m.n_darts)]
    if mode == "edge":
        edges = {min(d, m.alpha[d]) for d in range(m.n_darts) if near[d]}
    else:
        edges = set()
        for f in m.faces():
            if any(near[d] for d in f):
                edges.update(min(d, m.alpha[d]) for d in f)
    return Ball(m, int(r), mode, frozenset(edges))


# ---------------------------------------------------------------------------
# enumeration


def _rooted_map_keys(n: int) -> set:
    nd = 2 * n
    alpha = tuple(d ^ 1 for d in range(nd))
    keys = set()
    for sigma in itertools.permutations(range(nd)):
        if _canonical(alpha, sigma, 0) is None:
            continue
        v = len(_orbits(sigma))
        f = len(_orbits([sigma[a] for a in alpha]))
        if v - n + f != 2:
            continue
        for root in range(nd):
            keys.add(_canonical(alpha, sigma, root))
    return keys


def enumerate_rooted_maps(n_edges: int) -> list:
    """All rooted planar maps with ``n_edges`` edges, in canonical form.

    Every rotation system on ``2n`` darts with ``alpha = (0 1)(2 3)...`` is
    tried; connected genus-0 ones are kept and deduplicated by the canonical
    form of each choice of root.
    """
    if n_edges < 1:
        raise DomainError("n_edges must be at least 1")
    if n_edges > MAX_ENUM_EDGES:
        raise DomainError(f"enumeration is limited to {MAX_ENUM_EDGES} edges")
    return [HalfEdgeMap(a, s, 0) for a, s in sorted(_rooted_map_keys(int(n_edges)))]


def _boundary_last(alpha, sigma, root):
    d = root
    while sigma[alpha[d]] != root:
        d = sigma[alpha[d]]
    return d


def _bridge(left, right):
    """Join two boundary-rooted pieces (``None`` is a single vertex) by a root bridge."""
    alpha, sigma = [], []
    if left is not None:
        alpha += left[0]
        sigma += left[1]
    off = len(alpha)
    if right is not None:
        alpha += [a + off for a in right[0]]
        sigma += [s + off for s in right[1]]
    r, rb = len(alpha), len(alpha) + 1
    alpha += [rb, r]
    sigma += [r, rb]
    if left is not None:
        z = alpha[_boundary_last(left[0], left[1], 0)]
        sigma[z], sigma[r] = r, 0
    if right is not None:
        last = _boundary_last(right[0], right[1], 0) + off
        z = alpha[last]
        sigma[z], sigma[rb] = rb, off
    return _canonical(alpha, sigma, r)


def _chord(piece):
    """Close the first three boundary edges of ``piece`` into a face with a new root edge."""
    alpha, sigma = list(piece[0]), list(piece[1])
    phi = lambda d: sigma[alpha[d]]  # noqa: E731
    b2 = phi(phi(0))
    b3 = phi(b2)
    last = _boundary_last(alpha, sigma, 0)
    x, y = len(alpha), len(alpha) + 1
    za, zb = alpha[last], alpha[b2]
    alpha += [y, x]
    sigma += [b3, 0]
    sigma[zb] = x
    sigma[za] = y
    return _canonical(alpha, sigma, y)


@lru_cache(maxsize=None)
def _quads(n: int, p: int) -> tuple:
    """Canonical (alpha, sigma) of quadrangulations of the 2p-gon, root on the boundary."""
    if p == 0:
        return (None,) if n == 0 else ()
    out = []
    for p1 in range(p):
        p2 = p - 1 - p1
        for n1 in range(n + 1):
            for left in _quads(n1, p1):
                for right in _quads(n - n1, p2):
                    out.append(_bridge(left, right))
    if n >= 1:
        out.extend(_chord(piece) for piece in _quads(n - 1, p + 1))
    return tuple(out)


def enumerate_quadrangulations(n: int, p: int, simple: bool = False) -> list:
    """All quadrangulations of the 2p-gon with ``n`` inner faces, rooted on the boundary.

    The root edge is either a bridge joining two smaller pieces (half
    perimeters summing to ``p - 1``) or it closes an inner face whose other
    three edges lie on the boundary of a piece with half-perimeter ``p + 1``.
    Boundaries need not be simple, matching :func:`quad_count`; with
    ``simple=True`` only simple boundaries are kept, matching
    :func:`simple_quad_count`.
    """
    if n < 0 or p < 1:
        raise DomainError("need n >= 0 and p >= 1")
    if n > MAX_ENUM_FACES or p > MAX_ENUM_HALF_PERIMETER:
        raise DomainError(f"enumeration is limited to n <= {MAX_ENUM_FACES}, p <= {MAX_ENUM_HALF_PERIMETER}")
    out = [Quadrangulation(HalfEdgeMap(a, s, 0), True) for a, s in _quads(int(n), int(p))]
    if simple:
        out = [q for q in out if q.is_simple_boundary()]
    return out


def close_digon(q: Quadrangulation) -> Quadrangulation:
    """Glue the two edges of a 2-gon boundary into one edge, giving a sphere quadrangulation.

    The new root runs along the old root dart's direction.
    """
    if not q.has_boundary or q.half_perimeter != 1:
        raise DomainError("need a quadrangulation of the 2-gon")
    if q.inner_faces < 1:
        raise DomainError("the 2-gon without inner faces has nothing to close")
    m = q.map
    b0 = m.root
    b1 = m.phi[b0]
    a0, a1 = m.alpha[b0], m.alpha[b1]
    alpha, sigma = list(m.alpha), list(m.sigma)
    sigma[a0] = m.sigma[b1]
    sigma[a1] = m.sigma[b0]
    alpha[a0], alpha[a1] = a1, a0
    keep = [d for d in range(m.n_darts) if d not in (b0, b1)]
    idx = {d: i for i, d in enumerate(keep)}
    out = HalfEdgeMap([idx[alpha[d]] for d in keep], [idx[sigma[d]] for d in keep], idx[a1])
    return Quadrangulation(out.canonical(), False)


def enumerate_sphere_quadrangulations(n: int) -> list:
    """Rooted quadrangulations of the sphere with ``n`` faces, from the 2-gon ones."""
    if n < 1:
        raise DomainError("n must be at least 1")
    return [close_digon(q) for q in enumerate_quadrangulations(n, 1)]
