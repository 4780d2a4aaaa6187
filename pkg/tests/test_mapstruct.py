"""Rotation systems, the quadrangulation/map correspondence, duality and balls."""

import json
import math
import random

import pytest

from peelperc.combinatorics import quad_count, simple_quad_count
from peelperc.errors import DomainError
from peelperc.mapstruct import (
    HalfEdgeMap,
    Quadrangulation,
    ball,
    dual_map,
    enumerate_quadrangulations,
    enumerate_rooted_maps,
    enumerate_sphere_quadrangulations,
    map_from_dict,
    map_to_dict,
    map_to_quad,
    quad_to_map,
    validate,
)

EDGE = HalfEdgeMap((1, 0), (0, 1), 0)
LOOP = HalfEdgeMap((1, 0), (1, 0), 0)
TORUS = HalfEdgeMap((1, 0, 3, 2), (2, 3, 1, 0), 0)


def rooted_map_formula(n):
    return 2 * 3 ** n * math.factorial(2 * n) // (math.factorial(n) * math.factorial(n + 2))


# ---------------------------------------------------------------------------
# validate


def test_validate_single_edge():
    d = validate(EDGE)
    assert d.valid and d.planar
    assert (d.vertices, d.edges, d.faces) == (2, 1, 1)


def test_validate_loop():
    d = validate(LOOP)
    assert d.valid and d.planar
    assert (d.vertices, d.edges, d.faces) == (1, 1, 2)


def test_validate_torus():
    d = validate(TORUS)
    assert d.valid
    assert d.euler == 0 and d.genus == 1
    assert not d.planar


def test_validate_broken_inputs():
    assert not validate(HalfEdgeMap((0, 1), (0, 1), 0)).valid  # alpha has fixed points
    assert not validate(HalfEdgeMap((1, 0, 3, 2), (0, 1, 2, 3), 0)).valid  # disconnected


def test_json_round_trip():
    for m in enumerate_rooted_maps(2):
        data = json.loads(m.to_json())
        assert set(data) == {"darts", "alpha", "sigma", "root"}
        assert map_from_dict(data) == m
    assert map_to_dict(EDGE) == {"darts": [0, 1], "alpha": [1, 0], "sigma": [0, 1], "root": 0}
    with pytest.raises(DomainError):
        map_from_dict({"darts": [0, 1], "alpha": [0, 1], "sigma": [0, 1], "root": 0})


# ---------------------------------------------------------------------------
# enumeration


@pytest.mark.parametrize("n,count", [(1, 2), (2, 9), (3, 54)])
def test_rooted_map_counts(n, count):
    maps = enumerate_rooted_maps(n)
    assert len(maps) == count == rooted_map_formula(n)
    assert len({m.key() for m in maps}) == count
    for m in maps:
        d = validate(m)
        assert d.valid and d.planar and d.edges == n


def test_rooted_maps_one_edge_are_edge_and_loop():
    keys = {m.key() for m in enumerate_rooted_maps(1)}
    assert keys == {EDGE.key(), LOOP.key()}


def test_enumeration_refuses_large_sizes():
    with pytest.raises(DomainError):
        enumerate_rooted_maps(5)
    with pytest.raises(DomainError):
        enumerate_quadrangulations(5, 1)
    with pytest.raises(DomainError):
        enumerate_quadrangulations(1, 4)


def test_quadrangulation_small_examples():
    assert len(enumerate_quadrangulations(0, 1)) == 1
    assert len(enumerate_quadrangulations(1, 1)) == 2


@pytest.mark.parametrize("p", [1, 2, 3])
@pytest.mark.parametrize("n", [0, 1, 2, 3, 4])
def test_quadrangulation_counts(n, p):
    qs = enumerate_quadrangulations(n, p)
    assert len(qs) == quad_count(n, p)
    assert len({q.key() for q in qs}) == len(qs)
    for q in qs:
        q.check()
        assert q.half_perimeter == p and q.inner_faces == n
    simple = enumerate_quadrangulations(n, p, simple=True)
    assert len(simple) == simple_quad_count(n, p)
    assert all(q.is_simple_boundary() for q in simple)


def test_sphere_quadrangulations_match_maps():
    for n in (1, 2, 3):
        qs = enumerate_sphere_quadrangulations(n)
        assert len(qs) == len(enumerate_rooted_maps(n))
        for q in qs:
            q.check()
            assert q.inner_faces == n
            assert set(q.labels()) <= {"circle", "square"}


# ---------------------------------------------------------------------------
# correspondence and duality


def test_one_face_quadrangulations_give_edge_and_loop():
    images = {quad_to_map(q).key() for q in enumerate_sphere_quadrangulations(1)}
    assert images == {EDGE.key(), LOOP.key()}


def test_single_edge_to_quadrangulation():
    q = map_to_quad(EDGE)
    q.check()
    assert q.inner_faces == 1
    assert quad_to_map(q) == EDGE.canonical()


@pytest.mark.parametrize("n", [1, 2, 3])
def test_round_trips(n):
    maps = enumerate_rooted_maps(n)
    for m in maps:
        q = map_to_quad(m)
        assert len(q.map.faces()) == m.n_edges
        assert quad_to_map(q) == m.canonical()
    for q in enumerate_sphere_quadrangulations(n):
        m = quad_to_map(q)
        assert m.n_edges == n
        # map vertices are the circle vertices of q
        assert len(m.vertices()) == q.labels().count("circle")
        assert map_to_quad(m).key() == q.key()
    images = {quad_to_map(q).key() for q in enumerate_sphere_quadrangulations(n)}
    assert images == {m.key() for m in maps}


@pytest.mark.parametrize("n", [1, 2, 3])
def test_duality(n):
    for m in enumerate_rooted_maps(n):
        d = dual_map(m)
        assert d.n_edges == m.n_edges
        assert len(d.vertices()) == len(m.faces())
        assert len(d.faces()) == len(m.vertices())
        assert dual_map(d) == m.canonical()


def test_dual_of_edge_is_loop():
    assert dual_map(EDGE).key() == LOOP.key()
    assert dual_map(LOOP).key() == EDGE.key()


def test_correspondence_errors():
    with pytest.raises(DomainError):
        map_to_quad(TORUS)
    bounded = enumerate_quadrangulations(1, 1)[0]
    with pytest.raises(DomainError):
        quad_to_map(bounded)
    with pytest.raises(DomainError):
        quad_to_map(Quadrangulation(LOOP, False))  # faces of degree 1


# ---------------------------------------------------------------------------
# balls


def _all_instances():
    out = [q.map for n in range(1, 5) for q in enumerate_sphere_quadrangulations(n)]
    out += [q.map for n in range(0, 5) for p in (1, 2, 3) for q in enumerate_quadrangulations(n, p)]
    return out


def test_ball_inclusions_random_instances():
    rnd = random.Random(2024)
    pool = _all_instances()
    for _ in range(100):
        m = rnd.choice(pool)
        r = rnd.randint(1, 4)
        b = ball(m, r, "edge")
        bs = ball(m, r, "face")
        b2 = ball(m, r + 2, "edge")
        assert b <= bs <= b2


def test_ball_whole_map_for_large_radius():
    for m in enumerate_rooted_maps(3):
        diam = max(m.distances())
        b = ball(m, diam + 2)
        assert len(b.edges) == m.n_edges
        assert b.to_map().key() == m.key()


def test_ball_of_single_edge():
    assert ball(EDGE, 1).to_map().key() == EDGE.key()


def test_ball_errors():
    with pytest.raises(DomainError):
        ball(EDGE, 0)
    with pytest.raises(DomainError):
        ball(EDGE, 1, "vertex")
