"""Small meshes and stratifications used by the checks, the sample projects and the tests"""
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from strataforms.cells import ParametrizedCell, affine_box_cell, affine_simplex_cell, point_cell
from strataforms.complex import SimplicialComplex, Stratification, Stratum

F = Fraction


def _catalogue(*cells: ParametrizedCell) -> Dict[str, ParametrizedCell]:
    return {c.id: c for c in cells}


def unit_square(drop_edge: Optional[str] = None) -> Stratification:
    """[0,1]^2 as one box cell with its four edges and corners; drop_edge leaves one edge out"""
    corners = {"v00": (0, 0), "v10": (1, 0), "v11": (1, 1), "v01": (0, 1)}
    points = [point_cell(k, v) for k, v in corners.items()]
    edges = [
        affine_box_cell("B", (0, 0), [(1, 0)], faces=(("v00", -1), ("v10", 1))),
        affine_box_cell("R", (1, 0), [(0, 1)], faces=(("v10", -1), ("v11", 1))),
        affine_box_cell("T", (0, 1), [(1, 0)], faces=(("v01", -1), ("v11", 1))),
        affine_box_cell("L", (0, 0), [(0, 1)], faces=(("v00", -1), ("v01", 1))),
    ]
    square = affine_box_cell("Q", (0, 0), [(1, 0), (0, 1)], faces=(("L", -1), ("R", 1), ("B", 1), ("T", -1)))
    catalogue = _catalogue(square, *edges, *points)
    strata = [Stratum(k, 0, (k,)) for k in corners]
    for e in edges:
        if e.id != drop_edge:
            strata.append(Stratum(e.id, 1, (e.id,), frozenset(f for f, _ in e.faces)))
    strata.append(Stratum("S", 2, ("Q",), frozenset([e.id for e in edges if e.id != drop_edge] + list(corners))))
    if drop_edge is not None:
        del catalogue[drop_edge]
    return Stratification(strata, catalogue, 2)


def split_square() -> SimplicialComplex:
    """The unit square cut along the diagonal from (0,0) to (1,1)"""
    return SimplicialComplex.from_simplices([(0, 0), (1, 0), (1, 1), (0, 1)], [(0, 1, 2), (0, 2, 3)])


def quad_catalogue() -> SimplicialComplex:
    """The unit square cut along both diagonals; vertex 4 is the centre"""
    return SimplicialComplex.from_simplices(
        [(0, 0), (1, 0), (1, 1), (0, 1), (F(1, 2), F(1, 2))],
        [(0, 1, 4), (1, 2, 4), (2, 3, 4), (0, 3, 4)],
    )


def diagonal_stratification(K: SimplicialComplex, diagonal: int = 0) -> Stratification:
    """The two-triangle stratification of the square on the quad catalogue.

    diagonal 0 runs from (0,0) to (1,1), diagonal 1 from (1,0) to (0,1).
    """
    if diagonal == 0:
        line, ends = ("0-4", "2-4", "4"), ("0", "2")
        halves = {"A": (("0-1-4", "1-2-4", "1-4"), ("0-1", "1-2")),
                  "B": (("2-3-4", "0-3-4", "3-4"), ("2-3", "0-3"))}
    else:
        line, ends = ("1-4", "3-4", "4"), ("1", "3")
        halves = {"A": (("0-1-4", "0-3-4", "0-4"), ("0-1", "0-3")),
                  "B": (("1-2-4", "2-3-4", "2-4"), ("1-2", "2-3"))}
    name = f"D{diagonal}"
    strata = [Stratum(v, 0, (v,)) for v in ("0", "1", "2", "3")]
    strata.append(Stratum(name, 1, line, frozenset(ends)))
    for e in ("0-1", "1-2", "2-3", "0-3"):
        strata.append(Stratum(e, 1, (e,), frozenset(e.split("-"))))
    for side, (pieces, edges) in halves.items():
        corners = {v for e in edges for v in e.split("-")}
        strata.append(Stratum(side, 2, pieces, frozenset(set(edges) | corners | {name})))
    return Stratification(strata, K.cells(), 2)


def fan(boundary: Sequence[Tuple], center: Tuple = (0, 0)) -> SimplicialComplex:
    """Triangles joining a closed boundary polygon to a centre vertex (the last vertex)"""
    m = len(boundary)
    vertices = list(boundary) + [center]
    return SimplicialComplex.from_simplices(vertices, [(i, (i + 1) % m, m) for i in range(m)])


def hexagon() -> List[Tuple[Fraction, Fraction]]:
    """Six rational points around the origin, counterclockwise"""
    return [(F(1), F(0)), (F(1, 2), F(1)), (F(-1, 2), F(1)), (F(-1), F(0)), (F(-1, 2), F(-1)), (F(1, 2), F(-1))]


def hexagon_fan() -> SimplicialComplex:
    return fan(hexagon())


def square_ring(per_side: int = 5, half: int = 1) -> List[Tuple[Fraction, Fraction]]:
    """Counterclockwise points on the boundary of [-half, half]^2, per_side segments on each side"""
    step = F(2 * half, per_side)
    points = []
    for i in range(per_side):
        points.append((-half + i * step, F(-half)))
    for i in range(per_side):
        points.append((F(half), -half + i * step))
    for i in range(per_side):
        points.append((half - i * step, F(half)))
    for i in range(per_side):
        points.append((F(-half), half - i * step))
    return points


def disk20() -> SimplicialComplex:
    """Twenty triangles fanning from the origin to the boundary of [-1,1]^2"""
    return fan(square_ring(5))


def polygon_circle(points: Optional[Sequence[Tuple]] = None) -> SimplicialComplex:
    """The closed polygon through the given points (a hexagon by default) as a 1-complex"""
    points = list(points or hexagon())
    m = len(points)
    return SimplicialComplex.from_simplices(points, [(i, (i + 1) % m) for i in range(m)])


def shoelace(points: Sequence[Tuple]) -> Fraction:
    """Twice the signed area enclosed by a polygon"""
    m = len(points)
    return sum((F(points[i][0]) * F(points[(i + 1) % m][1]) - F(points[(i + 1) % m][0]) * F(points[i][1])
                for i in range(m)), F(0))


def octahedron() -> SimplicialComplex:
    """The boundary of the cross-polytope in R^3, a triangulated 2-sphere"""
    vertices = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]
    faces = [(a, b, c) for a in (0, 1) for b in (2, 3) for c in (4, 5)]
    return SimplicialComplex.from_simplices(vertices, faces)


CIRCLE3 = [(F(1), F(0)), (F(-3, 5), F(4, 5)), (F(-3, 5), F(-4, 5))]


def torus3x3() -> SimplicialComplex:
    """The 3 x 3 grid torus, each square split along a diagonal, embedded in R^4 on two rational circles"""
    def vid(i: int, j: int) -> int:
        return 3 * (i % 3) + (j % 3)

    vertices = [CIRCLE3[i] + CIRCLE3[j] for i in range(3) for j in range(3)]
    triangles = []
    for i in range(3):
        for j in range(3):
            triangles.append((vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)))
            triangles.append((vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)))
    return SimplicialComplex.from_simplices(vertices, triangles)


def tetrahedron() -> SimplicialComplex:
    return SimplicialComplex.from_simplices([(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)], [(0, 1, 2, 3)])


def point() -> SimplicialComplex:
    return SimplicialComplex.from_simplices([(0, 0)], [(0,)])


def half_plane() -> Stratification:
    """{y >= 0} inside [-1,1] x [0,1]: the open upper half, the axis without the origin, and the origin"""
    cells = _catalogue(
        affine_box_cell("H", (-1, 0), [(2, 0), (0, 1)]),
        affine_box_cell("E-", (-1, 0), [(1, 0)]),
        affine_box_cell("E+", (0, 0), [(1, 0)]),
        point_cell("O", (0, 0)),
    )
    strata = [
        Stratum("O", 0, ("O",)),
        Stratum("E", 1, ("E-", "E+"), frozenset({"O"})),
        Stratum("H", 2, ("H",), frozenset({"E", "O"})),
    ]
    return Stratification(strata, cells, 2)


def square_annulus() -> Stratification:
    """[-1,1]^2 with the open square (-1/2,1/2)^2 removed, as one stratum of four boxes"""
    h = F(1, 2)
    cells = _catalogue(
        affine_box_cell("bottom", (-1, -1), [(2, 0), (0, h)]),
        affine_box_cell("top", (-1, h), [(2, 0), (0, h)]),
        affine_box_cell("left", (-1, -h), [(h, 0), (0, 1)]),
        affine_box_cell("right", (h, -h), [(h, 0), (0, 1)]),
    )
    return Stratification([Stratum("A", 2, ("bottom", "top", "left", "right"))], cells, 2)


def triangle_band() -> Stratification:
    """The band 0 < y < x over 0 < x < 1 with its lower edge, its diagonal and the origin"""
    cells = _catalogue(
        affine_simplex_cell("T", [(0, 0), (1, 0), (1, 1)]),
        affine_simplex_cell("B", [(0, 0), (1, 0)]),
        affine_simplex_cell("D", [(0, 0), (1, 1)]),
        point_cell("O", (0, 0)),
    )
    strata = [
        Stratum("O", 0, ("O",)),
        Stratum("B", 1, ("B",), frozenset({"O"})),
        Stratum("D", 1, ("D",), frozenset({"O"})),
        Stratum("T", 2, ("T",), frozenset({"B", "D", "O"})),
    ]
    return Stratification(strata, cells, 2)


def unit_interval() -> Stratification:
    """(0, 1] with its left end as a separate stratum"""
    cells = _catalogue(affine_simplex_cell("I", [(0,), (1,)]), point_cell("0", (0,)))
    return Stratification([Stratum("0", 0, ("0",)), Stratum("I", 1, ("I",), frozenset({"0"}))], cells, 1)


def split_plane(half: int = 1) -> Stratification:
    """[-half, half]^2 cut along the x-axis into two open halves and the axis"""
    cells = _catalogue(
        affine_box_cell("up", (-half, 0), [(2 * half, 0), (0, half)]),
        affine_box_cell("down", (-half, -half), [(2 * half, 0), (0, half)]),
        affine_box_cell("axis", (-half, 0), [(2 * half, 0)]),
    )
    strata = [
        Stratum("M", 1, ("axis",)),
        Stratum("U", 2, ("up",), frozenset({"M"})),
        Stratum("L", 2, ("down",), frozenset({"M"})),
    ]
    return Stratification(strata, cells, 2)


def random_complex(rng: np.random.Generator, vertices: int = 12, maximal: int = 10,
                   max_dim: int = 3) -> SimplicialComplex:
    """Random maximal simplices on a vertex set with integer coordinates in R^3"""
    coords = [tuple(int(c) for c in rng.integers(-5, 6, size=3)) for _ in range(vertices)]
    chosen = []
    for _ in range(maximal):
        size = int(rng.integers(1, max_dim + 2))
        chosen.append(tuple(sorted(int(v) for v in rng.choice(vertices, size=size, replace=False))))
    used = sorted({v for s in chosen for v in s})
    remap = {v: i for i, v in enumerate(used)}
    return SimplicialComplex.from_simplices([coords[v] for v in used],
                                            [tuple(remap[v] for v in s) for s in chosen])

