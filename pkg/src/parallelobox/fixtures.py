"""Programmatic watertight test meshes.

Everything here is exact, constructed geometry: boxes, an icosphere, and
polycube solids extracted from voxel masks.  The shapes exist so tests and
demos have known volumes, areas, and symmetries without shipping binary
mesh files.
"""
from __future__ import annotations

import numpy as np

from .mesh import TriangleMesh, clean_mesh

# Corner offsets and the two CCW-outward triangles of each cube face.
_BOX_CORNERS = np.array(
    [
        [0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
        [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1],
    ],
    dtype=np.float64,
)
_BOX_TRIS = np.array(
    [
        [0, 2, 1], [0, 3, 2],  # bottom (z = 0), normal -z
        [4, 5, 6], [4, 6, 7],  # top, normal +z
        [0, 1, 5], [0, 5, 4],  # front (y = 0), normal -y
        [2, 3, 7], [2, 7, 6],  # back, normal +y
        [0, 4, 7], [0, 7, 3],  # left (x = 0), normal -x
        [1, 2, 6], [1, 6, 5],  # right, normal +x
    ],
    dtype=np.int32,
)


def box_mesh(size=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0), name="box") -> TriangleMesh:
    """Axis-aligned solid box: 8 vertices, 12 triangles."""
    size = np.asarray(size, dtype=np.float64)
    origin = np.asarray(origin, dtype=np.float64)
    return TriangleMesh(_BOX_CORNERS * size + origin, _BOX_TRIS.copy(), name)


def unit_cube(name="cube") -> TriangleMesh:
    return box_mesh((1.0, 1.0, 1.0), (0.0, 0.0, 0.0), name)


def icosphere(radius: float = 10.0, subdivisions: int = 3, center=(0.0, 0.0, 0.0),
              name="sphere") -> TriangleMesh:
    """Subdivided icosahedron; 3 subdivisions give 1280 triangles."""
    phi = (1.0 + 5.0 ** 0.5) / 2.0
    verts = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=np.float64,
    )
    verts /= np.linalg.norm(verts, axis=1)[:, None]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [v for v in verts]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                m = verts[a] + verts[b]
                m /= np.linalg.norm(m)
                cache[key] = len(verts)
                verts.append(m)
            return cache[key]

        faces = [
            tri
            for (a, b, c) in faces
            for tri in (
                (a, midpoint(a, b), midpoint(c, a)),
                (midpoint(a, b), b, midpoint(b, c)),
                (midpoint(c, a), midpoint(b, c), c),
                (midpoint(a, b), midpoint(b, c), midpoint(c, a)),
            )
        ]
    positions = np.asarray(verts) * radius + np.asarray(center, dtype=np.float64)
    return TriangleMesh(positions, np.asarray(faces, dtype=np.int32), name)


def voxel_mesh(occupancy: np.ndarray, voxel_size: float = 1.0,
               origin=(0.0, 0.0, 0.0), name="voxels") -> TriangleMesh:
    """Watertight surface of a boolean voxel volume.

    Emits one outward-facing quad (two triangles) per solid/empty face pair,
    so cavities get their own inner shells.  Keep solids face-connected;
    voxels touching only along an edge would produce a non-manifold seam.
    """
    occ = np.asarray(occupancy, dtype=bool)
    if occ.ndim != 3:
        raise ValueError("occupancy must be a 3-D boolean array")
    padded = np.pad(occ, 1, constant_values=False)
    vert_ids: dict[tuple[int, int, int], int] = {}
    verts: list[tuple[int, int, int]] = []
    tris: list[tuple[int, int, int]] = []

    def vid(p: tuple[int, int, int]) -> int:
        if p not in vert_ids:
            vert_ids[p] = len(verts)
            verts.append(p)
        return vert_ids[p]

    # For each axis, faces exist where solidity flips between neighbours.
    for axis in range(3):
        shifted = np.roll(padded, -1, axis=axis)
        plus = padded & ~shifted   # solid -> empty while moving +axis
        minus = ~padded & shifted  # empty -> solid while moving +axis
        for mask, outward in ((plus, +1), (minus, -1)):
            for (i, j, k) in zip(*np.nonzero(mask)):
                cell = np.array([i - 1, j - 1, k - 1])
                base = cell.copy()
                base[axis] += 1  # face sits on the +axis side of the cell
                u, w = (axis + 1) % 3, (axis + 2) % 3
                du = np.zeros(3, dtype=int)
                dw = np.zeros(3, dtype=int)
                du[u] = 1
                dw[w] = 1
                c00 = vid(tuple(base))
                c10 = vid(tuple(base + du))
                c11 = vid(tuple(base + du + dw))
                c01 = vid(tuple(base + dw))
                if outward > 0:
                    tris += [(c00, c10, c11), (c00, c11, c01)]
                else:
                    tris += [(c00, c11, c10), (c00, c01, c11)]
    positions = (np.asarray(verts, dtype=np.float64) * voxel_size
                 + np.asarray(origin, dtype=np.float64))
    return clean_mesh(TriangleMesh(positions, np.asarray(tris, dtype=np.int32), name))


def dumbbell(voxel_size: float = 4.0, name="dumbbell") -> TriangleMesh:
    """Two 5x5x5 lobes joined by a 5-voxel bar; mirror-symmetric in x, y, z."""
    occ = np.zeros((15, 5, 5), dtype=bool)
    occ[0:5, :, :] = True
    occ[10:15, :, :] = True
    occ[5:10, 2, 2] = True
    return voxel_mesh(occ, voxel_size, name=name)


def l_bracket(voxel_size: float = 4.0, name="l_bracket") -> TriangleMesh:
    """L-shaped bracket: a 10x3x3 arm with a 3x3x7 upright on one end."""
    occ = np.zeros((10, 3, 10), dtype=bool)
    occ[:, :, 0:3] = True
    occ[0:3, :, 3:10] = True
    return voxel_mesh(occ, voxel_size, name=name)


def hollow_box(voxel_size: float = 4.0, name="hollow_box") -> TriangleMesh:
    """9x9x9 block with a 5x5x5 sealed cavity (wall 2 voxels thick)."""
    occ = np.ones((9, 9, 9), dtype=bool)
    occ[2:7, 2:7, 2:7] = False
    return voxel_mesh(occ, voxel_size, name=name)


def asymmetric_blob(voxel_size: float = 4.0, name="blob") -> TriangleMesh:
    """Face-connected staircase polycube with no mirror symmetry."""
    occ = np.zeros((7, 6, 5), dtype=bool)
    occ[0:4, 0:3, 0:2] = True
    occ[2:7, 1:4, 0:3] = True
    occ[4:6, 2:6, 0:2] = True
    occ[5:7, 1:3, 2:5] = True
    occ[0:2, 0:2, 1:4] = True
    return voxel_mesh(occ, voxel_size, name=name)


def thin_plate(side: float = 20.0, thickness: float = 0.5, name="plate") -> TriangleMesh:
    """Plate thinner than any grid cell, so no cell is fully interior."""
    return box_mesh((side, side, thickness), name=name)


def wedge(size: float = 10.0, length: float = 10.0, name="wedge") -> TriangleMesh:
    """Right triangular prism whose hypotenuse face leans at 45 degrees."""
    s, l = float(size), float(length)
    verts = np.array(
        [
            [0, 0, 0], [s, 0, 0], [0, 0, s],   # triangle at y = 0
            [0, l, 0], [s, l, 0], [0, l, s],   # triangle at y = l
        ],
        dtype=np.float64,
    )
    tris = np.array(
        [
            [0, 1, 2],              # y = 0 cap, normal -y
            [3, 5, 4],              # y = l cap, normal +y
            [0, 4, 1], [0, 3, 4],   # bottom, normal -z
            [0, 2, 5], [0, 5, 3],   # left, normal -x
            [1, 4, 5], [1, 5, 2],   # slanted face
        ],
        dtype=np.int32,
    )
    return TriangleMesh(verts, tris, name)
