"""Uniform rectangular meshes of the unit square.

Cells are indexed ``c = ix * n + iy`` and vertices ``v = vx * (n + 1) + vy``,
so every ordering in this module is lexicographic with x as the major key.
Vertical faces (normal ``+e_x``) sit at ``x = a * h`` and are indexed
``a * n + b``; horizontal faces (normal ``+e_y``) sit at ``y = b * h`` and
are indexed ``a * (n + 1) + b``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Faces:
    """Face lists of one orientation.

    ``plus``/``minus`` hold the adjacent cell on the side the normal points
    away from / towards (``-1`` where there is no such cell).
    """

    plus: np.ndarray
    minus: np.ndarray
    normal: np.ndarray  # (nfaces, 2)
    index: np.ndarray  # global face index within its orientation family


@dataclass(frozen=True, eq=False)
class Mesh:
    n_per_side: int
    parent: "Mesh | None" = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.n_per_side

    @property
    def h(self) -> float:
        return 1.0 / self.n_per_side

    @property
    def n_cells(self) -> int:
        return self.n_per_side**2

    @property
    def n_vertical_faces(self) -> int:
        return (self.n + 1) * self.n

    @property
    def n_horizontal_faces(self) -> int:
        return self.n * (self.n + 1)

    def cell_index(self, ix, iy):
        return np.asarray(ix) * self.n + np.asarray(iy)

    def cell_coords(self) -> np.ndarray:
        """Integer grid coordinates ``(ix, iy)`` for every cell."""
        c = np.arange(self.n_cells)
        return np.stack([c // self.n, c % self.n], axis=1)

    def cell_origins(self) -> np.ndarray:
        return self.cell_coords() * self.h

    def vertical_face(self, a, b):
        return np.asarray(a) * self.n + np.asarray(b)

    def horizontal_face(self, a, b):
        return np.asarray(a) * (self.n + 1) + np.asarray(b)

    def interior_faces(self) -> tuple[Faces, Faces]:
        """Interior vertical and horizontal faces, normal pointing from plus to minus."""
        n = self.n
        a, b = np.meshgrid(np.arange(1, n), np.arange(n), indexing="ij")
        a, b = a.ravel(), b.ravel()
        vert = Faces(
            plus=self.cell_index(a - 1, b),
            minus=self.cell_index(a, b),
            normal=np.tile([1.0, 0.0], (a.size, 1)),
            index=self.vertical_face(a, b),
        )
        a, b = np.meshgrid(np.arange(n), np.arange(1, n), indexing="ij")
        a, b = a.ravel(), b.ravel()
        horiz = Faces(
            plus=self.cell_index(a, b - 1),
            minus=self.cell_index(a, b),
            normal=np.tile([0.0, 1.0], (a.size, 1)),
            index=self.horizontal_face(a, b),
        )
        return vert, horiz

    def boundary_faces(self) -> dict[str, Faces]:
        """Boundary faces keyed by side; ``plus`` is the owning cell, normal is outward."""
        n = self.n
        s = np.arange(n)
        empty = -np.ones(n, dtype=int)
        return {
            "left": Faces(self.cell_index(0, s), empty, np.tile([-1.0, 0.0], (n, 1)),
                          self.vertical_face(0, s)),
            "right": Faces(self.cell_index(n - 1, s), empty, np.tile([1.0, 0.0], (n, 1)),
                           self.vertical_face(n, s)),
            "bottom": Faces(self.cell_index(s, 0), empty, np.tile([0.0, -1.0], (n, 1)),
                            self.horizontal_face(s, 0)),
            "top": Faces(self.cell_index(s, n - 1), empty, np.tile([0.0, 1.0], (n, 1)),
                         self.horizontal_face(s, n)),
        }

    @property
    def n_interior_faces(self) -> int:
        return 2 * self.n * (self.n - 1)

    @property
    def n_boundary_faces(self) -> int:
        return 4 * self.n

    def hierarchy(self) -> list["Mesh"]:
        """Coarsest-first list of this mesh and all its ancestors."""
        out = [self]
        while out[-1].parent is not None:
            out.append(out[-1].parent)
        return out[::-1]


@dataclass(frozen=True)
class Patch:
    vertex_id: int
    cells: tuple[int, ...]
    is_interior: bool


def build_uniform_mesh(n_per_side: int) -> Mesh:
    if int(n_per_side) != n_per_side or n_per_side < 1:
        raise ValueError(f"n_per_side must be a positive integer, got {n_per_side!r}")
    return Mesh(int(n_per_side))


def refine(m: Mesh) -> Mesh:
    """2x2 refinement of every cell, linked back to ``m``."""
    return Mesh(2 * m.n_per_side, parent=m)


def build_hierarchy(n_coarse: int, levels: int) -> list[Mesh]:
    """Nested meshes ``n_coarse * 2**l`` for ``l = 0 .. levels - 1``, coarsest first."""
    meshes = [build_uniform_mesh(n_coarse)]
    for _ in range(levels - 1):
        meshes.append(refine(meshes[-1]))
    return meshes


def parent_cell(fine: Mesh) -> np.ndarray:
    """Index of the parent cell for every cell of ``fine``."""
    if fine.parent is None:
        raise ValueError("mesh has no parent")
    ij = fine.cell_coords()
    return fine.parent.cell_index(ij[:, 0] // 2, ij[:, 1] // 2)


def all_vertex_patches(m: Mesh) -> list[Patch]:
    """Patches around every vertex, including two-cell boundary and one-cell corner patches."""
    n = m.n
    patches = []
    for vx in range(n + 1):
        for vy in range(n + 1):
            cells = tuple(
                int(m.cell_index(ix, iy))
                for ix in (vx - 1, vx)
                for iy in (vy - 1, vy)
                if 0 <= ix < n and 0 <= iy < n
            )
            patches.append(Patch(vx * (n + 1) + vy, cells, len(cells) == 4))
    return patches


def vertex_patches(m: Mesh) -> list[Patch]:
    """Interior-vertex patches (4 cells each), ordered by vertex with x major."""
    if m.n_per_side < 2:
        raise ValueError("vertex patches need n_per_side >= 2 (no interior vertex)")
    return [p for p in all_vertex_patches(m) if p.is_interior]
