"""
Structured triangulations of the unit square.

Every square cell is split along its lower-left to upper-right diagonal.
Triangles are stored counterclockwise; local side ``s`` of a triangle joins
its local vertices ``s`` and ``(s + 1) % 3``.  Faces are identified by their
sorted vertex pair.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument

DIAGONALS = ("lower-left-to-upper-right",)


@dataclass(frozen=True, eq=False)
class Mesh:
    """
    Triangulation with face connectivity.

    Attributes
    ----------
    vertices : (V, 2) float array
    triangles : (T, 3) int array, counterclockwise
    faces : (F, 2) int array, sorted vertex pairs
    face_elements : (F, 2) int array
        Adjacent elements; the second entry is -1 for boundary faces.
    face_sides : (F, 2) int array
        Local side index of the face in each adjacent element (-1 if absent).
    element_faces : (T, 3) int array
        Global face index of every local side.
    n : int
        Subdivisions per axis.
    h : float
        Maximum element diameter.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    faces: np.ndarray
    face_elements: np.ndarray
    face_sides: np.ndarray
    element_faces: np.ndarray
    n: int
    h: float
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_elements(self):
        return len(self.triangles)

    @property
    def n_faces(self):
        return len(self.faces)

    @property
    def face_is_boundary(self):
        return self.face_elements[:, 1] < 0

    @property
    def boundary_faces(self):
        return np.flatnonzero(self.face_is_boundary)

    @property
    def interior_faces(self):
        return np.flatnonzero(~self.face_is_boundary)

    @property
    def face_class(self):
        return np.where(self.face_is_boundary, "boundary", "interior")

    def signed_areas(self):
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def side_vectors(self):
        """Edge vectors from local vertex ``s`` to ``s + 1``, shape (T, 3, 2)."""
        p = self.vertices[self.triangles]
        return np.roll(p, -1, axis=1) - p

    def side_lengths(self):
        return np.linalg.norm(self.side_vectors(), axis=2)

    def normals(self):
        """Outward unit normals of all local sides, shape (T, 3, 2)."""
        if "normals" not in self._cache:
            d = self.side_vectors()
            nrm = np.stack([d[..., 1], -d[..., 0]], axis=-1)
            nrm /= np.linalg.norm(nrm, axis=2, keepdims=True)
            nrm.setflags(write=False)
            self._cache["normals"] = nrm
        return self._cache["normals"]

    def side_is_boundary(self):
        """Boolean (T, 3) mask of local sides lying on the domain boundary."""
        return self.face_is_boundary[self.element_faces]

    def outward_normal(self, element, local_side):
        if not 0 <= element < self.n_elements:
            raise InvalidArgument(f"element index {element} out of range")
        if not 0 <= local_side < 3:
            raise InvalidArgument(f"local side {local_side} out of range")
        return self.normals()[element, local_side].copy()

    def boundary_vertex_mask(self):
        x = self.vertices
        tol = 1e-12
        return ((np.abs(x[:, 0]) < tol) | (np.abs(x[:, 0] - 1) < tol)
                | (np.abs(x[:, 1]) < tol) | (np.abs(x[:, 1] - 1) < tol))

    def dump(self, path):
        """Write vertices then triangles as plain whitespace-separated text."""
        with open(path, "w") as fh:
            fh.write(f"# vertices {self.n_vertices}\n")
            for x, y in self.vertices:
                fh.write(f"{float(x)!r} {float(y)!r}\n")
            fh.write(f"# triangles {self.n_elements}\n")
            for a, b, c in self.triangles:
                fh.write(f"{a} {b} {c}\n")


def _connectivity(triangles):
    # every local side -> sorted vertex pair -> unique face id
    T = len(triangles)
    a = triangles
    b = np.roll(triangles, -1, axis=1)
    pairs = np.sort(np.stack([a, b], axis=-1).reshape(-1, 2), axis=1)
    faces, inverse = np.unique(pairs, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    element_faces = inverse.reshape(T, 3)

    F = len(faces)
    face_elements = -np.ones((F, 2), dtype=np.int64)
    face_sides = -np.ones((F, 2), dtype=np.int64)
    elem = np.repeat(np.arange(T), 3)
    side = np.tile(np.arange(3), T)
    for f, e, s in zip(inverse, elem, side):
        slot = 0 if face_elements[f, 0] < 0 else 1
        if slot == 1 and face_elements[f, 1] >= 0:
            raise InvalidArgument(f"face {f} shared by more than two elements")
        face_elements[f, slot] = e
        face_sides[f, slot] = s
    return faces, face_elements, face_sides, element_faces


def build_structured(n, diagonal="lower-left-to-upper-right"):
    """
    Uniform triangulation of [0, 1]^2 with ``n`` cells per axis.

    Parameters
    ----------
    n : int
        Number of subdivisions per axis, at least 1.
    diagonal : str
        Only ``"lower-left-to-upper-right"`` is supported.

    Returns
    -------
    Mesh
        ``2 n^2`` triangles, ``(n + 1)^2`` vertices and ``3 n^2 + 2 n`` faces.
    """
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise InvalidArgument(f"n must be a positive integer, got {n!r}")
    if diagonal not in DIAGONALS:
        raise InvalidArgument(f"unsupported diagonal {diagonal!r}")
    n = int(n)

    t = np.arange(n + 1) / n
    X, Y = np.meshgrid(t, t)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(n), np.arange(n))
    i, j = i.ravel(), j.ravel()
    v00 = j * (n + 1) + i
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)

    faces, face_elements, face_sides, element_faces = _connectivity(triangles)
    p = vertices[triangles]
    diam = np.max(np.linalg.norm(p - np.roll(p, -1, axis=1), axis=2))
    return Mesh(vertices=vertices, triangles=triangles, faces=faces,
                face_elements=face_elements, face_sides=face_sides,
                element_faces=element_faces, n=n, h=float(diam))
