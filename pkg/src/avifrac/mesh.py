"""Quadrilateral mesh container: loading, validation, topology maps.

Two on-disk formats are supported. The native text format is

    <node count>
    x y                  (one line per node)
    <element count>
    n0 n1 n2 n3          (one line per element, counterclockwise)
    edge <elem> <local> <tag>   (optional tagged boundary edges)

with '#' comments allowed. A quad-only subset of the Gmsh ASCII v2 format is
also accepted; physical groups on line elements become edge tags.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import element as _element

# local node pairs of the four element edges, counterclockwise
EDGE_NODES = ((0, 1), (1, 2), (2, 3), (3, 0))


class MeshError(ValueError):
    pass


@dataclass
class Mesh:
    """Immutable mesh with derived topology.

    nodes : (n_nodes, 2) float64 reference coordinates in meters
    elements : (n_elems, 4) int64 connectivity, counterclockwise
    edge_tags : mapping tag -> list of (element, local_edge)
    """

    nodes: np.ndarray
    elements: np.ndarray
    edge_tags: dict[str, list[tuple[int, int]]] = field(default_factory=dict)
    # derived
    _node_ptr: np.ndarray = field(init=False, repr=False)
    _node_dat: np.ndarray = field(init=False, repr=False)
    _patch_ptr: np.ndarray = field(init=False, repr=False)
    _patch_dat: np.ndarray = field(init=False, repr=False)
    _patch_rows: np.ndarray = field(init=False, repr=False)
    boundary: list[tuple[int, int]] = field(init=False, repr=False)

    def __post_init__(self):
        self.nodes = np.ascontiguousarray(self.nodes, dtype=np.float64)
        self.elements = np.ascontiguousarray(self.elements, dtype=np.int64)
        self._validate()
        self._build_node_map()
        self._build_patches()
        self._build_boundary()
        self.nodes.setflags(write=False)
        self.elements.setflags(write=False)

    # -- basic queries ----------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    def elements_of_node(self, a: int) -> np.ndarray:
        return self._node_dat[self._node_ptr[a]:self._node_ptr[a + 1]]

    def patch(self, e: int) -> np.ndarray:
        return self._patch_dat[self._patch_ptr[e]:self._patch_ptr[e + 1]]

    def patch_csr(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """CSR patch arrays (ptr, elems, rows) consumed by the kernels."""
        return self._patch_ptr, self._patch_dat, self._patch_rows

    def self_patch_csr(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Degenerate patches containing only the element itself (element-local
        solver mode, the diagnostic no-patch formulation)."""
        n = self.n_elements
        ptr = np.arange(n + 1, dtype=np.int64)
        dat = np.arange(n, dtype=np.int64)
        rows = np.tile(np.arange(4, dtype=np.int64), (n, 1))
        return ptr, dat, rows

    def edge_node_ids(self, e: int, local: int) -> tuple[int, int]:
        i, j = EDGE_NODES[local]
        return int(self.elements[e, i]), int(self.elements[e, j])

    def edge_length(self, e: int, local: int) -> float:
        a, b = self.edge_node_ids(e, local)
        return float(np.linalg.norm(self.nodes[b] - self.nodes[a]))

    # -- construction helpers ----------------------------------------------

    def _validate(self):
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 2:
            raise MeshError("nodes must be an (n, 2) array")
        if self.elements.ndim != 2 or self.elements.shape[1] != 4:
            raise MeshError("elements must be an (n, 4) array of quads")
        if not np.all(np.isfinite(self.nodes)):
            raise MeshError("non-finite node coordinates")
        if self.elements.size:
            if self.elements.min() < 0 or self.elements.max() >= self.n_nodes:
                raise MeshError("element references a node outside 0..n_nodes-1")
        for e in range(self.n_elements):
            if len(set(self.elements[e])) != 4:
                raise MeshError(f"element {e} has repeated nodes")
        # positive Jacobians at all Gauss points (raises on inverted elements)
        try:
            _element.build_cache(self.nodes, self.elements)
        except ValueError as exc:
            raise MeshError(str(exc)) from exc

    def _build_node_map(self):
        flat = self.elements.ravel()
        order = np.argsort(flat, kind="stable")
        counts = np.bincount(flat, minlength=self.n_nodes)
        self._node_ptr = np.zeros(self.n_nodes + 1, dtype=np.int64)
        np.cumsum(counts, out=self._node_ptr[1:])
        self._node_dat = (order // 4).astype(np.int64)

    def _build_patches(self):
        ptr = np.zeros(self.n_elements + 1, dtype=np.int64)
        chunks = []
        for e in range(self.n_elements):
            neigh = np.unique(np.concatenate(
                [self.elements_of_node(a) for a in self.elements[e]]))
            chunks.append(neigh)
            ptr[e + 1] = ptr[e] + neigh.size
        self._patch_ptr = ptr
        self._patch_dat = (np.concatenate(chunks) if chunks
                           else np.empty(0, dtype=np.int64)).astype(np.int64)
        # row map: local node i of patch member -> index within the nodes of e
        rows = np.full((self._patch_dat.size, 4), -1, dtype=np.int64)
        for e in range(self.n_elements):
            local = {int(a): i for i, a in enumerate(self.elements[e])}
            for k in range(ptr[e], ptr[e + 1]):
                ep = self._patch_dat[k]
                for i in range(4):
                    rows[k, i] = local.get(int(self.elements[ep, i]), -1)
        self._patch_rows = rows

    def _build_boundary(self):
        seen: dict[tuple[int, int], list[tuple[int, int]]] = {}
        for e in range(self.n_elements):
            for local, (i, j) in enumerate(EDGE_NODES):
                a, b = int(self.elements[e, i]), int(self.elements[e, j])
                key = (a, b) if a < b else (b, a)
                seen.setdefault(key, []).append((e, local))
        boundary = []
        for key, owners in seen.items():
            if len(owners) == 1:
                boundary.append(owners[0])
            elif len(owners) > 2:
                raise MeshError(f"edge {key} shared by more than two elements")
        boundary.sort()
        self.boundary = boundary
        boundary_set = set(boundary)
        for tag, edges in self.edge_tags.items():
            for (e, local) in edges:
                if not (0 <= e < self.n_elements) or not (0 <= local < 4):
                    raise MeshError(f"tag {tag} references unknown edge {(e, local)}")
                if (e, local) not in boundary_set:
                    raise MeshError(f"tag {tag} marks interior edge {(e, local)}")


def select_boundary(mesh: Mesh, tag: str | None = None, predicate=None,
                    warn: bool = True) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Pick boundary edges by tag and/or a coordinate predicate.

    ``predicate(x, y)`` is evaluated at both edge endpoints; an edge is
    selected when every endpoint satisfies it. Returns the sorted unique node
    ids of the selected edges and the edge list. An empty selection warns
    rather than raises.
    """
    if tag is not None:
        candidates = list(mesh.edge_tags.get(tag, []))
    else:
        candidates = list(mesh.boundary)
    edges = []
    for (e, local) in candidates:
        if predicate is not None:
            a, b = mesh.edge_node_ids(e, local)
            if not (predicate(*mesh.nodes[a]) and predicate(*mesh.nodes[b])):
                continue
        edges.append((e, local))
    node_ids = sorted({n for (e, local) in edges for n in mesh.edge_node_ids(e, local)})
    if not edges and warn:
        warnings.warn("boundary selection matched nothing", stacklevel=2)
    return np.array(node_ids, dtype=np.int64), edges


def build_patches(mesh: Mesh) -> dict[int, np.ndarray]:
    """Patch map e -> elements sharing at least one node with e (including e)."""
    return {e: mesh.patch(e) for e in range(mesh.n_elements)}


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

def load_mesh(path: str | Path, fmt: str | None = None) -> Mesh:
    """Load a mesh from the native text format or a Gmsh ASCII v2 file.

    Format is inferred from the extension ('.msh' -> gmsh) unless given
    explicitly as 'native' or 'msh'.
    """
    path = Path(path)
    if fmt is None:
        fmt = "msh" if path.suffix.lower() == ".msh" else "native"
    text = path.read_text()
    if fmt == "msh":
        return _parse_msh(text)
    if fmt == "native":
        return _parse_native(text)
    raise ValueError(f"unknown mesh format {fmt!r}")


def _parse_native(text: str) -> Mesh:
    lines = []
    for raw in text.splitlines():
        stripped = raw.split("#", 1)[0].strip()
        if stripped:
            lines.append(stripped)
    it = iter(lines)

    def next_line(what):
        try:
            return next(it)
        except StopIteration:
            raise MeshError(f"unexpected end of file while reading {what}") from None

    try:
        n_nodes = int(next_line("node count"))
        nodes = np.empty((n_nodes, 2))
        for i in range(n_nodes):
            parts = next_line(f"node {i}").split()
            nodes[i] = [float(parts[0]), float(parts[1])]
        n_elems = int(next_line("element count"))
        elements = np.empty((n_elems, 4), dtype=np.int64)
        for i in range(n_elems):
            parts = next_line(f"element {i}").split()
            if len(parts) != 4:
                raise MeshError(f"element {i}: expected 4 node ids, got {len(parts)}")
            elements[i] = [int(p) for p in parts]
    except (ValueError, IndexError) as exc:
        raise MeshError(f"cannot parse mesh file: {exc}") from exc

    edge_tags: dict[str, list[tuple[int, int]]] = {}
    for rest in it:
        parts = rest.split()
        if parts[0] != "edge" or len(parts) != 4:
            raise MeshError(f"unexpected trailer line {rest!r}")
        e, local, tag = int(parts[1]), int(parts[2]), parts[3]
        edge_tags.setdefault(tag, []).append((e, local))
    return Mesh(nodes, elements, edge_tags)


def _parse_msh(text: str) -> Mesh:
    lines = text.splitlines()
    sections: dict[str, list[str]] = {}
    i = 0
    while i < len(lines):
        line = lines[i].strip()
        if line.startswith("$") and not line.startswith("$End"):
            name = line[1:]
            j = i + 1
            body = []
            while j < len(lines) and lines[j].strip() != f"$End{name}":
                body.append(lines[j].strip())
                j += 1
            if j == len(lines):
                raise MeshError(f"unterminated section {name}")
            sections[name] = body
            i = j + 1
        else:
            i += 1
    if "Nodes" not in sections or "Elements" not in sections:
        raise MeshError("msh file is missing $Nodes or $Elements")

    phys_names: dict[int, str] = {}
    for line in sections.get("PhysicalNames", [])[1:]:
        parts = line.split(None, 2)
        if len(parts) == 3:
            phys_names[int(parts[1])] = parts[2].strip().strip('"')

    body = sections["Nodes"]
    n_nodes = int(body[0])
    id_map: dict[int, int] = {}
    nodes = np.empty((n_nodes, 2))
    for idx, line in enumerate(body[1:1 + n_nodes]):
        parts = line.split()
        id_map[int(parts[0])] = idx
        nodes[idx] = [float(parts[1]), float(parts[2])]

    quads: list[list[int]] = []
    tagged_lines: list[tuple[int, int, str]] = []  # (node a, node b, tag)
    body = sections["Elements"]
    n_entries = int(body[0])
    for line in body[1:1 + n_entries]:
        parts = [int(p) for p in line.split()]
        etype, ntags = parts[1], parts[2]
        tags = parts[3:3 + ntags]
        conn = parts[3 + ntags:]
        if etype == 3:
            if len(conn) != 4:
                raise MeshError("malformed quad entry in msh file")
            quads.append([id_map[c] for c in conn])
        elif etype == 1:
            tag = phys_names.get(tags[0], str(tags[0])) if tags else "untagged"
            tagged_lines.append((id_map[conn[0]], id_map[conn[1]], tag))
        elif etype == 15:
            continue  # point elements carry no surface information here
        else:
            raise MeshError(f"unsupported msh element type {etype}; only 4-node "
                            "quads (3) and boundary lines (1) are accepted")
    if not quads:
        raise MeshError("msh file contains no quadrilaterals")
    elements = np.array(quads, dtype=np.int64)

    # attach physical line tags to the matching element edges
    edge_owner: dict[tuple[int, int], tuple[int, int]] = {}
    for e in range(elements.shape[0]):
        for local, (i, j) in enumerate(EDGE_NODES):
            a, b = int(elements[e, i]), int(elements[e, j])
            key = (a, b) if a < b else (b, a)
            edge_owner.setdefault(key, (e, local))
    edge_tags: dict[str, list[tuple[int, int]]] = {}
    for (a, b, tag) in tagged_lines:
        key = (a, b) if a < b else (b, a)
        if key not in edge_owner:
            raise MeshError(f"tagged line {key} does not match any element edge")
        edge_tags.setdefault(tag, []).append(edge_owner[key])
    return Mesh(nodes, elements, edge_tags)


def save_mesh(mesh_or_arrays, path: str | Path,
              edge_tags: dict[str, list[tuple[int, int]]] | None = None) -> None:
    """Write the native text format. Accepts a Mesh or a (nodes, elements) pair."""
    if isinstance(mesh_or_arrays, Mesh):
        nodes, elements = mesh_or_arrays.nodes, mesh_or_arrays.elements
        edge_tags = mesh_or_arrays.edge_tags if edge_tags is None else edge_tags
    else:
        nodes, elements = mesh_or_arrays
        edge_tags = edge_tags or {}
    out = [str(len(nodes))]
    out += [f"{x:.17g} {y:.17g}" for x, y in np.asarray(nodes, float)]
    out.append(str(len(elements)))
    out += [" ".join(str(int(n)) for n in row) for row in np.asarray(elements)]
    for tag in sorted(edge_tags):
        for (e, local) in edge_tags[tag]:
            out.append(f"edge {e} {local} {tag}")
    Path(path).write_text("\n".join(out) + "\n")
