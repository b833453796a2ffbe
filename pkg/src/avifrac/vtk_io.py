"""Legacy ASCII VTK unstructured-grid writer for field snapshots."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def write_vtk(path, nodes: np.ndarray, elements: np.ndarray,
              point_data: dict[str, np.ndarray] | None = None,
              cell_data: dict[str, np.ndarray] | None = None,
              title: str = "fields") -> None:
    """Write quads with optional point scalars/vectors and cell scalars.

    2D vectors are padded with a zero z component. Output formatting is
    fixed-width so identical states produce identical files.
    """
    nodes = np.asarray(nodes, float)
    elements = np.asarray(elements)
    lines = ["# vtk DataFile Version 3.0", title, "ASCII",
             "DATASET UNSTRUCTURED_GRID",
             f"POINTS {len(nodes)} double"]
    lines += [f"{x:.9e} {y:.9e} 0.0" for x, y in nodes]
    lines.append(f"CELLS {len(elements)} {5 * len(elements)}")
    lines += ["4 " + " ".join(str(int(n)) for n in quad) for quad in elements]
    lines.append(f"CELL_TYPES {len(elements)}")
    lines += ["9"] * len(elements)

    if point_data:
        lines.append(f"POINT_DATA {len(nodes)}")
        for name, arr in point_data.items():
            arr = np.asarray(arr, float)
            if arr.ndim == 1:
                lines.append(f"SCALARS {name} double")
                lines.append("LOOKUP_TABLE default")
                lines += [f"{v:.9e}" for v in arr]
            else:
                lines.append(f"VECTORS {name} double")
                if arr.shape[1] == 2:
                    lines += [f"{v[0]:.9e} {v[1]:.9e} 0.0" for v in arr]
                else:
                    lines += [f"{v[0]:.9e} {v[1]:.9e} {v[2]:.9e}" for v in arr]
    if cell_data:
        lines.append(f"CELL_DATA {len(elements)}")
        for name, arr in cell_data.items():
            arr = np.asarray(arr, float)
            lines.append(f"SCALARS {name} double")
            lines.append("LOOKUP_TABLE default")
            lines += [f"{v:.9e}" for v in arr]
    Path(path).write_text("\n".join(lines) + "\n")
