"""PNG previews of occupancy grids."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .map_gen import OccupancyGrid  # noqa: E402


def render_grid(grid: OccupancyGrid, path, title: str | None = None, sections=(), dpi: int = 120):
    """Draw ``grid`` in world coordinates; optional cross-sections are outlined on top."""
    x0, y0 = grid.origin[0], grid.origin[1]
    extent = (x0, x0 + grid.width * grid.resolution, y0, y0 + grid.height * grid.resolution)
    aspect = grid.height / max(grid.width, 1)
    fig, ax = plt.subplots(figsize=(6.0, max(2.0, 6.0 * aspect)))
    ax.imshow(
        np.where(grid.cells, 0.0, 1.0),
        cmap="gray",
        vmin=0.0,
        vmax=1.0,
        origin="lower",
        extent=extent,
        interpolation="nearest",
    )
    for cs in sections:
        for poly in cs.polygons:
            xs, ys = poly.exterior.xy
            ax.plot(xs, ys, lw=0.8, color="tab:red")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    # fixed metadata keeps the file byte-stable across runs
    fig.savefig(path, dpi=dpi, metadata={"Software": None})
    plt.close(fig)
    return path
