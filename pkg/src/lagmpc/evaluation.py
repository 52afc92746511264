"""Control-law maps over the state box with one-step constraint checks."""

from dataclasses import dataclass

import numpy as np

from .closed_loop import ControllerError


@dataclass(frozen=True)
class Grid:
    lower: tuple
    upper: tuple
    counts: tuple = (100, 100)

    @classmethod
    def over(cls, box, counts=(100, 100)):
        return cls(tuple(box.lower), tuple(box.upper), tuple(counts))

    def nodes(self):
        """Row-major node list; the last axis varies fastest."""
        axes = [np.linspace(lo, hi, n) for lo, hi, n in zip(self.lower, self.upper, self.counts)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass
class LawMap:
    nodes: np.ndarray
    u: np.ndarray
    excess: np.ndarray
    feasible: np.ndarray
    grid: Grid = None

    @property
    def violation(self):
        return np.any(self.excess != 0.0, axis=1)

    def __len__(self):
        return len(self.u)


def control_law_map(controller, plant, grid, X=None):
    """Evaluate the raw law at each grid node and flag ``f(x, u)`` outside X.

    The offset-free correction is not applied.  For online laws the
    feasibility flag records whether the solver found a feasible solution.
    """
    X = X if X is not None else controller.cfg.X
    nodes = grid.nodes() if isinstance(grid, Grid) else np.asarray(grid, dtype=float)
    if len(nodes) and not np.all(X.contains(nodes)):
        raise ValueError("grid extends outside the state constraint set")
    if controller.spec.kind.is_nn:
        u = np.asarray(controller.law(nodes), dtype=float).reshape(-1)
        feasible = np.ones(len(nodes), dtype=bool)
    else:
        u = np.empty(len(nodes))
        feasible = np.ones(len(nodes), dtype=bool)
        for i, x in enumerate(nodes):
            try:
                u[i] = controller.raw(x)
            except ControllerError:
                u[i] = np.nan
                feasible[i] = False
    excess = np.zeros_like(nodes)
    ok = ~np.isnan(u)
    if np.any(ok):
        excess[ok] = X.violation(plant.step(nodes[ok], u[ok]))
    return LawMap(nodes=nodes, u=u, excess=excess, feasible=feasible,
                  grid=grid if isinstance(grid, Grid) else None)


def violation_count(law_map, component=None):
    """Nodes whose successor leaves X, optionally for one state component only."""
    if len(law_map) == 0:
        return 0
    if component is None:
        return int(np.count_nonzero(law_map.violation))
    return int(np.count_nonzero(law_map.excess[:, component]))


def one_step_admissible(plant, X, U, nodes):
    """Whether some input in U keeps ``f(x, u)`` inside X, for a control-affine plant.

    Each successor component is affine in u, so the admissible inputs form an
    interval that is intersected exactly.
    """
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    u_lo, u_hi = float(U.lower[0]), float(U.upper[0])
    base = plant.step(nodes, np.full(len(nodes), u_lo))
    slope = plant.input_gradient(nodes, None)
    lo = np.full(len(nodes), u_lo)
    hi = np.full(len(nodes), u_hi)
    with np.errstate(divide="ignore", invalid="ignore"):
        for k in range(nodes.shape[1]):
            s = slope[:, k]
            for bound, sign in ((X.lower[k], 1.0), (X.upper[k], -1.0)):
                # sign * (base + s (u - u_lo)) >= sign * bound
                cs = sign * s
                rhs = sign * (bound - base[:, k])
                flat = cs == 0.0
                lo = np.where(~flat & (cs > 0), np.maximum(lo, u_lo + rhs / cs), lo)
                hi = np.where(~flat & (cs < 0), np.minimum(hi, u_lo + rhs / cs), hi)
                hi = np.where(flat & (rhs > 0), -np.inf, hi)
    return lo <= hi


def color_norm(law_map, u_min, u_max):
    import matplotlib.colors as mcolors
    return mcolors.Normalize(vmin=u_min, vmax=u_max, clip=True)


def export_heatmap(law_map, path, u_min=0.1, u_max=0.9, title=None):
    """Write ``<path>.csv`` with node data and ``<path>.svg`` with the heatmap.

    Returns the two written paths.
    """
    from pathlib import Path

    from .io import write_map

    path = Path(path)
    csv_path = path.with_suffix(".csv")
    svg_path = path.with_suffix(".svg")
    write_map(csv_path, law_map)

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    norm = color_norm(law_map, u_min, u_max)
    g = law_map.grid
    if g is not None and len(g.counts) == 2 and len(law_map) == g.counts[0] * g.counts[1]:
        U = law_map.u.reshape(g.counts)
        x1 = np.linspace(g.lower[0], g.upper[0], g.counts[0])
        x2 = np.linspace(g.lower[1], g.upper[1], g.counts[1])
        mesh = ax.pcolormesh(x1, x2, U.T, norm=norm, cmap="viridis", shading="nearest")
    else:
        mesh = ax.scatter(law_map.nodes[:, 0], law_map.nodes[:, 1], c=law_map.u, norm=norm,
                          cmap="viridis", s=8)
    v = law_map.violation
    if np.any(v):
        ax.plot(law_map.nodes[v, 0], law_map.nodes[v, 1], "r.", ms=3, label="x+ outside X")
        ax.legend(loc="lower right", fontsize=7)
    fig.colorbar(mesh, ax=ax, label="u")
    ax.set_xlabel("x1 (inductor current)")
    ax.set_ylabel("x2 (capacitor voltage)")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    # fixed metadata and id salt keep the SVG byte-stable across runs
    with matplotlib.rc_context({"svg.hashsalt": "lagmpc"}):
        fig.savefig(svg_path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return csv_path, svg_path
