"""SVG trajectory plot: own ship in black, target coloured by risk."""

from __future__ import annotations

from pathlib import Path

RISK_CMAP = "jet"
_DECIMATE = 10


def risk_color(risk: float) -> str:
    """Hex colour used for a given risk level on the target track."""
    from matplotlib import colormaps
    from matplotlib.colors import to_hex

    return to_hex(colormaps[RISK_CMAP](min(max(risk, 0.0), 1.0)))


def plot_trajectory(log, path: str | Path, title: str = "") -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import numpy as np
    from matplotlib.collections import LineCollection

    own_x = log.column("own_x")[::_DECIMATE]
    own_y = log.column("own_y")[::_DECIMATE]
    tgt_x = log.column("target_x")[::_DECIMATE]
    tgt_y = log.column("target_y")[::_DECIMATE]
    risk = np.asarray(log.step_risk)[::_DECIMATE]

    with matplotlib.rc_context({"svg.hashsalt": "colregs-sim", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(7, 7))
        # East on the horizontal axis, North up
        ax.plot(own_y, own_x, color="black", linewidth=1.5, label="own ship")
        if len(tgt_x) > 1:
            points = np.column_stack([tgt_y, tgt_x]).reshape(-1, 1, 2)
            segments = np.concatenate([points[:-1], points[1:]], axis=1)
            lc = LineCollection(segments, cmap=RISK_CMAP, linewidths=2.0)
            lc.set_array(risk[:-1])
            lc.set_clim(0.0, 1.0)
            ax.add_collection(lc)
            fig.colorbar(lc, ax=ax, label="risk", shrink=0.7)
        else:
            ax.plot(tgt_y, tgt_x, "o", color=risk_color(float(risk[0]) if len(risk) else 0.0))
        if log.waypoints:
            wx = [p[0] for p in log.waypoints]
            wy = [p[1] for p in log.waypoints]
            ax.plot(wy, wx, "s", color="grey", markersize=6, label="waypoints")
        ax.set_xlabel("East [m]")
        ax.set_ylabel("North [m]")
        # frame the tracks; distant route waypoints may fall outside
        xs = np.concatenate([own_y, tgt_y])
        ys = np.concatenate([own_x, tgt_x])
        pad = max(200.0, 0.05 * max(np.ptp(xs), np.ptp(ys)))
        ax.set_xlim(xs.min() - pad, xs.max() + pad)
        ax.set_ylim(ys.min() - pad, ys.max() + pad)
        ax.set_aspect("equal", adjustable="box")
        ax.legend(loc="best")
        if title:
            ax.set_title(title)
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return Path(path)
