"""
Run visualization using Plotly: energy ledger, interface history and nodal fields
"""

from typing import Dict, Optional, Sequence

import numpy as np
import pandas as pd
import plotly.graph_objects as go

from config.settings import ENERGY_COLORS

ENERGY_SERIES = ("total", "bulk", "load_work", "crack_term", "cumulative_dissipation")


def _empty_figure(message: str, height: int) -> go.Figure:
    fig = go.Figure()
    fig.add_annotation(
        text=message,
        xref="paper", yref="paper",
        x=0.5, y=0.5,
        showarrow=False,
        font=dict(size=20)
    )
    fig.update_layout(height=height)
    return fig


def create_energy_chart(trace: pd.DataFrame,
                        series: Sequence[str] = ENERGY_SERIES,
                        show_residual: bool = True,
                        height: int = 500) -> go.Figure:
    """
    Energy components over time

    Args:
        trace: Trace table (trace.csv or EvolutionTrace.to_frame())
        series: Columns to draw
        show_residual: Add the balance residual on a secondary axis
        height: Chart height in pixels

    Returns:
        Plotly Figure object
    """
    if trace.empty or "time" not in trace.columns:
        return _empty_figure("No trace to display", height)

    fig = go.Figure()
    for name in series:
        if name not in trace.columns:
            continue
        fig.add_trace(go.Scatter(
            x=trace["time"], y=trace[name], mode="lines", name=name,
            line=dict(color=ENERGY_COLORS.get(name)),
        ))
    if show_residual and "balance_residual" in trace.columns:
        fig.add_trace(go.Scatter(
            x=trace["time"], y=trace["balance_residual"], mode="lines", name="balance_residual",
            line=dict(color=ENERGY_COLORS["balance_residual"], dash="dot"), yaxis="y2",
        ))
        fig.update_layout(yaxis2=dict(title="residual", overlaying="y", side="right"))
    fig.update_layout(height=height, xaxis_title="t", yaxis_title="energy", hovermode="x unified")
    return fig


def create_interface_history_chart(history: Dict,
                                   knots: Optional[Sequence[int]] = None,
                                   height: int = 500) -> go.Figure:
    """
    γ and φ([u]) along the interface nodes at selected knots

    Args:
        history: Interface history document (γ and φ per knot and node)
        knots: Knot indices to draw (defaults to the last knot)
        height: Chart height in pixels
    """
    gamma = np.asarray(history.get("gamma", []), dtype=float)
    if gamma.ndim != 2 or gamma.shape[1] == 0:
        return _empty_figure("No interface nodes to display", height)
    phi = np.asarray(history["phi"], dtype=float)
    times = history.get("times", list(range(gamma.shape[0])))
    knots = [gamma.shape[0] - 1] if knots is None else list(knots)
    nodes = np.arange(gamma.shape[1])

    fig = go.Figure()
    for k in knots:
        fig.add_trace(go.Scatter(x=nodes, y=gamma[k], mode="lines+markers", name=f"γ, t={times[k]:.4g}"))
        fig.add_trace(go.Scatter(x=nodes, y=phi[k], mode="markers", name=f"φ([u]), t={times[k]:.4g}",
                                 marker=dict(symbol="x")))
    fig.update_layout(height=height, xaxis_title="interface node", yaxis_title="density")
    return fig


def create_field_chart(snapshots: Dict, index: int = -1, component: int = 0, height: int = 600) -> go.Figure:
    """
    Nodal field of one snapshot

    1D meshes give a line plot over x; 2D meshes a scatter of the nodes
    colored by the chosen component.
    """
    entries = snapshots.get("snapshots", [])
    if not entries:
        return _empty_figure("No snapshots to display", height)
    entry = entries[index]
    nodes = np.asarray(snapshots["nodes"], dtype=float)
    values = np.asarray(entry["u"], dtype=float).reshape(nodes.shape[0], -1)[:, component]
    title = f"u[{component}] at t={entry['time']:.4g}"

    fig = go.Figure()
    if snapshots.get("dimension", nodes.shape[1]) == 1:
        order = np.argsort(nodes[:, 0], kind="stable")
        fig.add_trace(go.Scatter(x=nodes[order, 0], y=values[order], mode="lines+markers", name="u"))
        fig.update_layout(xaxis_title="x", yaxis_title="u")
    else:
        fig.add_trace(go.Scatter(
            x=nodes[:, 0], y=nodes[:, 1], mode="markers",
            marker=dict(color=values, colorscale="Viridis", showscale=True, size=6),
            text=[f"{v:.6g}" for v in values], name="u",
        ))
        fig.update_layout(xaxis_title="x", yaxis_title="y", yaxis=dict(scaleanchor="x"))
    fig.update_layout(title=title, height=height)
    return fig
