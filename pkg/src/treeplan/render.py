"""Plain-SVG and ASCII renderers for grid worlds and phase trajectories.

SVG is written by hand (no raster or plotting dependency): grid cells as
rectangles shaded by reward or height, walls and obstacles solid, the plan
as a polyline with start/goal markers. Pendulum runs render as a phase
portrait: the (angle, velocity) trajectory with the goal region boxed.
"""

from __future__ import annotations

from pathlib import Path

CELL = 24
MARGIN = 10


def _svg_doc(width: float, height: float, body: list[str]) -> str:
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" '
        f'height="{height:.0f}" viewBox="0 0 {width:.0f} {height:.0f}">\n'
        + "\n".join(body)
        + "\n</svg>\n"
    )


def _shade(value: float) -> str:
    v = max(0.0, min(1.0, value))
    level = int(235 - 110 * v)
    return f"rgb({level},{level},{level})"


def render_grid_svg(
    world,
    path_states=None,
    out=None,
    cell_value=None,
    overlays=None,
) -> str:
    """Render a grid world; ``path_states`` is a sequence of states whose
    first two components are cell coordinates. ``cell_value(x, y)`` shades
    cells (rewards, heights); ``overlays`` maps colors to cell lists."""
    w, h = world.width, world.height
    width = 2 * MARGIN + w * CELL
    height = 2 * MARGIN + h * CELL

    def corner(x, y):
        # y axis points up in world coordinates
        return MARGIN + x * CELL, MARGIN + (h - 1 - y) * CELL

    body = []
    walls = getattr(world, "walls", None) or getattr(world, "obstacles", frozenset())
    for x in range(w):
        for y in range(h):
            px, py = corner(x, y)
            if (x, y) in walls:
                fill = "rgb(40,40,40)"
            elif cell_value is not None:
                fill = _shade(cell_value(x, y))
            else:
                fill = "rgb(245,245,245)"
            body.append(
                f'<rect x="{px}" y="{py}" width="{CELL}" height="{CELL}" '
                f'fill="{fill}" stroke="rgb(200,200,200)"/>'
            )
    for color, cells in (overlays or {}).items():
        for x, y in cells:
            px, py = corner(x, y)
            body.append(
                f'<rect x="{px + 4}" y="{py + 4}" width="{CELL - 8}" '
                f'height="{CELL - 8}" fill="none" stroke="{color}" stroke-width="2"/>'
            )
    if path_states:
        points = []
        for s in path_states:
            px, py = corner(s[0], s[1])
            points.append(f"{px + CELL / 2:.0f},{py + CELL / 2:.0f}")
        body.append(
            f'<polyline points="{" ".join(points)}" fill="none" '
            f'stroke="rgb(200,60,60)" stroke-width="3"/>'
        )
        sx, sy = corner(path_states[0][0], path_states[0][1])
        body.append(
            f'<circle cx="{sx + CELL / 2}" cy="{sy + CELL / 2}" r="6" fill="rgb(60,120,220)"/>'
        )
    goal = getattr(world, "goal", None)
    if goal is not None:
        gx, gy = corner(goal[0], goal[1])
        body.append(
            f'<rect x="{gx + 6}" y="{gy + 6}" width="{CELL - 12}" height="{CELL - 12}" '
            f'fill="rgb(230,190,60)"/>'
        )
    doc = _svg_doc(width, height, body)
    if out is not None:
        Path(out).write_text(doc)
    return doc


def render_phase_svg(states, world=None, out=None, size: float = 420.0) -> str:
    """Phase portrait of (angle, velocity) pairs with the goal region."""
    pad = 30.0
    t_max, w_max = 3.3, 8.5

    def place(theta, omega):
        x = pad + (theta + t_max) / (2 * t_max) * (size - 2 * pad)
        y = pad + (1 - (omega + w_max) / (2 * w_max)) * (size - 2 * pad)
        return x, y

    body = [
        f'<rect x="0" y="0" width="{size}" height="{size}" fill="white"/>',
    ]
    ox, oy = place(-t_max, 0)
    ex, _ = place(t_max, 0)
    body.append(f'<line x1="{ox}" y1="{oy}" x2="{ex}" y2="{oy}" stroke="rgb(210,210,210)"/>')
    tx, ty = place(0, -w_max)
    _, by = place(0, w_max)
    body.append(f'<line x1="{tx}" y1="{ty}" x2="{tx}" y2="{by}" stroke="rgb(210,210,210)"/>')
    if world is not None:
        cfg = world.config
        x0, y0 = place(-cfg.goal_angle, cfg.goal_speed)
        x1, y1 = place(cfg.goal_angle, -cfg.goal_speed)
        body.append(
            f'<rect x="{x0:.1f}" y="{y0:.1f}" width="{x1 - x0:.1f}" '
            f'height="{y1 - y0:.1f}" fill="none" stroke="rgb(230,190,60)" stroke-width="2"/>'
        )
    points = " ".join(
        f"{place(s[0], s[1])[0]:.1f},{place(s[0], s[1])[1]:.1f}" for s in states
    )
    body.append(
        f'<polyline points="{points}" fill="none" stroke="rgb(200,60,60)" stroke-width="2"/>'
    )
    if states:
        x, y = place(states[0][0], states[0][1])
        body.append(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="5" fill="rgb(60,120,220)"/>')
    doc = _svg_doc(size, size, body)
    if out is not None:
        Path(out).write_text(doc)
    return doc


def ascii_grid(world, path_states=None) -> str:
    """Glyph map: # wall, . free, * path, S start, G goal."""
    w, h = world.width, world.height
    walls = getattr(world, "walls", None) or getattr(world, "obstacles", frozenset())
    rows = []
    path = [(s[0], s[1]) for s in (path_states or [])]
    on_path = set(path)
    goal = getattr(world, "goal", None)
    for y in range(h - 1, -1, -1):
        row = []
        for x in range(w):
            if (x, y) in walls:
                row.append("#")
            elif path and (x, y) == path[0]:
                row.append("S")
            elif goal is not None and (x, y) == tuple(goal):
                row.append("G")
            elif (x, y) in on_path:
                row.append("*")
            else:
                row.append(".")
        rows.append("".join(row))
    return "\n".join(rows)
