import logging
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
from reportlab.graphics import renderSVG
from reportlab.graphics.shapes import Drawing, Group, PolyLine, Rect, String
from reportlab.lib import colors
from scipy.spatial.distance import pdist

from assignment.periodic_table import PeriodicTable
from data_model.periodic import period_of

from .exceptions import LandscapeError
from .landscape import Landscape

logger = logging.getLogger(__name__)

PANEL_SIZE = 360.0
MARGIN = 36.0
CELL_MAX = 40.0
LEGEND_HEIGHT = 70.0
LEGEND_STEPS = 24
FONT = "Helvetica"
FONT_BOLD = "Helvetica-Bold"

PERIOD_COLORS = (
    colors.HexColor("#1b9e77"),
    colors.HexColor("#d95f02"),
    colors.HexColor("#7570b3"),
    colors.HexColor("#e7298a"),
    colors.HexColor("#66a61e"),
    colors.HexColor("#a6761d"),
    colors.HexColor("#666666"),
)
LOW_COLOR = (0.231, 0.298, 0.753)
MID_COLOR = (0.969, 0.969, 0.969)
HIGH_COLOR = (0.706, 0.016, 0.149)
EMPTY_FILL = colors.HexColor("#eeeeee")
CELL_STROKE = colors.white
TRACE_COLOR = colors.HexColor("#555555")

# (título, eje horizontal, eje vertical); None deja el eje vertical fijo
SINGLE_VIEW = (("", 0, 1),)
CONE_VIEWS = (("vista superior (x, y)", 0, 1), ("vista lateral (x, z)", 0, 2))


def _views(latent_dim: int) -> Tuple[Tuple[str, int, Optional[int]], ...]:
    if latent_dim == 1:
        return (("", 0, None),)
    if latent_dim == 2:
        return SINGLE_VIEW
    return CONE_VIEWS


def _blend(start: Tuple[float, ...], end: Tuple[float, ...], t: float) -> colors.Color:
    t = min(max(t, 0.0), 1.0)
    return colors.Color(*(round(a + t * (b - a), 4) for a, b in zip(start, end)))


def diverging_color(value: float, low: float, median: float, high: float) -> colors.Color:
    """Escala lineal de dos colores centrada en la mediana."""
    if value <= median:
        span = median - low
        return _blend(MID_COLOR, LOW_COLOR, (median - value) / span if span > 0 else 0.0)
    span = high - median
    return _blend(MID_COLOR, HIGH_COLOR, (value - median) / span if span > 0 else 0.0)


def period_color(atomic_number: int) -> colors.Color:
    return PERIOD_COLORS[period_of(int(atomic_number)) - 1]


def _project(table: PeriodicTable, x_axis: int, y_axis: Optional[int], origin: Tuple[float, float]) -> np.ndarray:
    coords = table.nodes.coords
    bounds = table.nodes.bounds

    def scale(axis: Optional[int]) -> np.ndarray:
        if axis is None:
            return np.full(len(coords), 0.5)
        lo, hi = bounds[axis]
        return (coords[:, axis] - lo) / (hi - lo)

    return np.column_stack([
        origin[0] + scale(x_axis) * PANEL_SIZE,
        origin[1] + scale(y_axis) * PANEL_SIZE,
    ])


def _cell_size(points: np.ndarray) -> float:
    if len(points) < 2:
        return CELL_MAX
    distances = pdist(points)
    distances = distances[distances > 1e-9]
    if distances.size == 0:
        return CELL_MAX
    return float(min(0.9 * distances.min(), CELL_MAX))


def _panel(
    table: PeriodicTable,
    title: str,
    x_axis: int,
    y_axis: Optional[int],
    origin: Tuple[float, float],
    values: Optional[Landscape],
    trace_line: bool,
) -> Group:
    group = Group()
    points = _project(table, x_axis, y_axis, origin)
    cell = _cell_size(points)
    font_size = max(5.0, min(11.0, 0.4 * cell))

    for k, (x, y) in enumerate(points):
        fill = EMPTY_FILL
        if values is not None:
            fill = diverging_color(values.values[k], values.minimum, values.median, values.maximum)
        group.add(Rect(x - cell / 2, y - cell / 2, cell, cell,
                       fillColor=fill, strokeColor=CELL_STROKE, strokeWidth=0.5))

    if trace_line and table.n_elements > 1:
        order = np.argsort(table.atomic_numbers, kind="stable")
        path = points[table.node_indices[order]]
        group.add(PolyLine([float(v) for v in path.reshape(-1)],
                           strokeColor=TRACE_COLOR, strokeWidth=0.6))

    for symbol, z, node in zip(table.symbols, table.atomic_numbers, table.node_indices):
        x, y = points[node]
        group.add(String(float(x), float(y) - font_size / 3, symbol, fontName=FONT_BOLD,
                         fontSize=font_size, fillColor=period_color(z), textAnchor="middle"))

    if title:
        group.add(String(origin[0] + PANEL_SIZE / 2, origin[1] + PANEL_SIZE + 18, title,
                         fontName=FONT, fontSize=10, textAnchor="middle"))
    return group


def _legend(values: Landscape, width: float) -> Group:
    group = Group()
    bar_width = width - 2 * MARGIN
    step = bar_width / LEGEND_STEPS
    y = 28.0
    for i in range(LEGEND_STEPS):
        value = values.minimum + (values.maximum - values.minimum) * (i + 0.5) / LEGEND_STEPS
        group.add(Rect(MARGIN + i * step, y, step, 10,
                       fillColor=diverging_color(value, values.minimum, values.median, values.maximum),
                       strokeColor=None))
    labels = (
        (MARGIN, "start", f"mín {values.minimum:.4g}"),
        (MARGIN + bar_width / 2, "middle", f"mediana {values.median:.4g}"),
        (MARGIN + bar_width, "end", f"máx {values.maximum:.4g}"),
    )
    for x, anchor, text in labels:
        group.add(String(x, y - 14, text, fontName=FONT, fontSize=8, textAnchor=anchor))
    group.add(String(MARGIN, y + 20, values.feature, fontName=FONT_BOLD, fontSize=10))
    return group


def _period_legend(width: float, top: float) -> Group:
    group = Group()
    slot = (width - 2 * MARGIN) / len(PERIOD_COLORS)
    for i, color in enumerate(PERIOD_COLORS):
        group.add(String(MARGIN + i * slot, top, f"periodo {i + 1}", fontName=FONT, fontSize=7, fillColor=color))
    return group


def table_drawing(
    table: PeriodicTable,
    values: Optional[Landscape] = None,
    trace_line: bool = False,
) -> Drawing:
    """Dibujo vectorial de la tabla: una vista por proyección (dos para el cono)."""
    if values is not None and values.nodes.n_nodes != table.nodes.n_nodes:
        raise LandscapeError("El paisaje no corresponde a la disposición de la tabla.")
    views = _views(table.nodes.coords.shape[1])
    width = len(views) * (PANEL_SIZE + 2 * MARGIN)
    legend_height = LEGEND_HEIGHT if values is not None else 0.0
    height = PANEL_SIZE + 2 * MARGIN + legend_height + 16
    drawing = Drawing(width, height)
    for i, (title, x_axis, y_axis) in enumerate(views):
        origin = (MARGIN + i * (PANEL_SIZE + 2 * MARGIN), legend_height + MARGIN)
        drawing.add(_panel(table, title, x_axis, y_axis, origin, values, trace_line))
    if values is not None:
        drawing.add(_legend(values, width))
    drawing.add(_period_legend(width, height - 12))
    return drawing


def export_table_svg(
    table: PeriodicTable,
    values: Optional[Landscape] = None,
    path: Optional[Union[str, Path]] = None,
    trace_line: bool = False,
) -> str:
    """Documento SVG 1.1 determinista; si se da `path` también se escribe en disco."""
    svg = renderSVG.drawToString(table_drawing(table, values, trace_line))
    if path is not None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(svg, encoding="utf-8")
        logger.debug(f"SVG escrito en {path}")
    return svg

