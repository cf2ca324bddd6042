import csv
import logging
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any

from jinja2 import Template

logger = logging.getLogger(__name__)


def render_svg_template(*, template_name: str, context: dict[str, Any]) -> str:
    template_str = (Path(__file__).parent / "templates" / template_name).read_text()
    svg_content = Template(template_str).render(context)
    return svg_content


def format_value(value: Any) -> str:
    """CSV cell text: floats round-trip exactly, everything else via str()."""
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def write_csv(
    path: Path,
    header: Sequence[str],
    rows: Iterable[Sequence[Any]],
    metadata_json: str | None = None,
) -> Path:
    """Write rows under header, optionally preceded by a '# {json}' line."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        if metadata_json is not None:
            handle.write(f"# {metadata_json}\n")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        count = 0
        for row in rows:
            writer.writerow([format_value(v) for v in row])
            count += 1
    logger.info(f"Wrote {count} rows to {path}")
    return path
