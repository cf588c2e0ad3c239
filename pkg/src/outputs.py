"""CSV, PGM and JSON writers for everything the commands emit."""
import json
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel

from .fields import GridField, StreamlineSet
from .models import ComparisonRow, McSummary

PathLike = Union[str, Path]


def _prepare(path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def records_frame(summary: McSummary) -> pd.DataFrame:
    """One row per Monte-Carlo record, latent coordinates spread over columns"""
    rows = []
    for r in summary.records:
        row = {"index": r.index}
        row.update({f"x_a_{k}": v for k, v in enumerate(r.x_a)})
        row.update({f"x_b_{k}": v for k, v in enumerate(r.x_b)})
        row.update(d_straight=r.d_straight, d_short=r.d_short,
                   rel_improvement=r.rel_improvement, fallback_used=r.fallback_used)
        rows.append(row)
    return pd.DataFrame(rows)


def write_records_csv(path: PathLike, summary: McSummary) -> Path:
    path = _prepare(path)
    records_frame(summary).to_csv(path, index=False)
    return path


def write_json(path: PathLike, document: Union[BaseModel, dict, list]) -> Path:
    path = _prepare(path)
    if isinstance(document, BaseModel):
        text = document.model_dump_json(indent=2)
    else:
        text = json.dumps(document, indent=2)
    path.write_text(text + "\n")
    return path


def write_summary_json(path: PathLike, summary: McSummary) -> Path:
    """Summary sidecar; the records themselves live in the CSV"""
    return write_json(path, summary.model_dump(mode="json", exclude={"records"}))


def write_grid_csv(path: PathLike, field: GridField) -> Path:
    """Commented metadata header, then x,y,value rows; singular nodes are nan"""
    path = _prepare(path)
    b = field.bounds
    xs, ys = np.meshgrid(field.xs, field.ys)
    frame = pd.DataFrame({"x": xs.ravel(), "y": ys.ravel(), "value": field.values.ravel()})
    with open(path, "w", newline="") as f:
        f.write(f"# kind={field.kind.value}\n")
        f.write(f"# bounds={b.xmin},{b.xmax},{b.ymin},{b.ymax}\n")
        f.write(f"# resolution={field.nx},{field.ny}\n")
        frame.to_csv(f, index=False, na_rep="nan")
    return path


def write_streamlines_csv(path: PathLike, lines: StreamlineSet) -> Path:
    path = _prepare(path)
    frames = [
        pd.DataFrame({"streamline_id": i, "point_index": np.arange(len(line)), "x": line[:, 0], "y": line[:, 1]})
        for i, line in enumerate(lines.lines)
    ]
    columns = ["streamline_id", "point_index", "x", "y"]
    frame = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=columns)
    frame[columns].to_csv(path, index=False)
    return path


def comparison_frame(rows: Sequence[ComparisonRow]) -> pd.DataFrame:
    records: List[dict] = []
    for r in rows:
        record = {"pair_index": r.pair_index, "start_index": r.start_index, "end_index": r.end_index}
        for name, half in (("a", r.model_a), ("b", r.model_b)):
            record.update({
                f"{name}_z0": " ".join(repr(v) for v in half.z0),
                f"{name}_z1": " ".join(repr(v) for v in half.z1),
                f"{name}_d_straight": half.d_straight,
                f"{name}_d_short": half.d_short,
                f"{name}_rel_improvement": half.rel_improvement,
            })
        record.update(gap=r.gap, selected=r.selected, rank=r.rank)
        records.append(record)
    return pd.DataFrame(records)


def write_comparison_csv(path: PathLike, rows: Sequence[ComparisonRow]) -> Path:
    path = _prepare(path)
    comparison_frame(rows).to_csv(path, index=False)
    return path


def write_pgm(path: PathLike, image: np.ndarray) -> Path:
    """Binary 8-bit greyscale (P5); values are clipped to [0, 1]"""
    path = _prepare(path)
    pixels = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    height, width = pixels.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())
    return path
