"""
Writers for run artifacts: schema-versioned CSV tables and deterministic SVG charts
"""

import logging
import os
from typing import Dict
from typing import Optional
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

logger = logging.getLogger(__name__)

SVG_SALT = "thermoloop"


def write_versioned_csv(path: str, frame: pd.DataFrame, schema: str, version: int) -> str:
    """First line ``# schema=<name> version=<n>``, then the table with %.10g floats"""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema={schema} version={version}\n")
        frame.to_csv(fh, index=False, float_format="%.10g", lineterminator="\n")
    logger.debug("wrote %s (%d rows)", path, len(frame))
    return path


def read_schema_header(path: str) -> Dict[str, str]:
    with open(path, "r") as fh:
        first = fh.readline().strip()
    if not first.startswith("#"):
        return {}
    pairs = (item.split("=", 1) for item in first.lstrip("#").split() if "=" in item)
    return {key: value for key, value in pairs}


def read_versioned_csv(path: str, schema: Optional[str] = None) -> pd.DataFrame:
    if schema is not None:
        found = read_schema_header(path).get("schema")
        if found != schema:
            raise ValueError(f"{path}: expected schema '{schema}', found '{found}'")
    return pd.read_csv(path, comment="#")


def write_line_chart(
    path: str,
    x: np.ndarray,
    series: Dict[str, np.ndarray],
    xlabel: str,
    ylabel: str,
    title: str = "",
    markers: Optional[Sequence[float]] = None,
) -> str:
    """Static SVG line chart; byte-identical when regenerated from the same data"""
    with plt.rc_context({"svg.hashsalt": SVG_SALT, "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(7, 4))
        for label, values in series.items():
            ax.plot(x, values, label=label, linewidth=1.0)
        for position in () if markers is None else markers:
            ax.axvline(position, color="0.6", linewidth=0.6, linestyle=":")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if len(series) > 1:
            ax.legend(loc="best", fontsize="small")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
