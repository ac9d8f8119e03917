import io
import json
from pathlib import Path

import pandas as pd

from tcsloss import __version__
from tcsloss.errors import ValidationError

# Columns of a curve file (one row per (d, p_loss) point)
CURVE_COLUMNS = [
    "d", "p_comp", "p_loss", "p_lint", "rounds", "blocks", "failures", "P_L", "ci_low", "ci_high",
    "P_L_d_rounds", "ci_d_low", "ci_d_high", "matching_failures", "spanning_failures", "status", "seed",
]


def metadata(command: str, config: dict) -> dict:
    """Everything needed to re-run an output exactly."""
    return {"command": command, "version": __version__, "config": config, "seed": config.get("seed")}


def _json_default(value):
    if hasattr(value, "item"):
        return value.item()
    if hasattr(value, "tolist"):
        return value.tolist()
    raise TypeError(f"cannot serialise {type(value).__name__}")


def to_json(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n"


def render_table(frame: pd.DataFrame, meta: dict, fmt: str = "csv") -> str:
    """CSV with '#' metadata lines, or a JSON object with metadata and rows."""
    if fmt == "json":
        rows = json.loads(frame.to_json(orient="records"))
        return to_json({"metadata": meta, "rows": rows})
    if fmt != "csv":
        raise ValidationError(f"unknown format {fmt!r}")
    buf = io.StringIO()
    for key in sorted(meta):
        buf.write(f"# {key}: {json.dumps(meta[key], sort_keys=True, default=_json_default)}\n")
    frame.to_csv(buf, index=False, lineterminator="\n")
    return buf.getvalue()


def curve_frame(rows: list[dict]) -> pd.DataFrame:
    return pd.DataFrame(rows, columns=CURVE_COLUMNS)


def read_curves(path: str | Path) -> pd.DataFrame:
    """Curve file back into a frame; '#' metadata lines are skipped."""
    path = Path(path)
    if path.suffix == ".json":
        return pd.DataFrame(json.loads(path.read_text(encoding="utf-8"))["rows"], columns=CURVE_COLUMNS)
    return pd.read_csv(path, comment="#")


def read_metadata(path: str | Path) -> dict:
    meta = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.startswith("# "):
            break
        key, _, value = line[2:].partition(": ")
        meta[key] = json.loads(value)
    return meta
