"""Plain-text match files, ground-truth sidecars, and result JSON.

Match files hold one match per line as whitespace-separated reals: 4 columns
(x_p y_p x_q y_q) for homography, 6 (p_x p_y p_z q_x q_y q_z) for rigid 3D.
Lines starting with `#` are comments; a `# problem: <tag>` header names the
problem and optional `# key: value` comments carry metadata such as the
canvas size. Ground truth lives in a `.truth.json` sidecar so the match file
stays consumable by third-party tools.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .geometry import Homography, MatchSet, Model, RigidMotion

FORMAT_VERSION = 1


class InputError(Exception):
    """Malformed input file; message carries the offending line number."""


def write_matches(path, matches: MatchSet, meta: dict | None = None) -> None:
    path = Path(path)
    lines = [f"# problem: {matches.problem}"]
    for key, value in (meta or {}).items():
        lines.append(f"# {key}: {value}")
    for p, q in zip(matches.src, matches.dst):
        lines.append(" ".join(repr(float(x)) for x in (*p, *q)))
    path.write_text("\n".join(lines) + "\n")


def read_matches(path) -> tuple[MatchSet, dict]:
    """Parse a match file. Returns (matches, metadata dict)."""
    path = Path(path)
    problem = None
    meta: dict[str, str] = {}
    rows = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if ":" in body:
                key, _, value = body.partition(":")
                key, value = key.strip(), value.strip()
                if key == "problem":
                    if value not in ("homography", "rigid3d"):
                        raise InputError(f"{path}:{lineno}: unknown problem {value!r}")
                    problem = value
                else:
                    meta[key] = value
            continue
        parts = line.split()
        try:
            rows.append([float(x) for x in parts])
        except ValueError:
            raise InputError(f"{path}:{lineno}: non-numeric value") from None
        if len(parts) not in (4, 6):
            raise InputError(f"{path}:{lineno}: expected 4 or 6 columns, got {len(parts)}")
        if len(rows) > 1 and len(rows[-1]) != len(rows[0]):
            raise InputError(f"{path}:{lineno}: inconsistent column count")
    if not rows:
        raise InputError(f"{path}:1: no matches found")
    cols = len(rows[0])
    inferred = "homography" if cols == 4 else "rigid3d"
    if problem is None:
        problem = inferred
    elif problem != inferred:
        raise InputError(f"{path}:1: header problem {problem!r} does not match {cols} columns")
    data = np.array(rows)
    d = cols // 2
    return MatchSet(problem, data[:, :d], data[:, d:]), meta


def model_to_dict(model: Model) -> dict:
    if isinstance(model, Homography):
        return {"type": "homography", "h": model.h.tolist()}
    return {"type": "rigid3d", "R": model.R.tolist(), "t": model.t.tolist()}


def model_from_dict(d: dict) -> Model:
    if d["type"] == "homography":
        return Homography(np.array(d["h"]))
    return RigidMotion(np.array(d["R"]), np.array(d["t"]))


def write_truth(path, model: Model, inlier_mask: np.ndarray, extra: dict | None = None) -> None:
    doc = {
        "format_version": FORMAT_VERSION,
        "model": model_to_dict(model),
        "inlier_mask": [bool(b) for b in inlier_mask],
    }
    doc.update(extra or {})
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def read_truth(path) -> tuple[Model, np.ndarray, dict]:
    doc = json.loads(Path(path).read_text())
    model = model_from_dict(doc["model"])
    mask = np.array(doc["inlier_mask"], dtype=bool)
    return model, mask, doc


def truth_path(match_path) -> Path:
    p = Path(match_path)
    return p.with_suffix(p.suffix + ".truth.json") if p.suffix != ".txt" else p.with_suffix(
        ".truth.json"
    )
