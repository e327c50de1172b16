"""Kernel backend selection.

The hot inner loops (minimal-sample fitting and grid insertion) exist twice:
a compiled Cython extension (`_fastback`) and a pure-NumPy fallback
(`pyback`) with identical semantics. The compiled backend is used when
importable; set GRIDRANSAC_BACKEND=python or =compiled to force a choice.
Both modules stay importable so benchmarks can compare them directly.
"""

from __future__ import annotations

import os

from . import pyback

_choice = os.environ.get("GRIDRANSAC_BACKEND", "auto").lower()

fastback = None
if _choice in ("auto", "compiled"):
    try:
        from . import _fastback as fastback
    except ImportError:
        if _choice == "compiled":
            raise ImportError(
                "GRIDRANSAC_BACKEND=compiled but the extension is not built; "
                "reinstall the package or use GRIDRANSAC_BACKEND=python"
            )
elif _choice != "python":
    raise ValueError(f"unknown GRIDRANSAC_BACKEND={_choice!r}")

active = fastback if fastback is not None else pyback
BACKEND = "compiled" if fastback is not None else "python"
