"""Kernel backend selection.

The compiled extension is preferred; the pure-numpy module is a drop-in
fallback.  Set CURVEDNBODY_BACKEND=python (or =compiled) to force a choice,
e.g. for benchmarking the two against each other.
"""

import os

from . import _core_py

_forced = os.environ.get("CURVEDNBODY_BACKEND", "").strip().lower()

if _forced == "python":
    active = _core_py
elif _forced == "compiled":
    from . import _core as active  # noqa: F401  (ImportError here is deliberate)
else:
    try:
        from . import _core as active
    except ImportError:
        active = _core_py


def backend_name():
    return "compiled" if active.COMPILED else "python"
