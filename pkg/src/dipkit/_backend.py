"""Selects the compiled core if present, else the pure numpy fallback.

Set DIPKIT_FORCE_FALLBACK=1 to skip the compiled extension even when it is
installed. `backend_name()` reports which path is active.
"""

from __future__ import annotations

import os

if os.environ.get("DIPKIT_FORCE_FALLBACK", "") == "1":
    from . import _fallback as _impl

    _BACKEND = "fallback"
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]

        _BACKEND = "compiled"
    except ImportError:
        from . import _fallback as _impl

        _BACKEND = "fallback"

image_sum_3d = _impl.image_sum_3d
compute_field = _impl.compute_field
energy_from_field = _impl.energy_from_field
metropolis_sweeps = _impl.metropolis_sweeps


def backend_name() -> str:
    return _BACKEND
