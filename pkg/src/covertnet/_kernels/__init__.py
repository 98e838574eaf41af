"""Hot kernels with a compiled backend and a numpy fallback.

The compiled extension is used when it imports; set ``COVERTNET_PURE_PYTHON=1``
to force the fallback.  ``BACKEND`` names the active one.
"""
import os

from . import _pykernels

stream_keys = _pykernels.stream_keys
uniforms = _pykernels.uniforms
uniforms_from_keys = _pykernels.uniforms_from_keys

_compiled = None
if not os.environ.get("COVERTNET_PURE_PYTHON"):
    try:
        from . import _ckernels as _compiled
    except ImportError:
        _compiled = None

if _compiled is not None:
    BACKEND = "compiled"
    population_gain = _compiled.population_gain
    stable_tail_integral = _compiled.stable_tail_integral
else:
    BACKEND = "python"
    population_gain = _pykernels.population_gain
    stable_tail_integral = _pykernels.stable_tail_integral


def backends():
    """Map of backend name to kernel module, for cross-checks and benchmarks."""
    out = {"python": _pykernels}
    if _compiled is not None:
        out["compiled"] = _compiled
    return out
