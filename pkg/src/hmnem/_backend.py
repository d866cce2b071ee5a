"""Select the sampler kernel: compiled extension if importable, else pure Python.

Set ``HMNEM_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernel_py

try:
    from . import _kernel as _compiled
except ImportError:  # extension not built
    _compiled = None

if _compiled is not None and not os.environ.get("HMNEM_PURE_PYTHON"):
    kernel = _compiled
else:
    kernel = _kernel_py

COMPILED_AVAILABLE = _compiled is not None


def get_kernel(name=None):
    """Return the kernel module for ``name`` ('compiled', 'python' or None for the default)."""
    if name is None:
        return kernel
    if name == "python":
        return _kernel_py
    if name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernel is not built; run `pip install -e . --no-build-isolation`")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")
