"""Backend selection for the hot inner loops.

The compiled extension ``specden._ckernels`` is used when it is importable;
otherwise the NumPy fallback in ``specden._pykernels`` is used. Set
``SPECDEN_KERNELS=python`` to force the fallback.
"""
import os
from types import ModuleType

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

__all__ = ["BACKEND", "available_backends", "get_backend", "im2col", "col2im", "poisson_inversion"]


def available_backends() -> list[str]:
    return ["python"] + (["cython"] if _ckernels is not None else [])


def get_backend(name: str) -> ModuleType:
    if name == "python":
        return _pykernels
    if name == "cython":
        if _ckernels is None:
            raise ImportError("specden._ckernels is not built; run `pip install -e .`")
        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")


def _select() -> tuple[str, ModuleType]:
    choice = os.environ.get("SPECDEN_KERNELS", "auto").lower()
    if choice == "auto":
        choice = "cython" if _ckernels is not None else "python"
    return choice, get_backend(choice)


BACKEND, _impl = _select()
im2col = _impl.im2col
col2im = _impl.col2im
poisson_inversion = _impl.poisson_inversion
