"""Backend switch between numba-compiled kernels and the pure-numpy fallback.

Set ``MBVOC_DISABLE_NUMBA=1`` to never import numba. ``MBVOC_DISABLE_VNNI=1``
keeps numba but forces the portable int8 kernel even on VNNI hardware.
"""
import os

BACKENDS = ("numba", "numpy")


def _flag(name):
    return os.environ.get(name, "").strip().lower() in {"1", "true", "yes", "on"}


NUMBA_DISABLED = _flag("MBVOC_DISABLE_NUMBA")

numba = None
if not NUMBA_DISABLED:
    try:
        import numba  # noqa: F811
    except ImportError:  # pragma: no cover - numba is a declared dependency
        numba = None

NUMBA_AVAILABLE = numba is not None


def _host_has_vnni():
    if not NUMBA_AVAILABLE or _flag("MBVOC_DISABLE_VNNI"):
        return False
    try:
        from llvmlite import binding

        features = binding.get_host_cpu_features()
        return bool(features.get("avx512vnni", False))
    except Exception:  # pragma: no cover - exotic llvmlite builds
        return False


HAS_VNNI = _host_has_vnni()


def default_backend():
    return "numba" if NUMBA_AVAILABLE else "numpy"


def resolve_backend(name=None):
    """Map ``None`` to the default backend and reject unknown or unavailable ones."""
    from .errors import ValidationError

    if name is None:
        return default_backend()
    if name not in BACKENDS:
        raise ValidationError(f"unknown backend {name!r}; expected one of {BACKENDS}")
    if name == "numba" and not NUMBA_AVAILABLE:
        raise ValidationError("numba backend requested but numba is disabled or missing")
    return name


def njit(*args, **kwargs):
    """``numba.njit(cache=True, error_model="numpy")`` when numba is enabled, identity otherwise.

    The numpy error model drops the per-division zero check, which otherwise
    blocks loop vectorization.
    """
    kwargs.setdefault("cache", True)
    kwargs.setdefault("error_model", "numpy")

    def wrap(fn):
        if not NUMBA_AVAILABLE:
            return fn
        return numba.njit(**kwargs)(fn)

    if args and callable(args[0]):
        return wrap(args[0])
    return wrap
