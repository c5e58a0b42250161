"""Backend selection for the numeric hot path.

The compiled extension is preferred when importable; the pure-NumPy
twin is used otherwise. ``AMEEF_DCKF_PURE=1`` forces the fallback,
which the backend benchmark and the cross-backend tests rely on.
"""

import os

from . import _pure

if os.environ.get("AMEEF_DCKF_PURE", "") == "1":
    _impl = _pure
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = _pure

BACKEND = _impl.BACKEND_NAME

cauchy_vec = _impl.cauchy_vec
theta_core = _impl.theta_core
resolve_sigmas = _impl.resolve_sigmas
fixed_point_core = _impl.fixed_point_core
predict_linear = _impl.predict_linear
moments_linear = _impl.moments_linear
node_update_linear = _impl.node_update_linear
info_posterior = _impl.info_posterior
lfac_loop = _impl.lfac_loop


def get_backend(name):
    """Return a specific backend module ("python" or "compiled")."""
    if name == "python":
        return _pure
    if name == "compiled":
        from . import _core  # noqa: F811

        return _core
    raise ValueError(f"unknown backend {name!r}")
