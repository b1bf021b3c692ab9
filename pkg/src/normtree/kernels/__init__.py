"""Kernel selection: compiled extension if built, pure Python otherwise.

Set ``NORMTREE_KERNELS=pure`` to force the fallback (used by the benchmark
to compare both implementations).
"""

from __future__ import annotations

import os

if os.environ.get("NORMTREE_KERNELS", "").lower() == "pure":
    from . import pure as _impl
else:
    try:
        from . import _fast as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import pure as _impl

IMPL = _impl.IMPL
member = _impl.member
max_prefix = _impl.max_prefix
member_subsets = _impl.member_subsets
clear_caches = _impl.clear_caches

__all__ = ["IMPL", "member", "max_prefix", "member_subsets", "clear_caches"]
