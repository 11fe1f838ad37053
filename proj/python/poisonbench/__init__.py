"""Python surface for the poisonbench C++ core.

Installed wheels carry the extension inside this package; in a plain CMake
build tree the module sits on PYTHONPATH instead, so fall back to a
top-level import there.
"""

try:
    from ._poisonbench import *  # noqa: F401,F403
    from . import _poisonbench as _core  # noqa: F401
except ImportError:  # build-tree layout
    from _poisonbench import *  # noqa: F401,F403
    import _poisonbench as _core  # noqa: F401

__version__ = "0.1.0"
