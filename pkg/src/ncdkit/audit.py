"""Scoped access control for evaluation-only ground truth.

Hidden labels of unlabelled samples may be read freely inside an
``evaluation_access()`` block, which the evaluation protocols open
around their truth lookups.  A read anywhere else increments the
owning container's audit counter; training must leave every counter
at zero, and tests enforce that.
"""

from __future__ import annotations

from contextlib import contextmanager

_scope_depth = 0


@contextmanager
def evaluation_access():
    """Mark the enclosed block as legitimate evaluation-time access."""
    global _scope_depth
    _scope_depth += 1
    try:
        yield
    finally:
        _scope_depth -= 1


def in_evaluation_scope() -> bool:
    return _scope_depth > 0
