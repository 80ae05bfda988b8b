"""Hereditarily finite values.

Values are plain Python objects so that the evaluator can lean on native
hashing and set operations:

* atom   -> ``str`` (the atom's name)
* int    -> ``int``
* bool   -> :class:`Bool` (kept distinct from ``int``; Python's ``True == 1``)
* pair   -> 2-``tuple``; maplets ``a |-> b`` are pairs
* set    -> ``frozenset``

Set identity is value identity, so a frozenset plays the role of the
canonically ordered duplicate-free sequence; canonical order is produced on
demand by :func:`sort_key` for printing, hashing into ids and enumeration.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Union


@dataclass(frozen=True, slots=True)
class Bool:
    value: bool

    def __repr__(self) -> str:
        return "TRUE" if self.value else "FALSE"


TRUE = Bool(True)
FALSE = Bool(False)

Value = Union[str, int, Bool, tuple, frozenset]

EMPTY: frozenset = frozenset()

_ATOM, _INT, _BOOL, _PAIR, _SET = range(5)


def atom(name: str) -> str:
    return name


def pair(left: Value, right: Value) -> tuple:
    return (left, right)


def setv(*elements: Value) -> frozenset:
    return frozenset(elements)


def is_value(v: object) -> bool:
    if isinstance(v, bool):
        return False
    if isinstance(v, (str, int, Bool)):
        return True
    if isinstance(v, tuple):
        return len(v) == 2 and is_value(v[0]) and is_value(v[1])
    if isinstance(v, frozenset):
        return all(is_value(x) for x in v)
    return False


@lru_cache(maxsize=1 << 16)
def _set_key(v: frozenset) -> tuple:
    return (_SET, tuple(sorted(sort_key(x) for x in v)))


def sort_key(v: Value) -> tuple:
    """Key realising the canonical order: atom < int < bool < pair < set."""
    if isinstance(v, str):
        return (_ATOM, v)
    if isinstance(v, tuple):
        return (_PAIR, sort_key(v[0]), sort_key(v[1]))
    if isinstance(v, frozenset):
        return _set_key(v)
    if isinstance(v, Bool):
        return (_BOOL, v.value)
    if isinstance(v, int) and not isinstance(v, bool):
        return (_INT, v)
    raise TypeError(f"not a value: {v!r}")


def canonical_compare(a: Value, b: Value) -> int:
    ka, kb = sort_key(a), sort_key(b)
    return (ka > kb) - (ka < kb)


def canonical_sorted(values: Iterable[Value]) -> list:
    return sorted(values, key=sort_key)


def render(v: Value) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, tuple):
        left, right = v
        r = render(right)
        if isinstance(right, tuple):
            r = f"({r})"
        return f"{render(left)} |-> {r}"
    if isinstance(v, frozenset):
        return "{" + ", ".join(render(x) for x in canonical_sorted(v)) + "}"
    if isinstance(v, Bool):
        return "TRUE" if v.value else "FALSE"
    if isinstance(v, int):
        return str(v)
    raise TypeError(f"not a value: {v!r}")


def render_unicode(v: Value) -> str:
    return render(v).replace(" |-> ", " ↦ ")


def parse_value(text: str) -> Value:
    """Inverse of :func:`render`."""
    from .parser import parse_expression
    from .ast import literal_value

    return literal_value(parse_expression(text))
