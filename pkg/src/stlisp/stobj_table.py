"""Tables mapping stobj names to stobj instances.

Logically a table is an association list looked up with
hons-assoc-equal (first match wins); the execution view is a hash
table keyed by interned symbol.  Every execution-view table ever
created is tracked in a weak registry so that undoing a stobj
definition can unbind that name from all live tables.
"""

import weakref

from . import sexpr
from .sexpr import NIL, Cons, from_bool, intern
from .errors import EvalError, OwnershipError

_registry = weakref.WeakSet()


class TableCell:
    """Execution view of one stobj-table field: Symbol -> StobjInstance."""

    __slots__ = ("data", "__weakref__")

    def __init__(self, data=None):
        self.data = {} if data is None else data
        _registry.add(self)

    def copy(self):
        return TableCell(dict(self.data))


def live_tables():
    return list(_registry)


def table_get(cell, key):
    """Raw lookup; returns None on a miss (the caller supplies defaults)."""
    return cell.data.get(key)


def table_boundp(cell, key):
    return from_bool(key in cell.data)


def table_count(cell):
    return len(cell.data)


def table_put(cell, key, child, *, in_place, check_owner=False):
    if check_owner and child.owner is not None and child.owner is not cell:
        raise OwnershipError(
            "stobj %s is already owned by another location and cannot be "
            "stored in a second table" % child.print_name)
    if in_place:
        cell.data[key] = child
        child.owner = cell
        return cell
    new = cell.copy()
    new.data[key] = child
    return new


def table_rem(cell, key, *, in_place):
    if in_place:
        cell.data.pop(key, None)
        return cell
    new = cell.copy()
    new.data.pop(key, None)
    return new


def table_clear(cell, *, in_place):
    if in_place:
        cell.data.clear()
        return cell
    return TableCell({})


def check_key(key, form=None):
    if not isinstance(key, sexpr.Symbol):
        raise EvalError("stobj-table key must be a symbol, got %s"
                        % sexpr.show(key), form=form)
    return key


def retract(undone_names):
    """Unbind every undone stobj name from every live table."""
    keys = {intern(n) for n in undone_names}
    for cell in live_tables():
        for key in keys:
            cell.data.pop(key, None)


def logical_view(cell):
    """Canonical alist rendering: entries sorted by key name.

    Duplicate keys cannot occur in the execution view, so the sorted
    alist is a faithful normal form of the logical alist.
    """
    out = NIL
    for key in sorted(cell.data, key=lambda s: s.name, reverse=True):
        out = Cons(Cons(key, cell.data[key].logical_view()), out)
    return out
