"""Iteration: loop$ parsing, DO-body translation, and both executors.

A DO body is a statement tree of if/let/let*/mv-let/progn/setq/mv-setq/
return/loop-finish.  The logical path translates it to a one-formal
lambda over an environment alist whose application yields an exit
triple (token value new-alist), then iterates that lambda under a
strictly decreasing lexicographic measure.  The native path executes
the same statements imperatively over mutable slots, with no measure,
under an iteration cap.  Both paths share parsing, grammar validation,
and result decoding, so any disagreement between them is a bug in one
of the two execution strategies and not in the front end.
"""

from . import sexpr, stobjs
from .errors import (CapExceeded, EvalError, GuardViolation, LispError,
                     MeasureViolation, TranslateError)
from .sexpr import (NIL, T, Cons, MultiValue, Symbol, from_pylist, intern,
                    is_keyword, mklist, show, to_pylist, truthy)

WITH = intern("WITH")
FOR = intern("FOR")
DO = intern("DO")
IN = intern("IN")
SUM = intern("SUM")
COLLECT = intern("COLLECT")
FINALLY = intern("FINALLY")
OF_TYPE = intern("OF-TYPE")
EQUALS = intern("=")
INTEGER = intern("INTEGER")
K_VALUES = intern(":VALUES")
K_MEASURE = intern(":MEASURE")
K_GUARD = intern(":GUARD")
K_RETURN = intern(":RETURN")
K_FINISH = intern(":LOOP-FINISH")
QUOTE = intern("QUOTE")
LAMBDA = intern("LAMBDA")
ALIST = intern("ALIST")
IF = intern("IF")
LET = intern("LET")
LETSTAR = intern("LET*")
MV = intern("MV")
MV_LET = intern("MV-LET")
PROGN = intern("PROGN")
SETQ = intern("SETQ")
MV_SETQ = intern("MV-SETQ")
RETURN = intern("RETURN")
LOOP_FINISH = intern("LOOP-FINISH")
PCONS = intern("%CONS")
OF_TYPE_CHECK = intern("%OF-TYPE")
CDR = intern("CDR")
ASSOC_EQ_SAFE = intern("ASSOC-EQ-SAFE")

_STMT_HEADS = ("SETQ", "MV-SETQ", "RETURN", "LOOP-FINISH", "PROGN")


class OfTypeViolation(GuardViolation):
    pass


class LoopSpec:
    def __init__(self, form):
        self.form = form
        self.kind = None
        self.for_var = None
        self.for_range = None
        self.for_acc = None
        self.for_body = None
        self.withs = []          # (name: str, type: str or None, init form)
        self.values = (None,)    # None or stobj name, per slot
        self.measure = None
        self.guard = None
        self.do_body = None
        self.finally_body = None

    def value_stobjs(self):
        return [s for s in self.values if s is not None]

    def settables(self):
        names = [w[0] for w in self.withs]
        return names + self.value_stobjs()

    def of_types(self):
        return {name: typ for name, typ, _init in self.withs
                if typ == "INTEGER"}


def parse_loop(form, world):
    items = to_pylist(form, "loop$ form")
    spec = LoopSpec(form)
    if len(items) >= 2 and items[1] is FOR:
        return _parse_for(spec, items)
    return _parse_do(spec, items, world)


def _parse_for(spec, items):
    # (loop$ FOR v IN range SUM|COLLECT body)
    spec.kind = "FOR"
    if len(items) != 7:
        raise TranslateError("a FOR loop$ is (loop$ FOR v IN range "
                             "SUM|COLLECT body)", form=spec.form)
    var = items[2]
    if not isinstance(var, Symbol) or var is NIL or var is T \
            or is_keyword(var):
        raise TranslateError("bad FOR variable %s" % show(var),
                             form=spec.form)
    if items[3] is not IN:
        raise TranslateError("expected IN after the FOR variable",
                             form=spec.form)
    if items[5] not in (SUM, COLLECT):
        raise TranslateError("FOR supports the SUM and COLLECT accumulators",
                             form=spec.form)
    spec.for_var = var
    spec.for_range = items[4]
    spec.for_acc = items[5].name
    spec.for_body = items[6]
    return spec


def _parse_do(spec, items, world):
    spec.kind = "DO"
    i = 1
    seen = set()
    while i < len(items) and items[i] is WITH:
        if i + 1 >= len(items) or not isinstance(items[i + 1], Symbol):
            raise TranslateError("WITH needs a variable name", form=spec.form)
        var = items[i + 1]
        if var is NIL or var is T or is_keyword(var):
            raise TranslateError("bad WITH variable %s" % show(var),
                                 form=spec.form)
        if world.stobj_spec(var.name) is not None:
            raise TranslateError("WITH may not bind the stobj name %s; "
                                 "stobjs enter a DO loop through :VALUES"
                                 % var.name, form=spec.form)
        if var.name in seen:
            raise TranslateError("duplicate WITH variable %s" % var.name,
                                 form=spec.form)
        seen.add(var.name)
        i += 2
        typ = None
        if i < len(items) and items[i] is OF_TYPE:
            if i + 1 >= len(items) or items[i + 1] not in (INTEGER, T):
                raise TranslateError("OF-TYPE supports INTEGER and T only",
                                     form=spec.form)
            typ = items[i + 1].name
            i += 2
        init = None
        if i < len(items) and items[i] is EQUALS:
            if i + 1 >= len(items):
                raise TranslateError("WITH %s = needs a value" % var.name,
                                     form=spec.form)
            init = items[i + 1]
            i += 2
        spec.withs.append((var.name, typ, init))
    if i >= len(items) or items[i] is not DO:
        raise TranslateError("expected DO after the WITH clauses",
                             form=spec.form)
    i += 1
    seen_kw = set()
    while i < len(items) and items[i] in (K_VALUES, K_MEASURE, K_GUARD):
        kw = items[i]
        if kw.name in seen_kw:
            raise TranslateError("duplicate %s" % kw.name, form=spec.form)
        seen_kw.add(kw.name)
        if i + 1 >= len(items):
            raise TranslateError("%s needs a value" % kw.name, form=spec.form)
        arg = items[i + 1]
        if kw is K_MEASURE:
            spec.measure = arg
        elif kw is K_GUARD:
            spec.guard = arg
        else:
            spec.values = _parse_values(arg, spec, world)
        i += 2
    if i >= len(items):
        raise TranslateError("DO loop has no body", form=spec.form)
    spec.do_body = items[i]
    i += 1
    if i < len(items):
        if items[i] is not FINALLY or i + 1 >= len(items):
            raise TranslateError("expected FINALLY and a body after the DO "
                                 "body", form=spec.form)
        spec.finally_body = items[i + 1]
        i += 2
    if i != len(items):
        raise TranslateError("unexpected trailing forms in loop$",
                             form=spec.form)
    return spec


def _parse_values(arg, spec, world):
    slots = []
    for x in to_pylist(arg, ":VALUES"):
        if x is NIL:
            slots.append(None)
        elif isinstance(x, Symbol) and world.stobj_spec(x.name) is not None:
            if x.name in [s for s in slots if s]:
                raise TranslateError("stobj %s appears twice in :VALUES"
                                     % x.name, form=spec.form)
            slots.append(x.name)
        else:
            raise TranslateError(":VALUES entries must be NIL or a defined "
                                 "stobj, got %s" % show(x), form=spec.form)
    if not slots:
        raise TranslateError(":VALUES may not be empty", form=spec.form)
    return tuple(slots)


### translation of DO and FINALLY bodies

class DoPlan:
    __slots__ = ("do_fn", "finally_fn", "measure_fn", "guard_fn",
                 "measure_form", "settables", "of_types", "values")


def make_do_plan(spec, world):
    """Validate the statement grammar and build the alist lambdas."""
    settables = spec.settables()
    of_types = spec.of_types()
    tr = _Translator(settables, of_types, spec.values)
    do_core = tr.stmt(spec.do_body, set(settables))
    fin_core = None
    if spec.finally_body is not None:
        trf = _Translator(settables, of_types, spec.values,
                          finally_mode=True)
        fin_core = trf.stmt(spec.finally_body, set(settables))
    elif tr.saw_loop_finish and spec.value_stobjs():
        raise TranslateError(
            "LOOP-FINISH without a FINALLY clause cannot produce the stobjs "
            "named in :VALUES", form=spec.form)
    measure_form = spec.measure
    if measure_form is None:
        measure_form = guess_measure(spec)
    _scan_expr(measure_form, set(settables), settables, ":MEASURE")
    if spec.guard is not None:
        _scan_expr(spec.guard, set(settables), settables, ":GUARD")
    plan = DoPlan()
    plan.settables = settables
    plan.of_types = of_types
    plan.values = spec.values
    plan.measure_form = measure_form
    plan.do_fn = _alist_lambda(settables, do_core)
    plan.finally_fn = _alist_lambda(settables, fin_core) \
        if fin_core is not None else None
    plan.measure_fn = _alist_lambda(settables, measure_form)
    plan.guard_fn = _alist_lambda(settables, spec.guard) \
        if spec.guard is not None else None
    return plan


def _q(x):
    return mklist(QUOTE, x)


def _alist_lambda(settables, core):
    """(LAMBDA (ALIST) (LET* ((v (CDR (ASSOC-EQ-SAFE 'v ALIST))) ..) core))"""
    bindings = [mklist(intern(name),
                       mklist(CDR, mklist(ASSOC_EQ_SAFE, _q(intern(name)),
                                          ALIST)))
                for name in settables]
    body = mklist(LETSTAR, from_pylist(bindings), core) if bindings else core
    return mklist(LAMBDA, mklist(ALIST), body)


def _alist_term(settables):
    term = NIL
    for name in reversed(settables):
        sym = intern(name)
        term = mklist(PCONS, mklist(PCONS, _q(sym), sym), term)
    return term


def _triple(token, value, alist):
    return mklist(PCONS, token, mklist(PCONS, value, mklist(PCONS, alist,
                                                            NIL)))


class _Translator:
    def __init__(self, settables, of_types, values, finally_mode=False):
        self.settables = settables
        self.of_types = of_types
        self.values = values
        self.finally_mode = finally_mode
        self.saw_loop_finish = False

    def leaf(self, scope):
        return _triple(NIL, NIL, _alist_term(self.settables))

    def stmt(self, s, scope):
        if isinstance(s, (int, str)):
            return self.leaf(scope)
        if isinstance(s, Symbol):
            if s is NIL or s is T or is_keyword(s):
                return self.leaf(scope)
            raise TranslateError(
                "a bare variable is not a statement in a DO body: %s"
                % show(s), form=s)
        if not isinstance(s, Cons) or not isinstance(s.car, Symbol):
            raise TranslateError("not a DO-body statement: %s" % show(s),
                                 form=s)
        name = s.car.name
        if name == "IF":
            return self._stmt_if(s, scope)
        if name in ("LET", "LET*"):
            return self._stmt_let(s, scope, sequential=name == "LET*")
        if name == "MV-LET":
            return self._stmt_mv_let(s, scope)
        if name == "PROGN":
            return self._stmt_progn(_cons_args(s), scope)
        if name == "SETQ":
            return self._setq_step(s, [], scope)
        if name == "MV-SETQ":
            return self._mv_setq_step(s, [], scope)
        if name == "RETURN":
            return self._stmt_return(s, scope)
        if name == "LOOP-FINISH":
            if _cons_args(s):
                raise TranslateError("LOOP-FINISH takes no arguments", form=s)
            if self.finally_mode:
                raise TranslateError("LOOP-FINISH is not legal in a FINALLY "
                                     "clause", form=s)
            self.saw_loop_finish = True
            return _triple(K_FINISH, NIL, _alist_term(self.settables))
        raise TranslateError(
            "%s is not a statement; a DO body is built from if/let/let*/"
            "mv-let/progn/setq/mv-setq/return/loop-finish" % show(s), form=s)

    def _stmt_if(self, s, scope):
        args = _cons_args(s)
        if len(args) not in (2, 3):
            raise TranslateError("malformed IF in a DO body: %s" % show(s),
                                 form=s)
        test = self.expr(args[0], scope)
        tbr = self.stmt(args[1], scope)
        fbr = self.stmt(args[2], scope) if len(args) == 3 else self.leaf(scope)
        return mklist(IF, test, tbr, fbr)

    def _stmt_let(self, s, scope, sequential):
        args = [a for a in _cons_args(s) if not stobjs._is_declare(a)]
        if len(args) != 2:
            raise TranslateError("malformed %s in a DO body" % s.car.name,
                                 form=s)
        pairs = stobjs._binding_pairs(args[0])
        if pairs is None:
            raise TranslateError("malformed bindings in %s" % show(s), form=s)
        cur_scope = set(scope)
        out_pairs = []
        for var, rhs in pairs:
            if var.name in self.settables:
                raise TranslateError(
                    "a statement-position %s may not rebind the settable "
                    "variable %s; use SETQ" % (s.car.name, var.name), form=s)
            rhs2 = self.expr(rhs, cur_scope if sequential else scope)
            out_pairs.append(mklist(var, rhs2))
            cur_scope.add(var.name)
        body = self.stmt(args[1], cur_scope)
        return mklist(s.car, from_pylist(out_pairs), body)

    def _stmt_mv_let(self, s, scope):
        args = [a for a in _cons_args(s) if not stobjs._is_declare(a)]
        if len(args) != 3:
            raise TranslateError("malformed MV-LET in a DO body", form=s)
        vars_ = to_pylist(args[0], "MV-LET variables")
        if len(vars_) < 2 or not all(isinstance(v, Symbol) for v in vars_):
            raise TranslateError("malformed MV-LET variables in %s" % show(s),
                                 form=s)
        for v in vars_:
            if v.name in self.settables:
                raise TranslateError(
                    "a statement-position MV-LET may not rebind the settable "
                    "variable %s; use MV-SETQ" % v.name, form=s)
        rhs = self.expr(args[1], scope)
        body_scope = set(scope) | {v.name for v in vars_}
        body = self.stmt(args[2], body_scope)
        return mklist(MV_LET, args[0], rhs, body)

    def _stmt_progn(self, items, scope):
        if not items:
            return self.leaf(scope)
        if len(items) == 1:
            return self.stmt(items[0], scope)
        s0, rest = items[0], items[1:]
        if isinstance(s0, Cons) and isinstance(s0.car, Symbol):
            h = s0.car.name
            if h == "PROGN":
                return self._stmt_progn(_cons_args(s0) + rest, scope)
            if h == "IF":
                args = _cons_args(s0)
                if len(args) not in (2, 3):
                    raise TranslateError("malformed IF in a DO body: %s"
                                         % show(s0), form=s0)
                test = self.expr(args[0], scope)
                tbr = self._stmt_progn([args[1]] + rest, scope)
                fbr = self._stmt_progn(([args[2]] if len(args) == 3 else [])
                                       + rest, scope)
                return mklist(IF, test, tbr, fbr)
            if h == "SETQ":
                return self._setq_step(s0, rest, scope)
            if h == "MV-SETQ":
                return self._mv_setq_step(s0, rest, scope)
            if h in ("RETURN", "LOOP-FINISH"):
                raise TranslateError(
                    "%s must be the final form of its PROGN" % h, form=s0)
            if h in ("LET", "LET*", "MV-LET"):
                raise TranslateError(
                    "a %s before the end of a PROGN has no effect on the "
                    "settable variables; bind locals around the whole PROGN "
                    "instead" % h, form=s0)
        raise TranslateError(
            "only SETQ, MV-SETQ, IF, and PROGN may precede the final form "
            "of a PROGN, got %s" % show(s0), form=s0)

    def _setq_step(self, s, rest, scope):
        args = _cons_args(s)
        if len(args) != 2 or not isinstance(args[0], Symbol):
            raise TranslateError("SETQ takes a variable and a value: %s"
                                 % show(s), form=s)
        var = args[0]
        if var.name not in self.settables:
            raise TranslateError(
                "SETQ target %s is not settable (settable variables here: "
                "%s)" % (var.name, " ".join(self.settables) or "none"),
                form=s)
        rhs = self.expr(args[1], scope)
        rhs = self._typed(var.name, rhs)
        body = self._stmt_progn(rest, scope)
        return mklist(LET, mklist(mklist(var, rhs)), body)

    def _mv_setq_step(self, s, rest, scope):
        args = _cons_args(s)
        if len(args) != 2:
            raise TranslateError("MV-SETQ takes a variable list and a form",
                                 form=s)
        vars_ = to_pylist(args[0], "MV-SETQ variables")
        if len(vars_) < 2 or not all(isinstance(v, Symbol) for v in vars_):
            raise TranslateError("MV-SETQ needs two or more variables",
                                 form=s)
        names = [v.name for v in vars_]
        if len(set(names)) != len(names):
            raise TranslateError("duplicate MV-SETQ target in %s" % show(s),
                                 form=s)
        for n in names:
            if n not in self.settables:
                raise TranslateError(
                    "MV-SETQ target %s is not settable" % n, form=s)
        rhs = self.expr(args[1], scope)
        body = self._stmt_progn(rest, scope)
        for n in reversed(names):
            if n in self.of_types:
                sym = intern(n)
                body = mklist(LET, mklist(mklist(sym, self._typed(n, sym))),
                              body)
        return mklist(MV_LET, args[0], rhs, body)

    def _typed(self, name, rhs):
        if name in self.of_types:
            return mklist(OF_TYPE_CHECK, _q(intern(name)),
                          _q(intern(self.of_types[name])), rhs)
        return rhs

    def _stmt_return(self, s, scope):
        args = _cons_args(s)
        if len(args) != 1:
            raise TranslateError("RETURN takes exactly one form", form=s)
        e = args[0]
        sig = self.values
        if len(sig) == 1:
            if isinstance(e, Cons) and e.car is MV:
                raise TranslateError(
                    "RETURN of multiple values requires a :VALUES signature",
                    form=s)
            val = self.expr(e, scope)
            return _triple(K_RETURN, val, _alist_term(self.settables))
        if not (isinstance(e, Cons) and e.car is MV):
            raise TranslateError(
                "with :VALUES of length %d, RETURN needs a literal (MV ..) "
                "of that arity" % len(sig), form=s)
        comps = _cons_args(e)
        if len(comps) != len(sig):
            raise TranslateError(
                "RETURN supplies %d values for %d :VALUES slots"
                % (len(comps), len(sig)), form=s)
        terms = []
        for slot, comp in zip(sig, comps):
            if slot is not None:
                if not (isinstance(comp, Symbol) and comp.name == slot):
                    raise TranslateError(
                        "this RETURN slot must be the stobj %s, got %s"
                        % (slot, show(comp)), form=s)
                terms.append(comp)
            else:
                terms.append(self.expr(comp, scope))
        packed = NIL
        for t in reversed(terms):
            packed = mklist(PCONS, t, packed)
        return _triple(K_RETURN, packed, _alist_term(self.settables))

    def expr(self, e, scope):
        _scan_expr(e, scope, self.settables, "a DO-body expression")
        return e


def _scan_expr(e, scope, settables, what):
    if isinstance(e, (int, str)):
        return
    if isinstance(e, Symbol):
        if e is NIL or e is T or is_keyword(e):
            return
        if e.name not in scope:
            raise TranslateError(
                "%s is not bound in %s (settable variables: %s)"
                % (e.name, what, " ".join(settables) or "none"), form=e)
        return
    if not isinstance(e, Cons):
        raise TranslateError("cannot translate %r" % (e,))
    head = e.car
    if not isinstance(head, Symbol):
        raise TranslateError("call head must be a symbol in %s" % show(e),
                             form=e)
    name = head.name
    if name == "QUOTE":
        return
    if name in _STMT_HEADS:
        raise TranslateError(
            "%s is a statement and may not appear inside %s" % (name, what),
            form=e)
    if name in ("LOOP$", "STOBJ-LET"):
        raise TranslateError("%s is not supported inside a DO body" % name,
                             form=e)
    args = _cons_args(e)
    if name in ("LET", "LET*"):
        body = [a for a in args[1:] if not stobjs._is_declare(a)]
        pairs = stobjs._binding_pairs(args[0]) if args else None
        if pairs is None or len(body) != 1:
            raise TranslateError("malformed %s in %s" % (name, what), form=e)
        cur = set(scope)
        for var, rhs in pairs:
            _scan_expr(rhs, cur if name == "LET*" else scope, settables,
                       what)
            cur.add(var.name)
        _scan_expr(body[0], cur, settables, what)
        return
    if name == "MV-LET":
        body = [a for a in args[2:] if not stobjs._is_declare(a)]
        if len(args) < 3 or len(body) != 1:
            raise TranslateError("malformed MV-LET in %s" % what, form=e)
        vars_ = to_pylist(args[0], "MV-LET variables")
        _scan_expr(args[1], scope, settables, what)
        _scan_expr(body[0], set(scope) | {v.name for v in vars_
                                          if isinstance(v, Symbol)},
                   settables, what)
        return
    for a in args:
        _scan_expr(a, scope, settables, what)


def _cons_args(form):
    return to_pylist(form.cdr, "argument list")


### measure guessing

def guess_measure(spec):
    updates = {}
    _collect_updates(spec.do_body, updates)
    candidates = []
    for name, _typ, _init in spec.withs:
        ups = updates.get(name)
        if not ups or ups == "complex":
            continue
        if all(_is_numeric_step(r, name) for r in ups):
            candidates.append(mklist(intern("NFIX"), intern(name)))
        elif all(_is_cdr_step(r, name) for r in ups):
            candidates.append(mklist(intern("LEN"), intern(name)))
    if len(candidates) == 1:
        return candidates[0]
    raise TranslateError(
        "cannot guess a :MEASURE for this DO loop (no single WITH variable "
        "is stepped only by 1-/-/cdr of itself); supply :MEASURE",
        form=spec.form)


def _collect_updates(s, out):
    if not isinstance(s, Cons) or not isinstance(s.car, Symbol):
        return
    name = s.car.name
    args = _cons_args(s)
    if name == "IF":
        for a in args[1:]:
            _collect_updates(a, out)
    elif name in ("LET", "LET*", "MV-LET"):
        body = [a for a in args if not stobjs._is_declare(a)]
        if body:
            _collect_updates(body[-1], out)
    elif name == "PROGN":
        for a in args:
            _collect_updates(a, out)
    elif name == "SETQ" and len(args) == 2 and isinstance(args[0], Symbol):
        cur = out.get(args[0].name)
        if cur != "complex":
            out.setdefault(args[0].name, []).append(args[1])
    elif name == "MV-SETQ" and args:
        try:
            for v in to_pylist(args[0], "targets"):
                if isinstance(v, Symbol):
                    out[v.name] = "complex"
        except LispError:
            pass


def _is_numeric_step(r, name):
    if not (isinstance(r, Cons) and isinstance(r.car, Symbol)):
        return False
    args = _cons_args(r)
    if r.car.name == "1-":
        return len(args) == 1 and isinstance(args[0], Symbol) \
            and args[0].name == name
    if r.car.name == "-":
        return (len(args) == 2 and isinstance(args[0], Symbol)
                and args[0].name == name and isinstance(args[1], int)
                and args[1] > 0)
    return False


def _is_cdr_step(r, name):
    return (isinstance(r, Cons) and r.car is CDR
            and isinstance(r.cdr, Cons) and isinstance(r.cdr.car, Symbol)
            and r.cdr.car.name == name and r.cdr.cdr is NIL)


### measures

def lex_fix(v):
    if isinstance(v, int):
        return (v,) if v >= 0 else (0,)
    if v is NIL:
        return ()
    if isinstance(v, Cons):
        items = []
        node = v
        while isinstance(node, Cons):
            x = node.car
            items.append(x if isinstance(x, int) and x >= 0 else 0)
            node = node.cdr
        if node is not NIL:
            return (0,)
        return tuple(items)
    return (0,)


def l_less(a, b):
    if len(a) != len(b):
        return len(a) < len(b)
    return a < b


def lex_show(t):
    return "(" + " ".join(str(x) for x in t) + ")"


### guards

def check_of_type(interp, var, typ, value, form=None, iteration=None):
    if typ != "INTEGER" or not interp.guard_check:
        return
    if isinstance(value, int):
        return
    msg = "OF-TYPE violation: %s = %s is not an INTEGER" % (var, show(value))
    if iteration is not None:
        msg += " (iteration %d)" % iteration
    raise OfTypeViolation(msg, form=form)


### shared setup and result decoding

def initial_bindings(interp, spec, env, form):
    from .kernel import Env
    entries = []
    cur = env
    for name, typ, init in spec.withs:
        v = interp.eval(init, cur) if init is not None else NIL
        if typ == "INTEGER":
            check_of_type(interp, name, typ, v, form=form, iteration=0)
        if isinstance(v, (MultiValue, stobjs.StobjInstance)):
            raise EvalError("WITH %s may not be initialized to a stobj or "
                            "multiple values" % name, form=form)
        entries.append((name, v))
        cur = Env({name: v}, cur)
    for sname in spec.value_stobjs():
        entries.append((sname, interp.resolve_stobj(sname, env, form)))
    return entries


def decode_result(spec, value, form):
    sig = spec.values
    if len(sig) == 1:
        if isinstance(value, MultiValue):
            raise EvalError("this DO loop returns a single value", form=form)
        _sig_check(sig[0], value, form)
        return value
    if not isinstance(value, MultiValue) or len(value.values) != len(sig):
        raise EvalError("this DO loop returns %d values" % len(sig),
                        form=form)
    for slot, v in zip(sig, value.values):
        _sig_check(slot, v, form)
    return value


def _sig_check(slot, v, form):
    if slot is None:
        if isinstance(v, stobjs.StobjInstance):
            raise EvalError("a stobj came back in an ordinary :VALUES slot",
                            form=form)
    else:
        if not (isinstance(v, stobjs.StobjInstance) and v.spec.name == slot):
            raise EvalError("the :VALUES slot for stobj %s did not receive "
                            "it" % slot, form=form)


def _default_result(spec, form):
    if spec.value_stobjs():
        raise EvalError("the FINALLY clause fell through without RETURN, "
                        "but :VALUES names stobjs", form=form)
    if len(spec.values) == 1:
        return NIL
    return MultiValue([NIL] * len(spec.values))


### the measured recursive path

def run_do(interp, spec, plan, env, form):
    entries = initial_bindings(interp, spec, env, form)
    alist = _build_alist(entries)
    n = 0
    m_cur = None
    while True:
        n += 1
        if plan.guard_fn is not None and interp.guard_check:
            if not truthy(_apply_plan(interp, plan.guard_fn, alist, n)):
                raise GuardViolation(
                    "loop :GUARD %s failed entering iteration %d with %s"
                    % (show(spec.guard), n, show(alist)), form=form)
        if m_cur is None:
            m_cur = lex_fix(_apply_plan(interp, plan.measure_fn, alist, n))
        if interp.trace:
            interp.loop_measures.append(m_cur)
        token, val, new_alist = _take_triple(
            interp, _apply_plan(interp, plan.do_fn, alist, n), form)
        if interp.trace:
            interp.do_trace.append(
                ("do", alist, from_pylist([token, val, new_alist])))
        if token is K_RETURN:
            return _decode_triple_value(spec, val, form)
        if token is K_FINISH:
            if plan.finally_fn is None:
                return _default_result(spec, form)
            ftoken, fval, falist = _take_triple(
                interp, _apply_plan(interp, plan.finally_fn, new_alist, n),
                form)
            if interp.trace:
                interp.do_trace.append(
                    ("finally", new_alist,
                     from_pylist([ftoken, fval, falist])))
            if ftoken is K_RETURN:
                return _decode_triple_value(spec, fval, form)
            return _default_result(spec, form)
        m_new = lex_fix(_apply_plan(interp, plan.measure_fn, new_alist, n))
        if not l_less(m_new, m_cur):
            raise MeasureViolation(
                "the measure %s of this DO loop failed to decrease at "
                "iteration %d: %s (from %s) is not below %s (from %s)"
                % (show(plan.measure_form), n, lex_show(m_new),
                   show(new_alist), lex_show(m_cur), show(alist)), form=form)
        alist, m_cur = new_alist, m_new


def _apply_plan(interp, fn, alist, n):
    try:
        return interp.apply_lambda(fn, [alist])
    except OfTypeViolation as e:
        raise OfTypeViolation("%s (iteration %d)" % (e.message, n),
                              form=e.form)


def _build_alist(entries):
    return from_pylist([Cons(intern(name), v) for name, v in entries])


def _take_triple(interp, raw, form):
    items = []
    node = raw
    while isinstance(node, Cons) and len(items) < 3:
        items.append(node.car)
        node = node.cdr
    while len(items) < 3:
        items.append(NIL)
    token = items[0]
    if token is not NIL and token is not K_RETURN and token is not K_FINISH:
        raise EvalError("malformed exit triple %s" % show(raw), form=form)
    return items[0], items[1], items[2]


def _decode_triple_value(spec, val, form):
    sig = spec.values
    if len(sig) == 1:
        return decode_result(spec, val, form)
    items = []
    node = val
    while isinstance(node, Cons):
        items.append(node.car)
        node = node.cdr
    if len(items) != len(sig):
        raise EvalError("this DO loop returns %d values" % len(sig),
                        form=form)
    return decode_result(spec, MultiValue(items), form)


### the native imperative path

def native_exec(interp, spec, plan, env, form):
    from .kernel import Env
    slots = dict(initial_bindings(interp, spec, env, form))
    base = Env(slots)
    n = 0
    while True:
        n += 1
        if n > interp.cap:
            raise CapExceeded(
                "DO loop passed the native iteration cap of %d without "
                "returning; supply a decreasing :MEASURE and run the "
                "logical path, or raise the cap" % interp.cap, form=form)
        if spec.guard is not None and interp.guard_check:
            if not truthy(interp.eval(spec.guard, base)):
                raise GuardViolation(
                    "loop :GUARD %s failed entering iteration %d"
                    % (show(spec.guard), n), form=form)
        out = _exec_stmt(interp, spec.do_body, base, slots, plan, n)
        if out[0] == "return":
            return decode_result(spec, out[1], form)
        if out[0] == "finish":
            if spec.finally_body is None:
                return _default_result(spec, form)
            fout = _exec_stmt(interp, spec.finally_body, base, slots, plan, n)
            if fout[0] == "return":
                return decode_result(spec, fout[1], form)
            return _default_result(spec, form)


_FALL = ("fall", None)


def _exec_stmt(interp, s, env, slots, plan, n):
    from .kernel import Env
    if not isinstance(s, Cons):
        return _FALL
    name = s.car.name
    args = _cons_args(s)
    if name == "IF":
        test = interp.eval(args[0], env)
        if isinstance(test, (MultiValue, stobjs.StobjInstance)):
            raise EvalError("bad value in an IF test", form=s)
        if truthy(test):
            return _exec_stmt(interp, args[1], env, slots, plan, n)
        if len(args) == 3:
            return _exec_stmt(interp, args[2], env, slots, plan, n)
        return _FALL
    if name in ("LET", "LET*"):
        body = [a for a in args[1:] if not stobjs._is_declare(a)]
        pairs = stobjs._binding_pairs(args[0])
        if name == "LET":
            frame = {}
            for var, rhs in pairs:
                val = interp.eval(rhs, env)
                interp.check_binding(var.name, val, s)
                frame[var.name] = val
            return _exec_stmt(interp, body[0], Env(frame, env), slots, plan,
                              n)
        cur = env
        for var, rhs in pairs:
            val = interp.eval(rhs, cur)
            interp.check_binding(var.name, val, s)
            cur = Env({var.name: val}, cur)
        return _exec_stmt(interp, body[0], cur, slots, plan, n)
    if name == "MV-LET":
        body = [a for a in args[2:] if not stobjs._is_declare(a)]
        vars_ = to_pylist(args[0], "MV-LET variables")
        val = interp.eval(args[1], env)
        if not isinstance(val, MultiValue) or len(val.values) != len(vars_):
            raise EvalError("MV-LET expected %d values" % len(vars_), form=s)
        frame = {}
        for var, v in zip(vars_, val.values):
            interp.check_binding(var.name, v, s)
            frame[var.name] = v
        return _exec_stmt(interp, body[0], Env(frame, env), slots, plan, n)
    if name == "PROGN":
        for item in args:
            out = _exec_stmt(interp, item, env, slots, plan, n)
            if out[0] != "fall":
                return out
        return _FALL
    if name == "SETQ":
        var = args[0].name
        val = interp.eval(args[1], env)
        if var in plan.of_types:
            check_of_type(interp, var, plan.of_types[var], val, form=s,
                          iteration=n)
        interp.check_binding(var, val, s)
        slots[var] = val
        return _FALL
    if name == "MV-SETQ":
        vars_ = to_pylist(args[0], "MV-SETQ variables")
        val = interp.eval(args[1], env)
        if not isinstance(val, MultiValue) or len(val.values) != len(vars_):
            raise EvalError("MV-SETQ expected %d values" % len(vars_),
                            form=s)
        for var, v in zip(vars_, val.values):
            if var.name in plan.of_types:
                check_of_type(interp, var.name, plan.of_types[var.name], v,
                              form=s, iteration=n)
            interp.check_binding(var.name, v, s)
            slots[var.name] = v
        return _FALL
    if name == "RETURN":
        return ("return", interp.eval(args[0], env))
    if name == "LOOP-FINISH":
        return ("finish", None)
    raise EvalError("unexpected statement %s" % show(s), form=s)


### FOR loops

def for_exec(interp, spec, env, form):
    from .kernel import Env
    rng = interp.eval(spec.for_range, env)
    items = []
    node = rng
    while isinstance(node, Cons):
        items.append(node.car)
        node = node.cdr
    if node is not NIL:
        raise EvalError("FOR range is not a proper list: %s" % show(rng),
                        form=form)
    acc = 0 if spec.for_acc == "SUM" else []
    for x in items:
        v = interp.eval(spec.for_body, Env({spec.for_var.name: x}, env))
        if spec.for_acc == "SUM":
            if not isinstance(v, int):
                if interp.guard_check:
                    raise GuardViolation(
                        "guard violation in %s: SUM accumulated the "
                        "non-integer %s" % (show(spec.for_body), show(v)),
                        form=form)
                v = 0
            acc += v
        else:
            if isinstance(v, (MultiValue, stobjs.StobjInstance)):
                raise EvalError("bad value under COLLECT", form=form)
            acc.append(v)
    if spec.for_acc == "SUM":
        return acc
    return from_pylist(acc)


### entry point

def eval_loop(interp, form, env):
    spec = parse_loop(form, interp.world)
    if spec.kind == "FOR":
        return for_exec(interp, spec, env, form)
    plan = make_do_plan(spec, interp.world)
    if interp.in_place():
        return native_exec(interp, spec, plan, env, form)
    return run_do(interp, spec, plan, env, form)
