"""Loop tests: the measure algebra, measure guessing, the DO statement
grammar, both execution paths (checked against each other and against
Python reference evaluations), guards, traces, and FOR loops."""

import itertools
import random

import pytest

from stlisp import loops, sexpr
from stlisp.errors import (CapExceeded, EvalError, GuardViolation,
                           LinearityError, MeasureViolation, TranslateError)
from stlisp.kernel import Interp
from stlisp.loops import OfTypeViolation, l_less, lex_fix, lex_show
from stlisp.sexpr import NIL, T, MultiValue, intern, read, show


def run_both(text, setup="", **kw):
    """Evaluate in logical and native mode; insist the results agree."""
    outs = []
    for mode in ("logical", "native"):
        interp = Interp(mode=mode, **kw)
        if setup:
            interp.eval_text(setup)
        outs.append(interp.eval_text(text)[-1][1])
    a, b = outs
    if isinstance(a, MultiValue):
        assert isinstance(b, MultiValue) and len(a.values) == len(b.values)
        for x, y in zip(a.values, b.values):
            assert values_equal(x, y)
    else:
        assert values_equal(a, b)
    return a


def values_equal(x, y):
    from stlisp.stobjs import StobjInstance
    if isinstance(x, StobjInstance) or isinstance(y, StobjInstance):
        return (isinstance(x, StobjInstance) and isinstance(y, StobjInstance)
                and sexpr.equal(x.logical_view(), y.logical_view()))
    return sexpr.equal(x, y)


# ----------------------------------------------------------- measure algebra

def test_lex_fix_cases():
    assert lex_fix(4) == (4,)
    assert lex_fix(0) == (0,)
    assert lex_fix(-3) == (0,)
    assert lex_fix(NIL) == ()
    assert lex_fix(read("(4)")) == (4,)
    assert lex_fix(read("(2 x)")) == (2, 0)
    assert lex_fix(read("(3 1 2)")) == (3, 1, 2)
    assert lex_fix(read("(1 . 2)")) == (0,)
    assert lex_fix("text") == (0,)
    assert lex_fix(read("(-1 5)")) == (0, 5)


def test_l_less_spec_cases():
    assert l_less((2,), (1, 0))        # shorter always below longer
    assert not l_less((1, 0), (2,))
    assert l_less((), (0,))
    assert l_less((1, 1), (1, 2))
    assert not l_less((1, 2), (1, 2))
    assert l_less((0, 9, 9), (1, 0, 0))


def test_l_less_is_the_length_then_lex_order():
    # independent oracle: sort key (length, tuple)
    domain = [()]
    for n in (1, 2, 3):
        domain += list(itertools.product(range(4), repeat=n))
    key = lambda t: (len(t), t)
    for a in domain:
        assert not l_less(a, a)
        for b in domain:
            assert l_less(a, b) == (key(a) < key(b))
            if l_less(a, b):
                assert not l_less(b, a)
    # strict total order on a finite set has no infinite descending chain
    ranked = sorted(domain, key=key)
    for lo, hi in zip(ranked, ranked[1:]):
        assert l_less(lo, hi)


def test_lex_show():
    assert lex_show((3, 1)) == "(3 1)"
    assert lex_show(()) == "()"


# ---------------------------------------------------------- measure guessing

def guess(text, world=None):
    spec = loops.parse_loop(read(text), world or Interp().world)
    return show(loops.guess_measure(spec))


def test_guess_measure_numeric_and_cdr_steps():
    assert guess("(loop$ with i = 5 do (if (zp i) (return 0) "
                 "(setq i (1- i))))") == "(NFIX I)"
    assert guess("(loop$ with i = 9 do (if (zp i) (return 0) "
                 "(setq i (- i 3))))") == "(NFIX I)"
    assert guess("(loop$ with lst = '(1 2) do (if (consp lst) "
                 "(setq lst (cdr lst)) (return 0)))") == "(LEN LST)"


def test_guess_measure_counting_up_fails():
    with pytest.raises(TranslateError) as exc:
        guess("(loop$ with i = 0 do (if (= i 5) (return i) "
              "(setq i (1+ i))))")
    assert "cannot guess a :MEASURE" in str(exc.value)


def test_guess_measure_needs_exactly_one_candidate():
    # two stepped candidates
    with pytest.raises(TranslateError):
        guess("(loop$ with i = 5 with j = 5 do (if (zp i) (return j) "
              "(progn (setq i (1- i)) (setq j (1- j)))))")
    # no candidates at all
    with pytest.raises(TranslateError):
        guess("(loop$ with x = 0 do (return x))")


def test_guess_measure_skips_mv_setq_targets():
    # n is the only simple candidate; a and b step through MV-SETQ
    assert guess("(loop$ with n = 9 with a = 0 with b = 1 do "
                 "(if (zp n) (return a) (progn (mv-setq (a b) "
                 "(mv b (+ a b))) (setq n (1- n)))))") == "(NFIX N)"
    # the same pair without a simple companion is not guessable
    with pytest.raises(TranslateError):
        guess("(loop$ with a = 0 with b = 1 do (if (< 100 a) (return a) "
              "(mv-setq (a b) (mv b (+ a b)))))")


def test_guessed_measure_mixed_step_kinds_disqualify():
    with pytest.raises(TranslateError):
        guess("(loop$ with i = 5 do (if (zp i) (return 0) "
              "(if (consp i) (setq i (cdr i)) (setq i (1- i)))))")


# ----------------------------------------------------------- grammar errors

def plan_error(text, world=None):
    w = world or Interp().world
    spec = loops.parse_loop(read(text), w)
    with pytest.raises(TranslateError) as exc:
        loops.make_do_plan(spec, w)
    return str(exc.value)


def parse_error(text, world=None):
    with pytest.raises(TranslateError) as exc:
        loops.parse_loop(read(text), world or Interp().world)
    return str(exc.value)


def test_parse_errors():
    assert "duplicate WITH variable X" in parse_error(
        "(loop$ with x = 0 with x = 1 do (return x))")
    assert "expected DO after the WITH clauses" in parse_error(
        "(loop$ with x = 0 (return x))")
    assert "DO loop has no body" in parse_error(
        "(loop$ with x = 0 do :measure (nfix x))")
    assert "expected FINALLY and a body after the DO body" in parse_error(
        "(loop$ with x = 0 do (return x) (return x))")
    assert "unexpected trailing forms" in parse_error(
        "(loop$ with x = 0 do (return x) finally (return x) 3)")
    assert "OF-TYPE supports INTEGER and T only" in parse_error(
        "(loop$ with x of-type string = 0 do (return x))")
    assert "duplicate :MEASURE" in parse_error(
        "(loop$ with x = 0 do :measure 1 :measure 2 (return x))")
    assert ":VALUES may not be empty" in parse_error(
        "(loop$ with x = 0 do :values nil (return x))")
    assert ":VALUES entries must be NIL or a defined stobj, got FOO" \
        in parse_error("(loop$ with x = 0 do :values (foo) (return x))")
    assert "WITH X = needs a value" in parse_error("(loop$ with x =)")
    assert ":MEASURE needs a value" in parse_error(
        "(loop$ with x = 0 do :measure)")
    assert "bad WITH variable :K" in parse_error(
        "(loop$ with :k = 0 do (return 1))")


def test_with_may_not_bind_stobj_name():
    interp = Interp()
    interp.eval_text("(defstobj st fld)")
    msg = parse_error("(loop$ with st = 0 do (return st))", interp.world)
    assert "WITH may not bind the stobj name ST; stobjs enter a DO loop " \
        "through :VALUES" in msg


def test_statement_grammar_errors():
    assert "a bare variable is not a statement in a DO body: X" \
        in plan_error("(loop$ with x = 0 do :measure 0 x)")
    assert "is not a statement; a DO body is built from" \
        in plan_error("(loop$ with x = 0 do :measure 0 (+ x 1))")
    assert "RETURN must be the final form of its PROGN" \
        in plan_error("(loop$ with x = 0 do :measure 0 "
                      "(progn (return x) (setq x 1)))")
    assert "a LET before the end of a PROGN has no effect" \
        in plan_error("(loop$ with x = 0 do :measure 0 "
                      "(progn (let ((y 1)) (setq x y)) (return x)))")
    assert "only SETQ, MV-SETQ, IF, and PROGN may precede" \
        in plan_error("(loop$ with x = 0 do :measure 0 "
                      "(progn 5 (return x)))")
    assert "a statement-position LET may not rebind the settable " \
        "variable X; use SETQ" \
        in plan_error("(loop$ with x = 0 do :measure 0 "
                      "(let ((x 1)) (return x)))")
    assert "a statement-position MV-LET may not rebind the settable " \
        "variable X; use MV-SETQ" \
        in plan_error("(loop$ with x = 0 do :measure 0 "
                      "(mv-let (x y) (mv 1 2) (return x)))")
    assert "SETQ target Y is not settable (settable variables here: X)" \
        in plan_error("(loop$ with x = 0 do :measure 0 (setq y 1))")
    assert "MV-SETQ needs two or more variables" \
        in plan_error("(loop$ with x = 0 with y = 0 do :measure 0 "
                      "(mv-setq (x) (mv 1)))")
    assert "duplicate MV-SETQ target" \
        in plan_error("(loop$ with x = 0 with y = 0 do :measure 0 "
                      "(mv-setq (x x) (mv 1 2)))")
    assert "MV-SETQ target Z is not settable" \
        in plan_error("(loop$ with x = 0 with y = 0 do :measure 0 "
                      "(mv-setq (x z) (mv 1 2)))")
    assert "RETURN takes exactly one form" \
        in plan_error("(loop$ with x = 0 do :measure 0 (return))")
    assert "LOOP-FINISH takes no arguments" \
        in plan_error("(loop$ with x = 0 do :measure 0 (loop-finish 3))")
    assert "LOOP-FINISH is not legal in a FINALLY clause" \
        in plan_error("(loop$ with x = 0 do :measure 0 (return x) "
                      "finally (loop-finish))")


def test_expression_level_rejections():
    assert "SETQ is a statement and may not appear inside a DO-body " \
        "expression" in plan_error(
            "(loop$ with x = 0 do :measure 0 (setq x (setq x 1)))")
    assert "LOOP$ is not supported inside a DO body" in plan_error(
        "(loop$ with x = 0 do :measure 0 "
        "(setq x (loop$ for y in '(1) sum y)))")
    assert "STOBJ-LET is not supported inside a DO body" in plan_error(
        "(loop$ with x = 0 do :measure 0 "
        "(setq x (stobj-let ((a (tbl-get 'a top (create-a)))) (v) (f a) v)))")
    msg = plan_error("(loop$ with x = 0 do :measure 0 (setq x (+ x free)))")
    assert "FREE is not bound in a DO-body expression " \
        "(settable variables: X)" in msg
    assert ":MEASURE" in plan_error(
        "(loop$ with x = 0 do :measure (nfix zz) (return x))")


def test_return_shape_validation():
    interp = Interp()
    interp.eval_text("(defstobj st fld)")
    w = interp.world
    assert "RETURN of multiple values requires a :VALUES signature" \
        in plan_error("(loop$ with x = 0 do :measure 0 (return (mv x 1)))")
    assert "with :VALUES of length 2, RETURN needs a literal (MV ..)" \
        in plan_error("(loop$ with x = 0 do :values (nil st) :measure 0 "
                      "(return x))", w)
    assert "RETURN supplies 3 values for 2 :VALUES slots" \
        in plan_error("(loop$ with x = 0 do :values (nil st) :measure 0 "
                      "(return (mv x 1 2)))", w)
    assert "this RETURN slot must be the stobj ST, got (UPDATE-FLD 1 ST)" \
        in plan_error("(loop$ with x = 0 do :values (nil st) :measure 0 "
                      "(return (mv x (update-fld 1 st))))", w)
    assert "stobj ST appears twice in :VALUES" in parse_error(
        "(loop$ with x = 0 do :values (st st) :measure 0 "
        "(return (mv st st)))", w)


def test_loop_finish_without_finally_cannot_yield_stobjs():
    interp = Interp()
    interp.eval_text("(defstobj st fld)")
    msg = plan_error("(loop$ with x = 0 do :values (nil st) :measure 0 "
                     "(if (zp x) (loop-finish) (return (mv x st))))",
                     interp.world)
    assert "LOOP-FINISH without a FINALLY clause cannot produce the " \
        "stobjs named in :VALUES" in msg


def test_bad_loops_are_rejected_before_evaluation():
    # through the interpreter the static pass reports them
    interp = Interp()
    with pytest.raises(LinearityError) as exc:
        interp.eval_text("(loop$ with x = 0 do :measure 0 (setq y 1))")
    assert "SETQ target Y is not settable" in str(exc.value)


# ------------------------------------------------------------- DO execution

def test_countdown_sum():
    assert run_both("(loop$ with i = 10 with acc = 0 do "
                    "(if (zp i) (return acc) (progn (setq acc (+ acc i)) "
                    "(setq i (1- i)))))") == 55


def test_sum_of_squares_list_walk():
    v = run_both("""
      (loop$ with sum = 0
             with lst = '(1 2 3 4)
             do
             (if (consp lst)
                 (progn (setq sum (+ (* (car lst) (car lst)) sum))
                        (setq lst (cdr lst)))
               (return sum)))
    """)
    assert v == 30


def test_explicit_measure_and_finally():
    v = run_both("""
      (loop$ with i = 1 with sum = 0
             do :measure (nfix (- 6 i))
             (if (< 5 i) (loop-finish)
                 (progn (setq sum (+ sum (* 2 i))) (setq i (1+ i))))
             finally (return sum))
    """)
    assert v == 30


def test_finally_falls_through_to_nil():
    v = run_both("(loop$ with i = 2 do (if (zp i) (loop-finish) "
                 "(setq i (1- i))) finally (setq i 99))")
    assert v is NIL


def test_loop_finish_without_finally_returns_nil():
    v = run_both("(loop$ with i = 3 do (if (zp i) (loop-finish) "
                 "(setq i (1- i))))")
    assert v is NIL


def test_one_armed_if_keeps_looping():
    v = run_both("(loop$ with i = 4 with seen = nil do "
                 "(progn (if (equal i 2) (setq seen t)) "
                 "(if (zp i) (return seen) (setq i (1- i)))))")
    assert v is T


def test_fibonacci_with_mv_setq():
    v = run_both("(loop$ with n = 10 with a = 0 with b = 1 do "
                 "(if (zp n) (return a) (progn "
                 "(mv-setq (a b) (mv b (+ a b))) (setq n (1- n)))))")
    assert v == 55


def test_subtraction_gcd_with_explicit_measure():
    v = run_both("(loop$ with a = 12 with b = 18 do :measure (+ a b) "
                 "(if (= a b) (return a) "
                 "(if (< a b) (setq b (- b a)) (setq a (- a b)))))")
    assert v == 6


def test_let_and_mv_let_inside_bodies():
    v = run_both("""
      (loop$ with i = 3 with acc = 0
             do
             (if (zp i)
                 (return acc)
               (let* ((sq (* i i)) (bump (+ sq 1)))
                 (progn (setq acc (+ acc bump)) (setq i (1- i))))))
    """)
    assert v == 17  # (9+1) + (4+1) + (1+1)
    v = run_both("""
      (defun split (n) (mv (* 2 n) (1+ n)))
      (loop$ with i = 2 with acc = 0
             do
             (if (zp i)
                 (return acc)
               (mv-let (dub nxt) (split i)
                 (progn (setq acc (+ acc dub nxt)) (setq i (1- i))))))
    """)
    assert v == 11  # (4+3) + (2+2)


def test_init_defaults_to_nil():
    v = run_both("(loop$ with x do :measure 0 (return x))")
    assert v is NIL


def test_multiple_plain_values():
    v = run_both("(loop$ with i = 1 do :values (nil nil) :measure (nfix i) "
                 "(if (zp i) (return (mv 7 8)) (setq i (1- i))))")
    assert isinstance(v, MultiValue)
    assert list(v.values) == [7, 8]


def test_quoted_data_is_inert_in_bodies():
    v = run_both("(loop$ with l = '(a b c) with n = 0 do "
                 "(if (consp l) (progn (setq n (1+ n)) (setq l (cdr l))) "
                 "(return (cons 'done n))))")
    assert show(v) == "(DONE . 3)"


# --------------------------------------------------------------- stobj loops

STOBJ_SETUP = "(defstobj st fld)"


def test_stobj_loop_collects_into_field():
    for mode in ("logical", "native"):
        interp = Interp(mode=mode)
        interp.eval_text(STOBJ_SETUP)
        out = interp.eval_text("""
          (loop$ with i = 4 with sum = 0
                 do :values (nil st)
                 (if (zp i)
                     (return (mv sum st))
                   (progn
                     (setq st (update-fld (cons (* i i) (fld st)) st))
                     (setq sum (+ sum i))
                     (setq i (1- i)))))
        """)[0][1]
        assert isinstance(out, MultiValue)
        assert out.values[0] == 10
        assert show(interp.eval_text("(fld st)")[0][1]) == "(1 4 9 16)"


def test_stobj_loop_single_stobj_signature():
    for mode in ("logical", "native"):
        interp = Interp(mode=mode)
        interp.eval_text(STOBJ_SETUP)
        interp.eval_text("""
          (loop$ with i = 3
                 do :values (st)
                 (if (zp i)
                     (return st)
                   (progn (setq st (update-fld (cons i (fld st)) st))
                          (setq i (1- i)))))
        """)
        assert show(interp.eval_text("(fld st)")[0][1]) == "(1 2 3)"


def test_stobj_loop_finally_returns_stobj():
    for mode in ("logical", "native"):
        interp = Interp(mode=mode)
        interp.eval_text(STOBJ_SETUP)
        out = interp.eval_text("""
          (loop$ with i = 2
                 do :values (nil st)
                 (if (zp i)
                     (loop-finish)
                   (progn (setq st (update-fld (cons i (fld st)) st))
                          (setq i (1- i))))
                 finally (return (mv (fld st) st)))
        """)[0][1]
        assert show(out.values[0]) == "(1 2)"


def test_stobj_loop_fallthrough_with_stobj_values_errors():
    for mode in ("logical", "native"):
        interp = Interp(mode=mode)
        interp.eval_text(STOBJ_SETUP)
        with pytest.raises(EvalError) as exc:
            interp.eval_text("""
              (loop$ with i = 1
                     do :values (nil st)
                     (if (zp i) (loop-finish) (setq i (1- i)))
                     finally (setq i 0))
            """)
        assert "the FINALLY clause fell through without RETURN, but " \
            ":VALUES names stobjs" in str(exc.value)


def test_loop_inside_defun_with_stobj():
    text = STOBJ_SETUP + """
      (defun fill-squares (n st)
        (declare (xargs :stobjs (st) :guard (natp n)))
        (loop$ with i = n
               do :values (st) :guard (natp i)
               (if (zp i)
                   (return st)
                 (progn (setq st (update-fld (cons (* i i) (fld st)) st))
                        (setq i (1- i))))))
      (fill-squares 4 st)
      (fld st)
    """
    for mode in ("logical", "native"):
        interp = Interp(mode=mode)
        vals = interp.eval_text(text)
        assert show(vals[-1][1]) == "(1 4 9 16)"


# ------------------------------------------------------- guards and of-type

def test_of_type_violation_same_class_and_message_both_modes():
    msgs = []
    for mode in ("logical", "native"):
        interp = Interp(mode=mode)
        with pytest.raises(OfTypeViolation) as exc:
            interp.eval_text(
                "(loop$ with i of-type integer = 3 do :measure (nfix i) "
                "(if (zp i) (return i) (setq i (if (= i 2) 'oops (1- i)))))")
        msgs.append(exc.value.message)
    assert msgs[0] == msgs[1]
    assert "OF-TYPE violation: I = OOPS is not an INTEGER" in msgs[0]
    assert "(iteration 2)" in msgs[0]


def test_of_type_checks_initial_value():
    for mode in ("logical", "native"):
        interp = Interp(mode=mode)
        with pytest.raises(OfTypeViolation) as exc:
            interp.eval_text("(loop$ with i of-type integer = 'a do "
                             ":measure 0 (return i))")
        assert "(iteration 0)" in str(exc.value)


def test_of_type_t_is_unchecked():
    assert run_both("(loop$ with x of-type t = 'sym do :measure 0 "
                    "(return x))") is intern("SYM")


def test_of_type_off_when_guards_off():
    assert run_both(
        "(loop$ with i of-type integer = 'a do :measure 0 (return i))",
        guard_check=False) is intern("A")


def test_loop_guard_failure_both_modes():
    for mode in ("logical", "native"):
        interp = Interp(mode=mode)
        with pytest.raises(GuardViolation) as exc:
            interp.eval_text(
                "(loop$ with i = 5 do :guard (< i 3) :measure (nfix i) "
                "(if (zp i) (return i) (setq i (1- i))))")
        assert "loop :GUARD (< I 3) failed entering iteration 1" \
            in str(exc.value)


def test_loop_guard_checked_each_entry():
    # passes at first, trips when i drops below the bound
    for mode in ("logical", "native"):
        interp = Interp(mode=mode)
        with pytest.raises(GuardViolation) as exc:
            interp.eval_text(
                "(loop$ with i = 5 do :guard (< 3 i) :measure (nfix i) "
                "(if (zp i) (return i) (setq i (1- i))))")
        assert "failed entering iteration 3" in str(exc.value)


def test_mv_setq_of_type_checked():
    for mode in ("logical", "native"):
        interp = Interp(mode=mode)
        with pytest.raises(OfTypeViolation):
            interp.eval_text(
                "(loop$ with a of-type integer = 0 with b = 0 do "
                ":measure 0 (progn (mv-setq (a b) (mv 'x 'y)) "
                "(return a)))")


# -------------------------------------------------- measure failure and cap

NONDEC = "(loop$ with x = 0 do :measure (nfix x) (setq x x))"


def test_measure_violation_diagnostic():
    interp = Interp()
    with pytest.raises(MeasureViolation) as exc:
        interp.eval_text(NONDEC)
    msg = str(exc.value)
    assert ("the measure (NFIX X) of this DO loop failed to decrease at "
            "iteration 1: (0) (from ((X . 0))) is not below (0) "
            "(from ((X . 0)))") in msg


def test_measure_violation_reports_later_iteration():
    interp = Interp()
    with pytest.raises(MeasureViolation) as exc:
        interp.eval_text("(loop$ with x = 3 do :measure (nfix x) "
                         "(if (zp x) (setq x 3) (setq x (1- x))))")
    assert "failed to decrease at iteration 4" in str(exc.value)
    assert "(3) (from ((X . 3))) is not below (0) (from ((X . 0)))" \
        in str(exc.value)


def test_native_cap_exceeded():
    interp = Interp(mode="native", cap=100)
    with pytest.raises(CapExceeded) as exc:
        interp.eval_text(NONDEC)
    assert ("DO loop passed the native iteration cap of 100 without "
            "returning; supply a decreasing :MEASURE and run the logical "
            "path, or raise the cap") in str(exc.value)


def test_terminating_loop_ignores_cap_limit():
    interp = Interp(mode="native", cap=100)
    v = interp.eval_text("(loop$ with i = 99 do (if (zp i) (return 'done) "
                         "(setq i (1- i))))")[0][1]
    assert v is intern("DONE")


# ------------------------------------------------------------------- traces

def test_do_trace_and_measures_for_sum_of_squares():
    interp = Interp(trace=True)
    v = interp.eval_text("""
      (loop$ with sum = 0
             with lst = '(1 2 3 4)
             do
             (if (consp lst)
                 (progn (setq sum (+ (* (car lst) (car lst)) sum))
                        (setq lst (cdr lst)))
               (return sum)))
    """)[0][1]
    assert v == 30
    assert len(interp.do_trace) == 5
    assert all(kind == "do" for kind, _, _ in interp.do_trace)
    # next-to-last application consumes the last list element
    kind, alist, triple = interp.do_trace[3]
    assert sexpr.equal(triple, read("(NIL NIL ((SUM . 30) (LST . NIL)))"))
    # the last application returns
    kind, alist, triple = interp.do_trace[4]
    assert sexpr.equal(triple, read("(:RETURN 30 ((SUM . 30) (LST . NIL)))"))
    assert interp.loop_measures == [(4,), (3,), (2,), (1,), (0,)]


def test_finally_trace_entry():
    interp = Interp(trace=True)
    interp.eval_text("(loop$ with i = 1 do (if (zp i) (loop-finish) "
                     "(setq i (1- i))) finally (return 'end))")
    kinds = [k for k, _, _ in interp.do_trace]
    assert kinds == ["do", "do", "finally"]


# ------------------------------------------------- randomized differential

def _mk_program(rng):
    a0 = rng.randint(0, 12)
    b0 = rng.randint(-5, 5)
    step_pool = [
        ("(+ b 1)", lambda a, b: b + 1),
        ("(+ b a)", lambda a, b: b + a),
        ("(* 2 b)", lambda a, b: 2 * b),
        ("(- b 1)", lambda a, b: b - 1),
        ("(+ (* 2 a) b)", lambda a, b: 2 * a + b),
    ]
    ret_pool = [
        ("b", lambda a, b: b),
        ("(+ a b)", lambda a, b: a + b),
        ("(* b b)", lambda a, b: b * b),
    ]
    step_s, step_f = rng.choice(step_pool)
    ret_s, ret_f = rng.choice(ret_pool)
    text = ("(loop$ with a = %d with b = %d do :measure (nfix a) "
            "(if (zp a) (return %s) (progn (setq b %s) (setq a (1- a)))))"
            % (a0, b0, ret_s, step_s))

    def reference():
        a, b = a0, b0
        while a > 0:
            b = step_f(a, b)
            a -= 1
        return ret_f(a, b)

    return text, reference


def test_random_counting_loops_match_reference():
    rng = random.Random(20260816)
    for _ in range(60):
        text, reference = _mk_program(rng)
        assert run_both(text) == reference(), text


def test_random_list_walks_match_reference():
    rng = random.Random(4242)
    for _ in range(40):
        items = [rng.randint(-9, 9) for _ in range(rng.randint(0, 8))]
        text = ("(loop$ with lst = '(%s) with acc = 0 do "
                "(if (consp lst) (progn (setq acc (+ acc (car lst))) "
                "(setq lst (cdr lst))) (return acc)))"
                % " ".join(str(i) for i in items))
        assert run_both(text) == sum(items), text


# --------------------------------------------------------------- FOR loops

def test_for_sum_and_collect():
    assert run_both("(loop$ for x in '(1 2 3 4) sum (* x x))") == 30
    v = run_both("(loop$ for x in '(1 2 3) collect (cons x x))")
    assert show(v) == "((1 . 1) (2 . 2) (3 . 3))"


def test_for_empty_range():
    assert run_both("(loop$ for x in nil sum x)") == 0
    assert run_both("(loop$ for x in nil collect x)") is NIL


def test_for_sum_guard_violation_and_totalization():
    interp = Interp()
    with pytest.raises(GuardViolation) as exc:
        interp.eval_text("(loop$ for x in '(1 a 3) sum x)")
    assert "guard violation in X: SUM accumulated the non-integer A" \
        in str(exc.value)
    off = Interp(guard_check=False)
    assert off.eval_text("(loop$ for x in '(1 a 3) sum x)")[0][1] == 4


def test_for_range_must_be_proper():
    interp = Interp()
    with pytest.raises(EvalError) as exc:
        interp.eval_text("(loop$ for x in '(1 . 2) sum x)")
    assert "FOR range is not a proper list" in str(exc.value)


def test_for_parse_errors():
    assert "a FOR loop$ is (loop$ FOR v IN range SUM|COLLECT body)" \
        in parse_error("(loop$ for x in '(1))")
    assert "expected IN after the FOR variable" in parse_error(
        "(loop$ for x on '(1) sum x)")
    assert "FOR supports the SUM and COLLECT accumulators" in parse_error(
        "(loop$ for x in '(1) append x)")
    assert "bad FOR variable 5" in parse_error(
        "(loop$ for 5 in '(1) sum x)")


def test_for_body_sees_only_its_variable():
    interp = Interp()
    with pytest.raises(EvalError):
        interp.eval_text("(loop$ for x in '(1 2) sum (+ x other))")


def test_with_init_may_not_be_stobj_or_mv():
    interp = Interp()
    interp.eval_text("(defstobj st fld)\n(defun two () (mv 1 2))")
    with pytest.raises(EvalError) as exc:
        interp.eval_text("(loop$ with x = (apply$ 'two nil) do :measure 0 "
                         "(return x))")
    assert "WITH X may not be initialized to a stobj or multiple values" \
        in str(exc.value)
