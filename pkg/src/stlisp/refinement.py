"""Constrained functions.

A signature introduces a function known only by shape; defattach binds
it to a defined function of the same shape.  The four scheduler
contracts the surrounding system relies on are checked dynamically:
sampled over randomized states by check_constraints, and on the actual
trajectory by the measure check on any function whose :measure calls
the constrained rank.
"""

import random

from . import sexpr
from .errors import EvalError
from .sexpr import Cons, Symbol, intern, show, to_pylist, truthy

ARROW = intern("=>")
DEFTHM = intern("DEFTHM")


class Signature:
    __slots__ = ("name", "inputs", "output")

    def __init__(self, name, inputs, output):
        self.name = name
        self.inputs = inputs
        self.output = output


def _parse_slot(x, world, form, what):
    if isinstance(x, Symbol):
        if x.name == "*":
            return None
        if world.stobj_spec(x.name) is not None:
            return x.name
    raise EvalError("%s must be * or a defined stobj, got %s"
                    % (what, show(x)), form=form)


def parse_encapsulate(form, world):
    args = to_pylist(form.cdr, "encapsulate form")
    if not args:
        raise EvalError("encapsulate needs a signature list", form=form)
    sig_forms = to_pylist(args[0], "signature list")
    if not sig_forms:
        raise EvalError("encapsulate needs at least one signature",
                        form=form)
    for extra in args[1:]:
        # Exported theorems are accepted as documentation of the intended
        # contracts; they are not checked here (check-constraints samples
        # them dynamically instead).
        if not (isinstance(extra, Cons) and extra.car is DEFTHM):
            raise EvalError("only defthm forms may follow the signature "
                            "list, got %s" % show(extra), form=form)
    sigs = []
    seen = set()
    for sf in sig_forms:
        parts = to_pylist(sf, "signature")
        if len(parts) != 3 or parts[1] is not ARROW \
                or not isinstance(parts[0], Cons):
            raise EvalError("a signature looks like ((name arg ..) => out), "
                            "got %s" % show(sf), form=form)
        head = to_pylist(parts[0], "signature head")
        if not head or not isinstance(head[0], Symbol):
            raise EvalError("bad signature name in %s" % show(sf), form=form)
        name = head[0].name
        if name in seen:
            raise EvalError("duplicate signature %s" % name, form=form)
        seen.add(name)
        inputs = []
        for x in head[1:]:
            slot = _parse_slot(x, world, form, "a signature argument")
            if slot is not None and slot in inputs:
                raise EvalError("stobj %s appears twice in the signature of "
                                "%s" % (slot, name), form=form)
            inputs.append(slot)
        output = _parse_slot(parts[2], world, form, "a signature result")
        sigs.append(Signature(name, tuple(inputs), output))
    return sigs


def parse_defattach(form, world):
    args = to_pylist(form.cdr, "defattach form")
    if len(args) != 2 or not all(isinstance(a, Symbol) for a in args):
        raise EvalError("defattach takes a signature name and a function "
                        "name", form=form)
    sig = world.signatures.get(args[0].name)
    if sig is None:
        raise EvalError("%s is not a constrained function" % args[0].name,
                        form=form)
    fd = world.functions.get(args[1].name)
    if fd is None:
        raise EvalError("%s is not a defined function" % args[1].name,
                        form=form)
    if fd.inputs != sig.inputs:
        raise EvalError(
            "cannot attach %s to %s: argument shapes differ (%s vs %s)"
            % (args[1].name, args[0].name, _shape_str(fd.inputs),
               _shape_str(sig.inputs)), form=form)
    if fd.out_shape != (sig.output,):
        raise EvalError(
            "cannot attach %s to %s: result shapes differ (%s vs %s)"
            % (args[1].name, args[0].name, _shape_str(fd.out_shape),
               _shape_str((sig.output,))), form=form)
    return args[0].name, args[1].name


def _shape_str(slots):
    return "(" + " ".join("*" if s is None else s for s in slots) + ")"


def report_completion(interp, args, form):
    """One-line run report: completion when every rank is zero, else a
    stopped-with-work-remaining diagnostic.  Returns the stobj unchanged."""
    p, st = args
    total = 0
    for pid in _proc_id_list(interp, form):
        r = interp.call("RANK", [pid, st], form=form)
        total += r if isinstance(r, int) and r >= 0 else 0
    if total == 0:
        interp.write_line("run complete: every rank is zero.")
    else:
        interp.write_line("run stopped: picked process %s is not ready; "
                          "total rank %d remains." % (show(p), total))
    return st


def _proc_id_list(interp, form):
    ids_v = interp.call("PROC-IDS", [], form=form)
    return to_pylist(ids_v, "the PROC-IDS result")


_CONTRACTS = ("rank-is-natural", "pick-is-proc-id", "exec-no-interfere",
              "exec-rank-reduces")


class ConstraintReport:
    def __init__(self, seed, trials):
        self.seed = seed
        self.trials = trials
        self.checked = {c: 0 for c in _CONTRACTS}
        self.failure_count = {c: 0 for c in _CONTRACTS}
        self.failures = []

    def ok(self):
        return not self.failures and all(v == 0
                                         for v in self.failure_count.values())

    def fail(self, contract, msg):
        self.failure_count[contract] += 1
        if len(self.failures) < 20:
            self.failures.append("%s: %s" % (contract, msg))

    def lines(self):
        out = ["check-constraints: %d trials, seed %d"
               % (self.trials, self.seed)]
        for c in _CONTRACTS:
            out.append("  %-18s checked %-6d failures %d"
                       % (c, self.checked[c], self.failure_count[c]))
        out.extend("  FAIL %s" % f for f in self.failures)
        out.append("result: %s" % ("PASS" if self.ok() else "FAIL"))
        return out

    def __str__(self):
        return "\n".join(self.lines())


def _nfix(v):
    return v if isinstance(v, int) and v >= 0 else 0


def check_constraints(interp, seed=0, trials=1000, state_generator=None):
    """Sample the four scheduler contracts over randomized states."""
    world = interp.world
    for name in ("PROC-IDS", "PICK", "READY", "EXEC", "RANK"):
        if name not in world.signatures:
            raise EvalError("check-constraints needs the %s signature" % name)
        if name not in world.attachments:
            raise EvalError("constrained function %s has no attachment"
                            % name)
    ids = _proc_id_list(interp, None)
    if not ids:
        raise EvalError("PROC-IDS returned an empty list; nothing to check")
    sname = next((s for s in world.signatures["EXEC"].inputs
                  if s is not None), None)
    if sname is None:
        raise EvalError("the EXEC signature takes no stobj")
    spec = world.stobj_spec(sname)
    rng = random.Random(seed)

    def pick_id():
        return ids[rng.randrange(len(ids))]

    if state_generator is None:
        def state_generator(rng):
            st = interp.make_fresh(spec)
            for _ in range(rng.randrange(7)):
                st = interp.call("EXEC", [pick_id(), st])
            return st

    report = ConstraintReport(seed, trials)
    for trial in range(trials):
        p = pick_id()
        q = pick_id()

        st = state_generator(rng)
        r = interp.call("RANK", [p, st])
        report.checked["rank-is-natural"] += 1
        if not (isinstance(r, int) and r >= 0):
            report.fail("rank-is-natural",
                        "trial %d: (rank %s st) = %s with st = %s"
                        % (trial, show(p), show(r),
                           show(st.logical_view())))

        st = state_generator(rng)
        pk = interp.call("PICK", [st])
        report.checked["pick-is-proc-id"] += 1
        if not any(sexpr.equal(pk, i) for i in ids):
            report.fail("pick-is-proc-id",
                        "trial %d: (pick st) = %s is not a proc-id, st = %s"
                        % (trial, show(pk), show(st.logical_view())))

        st = state_generator(rng)
        before = _nfix(interp.call("RANK", [p, st]))
        st2 = interp.call("EXEC", [q, st])
        after = _nfix(interp.call("RANK", [p, st2]))
        report.checked["exec-no-interfere"] += 1
        if after > before and not sexpr.equal(p, q):
            report.fail("exec-no-interfere",
                        "trial %d: rank of %s rose from %d to %d across "
                        "(exec %s st)" % (trial, show(p), before, after,
                                          show(q)))

        st = state_generator(rng)
        if truthy(interp.call("READY", [p, st])):
            before = _nfix(interp.call("RANK", [p, st]))
            st2 = interp.call("EXEC", [p, st])
            after = _nfix(interp.call("RANK", [p, st2]))
            report.checked["exec-rank-reduces"] += 1
            if not after < before:
                report.fail("exec-rank-reduces",
                            "trial %d: rank of %s went %d -> %d across its "
                            "own exec while ready" % (trial, show(p), before,
                                                      after))
    return report
