"""Plain-text LP dump in a CPLEX-LP-like dialect.

Grammar (one statement per line, ``\\`` starts a comment)::

    Minimize
     obj: <terms>
    Subject To
     <label>: <terms> = <rhs>
     <label>: <terms> <= <rhs>
    Bounds
     <lo> <= <var> <= <hi>       (-inf / inf allowed)
    End

``<terms>`` is a sequence of ``+ <coef> <var>`` / ``- <coef> <var>`` items.
Labels and variable names are the LinearProgram labels with whitespace and
``:`` replaced by ``_``. Coefficients are written with ``repr`` so a dump
round-trips bit-for-bit. A constant objective term is not supported.
"""
from __future__ import annotations

import re

import numpy as np

from ..errors import ParseError
from .program import LinearProgram

_SAFE = re.compile(r"[\s:]")


def _name(label: str) -> str:
    return _SAFE.sub("_", label)


def _num(value: float) -> str:
    if value == np.inf:
        return "inf"
    if value == -np.inf:
        return "-inf"
    return repr(float(value))


def _terms(row: np.ndarray, names: list[str]) -> str:
    parts = []
    for j in np.flatnonzero(row):
        coef = float(row[j])
        sign = "-" if coef < 0 else "+"
        parts.append(f"{sign} {_num(abs(coef))} {names[j]}")
    return " ".join(parts) if parts else "+ 0.0 " + names[0] if names else "0"


def write_lp(lp: LinearProgram) -> str:
    names = [_name(v) for v in lp.var_labels]
    if len(set(names)) != len(names):
        raise ValueError("variable labels are not unique after sanitizing")
    out = [f"\\ {lp.name}", "Minimize", f" obj: {_terms(lp.c, names)}", "Subject To"]
    for label, row, rhs in zip(lp.eq_labels, lp.A_eq, lp.b_eq):
        out.append(f" {_name(label)}: {_terms(row, names)} = {_num(rhs)}")
    for label, row, rhs in zip(lp.in_labels, lp.A_in, lp.b_in):
        out.append(f" {_name(label)}: {_terms(row, names)} <= {_num(rhs)}")
    out.append("Bounds")
    for name, lo, hi in zip(names, lp.lo, lp.hi):
        out.append(f" {_num(lo)} <= {name} <= {_num(hi)}")
    out.append("End")
    return "\n".join(out) + "\n"


_TERM = re.compile(r"([+-])\s*(\S+)\s+(\S+)")


def _parse_terms(text: str, lineno: int) -> list[tuple[float, str]]:
    text = text.strip()
    pos, terms = 0, []
    while pos < len(text):
        m = _TERM.match(text, pos)
        if not m:
            raise ParseError(f"line {lineno}, col {pos + 1}: expected '+/- <coef> <var>'")
        try:
            coef = float(m.group(2))
        except ValueError:
            raise ParseError(f"line {lineno}, col {m.start(2) + 1}: bad coefficient "
                             f"{m.group(2)!r}") from None
        terms.append((-coef if m.group(1) == "-" else coef, m.group(3)))
        pos = m.end()
        while pos < len(text) and text[pos] == " ":
            pos += 1
    return terms


def read_lp(text: str) -> LinearProgram:
    """Parse the output of :func:`write_lp` back into a LinearProgram."""
    section = None
    name = "lp"
    objective: list[tuple[float, str]] = []
    rows: list[tuple[str, list[tuple[float, str]], str, float]] = []
    bounds: dict[str, tuple[float, float]] = {}
    order: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("\\"):
            if lineno == 1:
                name = line[1:].strip() or name
            continue
        key = line.lower()
        if key in ("minimize", "subject to", "bounds", "end"):
            section = key
            continue
        if section == "minimize":
            label, _, rest = line.partition(":")
            objective = _parse_terms(rest, lineno)
        elif section == "subject to":
            label, sep, rest = line.partition(":")
            if not sep:
                raise ParseError(f"line {lineno}, col 1: constraint needs a '<label>:' prefix")
            m = re.match(r"(.*?)\s*(<=|=)\s*(\S+)\s*$", rest)
            if not m:
                raise ParseError(f"line {lineno}, col {len(label) + 2}: expected '<= rhs' or '= rhs'")
            rows.append((label.strip(), _parse_terms(m.group(1), lineno), m.group(2),
                         float(m.group(3))))
        elif section == "bounds":
            m = re.match(r"(\S+)\s*<=\s*(\S+)\s*<=\s*(\S+)$", line)
            if not m:
                raise ParseError(f"line {lineno}, col 1: expected 'lo <= var <= hi'")
            bounds[m.group(2)] = (float(m.group(1)), float(m.group(3)))
            order.append(m.group(2))
        else:
            raise ParseError(f"line {lineno}, col 1: statement outside any section")
    if section != "end":
        raise ParseError("missing 'End'")
    index = {v: j for j, v in enumerate(order)}

    def dense(terms, lineno_hint=""):
        vec = np.zeros(len(order))
        for coef, var in terms:
            if var not in index:
                raise ParseError(f"unknown variable {var!r}{lineno_hint}")
            vec[index[var]] += coef
        return vec

    eq = [(lab, dense(t), rhs) for lab, t, op, rhs in rows if op == "="]
    ineq = [(lab, dense(t), rhs) for lab, t, op, rhs in rows if op == "<="]
    m = len(order)
    return LinearProgram(
        c=dense(objective),
        A_eq=np.array([r for _, r, _ in eq]).reshape(len(eq), m),
        b_eq=np.array([b for _, _, b in eq]),
        A_in=np.array([r for _, r, _ in ineq]).reshape(len(ineq), m),
        b_in=np.array([b for _, _, b in ineq]),
        lo=np.array([bounds[v][0] for v in order]),
        hi=np.array([bounds[v][1] for v in order]),
        var_labels=tuple(order),
        eq_labels=tuple(lab for lab, _, _ in eq),
        in_labels=tuple(lab for lab, _, _ in ineq),
        name=name,
    )
