"""Read and write the CPLEX-style LP text format (the subset this package emits)."""
from __future__ import annotations

import re

import numpy as np
import scipy.sparse as sp

from .model import EQ, GE, LE, LinearProgram

_SENSE_TXT = {LE: "<=", GE: ">=", EQ: "="}
_TXT_SENSE = {"<=": LE, "=<": LE, "<": LE, ">=": GE, "=>": GE, ">": GE, "=": EQ}


def _clean(name):
    return name.replace("[", "(").replace("]", ")").replace(" ", "_")


def _num(v):
    if v == np.inf:
        return "+inf"
    if v == -np.inf:
        return "-inf"
    return repr(float(v))


def _terms(coefs, cols, names):
    if len(cols) == 0:
        return f"0 {names[0]}" if names else "0"
    parts = []
    for k, (a, j) in enumerate(zip(coefs, cols)):
        sign = "-" if a < 0 else "+"
        mag = repr(abs(float(a)))
        if k == 0:
            parts.append(f"{'-' if a < 0 else ''}{mag} {names[j]}")
        else:
            parts.append(f"{sign} {mag} {names[j]}")
    return " ".join(parts)


def write_lp_text(lp: LinearProgram) -> str:
    """Serialise ``lp``; output depends only on the problem data."""
    n = lp.num_vars
    names = [_clean(s) for s in (lp.var_names or [f"x{j}" for j in range(n)])]
    if len(set(names)) != n:
        names = [f"x{j}" for j in range(n)]
    rnames = [_clean(s) for s in (lp.row_names or [f"r{i}" for i in range(lp.num_rows)])]
    if len(set(rnames)) != lp.num_rows:
        rnames = [f"r{i}" for i in range(lp.num_rows)]

    out = ["\\ LP text written by robust_uc", "Minimize" if lp.sense == "min" else "Maximize"]
    nz = np.flatnonzero(lp.c)
    obj = _terms(lp.c[nz], nz, names)
    if lp.obj_const != 0.0:
        obj += f" {'-' if lp.obj_const < 0 else '+'} {repr(abs(float(lp.obj_const)))}"
    out.append(f" obj: {obj}")
    out.append("Subject To")
    A = lp.A.tocsr()
    A.sort_indices()
    for i in range(lp.num_rows):
        lo, hi = A.indptr[i], A.indptr[i + 1]
        body = _terms(A.data[lo:hi], A.indices[lo:hi], names)
        out.append(f" {rnames[i]}: {body} {_SENSE_TXT[lp.senses[i]]} {_num(lp.rhs[i])}")
    out.append("Bounds")
    for j in range(n):
        out.append(f" {_num(lp.lb[j])} <= {names[j]} <= {_num(lp.ub[j])}")
    bins = [names[j] for j in np.flatnonzero(lp.integrality)]
    if bins:
        out.append("Binaries")
        out.append(" " + " ".join(bins))
    out.append("End")
    return "\n".join(out) + "\n"


def _parse_expr(text, index):
    """Parse ``a x + b y - c`` into (coef dict, constant)."""
    coefs, const = {}, 0.0
    tokens = text.split()
    sign, num = 1.0, None
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if tok == "+":
            sign = 1.0
        elif tok == "-":
            sign = -1.0
        else:
            try:
                val = float(tok)
                if num is not None:
                    const += sign * num
                    sign = 1.0
                num = val
            except ValueError:
                if tok.startswith("-"):
                    sign, tok = -sign, tok[1:]
                coef = 1.0 if num is None else num
                j = index[tok]
                coefs[j] = coefs.get(j, 0.0) + sign * coef
                sign, num = 1.0, None
        i += 1
    if num is not None:
        const += sign * num
    return coefs, const


def _fixed_float(tok):
    tok = tok.lower()
    if tok in ("+inf", "inf", "+infinity", "infinity"):
        return np.inf
    if tok in ("-inf", "-infinity"):
        return -np.inf
    return float(tok)


def read_lp_text(text: str) -> LinearProgram:
    """Parse text produced by :func:`write_lp_text` back into a problem."""
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("\\")]
    section = None
    sense = "min"
    obj_line = ""
    rows, bounds, bins = [], [], []
    for ln in lines:
        low = ln.lower()
        if low in ("minimize", "maximize"):
            sense = "min" if low == "minimize" else "max"
            section = "obj"
            continue
        if low == "subject to":
            section = "rows"
            continue
        if low == "bounds":
            section = "bounds"
            continue
        if low == "binaries":
            section = "bins"
            continue
        if low == "end":
            break
        if section == "obj":
            obj_line += " " + ln.split(":", 1)[1]
        elif section == "rows":
            rows.append(ln)
        elif section == "bounds":
            bounds.append(ln)
        elif section == "bins":
            bins.extend(ln.split())

    names = []
    for b in bounds:
        parts = b.split()
        names.append(parts[2])
    index = {nm: j for j, nm in enumerate(names)}
    n = len(names)
    lb = np.zeros(n)
    ub = np.zeros(n)
    for j, b in enumerate(bounds):
        parts = b.split()
        lb[j] = _fixed_float(parts[0])
        ub[j] = _fixed_float(parts[4])

    c = np.zeros(n)
    coefs, const = _parse_expr(obj_line, index)
    for j, v in coefs.items():
        c[j] = v

    data, ri, ci = [], [], []
    senses, rhs, rnames = [], [], []
    for i, ln in enumerate(rows):
        name, body = ln.split(":", 1)
        m = re.search(r"(<=|>=|=<|=>|=)\s*(\S+)\s*$", body)
        expr = body[: m.start()]
        terms, _ = _parse_expr(expr, index)
        for j, v in sorted(terms.items()):
            if v != 0.0:
                data.append(v)
                ri.append(i)
                ci.append(j)
        senses.append(_TXT_SENSE[m.group(1)])
        rhs.append(_fixed_float(m.group(2)))
        rnames.append(name.strip())
    A = sp.csr_matrix((data, (ri, ci)), shape=(len(rows), n))
    integrality = np.zeros(n, dtype=bool)
    for b in bins:
        integrality[index[b]] = True
    return LinearProgram(c, A, np.array(senses, dtype="<U1"), np.array(rhs), lb, ub,
                         integrality, sense, const, names, rnames)
