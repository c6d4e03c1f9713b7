"""Strict JSON readers for every model's input document.

Unknown fields are rejected; errors carry a JSON pointer to the offending
value.
"""

from __future__ import annotations

import numpy as np

from .blocks import BlockStructure, Model1Spec, Model2Spec, upper_triangle_to_matrix
from .core import (ReturnBeliefs, TransactionCost, _as_array, _as_number,
                   _require, apply_transaction_cost, check_fields, problem_from_json)
from .exceptions import SchemaError
from .scenario import StressedCovSpec, TwoStateScenario, build_stressed_cov
from .univariate import UnivariateProblem
from .wishart import WishartAllocProblem


def _wrap(pointer, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except SchemaError:
        raise
    except ValueError as exc:
        raise SchemaError(str(exc), pointer or "/") from exc


def _optional_array(doc, key, pointer, ndim=1):
    v = doc.get(key)
    return None if v is None else _as_array(v, f"{pointer}/{key}", ndim)


def univariate_from_json(doc, pointer="") -> UnivariateProblem:
    check_fields(doc, {"mu0", "sigma_sq", "alpha", "risk_aversion", "sigma_min_sq", "sigma0_sq"},
                 pointer)
    num = {}
    for key in ("mu0", "sigma_sq", "alpha", "risk_aversion"):
        num[key] = _as_number(_require(doc, key, pointer), f"{pointer}/{key}")
    for key in ("sigma_min_sq", "sigma0_sq"):
        num[key] = _as_number(doc.get(key, 0.0), f"{pointer}/{key}")
    return _wrap(pointer, UnivariateProblem, **num)


def wishart_from_json(doc, pointer="") -> WishartAllocProblem:
    """Portfolio problem fields plus ``alpha`` and optional ``transaction_cost``."""
    problem = problem_from_json(doc, pointer, extra=("alpha", "transaction_cost"))
    tc = doc.get("transaction_cost")
    if tc is not None:
        tp = f"{pointer}/transaction_cost"
        check_fields(tc, {"eta", "target_weights"}, tp)
        cost = _wrap(tp, TransactionCost,
                     _as_number(_require(tc, "eta", tp), f"{tp}/eta"),
                     _as_array(_require(tc, "target_weights", tp), f"{tp}/target_weights"))
        problem = _wrap(tp, apply_transaction_cost, problem, cost)
    alpha = _as_number(_require(doc, "alpha", pointer), f"{pointer}/alpha")
    return _wrap(f"{pointer}/alpha", WishartAllocProblem, problem, alpha)


def _beliefs(doc, pointer):
    mu0 = _as_array(_require(doc, "mu0", pointer), f"{pointer}/mu0")
    s0 = _optional_array(doc, "sigma0_diag", pointer)
    return _wrap(pointer, ReturnBeliefs, mu0, s0)


def _structure(doc, pointer):
    raw = _require(doc, "assignments", pointer)
    p = f"{pointer}/assignments"
    if not isinstance(raw, list) or not all(isinstance(v, int) and not isinstance(v, bool)
                                            for v in raw):
        raise SchemaError("expected an array of integers", p)
    return _wrap(p, BlockStructure, np.array(raw, dtype=int))


_BLOCK_COMMON = {"assignments", "mu0", "sigma0_diag", "risk_aversion", "sigma_min_sq",
                 "sigma_sq", "alpha"}


def block1_from_json(doc, pointer=""):
    """Return ``(Model1Spec, ReturnBeliefs, a)``; per-block fields are arrays of length K."""
    check_fields(doc, _BLOCK_COMMON | {"correlations"}, pointer)
    s = _structure(doc, pointer)
    per = {}
    for key in ("sigma_min_sq", "sigma_sq", "alpha"):
        v = _require(doc, key, pointer)
        per[key] = (_as_number(v, f"{pointer}/{key}") if not isinstance(v, list)
                    else _as_array(v, f"{pointer}/{key}"))
    corr = doc.get("correlations")
    if corr is not None:
        if not isinstance(corr, list):
            raise SchemaError("expected an array of matrices", f"{pointer}/correlations")
        corr = [_as_array(R, f"{pointer}/correlations/{i}", 2) for i, R in enumerate(corr)]
    spec = _wrap(pointer, Model1Spec, s, per["sigma_min_sq"], per["sigma_sq"], per["alpha"], corr)
    a = _as_number(_require(doc, "risk_aversion", pointer), f"{pointer}/risk_aversion")
    return spec, _beliefs(doc, pointer), a


def block2_from_json(doc, pointer=""):
    """Return ``(Model2Spec, ReturnBeliefs, a)``.

    ``rho`` is either the full symmetric ``K x K`` matrix or its upper
    triangle given row by row (row ``i`` holds ``rho_ii .. rho_iK``).
    """
    check_fields(doc, _BLOCK_COMMON | {"rho"}, pointer)
    s = _structure(doc, pointer)
    raw = _require(doc, "rho", pointer)
    p = f"{pointer}/rho"
    if not isinstance(raw, list) or not all(isinstance(r, list) for r in raw):
        raise SchemaError("expected an array of arrays", p)
    rows = [_as_array(r, f"{p}/{i}") for i, r in enumerate(raw)]
    k = len(rows)
    if all(len(r) == k for r in rows):
        rho = np.array(rows)
    else:
        rho = _wrap(p, upper_triangle_to_matrix, rows)
    num = {key: _as_number(_require(doc, key, pointer), f"{pointer}/{key}")
           for key in ("sigma_sq", "alpha", "risk_aversion")}
    smin = _as_number(doc.get("sigma_min_sq", 0.0), f"{pointer}/sigma_min_sq")
    spec = _wrap(pointer, Model2Spec, s, smin, num["sigma_sq"], num["alpha"], rho)
    return spec, _beliefs(doc, pointer), num["risk_aversion"]


def two_state_from_json(doc, pointer="", p_override=None) -> TwoStateScenario:
    """``p``, ``risk_aversion``, ``normal: {mu, sigma}`` and
    ``stressed: {mu, sigma}`` or ``stressed: {mu, spec: {sigma_s, rho_s}}``."""
    check_fields(doc, {"p", "risk_aversion", "normal", "stressed"}, pointer)
    states = []
    for name in ("normal", "stressed"):
        sp = f"{pointer}/{name}"
        st = _require(doc, name, pointer)
        check_fields(st, {"mu", "sigma", "spec"}, sp)
        mu = _as_array(_require(st, "mu", sp), f"{sp}/mu")
        if "sigma" in st and "spec" in st:
            raise SchemaError("give either 'sigma' or 'spec', not both", sp)
        if "spec" in st:
            if name != "stressed":
                raise SchemaError("'spec' is only allowed for the stressed state", f"{sp}/spec")
            cp = f"{sp}/spec"
            check_fields(st["spec"], {"sigma_s", "rho_s"}, cp)
            cs = _wrap(cp, StressedCovSpec,
                       _as_number(_require(st["spec"], "sigma_s", cp), f"{cp}/sigma_s"),
                       _as_number(_require(st["spec"], "rho_s", cp), f"{cp}/rho_s"), mu.shape[0])
            sigma = _wrap(cp, build_stressed_cov, cs)
        else:
            sigma = _as_array(_require(st, "sigma", sp), f"{sp}/sigma", 2)
        states.append((mu, sigma))
    p = p_override if p_override is not None else _as_number(_require(doc, "p", pointer),
                                                              f"{pointer}/p")
    a = _as_number(_require(doc, "risk_aversion", pointer), f"{pointer}/risk_aversion")
    (mn, sn), (ms, ss) = states
    return _wrap(pointer, TwoStateScenario, p, mn, sn, ms, ss, a)


def minimax_from_json(doc, pointer=""):
    """``sigma`` and optional ``b``; returns ``(sigma, b or None)``."""
    check_fields(doc, {"sigma", "b"}, pointer)
    sigma = _as_array(_require(doc, "sigma", pointer), f"{pointer}/sigma", 2)
    b = doc.get("b")
    return sigma, None if b is None else _as_number(b, f"{pointer}/b")
