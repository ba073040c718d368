"""Orders of convergence of positive sequences.

A sequence ``x_1, x_2, ...`` tending to zero is treated through its terms
``e_s = x_s``: for correction norms ``x_s = ||psi^s - psi^{s-1}||`` these
orders are the *computational* orders of the iterates, for error norms they
are the classical ones.

Three per-term estimates are provided:

* ``estimate_q_order``:  p(s) = ln e_{s+1} / ln e_s
* ``estimate_r_order``:  p(s) = |ln e_s| ** (1/s)
* ``quotient_sequence``: Q_p(s) = e_{s+1} / e_s ** p

``classify`` combines them: the Q- and R-estimates select an order p, and the
tail of Q_p decides whether the classical (C) order p actually holds.
"""

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DegenerateLog, NotHalving, TooShort

CANDIDATE_ORDERS = (1.0, 1.5, 2.0, 3.0)
ORDER_MATCH_TOL = 0.25


class Kind(str, enum.Enum):
    corrections = "corrections"
    errors = "errors"


class Verdict(str, enum.Enum):
    C_order = "C_order"
    Q_order_only = "Q_order_only"
    R_order_only = "R_order_only"
    sublinear = "sublinear"
    inconclusive = "inconclusive"


@dataclass
class CorrectionSequence:
    """Positive terms x_s, indexed from s = 1.

    Building through :meth:`from_values` drops everything from the first zero
    term on and sets ``truncated``; the estimators never see a zero.
    """

    values: np.ndarray
    label: str = ""
    kind: Kind = Kind.corrections
    truncated: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        self.kind = Kind(self.kind)
        if np.any(~np.isfinite(self.values)) or np.any(self.values <= 0):
            raise ValueError("sequence terms must be finite and strictly positive")

    @classmethod
    def from_values(cls, values, label="", kind=Kind.corrections):
        arr = np.asarray(values, dtype=np.float64).ravel()
        zeros = np.flatnonzero(arr == 0.0)
        truncated = zeros.size > 0
        if truncated:
            arr = arr[: zeros[0]]
        return cls(arr, label=label, kind=kind, truncated=truncated)

    def __len__(self):
        return self.values.size


def _values(seq):
    if isinstance(seq, CorrectionSequence):
        return seq.values
    arr = np.asarray(seq, dtype=np.float64).ravel()
    if np.any(arr <= 0):
        raise ValueError("sequence terms must be strictly positive")
    return arr


def estimate_q_order(seq):
    e = _values(seq)
    if e.size < 2:
        raise TooShort("Q-order estimate needs at least two terms")
    logs = np.log(e)
    if np.any(logs == 0.0):
        raise DegenerateLog("a term equals 1; ln e_s = 0")
    return logs[1:] / logs[:-1]


def estimate_r_order(seq):
    e = _values(seq)
    if e.size < 1:
        raise TooShort("R-order estimate needs at least one term")
    logs = np.log(e)
    if np.any(logs == 0.0):
        raise DegenerateLog("a term equals 1; ln e_s = 0")
    s = np.arange(1, e.size + 1, dtype=np.float64)
    return np.abs(logs) ** (1.0 / s)


def quotient_sequence(seq, p):
    e = _values(seq)
    if e.size < 2:
        raise TooShort("quotients need at least two terms")
    if p < 1:
        raise ValueError("p must be >= 1")
    return e[1:] / e[:-1] ** p


def _tolerant_logs(e):
    logs = np.log(e)
    logs[logs == 0.0] = np.nan
    return logs


def tail_window(length):
    """Number of trailing estimates read as the limit."""
    return max(3, math.ceil(length / 3))


def _match_order(values):
    finite = values[np.isfinite(values)]
    if finite.size == 0:
        return None, float("nan")
    med = float(np.median(finite))
    cand = min(CANDIDATE_ORDERS, key=lambda c: abs(c - med))
    if abs(cand - med) < ORDER_MATCH_TOL:
        return cand, med
    return None, med


@dataclass
class OrderReport:
    label: str
    p_Q: np.ndarray
    p_R: np.ndarray
    Q_p: np.ndarray
    verdict: Verdict
    p_final: float
    tail: int = 0
    notes: list = field(default_factory=list)

    @property
    def tail_Q(self):
        return self.Q_p[-self.tail:] if self.tail else self.Q_p

    def summary(self):
        tq = self.tail_Q
        return (f"{self.label}: verdict={self.verdict.value} p={self.p_final:g} "
                f"n={self.p_R.size} tail_Q=[{tq.min():.4g}, {tq.max():.4g}]")


# thresholds for the p = 1 branch
LINEAR_Q1_BOUNDS = (0.01, 1.0)
LINEAR_SPREAD = 0.25
SUBLINEAR_LAST = 0.95
SUBLINEAR_GAP_SHRINK = 0.8


def _linear_verdict(q1, notes):
    gap = 1.0 - q1
    increasing = bool(np.all(np.diff(q1) >= 0))
    if (increasing and q1[-1] > SUBLINEAR_LAST and gap[-1] > 0
            and gap[-1] < SUBLINEAR_GAP_SHRINK * gap[0]):
        notes.append(f"Q_1 tail increasing, 1 - Q_1 shrinks {gap[0]:.3g} -> {gap[-1]:.3g}")
        return Verdict.sublinear
    if increasing and q1[-1] >= 1.0:
        return Verdict.sublinear
    lo, hi = LINEAR_Q1_BOUNDS
    spread = (q1.max() - q1.min()) / q1.mean()
    if np.all((q1 > lo) & (q1 < hi)) and spread < LINEAR_SPREAD:
        notes.append(f"Q_1 tail in ({q1.min():.4g}, {q1.max():.4g}), spread {spread:.3g}")
        return Verdict.C_order
    notes.append(f"Q_1 tail not settled (spread {spread:.3g})")
    return Verdict.Q_order_only


def classify(seq, label=None):
    """Identify the order from the Q/R estimates, then test the C-order quotient."""
    e = _values(seq)
    if label is None:
        label = seq.label if isinstance(seq, CorrectionSequence) else ""
    if e.size < 4:
        raise TooShort(f"classify needs at least 4 terms, got {e.size}")

    logs = _tolerant_logs(e)
    p_q = logs[1:] / logs[:-1]
    s = np.arange(1, e.size + 1, dtype=np.float64)
    p_r = np.abs(logs) ** (1.0 / s)
    w = tail_window(e.size)
    notes = []

    p, med = _match_order(p_q[-w:])
    if p is None:
        p_alt, med_r = _match_order(p_r[-w:])
        q1 = e[1:] / e[:-1]
        notes.append(f"median tail p_Q = {med:.4g} matches no candidate")
        if p_alt is not None:
            return OrderReport(label, p_q, p_r, q1, Verdict.R_order_only, p_alt, w, notes)
        return OrderReport(label, p_q, p_r, q1, Verdict.inconclusive, med, w, notes)

    q = e[1:] / e[:-1] ** p
    tail = q[-w:]
    if p == 1.0:
        verdict = _linear_verdict(tail, notes)
    else:
        ratio = tail.max() / tail.min()
        if np.all(np.isfinite(tail)) and ratio < 10.0:
            verdict = Verdict.C_order
            notes.append(f"Q_{p:g} tail bounded, max/min = {ratio:.3g}")
        else:
            verdict = Verdict.Q_order_only
            notes.append(f"Q_{p:g} tail unbounded, max/min = {ratio:.3g}")
    return OrderReport(label, p_q, p_r, q, verdict, p, w, notes)


def eoc(rows):
    """Grid-refinement orders log2(err_i / err_{i+1}) for a halving chain of (h, err)."""
    rows = [(float(h), float(err)) for h, err in rows]
    if len(rows) < 2:
        raise TooShort("EOC needs at least two refinement levels")
    for h, err in rows:
        if h <= 0 or err <= 0:
            raise ValueError("grid spacings and errors must be positive")
    out = []
    for (h0, e0), (h1, e1) in zip(rows, rows[1:]):
        if abs(h0 / h1 - 2.0) > 2e-12:
            raise NotHalving(f"spacing ratio {h0}/{h1} is not 2")
        out.append(math.log2(e0 / e1))
    return out
