"""
Small dense log-barrier interior-point solver.

Variables are real. Constraints come in vectorised blocks of convex
functions ``f_i(x) <= 0``; each block provides values, gradients and the
weighted sum of its Hessians so Newton systems are assembled without
per-constraint Python loops. Any block can be "shifted" by a variable,
``f_i(x) - x[k] <= 0``, which is how epigraph and phase-I slacks are
built.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np


class Block:
    """Base class: subclasses implement ``_values``, ``_grads``, ``_hess``."""

    label = "constraint"

    def __init__(self, shift_index: Optional[int] = None):
        self.shift_index = shift_index

    def shifted(self, index: int) -> "Block":
        clone = object.__new__(type(self))
        clone.__dict__.update(self.__dict__)
        clone.shift_index = index
        return clone

    def size(self) -> int:
        raise NotImplementedError

    def in_domain(self, x: np.ndarray) -> bool:
        return True

    def values(self, x):
        f = self._values(x)
        if self.shift_index is not None:
            f = f - x[self.shift_index]
        return f

    def grads(self, x):
        g = self._grads(x)
        if self.shift_index is not None:
            g = g.copy()
            g[:, self.shift_index] -= 1.0
        return g

    def hess(self, x, weights):
        return self._hess(x, weights)


class ModulusBlock(Block):
    """``|A x + b|^2 - bound <= 0`` with complex rows ``A``."""

    def __init__(self, a, b, bound, label="modulus", shift_index=None):
        super().__init__(shift_index)
        self.a = np.asarray(a, dtype=complex)
        self.b = np.asarray(b, dtype=complex)
        self.bound = np.broadcast_to(np.asarray(bound, dtype=float), self.b.shape).copy()
        self.label = label

    def size(self):
        return self.b.size

    def response(self, x):
        return self.a @ x + self.b

    def _values(self, x):
        y = self.response(x)
        return y.real ** 2 + y.imag ** 2 - self.bound

    def _grads(self, x):
        y = self.response(x)
        return 2.0 * (y.conj()[:, None] * self.a).real

    def _hess(self, x, w):
        return 2.0 * ((self.a.conj().T * w) @ self.a).real


class LinearBlock(Block):
    """``L x + l <= 0``."""

    def __init__(self, lin, offset, label="linear", shift_index=None):
        super().__init__(shift_index)
        self.lin = np.atleast_2d(np.asarray(lin, dtype=float))
        self.offset = np.atleast_1d(np.asarray(offset, dtype=float))
        self.label = label

    def size(self):
        return self.offset.size

    def _values(self, x):
        return self.lin @ x + self.offset

    def _grads(self, x):
        return self.lin

    def _hess(self, x, w):
        n = self.lin.shape[1]
        return np.zeros((n, n))


class QuadOverLinearBlock(Block):
    """
    ``|A x + b|^2 / (c * x[tau]) - x[tau] <= 0`` for ``x[tau] > 0``.

    Equivalent to the second-order cone ``|A x + b| <= sqrt(c) * x[tau]``.
    """

    def __init__(self, a, b, c, tau_index, label="quad-over-linear", shift_index=None):
        super().__init__(shift_index)
        self.a = np.asarray(a, dtype=complex)
        self.b = np.asarray(b, dtype=complex)
        self.c = np.broadcast_to(np.asarray(c, dtype=float), self.b.shape).copy()
        self.tau_index = tau_index
        self.label = label

    def size(self):
        return self.b.size

    def in_domain(self, x):
        return x[self.tau_index] > 0

    def _values(self, x):
        tau = x[self.tau_index]
        y = self.a @ x + self.b
        return (y.real ** 2 + y.imag ** 2) / (self.c * tau) - tau

    def _grads(self, x):
        tau = x[self.tau_index]
        y = self.a @ x + self.b
        g = 2.0 * (y.conj()[:, None] * self.a).real / (self.c * tau)[:, None]
        g[:, self.tau_index] -= (y.real ** 2 + y.imag ** 2) / (self.c * tau ** 2) + 1.0
        return g

    def _hess(self, x, w):
        tau = x[self.tau_index]
        y = self.a @ x + self.b
        m = self.a.copy()
        m[:, self.tau_index] -= y / tau
        scale = 2.0 * w / (self.c * tau)
        return ((m.conj().T * scale) @ m).real


@dataclass
class Objective:
    """``x^T P x + 2 q^T x + c``."""

    quad: np.ndarray
    lin: np.ndarray
    const: float = 0.0

    @classmethod
    def linear(cls, lin):
        lin = np.asarray(lin, dtype=float)
        return cls(np.zeros((lin.size, lin.size)), 0.5 * lin, 0.0)

    def value(self, x):
        return float(x @ self.quad @ x + 2.0 * self.lin @ x + self.const)

    def grad(self, x):
        return 2.0 * (self.quad @ x + self.lin)

    def hess(self):
        return 2.0 * self.quad


@dataclass
class BarrierResult:
    x: np.ndarray
    objective: float
    converged: bool
    newton_steps: int
    stopped_early: bool
    gap: float
    stalled: int = 0


def constraint_values(blocks: Sequence[Block], x) -> List[np.ndarray]:
    return [blk.values(x) for blk in blocks]


def max_violation(blocks: Sequence[Block], x) -> float:
    vals = [v for v in constraint_values(blocks, x) if v.size]
    return float(max(v.max() for v in vals)) if vals else -np.inf


def strictly_feasible(blocks: Sequence[Block], x) -> bool:
    for blk in blocks:
        if not blk.in_domain(x):
            return False
        v = blk.values(x)
        if v.size and not np.all(v < 0):
            return False
    return True


def _solve_newton(h, g):
    n = g.size
    scale = max(np.abs(np.diag(h)).max(), 1e-300)
    h = h + 1e-14 * scale * np.eye(n)
    try:
        return np.linalg.solve(h, -g)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(h, -g, rcond=None)[0]


def _stack(blocks, x, want_hess_weights=None):
    vals, grads = [], []
    for blk in blocks:
        if blk.size():
            vals.append(blk.values(x))
            grads.append(blk.grads(x))
    if not vals:
        return np.zeros(0), np.zeros((0, x.size))
    return np.concatenate(vals), np.concatenate(grads, axis=0)


def barrier_minimize(objective: Objective, blocks: Sequence[Block], x0, *,
                     mu0: float = 1.0, shrink: float = 0.2, tol: float = 1e-6,
                     max_newton: int = 500, feas_tol: float = 1e-7,
                     stop: Optional[Callable[[np.ndarray], bool]] = None) -> BarrierResult:
    """
    Minimise ``objective`` over the strict interior of ``blocks``.

    Primal-dual log-barrier iterations: each Newton step targets the
    central point with barrier weight ``mu = shrink * eta / m`` where
    ``eta = -f(x)^T lambda`` is the current surrogate duality gap, so the
    weight contracts by ``shrink`` per step once the iterates track the
    central path. Multipliers start at ``mu0 * scale / (m * -f_i)`` with
    ``scale = max(|f0(x0)|, 1e-6)``. The run stops once ``eta`` drops
    below ``tol * max(1, |f0|)`` with dual residual under ``feas_tol``
    (relative). ``stop`` is checked after every step and ends the run
    early when it returns True.

    Raises
    ------
    ValueError
        If ``x0`` is not strictly feasible.
    """
    x = np.array(x0, dtype=float)
    if not strictly_feasible(blocks, x):
        raise ValueError("barrier start point is not strictly feasible")
    if x.size == 0:
        # nothing left to optimise: the start point is the answer
        return BarrierResult(x, objective.value(x), True, 0, False, 0.0)
    blocks = [blk for blk in blocks if blk.size()]
    sizes = [blk.size() for blk in blocks]
    m = int(sum(sizes))
    h0 = objective.hess()
    if stop is not None and stop(x):
        return BarrierResult(x, objective.value(x), False, 0, True, np.inf)
    if m == 0:
        dx = _solve_newton(h0, objective.grad(x))
        x = x + dx
        return BarrierResult(x, objective.value(x), True, 1, False, 0.0)

    f, df = _stack(blocks, x)
    scale = max(abs(objective.value(x)), 1e-6)
    lam = mu0 * scale / m / (-f)
    splits = np.cumsum(sizes)[:-1]
    steps = 0
    stalled = 0

    def residuals(z, lm, tinv):
        fz, dfz = _stack(blocks, z)
        rd = objective.grad(z) + dfz.T @ lm
        rc = -lm * fz - tinv
        return fz, dfz, rd, rc

    g_scale = max(1.0, float(np.linalg.norm(objective.grad(x))))
    while steps < max_newton:
        eta = float(-(f @ lam))
        tinv = shrink * eta / m
        f, df, rd, rc = residuals(x, lam, tinv)
        f0 = objective.value(x)
        if eta <= tol * max(1.0, abs(f0)) and np.linalg.norm(rd) <= feas_tol * g_scale:
            return BarrierResult(x, f0, True, steps, False, eta, stalled)
        h = h0.copy()
        for blk, lm in zip(blocks, np.split(lam, splits)):
            h += blk.hess(x, lm)
        d = lam / (-f)
        h += (df.T * d) @ df
        rhs = -rd + df.T @ (rc / (-f))
        dx = _solve_newton(h, -rhs)
        dlam = (rc - lam * (df @ dx)) / f
        neg = dlam < 0
        s = min(1.0, 0.99 * float(np.min(-lam[neg] / dlam[neg]))) if neg.any() else 1.0
        r_norm = np.sqrt(rd @ rd + rc @ rc)
        while s > 1e-14:
            xn = x + s * dx
            if strictly_feasible(blocks, xn):
                break
            s *= 0.5
        while s > 1e-14:
            xn, ln = x + s * dx, lam + s * dlam
            _, _, rdn, rcn = residuals(xn, ln, tinv)
            if np.sqrt(rdn @ rdn + rcn @ rcn) <= (1 - 0.01 * s) * r_norm:
                break
            s *= 0.5
        if s <= 1e-14:
            stalled += 1
            return BarrierResult(x, f0, False, steps, False, eta, stalled)
        x, lam = xn, ln
        f, df = _stack(blocks, x)
        steps += 1
        if stop is not None and stop(x):
            return BarrierResult(x, objective.value(x), False, steps, True, float(-(f @ lam)), stalled)
    return BarrierResult(x, objective.value(x), False, steps, False, float(-(f @ lam)), stalled)


def phase_one(blocks: Sequence[Block], x0, *, margin: float = 1e-7, tol: float = 1e-8,
              max_newton: int = 2000, floor: float = -1.0):
    """
    Find a strictly feasible point by minimising a common slack ``s``
    with ``f_i(x) <= s``. Returns ``(x, s)``; ``s < 0`` means success.
    The slack is bounded below by ``floor`` so the problem stays bounded.
    """
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    if strictly_feasible(blocks, x0) and max_violation(blocks, x0) < -margin:
        return x0, max_violation(blocks, x0)
    ext = [_extend(blk, n) for blk in blocks]
    ext = [blk.shifted(n) for blk in ext]
    lower = LinearBlock(np.concatenate([np.zeros(n), [-1.0]])[None, :], [floor], label="slack-floor")
    s0 = max(max_violation(blocks, x0), 0.0) + 1.0
    xs = np.concatenate([x0, [s0]])
    for blk in ext:
        if not blk.in_domain(xs):
            raise ValueError("phase-one start point outside a constraint domain")
    obj = Objective.linear(np.concatenate([np.zeros(n), [1.0]]))
    res = barrier_minimize(obj, ext + [lower], xs, tol=tol, max_newton=max_newton,
                           stop=lambda z: z[-1] < -margin and max_violation(blocks, z[:n]) < -margin)
    z = res.x[:n]
    return z, max_violation(blocks, z)


def _extend(blk: Block, n: int) -> Block:
    """Copy of ``blk`` acting on ``x`` padded with one trailing variable."""
    return _Padded(blk, n)


class _Padded(Block):
    def __init__(self, inner: Block, n: int):
        super().__init__(None)
        self.inner = inner
        self.n = n
        self.label = inner.label

    def size(self):
        return self.inner.size()

    def in_domain(self, x):
        return self.inner.in_domain(x[:self.n])

    def _values(self, x):
        return self.inner.values(x[:self.n])

    def _grads(self, x):
        g = self.inner.grads(x[:self.n])
        return np.concatenate([g, np.zeros((g.shape[0], x.size - self.n))], axis=1)

    def _hess(self, x, w):
        h = self.inner.hess(x[:self.n], w)
        out = np.zeros((x.size, x.size))
        out[:self.n, :self.n] = h
        return out
