"""Closed-form test problems on the disk."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .interpolation import AnalyticField


@dataclass(frozen=True)
class ExactSolution:
    u: Callable
    grad_u: Callable
    p: Callable
    f: Callable

    def velocity_field(self) -> AnalyticField:
        return AnalyticField(self.u, self.grad_u, lambda x: np.trace(self.grad_u(x), axis1=1, axis2=2))

    def pressure_field(self) -> AnalyticField:
        return AnalyticField(self.p)


def boundary_driven():
    """Polynomial Stokes solution with zero body force.

    ``u = (20 x y^3, 5 x^4 - 5 y^4)``, ``p = 60 x^2 y - 20 y^3``.
    """

    def u(x):
        X, Y = x[:, 0], x[:, 1]
        return np.column_stack([20 * X * Y**3, 5 * X**4 - 5 * Y**4])

    def grad_u(x):
        X, Y = x[:, 0], x[:, 1]
        g = np.empty((len(x), 2, 2))
        g[:, 0, 0] = 20 * Y**3
        g[:, 0, 1] = 60 * X * Y**2
        g[:, 1, 0] = 20 * X**3
        g[:, 1, 1] = -20 * Y**3
        return g

    def p(x):
        X, Y = x[:, 0], x[:, 1]
        return 60 * X**2 * Y - 20 * Y**3

    def f(x):
        return np.zeros((len(x), 2))

    return ExactSolution(u, grad_u, p, f)


def coriolis_reference(omega: float):
    """Uniform flow ``u = (1, 0)`` balanced by ``p = -2 omega y``."""

    def u(x):
        return np.column_stack([np.ones(len(x)), np.zeros(len(x))])

    def grad_u(x):
        return np.zeros((len(x), 2, 2))

    def p(x):
        return -2.0 * omega * x[:, 1]

    def f(x):
        return np.zeros((len(x), 2))

    return ExactSolution(u, grad_u, p, f)
