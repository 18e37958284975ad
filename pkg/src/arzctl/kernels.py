"""Numerical solution of the gain kernels for the outlet backstepping law.

The transformation kernel P(x, xi) lives on the triangle
T = {0 <= xi <= x <= L} and satisfies the first-order hyperbolic problem

    lambda2 * P_x + lambda1 * P_xi = -phi(x - xi) * c(xi),
    P(x, x) = -c(x) / (lambda1 - lambda2),
    phi(s)  = (lambda1 / Vp) * P(s, 0),

where c is the in-domain coupling coefficient of the linearized dynamics.
The boundary trace P(., 0) closes on itself through phi, giving a Volterra
integral equation along the characteristics of slope lambda1/lambda2; it is
solved by fixed-point iteration (successive approximation), after which any
P(x, xi) follows from one quadrature along the characteristic through
(x, xi) back to the diagonal.

The published outlet law is assembled from the kernel pair
K(L, xi) = g_p*lambda1/(lambda1-lambda2) * P(L, xi) and
M(s) = g_p*lambda1/(rho* Vp) * P(s, 0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import KernelConvergenceError
from .model import LinearCoeffs

__all__ = ["KernelSolution", "solve_kernels"]


@dataclass(frozen=True)
class KernelSolution:
    """Trace and top-row kernel values on dense evaluation grids."""

    s: np.ndarray          # dense abscissa on [0, L]
    trace: np.ndarray      # P(s, 0)
    linear: LinearCoeffs
    iterations: int

    def phi(self, u):
        """Reflection-compensation kernel phi(u) = (lambda1/Vp) P(u, 0)."""
        return (self.linear.lambda1 / self.linear.Vp) * np.interp(u, self.s, self.trace)

    def value(self, x: float, xi) -> np.ndarray:
        """Evaluate P(x, xi) for xi <= x by quadrature along characteristics."""
        lin = self.linear
        lam1, lam2 = lin.lambda1, lin.lambda2
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        out = np.empty_like(xi)
        h = self.s[1] - self.s[0]
        for k, xik in enumerate(xi):
            sig_star = (lam2 * xik - lam1 * x) / (lam2 - lam1)
            out[k] = self._along_characteristic(x, xik, sig_star, h)
        return out

    def _along_characteristic(self, x, xik, sig_star, h):
        lin = self.linear
        lam1, lam2 = lin.lambda1, lin.lambda2
        n_pts = max(2, int(np.ceil((x - sig_star) / h)) + 1)
        sig = np.linspace(sig_star, x, n_pts)
        Xi = xik + (lam1 / lam2) * (sig - x)
        integrand = self.phi(sig - Xi) * lin.coupling(Xi)
        diag = -lin.coupling(sig_star) / (lam1 - lam2)
        return diag - np.trapezoid(integrand, sig) / lam2


def solve_kernels(linear: LinearCoeffs, n: int = 801, tol: float = 1e-10,
                  max_iter: int = 200) -> KernelSolution:
    """Solve the trace equation P(s, 0) on [0, L] by fixed-point iteration.

    Raises KernelConvergenceError if the sup-norm update does not fall
    below tol within max_iter sweeps.
    """
    L = linear.params.L
    lam1, lam2 = linear.lambda1, linear.lambda2
    s = np.linspace(0.0, L, n)
    h = s[1] - s[0]
    sig_star = lam1 * s / (lam1 - lam2)
    diag = -linear.coupling(sig_star) / (lam1 - lam2)

    # precompute per-node characteristic quadrature abscissae
    quads = []
    for j in range(n):
        n_pts = max(2, int(np.ceil((s[j] - sig_star[j]) / h)) + 1)
        sig = np.linspace(sig_star[j], s[j], n_pts)
        Xi = (lam1 / lam2) * (sig - s[j])
        quads.append((sig, sig - Xi, linear.coupling(Xi)))

    trace = diag.copy()
    phi_scale = lam1 / linear.Vp
    for it in range(1, max_iter + 1):
        new = np.empty_like(trace)
        for j, (sig, u_args, cpl) in enumerate(quads):
            phi_vals = phi_scale * np.interp(u_args, s, trace)
            new[j] = diag[j] - np.trapezoid(phi_vals * cpl, sig) / lam2
        delta = float(np.max(np.abs(new - trace)))
        trace = new
        if delta <= tol * max(1.0, float(np.max(np.abs(trace)))):
            return KernelSolution(s=s, trace=trace, linear=linear, iterations=it)
    raise KernelConvergenceError(
        f"kernel trace iteration stalled at update {delta:.3e} after {max_iter} sweeps")
