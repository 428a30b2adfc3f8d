"""Figure rendering for solver traces and sequence reports.

matplotlib is imported lazily with the Agg backend so that headless use and
library-only consumers never pay for (or require) a display stack.
"""

from __future__ import annotations

import numpy as np

from . import manifold as mf
from .problem import MultiplierEstimate, constraint_values, lagrangian_gradient

__all__ = ["render_solve_figure", "render_analyze_figure"]


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_solve_figure(prob, trace, path):
    """Four-panel convergence picture for one solver run: inner stationarity
    against its tolerance, constraint violation, penalty growth, and
    multiplier magnitudes."""
    plt = _pyplot()
    ks = [r.k for r in trace.records]
    aug = [max(r.aug_grad_norm, 1e-18) for r in trace.records]
    eps = [r.eps for r in trace.records]
    rho = [r.rho for r in trace.records]
    viol, mult_sup = [], []
    for r in trace.records:
        h, g = constraint_values(prob, r.point)
        viol.append(
            max(
                float(np.max(np.abs(h), initial=0.0)),
                float(np.max(np.clip(g, 0.0, None), initial=0.0)),
                1e-18,
            )
        )
        mult_sup.append(
            max(
                float(np.max(np.abs(r.lam), initial=0.0)),
                float(np.max(np.abs(r.mu), initial=0.0)),
            )
        )

    fig, axes = plt.subplots(2, 2, figsize=(9, 6.5))
    ax = axes[0, 0]
    ax.semilogy(ks, aug, "o-", label="achieved")
    ax.semilogy(ks, eps, "--", label="tolerance")
    ax.set_title("inner stationarity")
    ax.legend()
    ax = axes[0, 1]
    ax.semilogy(ks, viol, "o-", color="tab:red")
    ax.set_title("constraint violation")
    ax = axes[1, 0]
    ax.semilogy(ks, rho, "o-", color="tab:green")
    ax.set_title("penalty parameter")
    ax = axes[1, 1]
    ax.plot(ks, mult_sup, "o-", color="tab:purple")
    ax.set_title("multiplier sup norm")
    for a in axes.flat:
        a.set_xlabel("outer iteration")
        a.grid(True, alpha=0.3)
    fig.suptitle(trace.problem_name)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_analyze_figure(prob, trace, report, path):
    """Two-panel sequence picture: Lagrangian stationarity (raw and scaled)
    and the dual growth measure gamma_k."""
    plt = _pyplot()
    ks = [r.k for r in trace.records]
    raw = [max(v, 1e-18) for v in report.akkt_grad_norms]
    scaled = [max(v, 1e-18) for v in report.scaled_grad_norms]

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.8))
    ax1.semilogy(ks, raw, "o-", label="grad L")
    ax1.semilogy(ks, scaled, "s--", label="grad L / gamma")
    ax1.axvline(report.window_start, color="gray", alpha=0.5, label="window start")
    ax1.set_title("Lagrangian stationarity")
    ax1.legend()
    ax2.semilogy(ks, report.pakkt_gamma, "o-", color="tab:orange")
    ax2.set_title("dual scale gamma")
    for a in (ax1, ax2):
        a.set_xlabel("outer iteration")
        a.grid(True, alpha=0.3)
    fig.suptitle(trace.problem_name)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
