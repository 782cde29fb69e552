"""Superiorization: target-reduction steps and the interleaved driver.

A superiorized run alternates bounded target-function-reduction
perturbations (on the smoothed TV, optionally with a nonnegativity
constraint) with one step of a perturbation-resilient basic operator.
Eight named variants select the combination of reduction step
(normalized-gradient passes or a single prox step) and basic operator
(regularized CG, Landweber, projected Landweber).
"""

import time
import warnings
from dataclasses import dataclass

import numpy as np

from . import basic
from .metrics import make_record, require_finite
from .regtv import prox_tv, tv_smooth, tv_smooth_grad

# variant -> (basic operator, reduction step, constrained termination)
VARIANTS = {
    "GradSupCG": ("CG", "grad", False),
    "GradSupLW": ("LW", "grad", False),
    "ProxSupCG": ("CG", "prox", False),
    "ProxSupLW": ("LW", "prox", False),
    "ProxCSupCG": ("CG", "prox+", True),
    "ProxCSupLW": ("LW", "prox+", True),
    "GradSupProjLW": ("LW+", "grad", True),
    "ProxSupProjLW": ("LW+", "prox", True),
}

_FEAS_TOL = -1e-8
_ELL_MAX = 10 ** 6


@dataclass(frozen=True)
class SupConfig:
    """Parameters of a superiorized run.

    kappa is the number of reduction passes per outer iteration (gradient
    variants only); the perturbation sizes gamma0 * a^l are summable
    whenever a < 1.
    """

    variant: str
    kappa: int = 20
    a: float = 1.0 - 1e-6
    gamma0: float = 0.001
    eps: float = 0.001
    max_outer: int = 2000

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if not 0 < self.a <= 1:
            raise ValueError("a must be in (0, 1]")
        if self.gamma0 <= 0 or self.kappa < 1 or self.eps < 0:
            raise ValueError("need gamma0 > 0, kappa >= 1, eps >= 0")


@dataclass
class SupState:
    y: np.ndarray
    ell: int
    beta: float
    basic_state: object
    k: int


@dataclass
class SupRunResult:
    x: np.ndarray
    records: list
    converged: bool
    iterations: int


def s_grad(shape, tvparams, y, ell, a, gamma0, kappa):
    """kappa normalized-negative-gradient reduction passes on R_tau.

    Each pass shrinks the trial step gamma0 * a^ell (incrementing the
    shared exponent ell every trial) until the smoothed TV does not
    increase, then commits. Returns (y_new, ell_new) with
    R_tau(y_new) <= R_tau(y).
    """
    y = np.asarray(y, dtype=np.float64)
    for _ in range(kappa):
        g = tv_smooth_grad(shape, tvparams, y)
        nrm = float(np.linalg.norm(g))
        v = -g / nrm if nrm > 0 else np.zeros_like(y)
        r_cur = tv_smooth(shape, tvparams, y)
        while True:
            if ell > _ELL_MAX:
                warnings.warn("step-size exponent exhausted; committing "
                              "current point", RuntimeWarning)
                return y, ell
            y_try = y + (gamma0 * a ** ell) * v
            ell += 1
            if tv_smooth(shape, tvparams, y_try) <= r_cur:
                y = y_try
                break
    return y, ell


def s_prox(shape, tvparams, y, beta):
    """Single prox reduction step: prox of the smoothed TV at step beta.

    A bounded perturbation: ||y - out|| <= M * beta with M the sum of the
    difference-operator row norms.
    """
    return prox_tv(shape, tvparams, y, beta)


def s_prox_plus(shape, tvparams, y, beta):
    """Nonnegativity-constrained prox reduction step; output is >= 0."""
    return prox_tv(shape, tvparams, y, beta, nonneg=True)


def _terminated(A, b, y, eps, constrained):
    if basic.g_u(A, b, y) > eps:
        return False
    return (not constrained) or float(np.min(y)) > _FEAS_TOL


def superiorize_run(config, A, b, shape, tvparams, mu=None, gamma=None,
                    x0=None, x_ref=None, callback=None, half_callback=None,
                    record_wall_time=False):
    """Run one superiorized variant until eps-compatibility or max_outer.

    Each outer iteration applies the variant's reduction step(s) to get
    y_{k+1/2}, optionally reported through `half_callback`, then one basic
    operator step. Termination requires g_u(y) <= eps, plus
    min_i y_i > -1e-8 for the constrained variants. Returns the final
    iterate, the per-iteration metric records, and a convergence flag.
    """
    kind, reduction, constrained = VARIANTS[config.variant]
    b = np.asarray(b, dtype=np.float64)
    y = np.zeros(A.n_cols) if x0 is None else np.asarray(x0, dtype=np.float64)
    if kind in ("LW", "LW+"):
        params = basic.LWParams(basic.default_gamma(A) if gamma is None
                                else gamma)
    cg_state = None
    if kind == "CG":
        if mu is None:
            mu = basic.default_mu(A)
        cg_state = basic.cg_init(A, b, y, mu)

    t_start = time.perf_counter()

    def emit(k):
        wt = time.perf_counter() - t_start if record_wall_time else 0.0
        rec = make_record(k, A, b, y, shape, tvparams, x_ref=x_ref,
                          wall_time=wt)
        records.append(rec)
        if callback is not None:
            callback(rec)

    records = []
    ell = 0
    emit(0)
    for k in range(config.max_outer):
        if _terminated(A, b, y, config.eps, constrained):
            return SupRunResult(y, records, True, k)
        if reduction == "grad":
            y, ell = s_grad(shape, tvparams, y, ell, config.a, config.gamma0,
                            config.kappa)
        else:
            beta = config.gamma0 * config.a ** k
            step = s_prox_plus if reduction == "prox+" else s_prox
            y = step(shape, tvparams, y, beta)
        if half_callback is not None:
            half_callback(y)
        if kind == "CG":
            cg_state = basic.CGState(x=y, p=cg_state.p, h=cg_state.h, mu=mu)
            cg_state = basic.cg_step(A, b, cg_state)
            y = cg_state.x
        elif kind == "LW":
            y = basic.lw_step(A, b, params, y)
        else:
            y = basic.lw_proj_step(A, b, params, y)
        require_finite(y, f"superiorized run {config.variant}, k={k}")
        emit(k + 1)
    return SupRunResult(y, records, _terminated(A, b, y, config.eps,
                                                constrained),
                        config.max_outer)
