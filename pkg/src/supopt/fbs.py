"""Forward-backward splitting with exact and inexact proximal maps.

Supports both decompositions of the TV-regularized least-squares
objective h = 0.5*||Ax-b||^2 + lam*R_tau(x) [+ indicator(x >= 0)]:

- NaturalLS: f = lam*R_tau (smooth part), g = least squares
  (+ constraint); the prox of g is a linear solve, done exactly through
  the reduced m x m system or inexactly by primal-dual iterations with
  computable acceptance certificates.
- ReversedTV: f = least squares, g = lam*R_tau (+ constraint); the prox
  of g is the TV prox.

The accelerated outer loop uses constant step alpha, constant relaxation
a_relax, and the momentum recursion on t_k; plain forward-backward is the
accelerated=False special case (t_k = 1, y_k = x_k).
"""

import math
import time
from dataclasses import dataclass

import numpy as np

from .metrics import make_record, require_finite
from .opslin import shifted_gram_solve, smw_solve, spectral_norm_sq
from .regtv import prox_tv_with_info, tv_smooth_grad

INNER_SOLVERS = ("ExactSMW", "PDBasic", "PDNoInv", "TVProx")


@dataclass(frozen=True)
class Splitting:
    """Which summand carries the gradient step and which the prox."""

    kind: str  # "NaturalLS" or "ReversedTV"
    nonneg: bool = False

    def __post_init__(self):
        if self.kind not in ("NaturalLS", "ReversedTV"):
            raise ValueError(f"unknown splitting {self.kind!r}")


@dataclass(frozen=True)
class AFBSConfig:
    """Outer-loop and inner-solver parameters.

    alpha defaults to 1/L_f; the inexact inner tolerance schedule is
    eps_k = inexact_C * k**(-inexact_q).
    """

    alpha: float = None
    a_relax: float = 1.0
    t0: float = 1.01
    accelerated: bool = True
    inexact_q: float = 2.0
    inexact_C: float = 1.0
    inner: str = "ExactSMW"
    max_outer: int = 2000
    max_inner: int = 100000
    warm_start: bool = True
    term_tol: float = 0.001

    def __post_init__(self):
        if self.inner not in INNER_SOLVERS:
            raise ValueError(f"unknown inner solver {self.inner!r}")
        if self.t0 <= 1:
            raise ValueError("t0 must exceed 1")
        if not 0 < self.a_relax < 2:
            raise ValueError("a_relax must be in (0, 2)")


@dataclass
class ProxCertificate:
    """Computable acceptance evidence for an inexact prox evaluation."""

    z: np.ndarray
    z_p: np.ndarray = None
    w: np.ndarray = None
    gap_value: float = 0.0
    eps_achieved: float = 0.0
    inner_iters: int = 0
    accepted: bool = True
    fallback: bool = False


def lipschitz_f(splitting, A, tvparams):
    """Lipschitz constant of the smooth part's gradient."""
    if splitting.kind == "NaturalLS":
        return tvparams.lam * 8.0 / tvparams.tau
    return spectral_norm_sq(A)


def _operator_norm(A):
    norm = getattr(A, "_norm2", None)
    if norm is None:
        norm = math.sqrt(spectral_norm_sq(A))
        A._norm2 = norm
    return norm


def prox_ls_exact(A, b, alpha, x, nonneg=False):
    """Exact prox of 0.5*||Az - b||^2 [+ indicator(z >= 0)] at x.

    Unconstrained: solves (I + alpha A^T A) z = x + alpha A^T b through
    the reduced m x m system. Constrained: runs the inversion-free
    primal-dual iteration until the duality gap drops below 1e-12.
    """
    x = np.asarray(x, dtype=np.float64)
    if not nonneg:
        return shifted_gram_solve(A, 1.0, alpha, x + alpha * A.rmatvec(b))
    state = pd_noinv_init(A, b, alpha, x, nonneg=True)
    best = np.maximum(state.z, 0.0)
    for l in range(1, 200001):
        z_prev, tau_prev = state.z, state.tau
        state = pd_noinv_step(A, alpha, True, state)
        if l % 50 == 0:
            # the extrapolated candidate converges much faster than z_l
            z = state.z + (alpha / tau_prev) * (state.z - z_prev) \
                + alpha * A.applyT_nocount(state.q - A.apply_nocount(state.z))
            best = np.maximum(z, 0.0)
            if dual_gap(A, b, alpha, x, best) <= 1e-12:
                break
    return best


def dual_gap(A, b, alpha, x, z):
    """Duality gap of the constrained least-squares prox subproblem at z.

    With B = A^T A + I/alpha and c = x/alpha + A^T b, returns
    0.5 * ||(c - Bz)_+||^2 in the B-inverse norm minus <(c - Bz)_-, z>.
    Nonnegative for feasible z, and zero exactly at the constrained prox.
    All products are diagnostic (uncounted).
    """
    z = np.asarray(z, dtype=np.float64)
    if np.min(z) < 0:
        raise ValueError("dual_gap requires a feasible point z >= 0")
    c = x / alpha + A.applyT_nocount(b)
    r = c - (A.applyT_nocount(A.apply_nocount(z)) + z / alpha)
    r_pos = np.maximum(r, 0.0)
    r_neg = np.minimum(r, 0.0)
    sol = shifted_gram_solve(A, 1.0 / alpha, 1.0, r_pos, counted=False)
    return 0.5 * float(r_pos @ sol) - float(r_neg @ z)


# -- primal-dual inner iterations ------------------------------------------


@dataclass
class PDBasicState:
    z: np.ndarray
    p: np.ndarray
    zbar: np.ndarray
    tau: float
    sigma: float
    c_alpha: np.ndarray


@dataclass
class PDNoInvState:
    z: np.ndarray
    q: np.ndarray
    zbar: np.ndarray
    tau: float
    sigma: float
    c_alpha: np.ndarray


def pd_basic_init(A, b, alpha, x, z0=None, p0=None):
    """Initial state with tau0 = sigma0 = 1 (tau0*sigma0 <= 1)."""
    x = np.asarray(x, dtype=np.float64)
    z = x.copy() if z0 is None else np.asarray(z0, dtype=np.float64).copy()
    p = np.zeros_like(z) if p0 is None else np.asarray(p0,
                                                       dtype=np.float64).copy()
    c = x / alpha + A.applyT_nocount(b)
    return PDBasicState(z=z, p=p, zbar=z.copy(), tau=1.0, sigma=1.0, c_alpha=c)


def pd_basic_step(A, alpha, state):
    """One primal-dual step on the constrained prox subproblem.

    Dual update clips to the nonpositive cone; the primal update solves
    (I + tau B) z = rhs through the reduced system (a fresh factorization
    per step size, so this variant suits small row counts).
    """
    p_new = np.minimum(state.p + state.sigma * state.zbar, 0.0)
    rhs = state.z - state.tau * (p_new - state.c_alpha)
    z_new = smw_solve(A, alpha, state.tau, rhs)
    theta = 1.0 / math.sqrt(1.0 + 2.0 * state.tau / alpha)
    zbar = z_new + theta * (z_new - state.z)
    return PDBasicState(z=z_new, p=p_new, zbar=zbar, tau=theta * state.tau,
                        sigma=state.sigma / theta, c_alpha=state.c_alpha)


def pd_noinv_init(A, b, alpha, x, nonneg, z0=None, q0=None):
    """Initial state with tau0 = sigma0 = 1/||A||_2 (tau0*sigma0 <= 1/||A||^2)."""
    x = np.asarray(x, dtype=np.float64)
    z = x.copy() if z0 is None else np.asarray(z0, dtype=np.float64).copy()
    if nonneg:
        z = np.maximum(z, 0.0)
    q = (np.zeros(A.n_rows) if q0 is None
         else np.asarray(q0, dtype=np.float64).copy())
    c = x / alpha + A.applyT_nocount(b)
    t0 = 1.0 / _operator_norm(A)
    return PDNoInvState(z=z, q=q, zbar=z.copy(), tau=t0, sigma=t0, c_alpha=c)


def pd_noinv_step(A, alpha, nonneg, state):
    """One inversion-free primal-dual step: exactly one A and one A^T product."""
    q_new = (state.q + state.sigma * A.matvec(state.zbar)) / (1.0 + state.sigma)
    v = state.z - state.tau * (A.rmatvec(q_new) - state.c_alpha)
    z_new = alpha / (alpha + state.tau) * v
    if nonneg:
        z_new = np.maximum(z_new, 0.0)
    theta = 1.0 / math.sqrt(1.0 + 2.0 * state.tau / alpha)
    zbar = z_new + theta * (z_new - state.z)
    return PDNoInvState(z=z_new, q=q_new, zbar=zbar, tau=theta * state.tau,
                        sigma=state.sigma / theta, c_alpha=state.c_alpha)


# -- inexactness certificates ------------------------------------------------


def cert_unconstrained(A, alpha, eps_k, z_prev, tau_prev, state):
    """Acceptance test for the unconstrained inexact prox.

    Extrapolates z = z_new + (alpha/tau_prev)(z_new - z_prev) and accepts
    when 0.5*||Az - q||^2 <= eps_k^2 / (2*alpha). The extrapolated z is
    the value to return as the prox, not the raw iterate.
    """
    z = state.z + (alpha / tau_prev) * (state.z - z_prev)
    resid = A.apply_nocount(z) - state.q
    lhs = 0.5 * float(resid @ resid)
    accepted = lhs <= eps_k ** 2 / (2.0 * alpha)
    return ProxCertificate(z=z, z_p=state.z, gap_value=lhs,
                           eps_achieved=math.sqrt(2.0 * alpha * lhs),
                           accepted=accepted)


def cert_constrained(A, b, alpha, eps_k, x, z_prev, tau_prev, state,
                     fallback_budget=None):
    """Acceptance test for the constrained inexact prox.

    Builds the candidate pair (z, z_p) with normal-cone element w; when
    the extrapolated z stays feasible the gap test
    0.5*||A(z - z_p)||^2 + <w, z> <= eps_k^2/(2*alpha) applies, otherwise
    an error-norm estimate at the feasible iterate is compared against
    `fallback_budget` (defaults to eps_k). The accepted prox value is z on
    the primary path and the feasible iterate on the fallback path.
    """
    if fallback_budget is None:
        fallback_budget = eps_k
    z1, q1 = state.z, state.q
    Az1 = A.apply_nocount(z1)
    z = z1 + (alpha / tau_prev) * (z1 - z_prev) \
        + alpha * A.applyT_nocount(q1 - Az1)
    w = A.applyT_nocount(Az1 - b) - (x - z) / alpha
    if np.min(z) >= 0:
        d = A.apply_nocount(z - z1)
        lhs = 0.5 * float(d @ d) + float(w @ z)
        accepted = lhs <= eps_k ** 2 / (2.0 * alpha)
        return ProxCertificate(z=z, z_p=z1, w=w, gap_value=lhs,
                               eps_achieved=math.sqrt(
                                   2.0 * alpha * max(lhs, 0.0)),
                               accepted=accepted)
    # extrapolated point infeasible: bound the prox error at z1 instead
    c = x / alpha + A.applyT_nocount(b)
    r = c - (A.applyT_nocount(Az1) + z1 / alpha)
    r_pos = np.maximum(r, 0.0)
    r_neg = np.minimum(r, 0.0)
    arg = float(r_pos @ r_pos) - (2.0 / alpha) * float(r_neg @ z1)
    estimate = alpha * math.sqrt(max(arg, 0.0))
    return ProxCertificate(z=z1, z_p=z1, w=w, gap_value=estimate,
                           eps_achieved=estimate,
                           accepted=estimate <= fallback_budget,
                           fallback=True)


def _run_pd_noinv_inexact(A, b, alpha, x, eps_k, nonneg, max_inner,
                          warm=None):
    """Iterate the inversion-free primal-dual solver until a certificate."""
    z0 = q0 = None
    if warm is not None:
        z0, q0 = warm
    state = pd_noinv_init(A, b, alpha, x, nonneg, z0=z0, q0=q0)
    cert = None
    steps = 0
    for _ in range(max_inner):
        z_prev, tau_prev = state.z, state.tau
        state = pd_noinv_step(A, alpha, nonneg, state)
        steps += 1
        if nonneg:
            cert = cert_constrained(A, b, alpha, eps_k, x, z_prev, tau_prev,
                                    state)
        else:
            cert = cert_unconstrained(A, alpha, eps_k, z_prev, tau_prev,
                                      state)
        if cert.accepted:
            break
    cert.inner_iters = steps
    return cert, (state.z, state.q)


def _run_pd_basic(A, b, alpha, x, tol, max_inner, warm=None):
    """Iterate the basic primal-dual solver until the duality gap <= tol."""
    z0 = p0 = None
    if warm is not None:
        z0, p0 = warm
    state = pd_basic_init(A, b, alpha, x, z0=z0, p0=p0)
    inner = 0
    for _ in range(max_inner):
        state = pd_basic_step(A, alpha, state)
        inner += 1
        if dual_gap(A, b, alpha, x, np.maximum(state.z, 0.0)) <= tol:
            break
    z = np.maximum(state.z, 0.0)
    cert = ProxCertificate(z=z, z_p=z, gap_value=float(
        dual_gap(A, b, alpha, x, z)), inner_iters=inner)
    return cert, (state.z, state.p)


@dataclass
class AFBSRunResult:
    x: np.ndarray
    records: list
    converged: bool
    iterations: int
    fallback_count: int = 0
    total_inner: int = 0


def _grad_smooth(splitting, A, b, shape, tvparams, y):
    if splitting.kind == "NaturalLS":
        return tvparams.lam * tv_smooth_grad(shape, tvparams, y)
    return A.rmatvec(A.matvec(y) - b)


def objective(splitting, A, b, shape, tvparams, x):
    """Full objective 0.5*||Ax-b||^2 + lam*R_tau(x) (uncounted products)."""
    from .regtv import tv_smooth

    r = A.apply_nocount(x) - b
    return 0.5 * float(r @ r) + tvparams.lam * tv_smooth(shape, tvparams, x)


def grad_h_u(A, b, shape, tvparams, x):
    """Gradient of the unconstrained objective (uncounted products)."""
    return A.applyT_nocount(A.apply_nocount(x) - b) \
        + tvparams.lam * tv_smooth_grad(shape, tvparams, x)


def _terminated(A, b, shape, tvparams, x, nonneg, tol):
    g = grad_h_u(A, b, shape, tvparams, x)
    if nonneg:
        return float(np.max(np.abs(np.minimum(x, g)))) <= tol
    return float(np.max(np.abs(g))) <= tol


def afbs_run(splitting, config, A, b, shape, tvparams, x0=None, x_ref=None,
             callback=None, iterate_callback=None, record_wall_time=False):
    """Run (accelerated) forward-backward splitting to first-order optimality.

    Stops when the infinity norm of the objective gradient (or of
    min(x, gradient) in the constrained case) drops below term_tol, or at
    max_outer. Returns the final iterate, per-iteration metric records,
    a convergence flag, the fallback-certificate count, and the total
    inner-iteration count.
    """
    b = np.asarray(b, dtype=np.float64)
    L = lipschitz_f(splitting, A, tvparams)
    alpha = 1.0 / L if config.alpha is None else config.alpha
    if splitting.kind == "ReversedTV" and config.inner != "TVProx":
        raise ValueError("the reversed splitting needs the TV prox inner "
                         "solver")
    if splitting.kind == "NaturalLS" and config.inner == "TVProx":
        raise ValueError("TVProx applies only to the reversed splitting")

    x = np.zeros(A.n_cols) if x0 is None else np.asarray(x0, dtype=np.float64)
    y = x.copy()
    t = config.t0
    warm = None
    fallback_count = 0
    total_inner = 0
    t_start = time.perf_counter()

    records = []

    def emit(k, inner_iters):
        wt = time.perf_counter() - t_start if record_wall_time else 0.0
        rec = make_record(k, A, b, x, shape, tvparams, x_ref=x_ref,
                          inner_iters=inner_iters, wall_time=wt)
        records.append(rec)
        if callback is not None:
            callback(rec)

    emit(0, 0)
    for k in range(1, config.max_outer + 1):
        if _terminated(A, b, shape, tvparams, x, splitting.nonneg,
                       config.term_tol):
            return AFBSRunResult(x, records, True, k - 1, fallback_count,
                                 total_inner)
        v = y - alpha * _grad_smooth(splitting, A, b, shape, tvparams, y)
        eps_k = config.inexact_C * float(k) ** (-config.inexact_q)
        inner_iters = 0
        if config.inner == "ExactSMW":
            z = prox_ls_exact(A, b, alpha, v, nonneg=splitting.nonneg)
        elif config.inner == "TVProx":
            z, nit, _, _ = prox_tv_with_info(shape, tvparams, v,
                                             alpha * tvparams.lam,
                                             nonneg=splitting.nonneg)
            inner_iters = nit
        elif config.inner == "PDBasic":
            tol = max(eps_k ** 2 / (2.0 * alpha), 1e-12)
            cert, warm_new = _run_pd_basic(A, b, alpha, v, tol,
                                           config.max_inner, warm=warm)
            warm = warm_new if config.warm_start else None
            z, inner_iters = cert.z, cert.inner_iters
        else:
            cert, warm_new = _run_pd_noinv_inexact(
                A, b, alpha, v, eps_k, splitting.nonneg, config.max_inner,
                warm=warm)
            warm = warm_new if config.warm_start else None
            z, inner_iters = cert.z, cert.inner_iters
            if cert.fallback:
                fallback_count += 1
        total_inner += inner_iters
        x_new = np.asarray(z, dtype=np.float64)
        require_finite(x_new, f"forward-backward run, k={k}")
        if iterate_callback is not None:
            iterate_callback(x_new)
        if config.accelerated:
            # constant alpha and a_relax make the t-ratio equal to one
            t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            y = x_new + ((t - 1.0) / t_new) * (x_new - x) \
                + (1.0 - config.a_relax) * (t / t_new) * (y - x_new)
            t = t_new
        else:
            y = x_new
        x = x_new
        emit(k, inner_iters)
    converged = _terminated(A, b, shape, tvparams, x, splitting.nonneg,
                            config.term_tol)
    return AFBSRunResult(x, records, converged, config.max_outer,
                         fallback_count, total_inner)
