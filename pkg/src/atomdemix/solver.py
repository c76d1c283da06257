"""Atomic-norm demixing via ADMM on the semidefinite characterization.

The atomic norm of a band vector x is the value of

    min_{u,t} (trace(Toep(u))/(4M+1) + t) / 2
    s.t. [[Toep(u), x], [x^H, t]] >= 0,

so both demixing programs become small SDPs: one bordered PSD cone per
channel, plus either the hard data-consistency constraint (exact mode)
or a quadratic data term (regularized mode). Consensus ADMM splits each
cone into a projected copy; all other updates are closed-form.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import dualpoly, linalg, model
from .exceptions import LengthMismatch

RHO_MIN = 1e-8
RHO_MAX = 1e4


@dataclass
class AdmmConfig:
    rho: float = 1.0
    max_iters: int = 20_000
    eps_abs: float = 1e-7
    eps_rel: float = 1e-7
    #: residual balancing: factor applied when one residual dominates
    adapt_every: int = 50
    adapt_factor: float = 2.0
    adapt_ratio: float = 10.0
    track_objective: bool = False
    #: regularized mode only: residual-based stopping must also pass a
    #: first-order optimality check (dual feasibility of the scaled data
    #: residual). Guards against stalls along the nearly flat channel-swap
    #: direction when lambda_w is tiny.
    opt_tol: float = 1e-4
    opt_check_stride: int = 25
    #: factor by which rho is relaxed when residuals pass but the
    #: optimality check does not; larger than adapt_factor because each
    #: relaxation costs a residual re-convergence cycle
    opt_relax_factor: float = 8.0

    def validate(self) -> None:
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.eps_abs < 1e-12 or self.eps_rel < 1e-12:
            raise ValueError("tolerances below 1e-12 are not supported")


@dataclass
class RegularizationConfig:
    """Weight of the atomic-norm penalty in the noisy program."""

    lambda_w: float
    c_w: float = 1.0

    def validate(self) -> None:
        if self.lambda_w <= 0:
            raise ValueError("lambda_w must be positive")
        if self.c_w < 1.0:
            raise ValueError("c_w must be at least 1")


def lambda_bounded(sigma_w: float, m: int, c_w: float = 1.0) -> float:
    """Penalty weight for noise with a known l2 bound sigma_w."""
    return c_w * sigma_w * math.sqrt(model.band_size(m))


def lambda_gaussian(sigma: float, m: int, c_w: float = 1.0) -> float:
    """Penalty weight for per-sample complex Gaussian noise of scale sigma."""
    nb = model.band_size(m)
    return c_w * sigma * math.sqrt(nb) * math.sqrt(
        1.2 * math.log(8.0 * math.pi * nb * math.log(nb))
    )


@dataclass
class SdpBlock:
    """One channel's SDP variables; bordered() is the lifted PSD matrix."""

    u: np.ndarray
    x: np.ndarray
    t: float

    def bordered(self) -> np.ndarray:
        nb = self.x.size
        b = np.empty((nb + 1, nb + 1), dtype=np.complex128)
        b[:nb, :nb] = linalg.toeplitz_from_column(self.u)
        b[:nb, nb] = self.x
        b[nb, :nb] = self.x.conj()
        b[nb, nb] = self.t
        return b

    @property
    def norm_value(self) -> float:
        """Atomic-norm surrogate (u_0 + t)/2 carried by this block."""
        return 0.5 * (self.u[0].real + self.t)


@dataclass
class DemixSolution:
    x1_hat: np.ndarray
    x2_hat: np.ndarray
    p_hat: np.ndarray
    objective: float
    primal_residual: float
    dual_residual: float
    iterations: int
    converged: bool
    mode: str
    lambda_w: float | None = None
    block1: SdpBlock | None = None
    block2: SdpBlock | None = None
    objective_history: list = field(default_factory=list)

    @property
    def atomic1(self) -> float:
        return self.block1.norm_value

    @property
    def atomic2(self) -> float:
        return self.block2.norm_value


def _bordered(toep: np.ndarray, x: np.ndarray, t: float) -> np.ndarray:
    nb = x.size
    b = np.empty((nb + 1, nb + 1), dtype=np.complex128)
    b[:nb, :nb] = toep
    b[:nb, nb] = x
    b[nb, :nb] = x.conj()
    b[nb, nb] = t
    return b


def _u_from_gram(g_top: np.ndarray, weight: float, rho: float, denom: np.ndarray):
    """Closed-form u-update: (Toeplitz-adjoint of G minus objective tilt)."""
    adj = linalg.toeplitz_adjoint(g_top)
    u = adj / denom
    u[0] = (adj[0].real - weight / (2.0 * rho)) / denom[0]
    return u


def _regularized_optimal(y, g, gbar, x1, x2, lam, surrogate, tol) -> bool:
    """First-order optimality of a regularized iterate.

    The scaled data residual must be dual feasible in both channels and
    pair with the estimate to the atomic-norm surrogate.
    """
    p_try = (y - x1 - g * x2) / lam
    if dual_atomic_norm(p_try, grid_size=4096, newton_iters=12) > 1.0 + tol:
        return False
    if dual_atomic_norm(gbar * p_try, grid_size=4096, newton_iters=12) > 1.0 + tol:
        return False
    pairing = float(np.vdot(x1 + g * x2, p_try).real)
    return abs(pairing - surrogate) <= tol * max(1.0, abs(surrogate))


def _demix_admm(y, g, cfg: AdmmConfig, lam: float | None):
    """Shared ADMM loop; lam=None runs the equality-constrained program."""
    cfg.validate()
    nb = y.size
    m = (nb - 1) // 4
    dim = nb + 1
    gbar = np.conj(g)
    exact = lam is None
    weight = 1.0 if exact else lam
    rho = cfg.rho

    denom = np.empty(nb)
    denom[0] = nb
    denom[1:] = 2.0 * (nb - np.arange(1, nb))

    z = [np.zeros((dim, dim), dtype=np.complex128) for _ in range(2)]
    dual = [np.zeros((dim, dim), dtype=np.complex128) for _ in range(2)]
    v = np.zeros(nb, dtype=np.complex128)
    x1 = np.zeros(nb, dtype=np.complex128)
    x2 = np.zeros(nb, dtype=np.complex128)
    u = [np.zeros(nb, dtype=np.complex128) for _ in range(2)]
    t = [0.0, 0.0]
    b = [None, None]

    ynorm = float(np.linalg.norm(y))
    history = []
    converged = False
    prim = dua = float("inf")
    it = 0
    last_opt_check = -(10**9)
    rho_cap = RHO_MAX

    for it in range(1, cfg.max_iters + 1):
        gmats = [z[i] + dual[i] for i in range(2)]
        for i in range(2):
            u[i] = _u_from_gram(gmats[i][:nb, :nb], weight, rho, denom)
            t[i] = gmats[i][nb, nb].real - weight / (2.0 * rho)
        c1 = gmats[0][:nb, nb]
        c2 = gmats[1][:nb, nb]
        if exact:
            e = 0.5 * (y + v - c1 - g * c2)
            x1 = c1 + 0.5 * e
            x2 = c2 + 0.5 * gbar * e
        else:
            d = y - c1 - g * c2
            x1 = c1 + d / (2.0 * (rho + 1.0))
            x2 = c2 + gbar * d / (2.0 * (rho + 1.0))

        b[0] = _bordered(linalg.toeplitz_from_column(u[0]), x1, t[0])
        b[1] = _bordered(linalg.toeplitz_from_column(u[1]), x2, t[1])

        dua_sq = 0.0
        prim_sq = 0.0
        znorm_sq = bnorm_sq = unorm_sq = 0.0
        for i in range(2):
            z_new = linalg.psd_project(b[i] - dual[i])
            dua_sq += float(np.linalg.norm(z_new - z[i]) ** 2)
            z[i] = z_new
            resid = z[i] - b[i]
            prim_sq += float(np.linalg.norm(resid) ** 2)
            dual[i] = dual[i] + resid
            dual[i] = 0.5 * (dual[i] + dual[i].conj().T)
            znorm_sq += float(np.linalg.norm(z[i]) ** 2)
            bnorm_sq += float(np.linalg.norm(b[i]) ** 2)
            unorm_sq += float(np.linalg.norm(dual[i]) ** 2)

        if exact:
            eq = y - x1 - g * x2
            v = v + eq
            prim_sq += float(np.linalg.norm(eq) ** 2)
            unorm_sq += float(np.linalg.norm(v) ** 2)

        prim = math.sqrt(prim_sq)
        dua = rho * math.sqrt(dua_sq)

        if cfg.track_objective:
            surrogate = 0.5 * (u[0][0].real + t[0]) + 0.5 * (u[1][0].real + t[1])
            if exact:
                history.append(surrogate)
            else:
                fit = 0.5 * float(np.linalg.norm(y - x1 - g * x2) ** 2)
                history.append(fit + lam * surrogate)

        scale_pri = max(math.sqrt(znorm_sq), math.sqrt(bnorm_sq), ynorm)
        eps_pri = cfg.eps_abs * math.sqrt(2 * dim * dim + (nb if exact else 0))
        eps_pri += cfg.eps_rel * scale_pri
        eps_dua = cfg.eps_abs * math.sqrt(2 * dim * dim)
        eps_dua += cfg.eps_rel * rho * math.sqrt(unorm_sq)
        if prim <= eps_pri and dua <= eps_dua:
            if exact:
                converged = True
                break
            if it - last_opt_check >= cfg.opt_check_stride:
                last_opt_check = it
                surrogate = (
                    0.5 * (u[0][0].real + t[0]) + 0.5 * (u[1][0].real + t[1])
                )
                if _regularized_optimal(
                    y, g, gbar, x1, x2, lam, surrogate, cfg.opt_tol
                ):
                    converged = True
                    break
                # residuals have converged but the objective has not: rho
                # is too stiff for the remaining (flat) descent direction.
                # Relax it and ratchet the cap down so residual balancing
                # cannot push rho back into the regime already proven stiff.
                if rho / cfg.opt_relax_factor >= RHO_MIN:
                    rho /= cfg.opt_relax_factor
                    rho_cap = rho
                    for i in range(2):
                        dual[i] *= cfg.opt_relax_factor

        if cfg.adapt_every and it % cfg.adapt_every == 0:
            if prim > cfg.adapt_ratio * dua and rho * cfg.adapt_factor <= rho_cap:
                rho *= cfg.adapt_factor
                for i in range(2):
                    dual[i] /= cfg.adapt_factor
                v /= cfg.adapt_factor
            elif dua > cfg.adapt_ratio * prim and rho / cfg.adapt_factor >= RHO_MIN:
                rho /= cfg.adapt_factor
                for i in range(2):
                    dual[i] *= cfg.adapt_factor
                v *= cfg.adapt_factor

    surrogate1 = 0.5 * (u[0][0].real + t[0])
    surrogate2 = 0.5 * (u[1][0].real + t[1])
    if exact:
        p_hat = rho * v
        objective = surrogate1 + surrogate2
        lam_out = None
        mode = "exact"
    else:
        p_hat = (y - x1 - g * x2) / lam
        objective = (
            0.5 * float(np.linalg.norm(y - x1 - g * x2) ** 2)
            + lam * (surrogate1 + surrogate2)
        )
        lam_out = lam
        mode = "regularized"

    return DemixSolution(
        x1_hat=x1,
        x2_hat=x2,
        p_hat=p_hat,
        objective=float(objective),
        primal_residual=prim,
        dual_residual=dua,
        iterations=it,
        converged=converged,
        mode=mode,
        lambda_w=lam_out,
        block1=SdpBlock(u=u[0], x=x1, t=t[0]),
        block2=SdpBlock(u=u[1], x=x2, t=t[1]),
        objective_history=history,
    )


def demix_exact(
    meas: model.MeasurementSet, config: AdmmConfig | None = None
) -> DemixSolution:
    """Solve the noise-free program: min sum of atomic norms s.t. y = x1 + g x2."""
    return _demix_admm(meas.y, meas.g, config or AdmmConfig(), None)


def demix_regularized(
    meas: model.MeasurementSet,
    reg: RegularizationConfig,
    config: AdmmConfig | None = None,
) -> DemixSolution:
    """Solve the noisy program with quadratic data fit and atomic penalty."""
    reg.validate()
    return _demix_admm(meas.y, meas.g, config or AdmmConfig(), reg.lambda_w)


def atomic_norm_sdp(
    x,
    m: int | None = None,
    config: AdmmConfig | None = None,
    full_output: bool = False,
):
    """Atomic norm of a band vector via its SDP characterization.

    Returns the scalar value; with full_output=True returns
    (value, info) where info carries convergence diagnostics.
    """
    cfg = config or AdmmConfig()
    cfg.validate()
    x = np.asarray(x, dtype=np.complex128)
    nb = x.size
    if m is not None and nb != model.band_size(m):
        raise LengthMismatch(f"length {nb} != 4M+1 for M={m}")
    if (nb - 1) % 4 != 0:
        raise LengthMismatch(f"length {nb} is not of the form 4M+1")
    dim = nb + 1
    rho = cfg.rho

    denom = np.empty(nb)
    denom[0] = nb
    denom[1:] = 2.0 * (nb - np.arange(1, nb))

    z = np.zeros((dim, dim), dtype=np.complex128)
    dual = np.zeros((dim, dim), dtype=np.complex128)
    u = np.zeros(nb, dtype=np.complex128)
    t = 0.0
    converged = False
    prim = dua = float("inf")
    it = 0

    for it in range(1, cfg.max_iters + 1):
        gmat = z + dual
        u = _u_from_gram(gmat[:nb, :nb], 1.0, rho, denom)
        t = gmat[nb, nb].real - 1.0 / (2.0 * rho)
        b = _bordered(linalg.toeplitz_from_column(u), x, t)
        z_new = linalg.psd_project(b - dual)
        dua = rho * float(np.linalg.norm(z_new - z))
        z = z_new
        resid = z - b
        prim = float(np.linalg.norm(resid))
        dual = dual + resid
        dual = 0.5 * (dual + dual.conj().T)

        eps_pri = cfg.eps_abs * dim + cfg.eps_rel * max(
            float(np.linalg.norm(z)), float(np.linalg.norm(b))
        )
        eps_dua = cfg.eps_abs * dim + cfg.eps_rel * rho * float(
            np.linalg.norm(dual)
        )
        if prim <= eps_pri and dua <= eps_dua:
            converged = True
            break
        if cfg.adapt_every and it % cfg.adapt_every == 0:
            if prim > cfg.adapt_ratio * dua and rho * cfg.adapt_factor <= RHO_MAX:
                rho *= cfg.adapt_factor
                dual /= cfg.adapt_factor
            elif dua > cfg.adapt_ratio * prim and rho / cfg.adapt_factor >= RHO_MIN:
                rho /= cfg.adapt_factor
                dual *= cfg.adapt_factor

    value = 0.5 * (u[0].real + t)
    if full_output:
        info = {
            "converged": converged,
            "iterations": it,
            "primal_residual": prim,
            "dual_residual": dua,
            "block": SdpBlock(u=u, x=x, t=t),
        }
        return value, info
    return value


def dual_atomic_norm(
    p, grid_size: int = 16_384, newton_iters: int = 20
) -> float:
    """Dual atomic norm: sup over tau of |sum_n p_n exp(j 2 pi n tau)|.

    Dense-grid scan plus Newton polish of every candidate local maximum;
    exact to roundoff for band-limited polynomials at these grid sizes.
    """
    p = np.asarray(p, dtype=np.complex128)
    poly = dualpoly.DualPolynomial(p)
    cfg = dualpoly.LocalizationConfig(
        grid_size=max(grid_size, 8 * poly.m),
        newton_iters=newton_iters,
    )
    grid_max = float(np.abs(dualpoly.grid_eval(poly, cfg.grid_size)).max())
    if grid_max == 0.0:
        return 0.0
    _, values = dualpoly.refined_local_maxima(poly, cfg, floor=grid_max)
    refined = float(values.max()) if values.size else 0.0
    return max(grid_max, refined)


# --------------------------------------------------------------------------
# optimality certificates
# --------------------------------------------------------------------------


@dataclass
class OptimalityReport:
    """Dual-feasibility and complementarity diagnostics for a solution.

    dual_norm_p / dual_norm_q are the dual atomic norms of p_hat and of
    its conjugate-modulated twin (both must not exceed 1). pairing_gap
    compares <p_hat, x1 + g x2> against the atomic-norm sum; primal_gap
    is the equality-constraint violation (exact mode only).
    """

    mode: str
    dual_norm_p: float
    dual_norm_q: float
    pairing_gap: float
    primal_gap: float
    satisfied: bool
    tolerance: float
    slacks: dict = field(default_factory=dict)


def check_optimality(
    meas: model.MeasurementSet,
    sol: DemixSolution,
    tol: float = 1e-3,
    grid_size: int = 16_384,
) -> OptimalityReport:
    """Verify the first-order optimality conditions of a returned solution.

    Regularized mode checks that the scaled residual (y - x1 - g x2) /
    lambda_w is dual feasible in both channels and that its pairing with
    the estimate matches the atomic-norm sum. Exact mode checks the same
    for the extracted multiplier plus data consistency.
    """
    g = meas.g
    p_hat = sol.p_hat
    norm_p = dual_atomic_norm(p_hat, grid_size)
    norm_q = dual_atomic_norm(np.conj(g) * p_hat, grid_size)
    combined = sol.x1_hat + g * sol.x2_hat
    atomic_sum = sol.atomic1 + sol.atomic2
    pairing = float(np.vdot(combined, p_hat).real)
    pairing_gap = abs(pairing - atomic_sum)
    if sol.mode == "exact":
        primal_gap = float(np.linalg.norm(meas.y - combined))
        primal_ok = primal_gap <= tol * max(1.0, float(np.linalg.norm(meas.y)))
        lam = 1.0
    else:
        primal_gap = 0.0
        primal_ok = True
        lam = sol.lambda_w
    feas_ok = norm_p <= 1.0 + tol and norm_q <= 1.0 + tol
    pairing_ok = pairing_gap <= tol * max(1.0, atomic_sum)
    slacks = {
        "dual_norm_p": lam * (norm_p - 1.0),
        "dual_norm_q": lam * (norm_q - 1.0),
        "pairing": lam * pairing_gap,
        "primal": primal_gap,
    }
    return OptimalityReport(
        mode=sol.mode,
        dual_norm_p=norm_p,
        dual_norm_q=norm_q,
        pairing_gap=pairing_gap,
        primal_gap=primal_gap,
        satisfied=bool(feas_ok and pairing_ok and primal_ok),
        tolerance=tol,
        slacks=slacks,
    )


# --------------------------------------------------------------------------
# solution files
# --------------------------------------------------------------------------


def solution_to_dict(sol: DemixSolution) -> dict:
    return {
        "x1_re": [float(v) for v in sol.x1_hat.real],
        "x1_im": [float(v) for v in sol.x1_hat.imag],
        "x2_re": [float(v) for v in sol.x2_hat.real],
        "x2_im": [float(v) for v in sol.x2_hat.imag],
        "p_re": [float(v) for v in sol.p_hat.real],
        "p_im": [float(v) for v in sol.p_hat.imag],
        "objective": float(sol.objective),
        "iterations": int(sol.iterations),
        "residuals": {
            "primal": float(sol.primal_residual),
            "dual": float(sol.dual_residual),
        },
    }


def solution_from_dict(d: dict) -> dict:
    """Inverse of solution_to_dict; arrays rebuilt as complex vectors."""
    return {
        "x1": np.asarray(d["x1_re"], dtype=float)
        + 1j * np.asarray(d["x1_im"], dtype=float),
        "x2": np.asarray(d["x2_re"], dtype=float)
        + 1j * np.asarray(d["x2_im"], dtype=float),
        "p": np.asarray(d["p_re"], dtype=float)
        + 1j * np.asarray(d["p_im"], dtype=float),
        "objective": float(d["objective"]),
        "iterations": int(d["iterations"]),
        "residuals": dict(d["residuals"]),
    }


def save_solution(path: str, sol: DemixSolution) -> None:
    model.atomic_write_text(
        path, json.dumps(solution_to_dict(sol), indent=2) + "\n"
    )


def load_solution(path: str) -> dict:
    with open(path) as f:
        return solution_from_dict(json.load(f))
