"""Small internal convex-subproblem solver and linearization toolkit.

The three optimizer blocks all reduce their convexified subproblems to one
canonical form over a real decision vector (complex quantities are stacked
as [Re; Im]):

    minimize   0.5-free quadratic + linear + const - sum w_j*log2(b_j + s_j*x_i)
    subject to affine / convex-quadratic / Euclidean-ball / convex-power
               inequalities, each expressed as g_k(x) <= 0

Convexity is certified at construction (eigenvalue checks on every quadratic
form, sign checks on log and power terms). solve() runs an augmented
Lagrangian with an L-BFGS inner loop, is deterministic given (problem,
start, options), and never returns a point worse than a feasible start.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._accel import default_backend
from ._solver_impl import LN2, get_kernel

PSD_TOL = -1e-8          # smallest admissible eigenvalue of any quadratic form
INFEAS_RESIDUAL = 1e-5   # Phase-1 residual above which we declare infeasibility


class CvxError(ValueError):
    """Raised when a subproblem fails its convexity certificate."""


# ---------------------------------------------------------------------------
# linearization toolkit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AffineScalar:
    """h(v) = const + slope * v."""

    slope: float
    const: float

    def __call__(self, v):
        return self.const + self.slope * np.asarray(v, dtype=float)


@dataclass(frozen=True)
class AffineComplexForm:
    """g(x) = 2 Re(c^* a^H x) - |c|^2 with c = a^H x0.

    Tangent of x -> |a^H x|^2 at x0, hence a global lower bound.
    """

    a: np.ndarray
    c: complex

    def __call__(self, x) -> float:
        return float(2.0 * np.real(np.conj(self.c) * np.vdot(self.a, x)) - abs(self.c) ** 2)


def taylor_lower_quadratic(a: np.ndarray, x0: np.ndarray) -> AffineComplexForm:
    """Affine global lower bound of |a^H x|^2, tight at x0."""
    a = np.asarray(a, dtype=complex)
    return AffineComplexForm(a, complex(np.vdot(a, np.asarray(x0, dtype=complex))))


def taylor_upper_logistic(v0: float) -> AffineScalar:
    """Tangent of log2(1+v) at v0 >= 0: a global upper bound by concavity."""
    if v0 < 0.0:
        raise ValueError(f"expansion point v0 = {v0} must be >= 0")
    slope = 1.0 / (LN2 * (1.0 + v0))
    return AffineScalar(slope, math.log2(1.0 + v0) - slope * v0)


def taylor_convex_power(z0: float, exponent: float) -> AffineScalar:
    """Tangent of z -> z^exponent (exponent < 0) at z0 > 0: a global lower bound."""
    if z0 <= 0.0:
        raise ValueError(f"expansion point z0 = {z0} must be positive")
    if exponent >= 0.0:
        raise ValueError(f"exponent {exponent} must be negative")
    slope = exponent * z0 ** (exponent - 1.0)
    return AffineScalar(slope, z0 ** exponent - slope * z0)


# ---------------------------------------------------------------------------
# complex <-> stacked-real helpers
# ---------------------------------------------------------------------------

def stack_complex(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=complex)
    return np.concatenate([w.real, w.imag])


def unstack_complex(x: np.ndarray) -> np.ndarray:
    n = x.size // 2
    return x[:n] + 1j * x[n:]


def inner_product_coeffs(a: np.ndarray):
    """Real vectors (ur, ui) with Re(a^H w) = ur.x and Im(a^H w) = ui.x."""
    a = np.asarray(a, dtype=complex)
    ur = np.concatenate([a.real, a.imag])
    ui = np.concatenate([-a.imag, a.real])
    return ur, ui


def rank_one_terms(v: np.ndarray):
    """COO terms of x -> (v.x)^2 as (i, j, val) with each pair stored once."""
    idx = np.nonzero(v)[0]
    out = []
    for ai, i in enumerate(idx):
        vi = v[i]
        out.append((int(i), int(i), float(vi * vi)))
        for j in idx[ai + 1:]:
            out.append((int(i), int(j), 2.0 * float(vi * v[j])))
    return out


# ---------------------------------------------------------------------------
# problem container
# ---------------------------------------------------------------------------

@dataclass
class _Constraint:
    quad: list = field(default_factory=list)   # (i, j, v) meaning v * x_i * x_j
    lin: list = field(default_factory=list)    # (i, v)
    const: float = 0.0
    pow: list = field(default_factory=list)    # (i, coef, expo): coef * x_i^expo
    label: str = ""


class ConvexSubproblem:
    """Builder for one canonical convex subproblem over n real variables."""

    def __init__(self, n: int):
        self.n = n
        self.obj_quad: list = []
        self.obj_lin = np.zeros(n)
        self.obj_const = 0.0
        self.obj_log: list = []   # (idx, weight, beta, scale): -w*log2(b + s*x)
        self.constraints: list = []
        self._packed = None

    # ---- objective ----------------------------------------------------------

    def add_obj_quad(self, i: int, j: int, v: float):
        self.obj_quad.append((i, j, float(v)))
        self._packed = None

    def add_obj_rank_one(self, vec: np.ndarray, coef: float = 1.0):
        """Adds coef * (vec.x)^2 to the objective."""
        for i, j, v in rank_one_terms(np.asarray(vec, dtype=float)):
            self.obj_quad.append((i, j, coef * v))
        self._packed = None

    def add_obj_lin(self, i: int, v: float):
        self.obj_lin[i] += v
        self._packed = None

    def add_obj_log(self, idx: int, weight: float, beta: float = 1.0, scale: float = 1.0):
        """Adds -weight * log2(beta + scale*x[idx]); weight must be >= 0."""
        if weight < 0.0:
            raise CvxError(f"log term weight {weight} < 0 would break convexity")
        self.obj_log.append((idx, float(weight), float(beta), float(scale)))
        self._packed = None

    # ---- constraints (all of the form g(x) <= 0) ----------------------------

    def new_constraint(self, label: str = "") -> _Constraint:
        con = _Constraint(label=label)
        self.constraints.append(con)
        self._packed = None
        return con

    def add_affine_le(self, coeffs: list, rhs: float, label: str = ""):
        """sum coeffs[i]*x_i <= rhs, coeffs as (index, value) pairs."""
        con = self.new_constraint(label)
        con.lin.extend((int(i), float(v)) for i, v in coeffs)
        con.const = -float(rhs)

    def add_ball(self, idxs, center, radius: float, label: str = ""):
        """||x[idxs] - center||^2 <= radius^2."""
        con = self.new_constraint(label)
        for i, c in zip(idxs, np.atleast_1d(center)):
            con.quad.append((int(i), int(i), 1.0))
            con.lin.append((int(i), -2.0 * float(c)))
            con.const += float(c) * float(c)
        con.const -= float(radius) ** 2

    def set_constraint_const(self, k: int, const: float):
        """Update one constraint's constant without invalidating the packing."""
        self.constraints[k].const = float(const)
        if self._packed is not None:
            self._packed["cc"][k] = float(const)

    # ---- packing / certification --------------------------------------------

    def _certify_quad(self, terms: list, what: str):
        if not terms:
            return
        involved = sorted({i for i, _, _ in terms} | {j for _, j, _ in terms})
        pos = {i: k for k, i in enumerate(involved)}
        m = len(involved)
        a = np.zeros((m, m))
        for i, j, v in terms:
            if i == j:
                a[pos[i], pos[i]] += v
            else:
                a[pos[i], pos[j]] += v / 2.0
                a[pos[j], pos[i]] += v / 2.0
        lam_min = float(np.linalg.eigvalsh(a)[0])
        scale = max(1.0, float(np.abs(a).max()))
        if lam_min < PSD_TOL * scale:
            raise CvxError(f"{what}: quadratic form not PSD (lambda_min = {lam_min:.3e})")

    def pack(self):
        if self._packed is not None:
            return self._packed
        self._certify_quad(self.obj_quad, "objective")
        for k, con in enumerate(self.constraints):
            self._certify_quad(con.quad, f"constraint {k} ({con.label})")
            for i, coef, expo in con.pow:
                # x^expo is convex on x > 0 for expo < 0 or expo >= 1
                if coef <= 0.0 or (expo >= 0.0 and expo < 1.0):
                    raise CvxError(
                        f"constraint {k} ({con.label}): power term coef={coef}, "
                        f"expo={expo} is not convex")

        def coo(terms):
            if not terms:
                return (np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64),
                        np.zeros(0))
            i, j, v = zip(*terms)
            return (np.asarray(i, dtype=np.int64), np.asarray(j, dtype=np.int64),
                    np.asarray(v, dtype=float))

        qi, qj, qv = coo(self.obj_quad)
        if self.obj_log:
            lgi = np.asarray([t[0] for t in self.obj_log], dtype=np.int64)
            lgw = np.asarray([t[1] for t in self.obj_log], dtype=float)
            lgb = np.asarray([t[2] for t in self.obj_log], dtype=float)
            lgs = np.asarray([t[3] for t in self.obj_log], dtype=float)
        else:
            lgi = np.zeros(0, dtype=np.int64)
            lgw = lgb = lgs = np.zeros(0)

        K = len(self.constraints)
        cq_ptr = np.zeros(K + 1, dtype=np.int64)
        cl_ptr = np.zeros(K + 1, dtype=np.int64)
        cp_ptr = np.zeros(K + 1, dtype=np.int64)
        cqi, cqj, cqv, cli, clv, cpi, cpc, cpe = [], [], [], [], [], [], [], []
        cc = np.zeros(K)
        for k, con in enumerate(self.constraints):
            for i, j, v in con.quad:
                cqi.append(i)
                cqj.append(j)
                cqv.append(v)
            for i, v in con.lin:
                cli.append(i)
                clv.append(v)
            for i, coef, expo in con.pow:
                cpi.append(i)
                cpc.append(coef)
                cpe.append(expo)
            cq_ptr[k + 1] = len(cqi)
            cl_ptr[k + 1] = len(cli)
            cp_ptr[k + 1] = len(cpi)
            cc[k] = con.const

        self._packed = dict(
            qi=qi, qj=qj, qv=qv,
            lin=self.obj_lin.copy(), c0=float(self.obj_const),
            lgi=lgi, lgw=lgw, lgb=lgb, lgs=lgs,
            cq_ptr=cq_ptr, cqi=np.asarray(cqi, dtype=np.int64),
            cqj=np.asarray(cqj, dtype=np.int64), cqv=np.asarray(cqv, dtype=float),
            cl_ptr=cl_ptr, cli=np.asarray(cli, dtype=np.int64),
            clv=np.asarray(clv, dtype=float), cc=cc,
            cp_ptr=cp_ptr, cpi=np.asarray(cpi, dtype=np.int64),
            cpc=np.asarray(cpc, dtype=float), cpe=np.asarray(cpe, dtype=float),
        )
        return self._packed

    # ---- direct evaluation (numpy; used by tests and safeguards) ------------

    def objective_value(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        f = self.obj_const + float(self.obj_lin @ x)
        for i, j, v in self.obj_quad:
            f += v * x[i] * x[j]
        for idx, w, beta, scale in self.obj_log:
            z = beta + scale * x[idx]
            if z <= 0.0:
                return math.inf
            f -= w * math.log2(z)
        return f

    def constraint_values(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.empty(len(self.constraints))
        for k, con in enumerate(self.constraints):
            g = con.const
            for i, v in con.lin:
                g += v * x[i]
            for i, j, v in con.quad:
                g += v * x[i] * x[j]
            for i, coef, expo in con.pow:
                g += coef * x[i] ** expo if x[i] > 0.0 else math.inf
            out[k] = g
        return out

    def max_violation(self, x: np.ndarray) -> float:
        if not self.constraints:
            return 0.0
        return float(max(0.0, self.constraint_values(x).max()))


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SolveOptions:
    feas_tol: float = 1e-6
    opt_tol: float = 1e-6
    max_al: int = 40
    max_inner: int = 600
    rho0: float = 10.0
    scales: np.ndarray | None = None   # per-variable magnitudes for preconditioning
    backend: str | None = None


@dataclass(frozen=True)
class SolveReport:
    """Solution and certificates.

    max_violation and kkt_residual are measured in preconditioned units:
    each constraint is normalized by its gradient scale at the start point
    and the objective by its own gradient scale, so the tolerances mean
    'relative to the problem's natural magnitudes'.
    """

    x: np.ndarray
    objective: float
    max_violation: float
    kkt_residual: float
    iterations: int
    status: str  # optimal | max-iters | infeasible


def _scaled_arrays(p: dict, sigma: np.ndarray):
    """Problem arrays in x = sigma * x~ coordinates."""
    out = dict(p)
    out["qv"] = p["qv"] * sigma[p["qi"]] * sigma[p["qj"]]
    out["lin"] = p["lin"] * sigma
    out["lgs"] = p["lgs"] * sigma[p["lgi"]] if p["lgi"].size else p["lgs"]
    out["cqv"] = p["cqv"] * sigma[p["cqi"]] * sigma[p["cqj"]]
    out["clv"] = p["clv"] * sigma[p["cli"]]
    out["cpc"] = p["cpc"] * sigma[p["cpi"]] ** p["cpe"] if p["cpi"].size else p["cpc"]
    return out


def _row_equilibrate(arrs: dict, x0: np.ndarray):
    """Divide each constraint by max(1, ||grad g_k(x0)||_inf)."""
    K = arrs["cc"].size
    eta = np.ones(K)
    for k in range(K):
        g = np.zeros(x0.size)
        for t in range(arrs["cl_ptr"][k], arrs["cl_ptr"][k + 1]):
            g[arrs["cli"][t]] += arrs["clv"][t]
        for t in range(arrs["cq_ptr"][k], arrs["cq_ptr"][k + 1]):
            i, j, v = arrs["cqi"][t], arrs["cqj"][t], arrs["cqv"][t]
            g[i] += v * x0[j]
            g[j] += v * x0[i]
        for t in range(arrs["cp_ptr"][k], arrs["cp_ptr"][k + 1]):
            i, c, e = arrs["cpi"][t], arrs["cpc"][t], arrs["cpe"][t]
            if x0[i] > 0.0:
                g[i] += c * e * x0[i] ** (e - 1.0)
        eta[k] = max(1.0, float(np.abs(g).max()))
    out = dict(arrs)
    out["cc"] = arrs["cc"] / eta
    if arrs["cli"].size:
        out["clv"] = arrs["clv"] / np.repeat(eta, np.diff(arrs["cl_ptr"]))
    if arrs["cqi"].size:
        out["cqv"] = arrs["cqv"] / np.repeat(eta, np.diff(arrs["cq_ptr"]))
    if arrs["cpi"].size:
        out["cpc"] = arrs["cpc"] / np.repeat(eta, np.diff(arrs["cp_ptr"]))
    return out, eta


def _normalize_objective(arrs: dict, x0: np.ndarray):
    """Scale the objective so its gradient at x0 is O(1)."""
    g = arrs["lin"].copy()
    for t in range(arrs["qi"].size):
        i, j, v = arrs["qi"][t], arrs["qj"][t], arrs["qv"][t]
        g[i] += v * x0[j]
        g[j] += v * x0[i]
    for t in range(arrs["lgi"].size):
        z = arrs["lgb"][t] + arrs["lgs"][t] * x0[arrs["lgi"][t]]
        if z > 0.0:
            g[arrs["lgi"][t]] -= arrs["lgw"][t] * arrs["lgs"][t] / (z * LN2)
    scale = float(np.abs(g).max()) if g.size else 0.0
    if not (scale > 1e-300 and math.isfinite(scale)):
        return arrs
    out = dict(arrs)
    out["lin"] = arrs["lin"] / scale
    out["qv"] = arrs["qv"] / scale
    out["c0"] = arrs["c0"] / scale
    out["lgw"] = arrs["lgw"] / scale
    return out


def _kernel_call(kern, arrs: dict, x0: np.ndarray, obj_w: float,
                 feas_tol: float, opt_tol: float, max_al: int, max_inner: int,
                 rho0: float):
    return kern(
        x0, obj_w, arrs["c0"], arrs["lin"], arrs["qi"], arrs["qj"], arrs["qv"],
        arrs["lgi"], arrs["lgw"], arrs["lgb"], arrs["lgs"],
        arrs["cq_ptr"], arrs["cqi"], arrs["cqj"], arrs["cqv"],
        arrs["cl_ptr"], arrs["cli"], arrs["clv"], arrs["cc"],
        arrs["cp_ptr"], arrs["cpi"], arrs["cpc"], arrs["cpe"],
        feas_tol, opt_tol, max_al, max_inner, rho0)


def solve(problem: ConvexSubproblem, start: np.ndarray,
          opts: SolveOptions = SolveOptions()) -> SolveReport:
    """Solve to stationarity; deterministic given (problem, start, opts)."""
    start = np.asarray(start, dtype=float)
    if start.size != problem.n:
        raise ValueError(f"start has dimension {start.size}, expected {problem.n}")
    packed = problem.pack()
    sigma = np.ones(problem.n) if opts.scales is None else np.asarray(opts.scales, dtype=float)
    if sigma.size != problem.n or np.any(sigma <= 0.0):
        raise ValueError("scales must be positive with one entry per variable")
    backend = opts.backend or default_backend()
    kern = get_kernel(backend)

    arrs = _scaled_arrays(packed, sigma)
    x0s = start / sigma
    arrs, eta = _row_equilibrate(arrs, x0s)
    arrs = _normalize_objective(arrs, x0s)

    def viol_norm(x_raw):
        if not problem.constraints:
            return 0.0
        return float(np.max(np.maximum(0.0, problem.constraint_values(x_raw) / eta)))

    xs, viol_s, kkt, fobj, status_code, iters = _kernel_call(
        kern, arrs, x0s, 1.0, 0.5 * opts.feas_tol, opts.opt_tol, opts.max_al,
        opts.max_inner, opts.rho0)
    x = xs * sigma
    viol = viol_norm(x)
    total_iters = int(iters)

    if viol > opts.feas_tol:
        # Phase-1: pure feasibility restoration from the original start
        xf, violf_s, _, _, _, it2 = _kernel_call(
            kern, arrs, x0s, 0.0, 0.5 * opts.feas_tol, opts.opt_tol, opts.max_al,
            opts.max_inner, opts.rho0)
        total_iters += int(it2)
        violf = viol_norm(xf * sigma)
        if violf > INFEAS_RESIDUAL:
            return SolveReport(x=xf * sigma, objective=problem.objective_value(xf * sigma),
                               max_violation=violf, kkt_residual=math.inf,
                               iterations=total_iters, status="infeasible")
        xs, viol_s, kkt, fobj, status_code, it3 = _kernel_call(
            kern, arrs, xf, 1.0, 0.5 * opts.feas_tol, opts.opt_tol, opts.max_al,
            opts.max_inner, opts.rho0)
        total_iters += int(it3)
        x = xs * sigma
        viol = viol_norm(x)

    obj = problem.objective_value(x)
    status = "optimal" if (viol <= opts.feas_tol and kkt <= opts.opt_tol) else "max-iters"

    # never return a point worse than a feasible start (ties keep the start,
    # which makes solves idempotent at a fixed point)
    if viol_norm(start) <= opts.feas_tol:
        obj_start = problem.objective_value(start)
        if obj >= obj_start:
            x = start.copy()
            obj = obj_start
            viol = viol_norm(x)
            if viol > opts.feas_tol or kkt > opts.opt_tol:
                status = "max-iters"
    return SolveReport(x=x, objective=obj, max_violation=viol, kkt_residual=float(kkt),
                       iterations=total_iters, status=status)
