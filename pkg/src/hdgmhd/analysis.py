"""Error norms, convergence tables, observed orders and the HDG projections."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import dim_p
from .space import Space

VARIABLES = ("L", "u", "p", "H", "b", "r")


def exact_values(exact, name: str, x: np.ndarray) -> np.ndarray:
    """Exact field ``name`` at points ``x (..., 2)`` laid out as ``(..., ncomp)``."""
    v = np.asarray(getattr(exact, name)(x))
    base = np.shape(x)[:-1]
    return v.reshape(base + (-1,))


def l2_errors(sol, exact, degree: int | None = None) -> dict[str, float]:
    """L2 errors of the six local variables, elementwise quadrature of degree ``2k + 6`` by default."""
    space = sol.space
    deg = 2 * space.k + 6 if degree is None else degree
    out = {}
    for name in VARIABLES:
        vt, vals = sol.evaluate(name, deg)
        e = exact_values(exact, name, vt.x)
        out[name] = float(np.sqrt(np.sum(vt.w[..., None] * (vals - e) ** 2)))
    return out


def l2_norms(exact, space: Space, degree: int | None = None) -> dict[str, float]:
    """L2 norms of the exact fields (the error of the zero solution)."""
    vt = space.volume(2 * space.k + 6 if degree is None else degree)
    return {n: float(np.sqrt(np.sum(vt.w[..., None] * exact_values(exact, n, vt.x) ** 2)))
            for n in VARIABLES}


def coefficient_l2(space: Space, coef: np.ndarray) -> float:
    """L2 norm of a broken field from orthonormal coefficients (E, ncomp, N)."""
    return float(np.sqrt(np.sum(coef * coef)))


@dataclass
class ErrorRow:
    level: int
    h: float
    n_elem: int
    n_dof: int
    errors: dict


@dataclass
class ErrorTable:
    problem: str
    k: int
    rows: list = field(default_factory=list)

    def add(self, row: ErrorRow):
        self.rows.append(row)

    @property
    def h(self) -> np.ndarray:
        return np.array([r.h for r in self.rows])

    def errors(self, name: str) -> np.ndarray:
        return np.array([r.errors[name] for r in self.rows])

    def orders(self) -> dict[str, np.ndarray]:
        """Consecutive-pair orders; entry ``i`` compares rows ``i - 1`` and ``i`` (NaN for the first)."""
        return {n: pair_orders(self.errors(n), self.h) for n in VARIABLES}

    def finest_orders(self) -> dict[str, float]:
        return {n: float(v[-1]) if len(v) > 1 else float("nan") for n, v in self.orders().items()}

    def fitted_orders(self, last: int = 3) -> dict[str, float]:
        return {n: fitted_order(self.errors(n), self.h, last) for n in VARIABLES}


def pair_orders(err, h) -> np.ndarray:
    err, h = np.asarray(err, dtype=float), np.asarray(h, dtype=float)
    out = np.full(len(err), np.nan)
    if len(err) > 1:
        with np.errstate(divide="ignore", invalid="ignore"):
            out[1:] = np.log(err[:-1] / err[1:]) / np.log(h[:-1] / h[1:])
        # identical errors give order zero even when both vanish
        out[1:][err[:-1] == err[1:]] = 0.0
    return out


def fitted_order(err, h, last: int = 3) -> float:
    """Least-squares slope of log(err) against log(h) over the last ``last`` levels."""
    err, h = np.asarray(err, dtype=float)[-last:], np.asarray(h, dtype=float)[-last:]
    if len(err) < 2 or np.any(err <= 0):
        return float("nan")
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


def observed_orders(table: ErrorTable) -> dict[str, np.ndarray]:
    return table.orders()


# --- projections -----------------------------------------------------------

@dataclass
class ProjectionResult:
    coefficients: dict          # name -> (E, ncomp, N)
    errors: dict                # name -> L2 error against the projected field
    condition: float = float("nan")


def project_br(space: Space, b, r, alpha3: float = 1.0, degree: int | None = None) -> ProjectionResult:
    """The coupled projection of ``(b, r)``.

    Volume moments of ``b`` and ``r`` against ``P_{k-1}`` and, on every edge,
    the moments of ``(b - Pi b).n + alpha3 (r - Pi r)`` against ``P_k(e)``
    vanish. Solved as one ``3N x 3N`` system per element.
    """
    k, N, M = space.k, space.N, space.M
    if k < 1:
        raise ValueError("the coupled projection needs k >= 1")
    deg = 2 * k + 6 if degree is None else degree
    Nm = dim_p(k - 1)
    E = space.mesh.n_elements
    vt = space.volume(deg)
    et = space.edges(deg)
    n = 3 * N
    A = np.zeros((E, n, n))
    rhs = np.zeros((E, n))
    bv, rv = b(vt.x), r(vt.x)
    wphi = vt.w[..., None] * vt.phi
    mass = np.einsum("eqi,eqj->eij", wphi[..., :Nm], vt.phi)      # (E, Nm, N)
    row = 0
    for c in range(3):
        A[:, row:row + Nm, c * N:(c + 1) * N] = mass
        vals = bv[..., c] if c < 2 else rv
        rhs[:, row:row + Nm] = np.einsum("eqi,eq->ei", wphi[..., :Nm], vals)
        row += Nm
    be, re_ = b(et.x), r(et.x)
    for j in range(3):
        nj = et.normal[:, j]
        wpsi = et.w[:, j, :, None] * et.psi[:, j]                  # (E, Q, M)
        for c in range(2):
            A[:, row:row + M, c * N:(c + 1) * N] = nj[:, c, None, None] * np.einsum(
                "eqm,eqi->emi", wpsi, et.phi[:, j])
        A[:, row:row + M, 2 * N:] = alpha3 * np.einsum("eqm,eqi->emi", wpsi, et.phi[:, j])
        target = np.einsum("eqc,ec->eq", be[:, j], nj) + alpha3 * re_[:, j]
        rhs[:, row:row + M] = np.einsum("eqm,eq->em", wpsi, target)
        row += M
    assert row == n
    x = np.linalg.solve(A, rhs[..., None])[..., 0]
    coef = {"b": x[:, :2 * N].reshape(E, 2, N), "r": x[:, 2 * N:].reshape(E, 1, N)}
    errs = {"b": _proj_error(space, coef["b"], b, deg), "r": _proj_error(space, coef["r"], r, deg)}
    return ProjectionResult(coef, errs, _equilibrated_condition(A))


def project_Lu(space: Space, L, u, p, b, coeffs, br: ProjectionResult | None = None,
               degree: int | None = None) -> ProjectionResult:
    """The coupled projection of ``(L, u)``.

    Volume conditions: ``-(L - Pi L, G) + ((u - Pi u) (x) w, G) = 0`` for
    ``G`` in ``P_{k-1}^{2x2}`` and ``(u - Pi u, v) = 0`` for ``v`` in
    ``P_{k-1}^2``. Edge condition against ``P_k(e)^2``::

        <-(L - Pi L) n + (m + alpha1)(u - Pi u), mu>
            = -<(p - P p) n + kappa/2 d x (n x (eb + ebhat)), mu>

    with ``P p`` the L2 projection of ``p``, ``eb = b^t - (Pi b)^t``
    and ``ebhat = b^t - P_e b^t``. ``L`` returns (..., 2, 2).
    """
    k, N, M = space.k, space.N, space.M
    if k < 1:
        raise ValueError("the coupled projection needs k >= 1")
    deg = 2 * k + 6 if degree is None else degree
    if br is None:
        br = project_br(space, b, lambda x: np.zeros(np.shape(x)[:-1]), coeffs.alpha3, deg)
    Nm = dim_p(k - 1)
    E = space.mesh.n_elements
    vt = space.volume(deg)
    et = space.edges(deg)
    n = 6 * N
    A = np.zeros((E, n, n))
    rhs = np.zeros((E, n))
    Lv = np.asarray(L(vt.x)).reshape(vt.x.shape[:2] + (4,))
    uv = u(vt.x)
    wv = coeffs.w(vt.x)
    wphi = vt.w[..., None] * vt.phi
    mass = np.einsum("eqi,eqj->eij", wphi[..., :Nm], vt.phi)
    row = 0
    # (a, c) component of G: -(eL_ac, G) + (eu_a w_c, G)
    for a in range(2):
        for c in range(2):
            A[:, row:row + Nm, (2 * a + c) * N:(2 * a + c + 1) * N] = -mass
            A[:, row:row + Nm, (4 + a) * N:(5 + a) * N] = np.einsum("eqi,eq,eqj->eij", wphi[..., :Nm],
                                                                   wv[..., c], vt.phi)
            target = -Lv[..., 2 * a + c] + uv[..., a] * wv[..., c]
            rhs[:, row:row + Nm] = np.einsum("eqi,eq->ei", wphi[..., :Nm], target)
            row += Nm
    for a in range(2):
        A[:, row:row + Nm, (4 + a) * N:(5 + a) * N] = mass
        rhs[:, row:row + Nm] = np.einsum("eqi,eq->ei", wphi[..., :Nm], uv[..., a])
        row += Nm

    pc = space.l2_project(p, deg)                                   # (E, N)
    bc = br.coefficients["b"]
    Le = np.asarray(L(et.x)).reshape(et.x.shape[:3] + (2, 2))
    ue, pe, be = u(et.x), p(et.x), b(et.x)
    de = coeffs.d(et.x)
    delta = np.stack([de[..., 1], -de[..., 0]], axis=-1)
    m = np.einsum("ejqc,ejc->ejq", coeffs.w(et.x), et.normal)
    for j in range(3):
        nj, tj = et.normal[:, j], et.tangent[:, j]
        phi, psi, w = et.phi[:, j], et.psi[:, j], et.w[:, j]
        wpsi = w[..., None] * psi
        # edge L2 projection of b.t onto P_k(e) (t and the global tangent differ by a sign only)
        bt_exact = np.einsum("eqc,ec->eq", be[:, j], tj)
        bt_hat = np.einsum("eqm,em->eq", psi, np.einsum("eqm,eq->em", wpsi, bt_exact))
        bt_pi = np.einsum("eqi,eci,ec->eq", phi, bc, tj)
        eb_sum = (bt_exact - bt_pi) + (bt_exact - bt_hat)
        ep = pe[:, j] - np.einsum("eqi,ei->eq", phi, pc)
        Lexn = np.einsum("eqac,ec->eqa", Le[:, j], nj)
        for a in range(2):
            sl = slice(row, row + M)
            for c in range(2):
                A[:, sl, (2 * a + c) * N:(2 * a + c + 1) * N] = -nj[:, c, None, None] * np.einsum(
                    "eqm,eqi->emi", wpsi, phi)
            A[:, sl, (4 + a) * N:(5 + a) * N] = np.einsum("eqm,eq,eqi->emi", wpsi,
                                                          m[:, j] + coeffs.alpha1, phi)
            lhs_exact = -Lexn[..., a] + (m[:, j] + coeffs.alpha1) * ue[:, j, :, a]
            g = -(ep * nj[:, a, None] + 0.5 * coeffs.kappa * eb_sum * delta[:, j, :, a])
            rhs[:, sl] = np.einsum("eqm,eq->em", wpsi, lhs_exact - g)
            row += M
    assert row == n
    x = np.linalg.solve(A, rhs[..., None])[..., 0]
    coef = {"L": x[:, :4 * N].reshape(E, 4, N), "u": x[:, 4 * N:].reshape(E, 2, N)}
    Lflat = lambda y: np.asarray(L(y)).reshape(np.shape(y)[:-1] + (4,))
    errs = {"L": _proj_error(space, coef["L"], Lflat, deg), "u": _proj_error(space, coef["u"], u, deg)}
    return ProjectionResult(coef, errs, _equilibrated_condition(A))


def _proj_error(space: Space, coef, func, degree):
    vt = space.volume(degree)
    vals = np.einsum("ecn,eqn->eqc", coef, vt.phi)
    ex = np.asarray(func(vt.x)).reshape(vals.shape)
    return float(np.sqrt(np.sum(vt.w[..., None] * (vals - ex) ** 2)))


def _equilibrated_condition(A) -> float:
    """Largest 2-norm condition number over elements after row scaling."""
    As = A / np.linalg.norm(A, axis=2, keepdims=True)
    return float(np.max(np.linalg.cond(As)))
