"""Element-local HDG solver for the linearized MHD system and its static condensation.

Local unknowns per element are ordered ``(L, u, p, H, b, r)`` with the 2x2
tensor ``L`` stored row-major, giving ``11 N`` coefficients for ``N = dim P_k``.
Trace data seen by an element are its three edges in local order, each
carrying ``[u1_hat, u2_hat, bt_hat, r_hat]`` with ``k + 1`` coefficients per
block; ``bt_hat`` is the coefficient of the global edge tangent.

Two-dimensional cross products follow the embedding in the x-y plane:
``a x b`` is the scalar ``a1 b2 - a2 b1``, a scalar ``s`` crossed with a
vector is ``s (-v2, v1)``, and a vector crossed with a scalar is
``s (v2, -v1)``.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .space import Space

Field = Callable[[np.ndarray], np.ndarray]


class QuadratureWarning(UserWarning):
    pass


class LocalSolverError(RuntimeError):
    """The element-local operator could not be factorized."""


def cross2(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def scross(s, v):
    v = np.asarray(v)
    s = np.asarray(s)[..., None]
    return s * np.stack([-v[..., 1], v[..., 0]], axis=-1)


def vcross(v, s):
    v = np.asarray(v)
    s = np.asarray(s)[..., None]
    return s * np.stack([v[..., 1], -v[..., 0]], axis=-1)


def curl2(grad_v):
    """Scalar curl from a Jacobian ``grad_v[..., i, j] = d v_i / d x_j``."""
    return grad_v[..., 1, 0] - grad_v[..., 0, 1]


def curl_scalar(grad_s):
    """Vector curl of a scalar from its gradient: ``(d2 s, -d1 s)``."""
    return np.stack([grad_s[..., 1], -grad_s[..., 0]], axis=-1)


@dataclass
class Coefficients:
    """Physical and stabilization parameters.

    ``w`` and ``d`` map points ``(..., 2)`` to vectors ``(..., 2)``.
    ``grad_d`` is only needed to build manufactured forcing terms.
    ``field_degree`` is the polynomial degree of ``w`` and ``d`` (None when
    they are not polynomials); it decides whether the default quadrature is
    exact.
    """

    Re: float = 1.0
    Rm: float = 1.0
    kappa: float = 1.0
    w: Field = None
    d: Field = None
    grad_d: Field | None = None
    w_inf: float = 0.0
    alpha1: float | None = None
    alpha2: float = 1.0
    alpha3: float = 1.0
    field_degree: int | None = 0

    def __post_init__(self):
        if self.w is None:
            self.w = lambda x: np.zeros(np.shape(x))
        if self.d is None:
            self.d = lambda x: np.zeros(np.shape(x))
        if self.alpha1 is None:
            self.alpha1 = max(1.0, self.w_inf)

    def validate(self):
        for name in ("Re", "Rm", "kappa"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.alpha1 > 0.5 * self.w_inf:
            raise ValueError(
                f"alpha1={self.alpha1} violates alpha1 > |w|_inf / 2 = {0.5 * self.w_inf}")
        if not (self.alpha2 > 0 and self.alpha3 > 0):
            raise ValueError("alpha2 and alpha3 must be positive")


@dataclass
class QuadratureDegrees:
    """Volume/edge degree for bilinear forms and the (higher) degree for loads and errors."""

    form: int
    load: int

    @classmethod
    def default(cls, k: int, coeffs: Coefficients, form: int | None = None,
                load: int | None = None) -> "QuadratureDegrees":
        needed = None if coeffs.field_degree is None else 2 * k + coeffs.field_degree
        if form is None:
            form = 2 * k + 2
            if needed is None:
                warnings.warn("coefficient fields are not polynomial; bilinear forms use "
                              f"inexact quadrature of degree {form}", QuadratureWarning,
                              stacklevel=3)
        if needed is not None and form < needed:
            raise ValueError(f"quadrature degree {form} is below the {needed} needed for "
                             f"degree-{coeffs.field_degree} coefficient fields")
        return cls(form, 2 * k + 6 if load is None else load)


# local block offsets
def blocks(N: int) -> dict[str, slice]:
    return {
        "L": slice(0, 4 * N), "u": slice(4 * N, 6 * N), "p": slice(6 * N, 7 * N),
        "H": slice(7 * N, 8 * N), "b": slice(8 * N, 10 * N), "r": slice(10 * N, 11 * N),
    }


@dataclass
class CondensedElements:
    """Batched local systems ``A x = B lam + c rho + F`` and flux moments ``R = C x + D lam``.

    Shapes: A (E, n, n), B (E, n, t), c (E, n), F (E, n), C (E, t, n),
    D (E, t, t), with ``n = 11 N`` and ``t = 12 (k + 1)``. The solved blocks
    ``Z = A^-1 B``, ``z = A^-1 c``, ``z0 = A^-1 F`` and the condensed
    ``K = C Z + D``, ``k_rho = C z``, ``r0 = C z0`` are filled by
    :func:`condense`.
    """

    space: Space
    coeffs: Coefficients
    A: np.ndarray
    B: np.ndarray
    c: np.ndarray
    F: np.ndarray
    C: np.ndarray
    D: np.ndarray
    aug: np.ndarray          # the (p, qbar) block added to A, kept for the monolithic oracle
    flux_row: np.ndarray     # (E, t): <u_hat . n, 1>_dK as a functional of the element traces
    degrees: QuadratureDegrees
    Z: np.ndarray | None = None
    z: np.ndarray | None = None
    z0: np.ndarray | None = None
    K: np.ndarray | None = None
    k_rho: np.ndarray | None = None
    r0: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    @property
    def n_elements(self) -> int:
        return self.A.shape[0]


def _edge_moments(et, vals=None):
    """sum_q w f phi_i phi_j etc. for each local edge; returns (PP, PQ, QQ) with a weight field."""
    w = et.w if vals is None else et.w * vals
    PP = np.einsum("ejq,ejqa,ejqb->ejab", w, et.phi, et.phi)
    PQ = np.einsum("ejq,ejqa,ejqm->ejam", w, et.phi, et.psi)
    QQ = np.einsum("ejq,ejqm,ejql->ejml", w, et.psi, et.psi)
    return PP, PQ, QQ


def assemble_local(space: Space, coeffs: Coefficients, g: Field | None = None,
                   f: Field | None = None, degrees: QuadratureDegrees | None = None,
                   flux_sign: float = 1.0) -> CondensedElements:
    """Assemble the local solver on every element.

    ``flux_sign`` scales the ``m u`` convective flux term; it exists only so
    verification can check that a corrupted flux is detected.
    """
    coeffs.validate()
    k, N, M = space.k, space.N, space.M
    if degrees is None:
        degrees = QuadratureDegrees.default(k, coeffs)
    Re, Rm, kap = coeffs.Re, coeffs.Rm, coeffs.kappa
    a1, a2, a3 = coeffs.alpha1, coeffs.alpha2, coeffs.alpha3
    E = space.mesh.n_elements
    n = 11 * N
    t = 12 * M
    S = blocks(N)
    Ls = [slice(c * N, (c + 1) * N) for c in range(4)]      # L_ab at c = 2a + b
    us = [slice(4 * N + a * N, 4 * N + (a + 1) * N) for a in range(2)]
    bs = [slice(8 * N + a * N, 8 * N + (a + 1) * N) for a in range(2)]
    p, H, r = S["p"], S["H"], S["r"]

    vt = space.volume(degrees.form)
    et = space.edges(degrees.form)
    phi, grad, w = vt.phi, vt.grad, vt.w
    Mass = np.einsum("eq,eqi,eqj->eij", w, phi, phi)
    Dd = [np.einsum("eq,eqi,eqj->eij", w, grad[..., b], phi) for b in range(2)]   # (d_b phi_i, phi_j)
    wv = coeffs.w(vt.x)
    Cw = np.einsum("eq,eqc,eqic,eqj->eij", w, wv, grad, phi)
    dv = coeffs.d(vt.x)
    delta = np.stack([dv[..., 1], -dv[..., 0]], axis=-1)             # d x s = s * delta
    curl_e = [-grad[..., 1], grad[..., 0]]                              # curl(e_c phi)
    Kd = [[np.einsum("eq,eqi,eq,eqj->eij", w, phi, delta[..., a], curl_e[c]) for c in range(2)]
          for a in range(2)]
    means = np.einsum("eq,eqi->ei", w, phi)
    area = space.geom.areas

    PP, PQ, QQ = _edge_moments(et)
    m = np.einsum("ejqc,ejc->ejq", coeffs.w(et.x), et.normal) * flux_sign
    PPm, PQm, _ = _edge_moments(et, m)
    de = coeffs.d(et.x)
    delta_e = np.stack([de[..., 1], -de[..., 0]], axis=-1)
    PPd, PQd, QQd = zip(*(_edge_moments(et, delta_e[..., a]) for a in range(2)))
    nrm, tan, sg = et.normal, et.tangent, et.sign

    def esum(P, coef=None):
        return P.sum(axis=1) if coef is None else np.einsum("ej,ejab->eab", coef, P)

    A = np.zeros((E, n, n))
    B = np.zeros((E, n, t))
    cvec = np.zeros((E, n))
    F = np.zeros((E, n))
    # trace column of (local edge j, block blk) with blk 0,1 = u_hat comps, 2 = bt_hat, 3 = r_hat
    def tcol(j, blk):
        return slice(j * 4 * M + blk * M, j * 4 * M + (blk + 1) * M)

    # (a) Re (L, G) + (u, div G) - <u_hat, G n> = 0
    for a in range(2):
        for b in range(2):
            row = Ls[2 * a + b]
            A[:, row, row] += Re * Mass
            A[:, row, us[a]] += Dd[b]
            for j in range(3):
                B[:, row, tcol(j, a)] += nrm[:, j, b, None, None] * PQ[:, j]

    # (b) momentum
    for a in range(2):
        row = us[a]
        for b in range(2):
            A[:, row, Ls[2 * a + b]] += Dd[b] - esum(PP, nrm[..., b])
        A[:, row, p] += -Dd[a] + esum(PP, nrm[..., a])
        A[:, row, us[a]] += -Cw + esum(PPm) + a1 * esum(PP)
        for c in range(2):
            # kappa (b, curl(v x d)) rewritten with the integration-by-parts identity,
            # plus the half-sum tangential flux term
            A[:, row, bs[c]] += kap * Kd[a][c] - 0.5 * kap * esum(PPd[a], tan[..., c])
        for j in range(3):
            B[:, row, tcol(j, a)] += a1 * PQ[:, j]
            B[:, row, tcol(j, 2)] += -0.5 * kap * sg[:, j, None, None] * PQd[a][:, j]

    # (c) augmented continuity: -(u, grad q) + <u_hat.n, q> + (p, qbar) = |K|^-1 (rho, qbar)
    aug = np.einsum("ei,ej->eij", means, means) / area[:, None, None]
    for a in range(2):
        A[:, p, us[a]] += -Dd[a]
        for j in range(3):
            B[:, p, tcol(j, a)] += -nrm[:, j, a, None, None] * PQ[:, j]
    A[:, p, p] += aug
    cvec[:, p] = means / area[:, None]

    # (d) (Rm/kappa) (H, J) - (b, curl J) - <n x bt_hat, J> = 0
    A[:, H, H] += (Rm / kap) * Mass
    A[:, H, bs[0]] += -Dd[1]
    A[:, H, bs[1]] += Dd[0]
    for j in range(3):
        B[:, H, tcol(j, 2)] += sg[:, j, None, None] * PQ[:, j]

    # (e) induction
    for a in range(2):
        row = bs[a]
        A[:, row, H] += (Dd[1] * -1.0 if a == 0 else Dd[0]) - esum(PP, tan[..., a])
        A[:, row, r] += -Dd[a]
        for b in range(2):
            A[:, row, us[b]] += -kap * np.swapaxes(Kd[b][a], 1, 2) + 0.5 * kap * esum(PPd[b], tan[..., a])
        for c in range(2):
            A[:, row, bs[c]] += a2 * esum(PP, tan[..., a] * tan[..., c])
        for j in range(3):
            B[:, row, tcol(j, 3)] += -nrm[:, j, a, None, None] * PQ[:, j]
            for b in range(2):
                B[:, row, tcol(j, b)] += -0.5 * kap * tan[:, j, a, None, None] * PQd[b][:, j]
            B[:, row, tcol(j, 2)] += a2 * (tan[:, j, a] * sg[:, j])[:, None, None] * PQ[:, j]

    # (f) -(b, grad s) + <b.n + alpha3 (r - r_hat), s> = 0
    for a in range(2):
        A[:, r, bs[a]] += -Dd[a] + esum(PP, nrm[..., a])
    A[:, r, r] += a3 * esum(PP)
    for j in range(3):
        B[:, r, tcol(j, 3)] += a3 * PQ[:, j]

    # loads
    vl = space.volume(degrees.load)
    if g is not None:
        gv = g(vl.x)
        for a in range(2):
            F[:, us[a]] = np.einsum("eq,eq,eqi->ei", vl.w, gv[..., a], vl.phi)
    if f is not None:
        fv = f(vl.x)
        for a in range(2):
            F[:, bs[a]] = np.einsum("eq,eq,eqi->ei", vl.w, fv[..., a], vl.phi)

    # flux moments per local edge: rows [F2_1, F2_2, F5.t_e, F6] against the edge basis
    C = np.zeros((E, t, n))
    D = np.zeros((E, t, t))
    QP = np.swapaxes(PQ, 2, 3)
    QPm = np.swapaxes(PQm, 2, 3)
    QPd = [np.swapaxes(x, 2, 3) for x in PQd]
    for j in range(3):
        for a in range(2):
            row = tcol(j, a)
            for b in range(2):
                C[:, row, Ls[2 * a + b]] += -nrm[:, j, b, None, None] * QP[:, j]
            C[:, row, us[a]] += QPm[:, j] + a1 * QP[:, j]
            C[:, row, p] += nrm[:, j, a, None, None] * QP[:, j]
            for c in range(2):
                C[:, row, bs[c]] += 0.5 * kap * tan[:, j, c, None, None] * QPd[a][:, j]
            D[:, row, tcol(j, a)] += -a1 * QQ[:, j]
            D[:, row, tcol(j, 2)] += 0.5 * kap * sg[:, j, None, None] * QQd[a][:, j]
        row = tcol(j, 2)
        s = sg[:, j, None, None]
        C[:, row, H] += -s * QP[:, j]
        for b in range(2):
            C[:, row, us[b]] += 0.5 * kap * s * QPd[b][:, j]
            D[:, row, tcol(j, b)] += 0.5 * kap * s * QQd[b][:, j]
            C[:, row, bs[b]] += a2 * s * tan[:, j, b, None, None] * QP[:, j]
        D[:, row, tcol(j, 2)] += -a2 * QQ[:, j]
        row = tcol(j, 3)
        for a in range(2):
            C[:, row, bs[a]] += nrm[:, j, a, None, None] * QP[:, j]
        C[:, row, r] += a3 * QP[:, j]
        D[:, row, tcol(j, 3)] += -a3 * QQ[:, j]

    ones = np.einsum("ejq,ejqm->ejm", et.w, et.psi)           # <psi_m, 1>_e
    flux_row = np.zeros((E, t))
    for j in range(3):
        for a in range(2):
            flux_row[:, tcol(j, a)] = nrm[:, j, a, None] * ones[:, j]

    return CondensedElements(space, coeffs, A, B, cvec, F, C, D, aug, flux_row, degrees)


def _solve_chunk(A, rhs):
    try:
        return np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise LocalSolverError("singular local operator: check the alpha conditions "
                               "and element geometry") from exc


def condense(ce: CondensedElements, threads: int = 1, chunk: int = 512) -> CondensedElements:
    """Eliminate the local unknowns: fills ``Z, z, z0, K, k_rho, r0``."""
    rhs = np.concatenate([ce.B, ce.c[..., None], ce.F[..., None]], axis=2)
    E = ce.n_elements
    parts = [slice(s, min(s + chunk, E)) for s in range(0, E, chunk)]
    if threads > 1 and len(parts) > 1:
        with ThreadPoolExecutor(threads) as pool:
            sols = list(pool.map(lambda sl: _solve_chunk(ce.A[sl], rhs[sl]), parts))
    else:
        sols = [_solve_chunk(ce.A[sl], rhs[sl]) for sl in parts]
    X = np.concatenate(sols, axis=0)
    if not np.all(np.isfinite(X)):
        raise LocalSolverError("non-finite local solution; local operator is singular")
    t = ce.B.shape[2]
    ce.Z, ce.z, ce.z0 = X[:, :, :t], X[:, :, t], X[:, :, t + 1]
    ce.K = ce.C @ ce.Z + ce.D
    ce.k_rho = np.einsum("etn,en->et", ce.C, ce.z)
    ce.r0 = np.einsum("etn,en->et", ce.C, ce.z0)
    return ce


def recover_local(ce: CondensedElements, lam: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Local coefficients ``(E, 11 N)`` from element trace data ``lam (E, t)`` and ``rho (E,)``."""
    if ce.Z is None:
        condense(ce)
    return np.einsum("ent,et->en", ce.Z, lam) + ce.z * rho[:, None] + ce.z0


def local_residual(ce: CondensedElements, x, lam, rho) -> np.ndarray:
    """Relative residual of the six local equations per element."""
    res = np.einsum("enm,em->en", ce.A, x) - np.einsum("ent,et->en", ce.B, lam) \
        - ce.c * rho[:, None] - ce.F
    scale = (np.abs(np.einsum("enm,em->en", ce.A, x)).max(axis=1)
             + np.abs(ce.F).max(axis=1) + 1e-300)
    return np.abs(res).max(axis=1) / scale


def conservation_residual(ce: CondensedElements, x, lam) -> np.ndarray:
    """Single-element flux moments ``(E, 3, 4, k+1)`` of F2.n, F5.n.t_e and F6.n on each edge."""
    R = np.einsum("etn,en->et", ce.C, x) + np.einsum("ets,es->et", ce.D, lam)
    return R.reshape(len(R), 3, 4, -1)
