"""Primal-dual interior-point method on the homogeneous self-dual embedding.

Nesterov-Todd scaling for PSD blocks and the nonnegative orthant, Mehrotra
predictor-corrector steps. Every quantity of a Newton step is formed in the
scaled space, where primal and dual iterates both equal ``diag(lambda)``.
Blocks of one dimension are processed as stacked arrays.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .standard import StandardForm

STEP = 0.99


@dataclass
class IpmResult:
    status: str
    X: list  # per group, (k, n, n)
    x: np.ndarray
    y: np.ndarray
    S: list
    s: np.ndarray
    iterations: int
    pcost: float
    dcost: float
    pres: float
    dres: float
    gap: float


def _tr(a):
    return np.swapaxes(a, -1, -2)


def _symm(a):
    return 0.5 * (a + _tr(a))


class _Scaled:
    """Row/objective equilibrated copy of the standard form."""

    def __init__(self, sf: StandardForm):
        m = sf.m
        sq = np.sum(sf.a_lin**2, axis=1) if sf.a_lin.size else np.zeros(m)
        for g in sf.groups:
            if g.F.shape[0]:
                fn = np.sum(g.F**2, axis=(1, 2))
                sq = sq + (g.coef**2) @ fn
        rnorm = np.sqrt(sq)
        rnorm[rnorm == 0.0] = 1.0
        self.row_scale = 1.0 / rnorm
        cmax = max(
            [float(np.max(np.abs(g.C), initial=0.0)) for g in sf.groups]
            + [float(np.max(np.abs(sf.c_lin), initial=0.0))]
        )
        self.c_scale = cmax if cmax > 0.0 else 1.0
        self.b = sf.b * self.row_scale
        self.groups = []
        for g in sf.groups:
            self.groups.append(
                (g.n, len(g.names), g.C / self.c_scale, g.F, g.owner, g.coef * self.row_scale[:, None])
            )
        self.a_lin = sf.a_lin * self.row_scale[:, None]
        self.c_lin = sf.c_lin / self.c_scale
        self.m = m
        self.degree = sum(n * k for n, k, *_ in self.groups) + self.a_lin.shape[1]


def _apply_a(sc: _Scaled, X, x):
    out = sc.a_lin @ x
    for (n, k, C, F, owner, coef), Xg in zip(sc.groups, X):
        if F.shape[0]:
            out = out + coef @ np.einsum("uab,uab->u", F, Xg[owner])
    return out


def _apply_at(sc: _Scaled, y):
    out = []
    for n, k, C, F, owner, coef in sc.groups:
        acc = np.zeros((k, n, n))
        if F.shape[0]:
            np.add.at(acc, owner, (coef.T @ y)[:, None, None] * F)
        out.append(acc)
    return out, sc.a_lin.T @ y


def _right_singular(a):
    """Singular values and right singular vectors of a stack of square matrices.

    LAPACK's divide-and-conquer SVD occasionally fails to converge on
    ill-conditioned input near the optimum; those matrices are retried
    through the transpose and finally through ``eigh(a^T a)``.
    """
    try:
        _, d, vt = np.linalg.svd(a)
        return d, _tr(vt)
    except np.linalg.LinAlgError:
        pass
    d = np.empty(a.shape[:-1])
    v = np.empty_like(a)
    for i, ai in enumerate(a):
        try:
            u, di, _ = np.linalg.svd(ai.T)
            d[i], v[i] = di, u
        except np.linalg.LinAlgError:
            w, q = np.linalg.eigh(ai.T @ ai)
            d[i], v[i] = np.sqrt(np.maximum(w[::-1], 0.0)), q[:, ::-1]
    return d, v


def _max_step(lam_g, d_g, lam_l, d_l):
    """Largest alpha keeping diag(lambda) + alpha * d PSD (and lambda + alpha d_l >= 0)."""
    amax = np.inf
    for lam, d in zip(lam_g, d_g):
        r = 1.0 / np.sqrt(lam)
        w = np.linalg.eigvalsh(r[:, :, None] * d * r[:, None, :])
        mn = float(w.min(initial=np.inf))
        if mn < 0.0:
            amax = min(amax, -1.0 / mn)
    if d_l.size:
        neg = d_l < 0.0
        if np.any(neg):
            amax = min(amax, float(np.min(-lam_l[neg] / d_l[neg])))
    return amax


def hsd_solve(sf: StandardForm, gaptol: float = 1e-7, feastol: float = 1e-8, max_iter: int = 200) -> IpmResult:
    sc = _Scaled(sf)
    m = sc.m
    b = sc.b
    X = [np.broadcast_to(np.eye(n), (k, n, n)).copy() for n, k, *_ in sc.groups]
    S = [x.copy() for x in X]
    nl = sc.a_lin.shape[1]
    x = np.ones(nl)
    s = np.ones(nl)
    y = np.zeros(m)
    tau = kappa = 1.0

    bnorm = max(1.0, float(np.linalg.norm(b)))
    cnorm = max(
        1.0,
        float(np.sqrt(sum(np.sum(C**2) for _, _, C, *_ in sc.groups) + np.sum(sc.c_lin**2))),
    )
    status = "max_iter"
    pres = dres = gap = np.inf
    pcost = dcost = np.nan
    it = 0
    for it in range(max_iter + 1):
        # residuals
        ax = _apply_a(sc, X, x)
        aty, aty_l = _apply_at(sc, y)
        r_p = b * tau - ax
        r_d = [g[2] * tau - a - Sg for g, a, Sg in zip(sc.groups, aty, S)]
        r_dl = sc.c_lin * tau - aty_l - s
        pobj = sum(float(np.sum(g[2] * Xg)) for g, Xg in zip(sc.groups, X)) + float(sc.c_lin @ x)
        dobj = float(b @ y)
        r_g = kappa + pobj - dobj
        xs = sum(float(np.sum(Xg * Sg)) for Xg, Sg in zip(X, S)) + float(x @ s)
        mu = (xs + tau * kappa) / (sc.degree + 1)

        rd_norm = float(np.sqrt(sum(np.sum(r**2) for r in r_d) + np.sum(r_dl**2)))
        pres = float(np.linalg.norm(r_p)) / tau / bnorm
        dres = rd_norm / tau / cnorm
        pcost, dcost = pobj / tau, dobj / tau
        gap = xs / tau**2
        scale_obj = 1.0 + min(abs(pcost), abs(dcost))
        if pres <= feastol and dres <= feastol and gap <= gaptol * scale_obj and abs(pcost - dcost) <= gaptol * scale_obj:
            status = "optimal"
            break
        if dobj > 0.0:
            cert = [g[2] * tau - r for g, r in zip(sc.groups, r_d)]
            cert_n = float(np.sqrt(sum(np.sum(c**2) for c in cert) + np.sum((sc.c_lin * tau - r_dl) ** 2)))
            if cert_n / dobj <= feastol:
                status = "infeasible"
                break
        if pobj < 0.0:
            if float(np.linalg.norm(b * tau - r_p)) / -pobj <= feastol:
                status = "unbounded"
                break
        if it == max_iter:
            break

        # Nesterov-Todd scaling points
        try:
            G, Ginv_t, lam = [], [], []
            for Xg, Sg in zip(X, S):
                L = np.linalg.cholesky(Xg)
                R = np.linalg.cholesky(Sg)
                d, v = _right_singular(_tr(R) @ L)
                Linv = np.linalg.inv(L)
                G.append(L @ v / np.sqrt(d)[:, None, :])
                Ginv_t.append(_tr(Linv) @ v * np.sqrt(d)[:, None, :])
                lam.append(d)
        except np.linalg.LinAlgError:
            status = "numerical_error"
            break
        w_l = np.sqrt(x / s)
        lam_l = np.sqrt(x * s)

        Ft, Ct, rdt = [], [], []
        M = np.zeros((m, m))
        p = np.zeros(m)
        ct_sq = 0.0
        for (n, k, C, F, owner, coef), Gg, r in zip(sc.groups, G, r_d):
            ctg = _tr(Gg) @ C @ Gg
            Ct.append(ctg)
            rdt.append(_tr(Gg) @ r @ Gg)
            ct_sq += float(np.sum(ctg**2))
            if F.shape[0]:
                Go = Gg[owner]
                ft = _tr(Go) @ F @ Go
                flat = ft.reshape(ft.shape[0], -1)
                gram = flat @ flat.T
                gram *= owner[:, None] == owner[None, :]
                M += coef @ gram @ coef.T
                p += coef @ np.einsum("uab,uab->u", ft, ctg[owner])
            else:
                ft = F
            Ft.append(ft)
        ft_l = sc.a_lin * w_l
        ct_l = sc.c_lin * w_l
        rdt_l = r_dl * w_l
        M += ft_l @ ft_l.T
        p += ft_l @ ct_l
        ct_sq += float(ct_l @ ct_l)

        def msolve(rhs):
            if m == 0:
                return rhs
            try:
                return np.linalg.solve(M, rhs)
            except np.linalg.LinAlgError:
                return np.linalg.lstsq(M, rhs, rcond=None)[0]

        v_sol = msolve(b + p)
        bp = b - p
        denom_base = float(bp @ v_sol) + ct_sq + kappa / tau

        def direction(rc, rc_l, r_tau, eta):
            Z = [c - eta * r for c, r in zip(rc, rdt)]
            z_l = rc_l - eta * rdt_l
            az = ft_l @ z_l
            cf = float(ct_l @ z_l)
            for (n, k, C, F, owner, coef), ft, zg, ctg in zip(sc.groups, Ft, Z, Ct):
                if F.shape[0]:
                    az = az + coef @ np.einsum("uab,uab->u", ft, zg[owner])
                cf += float(np.sum(ctg * zg))
            u_sol = msolve(eta * r_p - az)
            dtau = (eta * r_g + r_tau / tau + cf - float(bp @ u_sol)) / denom_base
            dy = u_sol + dtau * v_sol
            dx, ds = [], []
            for (n, k, C, F, owner, coef), ft, zg, ctg, rg in zip(sc.groups, Ft, Z, Ct, rdt):
                at = np.zeros((k, n, n))
                if F.shape[0]:
                    np.add.at(at, owner, (coef.T @ dy)[:, None, None] * ft)
                dx.append(zg + at - dtau * ctg)
                ds.append(-at + dtau * ctg + eta * rg)
            at_l = ft_l.T @ dy
            dx_l = z_l + at_l - dtau * ct_l
            ds_l = -at_l + dtau * ct_l + eta * rdt_l
            dkappa = (r_tau - kappa * dtau) / tau
            return dx, ds, dx_l, ds_l, dy, dtau, dkappa

        def step_to_boundary(dx, ds, dx_l, ds_l, dtau, dkappa):
            a = min(_max_step(lam, dx, lam_l, dx_l), _max_step(lam, ds, lam_l, ds_l))
            if dtau < 0.0:
                a = min(a, -tau / dtau)
            if dkappa < 0.0:
                a = min(a, -kappa / dkappa)
            return a

        # predictor
        rc_aff = [-np.einsum("kn,nm->knm", lg, np.eye(lg.shape[1])) for lg in lam]
        aff = direction(rc_aff, -lam_l, -tau * kappa, 1.0)
        a_aff = min(1.0, step_to_boundary(aff[0], aff[1], aff[2], aff[3], aff[5], aff[6]))
        sigma = (1.0 - a_aff) ** 3
        eta = 1.0 - sigma

        # corrector
        rc = []
        for lg, dxa, dsa in zip(lam, aff[0], aff[1]):
            n = lg.shape[1]
            target = -_symm(dxa @ dsa)
            idx = np.arange(n)
            target[:, idx, idx] += sigma * mu - lg**2
            rc.append(2.0 * target / (lg[:, :, None] + lg[:, None, :]))
        rc_l = (sigma * mu - lam_l**2 - aff[2] * aff[3]) / lam_l if nl else np.zeros(0)
        r_tau = sigma * mu - tau * kappa - aff[5] * aff[6]
        dx, ds, dx_l, ds_l, dy, dtau, dkappa = direction(rc, rc_l, r_tau, eta)
        alpha = min(1.0, STEP * step_to_boundary(dx, ds, dx_l, ds_l, dtau, dkappa))

        for i, (Gg, Gi) in enumerate(zip(G, Ginv_t)):
            X[i] = _symm(X[i] + alpha * (Gg @ dx[i] @ _tr(Gg)))
            S[i] = _symm(S[i] + alpha * (Gi @ ds[i] @ _tr(Gi)))
        x = x + alpha * w_l * dx_l
        s = s + alpha * ds_l / w_l
        y = y + alpha * dy
        tau += alpha * dtau
        kappa += alpha * dkappa
        if not (np.isfinite(tau) and tau > 0.0 and kappa > 0.0) or alpha < 1e-12:
            status = "numerical_error"
            break

    # back to the unscaled problem
    if status in ("optimal", "max_iter", "numerical_error"):
        div = tau
    else:
        div = 1.0  # certificates are returned as rays
    yo = y * sc.row_scale * sc.c_scale / div
    return IpmResult(
        status=status,
        X=[Xg / div for Xg in X],
        x=x / div,
        y=yo,
        S=[Sg * sc.c_scale / div for Sg in S],
        s=s * sc.c_scale / div,
        iterations=it,
        pcost=pcost * sc.c_scale if np.isfinite(pcost) else pcost,
        dcost=dcost * sc.c_scale if np.isfinite(dcost) else dcost,
        pres=pres,
        dres=dres,
        gap=gap * sc.c_scale,
    )
