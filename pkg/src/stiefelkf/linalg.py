"""Dense small-matrix kernels: matrix exponential, polar factor, thin QR.

Public functions operate on single matrices and validate their inputs.
The ``_*_many`` variants are vectorised over a leading batch axis and skip
validation; they are the workhorses of the Monte Carlo routines.  Batched
and single-matrix code paths share the same algorithms so results agree.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .exceptions import DimensionError, SingularProjectionError
from .validation import as_matrix, check_square

POLAR_RTOL = 1e-12


def matrix_exp(a) -> np.ndarray:
    """Matrix exponential of a square matrix (scaling and squaring).

    Accurate to ~1e-12 relative Frobenius error for ||a||_F up to ~50; a
    truncated power series would not be.
    """
    a = check_square(a, "a")
    return scipy.linalg.expm(a)


def polar_orthogonal(x, rtol: float = POLAR_RTOL) -> np.ndarray:
    """Orthogonal factor Q S* of the thin SVD x = Q D S*.

    This is the closest matrix with orthonormal columns in Frobenius norm.
    Raises :class:`SingularProjectionError` when x is numerically rank
    deficient (the projection is undefined at the cut locus).
    """
    x = as_matrix(x, "x")
    if x.shape[0] < x.shape[1]:
        raise DimensionError(f"x needs at least as many rows as columns, got {x.shape}")
    u, s, vt = np.linalg.svd(x, full_matrices=False)
    if s[-1] <= rtol * s[0]:
        raise SingularProjectionError(
            f"matrix is rank deficient (sigma_min/sigma_max = {s[-1] / s[0]:.3e})"
        )
    return u @ vt


def qr_thin(x) -> tuple[np.ndarray, np.ndarray]:
    """Thin QR factorisation with the R diagonal made non-negative.

    The sign convention pins down the otherwise arbitrary per-column signs,
    which keeps downstream results reproducible.  Rank-deficient input is
    allowed (R may then carry zero diagonal entries).
    """
    x = as_matrix(x, "x")
    if x.shape[0] < x.shape[1]:
        raise DimensionError(f"x needs at least as many rows as columns, got {x.shape}")
    q, r = np.linalg.qr(x)
    signs = np.where(np.diag(r) < 0.0, -1.0, 1.0)
    return q * signs, r * signs[:, None]


# ---------------------------------------------------------------------------
# Batched kernels (leading batch axis, no input validation).
# ---------------------------------------------------------------------------

def _polar_many(x: np.ndarray, rtol: float = POLAR_RTOL) -> np.ndarray:
    """Orthogonal polar factors of a stack of full-rank matrices."""
    u, s, vt = np.linalg.svd(x, full_matrices=False)
    if np.any(s[..., -1] <= rtol * s[..., 0]):
        raise SingularProjectionError("batch contains a rank-deficient matrix")
    return u @ vt


def _qr_pos_many(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Thin QR with non-negative R diagonal, over a leading batch axis."""
    q, r = np.linalg.qr(x)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    signs = np.where(d < 0.0, -1.0, 1.0)
    return q * signs[..., None, :], r * signs[..., :, None]


def _expm_skew_many(a: np.ndarray) -> np.ndarray:
    """Exponential of skew-symmetric matrices via scaling and squaring.

    Each item is scaled by a power of two chosen from its own norm, so the
    result does not depend on what else is in the batch.  2-by-2 blocks use
    the closed-form rotation.
    """
    if a.shape[-1] == 2:
        t = a[..., 0, 1]
        c, s = np.cos(t), np.sin(t)
        out = np.empty(a.shape)
        out[..., 0, 0] = c
        out[..., 0, 1] = s
        out[..., 1, 0] = -s
        out[..., 1, 1] = c
        return out
    norms = np.sqrt(np.sum(a * a, axis=(-2, -1)))
    # target scaled norm <= 0.25, Taylor order 12 => error ~ 1e-17
    n_sq = np.maximum(0, np.ceil(np.log2(np.maximum(norms, 1e-300) / 0.25))).astype(int)
    scale = np.exp2(-n_sq)
    w = a * scale[..., None, None]
    m = a.shape[-1]
    eye = np.broadcast_to(np.eye(m), w.shape)
    term = eye.copy()
    out = eye.copy()
    for j in range(1, 13):
        term = term @ w / j
        out = out + term
    remaining = n_sq.copy()
    while np.any(remaining > 0):
        mask = remaining > 0
        out[mask] = out[mask] @ out[mask]
        remaining[mask] -= 1
    return out


# arcsin(x) = sum_j c_j x^(2j+1), c_j = binom(2j, j) / (4^j (2j+1))
_ARCSIN_COEFF = []
_c = 1.0
for _j in range(17):
    _ARCSIN_COEFF.append(_c / (2 * _j + 1))
    _c *= (2 * _j + 1) / (2 * _j + 2)
_ARCSIN_COEFF = np.array(_ARCSIN_COEFF)


class PrincipalLogError(SingularProjectionError):
    """Rotation has an eigenvalue at -1: principal logarithm undefined."""


def _polar_square_ns(b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orthogonal polar factor of square matrices via Newton-Schulz.

    Pure batched matrix products (much faster than batched SVD for the tiny
    matrices used here).  Items whose smallest singular value is ~0 cannot
    converge in the fixed iteration budget and are flagged, not raised.
    """
    m = b.shape[-1]
    eye = np.eye(m)
    scale = np.sqrt(np.sum(b * b, axis=(-2, -1), keepdims=True))  # >= sigma_max
    x = b / np.maximum(scale, 1e-300)
    for _ in range(24):
        xtx = np.swapaxes(x, -1, -2) @ x
        x = 0.5 * (x @ (3.0 * eye - xtx))
    defect = np.sqrt(np.sum(
        (np.swapaxes(x, -1, -2) @ x - eye) ** 2, axis=(-2, -1)
    ))
    return x, defect < 1e-9


# Quaternion left/right multiplication matrices L(e_a), R(e_b): every
# rotation in SO(4) is x -> p x conj(q) for unit quaternions p, q, and
# {L(e_a) R(conj(e_b))} is an orthogonal basis of R^{4x4} with norm 2, so
# the coefficient matrix of a rotation in that basis is exactly p q^T.
def _quat_mult_bases() -> tuple[np.ndarray, np.ndarray]:
    lb = np.zeros((4, 4, 4))
    rb = np.zeros((4, 4, 4))
    lb[0] = np.eye(4)
    lb[1] = np.array([[0, -1, 0, 0], [1, 0, 0, 0], [0, 0, 0, -1], [0, 0, 1, 0]], dtype=float)
    lb[2] = np.array([[0, 0, -1, 0], [0, 0, 0, 1], [1, 0, 0, 0], [0, -1, 0, 0]], dtype=float)
    lb[3] = np.array([[0, 0, 0, -1], [0, 0, -1, 0], [0, 1, 0, 0], [1, 0, 0, 0]], dtype=float)
    rb[0] = np.eye(4)
    rb[1] = np.array([[0, -1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 1], [0, 0, -1, 0]], dtype=float)
    rb[2] = np.array([[0, 0, -1, 0], [0, 0, 0, -1], [1, 0, 0, 0], [0, 1, 0, 0]], dtype=float)
    rb[3] = np.array([[0, 0, 0, -1], [0, 0, 1, 0], [0, -1, 0, 0], [1, 0, 0, 0]], dtype=float)
    return lb, rb


_QL, _QR = _quat_mult_bases()
# basis B_ab = L(e_a) @ R(conj(e_b)); conj flips the sign of imaginary parts
_QR_CONJ = np.concatenate([_QR[:1], -_QR[1:]], axis=0)
_QBASIS = np.einsum("aij,bjl->abil", _QL, _QR_CONJ)


def _logm_so4_quat(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form principal log of SO(4) via the double-quaternion split."""
    coeff = 0.25 * np.einsum("abij,nij->nab", _QBASIS, v)  # = p q^T per item
    # extract the rank-1 factors: strongest column gives p, then q = M^T p
    col_n = np.linalg.norm(coeff, axis=1)
    best = np.argmax(col_n, axis=1)
    rows = np.arange(v.shape[0])
    p = coeff[rows, :, best]
    p = p / np.linalg.norm(p, axis=1, keepdims=True)
    q = np.einsum("nab,na->nb", coeff, p)
    q = q / np.linalg.norm(q, axis=1, keepdims=True)
    # choose the lift with alpha + beta <= pi so the log is principal
    alpha = np.arccos(np.clip(p[:, 0], -1.0, 1.0))
    beta = np.arccos(np.clip(q[:, 0], -1.0, 1.0))
    flip = alpha + beta > np.pi
    p[flip] *= -1.0
    q[flip] *= -1.0
    alpha = np.where(flip, np.pi - alpha, alpha)
    beta = np.where(flip, np.pi - beta, beta)
    ok = alpha + beta <= np.pi - 1e-9
    su = alpha / np.maximum(np.sin(alpha), 1e-300)  # alpha/sin(alpha) -> 1 at 0
    sv = beta / np.maximum(np.sin(beta), 1e-300)
    np.putmask(su, alpha < 1e-8, 1.0)
    np.putmask(sv, beta < 1e-8, 1.0)
    u = p[:, 1:] * su[:, None]
    w = q[:, 1:] * sv[:, None]
    # d/dt [L(exp(tu)) R(conj(exp(tw)))] at 0 = L(u) - R(w)
    out = (np.einsum("aij,na->nij", _QL[1:], u)
           - np.einsum("aij,na->nij", _QR[1:], w))
    return out, ok


def _logm_so_many(v: np.ndarray, allow_fail: bool = False):
    """Principal logarithm of special-orthogonal matrices (skew output).

    4-by-4 rotations use the closed-form double-quaternion factorisation.
    Otherwise: three orthogonal square roots (polar factor of I + V halves
    every rotation angle) bring all angles below pi/8; the skew part then
    equals sin of the logarithm and an arcsin series recovers it.  Requires
    every rotation angle strictly below pi; with ``allow_fail`` items at
    the branch cut are flagged in a returned mask instead of raising.
    """
    m = v.shape[-1]
    if m == 4:
        out, ok = _logm_so4_quat(v)
        if not allow_fail:
            if not ok.all():
                raise PrincipalLogError("rotation angle too close to pi")
            return out
        return out, ok
    eye = np.eye(m)
    w = v
    ok = np.ones(v.shape[:-2], dtype=bool)
    for _ in range(3):
        w, conv = _polar_square_ns(eye + w)
        bad = ~conv
        if np.any(bad):
            # angle at/near pi: I + V is (nearly) singular
            if not allow_fail:
                raise PrincipalLogError("rotation angle too close to pi")
            ok &= conv
            w[bad] = eye
    skew = 0.5 * (w - np.swapaxes(w, -1, -2))
    # skew has eigenvalues i sin(theta); run the arcsin series in -skew^2
    # (eigenvalue sin(theta)^2) so the output eigenvalues are i theta.
    p = -(skew @ skew)
    poly = _ARCSIN_COEFF[-1] * np.broadcast_to(eye, skew.shape).copy()
    for c in _ARCSIN_COEFF[-2::-1]:
        poly = c * eye + p @ poly
    out = 8.0 * (skew @ poly)
    if allow_fail:
        return out, ok
    return out
