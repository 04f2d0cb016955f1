"""Interface Riemann solutions for the linearized shallow water system.

Forward system (per sweep direction):   q_t + A(x) q_x = 0,
A = [[0, 1], [g*h, 0]], eigenvectors [1, -c] and [1, +c], c = sqrt(g*h_face).

Adjoint system (conservative form):     p_t + (A^T(x) p)_x = 0,
flux A^T p = [g*h*p2, p1], eigenvectors [-c, 1] and [+c, 1].  Jumps in h
across the face enter the flux jump directly, so the decomposition is done
f-wave style on delta(A^T p).

The "reversed" kernel solves p_t - (A^T p)_x = 0 forward in time, which is
the adjoint equation after the substitution t -> t_f - t.

A face with one dry side is a reflecting wall: the dry state is replaced by
the wet state mirrored with negated normal momentum (forward) or negated
normal velocity component (adjoint).  Both sides dry gives zero output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FORWARD = "forward"
ADJOINT = "adjoint"
ADJOINT_REVERSED = "adjoint_reversed"


@dataclass(frozen=True)
class RiemannInput:
    q_left: np.ndarray
    q_right: np.ndarray
    hbar_left: float
    hbar_right: float
    g: float = 9.81


@dataclass(frozen=True)
class RiemannOutput:
    speeds: np.ndarray        # (2,) ordered left-going, right-going
    waves: np.ndarray         # (2, 2) wave p is waves[p]
    amdq: np.ndarray          # left-going fluctuation
    apdq: np.ndarray          # right-going fluctuation
    fwave: bool


def _effective_states(a_l, b_l, a_r, b_r, hl, hr):
    """Mirror the wet state across wet/dry faces; zero depth where both dry."""
    hl = np.asarray(hl, dtype=float)
    hr = np.asarray(hr, dtype=float)
    if np.any(hl < 0) or np.any(hr < 0):
        raise ValueError("negative mean depth")
    wet_l = hl > 0
    wet_r = hr > 0
    l_dry = ~wet_l & wet_r
    r_dry = wet_l & ~wet_r
    a_le = np.where(l_dry, a_r, a_l)
    b_le = np.where(l_dry, -b_r, b_l)
    h_le = np.where(l_dry, hr, hl)
    a_re = np.where(r_dry, a_l, a_r)
    b_re = np.where(r_dry, -b_l, b_r)
    h_re = np.where(r_dry, hl, hr)
    active = wet_l | wet_r
    return a_le, b_le, h_le, a_re, b_re, h_re, active


def face_waves(a_l, b_l, a_r, b_r, hl, hr, g, kind):
    """Vectorized two-wave decomposition at faces.

    Inputs are broadcastable arrays of the two coupled components on each
    side ((a, b) = (eta, normal momentum) forward, (eta_hat, normal velocity
    component) adjoint) plus cell mean depths.  Returns
    (speeds[2, ...], waves[2, 2, ...], amdq[2, ...], apdq[2, ...], is_fwave).
    """
    a_le, b_le, h_le, a_re, b_re, h_re, active = _effective_states(
        a_l, b_l, a_r, b_r, hl, hr)
    # one-sided speeds: left medium carries the left-going wave, right medium
    # the right-going one, so a depth jump reflects/transmits analytically
    c_l = np.sqrt(g * h_le)
    c_r = np.sqrt(g * h_re)
    inv = np.where(active, 1.0 / np.maximum(c_l + c_r, 1e-300), 0.0)

    if kind == FORWARD:
        da = a_re - a_le
        db = b_re - b_le
        alpha1 = (c_r * da - db) * inv
        alpha2 = (c_l * da + db) * inv
        w1 = np.stack([alpha1, -c_l * alpha1])
        w2 = np.stack([alpha2, c_r * alpha2])
        amdq = -c_l * w1
        apdq = c_r * w2
        is_fwave = False
    elif kind in (ADJOINT, ADJOINT_REVERSED):
        sign = 1.0 if kind == ADJOINT else -1.0
        df1 = g * h_re * b_re - g * h_le * b_le
        df2 = a_re - a_le
        # f-wave split of the (signed) flux jump onto the eigenvectors
        # [-sign*c_l, 1] (left-going) and [sign*c_r, 1] (right-going)
        beta1 = (sign * c_r * df2 - df1) * inv
        beta2 = (sign * c_l * df2 + df1) * inv
        w1 = np.stack([-sign * c_l * beta1, beta1])
        w2 = np.stack([sign * c_r * beta2, beta2])
        amdq = w1
        apdq = w2
        is_fwave = True
    else:
        raise ValueError(f"unknown kernel kind {kind!r}")

    speeds = np.stack([-c_l, c_r])
    waves = np.stack([w1, w2])
    amdq = np.where(active, amdq, 0.0)
    apdq = np.where(active, apdq, 0.0)
    waves = np.where(active, waves, 0.0)
    speeds = np.where(active, speeds, 0.0)
    return speeds, waves, amdq, apdq, is_fwave


def _solve_rp(rin: RiemannInput, kind: str) -> RiemannOutput:
    ql = np.asarray(rin.q_left, dtype=float)
    qr = np.asarray(rin.q_right, dtype=float)
    speeds, waves, amdq, apdq, is_fwave = face_waves(
        ql[0], ql[1], qr[0], qr[1],
        rin.hbar_left, rin.hbar_right, rin.g, kind)
    return RiemannOutput(speeds=speeds, waves=waves,
                         amdq=amdq, apdq=apdq, fwave=is_fwave)


def forward_rp(rin: RiemannInput) -> RiemannOutput:
    """Single-face forward Riemann solution for the (eta, mu) pair."""
    return _solve_rp(rin, FORWARD)


def adjoint_rp(rin: RiemannInput) -> RiemannOutput:
    """Single-face adjoint (conservative form) Riemann solution."""
    return _solve_rp(rin, ADJOINT)
