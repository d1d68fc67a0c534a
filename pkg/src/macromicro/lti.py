"""Continuous/discrete LTI models: transfer functions, state space realizations,
interconnection, frequency response, H-infinity norm and Tustin discretization.

All models are immutable. Coefficient lists are in descending powers of ``s``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg


class LTIError(ValueError):
    """Raised for ill-posed LTI operations (improper models, algebraic loops, ...)."""


def _trim(c: Sequence[float]) -> np.ndarray:
    c = np.atleast_1d(np.asarray(c, dtype=float))
    nz = np.flatnonzero(c)
    if nz.size == 0:
        return np.zeros(1)
    return c[nz[0]:]


@dataclass(frozen=True)
class TransferFunction:
    """SISO rational model ``num(s)/den(s)``."""

    num: np.ndarray
    den: np.ndarray

    def __init__(self, num: Sequence[float], den: Sequence[float]):
        den = _trim(den)
        if not np.any(den):
            raise LTIError("denominator must have a nonzero coefficient")
        object.__setattr__(self, "num", _trim(num))
        object.__setattr__(self, "den", den)

    @property
    def is_proper(self) -> bool:
        return len(self.num) <= len(self.den)

    @property
    def order(self) -> int:
        return len(self.den) - 1

    def __call__(self, s):
        return np.polyval(self.num, s) / np.polyval(self.den, s)

    def dc_gain(self) -> float:
        return float(self.num[-1] / self.den[-1])

    def poles(self) -> np.ndarray:
        return np.roots(self.den)

    def zeros(self) -> np.ndarray:
        return np.roots(self.num)

    def __mul__(self, other: "TransferFunction | float") -> "TransferFunction":
        if isinstance(other, TransferFunction):
            return TransferFunction(np.polymul(self.num, other.num),
                                    np.polymul(self.den, other.den))
        return TransferFunction(self.num * float(other), self.den)

    __rmul__ = __mul__

    def freq_response(self, omega) -> np.ndarray:
        """Evaluate ``H(j*omega)`` directly from the polynomials."""
        return self(1j * np.asarray(omega, dtype=float))


@dataclass(frozen=True)
class StateSpace:
    """``x' = Ax + Bu, y = Cx + Du``. ``dt`` is None for continuous time."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    dt: float | None = field(default=None)

    def __init__(self, A, B, C, D, dt: float | None = None):
        D = np.atleast_2d(np.asarray(D, dtype=float))
        p, m = D.shape
        A = np.atleast_2d(np.asarray(A, dtype=float)) if np.size(A) else np.zeros((0, 0))
        n = A.shape[0]
        B = np.asarray(B, dtype=float).reshape(n, m)
        C = np.asarray(C, dtype=float).reshape(p, n)
        if A.shape != (n, n):
            raise LTIError(f"A must be square, got {A.shape}")
        for arr in (A, B, C, D):
            arr.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "dt", dt)

    @classmethod
    def gain(cls, k, dt: float | None = None) -> "StateSpace":
        k = np.atleast_2d(np.asarray(k, dtype=float))
        return cls(np.zeros((0, 0)), np.zeros((0, k.shape[1])), np.zeros((k.shape[0], 0)), k, dt)

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.D.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.D.shape[0]

    def poles(self) -> np.ndarray:
        if self.n_states == 0:
            return np.zeros(0, dtype=complex)
        return np.linalg.eigvals(self.A)

    def is_stable(self) -> bool:
        p = self.poles()
        if self.dt is None:
            # poles numerically on the imaginary axis count as unstable
            tol = 1e-10 * max(1.0, float(np.max(np.abs(p), initial=0.0)))
            return bool(np.all(p.real < -tol))
        return bool(np.all(np.abs(p) < 1))

    def dc_gain(self) -> np.ndarray:
        """Static gain; continuous: ``D - C A^-1 B``, discrete: value at z=1."""
        if self.n_states == 0:
            return self.D.copy()
        n = self.n_states
        M = -self.A if self.dt is None else np.eye(n) - self.A
        if np.linalg.cond(M) > 1e14:
            raise LTIError("DC gain undefined: pole at s=0")
        return self.C @ np.linalg.solve(M, self.B) + self.D

    def subsystem(self, outputs=None, inputs=None) -> "StateSpace":
        outputs = slice(None) if outputs is None else np.atleast_1d(outputs)
        inputs = slice(None) if inputs is None else np.atleast_1d(inputs)
        return StateSpace(self.A, self.B[:, inputs], self.C[outputs, :],
                          self.D[outputs][:, inputs], self.dt)


@dataclass(frozen=True)
class FrequencyResponse:
    """Complex response ``values[k, p, m]`` at ``frequencies[k]`` (rad/s)."""

    frequencies: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.frequencies, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        if v.ndim == 1:
            v = v[:, None, None]
        if len(w) != v.shape[0]:
            raise LTIError("frequencies and values differ in length")
        if np.any(w <= 0) or np.any(np.diff(w) <= 0):
            raise LTIError("frequencies must be positive and strictly increasing")
        object.__setattr__(self, "frequencies", w)
        object.__setattr__(self, "values", v)

    def siso(self, out: int = 0, inp: int = 0) -> np.ndarray:
        return self.values[:, out, inp]

    def magnitude(self, out: int = 0, inp: int = 0) -> np.ndarray:
        return np.abs(self.siso(out, inp))

    def phase_deg(self, out: int = 0, inp: int = 0) -> np.ndarray:
        return np.degrees(np.unwrap(np.angle(self.siso(out, inp))))

    def sigma_max(self) -> np.ndarray:
        if self.values.shape[1] == 1 or self.values.shape[2] == 1:
            return np.sqrt(np.sum(np.abs(self.values) ** 2, axis=(1, 2)))
        return np.linalg.svd(self.values, compute_uv=False)[:, 0]


def tf_to_ss(tf: TransferFunction) -> StateSpace:
    """Controllable canonical realization of a proper transfer function."""
    if not tf.is_proper:
        raise LTIError("improper transfer function")
    den = tf.den / tf.den[0]
    num = np.concatenate([np.zeros(len(tf.den) - len(tf.num)), tf.num]) / tf.den[0]
    n = len(den) - 1
    d = num[0]
    if n == 0:
        return StateSpace.gain([[d]])
    # strictly proper remainder: num - d*den
    rem = num[1:] - d * den[1:]
    A = np.zeros((n, n))
    A[0, :] = -den[1:]
    A[1:, :-1] = np.eye(n - 1)
    B = np.zeros((n, 1))
    B[0, 0] = 1.0
    C = rem.reshape(1, n)
    return StateSpace(A, B, C, [[d]])


def append(*systems: StateSpace) -> StateSpace:
    """Block-diagonal stacking: inputs and outputs concatenated."""
    A = scipy.linalg.block_diag(*[s.A for s in systems]) if any(s.n_states for s in systems) \
        else np.zeros((0, 0))
    n = A.shape[0]
    B = np.zeros((n, sum(s.n_inputs for s in systems)))
    C = np.zeros((sum(s.n_outputs for s in systems), n))
    D = scipy.linalg.block_diag(*[s.D for s in systems])
    i = j = k = 0
    for s in systems:
        B[i:i + s.n_states, j:j + s.n_inputs] = s.B
        C[k:k + s.n_outputs, i:i + s.n_states] = s.C
        i += s.n_states
        j += s.n_inputs
        k += s.n_outputs
    return StateSpace(A, B, C, D, systems[0].dt)


def connect(a: StateSpace, b: StateSpace, mode: str = "series") -> StateSpace:
    """Two-block interconnection.

    ``series``: signal flows through ``a`` then ``b``. ``parallel``: outputs summed.
    ``feedback_negative``: ``a`` in the forward path, ``b`` in the return path.
    """
    na, nb = a.n_states, b.n_states
    if mode == "series":
        if a.n_outputs != b.n_inputs:
            raise LTIError("dimension mismatch in series connection")
        A = np.block([[a.A, np.zeros((na, nb))], [b.B @ a.C, b.A]])
        B = np.vstack([a.B, b.B @ a.D])
        C = np.hstack([b.D @ a.C, b.C])
        D = b.D @ a.D
    elif mode == "parallel":
        if (a.n_inputs, a.n_outputs) != (b.n_inputs, b.n_outputs):
            raise LTIError("dimension mismatch in parallel connection")
        A = scipy.linalg.block_diag(a.A, b.A)
        B = np.vstack([a.B, b.B])
        C = np.hstack([a.C, b.C])
        D = a.D + b.D
    elif mode == "feedback_negative":
        if a.n_outputs != b.n_inputs or b.n_outputs != a.n_inputs:
            raise LTIError("dimension mismatch in feedback connection")
        M = np.eye(a.n_inputs) + b.D @ a.D
        if np.linalg.cond(M) > 1e12:
            raise LTIError("algebraic loop: I + Db*Da is singular")
        Mi = np.linalg.inv(M)  # e = Mi (u - Db ya_x - Cb xb)
        # u_a = Mi u - Mi Db Ca xa - Mi Cb xb ; ya = Ca xa + Da u_a
        A11 = a.A - a.B @ Mi @ b.D @ a.C
        A12 = -a.B @ Mi @ b.C
        Ya_x = a.C - a.D @ Mi @ b.D @ a.C
        A21 = b.B @ Ya_x
        A22 = b.A - b.B @ a.D @ Mi @ b.C
        A = np.block([[A11, A12], [A21, A22]])
        B = np.vstack([a.B @ Mi, b.B @ a.D @ Mi])
        C = np.hstack([Ya_x, -a.D @ Mi @ b.C])
        D = a.D @ Mi
    else:
        raise LTIError(f"unknown connection mode {mode!r}")
    return StateSpace(A, B, C, D, a.dt)


def lft(P: StateSpace, K: StateSpace, n_meas: int, n_ctrl: int) -> StateSpace:
    """Lower linear fractional transformation.

    ``P`` has inputs ``[w; u]`` (last ``n_ctrl`` are ``u``) and outputs ``[z; y]``
    (last ``n_meas`` are ``y``); ``K`` maps ``y -> u``.
    """
    nw = P.n_inputs - n_ctrl
    nz = P.n_outputs - n_meas
    if K.n_inputs != n_meas or K.n_outputs != n_ctrl:
        raise LTIError("controller dimensions do not match plant partition")
    B1, B2 = P.B[:, :nw], P.B[:, nw:]
    C1, C2 = P.C[:nz], P.C[nz:]
    D11, D12 = P.D[:nz, :nw], P.D[:nz, nw:]
    D21, D22 = P.D[nz:, :nw], P.D[nz:, nw:]
    M = np.eye(n_ctrl) - K.D @ D22
    if np.linalg.cond(M) > 1e12:
        raise LTIError("algebraic loop: I - Dk*D22 is singular")
    Mi = np.linalg.inv(M)
    # u = Mi (Ck xk + Dk C2 x + Dk D21 w)
    Ux = Mi @ K.D @ C2
    Uk = Mi @ K.C
    Uw = Mi @ K.D @ D21
    # y = C2 x + D21 w + D22 u
    Yx = C2 + D22 @ Ux
    Yk = D22 @ Uk
    Yw = D21 + D22 @ Uw
    A = np.block([[P.A + B2 @ Ux, B2 @ Uk], [K.B @ Yx, K.A + K.B @ Yk]])
    B = np.vstack([B1 + B2 @ Uw, K.B @ Yw])
    C = np.hstack([C1 + D12 @ Ux, D12 @ Uk])
    D = D11 + D12 @ Uw
    return StateSpace(A, B, C, D, P.dt)


def freq_response(sys: StateSpace, grid, chunk: int = 50_000) -> FrequencyResponse:
    """``C (jwI - A)^-1 B + D`` on ``grid`` (rad/s); discrete models use ``z = e^{jw dt}``."""
    w = np.asarray(grid, dtype=float)
    if np.any(w <= 0) or np.any(np.diff(w) <= 0):
        raise LTIError("grid must be positive and strictly increasing")
    p, m, n = sys.n_outputs, sys.n_inputs, sys.n_states
    out = np.empty((len(w), p, m), dtype=complex)
    out[:] = sys.D
    if n == 0:
        return FrequencyResponse(w, out)
    pts = 1j * w if sys.dt is None else np.exp(1j * w * sys.dt)
    lam = sys.poles()
    gap = np.min(np.abs(pts[:, None] - lam[None, :]) / (1.0 + np.abs(lam[None, :])), axis=1) \
        if len(pts) * n <= 5_000_000 else None
    if gap is not None and np.any(gap < 1e-13):
        raise LTIError("evaluation at pole")
    # Hessenberg form keeps the per-point solves well conditioned
    H, Q = scipy.linalg.hessenberg(sys.A, calc_q=True)
    Bq = Q.T @ sys.B
    Cq = sys.C @ Q
    eye = np.eye(n)
    for lo in range(0, len(w), chunk):
        s = pts[lo:lo + chunk]
        X = np.linalg.solve(s[:, None, None] * eye - H, np.broadcast_to(Bq, (len(s), n, m)))
        if not np.all(np.isfinite(X)):
            raise LTIError("evaluation at pole")
        out[lo:lo + chunk] += Cq @ X
    return FrequencyResponse(w, out)


def _sigma_max(M: np.ndarray) -> float:
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


def _hamiltonian(sys: StateSpace, gamma: float) -> np.ndarray:
    A, B, C, D = sys.A, sys.B, sys.C, sys.D
    R = gamma ** 2 * np.eye(sys.n_inputs) - D.T @ D
    Ri = np.linalg.inv(R)
    Ah = A + B @ Ri @ D.T @ C
    return np.block([
        [Ah, B @ Ri @ B.T],
        [-C.T @ (np.eye(sys.n_outputs) + D @ Ri @ D.T) @ C, -Ah.T],
    ])


def _imag_axis_eigs(sys: StateSpace, gamma: float) -> np.ndarray:
    """Nonnegative frequencies where ``sigma_max(G(jw)) == gamma``."""
    lam = np.linalg.eigvals(_hamiltonian(sys, gamma))
    on_axis = np.abs(lam.real) < 1e-8 * (1.0 + np.abs(lam))
    return np.sort(np.abs(lam[on_axis].imag))


def _sigma_at(sys: StateSpace, w: np.ndarray) -> np.ndarray:
    w = np.unique(np.asarray(w, dtype=float))
    vals = np.empty(len(w))
    pos = w > 0
    if np.any(~pos):
        vals[~pos] = _sigma_max(sys.dc_gain())
    if np.any(pos):
        vals[pos] = freq_response(sys, w[pos]).sigma_max()
    return vals if len(vals) else np.zeros(1)


def hinf_norm(sys: StateSpace, rel_tol: float = 1e-6, method: str = "two-step",
              max_iter: int = 200) -> float:
    """Peak gain ``sup_w sigma_max(G(jw))`` of a stable continuous model.

    ``method="two-step"`` is the Boyd-Balakrishnan / Bruinsma-Steinbuch level-set
    iteration; ``method="bisection"`` is plain gamma bisection on the same
    Hamiltonian test. Both stop once the bracket's relative width is below
    ``rel_tol``.
    """
    if sys.dt is not None:
        raise LTIError("hinf_norm expects a continuous-time model")
    d_norm = _sigma_max(sys.D)
    if sys.n_states == 0:
        return d_norm
    if not sys.is_stable():
        raise LTIError("H-infinity norm undefined for unstable system")

    poles = sys.poles()
    mags = np.abs(poles)
    lo_w = max(np.min(mags[mags > 0]) if np.any(mags > 0) else 1.0, 1e-12)
    hi_w = max(np.max(mags), lo_w)
    grid = np.geomspace(lo_w / 1e2, hi_w * 1e2, 200)
    # candidate peaks near lightly damped poles
    cand = np.concatenate([grid, np.abs(poles.imag[poles.imag > 0]), [0.0]])
    lower = max(d_norm, float(np.max(_sigma_at(sys, cand))))
    if lower * lower == 0.0:
        # gain too small for the Hamiltonian test to resolve
        return lower

    if method == "bisection":
        upper = 10.0 * lower
        while _imag_axis_eigs(sys, upper).size:
            upper *= 2.0
        for _ in range(max_iter):
            if upper - lower <= rel_tol * lower:
                break
            mid = 0.5 * (lower + upper)
            w = _imag_axis_eigs(sys, mid)
            if w.size:
                lower = max(mid, float(np.max(_sigma_at(sys, w))))
            else:
                upper = mid
        return 0.5 * (lower + upper)

    if method != "two-step":
        raise LTIError(f"unknown method {method!r}")
    for _ in range(max_iter):
        gamma = lower * (1.0 + 2.0 * rel_tol)
        w = _imag_axis_eigs(sys, gamma)
        if w.size == 0:
            return lower * (1.0 + rel_tol)
        if w.size == 1:
            mids = w
        else:
            mids = np.concatenate([0.5 * (w[:-1] + w[1:]), w])
        new = float(np.max(_sigma_at(sys, mids)))
        if new <= lower * (1.0 + 1e-12):
            return lower * (1.0 + rel_tol)
        lower = new
    raise LTIError("H-infinity iteration did not converge")


def discretize(sys: StateSpace, Ts: float) -> StateSpace:
    """Tustin (bilinear) discretization without prewarping."""
    if Ts <= 0:
        raise LTIError("sample time must be positive")
    n = sys.n_states
    if n == 0:
        return StateSpace.gain(sys.D, dt=Ts)
    I = np.eye(n)
    M = I - 0.5 * Ts * sys.A
    if np.linalg.cond(M) > 1e12:
        raise LTIError("singular (I - A*Ts/2): bilinear transform ill-posed")
    Mi = np.linalg.inv(M)
    Ad = Mi @ (I + 0.5 * Ts * sys.A)
    Bd = Mi @ sys.B * Ts
    Cd = sys.C @ Mi
    Dd = sys.D + 0.5 * Ts * sys.C @ Mi @ sys.B
    return StateSpace(Ad, Bd, Cd, Dd, dt=Ts)


def zoh(sys: StateSpace, Ts: float) -> StateSpace:
    """Exact zero-order-hold discretization via the augmented matrix exponential."""
    n, m = sys.n_states, sys.n_inputs
    if n == 0:
        return StateSpace.gain(sys.D, dt=Ts)
    M = np.zeros((n + m, n + m))
    M[:n, :n] = sys.A * Ts
    M[:n, n:] = sys.B * Ts
    E = scipy.linalg.expm(M)
    return StateSpace(E[:n, :n], E[:n, n:], sys.C, sys.D, dt=Ts)


def step_response(sys: StateSpace, duration: float, dt: float = 1e-3,
                  out: int = 0, inp: int = 0, block: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Unit-step response of one channel, sampled exactly (zero-order hold).

    Uses ``x[a+b] = x[a] + Ad^a x[b]`` to advance whole blocks of samples at once.
    """
    if sys.dt is not None:
        raise LTIError("step_response expects a continuous-time model")
    n_steps = int(round(duration / dt)) + 1
    t = np.arange(n_steps) * dt
    s = sys.subsystem(outputs=[out], inputs=[inp])
    if s.n_states == 0:
        return t, np.full(n_steps, s.D[0, 0])
    d = zoh(s, dt)
    Ad, bd, c = d.A, d.B[:, 0], d.C[0]
    m = min(block, n_steps)
    X0 = np.empty((s.n_states, m + 1))
    X0[:, 0] = 0.0
    for k in range(m):
        X0[:, k + 1] = Ad @ X0[:, k] + bd
    Am = np.linalg.matrix_power(Ad, m)
    y = np.empty(n_steps)
    P = np.eye(s.n_states)
    x_base = np.zeros(s.n_states)
    for j0 in range(0, n_steps, m):
        cnt = min(m, n_steps - j0)
        y[j0:j0 + cnt] = c @ x_base + (c @ P) @ X0[:, :cnt]
        x_base = x_base + P @ X0[:, m]
        P = P @ Am
    return t, y + s.D[0, 0]
