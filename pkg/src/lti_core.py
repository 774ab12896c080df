"""
Continuous-time LTI plants, transfer-function realizations and the zero-order-hold
discretization that turns a hands-off control problem into a finite-dimensional one.

Realization convention: controller companion form. For a plant n(s)/d(s) with monic
d(s) = s^n + a1 s^(n-1) + ... + an, the realization is

    A = [[-a1, -a2, ..., -an],        B = e1 = [1, 0, ..., 0]^T
         [  1,   0, ...,   0],
         [        ...        ],
         [  0, ...,   1,   0]]

The numerator only enters C, so plants that differ only in their zeros share (A, B) and
therefore share every control problem built from them. Pass raw (A, B) to bypass this.
"""
import json
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import expm
from scipy.signal import fftconvolve, tf2ss, zpk2tf
from scipy.sparse.linalg import LinearOperator

logger = logging.getLogger(__name__)

ROOT_TOL = 1e-9


class RealizationError(ValueError):
    """Transfer function cannot be realized as a real, strictly proper system."""


class DiscretizationError(ValueError):
    """Zero-order-hold discretization produced non-finite matrices."""


def _readonly(arr):
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


def controllability_matrix(A, B):
    """Return [B, AB, ..., A^(n-1)B]."""
    A = np.asarray(A, dtype=float)
    col = np.asarray(B, dtype=float).reshape(-1)
    cols = []
    for _ in range(A.shape[0]):
        cols.append(col)
        col = A @ col
    return np.column_stack(cols)


@dataclass(frozen=True, eq=False)
class Plant:
    """Single-input plant dx/dt = Ax + Bu with x(0) = xi, horizon T and |u| <= u_max."""

    A: np.ndarray
    B: np.ndarray
    xi: np.ndarray
    T: float
    u_max: float = 1.0

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got shape {A.shape}")
        n = A.shape[0]
        B = np.asarray(self.B, dtype=float)
        if B.size != n:
            raise ValueError(f"B must have {n} rows (single input), got shape {B.shape}")
        xi = np.asarray(self.xi, dtype=float).reshape(-1)
        if xi.shape != (n,):
            raise ValueError(f"Initial state must have length {n}, got {xi.shape[0]}")
        if not self.T > 0:
            raise ValueError(f"Horizon T must be positive, got {self.T}")
        if not self.u_max > 0:
            raise ValueError(f"Control bound u_max must be positive, got {self.u_max}")

        object.__setattr__(self, "A", _readonly(A))
        object.__setattr__(self, "B", _readonly(B.reshape(n, 1)))
        object.__setattr__(self, "xi", _readonly(xi))
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "u_max", float(self.u_max))

        if not self.is_controllable():
            logger.warning(f"Plant of order {n} is not controllable; the terminal constraint may be infeasible")

    @property
    def n(self):
        return self.A.shape[0]

    def is_controllable(self):
        return np.linalg.matrix_rank(controllability_matrix(self.A, self.B)) == self.n

    def is_normal(self):
        """Controllable with nonsingular A: L0 and L1 optimal controls coincide."""
        return self.is_controllable() and np.linalg.matrix_rank(self.A) == self.n

    def to_dict(self):
        return {
            "A": self.A.tolist(),
            "B": self.B.reshape(-1).tolist(),
            "x0": self.xi.tolist(),
            "T": self.T,
            "u_max": self.u_max,
        }


def _parse_root(value):
    if isinstance(value, (list, tuple)):
        re, im = (list(value) + [0.0])[:2]
        return complex(float(re), float(im))
    return complex(value)


def _check_conjugate_pairs(roots, what):
    pending = [r for r in roots if abs(r.imag) > ROOT_TOL]
    while pending:
        root = pending.pop(0)
        match = next((i for i, r in enumerate(pending) if abs(r - root.conjugate()) <= ROOT_TOL * max(1.0, abs(root))), None)
        if match is None:
            raise RealizationError(f"Complex {what} {root} has no conjugate partner")
        pending.pop(match)


@dataclass(frozen=True)
class TransferFunctionSpec:
    """Plant described by its zeros, poles and gain: gain * prod(s - z) / prod(s - p)."""

    zeros: tuple = ()
    poles: tuple = ()
    gain: float = 1.0

    def __post_init__(self):
        zeros = tuple(_parse_root(z) for z in self.zeros)
        poles = tuple(_parse_root(p) for p in self.poles)
        object.__setattr__(self, "zeros", zeros)
        object.__setattr__(self, "poles", poles)
        object.__setattr__(self, "gain", float(self.gain))
        if not poles:
            raise RealizationError("Transfer function needs at least one pole")
        if len(zeros) >= len(poles):
            raise RealizationError(
                f"Transfer function is not strictly proper ({len(zeros)} zeros, {len(poles)} poles)")
        _check_conjugate_pairs(zeros, "zero")
        _check_conjugate_pairs(poles, "pole")

    @property
    def order(self):
        return len(self.poles)

    def to_dict(self):
        return {
            "zeros": [[z.real, z.imag] for z in self.zeros],
            "poles": [[p.real, p.imag] for p in self.poles],
            "gain": self.gain,
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(zeros=tuple(doc.get("zeros", ())), poles=tuple(doc["poles"]), gain=doc.get("gain", 1.0))


def realize(spec: TransferFunctionSpec):
    """
    Controller-companion realization of a transfer function.

    Args:
        spec (TransferFunctionSpec): Zeros, poles and gain

    Returns:
        tuple: (A, B) with A the top-companion matrix of the monic denominator and B = e1
    """
    num, den = zpk2tf(np.array(spec.zeros, dtype=complex), np.array(spec.poles, dtype=complex), spec.gain)
    num = np.real_if_close(np.atleast_1d(num), tol=1e6)
    den = np.real_if_close(np.atleast_1d(den), tol=1e6)
    if np.iscomplexobj(num) or np.iscomplexobj(den):
        raise RealizationError("Polynomial coefficients are not real")
    A, B, _, _ = tf2ss(np.real(num), np.real(den))
    A = np.array(A, dtype=float) + 0.0  # normalizes -0.0 entries
    return A, np.array(B, dtype=float)


def zoh(A, B, h):
    """
    Exact zero-order-hold discretization via one exponential of the augmented matrix.

    exp([[A, B], [0, 0]] h) = [[Ad, Bd], [0, 1]]
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    M = np.zeros((n + 1, n + 1))
    M[:n, :n] = A * h
    M[:n, n] = np.asarray(B, dtype=float).reshape(-1) * h
    E = expm(M)
    if not np.all(np.isfinite(E)):
        raise DiscretizationError(f"Matrix exponential is not finite for h={h}")
    return E[:n, :n].copy(), E[:n, n].copy()


def markov_parameters(Ad, Bd, N):
    """Rows A_d^m B_d for m = 0..N-1, accumulated by running product."""
    Ad = np.asarray(Ad, dtype=float)
    g = np.empty((N, Ad.shape[0]))
    col = np.asarray(Bd, dtype=float).reshape(-1)
    for m in range(N):
        g[m] = col
        col = Ad @ col
    return g


def build_phi(Ad, Bd, N):
    """Terminal reachability matrix [A_d^(N-1) B_d, ..., A_d B_d, B_d] (n x N)."""
    return markov_parameters(Ad, Bd, N)[::-1].T.copy()


def build_psi(Ad, Bd, N):
    """
    Dense block-lower-triangular map from (u_0..u_{N-2}) to (x_1..x_{N-1}).

    Block (i, k) is A_d^(i-1-k) B_d for k <= i-1. Memory grows as N^2 n, so the solver
    uses psi_operator instead; this form exists for small N and for checking.
    """
    n = np.asarray(Ad).shape[0]
    g = markov_parameters(Ad, Bd, max(N - 1, 0))
    psi = np.zeros(((N - 1) * n, N - 1))
    for r in range(N - 1):
        psi[r * n:(r + 1) * n, :r + 1] = g[r::-1].T
    return psi


def psi_operator(markov, N):
    """
    Ψ_N as a LinearOperator: a causal convolution of the Markov sequence with the controls.

    Args:
        markov (ndarray): Rows A_d^m B_d, at least N-1 of them
        N (int): Number of samples

    Returns:
        LinearOperator: shape ((N-1)*n, N-1)
    """
    g = np.asarray(markov, dtype=float)[:N - 1]
    m, n = N - 1, g.shape[1]

    def matvec(u):
        u = np.asarray(u, dtype=float).reshape(-1)
        x = fftconvolve(g, u[:, None], axes=0)[:m]
        return x.reshape(-1)

    def rmatvec(y):
        Y = np.asarray(y, dtype=float).reshape(m, n)
        full = fftconvolve(Y[::-1], g, axes=0)[:m]
        return full[::-1].sum(axis=1)

    return LinearOperator((m * n, m), matvec=matvec, rmatvec=rmatvec, dtype=float)


@dataclass(frozen=True, eq=False)
class DiscreteProblem:
    """Finite-dimensional data for a plant sampled with N zero-order-hold intervals."""

    plant: Plant
    N: int
    h: float
    Ad: np.ndarray
    Bd: np.ndarray
    markov: np.ndarray = field(repr=False)
    PhiN: np.ndarray = field(repr=False)
    b_terminal: np.ndarray = field(repr=False)
    c_state: np.ndarray = field(repr=False)

    @property
    def n(self):
        return self.Ad.shape[0]

    @property
    def terminal_free_response(self):
        """A_d^N xi."""
        return -self.b_terminal

    @property
    def PsiN(self):
        return psi_operator(self.markov, self.N)

    def psi_matrix(self):
        return build_psi(self.Ad, self.Bd, self.N)

    @property
    def times(self):
        return np.arange(self.N) * self.h


def discretize(plant: Plant, N: int) -> DiscreteProblem:
    """
    Sample the plant with N zero-order-hold intervals over [0, T].

    Args:
        plant (Plant): Continuous-time plant
        N (int): Number of samples, at least the plant order

    Returns:
        DiscreteProblem: Ad, Bd, Φ_N, Ψ_N and the free-response vectors
    """
    N = int(N)
    if N < plant.n:
        raise ValueError(f"N={N} is smaller than the plant order {plant.n}")
    h = plant.T / N
    Ad, Bd = zoh(plant.A, plant.B, h)

    markov = markov_parameters(Ad, Bd, N)
    phi = markov[::-1].T.copy()

    free = np.empty((N, plant.n))
    x = plant.xi.copy()
    for i in range(N):
        x = Ad @ x
        free[i] = x
    if not np.all(np.isfinite(free)):
        raise DiscretizationError("Free response diverged to non-finite values")

    logger.debug(f"Discretized order-{plant.n} plant with N={N}, h={h:.6g}")
    return DiscreteProblem(
        plant=plant,
        N=N,
        h=h,
        Ad=_readonly(Ad),
        Bd=_readonly(Bd),
        markov=_readonly(markov),
        PhiN=_readonly(phi),
        b_terminal=_readonly(-free[-1]),
        c_state=_readonly(free[:-1]),
    )


def plant_from_document(doc, T: Optional[float] = None, x0: Optional[Sequence[float]] = None):
    """
    Build a Plant from a JSON document with either poles/zeros or raw A/B.

    Args:
        doc (dict): {"poles": [[re, im], ...], "zeros": [...], "T": .., "x0": [..], "u_max": ..}
                    or {"A": [[..]], "B": [..], ...}
        T (float, optional): Overrides doc["T"]
        x0 (sequence, optional): Overrides doc["x0"]

    Returns:
        Plant: The plant
    """
    if "A" in doc:
        A, B = np.asarray(doc["A"], dtype=float), np.asarray(doc["B"], dtype=float)
    elif "poles" in doc:
        A, B = realize(TransferFunctionSpec.from_dict(doc))
    else:
        raise ValueError("Plant document needs either 'A'/'B' or 'poles'")
    horizon = T if T is not None else doc.get("T")
    initial = x0 if x0 is not None else doc.get("x0")
    if horizon is None or initial is None:
        raise ValueError("Plant document needs 'T' and 'x0'")
    return Plant(A=A, B=B, xi=initial, T=horizon, u_max=doc.get("u_max", 1.0))


def load_plant(path):
    """Load a plant JSON document from disk."""
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    return plant_from_document(doc)
