"""Derivation of the reduced boundary condition for the equilibrium system.

Starting from the full boundary condition B U(0) = b, the large-eta limit of
the stable subspace of M(xi, omega, eta) yields matrices Y1, Y2, Y3; the left
null space B_o of (Y2 Y3) turns the full condition into a well-posed boundary
condition B_o B_u ubar(0) = B_o b for the equilibrium system, certified by a
uniform Kreiss condition (UKC).  The same algebra provides the closure solve
that recovers the boundary-layer degrees of freedom.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import (
    AssumptionViolated,
    DegenerateY,
    GkcFailed,
    NearImaginaryEigenvalue,
    RankDeficientK,
    SingularClosure,
    SingularKtXKt,
)
from .linalg import (
    orthonormal_complement,
    split_invariant_subspaces,
    stable_basis_real,
)
from .model import RelaxationSystem, classify_spectrum, compute_indices
from .spectral import FrequencyPoint, KernelFrame, SamplingSpec, _angles_to_unit, build_M
from .tolerances import C_THRESHOLD, spectral_norm, tau_eig, tau_rank


@dataclass(frozen=True)
class EquilibriumFrame:
    """Orthonormal eigendecomposition of A11: A11 P1 = P1 Lam1 (Lam1 invertible
    diagonal), A11 P0 = 0."""

    P1: np.ndarray
    P0: np.ndarray
    Lam1: np.ndarray  # 1-D array of nonzero eigenvalues

    @property
    def n10(self) -> int:
        return self.P0.shape[1]


@dataclass(frozen=True)
class ReductionData:
    """Static ingredients of the large-eta limit for a fixed system/frame."""

    K: np.ndarray  # A12_hat^T P0, full column rank n10
    K_tilde: np.ndarray  # orthonormal complement of range(K)
    X: np.ndarray  # A22_hat - A12_hat^T P1 Lam1^{-1} P1^T A12_hat
    N: np.ndarray
    M2: np.ndarray  # (K~^T X K~)^{-1} (K~^T S_hat K~), governs the eps-layer ODE
    M2_stable_dim: int


@dataclass
class ReducedBC:
    """B_o B_u ubar(0, t) = B_o b(t), with the UKC certificate."""

    B_o: np.ndarray
    Y1: np.ndarray
    Y2: np.ndarray
    Y3: np.ndarray
    ukc_min_ratio: float
    ukc_samples: int
    annihilation_residual: float
    p0_residual: float
    coefficient: np.ndarray = field(default=None)  # B_o B_u, convenience

    def to_dict(self) -> dict:
        return {
            "B_o": self.B_o.tolist(),
            "coefficient": self.coefficient.tolist(),
            "ukc_min_ratio": float(self.ukc_min_ratio),
            "ukc_samples": int(self.ukc_samples),
            "annihilation_residual": float(self.annihilation_residual),
            "p0_residual": float(self.p0_residual),
        }


@dataclass
class ClosureSolve:
    """Boundary data for the layer corrections at one time t:

    the coefficient matrix of B~_o (Y2 Y3) acting on (P0^T mu1(0); w_s),
    where w_s parametrizes the stable eps-layer modes."""

    coefficient: np.ndarray
    B_tilde_o: np.ndarray
    condition_number: float


def build_equilibrium_frame(sys: RelaxationSystem) -> EquilibriumFrame:
    A11 = sys.A11
    w, V = sla.eigh(A11)
    scale = max(np.max(np.abs(w)), 1.0) if w.size else 1.0
    tol = tau_eig(scale)
    zero = np.abs(w) <= tol
    P0 = V[:, zero]
    P1 = V[:, ~zero]
    Lam1 = w[~zero]
    return EquilibriumFrame(P1=P1, P0=P0, Lam1=Lam1)


def build_reduction_data(
    sys: RelaxationSystem, frame: KernelFrame, eq: EquilibriumFrame
) -> ReductionData:
    """Assemble K, K~, X, N, M2 from the reduced coefficients.

    Raises RankDeficientK if K = A12_hat^T P0 loses column rank and
    SingularKtXKt if K~^T X K~ is singular; both indicate the system
    falls outside the admissible class.
    """
    idx = compute_indices(sys)
    A12h, A22h, Sh = frame.A12_hat, frame.A22_hat, frame.S_hat
    P1, P0, Lam1 = eq.P1, eq.P0, eq.Lam1

    K = A12h.T @ P0  # (r - n0) x n10
    if K.shape[1] > 0:
        s = sla.svdvals(K)
        if s.size < K.shape[1] or s[-1] <= tau_rank(max(s[0], 1.0)):
            raise RankDeficientK(
                "A12_hat^T P0 is column rank deficient; the eps-layer cannot "
                "absorb the characteristic boundary modes"
            )
    K_tilde = orthonormal_complement(K) if K.shape[1] > 0 else np.eye(K.shape[0])

    X = A22h - A12h.T @ P1 @ np.diag(1.0 / Lam1) @ P1.T @ A12h if Lam1.size else A22h.copy()

    KtXKt = K_tilde.T @ X @ K_tilde
    KtSKt = K_tilde.T @ Sh @ K_tilde
    if KtXKt.shape[0] > 0:
        if abs(np.linalg.det(KtXKt)) <= tau_rank(max(spectral_norm(KtXKt), 1.0)) ** KtXKt.shape[0]:
            s = sla.svdvals(KtXKt)
            if s[-1] <= tau_rank(max(s[0], 1.0)):
                raise SingularKtXKt("K~^T X K~ is singular")
        M2 = np.linalg.solve(KtXKt, KtSKt)
    else:
        M2 = np.zeros((0, 0))

    if K.shape[1] > 0:
        KtK_inv = np.linalg.inv(K.T @ K)
        inner = np.zeros((P0.shape[1], K_tilde.shape[1]))
        if K_tilde.shape[1] > 0:
            inner = (K.T @ Sh @ K_tilde) @ np.linalg.solve(KtSKt, K_tilde.T @ X @ K_tilde) - K.T @ X @ K_tilde
        N0 = P0 @ KtK_inv @ inner
    else:
        N0 = np.zeros((eq.P1.shape[0], K_tilde.shape[1]))
    if Lam1.size:
        N = -P1 @ np.diag(1.0 / Lam1) @ P1.T @ A12h @ K_tilde + N0
    else:
        N = N0

    expected = idx.n_plus - idx.n1_plus - idx.n10
    if M2.shape[0] > 0:
        eigs = np.linalg.eigvals(M2)
        k_s = int(np.sum(eigs.real < 0))
    else:
        k_s = 0
    if k_s != expected:
        raise AssumptionViolated(
            f"M2 has {k_s} stable eigenvalues, expected "
            f"n_+ - n1_+ - n10 = {expected}"
        )
    return ReductionData(
        K=K, K_tilde=K_tilde, X=X, N=N, M2=M2, M2_stable_dim=expected
    )


def _M1(sys: RelaxationSystem, eq: EquilibriumFrame, xi: complex, omega) -> np.ndarray:
    """Reduced matrix of the equilibrium system in the (P1, P0) frame:
    M1(xi, omega) = -Lam1^{-1}([xi I + P1^T C P1] - P1^T C P0 [xi I + P0^T C P0]^{-1} P0^T C P1)
    with C(omega) = i sum_j omega_j A_{j,11}."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    n1 = sys.n - sys.r
    C = np.zeros((n1, n1), dtype=complex)
    for j in range(1, sys.d):
        C += 1j * omega[j - 1] * sys.A[j][:n1, :n1]
    P1, P0, Lam1 = eq.P1, eq.P0, eq.Lam1
    k1 = P1.shape[1]
    core = xi * np.eye(k1) + P1.T @ C @ P1
    if P0.shape[1] > 0:
        inner = xi * np.eye(P0.shape[1]) + P0.T @ C @ P0
        core = core - P1.T @ C @ P0 @ np.linalg.solve(inner, P0.T @ C @ P1)
    return -np.diag(1.0 / Lam1).astype(complex) @ core


def equilibrium_reduced_matrix(sys, eq, xi, omega):
    """Public alias for the equilibrium-system reduced matrix M1."""
    return _M1(sys, eq, xi, omega)


def limit_stable_matrix(
    sys: RelaxationSystem,
    frame: KernelFrame,
    eq: EquilibriumFrame,
    data: ReductionData,
    xi: complex,
    omega,
) -> np.ndarray:
    """The eta -> infinity limit of a stable basis of M, an
    (n - n0) x n_+ matrix in the R1 frame:

        [ (P1 - P0 [xi I + P0^T C P0]^{-1} P0^T C P1) R1^S    P0    N R2^S ]
        [                 0                                    0   K~ R2^S ]

    where R1^S spans the stable subspace of M1(xi, omega) and R2^S that of M2.
    """
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    n1 = sys.n - sys.r
    P1, P0 = eq.P1, eq.P0

    M1 = _M1(sys, eq, xi, omega)
    R1S = split_invariant_subspaces(M1).basis_s if M1.shape[0] else np.zeros((0, 0))
    R2S = (
        stable_basis_real(data.M2)
        if data.M2.shape[0]
        else np.zeros((data.M2.shape[0], 0))
    )

    C = np.zeros((n1, n1), dtype=complex)
    for j in range(1, sys.d):
        C += 1j * omega[j - 1] * sys.A[j][:n1, :n1]

    top_left = P1.astype(complex)
    if P0.shape[1] > 0:
        inner = xi * np.eye(P0.shape[1]) + P0.T @ C @ P0
        top_left = top_left - P0 @ np.linalg.solve(inner, P0.T @ C @ P1)
    top_left = top_left @ R1S

    rows = sys.n - frame.n0
    k_low = frame.R02_perp.shape[1]
    cols = R1S.shape[1] + P0.shape[1] + R2S.shape[1]
    out = np.zeros((rows, cols), dtype=complex)
    c0 = 0
    out[:n1, c0 : c0 + R1S.shape[1]] = top_left
    c0 += R1S.shape[1]
    out[:n1, c0 : c0 + P0.shape[1]] = P0
    c0 += P0.shape[1]
    if R2S.shape[1] > 0:
        out[:n1, c0:] = data.N @ R2S
        out[n1:, c0:] = data.K_tilde @ R2S
    return out


def _ukc_ratio(sys, eq, B_o_Bu, xi, omega) -> float:
    M1 = _M1(sys, eq, xi, omega)
    R1S = split_invariant_subspaces(M1).basis_s
    num = abs(np.linalg.det(B_o_Bu @ eq.P1 @ R1S))
    den = math.sqrt(max(np.linalg.det(R1S.conj().T @ R1S).real, 0.0))
    return 0.0 if den == 0.0 else float(num / den)


def derive_reduced_bc(
    sys: RelaxationSystem,
    frame: KernelFrame,
    eq: EquilibriumFrame,
    data: ReductionData,
    spec: SamplingSpec | None = None,
) -> ReducedBC:
    """Compute B_o, verify B_o (Y2 Y3) = 0 and B_o B_u P0 = 0, and certify
    the UKC for the reduced condition by hemisphere sampling.

    Y2 = B_u P0 and Y3 = B_u N R2^S + B_v R02_perp K~ R2^S are evaluated at a
    reference point; they are frequency-independent by construction.  Raises
    DegenerateY if (Y2 Y3) has unexpected rank and GkcFailed if the sampled
    UKC minimum falls below the threshold.
    """
    spec = spec or SamplingSpec()
    idx = compute_indices(sys)
    B_u, B_v = sys.B_u, sys.B_v

    R2S = (
        stable_basis_real(data.M2)
        if data.M2.shape[0]
        else np.zeros((data.M2.shape[0], 0))
    )
    Y2 = B_u @ eq.P0
    Y3 = (B_u @ data.N + B_v @ frame.R02_perp @ data.K_tilde) @ R2S
    Y23 = np.hstack([Y2, Y3])

    n_plus, n1_plus = idx.n_plus, idx.n1_plus
    expected_rank = n_plus - n1_plus
    if Y23.shape[1] != expected_rank:
        raise DegenerateY(
            f"(Y2 Y3) has {Y23.shape[1]} columns, expected {expected_rank}"
        )
    if Y23.shape[1] > 0:
        s = sla.svdvals(Y23)
        if s.size < Y23.shape[1] or s[-1] <= tau_rank(max(s[0], 1.0)):
            raise DegenerateY("(Y2 Y3) is column rank deficient")
        U, _, _ = np.linalg.svd(Y23, full_matrices=True)
        B_o = U[:, Y23.shape[1] :].conj().T
    else:
        B_o = np.eye(n_plus)
    if B_o.shape[0] != n1_plus:
        raise DegenerateY(
            f"B_o has {B_o.shape[0]} rows, expected n1_+ = {n1_plus}"
        )
    if np.iscomplexobj(B_o) and (
        B_o.size == 0 or np.max(np.abs(B_o.imag)) < 1e-12
    ):
        B_o = B_o.real
    B_o = _normalize_rows(B_o)

    ann = spectral_norm(B_o @ Y23) if Y23.shape[1] else 0.0
    p0_res = spectral_norm(B_o @ B_u @ eq.P0) if eq.P0.shape[1] else 0.0

    # UKC sampling over the (Re xi, Im xi, omega) hemisphere
    coeff = B_o @ B_u
    m = sys.d + 1
    if m >= 2:
        grids = [np.linspace(0.0, math.acos(spec.delta), spec.resolution)]
        for _ in range(m - 2):
            grids.append(np.linspace(0.0, math.pi, spec.resolution))
        mesh = np.meshgrid(*grids, indexing="ij")
        angles = np.stack([g.ravel() for g in mesh], axis=1)
        units = _angles_to_unit(angles, m)
    else:
        units = np.array([[1.0]])
    best = math.inf
    count = 0
    for u in units:
        xi = complex(u[0], u[1]) if m >= 2 else complex(u[0], 0.0)
        omega = np.asarray(u[2:], dtype=float)
        if xi.real <= 0:
            continue
        try:
            val = _ukc_ratio(sys, eq, coeff, xi, omega)
        except NearImaginaryEigenvalue:
            continue
        count += 1
        best = min(best, val)
    if math.isinf(best):
        best = 0.0 if n1_plus else 1.0
    if n1_plus > 0 and best <= C_THRESHOLD:
        raise GkcFailed(
            f"uniform Kreiss condition fails for the reduced condition: "
            f"sampled minimum {best:.3e} <= {C_THRESHOLD:.0e}"
        )
    return ReducedBC(
        B_o=B_o,
        Y1=_Y1(sys, eq, 1.0 + 0j, np.zeros(sys.d - 1)),
        Y2=Y2,
        Y3=Y3,
        ukc_min_ratio=best,
        ukc_samples=count,
        annihilation_residual=float(ann),
        p0_residual=float(p0_res),
        coefficient=coeff,
    )


def _Y1(sys, eq, xi, omega):
    M1 = _M1(sys, eq, xi, omega)
    R1S = split_invariant_subspaces(M1).basis_s if M1.shape[0] else np.zeros((0, 0))
    n1 = sys.n - sys.r
    C = np.zeros((n1, n1), dtype=complex)
    for j in range(1, sys.d):
        C += 1j * np.atleast_1d(omega)[j - 1] * sys.A[j][:n1, :n1]
    top = eq.P1.astype(complex)
    if eq.P0.shape[1] > 0:
        inner = xi * np.eye(eq.P0.shape[1]) + eq.P0.T @ C @ eq.P0
        top = top - eq.P0 @ np.linalg.solve(inner, eq.P0.T @ C @ eq.P1)
    return sys.B_u @ top @ R1S


def _normalize_rows(B_o: np.ndarray) -> np.ndarray:
    """Deterministic sign/scale: each row scaled so its first nonzero entry
    (largest in magnitude on ties within tolerance) is positive, rows unit
    norm.  Keeps reports byte-identical across runs."""
    out = B_o.copy()
    for i in range(out.shape[0]):
        row = out[i]
        nrm = np.linalg.norm(row)
        if nrm == 0:
            continue
        row = row / nrm
        nz = np.nonzero(np.abs(row) > 1e-12)[0]
        if nz.size and row[nz[0]].real < 0:
            row = -row
        out[i] = row
    return out


def build_closure(
    sys: RelaxationSystem,
    frame: KernelFrame,
    eq: EquilibriumFrame,
    data: ReductionData,
    rbc: ReducedBC,
) -> ClosureSolve:
    """Coefficient matrix of the remaining boundary unknowns.

    B~_o completes B_o to an orthonormal basis of R^{n_+}; the unknowns are
    (P0^T mu1(0); w_s) with coefficient B~_o (Y2, Y3).  Raises SingularClosure
    if the coefficient is not invertible.
    """
    n_plus = sys.B.shape[0]
    if rbc.B_o.shape[0] > 0:
        B_tilde_o = orthonormal_complement(rbc.B_o.T).T
    else:
        B_tilde_o = np.eye(n_plus)
    coeff = B_tilde_o @ np.hstack([rbc.Y2, np.real_if_close(rbc.Y3, tol=1e4)])
    if coeff.shape[0] != coeff.shape[1]:
        raise SingularClosure(
            f"closure coefficient is {coeff.shape[0]}x{coeff.shape[1]}, not square"
        )
    if coeff.size:
        s = sla.svdvals(coeff)
        if s[-1] <= tau_rank(max(s[0], 1.0)):
            raise SingularClosure("closure coefficient matrix is singular")
        cond = float(s[0] / s[-1])
    else:
        cond = 1.0
    return ClosureSolve(
        coefficient=coeff, B_tilde_o=B_tilde_o, condition_number=cond
    )


def solve_closure(
    closure: ClosureSolve,
    sys: RelaxationSystem,
    b_t: np.ndarray,
    ubar0_t: np.ndarray,
    n10: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Solve for (P0^T mu1(0), w_s) at one time instant."""
    rhs = closure.B_tilde_o @ (np.asarray(b_t, dtype=float) - sys.B_u @ ubar0_t)
    if closure.coefficient.size == 0:
        return np.zeros(0), np.zeros(0)
    sol = np.linalg.solve(closure.coefficient, rhs.astype(closure.coefficient.dtype))
    if np.max(np.abs(np.imag(sol)), initial=0.0) < 1e-10 * max(np.max(np.abs(sol)), 1.0):
        sol = sol.real
    return sol[:n10], sol[n10:]


def large_eta_expansion_check(
    sys: RelaxationSystem,
    frame: KernelFrame,
    p: FrequencyPoint,
    etas=(1e2, 1e3, 1e4),
) -> dict:
    """Diagnostics for M(xi, omega, eta) ~ A1_hat^{-1}[eta Q_hat + H_hat].

    Returns the fitted decay slope of || M(eta) - A1_hat^{-1}(eta Q_hat + H_hat) ||
    against eta (expected near -1) and the residual of the top-left block of
    H_hat against -(xi I + C(omega)).
    """
    n, r, n0 = sys.n, sys.r, frame.n0
    R0, R1 = frame.R0, frame.R1
    Q = sys.Q
    omega = np.atleast_1d(p.omega)
    H = -p.xi * np.eye(n, dtype=complex)
    for j in range(1, sys.d):
        H = H - 1j * omega[j - 1] * sys.A[j]
    if n0 > 0:
        QR00_inv = np.linalg.inv(R0.T @ Q @ R0)
        left = R1.T - (R1.T @ Q @ R0) @ QR00_inv @ R0.T
        right = R1 - R0 @ QR00_inv @ (R0.T @ Q @ R1)
    else:
        left, right = R1.T, R1
    H_hat = left @ H @ right

    n1 = n - r
    C = np.zeros((n1, n1), dtype=complex)
    for j in range(1, sys.d):
        C += 1j * omega[j - 1] * sys.A[j][:n1, :n1]
    top_left_target = -(p.xi * np.eye(n1) + C)
    top_left_residual = spectral_norm(H_hat[:n1, :n1] - top_left_target)

    A1_hat_inv = np.linalg.inv(frame.A1_hat)
    resids = []
    m_norms = []
    for eta in etas:
        pe = FrequencyPoint(xi=p.xi, omega=p.omega, eta=float(eta))
        M = build_M(sys, frame, pe)
        approx = A1_hat_inv @ (eta * frame.Q_hat.astype(complex) + H_hat)
        resids.append(spectral_norm(M - approx))
        m_norms.append(spectral_norm(M))
    # when the remainder vanishes identically the measured residual is pure
    # round-off, which grows with ||M(eta)||; judge exactness relative to it
    exact = all(r <= 1e-11 * max(m, 1.0) for r, m in zip(resids, m_norms))
    if exact:
        slope = None
    else:
        log_eta = np.log(np.asarray(etas, dtype=float))
        log_res = np.log(np.maximum(np.asarray(resids), 1e-300))
        slope = float(np.polyfit(log_eta, log_res, 1)[0])
    return {
        "slope": slope,
        "exact": exact,
        "residuals": [float(x) for x in resids],
        "top_left_residual": float(top_left_residual),
    }


def limit_subspace_angle(
    sys: RelaxationSystem,
    frame: KernelFrame,
    eq: EquilibriumFrame,
    data: ReductionData,
    xi: complex,
    omega,
    eta: float = 1e4,
) -> float:
    """Largest principal angle between the stable subspace of M at finite eta
    and the eta = infinity limit subspace."""
    p = FrequencyPoint(xi=xi, omega=np.atleast_1d(omega), eta=eta)
    M = build_M(sys, frame, p)
    finite = split_invariant_subspaces(M).basis_s
    limit = limit_stable_matrix(sys, frame, eq, data, xi, omega)
    limit_q, _ = np.linalg.qr(limit)
    angles = sla.subspace_angles(finite, limit_q)
    return float(angles.max()) if angles.size else 0.0


@dataclass
class Pipeline:
    """All derived objects for one system, in dependency order."""

    sys: RelaxationSystem
    frame: KernelFrame
    eq: EquilibriumFrame
    data: ReductionData
    rbc: ReducedBC
    closure: ClosureSolve


def derive_all(sys: RelaxationSystem, spec: SamplingSpec | None = None) -> Pipeline:
    """Run the kernel frame -> reduction -> reduced BC -> closure chain."""
    from .spectral import build_kernel_frame

    frame = build_kernel_frame(sys)
    eq = build_equilibrium_frame(sys)
    data = build_reduction_data(sys, frame, eq)
    rbc = derive_reduced_bc(sys, frame, eq, data, spec=spec)
    closure = build_closure(sys, frame, eq, data, rbc)
    return Pipeline(sys=sys, frame=frame, eq=eq, data=data, rbc=rbc, closure=closure)


def render_reduced_bc(sys: RelaxationSystem, rbc: ReducedBC, digits: int = 6) -> str:
    """Human-readable rendering of the reduced boundary condition."""
    coeff = np.round(rbc.coefficient, digits)
    B_o = np.round(rbc.B_o, digits)
    lines = ["reduced boundary condition  (B_o B_u) ubar(0, t) = B_o b(t)"]
    labels = sys.labels or [f"u{i+1}" for i in range(sys.n - sys.r)]
    for i in range(coeff.shape[0]):
        lhs = " + ".join(
            f"{coeff[i, j]:+g}*{labels[j]}(0,t)" for j in range(coeff.shape[1])
        )
        rhs = " + ".join(
            f"{B_o[i, j]:+g}*b{j+1}(t)" for j in range(B_o.shape[1])
        )
        lines.append(f"  {lhs} = {rhs}")
    return "\n".join(lines)


__all__ = [
    "EquilibriumFrame",
    "ReductionData",
    "ReducedBC",
    "ClosureSolve",
    "build_equilibrium_frame",
    "build_reduction_data",
    "equilibrium_reduced_matrix",
    "limit_stable_matrix",
    "derive_reduced_bc",
    "build_closure",
    "solve_closure",
    "large_eta_expansion_check",
    "limit_subspace_angle",
    "render_reduced_bc",
    "Pipeline",
    "derive_all",
]
