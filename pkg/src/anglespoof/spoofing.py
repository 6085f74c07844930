"""Blind adversarial precoder design forcing a false angular geometry.

The UE replaces the nominal sounding precoders with per-combiner matrices
{F_s} so that every received sweep looks like it came from a chosen target
angle set, for *some* gain vector, without knowing the true gains.  With
Z_s(.) the per-combiner observation blocks this is the relaxed problem

    minimize_{F_s, d, lambda}  sum_s || Z_s({F_s}, true) d - Z_s(F, target) lambda ||^2
    subject to                 |F_s(i, j)| <= 1/sqrt(N_t),  ||lambda||^2 <= p_max,

solved by block-coordinate descent.  Each block has a closed-form or
bisection-resolved exact minimizer, so the objective never increases:

* precoder columns: per (s, m) a phase-aligned, amplitude-clipped vector
  built from b_s (the adjoint of f -> Z_s(., true) d evaluated per column)
  with the clipping level beta_m found by bisection;
* d: unconstrained least squares against the stacked target observation;
* lambda: least squares, switching to a ridge solution with the ridge
  weight bisected onto the power budget when the constraint is active.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .channel import ObservationOperator, PrecoderSet, SoundingCodebook, build_observation
from .errors import NumericalFailureError
from .geometry import AngleVector, steering

#: Absolute tolerance on the beta bisection's defining equation.
BETA_TOL = 1e-10

#: Relative tolerance on ||lambda||^2 = p_max in the ridge branch.
RIDGE_TOL = 1e-8


@dataclass(frozen=True)
class SpoofTarget:
    """Target angle vector and the equivalent-gain power budget."""

    target_angles: AngleVector
    p_max: float

    def __post_init__(self):
        if not self.p_max > 0:
            raise ValueError("p_max must be positive")


@dataclass
class SpoofState:
    """Optimizer block variables and the per-cycle objective trace."""

    precoders: PrecoderSet
    d: np.ndarray
    lam: np.ndarray
    objective_trace: np.ndarray
    iterations: int
    converged: bool


@dataclass
class SpoofDiagnostics:
    """Convergence record: objectives, block costs, and the range-inclusion residual."""

    final_objective: float
    subspace_residual: float
    per_iteration_block_costs: list
    subspace_residual_trace: np.ndarray
    degenerate_blocks: list = field(default_factory=list)


def _tensor_of(precoders):
    if isinstance(precoders, PrecoderSet):
        return precoders.per_measurement
    return np.asarray(precoders, dtype=complex)


def _spoofed_operator(tensor, true_angles, codebook) -> np.ndarray:
    return build_observation(
        PrecoderSet(tensor), codebook.combiners, true_angles
    ).matrix


def target_observation(target_angles: AngleVector, codebook: SoundingCodebook) -> ObservationOperator:
    """Nominal-codebook observation operator at the target angles."""
    return build_observation(codebook.precoders, codebook.combiners, target_angles)


def spoof_objective(precoders, d, lam, true_angles, target_angles, codebook) -> float:
    """sum_s ||Z_s({F_s}, true) d - Z_s(F, target) lambda||^2, stacked."""
    delta = _spoofed_operator(_tensor_of(precoders), true_angles, codebook) @ d
    delta = delta - target_observation(target_angles, codebook).matrix @ lam
    return float(np.real(np.vdot(delta, delta)))


def compute_b_vectors(d, true_angles: AngleVector, codebook: SoundingCodebook) -> np.ndarray:
    """Per-combiner adjoint vectors b_s, stacked as (S, N_t).

    b_s is defined so that the column objective is |b_s^H f - ytarget|^2:
    b_s = conj(A_ue diag(d) A_bs^H w_s) with A_bs/A_ue the steering
    matrices at the true angles.
    """
    a_bs = steering(codebook.n_rx_antennas, true_angles.aoa)
    a_ue = steering(codebook.n_tx_antennas, true_angles.aod)
    v = codebook.combiners.conj().T @ a_bs          # (S, L): w_s^H a_bs
    return np.conj((v * np.asarray(d)) @ a_ue.T)    # (S, N_t)


def _bisect_beta(abs_b, targets, cap):
    """Solve sum_i |b_i| min(cap, beta |b_i|) = t for each target t.

    ``abs_b`` is (N_t,), ``targets`` a vector of levels already clipped to
    [0, cap * ||b||_1].  The left side is continuous and nondecreasing in
    beta, so bisection converges; the bracket upper end saturates every
    entry.  Returns beta per target with the defining equation satisfied
    to BETA_TOL absolute.
    """
    t = np.asarray(targets, dtype=float)
    beta = np.zeros_like(t)
    nz = abs_b[abs_b > 0]
    active = t > 0
    if nz.size == 0 or not np.any(active):
        return beta
    hi0 = abs_b.size * cap / np.min(nz)
    lo = np.zeros(int(np.count_nonzero(active)))
    hi = np.full(lo.shape, hi0)
    ta = t[active]
    mid = 0.5 * (lo + hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        psi = np.sum(abs_b[:, None] * np.minimum(cap, mid[None, :] * abs_b[:, None]), axis=0)
        if np.all(np.abs(psi - ta) <= BETA_TOL):
            break
        low_side = psi < ta
        lo = np.where(low_side, mid, lo)
        hi = np.where(low_side, hi, mid)
    beta[active] = mid
    return beta


def update_precoders(b_vectors, target_signal, amplitude_cap: float):
    """Exact per-column minimizers of |b_s^H f - ytarget_{s,m}|^2, |f_i| <= cap.

    Parameters
    ----------
    b_vectors : ndarray (S, N_t)
        Adjoint vectors from :func:`compute_b_vectors`.
    target_signal : ndarray (S, M)
        Noise-free target observation Z_s(F, target) lambda per combiner.
    amplitude_cap : float
        Per-entry modulus bound, 1/sqrt(N_t) for the analog array.

    Returns
    -------
    (tensor, degenerate) : ((S, N_t, M) ndarray, list of int)
        The optimal column aligns each entry's phase with
        angle(ytarget) + angle(b_i) and clips the amplitude profile
        beta * |b_i| at the cap; combiners with b_s = 0 contribute a
        constant objective term, get all-zero columns, and are reported
        in ``degenerate``.
    """
    b = np.asarray(b_vectors, dtype=complex)
    ytarget = np.asarray(target_signal, dtype=complex)
    n_comb, n_t = b.shape
    tensor = np.zeros((n_comb, n_t, ytarget.shape[1]), dtype=complex)
    degenerate = []
    for s in range(n_comb):
        abs_b = np.abs(b[s])
        b_l1 = float(np.sum(abs_b))
        if b_l1 == 0.0:
            degenerate.append(s)
            continue
        abs_y = np.abs(ytarget[s])
        phase = np.exp(1j * (np.angle(ytarget[s])[None, :] + np.angle(b[s])[:, None]))
        saturated = abs_y >= amplitude_cap * b_l1
        amp = np.full((n_t, ytarget.shape[1]), amplitude_cap)
        interior = ~saturated
        if np.any(interior):
            beta = _bisect_beta(abs_b, abs_y[interior], amplitude_cap)
            amp[:, interior] = np.minimum(amplitude_cap, beta[None, :] * abs_b[:, None])
        amp[abs_b == 0.0, :] = 0.0  # the clipped profile beta*|b_i| vanishes with b_i
        tensor[s] = amp * phase
    return tensor, degenerate


def update_d(precoders, lam, true_angles, target_angles, codebook) -> np.ndarray:
    """Least-squares surrogate gains: d = Z^+({F_s}, true) Z(F, target) lambda."""
    z_spoof = _spoofed_operator(_tensor_of(precoders), true_angles, codebook)
    rhs = target_observation(target_angles, codebook).matrix @ np.asarray(lam)
    rcond = max(z_spoof.shape) * np.finfo(float).eps
    d, *_ = np.linalg.lstsq(z_spoof, rhs, rcond=rcond)
    return d


def update_lambda(precoders, d, true_angles, target_angles, codebook, p_max: float) -> np.ndarray:
    """Optimal equivalent target gains under the power budget ||lambda||^2 <= p_max.

    The unconstrained least-squares solution is returned when it is
    feasible; otherwise the ridge solution (Zt^H Zt + mu I)^{-1} Zt^H Z d
    with mu bisected until ||lambda||^2 = p_max within RIDGE_TOL relative
    (approached from the feasible side, so the budget is never exceeded).
    """
    u = _spoofed_operator(_tensor_of(precoders), true_angles, codebook) @ np.asarray(d)
    zt = target_observation(target_angles, codebook).matrix
    rcond = max(zt.shape) * np.finfo(float).eps
    lam, *_ = np.linalg.lstsq(zt, u, rcond=rcond)
    if float(np.real(np.vdot(lam, lam))) <= p_max:
        return lam
    gram = zt.conj().T @ zt
    rhs = zt.conj().T @ u
    eye = np.eye(gram.shape[0])

    def solve(mu):
        lam_mu = np.linalg.solve(gram + mu * eye, rhs)
        return lam_mu, float(np.real(np.vdot(lam_mu, lam_mu)))

    mu_hi = 1e-12 * (1.0 + float(np.real(np.trace(gram))))
    for _ in range(600):
        lam_hi, norm_hi = solve(mu_hi)
        if norm_hi < p_max:
            break
        mu_hi *= 2.0
    else:
        raise NumericalFailureError("ridge bracket for the power budget did not close")
    mu_lo = 0.0
    for _ in range(300):
        if p_max - norm_hi <= RIDGE_TOL * p_max:
            return lam_hi
        mu_mid = 0.5 * (mu_lo + mu_hi)
        lam_mid, norm_mid = solve(mu_mid)
        if norm_mid > p_max:
            mu_lo = mu_mid
        else:
            mu_hi, lam_hi, norm_hi = mu_mid, lam_mid, norm_mid
    raise NumericalFailureError("power-budget bisection did not converge")


def subspace_residual(precoders, d, true_angles, target_angles, codebook) -> float:
    """Fraction of ||Z({F_s}, true) d||^2 outside the target observation range.

    This is the operative perfect-spoofing check: when it vanishes, the
    noiseless spoofed signal lies in range(Z(F, target)) and the target
    angles incur zero projected cost at the estimator.  Returns 0 for a
    zero spoofed vector (nothing is transmitted, nothing lies outside).
    """
    u = _spoofed_operator(_tensor_of(precoders), true_angles, codebook) @ np.asarray(d)
    total = float(np.real(np.vdot(u, u)))
    if total == 0.0:
        return 0.0
    zt = target_observation(target_angles, codebook).matrix
    rcond = max(zt.shape) * np.finfo(float).eps
    coeff, *_ = np.linalg.lstsq(zt, u, rcond=rcond)
    r = u - zt @ coeff
    return float(np.real(np.vdot(r, r))) / total


def _check_feasible(tensor, lam, cap, p_max, iteration):
    if np.max(np.abs(tensor)) > cap + 1e-9:
        raise NumericalFailureError("precoder amplitude cap violated", iteration)
    if float(np.real(np.vdot(lam, lam))) > p_max + 1e-9:
        raise NumericalFailureError("equivalent-gain power budget violated", iteration)


def run_spoof_design(
    true_angles: AngleVector,
    target_angles: AngleVector,
    codebook: SoundingCodebook,
    p_max: float | None = None,
    init_seed=None,
    max_iters: int = 200,
    tol: float = 1e-8,
) -> tuple[SpoofState, SpoofDiagnostics]:
    """Alternating minimization over precoders, d, and lambda.

    Cycles precoders -> d -> lambda from a feasible start (nominal
    precoders, lambda uniform on the power budget, d = lambda; with
    ``init_seed`` set, lambda instead gets random phases) and stops when
    the cycle-to-cycle objective change is within ``tol`` relative or at
    ``max_iters``.  Every block minimizer is exact, so the recorded
    objective trace is nonincreasing.

    Returns the final state plus diagnostics whose ``subspace_residual``
    certifies, when small, that the designed signal is consistent with
    the target angles (perfect spoofing at tolerance).
    """
    if max_iters < 1 or tol <= 0:
        raise ValueError("max_iters must be >= 1 and tol > 0")
    n_paths = true_angles.n_paths
    if target_angles.n_paths != n_paths:
        raise ValueError("target angle vector must match the true path count")
    if p_max is None:
        p_max = float(n_paths)
    target = SpoofTarget(target_angles=target_angles, p_max=float(p_max))

    pairs = np.stack([target_angles.aoa, target_angles.aod], axis=1)
    for i in range(n_paths):
        for j in range(i + 1, n_paths):
            if np.allclose(pairs[i], pairs[j], atol=1e-12):
                warnings.warn(
                    "coincident target angle pairs: the target operator is rank deficient",
                    stacklevel=2,
                )

    cap = 1.0 / math.sqrt(codebook.n_tx_antennas)
    scale = math.sqrt(target.p_max / n_paths)
    if init_seed is None:
        lam = np.full(n_paths, scale, dtype=complex)
    else:
        rng = np.random.default_rng(init_seed)
        lam = scale * np.exp(1j * rng.uniform(0.0, 2.0 * math.pi, n_paths))
    d = lam.copy()
    tensor = np.broadcast_to(
        codebook.precoders, (codebook.n_combiners,) + codebook.precoders.shape
    ).copy()

    zt = target_observation(target_angles, codebook).matrix

    def objective(t, dv, lv):
        delta = _spoofed_operator(t, true_angles, codebook) @ dv - zt @ lv
        return float(np.real(np.vdot(delta, delta)))

    trace = [objective(tensor, d, lam)]
    residuals = [subspace_residual(tensor, d, true_angles, target_angles, codebook)]
    block_costs = []
    degenerate = []
    converged = False
    iterations = 0
    for k in range(1, max_iters + 1):
        iterations = k
        b = compute_b_vectors(d, true_angles, codebook)
        ytarget = (zt @ lam).reshape(codebook.n_combiners, codebook.n_precoders)
        tensor, degen = update_precoders(b, ytarget, cap)
        degenerate.extend((k, s) for s in degen)
        c_after_f = objective(tensor, d, lam)
        d = update_d(tensor, lam, true_angles, target_angles, codebook)
        c_after_d = objective(tensor, d, lam)
        lam = update_lambda(tensor, d, true_angles, target_angles, codebook, target.p_max)
        c_after_lam = objective(tensor, d, lam)
        if not np.isfinite(c_after_lam):
            raise NumericalFailureError("non-finite spoofing objective", k)
        _check_feasible(tensor, lam, cap, target.p_max, k)
        block_costs.append((c_after_f, c_after_d, c_after_lam))
        residuals.append(subspace_residual(tensor, d, true_angles, target_angles, codebook))
        previous = trace[-1]
        trace.append(c_after_lam)
        if abs(previous - c_after_lam) <= tol * max(1.0, previous):
            converged = True
            break

    state = SpoofState(
        precoders=PrecoderSet(tensor),
        d=d,
        lam=lam,
        objective_trace=np.array(trace),
        iterations=iterations,
        converged=converged,
    )
    diagnostics = SpoofDiagnostics(
        final_objective=trace[-1],
        subspace_residual=residuals[-1],
        per_iteration_block_costs=block_costs,
        subspace_residual_trace=np.array(residuals),
        degenerate_blocks=degenerate,
    )
    return state, diagnostics


def communication_precoder(state: SpoofState, s_hat: int, m_hat: int) -> np.ndarray:
    """Column m_hat of F_{s_hat}: the precoder the selected beam was sounded with."""
    tensor = state.precoders.per_measurement
    if not (0 <= s_hat < tensor.shape[0] and 0 <= m_hat < tensor.shape[2]):
        raise IndexError(
            f"beam pair ({s_hat}, {m_hat}) outside the {tensor.shape[0]} x {tensor.shape[2]} sweep"
        )
    return tensor[s_hat, :, m_hat].copy()


def write_diagnostics_csv(state: SpoofState, diagnostics: SpoofDiagnostics, path):
    """Per-cycle convergence record: iteration, objective, subspace residual.

    Row 0 is the initial point; row k the state after cycle k.
    """
    with open(path, "w", newline="") as fh:
        fh.write("iteration,objective,subspace_residual\n")
        for i, (obj, res) in enumerate(
            zip(state.objective_trace, diagnostics.subspace_residual_trace)
        ):
            fh.write("%d,%.17g,%.17g\n" % (i, obj, res))
