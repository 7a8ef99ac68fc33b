"""Sliding-window bundle adjustment with optional sun-direction residuals.

Minimizes the Mahalanobis cost

    J = sum_k [ sum_j e_y(k,j)^T R_y^-1 e_y(k,j) + e_s(k)^T R_s^-1 e_s(k) ]

over window poses T_cam_base (the first held at identity to fix the gauge)
and base-frame landmark positions, where e_y is the stereo reprojection
residual and e_s the sun-direction residual (predicted minus measured unit
vector, plain Euclidean difference).

Damped Gauss-Newton: one linearization per outer iteration, Levenberg lambda
grows x10 while the step increases the cost and shrinks /10 on acceptance,
so the accepted cost sequence is monotone non-increasing.  The normal
equations are solved densely after eliminating landmarks with the Schur
complement (windows are small; landmark count dominates).

Pose updates are left-multiplicative SE(3) exponentials with tangent order
[rotation; translation].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .camera import (
    StereoIntrinsics,
    StereoObservation,
    project,
    project_jacobian,
)
from .geometry import Pose, Rotation, skew, so3_exp, _so3_left_jacobian
from .sun import SunMeasurement, predict_sun

__all__ = [
    "SolverSingularError",
    "CovarianceError",
    "SolverOptions",
    "WindowProblem",
    "WindowEstimate",
    "SolveReport",
    "reprojection_residual",
    "reprojection_jacobians",
    "sun_residual",
    "sun_pose_jacobian",
    "total_cost",
    "solve_window",
]


class SolverSingularError(RuntimeError):
    """Normal-equations solve failed (rank deficiency or non-finite system)."""


class CovarianceError(ValueError):
    """A residual covariance is not symmetric positive definite."""


@dataclass(frozen=True)
class SolverOptions:
    max_iters: int = 50
    lambda0: float = 1e-4
    update_tol: float = 1e-10
    cost_tol: float = 1e-9
    lambda_max: float = 1e12
    epsilon_z: float = 1e-6

    def __post_init__(self):
        if self.max_iters < 1 or self.lambda0 <= 0.0:
            raise ValueError("max_iters must be >= 1 and lambda0 > 0")
        if self.update_tol <= 0.0 or self.cost_tol <= 0.0:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    initial_cost: float
    final_cost: float
    converged: bool
    max_update_norm: float
    dropped_observations: int = 0


@dataclass(frozen=True)
class WindowEstimate:
    """Solved window: poses T_cam_base per window frame plus landmarks."""

    poses: tuple[Pose, ...]
    landmarks: np.ndarray


def _inv_spd(cov: np.ndarray, what: str) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (3, 3) or not np.allclose(cov, cov.T, atol=1e-9):
        raise CovarianceError(f"{what} must be a symmetric 3x3 matrix")
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise CovarianceError(f"{what} must be positive definite") from exc
    inv_chol = np.linalg.inv(chol)
    return inv_chol.T @ inv_chol


class WindowProblem:
    """One window's estimation problem.

    ``poses`` are initial guesses T_cam_base per window frame; the first must
    be identity (the base frame) and is never updated.  ``landmarks`` are
    base-frame positions.  ``observations`` is a list of
    ``(frame, landmark, StereoObservation)``; every landmark needs >= 2
    observations inside the window.  ``sun_measurements`` is a list of
    ``(frame, SunMeasurement)`` using window-local frame indices;
    ``t_base_world`` (T_base_world mapping world points into the base frame)
    and the world sun direction feed the prediction chain.
    """

    def __init__(
        self,
        poses: list[Pose],
        landmarks: np.ndarray,
        observations: list[tuple[int, int, StereoObservation]],
        intrinsics: StereoIntrinsics,
        sun_measurements: list[tuple[int, SunMeasurement]] = (),
        t_base_world: Pose | None = None,
        sun_world: np.ndarray | None = None,
    ):
        if len(poses) < 2:
            raise ValueError("a window needs at least 2 poses")
        base = poses[0]
        if (
            np.abs(base.rotation.matrix - np.eye(3)).max() > 1e-12
            or np.abs(base.translation).max() > 1e-12
        ):
            raise ValueError("the first window pose must be identity (gauge)")
        self.poses = list(poses)
        self.landmarks = np.array(landmarks, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(self.landmarks)):
            raise ValueError("landmark positions must be finite")
        self.intrinsics = intrinsics
        n_frames = len(poses)
        n_lm = self.landmarks.shape[0]

        if not observations:
            raise ValueError("a window needs observations")
        self.obs_frame = np.array([o[0] for o in observations], dtype=int)
        self.obs_lm = np.array([o[1] for o in observations], dtype=int)
        self.obs_y = np.array([o[2].uvd for o in observations], dtype=float)
        if self.obs_frame.min() < 0 or self.obs_frame.max() >= n_frames:
            raise ValueError("observation frame index out of range")
        if self.obs_lm.min() < 0 or self.obs_lm.max() >= n_lm:
            raise ValueError("observation landmark index out of range")
        counts = np.bincount(self.obs_lm, minlength=n_lm)
        if counts.min() < 2:
            bad = int(np.argmin(counts))
            raise ValueError(
                f"landmark {bad} has {int(counts[bad])} observation(s); need >= 2"
            )
        if len({(int(f), int(l)) for f, l in zip(self.obs_frame, self.obs_lm)}) != len(
            observations
        ):
            raise ValueError("duplicate (frame, landmark) observation")
        self.obs_info = np.stack(
            [_inv_spd(o[2].cov, "observation covariance") for o in observations]
        )

        sun_measurements = list(sun_measurements)
        self.sun_frame = np.array([f for f, _ in sun_measurements], dtype=int)
        if len(sun_measurements) and (
            self.sun_frame.min() < 0 or self.sun_frame.max() >= n_frames
        ):
            raise ValueError("sun measurement frame index out of range")
        self.sun_dir = (
            np.array([m.direction for _, m in sun_measurements], dtype=float)
            if sun_measurements
            else np.zeros((0, 3))
        )
        self.sun_info = (
            np.stack(
                [_inv_spd(m.cov, "sun covariance") for _, m in sun_measurements]
            )
            if sun_measurements
            else np.zeros((0, 3, 3))
        )
        self.t_base_world = t_base_world if t_base_world is not None else Pose.identity()
        if len(sun_measurements):
            if sun_world is None:
                raise ValueError("sun measurements require a world sun direction")
            sun_world = np.asarray(sun_world, dtype=float).reshape(3)
            if abs(float(np.linalg.norm(sun_world)) - 1.0) > 1e-3:
                raise ValueError("world sun direction must be a unit vector")
        self.sun_world = None if sun_world is None else np.asarray(sun_world, dtype=float)

    @property
    def n_frames(self) -> int:
        return len(self.poses)

    @property
    def n_landmarks(self) -> int:
        return self.landmarks.shape[0]


def reprojection_residual(
    t_cam_base: Pose,
    p_base: np.ndarray,
    y: StereoObservation | np.ndarray,
    k: StereoIntrinsics,
    eps_z: float = 1e-6,
) -> np.ndarray:
    """Predicted-minus-observed stereo residual g(T p) - y."""
    obs = y.uvd if isinstance(y, StereoObservation) else np.asarray(y, dtype=float)
    p_cam = t_cam_base.apply(np.asarray(p_base, dtype=float))
    return project(k, p_cam, eps_z=eps_z) - obs


def reprojection_jacobians(
    t_cam_base: Pose, p_base: np.ndarray, k: StereoIntrinsics
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic Jacobians of the reprojection residual.

    Returns ``(d_res/d_xi (3x6), d_res/d_p (3x3))`` where xi is the left
    SE(3) increment on T_cam_base ([rotation; translation]) and p the
    base-frame landmark.
    """
    p_cam = t_cam_base.apply(np.asarray(p_base, dtype=float))
    jg = project_jacobian(k, p_cam)
    j_pose = np.hstack([-jg @ skew(p_cam), jg])
    j_lm = jg @ t_cam_base.rotation.matrix
    return j_pose, j_lm


def sun_residual(
    t_cam_base: Pose,
    t_base_world: Pose,
    sun_world: np.ndarray,
    measurement: SunMeasurement | np.ndarray,
) -> np.ndarray:
    """Predicted-minus-measured camera-frame sun direction."""
    s = (
        measurement.direction
        if isinstance(measurement, SunMeasurement)
        else np.asarray(measurement, dtype=float)
    )
    if abs(float(np.linalg.norm(s)) - 1.0) > 1e-3:
        raise ValueError("sun measurement must be a unit vector")
    return predict_sun(t_cam_base, t_base_world, sun_world) - s


def sun_pose_jacobian(
    t_cam_base: Pose, t_base_world: Pose, sun_world: np.ndarray
) -> np.ndarray:
    """d(sun residual)/d_xi for the left SE(3) increment on T_cam_base.

    The translation block is zero: directions are translation invariant.
    """
    shat = predict_sun(t_cam_base, t_base_world, sun_world)
    return np.hstack([-skew(shat), np.zeros((3, 3))])


@dataclass
class _Evaluation:
    residuals: np.ndarray  # (n_obs, 3), zeroed where invalid
    valid: np.ndarray  # (n_obs,) bool
    p_cam: np.ndarray  # (n_obs, 3)
    sun_residuals: np.ndarray  # (n_sun, 3)
    sun_pred: np.ndarray  # (n_sun, 3)
    cost: float


class _State:
    """Mutable copy of the window variables during a solve."""

    def __init__(self, problem: WindowProblem):
        self.r = np.stack([p.rotation.matrix for p in problem.poses])
        self.t = np.stack([p.translation for p in problem.poses])
        self.lms = problem.landmarks.copy()

    def copy(self) -> "_State":
        out = object.__new__(_State)
        out.r = self.r.copy()
        out.t = self.t.copy()
        out.lms = self.lms.copy()
        return out

    def apply_update(self, dp: np.ndarray, dl: np.ndarray) -> "_State":
        """Left-multiplicative pose increments on frames 1..F-1."""
        out = self.copy()
        for i in range(dp.shape[0]):
            phi, rho = dp[i, :3], dp[i, 3:]
            r_inc = so3_exp(phi)
            out.r[i + 1] = r_inc @ self.r[i + 1]
            out.t[i + 1] = r_inc @ self.t[i + 1] + _so3_left_jacobian(phi) @ rho
        out.lms = self.lms + dl
        return out


def _batched_skew(v: np.ndarray) -> np.ndarray:
    n = v.shape[0]
    out = np.zeros((n, 3, 3))
    out[:, 0, 1] = -v[:, 2]
    out[:, 0, 2] = v[:, 1]
    out[:, 1, 0] = v[:, 2]
    out[:, 1, 2] = -v[:, 0]
    out[:, 2, 0] = -v[:, 1]
    out[:, 2, 1] = v[:, 0]
    return out


def _evaluate(problem: WindowProblem, state: _State, eps_z: float) -> _Evaluation:
    p_cam = (
        np.einsum("nij,nj->ni", state.r[problem.obs_frame], state.lms[problem.obs_lm])
        + state.t[problem.obs_frame]
    )
    valid = p_cam[:, 2] > eps_z
    z = np.where(valid, p_cam[:, 2], 1.0)
    k = problem.intrinsics
    pred = np.empty_like(p_cam)
    pred[:, 0] = k.fu * p_cam[:, 0] / z + k.cu
    pred[:, 1] = k.fv * p_cam[:, 1] / z + k.cv
    pred[:, 2] = k.fu * k.baseline_m / z
    res = pred - problem.obs_y
    res[~valid] = 0.0
    cost = float(np.einsum("ni,nij,nj->", res, problem.obs_info, res))

    if len(problem.sun_frame):
        s_base = problem.t_base_world.rotation.apply(problem.sun_world)
        sun_pred = np.einsum("nij,j->ni", state.r[problem.sun_frame], s_base)
        sun_res = sun_pred - problem.sun_dir
        cost += float(np.einsum("ni,nij,nj->", sun_res, problem.sun_info, sun_res))
    else:
        sun_pred = np.zeros((0, 3))
        sun_res = np.zeros((0, 3))
    return _Evaluation(res, valid, p_cam, sun_res, sun_pred, cost)


def total_cost(problem: WindowProblem, eps_z: float = 1e-6) -> float:
    """Mahalanobis cost of the problem at its initial state.

    Behind-camera observations are excluded, matching the solver's handling.
    """
    return _evaluate(problem, _State(problem), eps_z).cost


class _Linearization:
    """Normal-equation blocks at the current state (landmarks eliminated later)."""

    def __init__(self, problem: WindowProblem, state: _State, ev: _Evaluation):
        n_free = problem.n_frames - 1
        n_lm = problem.n_landmarks
        k = problem.intrinsics

        idx = np.flatnonzero(ev.valid)
        p_cam = ev.p_cam[idx]
        frames = problem.obs_frame[idx]
        lms_idx = problem.obs_lm[idx]
        info = problem.obs_info[idx]
        res = ev.residuals[idx]

        jg = np.zeros((len(idx), 3, 3))
        inv_z = 1.0 / p_cam[:, 2]
        inv_z2 = inv_z * inv_z
        jg[:, 0, 0] = k.fu * inv_z
        jg[:, 0, 2] = -k.fu * p_cam[:, 0] * inv_z2
        jg[:, 1, 1] = k.fv * inv_z
        jg[:, 1, 2] = -k.fv * p_cam[:, 1] * inv_z2
        jg[:, 2, 2] = -k.fu * k.baseline_m * inv_z2

        j_pose = np.concatenate(
            [-np.einsum("nij,njk->nik", jg, _batched_skew(p_cam)), jg], axis=2
        )  # (n, 3, 6)
        j_lm = np.einsum("nij,njk->nik", jg, state.r[frames])  # (n, 3, 3)

        w_res = np.einsum("nij,nj->ni", info, res)
        w_jp = np.einsum("nij,njk->nik", info, j_pose)
        w_jl = np.einsum("nij,njk->nik", info, j_lm)

        self.g_pose = np.zeros((n_free, 6))
        self.g_lm = np.zeros((n_lm, 3))
        self.h_pp = np.zeros((n_free, 6, 6))
        self.h_ll = np.zeros((n_lm, 3, 3))
        self.h_pl = np.zeros((n_free, n_lm, 6, 3))

        on_free = frames > 0
        cols = frames[on_free] - 1
        np.add.at(
            self.g_pose, cols, np.einsum("nki,nk->ni", j_pose[on_free], w_res[on_free])
        )
        np.add.at(self.g_lm, lms_idx, np.einsum("nki,nk->ni", j_lm, w_res))
        np.add.at(
            self.h_pp,
            cols,
            np.einsum("nki,nkj->nij", j_pose[on_free], w_jp[on_free]),
        )
        np.add.at(self.h_ll, lms_idx, np.einsum("nki,nkj->nij", j_lm, w_jl))
        np.add.at(
            self.h_pl,
            (cols, lms_idx[on_free]),
            np.einsum("nki,nkj->nij", j_pose[on_free], w_jl[on_free]),
        )

        # Sun terms touch only pose rotation blocks.
        if len(problem.sun_frame):
            on_free_sun = problem.sun_frame > 0
            if np.any(on_free_sun):
                s_cols = problem.sun_frame[on_free_sun] - 1
                j_sun = np.concatenate(
                    [
                        -_batched_skew(ev.sun_pred[on_free_sun]),
                        np.zeros((int(on_free_sun.sum()), 3, 3)),
                    ],
                    axis=2,
                )
                s_info = problem.sun_info[on_free_sun]
                s_res = ev.sun_residuals[on_free_sun]
                w_sres = np.einsum("nij,nj->ni", s_info, s_res)
                w_js = np.einsum("nij,njk->nik", s_info, j_sun)
                np.add.at(
                    self.g_pose, s_cols, np.einsum("nki,nk->ni", j_sun, w_sres)
                )
                np.add.at(
                    self.h_pp, s_cols, np.einsum("nki,nkj->nij", j_sun, w_js)
                )

    def solve(self, lam: float) -> tuple[np.ndarray, np.ndarray]:
        """Schur-eliminate landmarks and solve the damped normal equations."""
        n_free, n_lm = self.g_pose.shape[0], self.g_lm.shape[0]
        h_ll = self.h_ll + lam * np.eye(3)
        try:
            h_ll_inv = np.linalg.inv(h_ll)
        except np.linalg.LinAlgError as exc:
            raise SolverSingularError("landmark block inversion failed") from exc

        b_pose = -self.g_pose
        b_lm = -self.g_lm
        m = np.einsum("plij,ljk->plik", self.h_pl, h_ll_inv)
        s4 = np.einsum("plik,qljk->pqij", m, self.h_pl)
        s = np.zeros((6 * n_free, 6 * n_free))
        for p in range(n_free):
            for q in range(n_free):
                s[6 * p : 6 * p + 6, 6 * q : 6 * q + 6] = -s4[p, q]
            s[6 * p : 6 * p + 6, 6 * p : 6 * p + 6] += self.h_pp[p] + lam * np.eye(6)
        rhs = (b_pose - np.einsum("plik,lk->pi", m, b_lm)).reshape(-1)
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(rhs))):
            raise SolverSingularError("non-finite normal equations")
        try:
            dp = np.linalg.solve(s, rhs).reshape(n_free, 6)
        except np.linalg.LinAlgError as exc:
            raise SolverSingularError("pose system is singular") from exc
        back = b_lm - np.einsum("plik,pi->lk", self.h_pl, dp)
        dl = np.einsum("lij,lj->li", h_ll_inv, back)
        if not (np.all(np.isfinite(dp)) and np.all(np.isfinite(dl))):
            raise SolverSingularError("non-finite update")
        return dp, dl


def solve_window(
    problem: WindowProblem, opts: SolverOptions = SolverOptions()
) -> tuple[WindowEstimate, SolveReport]:
    """Damped Gauss-Newton solve of one window.

    Returns the estimate and a report; the accepted cost sequence is monotone
    non-increasing and the first pose stays exactly identity.
    """
    state = _State(problem)
    ev = _evaluate(problem, state, opts.epsilon_z)
    initial_cost = ev.cost
    cost = initial_cost
    lam = opts.lambda0
    iterations = 0
    converged = cost == 0.0
    update_norm = 0.0

    while not converged and iterations < opts.max_iters:
        lin = _Linearization(problem, state, ev)
        accepted = False
        while lam <= opts.lambda_max:
            dp, dl = lin.solve(lam)
            update_norm = max(
                float(np.abs(dp).max()), float(np.abs(dl).max()) if dl.size else 0.0
            )
            if update_norm < opts.update_tol:
                converged = True
                break
            candidate = state.apply_update(dp, dl)
            ev_new = _evaluate(problem, candidate, opts.epsilon_z)
            if math.isfinite(ev_new.cost) and ev_new.cost <= cost:
                state = candidate
                ev = ev_new
                iterations += 1
                rel_decrease = (cost - ev_new.cost) / max(cost, 1e-300)
                cost = ev_new.cost
                lam = max(lam / 10.0, 1e-15)
                accepted = True
                if (
                    update_norm < opts.update_tol
                    or rel_decrease < opts.cost_tol
                    or cost == 0.0
                ):
                    converged = True
                break
            lam *= 10.0
        if not accepted:
            break

    poses = [Pose.identity()]
    for i in range(1, problem.n_frames):
        poses.append(Pose(Rotation(state.r[i], _trusted=True), state.t[i]))
    estimate = WindowEstimate(tuple(poses), state.lms)
    report = SolveReport(
        iterations=iterations,
        initial_cost=initial_cost,
        final_cost=cost,
        converged=converged,
        max_update_norm=update_norm,
        dropped_observations=int((~ev.valid).sum()),
    )
    return estimate, report
