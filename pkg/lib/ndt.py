"""
NDT registration engine

Objective: E(X, t) = sum_i exp(-d_i^T C_i^-1 d_i / 2) with d_i the offset
of the transformed point from the mean of its ND voxel. Newton's method
minimizes f(t) = -E over t = <x, y, z, roll, pitch, yaw>.

Usage:
    grid = build_nd_grid(reference, resolution=1.0)
    result = newton_align(grid, scan, Pose6.identity(), RunConfig())
    print(result.pose, result.iterations, result.fitness_score)
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, eigh
from scipy.spatial import cKDTree

from .errors import EmptyCloudError, OptimizationBreakdown
from .geometry import Pose6, Scan, axis_rotations, to_matrix
from .nd_grid import DEFAULT_MIN_POINTS, NDVoxelGrid, build_nd_grid
from .run_config import RunConfig

logger = logging.getLogger(__name__)

DAMPING_START = 1e-4
DAMPING_FACTOR = 10.0
MAX_DAMPING_INCREASES = 10
MONOTONE_SLACK = 1e-12
PD_TOLERANCE = 1e-9
NUMERIC_GRADIENT_STEP = 1e-6
NUMERIC_HESSIAN_STEP = 1e-4


@dataclass(frozen=True)
class RegistrationResult:
    """
    Outcome of one alignment

    ``transformation_probability`` is E/N (same as ``tp_score``);
    ``tp_paper`` is fitness_score/N. With neighbors27 association E may
    exceed N, so tp_score is only bounded by 1 in single-voxel mode.
    """

    pose: Pose6
    iterations: int
    fitness_score: float
    transformation_probability: float
    tp_paper: float
    converged: bool
    score_trace: Tuple[float, ...] = ()
    n_points: int = 0
    n_correspondences: int = 0
    wall_ms: float = 0.0
    breakdown: bool = False
    rejected: bool = False
    added: bool = False

    @property
    def tp_score(self) -> float:
        return self.transformation_probability

    def flagged(self, **flags) -> "RegistrationResult":
        """Copy with pipeline flags (added / rejected / breakdown / wall_ms) set"""
        return replace(self, **flags)


class FitnessMetrics(NamedTuple):
    fitness_score: float
    transformation_probability: float
    tp_paper: float


# ---------------------------------------------------------------------------
# Rotation derivatives
# ---------------------------------------------------------------------------

def _rotation_derivatives(roll: float, pitch: float, yaw: float):
    """First and second partials of R = Rz Ry Rx w.r.t. (roll, pitch, yaw)"""
    rx, ry, rz = axis_rotations(roll, pitch, yaw)
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)

    drx = np.array([[0.0, 0.0, 0.0], [0.0, -sr, -cr], [0.0, cr, -sr]])
    d2rx = np.array([[0.0, 0.0, 0.0], [0.0, -cr, sr], [0.0, -sr, -cr]])
    dry = np.array([[-sp, 0.0, cp], [0.0, 0.0, 0.0], [-cp, 0.0, -sp]])
    d2ry = np.array([[-cp, 0.0, -sp], [0.0, 0.0, 0.0], [sp, 0.0, -cp]])
    drz = np.array([[-sy, -cy, 0.0], [cy, -sy, 0.0], [0.0, 0.0, 0.0]])
    d2rz = np.array([[-cy, sy, 0.0], [-sy, -cy, 0.0], [0.0, 0.0, 0.0]])

    first = [rz @ ry @ drx, rz @ dry @ rx, drz @ ry @ rx]
    second = [[None] * 3 for _ in range(3)]
    second[0][0] = rz @ ry @ d2rx
    second[0][1] = rz @ dry @ drx
    second[0][2] = drz @ ry @ drx
    second[1][1] = rz @ d2ry @ rx
    second[1][2] = drz @ dry @ rx
    second[2][2] = d2rz @ ry @ rx
    for a in range(3):
        for b in range(a):
            second[a][b] = second[b][a]
    return first, second


# ---------------------------------------------------------------------------
# Objective
# ---------------------------------------------------------------------------

def _evaluate(grid: NDVoxelGrid, xyz: np.ndarray, vector: np.ndarray, neighbor_search: str, derivatives: bool):
    """
    Accumulate E (and g, H of f = -E) at pose vector ``vector``

    Returns:
        (E, g, H, n_pairs); g and H are None when derivatives is False
    """
    pose = Pose6.from_vector(vector)
    R, t = to_matrix(pose)
    moved = xyz @ R.T + t
    point_idx, cell_idx = grid.correspondences(moved, neighbor_search)
    n_pairs = point_idx.size
    if n_pairs == 0:
        return 0.0, np.zeros(6), np.zeros((6, 6)), 0

    d = moved[point_idx] - grid.means[cell_idx]
    c_inv = grid.inverse_covariances[cell_idx]
    cd = np.einsum("mij,mj->mi", c_inv, d)
    e = np.exp(-0.5 * np.einsum("mi,mi->m", d, cd))
    E = float(e.sum())
    if not derivatives:
        return E, None, None, n_pairs

    x = xyz[point_idx]
    first, second = _rotation_derivatives(pose.roll, pose.pitch, pose.yaw)
    jac = np.zeros((n_pairs, 3, 6))
    jac[:, 0, 0] = jac[:, 1, 1] = jac[:, 2, 2] = 1.0
    for k in range(3):
        jac[:, :, 3 + k] = x @ first[k].T

    a = np.einsum("mi,mik->mk", cd, jac)
    cj = np.einsum("mij,mjk->mik", c_inv, jac)
    jcj = np.einsum("mik,mil->mkl", jac, cj)

    g = (e[:, None] * a).sum(axis=0)
    H = np.einsum("m,mkl->kl", e, jcj) - np.einsum("m,mk,ml->kl", e, a, a)
    for k in range(3):
        for l in range(k, 3):
            h = x @ second[k][l].T
            term = float(np.sum(e * np.einsum("mi,mi->m", cd, h)))
            H[3 + k, 3 + l] += term
            if l != k:
                H[3 + l, 3 + k] += term
    H = 0.5 * (H + H.T)
    return E, g, H, n_pairs


def _numeric_evaluate(grid: NDVoxelGrid, xyz: np.ndarray, vector: np.ndarray, neighbor_search: str):
    """Central-difference g and H; debugging only, discontinuous at cell borders"""

    def f(v):
        return -_evaluate(grid, xyz, v, neighbor_search, False)[0]

    def gradient(v, step):
        g = np.zeros(6)
        for k in range(6):
            dv = np.zeros(6)
            dv[k] = step
            g[k] = (f(v + dv) - f(v - dv)) / (2.0 * step)
        return g

    E, _, _, n_pairs = _evaluate(grid, xyz, vector, neighbor_search, False)
    g = gradient(vector, NUMERIC_GRADIENT_STEP)
    H = np.zeros((6, 6))
    for k in range(6):
        dv = np.zeros(6)
        dv[k] = NUMERIC_HESSIAN_STEP
        H[:, k] = (gradient(vector + dv, NUMERIC_GRADIENT_STEP)
                   - gradient(vector - dv, NUMERIC_GRADIENT_STEP)) / (2.0 * NUMERIC_HESSIAN_STEP)
    return E, g, 0.5 * (H + H.T), n_pairs


def score(grid: NDVoxelGrid, scan: Scan, pose: Pose6, neighbor_search: str = "single") -> float:
    """
    Objective E of a scan at a pose

    Points whose voxel has no distribution contribute 0, so 0 <= E <= N
    in single-voxel mode.

    Example:
        >>> score(grid, scan, Pose6.identity())
        1843.7
    """
    if scan.is_empty:
        return 0.0
    return _evaluate(grid, scan.xyz, pose.as_vector(), neighbor_search, False)[0]


def score_derivatives(
    grid: NDVoxelGrid,
    scan: Scan,
    pose: Pose6,
    neighbor_search: str = "single",
    mode: str = "analytic",
) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    E with gradient and Hessian of f = -E at a pose

    Args:
        mode: "analytic" (chain rule through R x + t) or "numeric"

    Returns:
        (E, g (6,), H (6, 6) symmetric)
    """
    if scan.is_empty:
        return 0.0, np.zeros(6), np.zeros((6, 6))
    if mode == "numeric":
        E, g, H, _ = _numeric_evaluate(grid, scan.xyz, pose.as_vector(), neighbor_search)
    else:
        E, g, H, _ = _evaluate(grid, scan.xyz, pose.as_vector(), neighbor_search, True)
    return E, g, H


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def _fitness(tree: cKDTree, moved: np.ndarray, cap: float) -> float:
    distances, _ = tree.query(moved, k=1)
    return float(np.mean(np.minimum(distances, cap)))


def fitness_metrics(
    reference: Scan,
    scan: Scan,
    pose: Pose6,
    cap: float = 1.0,
    grid: Optional[NDVoxelGrid] = None,
    resolution: float = 1.0,
    neighbor_search: str = "single",
) -> FitnessMetrics:
    """
    Fitness score and transformation probability of a scan at a pose

    fitness_score is the mean capped nearest-reference distance;
    transformation_probability is E/N on ``grid`` (built from the
    reference at ``resolution`` when not given); tp_paper is fitness/N.

    Raises:
        EmptyCloudError: either cloud is empty
    """
    if reference.is_empty or scan.is_empty:
        raise EmptyCloudError("fitness metrics need non-empty clouds")
    n = len(scan)
    tree = grid.kdtree if grid is not None else cKDTree(reference.xyz)
    R, t = to_matrix(pose)
    moved = scan.xyz @ R.T + t
    fitness = _fitness(tree, moved, cap)
    if grid is None:
        grid = build_nd_grid(reference, resolution, DEFAULT_MIN_POINTS)
    E = _evaluate(grid, scan.xyz, pose.as_vector(), neighbor_search, False)[0]
    return FitnessMetrics(fitness, E / n, fitness / n)


# ---------------------------------------------------------------------------
# Newton optimization
# ---------------------------------------------------------------------------

def _clamp_step(step: np.ndarray, max_translation: float, max_rotation: float) -> np.ndarray:
    out = step.copy()
    nt = np.linalg.norm(out[:3])
    if nt > max_translation:
        out[:3] *= max_translation / nt
    nr = np.linalg.norm(out[3:])
    if nr > max_rotation:
        out[3:] *= max_rotation / nr
    return out


def _step_magnitude(step: np.ndarray) -> float:
    return max(float(np.linalg.norm(step[:3])), float(np.linalg.norm(step[3:])))


class _Curvature(NamedTuple):
    """Eigen-decomposition of H used for every damped solve of one iteration"""

    values: np.ndarray
    vectors: np.ndarray
    scale: float

    @property
    def positive_definite(self) -> bool:
        return bool(self.values[0] > PD_TOLERANCE * self.scale)

    @property
    def base_shift(self) -> float:
        """Smallest lambda that makes H + lambda I positive definite"""
        if self.positive_definite:
            return 0.0
        return -float(self.values[0]) + PD_TOLERANCE * self.scale


def _curvature(H: np.ndarray) -> Optional[_Curvature]:
    if not np.all(np.isfinite(H)):
        return None
    try:
        values, vectors = eigh(H)
    except LinAlgError:
        return None
    return _Curvature(values, vectors, max(1.0, float(np.max(np.abs(values)))))


def _solve(curvature: _Curvature, g: np.ndarray, damping: float) -> Optional[np.ndarray]:
    """Step -(H + damping I)^-1 g, None when that matrix is not positive definite"""
    shifted = curvature.values + damping
    if shifted[0] <= 0.0:
        return None
    step = -curvature.vectors @ ((curvature.vectors.T @ g) / shifted)
    if not np.all(np.isfinite(step)):
        return None
    return step


def _damping_schedule(curvature: _Curvature):
    """lambda values tried in order: the base shift, then MAX_DAMPING_INCREASES x10 increases"""
    base = curvature.base_shift
    yield base
    damping = DAMPING_START * curvature.scale
    for _ in range(MAX_DAMPING_INCREASES):
        yield base + damping
        damping *= DAMPING_FACTOR


@dataclass
class _Progress:
    vector: np.ndarray
    f: float
    g: np.ndarray
    H: np.ndarray
    n_pairs: int
    iterations: int = 0
    trace: list = field(default_factory=list)


def newton_align(grid: NDVoxelGrid, scan: Scan, initial: Pose6, config: RunConfig) -> RegistrationResult:
    """
    Register a scan to an ND grid with safeguarded Newton iterations

    Each iteration solves (H + lambda I) dt = -g. lambda starts at 0 when H
    is positive definite, otherwise at the shift that just makes it so.
    Each time the clamped step would increase f, lambda grows by
    1e-4 * s, x10 per rejection (s = max(1, max |eig H|)), at most
    MAX_DAMPING_INCREASES times, and resets on the next iteration.
    Convergence is judged on the undamped Newton step at a positive
    definite H: max(|dt_translation|, |dt_rotation|) < convergence_epsilon.
    A damped step never signals convergence.

    Raises:
        EmptyCloudError: grid or scan empty
        OptimizationBreakdown: no correspondences, or damping exhausted;
            ``.result`` carries the best-so-far pose, converged=False
    """
    if grid.is_empty:
        raise EmptyCloudError("empty reference grid")
    if scan.is_empty:
        raise EmptyCloudError("empty scan")

    started = time.perf_counter()
    xyz = scan.xyz
    mode = config.neighbor_search

    if config.derivatives == "numeric":
        def evaluate(v):
            return _numeric_evaluate(grid, xyz, v, mode)
    else:
        def evaluate(v):
            return _evaluate(grid, xyz, v, mode, True)

    vector = initial.as_vector()
    E, g, H, n_pairs = evaluate(vector)
    state = _Progress(vector=vector, f=-E, g=g, H=H, n_pairs=n_pairs, trace=[-E])

    def result(converged: bool, breakdown: bool = False) -> RegistrationResult:
        pose = Pose6.from_vector(state.vector)
        R, t = to_matrix(pose)
        fitness = _fitness(grid.kdtree, xyz @ R.T + t, config.effective_fitness_cap)
        n = len(scan)
        return RegistrationResult(
            pose=pose,
            iterations=state.iterations,
            fitness_score=fitness,
            transformation_probability=-state.f / n,
            tp_paper=fitness / n,
            converged=converged,
            score_trace=tuple(state.trace),
            n_points=n,
            n_correspondences=state.n_pairs,
            wall_ms=(time.perf_counter() - started) * 1e3,
            breakdown=breakdown,
        )

    if n_pairs == 0:
        raise OptimizationBreakdown("no scan point falls in an ND voxel", result=result(False, breakdown=True))

    def clamp(step):
        return _clamp_step(step, config.step_clamp_translation, config.step_clamp_rotation)

    converged = False
    while state.iterations < config.max_iterations:
        curvature = _curvature(state.H)
        newton_step = None
        if curvature is not None and curvature.positive_definite:
            newton_step = _solve(curvature, state.g, 0.0)
        at_optimum = newton_step is not None and _step_magnitude(clamp(newton_step)) < config.convergence_epsilon

        accepted = None
        if curvature is not None:
            for damping in _damping_schedule(curvature):
                step = _solve(curvature, state.g, damping)
                if step is None:
                    continue
                step = clamp(step)
                trial = state.vector + step
                E_t, g_t, H_t, n_t = evaluate(trial)
                if -E_t <= state.f + MONOTONE_SLACK:
                    accepted = (trial, -E_t, g_t, H_t, n_t)
                    break

        if accepted is None:
            if at_optimum:
                # f cannot drop further than rounding in E
                state.iterations += 1
                state.trace.append(state.f)
                converged = True
                break
            logger.warning("alignment breakdown after %d iterations: damping exhausted", state.iterations)
            raise OptimizationBreakdown("damping exhausted", result=result(False, breakdown=True))

        state.vector, state.f, state.g, state.H, state.n_pairs = accepted
        state.iterations += 1
        state.trace.append(state.f)
        if at_optimum:
            converged = True
            break

    out = result(converged)
    logger.debug("aligned %d points: %d iterations, converged=%s, fitness=%.4f",
                 out.n_points, out.iterations, out.converged, out.fitness_score)
    return out
