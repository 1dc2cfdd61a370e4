"""Inference-error surfaces on an (age, packet-length) grid.

For Gaussian AR targets observed through additive Gaussian noise, the optimal
predictor is linear MMSE, so the error surface is computable in closed form
from the stationary autocovariance.  Surfaces can also be loaded from CSV
(e.g. tables produced by an external training pipeline).  Evaluation clamps
ages beyond the grid to the last row.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np
import tomli
from scipy import linalg

LENGTH_MONOTONE_TOL = 1e-9
CLAMP_CONVERGENCE_TOL = 1e-6
_LYAPUNOV_RESIDUAL_TOL = 1e-9


class UnstableProcessError(ValueError):
    """AR coefficients describe a non-stationary process."""


class SingularCovarianceError(ValueError):
    """Packet covariance matrix is numerically singular."""


class SurfaceFormatError(ValueError):
    """Malformed, incomplete or inconsistent error-surface CSV."""


@dataclass(frozen=True)
class ArProcessSpec:
    """Gaussian AR(p) target observed through additive Gaussian noise.

    The target follows Y_t = sum_j a_j Y_{t-j} + W_t with Var W_t = noise_var;
    the transmitted samples are V_t = Y_t + N_t with Var N_t = obs_noise_var.
    """

    coefficients: tuple[float, ...]
    noise_var: float
    obs_noise_var: float = 0.0

    def __post_init__(self) -> None:
        coeffs = tuple(float(a) for a in self.coefficients)
        object.__setattr__(self, "coefficients", coeffs)
        if not coeffs:
            raise ValueError("need at least one AR coefficient")
        if not all(math.isfinite(a) for a in coeffs):
            raise ValueError("AR coefficients must be finite")
        if not (math.isfinite(self.noise_var) and self.noise_var > 0):
            raise ValueError("noise_var must be positive and finite")
        if not (math.isfinite(self.obs_noise_var) and self.obs_noise_var >= 0):
            raise ValueError("obs_noise_var must be non-negative and finite")
        radius = max(abs(v) for v in np.linalg.eigvals(companion_matrix(self)))
        if radius >= 1.0 - 1e-10:
            raise UnstableProcessError(
                f"unstable process: companion spectral radius {radius:.8f} is not < 1"
            )

    @property
    def order(self) -> int:
        return len(self.coefficients)


def companion_matrix(spec: ArProcessSpec) -> np.ndarray:
    """Companion form of the AR recursion (state = last p target values)."""
    p = spec.order
    mat = np.zeros((p, p))
    mat[0, :] = spec.coefficients
    if p > 1:
        mat[1:, :-1] = np.eye(p - 1)
    return mat


def ar_stationary_autocov(spec: ArProcessSpec, max_lag: int) -> np.ndarray:
    """Autocovariance r(0..max_lag) of the stationary target process.

    Solves the companion-form stationary covariance P = A P A^T + Q directly,
    reads r(0..p-1) from the first row, and extends with the AR recursion
    r(k) = sum_j a_j r(k-j).
    """
    if max_lag < 0:
        raise ValueError("max_lag must be non-negative")
    p = spec.order
    a_mat = companion_matrix(spec)
    q_mat = np.zeros((p, p))
    q_mat[0, 0] = spec.noise_var
    cov = linalg.solve_discrete_lyapunov(a_mat, q_mat)
    residual = np.max(np.abs(cov - a_mat @ cov @ a_mat.T - q_mat))
    scale = max(1.0, float(abs(cov[0, 0])))
    if not np.isfinite(residual) or residual > _LYAPUNOV_RESIDUAL_TOL * scale:
        raise UnstableProcessError(
            f"unstable process: stationary covariance residual {residual:.3e}"
        )
    r = np.empty(max_lag + 1)
    upto = min(p, max_lag + 1)
    r[:upto] = cov[0, :upto]
    coeffs = np.asarray(spec.coefficients)
    for k in range(p, max_lag + 1):
        r[k] = coeffs @ r[k - p : k][::-1]
    return r


def _mmse(r: np.ndarray, obs_noise_var: float, age: int, length: int) -> float:
    """Residual variance of the best linear predictor of the target from an
    l-sample packet whose freshest sample is `age` slots old."""
    r0 = float(r[0])
    cross = r[age : age + length]
    gram = linalg.toeplitz(r[:length])
    if obs_noise_var:
        gram = gram + obs_noise_var * np.eye(length)
    try:
        weights = linalg.solve(gram, cross, assume_a="pos")
    except linalg.LinAlgError as exc:
        raise SingularCovarianceError(f"singular covariance: {exc}") from exc
    value = r0 - float(cross @ weights)
    return min(max(value, 0.0), r0)


def ar_inference_error(spec: ArProcessSpec, age: int, length: int) -> float:
    """Exact inference error for one (age, length) cell of an AR source."""
    if age < 0:
        raise ValueError("age must be non-negative")
    if length < 1:
        raise ValueError("length must be at least 1")
    r = ar_stationary_autocov(spec, age + length - 1)
    return _mmse(r, spec.obs_noise_var, age, length)


@dataclass(frozen=True, eq=False)
class ErrorSurface:
    """Tabulated error values for ages {0..delta_max} x lengths {1..l_max}.

    Read-only after construction; ages past delta_max evaluate to the last
    row (clamped extension).
    """

    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 2 or vals.shape[0] < 2 or vals.shape[1] < 1:
            raise ValueError("values must be (delta_max+1) x l_max with delta_max >= 1")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise ValueError("error values must be finite and non-negative")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def delta_max(self) -> int:
        return self.values.shape[0] - 1

    @property
    def l_max(self) -> int:
        return self.values.shape[1]

    def column(self, length: int) -> np.ndarray:
        if not 1 <= length <= self.l_max:
            raise ValueError("length out of range")
        return self.values[:, length - 1]

    def truncated(self, delta_max: int) -> "ErrorSurface":
        """Copy of the surface clamped at a smaller delta_max."""
        if not 1 <= delta_max <= self.delta_max:
            raise ValueError("delta_max out of range")
        return ErrorSurface(self.values[: delta_max + 1])


def eval_error(surface: ErrorSurface, age: int, length: int) -> float:
    """Table value at (age, length); ages beyond the grid clamp to the last row."""
    if age < 0:
        raise ValueError("age must be non-negative")
    if not 1 <= length <= surface.l_max:
        raise ValueError("length out of range")
    return float(surface.values[min(age, surface.delta_max), length - 1])


def build_error_surface(spec: ArProcessSpec, delta_max: int, l_max: int) -> ErrorSurface:
    """Exact error surface of an AR source on the full (age, length) grid."""
    if delta_max < 1:
        raise ValueError("delta_max must be at least 1")
    if l_max < 1:
        raise ValueError("l_max must be at least 1")
    r = ar_stationary_autocov(spec, delta_max + l_max - 1)
    r0 = float(r[0])
    vals = np.empty((delta_max + 1, l_max))
    for length in range(1, l_max + 1):
        gram = linalg.toeplitz(r[:length])
        if spec.obs_noise_var:
            gram = gram + spec.obs_noise_var * np.eye(length)
        try:
            factor = linalg.cho_factor(gram)
        except linalg.LinAlgError as exc:
            raise SingularCovarianceError(f"singular covariance: {exc}") from exc
        for age in range(delta_max + 1):
            cross = r[age : age + length]
            value = r0 - float(cross @ linalg.cho_solve(factor, cross))
            vals[age, length - 1] = min(max(value, 0.0), r0)
    worst = float(np.max(vals[:, 1:] - vals[:, :-1])) if l_max > 1 else 0.0
    if worst > LENGTH_MONOTONE_TOL:
        raise RuntimeError(
            f"surface not non-increasing in packet length (max increase {worst:.3e})"
        )
    tail_gap = float(np.max(np.abs(vals[-1] - vals[-2])))
    if tail_gap > CLAMP_CONVERGENCE_TOL:
        warnings.warn(
            f"error surface still changing at age {delta_max} "
            f"(last-row gap {tail_gap:.2e}); the grid may be too short for clamping",
            RuntimeWarning,
            stacklevel=2,
        )
    return ErrorSurface(vals)


def save_error_surface(surface: ErrorSurface, path) -> None:
    """Write the surface as CSV (header delta,length,error; age-major rows)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["delta", "length", "error"])
        for age in range(surface.delta_max + 1):
            for length in range(1, surface.l_max + 1):
                writer.writerow([age, length, repr(float(surface.values[age, length - 1]))])


def load_error_surface(path) -> ErrorSurface:
    """Parse a surface CSV, validating grid completeness and value sanity."""
    entries: dict[tuple[int, int], float] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["delta", "length", "error"]:
            raise SurfaceFormatError(f"expected header 'delta,length,error', got {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise SurfaceFormatError(f"row {lineno}: expected 3 fields, got {len(row)}")
            try:
                age = int(row[0])
                length = int(row[1])
                value = float(row[2])
            except ValueError as exc:
                raise SurfaceFormatError(f"row {lineno}: {exc}") from exc
            if age < 0 or length < 1:
                raise SurfaceFormatError(f"row {lineno}: delta must be >= 0 and length >= 1")
            if not math.isfinite(value) or value < 0:
                raise SurfaceFormatError(f"row {lineno}: negative or non-finite error {row[2]}")
            key = (age, length)
            if key in entries:
                raise SurfaceFormatError(f"row {lineno}: duplicate entry for delta={age}, length={length}")
            entries[key] = value
    if not entries:
        raise SurfaceFormatError("empty surface file")
    delta_max = max(k[0] for k in entries)
    l_max = max(k[1] for k in entries)
    if delta_max < 1:
        raise SurfaceFormatError("incomplete grid: need ages 0 and 1 at minimum")
    if len(entries) != (delta_max + 1) * l_max:
        raise SurfaceFormatError(
            f"incomplete grid: {len(entries)} rows for a "
            f"{delta_max + 1} x {l_max} grid"
        )
    vals = np.empty((delta_max + 1, l_max))
    for age in range(delta_max + 1):
        for length in range(1, l_max + 1):
            if (age, length) not in entries:
                raise SurfaceFormatError(f"incomplete grid: missing delta={age}, length={length}")
            vals[age, length - 1] = entries[(age, length)]
    return ErrorSurface(vals)


def load_ar_spec(path) -> ArProcessSpec:
    """Read an AR process spec from a TOML file.

    Keys: order, coefficients (list of order reals), noise_var, obs_noise_var.
    """
    with open(path, "rb") as fh:
        data = tomli.load(fh)
    return ar_spec_from_dict(data)


def ar_spec_from_dict(data: dict) -> ArProcessSpec:
    try:
        order = int(data["order"])
        coefficients = [float(a) for a in data["coefficients"]]
        noise_var = float(data["noise_var"])
    except KeyError as exc:
        raise ValueError(f"AR spec missing key {exc}") from exc
    obs_noise_var = float(data.get("obs_noise_var", 0.0))
    if order != len(coefficients):
        raise ValueError(
            f"AR spec order {order} does not match {len(coefficients)} coefficients"
        )
    return ArProcessSpec(tuple(coefficients), noise_var, obs_noise_var)
