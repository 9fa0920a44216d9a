"""Input-validation helpers used at public API boundaries."""

import numpy as np

from .errors import InputValidationError


def check_points(pts, name="points", allow_empty=False):
    """Coerce to a finite (N, 3) float64 array.

    Accepts anything array-like; rejects non-finite values and wrong shapes.
    """
    arr = np.asarray(pts, dtype=np.float64)
    if arr.ndim == 1 and arr.size == 0:
        arr = arr.reshape(0, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise InputValidationError(f"{name} must have shape (N, 3), got {arr.shape}")
    if not allow_empty and arr.shape[0] == 0:
        raise InputValidationError(f"{name} must be non-empty")
    if not np.isfinite(arr).all():
        raise InputValidationError(f"{name} contains non-finite values")
    return arr


def check_vector3(v, name="vector"):
    arr = np.asarray(v, dtype=np.float64).reshape(-1)
    if arr.shape != (3,):
        raise InputValidationError(f"{name} must be a 3-vector, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise InputValidationError(f"{name} contains non-finite values")
    return arr


def check_rotation(mat, name="rotation", tol=1e-9):
    """Validate a 3x3 rotation matrix: orthonormal and det +1 within tol."""
    arr = np.asarray(mat, dtype=np.float64)
    if arr.shape != (3, 3):
        raise InputValidationError(f"{name} must be 3x3, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise InputValidationError(f"{name} contains non-finite values")
    err = np.abs(arr.T @ arr - np.eye(3)).max()
    if err > tol:
        raise InputValidationError(
            f"{name} is not orthonormal (max deviation {err:.3e} > {tol:.1e})"
        )
    det = np.linalg.det(arr)
    if abs(det - 1.0) > tol:
        raise InputValidationError(f"{name} must have det +1, got {det!r}")
    return arr


def check_weights(w, n, name="weights"):
    """Validate per-pair confidence weights: length n, finite, non-negative."""
    arr = np.asarray(w, dtype=np.float64).reshape(-1)
    if arr.shape[0] != n:
        raise InputValidationError(f"{name} length {arr.shape[0]} != pair count {n}")
    if not np.isfinite(arr).all():
        raise InputValidationError(f"{name} contains non-finite values")
    if (arr < 0).any():
        raise InputValidationError(f"{name} contains negative values")
    return arr


def check_positive(value, name):
    if not np.isfinite(value) or value <= 0:
        raise InputValidationError(f"{name} must be positive and finite, got {value!r}")
    return float(value)


def orthonormalize(mat):
    """Project a near-rotation onto SO(3) via SVD, forcing det +1."""
    u, _, vt = np.linalg.svd(np.asarray(mat, dtype=np.float64))
    r = u @ vt
    if np.linalg.det(r) < 0:
        u = u.copy()
        u[:, -1] = -u[:, -1]
        r = u @ vt
    return r
