# =====================================================
# REFERENCE ORACLES
# =====================================================
#
# Slow, obviously-correct versions of the fast operations,
# built from dense matrices and plain loops. The test suite
# and `python main.py selftest` compare the real code against
# these.
#
# Nothing here is used while tracking.
#
# =====================================================

import math

import numpy as np

from src.spectral import CropSpec, Grid2


# =====================================================
# FOURIER / CROP MATRICES
# =====================================================

def dense_dft_matrix(n: int) -> np.ndarray:
    """Unitary 1D DFT matrix F[k, m] = exp(-2 pi i k m / n) / sqrt(n)."""
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) / math.sqrt(n)


def dense_dft2(x: np.ndarray) -> np.ndarray:
    """2D unitary DFT by direct summation: F_H x F_W^T."""
    h, w = x.shape
    return dense_dft_matrix(h) @ x @ dense_dft_matrix(w).T


def crop_matrix(crop: CropSpec) -> np.ndarray:
    """The M x N binary matrix B selecting the centered inner window (row-major)."""
    top, left = crop.offset
    b = np.zeros((crop.inner.size, crop.outer.size))
    for i in range(crop.inner.height):
        for j in range(crop.inner.width):
            b[i * crop.inner.width + j, (top + i) * crop.outer.width + (left + j)] = 1.0
    return b


def correlation_matrix(x: np.ndarray) -> np.ndarray:
    """
    Dense circulant X with (X e)[n] = sum_k x[k] e[k + n].

    Row n holds x circularly shifted by n, so X[n, k] = x[k - n].
    """
    h, w = x.shape
    rows = [np.roll(x, (i, j), axis=(0, 1)).ravel() for i in range(h) for j in range(w)]
    return np.array(rows)


# =====================================================
# OBJECTIVE IN MATRIX FORM
# =====================================================

def _penalty_matrix(weights: np.ndarray, channels: int, penalty_mode: str) -> np.ndarray:
    if penalty_mode == "scalar":
        return np.sum(weights ** 2) * np.eye(channels * weights.size)
    return np.kron(np.eye(channels), np.diag(weights.ravel() ** 2))


def data_matrix(x: np.ndarray, crop: CropSpec) -> np.ndarray:
    """A = [X_1 B^T, ..., X_D B^T], so A h is the summed correlation."""
    b = crop_matrix(crop)
    return np.hstack([correlation_matrix(channel) @ b.T for channel in x])


def dense_objective(
    w: np.ndarray,
    x: np.ndarray,
    y_train: np.ndarray,
    weights: np.ndarray,
    crop: CropSpec,
    penalty_mode: str = "elementwise",
) -> float:
    """
    1/2 ||y - A h||^2 + h^T P h with h the stacked filter and
    P = I_D (x) diag(p^2): the objective written with explicit matrices.
    """
    a = data_matrix(x, crop)
    h = np.asarray(w, dtype=float).ravel()
    residual = y_train.ravel() - a @ h
    p = _penalty_matrix(weights, x.shape[0], penalty_mode)
    return 0.5 * float(residual @ residual) + float(h @ p @ h)


def dense_optimum(
    x: np.ndarray,
    y_train: np.ndarray,
    weights: np.ndarray,
    crop: CropSpec,
    penalty_mode: str = "elementwise",
) -> np.ndarray:
    """Global minimizer from the normal equations (A^T A + 2P) h = A^T y."""
    a = data_matrix(x, crop)
    p = _penalty_matrix(weights, x.shape[0], penalty_mode)
    h = np.linalg.solve(a.T @ a + 2.0 * p, a.T @ y_train.ravel())
    return h.reshape((x.shape[0],) + crop.inner.shape)


# =====================================================
# ADMM SUB-STEPS
# =====================================================

def dense_pixel_solve(x_n, y_n, zeta_n, w_n, mu: float) -> np.ndarray:
    """(x x^H + mu I)^-1 (x y - zeta + mu w) with a dense solve."""
    x_n = np.asarray(x_n, dtype=complex)
    a = np.outer(x_n, np.conj(x_n)) + mu * np.eye(x_n.size)
    return np.linalg.solve(a, x_n * y_n - np.asarray(zeta_n) + mu * np.asarray(w_n))


def dense_w_step(g: np.ndarray, zeta: np.ndarray, weights: np.ndarray, mu: float, n_total: int) -> np.ndarray:
    """
    Minimize sum p^2 w^2 - N zeta w + (mu N / 2)(g - w)^2 over one
    channel as a dense quadratic: (2 diag(p^2) + mu N I) w = N zeta + mu N g.
    """
    q = 2.0 * np.diag(weights.ravel() ** 2) + mu * n_total * np.eye(weights.size)
    rhs = n_total * zeta.ravel() + mu * n_total * g.ravel()
    return np.linalg.solve(q, rhs).reshape(weights.shape)


# =====================================================
# IMAGE OPERATIONS
# =====================================================

def bilinear_sample(image: np.ndarray, y: float, x: float) -> float:
    """Bilinear lookup at array coordinates (y, x), edges clamped."""
    h, w = image.shape
    y = min(max(y, 0.0), h - 1.0)
    x = min(max(x, 0.0), w - 1.0)
    y0, x0 = int(math.floor(y)), int(math.floor(x))
    y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
    fy, fx = y - y0, x - x0
    top = (1 - fx) * image[y0, x0] + fx * image[y0, x1]
    bottom = (1 - fx) * image[y1, x0] + fx * image[y1, x1]
    return (1 - fy) * top + fy * bottom


def reference_patch(frame: np.ndarray, center, size, scale: float, out_shape) -> np.ndarray:
    """extract_patch, one bilinear lookup per output pixel."""
    out_h, out_w = out_shape
    step_x, step_y = size[0] * scale / out_w, size[1] * scale / out_h
    patch = np.empty(out_shape)
    for i in range(out_h):
        for j in range(out_w):
            x = center[0] + (j + 0.5 - out_w / 2.0) * step_x - 0.5
            y = center[1] + (i + 0.5 - out_h / 2.0) * step_y - 0.5
            patch[i, j] = bilinear_sample(frame, y, x)
    return patch


def reference_gradient_histograms(patch: np.ndarray, cell_size: int, bins: int) -> np.ndarray:
    """Orientation histograms with a per-pixel loop and central differences."""
    h, w = patch.shape
    hist = np.zeros((bins, h // cell_size, w // cell_size))
    for i in range(h):
        for j in range(w):
            gx = patch[i, min(j + 1, w - 1)] - patch[i, max(j - 1, 0)]
            gy = patch[min(i + 1, h - 1), j] - patch[max(i - 1, 0), j]
            angle = math.atan2(gy, gx) % math.pi
            b = min(int(angle / (math.pi / bins)), bins - 1)
            hist[b, i // cell_size, j // cell_size] += math.hypot(gx, gy)
    return hist


def raised_cosine(grid: Grid2) -> np.ndarray:
    """0.5 - 0.5 cos(2 pi n / (L - 1)) per axis, multiplied out."""
    def axis(n: int) -> np.ndarray:
        if n == 1:
            return np.ones(1)
        k = np.arange(n)
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * k / (n - 1))
    return np.outer(axis(grid.height), axis(grid.width))


def gaussian_map(grid: Grid2, sigma: float) -> np.ndarray:
    """Per-element Gaussian around (H // 2, W // 2)."""
    out = np.empty(grid.shape)
    ci, cj = grid.height // 2, grid.width // 2
    for i in range(grid.height):
        for j in range(grid.width):
            out[i, j] = math.exp(-((i - ci) ** 2 + (j - cj) ** 2) / (2.0 * sigma ** 2))
    return out


def clipped_iou(a, b) -> float:
    """IoU of (x, y, w, h) rectangles by explicit edge clipping."""
    ax0, ay0, ax1, ay1 = a[0], a[1], a[0] + a[2], a[1] + a[3]
    bx0, by0, bx1, by1 = b[0], b[1], b[0] + b[2], b[1] + b[3]
    ix0, iy0 = max(ax0, bx0), max(ay0, by0)
    ix1, iy1 = min(ax1, bx1), min(ay1, by1)
    inter = max(0.0, ix1 - ix0) * max(0.0, iy1 - iy0)
    union = a[2] * a[3] + b[2] * b[3] - inter
    return inter / union if union > 0 else 0.0
