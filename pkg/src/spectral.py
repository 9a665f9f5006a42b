# =====================================================
# SPECTRAL OPERATORS MODULE
# =====================================================
#
# Everything the filter math needs from Fourier analysis:
# exact 2D DFTs, circular shifts, correlation, and the
# crop / embed pair that stands in for the cropping matrix B
# and its transpose without ever building them.
#
# THE DFT CONVENTION:
# -------------------
# One convention is used repo-wide: the UNITARY transform,
#
#     dft2(x)[k] = (1 / sqrt(N)) * sum_n x[n] * exp(-2*pi*i*k.n / shape)
#
# with the same 1/sqrt(N) on the inverse. It preserves energy
# (Parseval holds with no constant). The solver multiplies by
# sqrt(N) itself where the hatted filter quantities need it:
#
#     g_hat = sqrt(N) * dft2(embed_center(w))
#
# CROP AND EMBED:
# ---------------
# A CropSpec pairs an outer grid (the search window, N cells)
# with an inner grid (the filter support, M cells) placed at
#
#     offset = floor((outer - inner) / 2)    per axis
#
# crop_center reads that window (B), embed_center writes into
# a zero canvas (B transposed). They are adjoint:
#
#     <crop(x), w> == <x, embed(w)>
#
# All functions are pure: they never modify their inputs.
#
# =====================================================

from dataclasses import dataclass

import numpy as np

from src.errors import GridMismatchError


# =====================================================
# GRIDS
# =====================================================

@dataclass(frozen=True)
class Grid2:
    """A 2D lattice of cells (height x width)."""

    height: int
    width: int

    def __post_init__(self):
        if int(self.height) < 1 or int(self.width) < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.height}x{self.width}")
        object.__setattr__(self, "height", int(self.height))
        object.__setattr__(self, "width", int(self.width))

    @property
    def size(self) -> int:
        return self.height * self.width

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @classmethod
    def of(cls, array: np.ndarray) -> "Grid2":
        """The grid spanned by the last two axes of an array."""
        return cls(array.shape[-2], array.shape[-1])

    def check(self, array: np.ndarray, what: str = "array") -> None:
        """Raise GridMismatchError unless the array lives on this grid."""
        if array.ndim < 2 or tuple(array.shape[-2:]) != self.shape:
            raise GridMismatchError(
                f"{what} has shape {tuple(array.shape)}, expected grid {self.height}x{self.width}"
            )

    def __str__(self) -> str:
        return f"{self.height}x{self.width}"


@dataclass(frozen=True)
class CropSpec:
    """An inner grid centered inside an outer grid."""

    outer: Grid2
    inner: Grid2

    def __post_init__(self):
        if self.inner.height > self.outer.height or self.inner.width > self.outer.width:
            raise GridMismatchError(
                f"inner grid {self.inner} does not fit in outer grid {self.outer}"
            )

    @property
    def offset(self) -> tuple[int, int]:
        return (
            (self.outer.height - self.inner.height) // 2,
            (self.outer.width - self.inner.width) // 2,
        )

    @property
    def slices(self) -> tuple[slice, slice]:
        top, left = self.offset
        return (
            slice(top, top + self.inner.height),
            slice(left, left + self.inner.width),
        )


# =====================================================
# FOURIER TRANSFORMS
# =====================================================

def dft2(signal: np.ndarray, grid: Grid2 | None = None) -> np.ndarray:
    """
    Unitary forward 2D DFT over the last two axes.

    PARAMETERS:
    -----------
    signal : np.ndarray
        Real or complex array, shape (..., H, W). Leading axes
        (e.g. feature channels) are transformed independently.
    grid : Grid2, optional
        When given, the signal must live on this grid.

    RETURNS:
    --------
    np.ndarray
        Complex spectrum of the same shape.

    EXAMPLE:
    --------
    >>> dft2(np.ones((8, 8)))[0, 0]
    (8+0j)          # all energy in the DC bin
    """
    signal = np.asarray(signal)
    if grid is not None:
        grid.check(signal, "signal")
    elif signal.ndim < 2:
        raise GridMismatchError(f"dft2 needs a 2D signal, got shape {signal.shape}")
    return np.fft.fft2(signal, axes=(-2, -1), norm="ortho")


def inverse_dft2(spectrum: np.ndarray, grid: Grid2 | None = None) -> np.ndarray:
    """Unitary inverse of dft2. Returns a complex array; take .real for real signals."""
    spectrum = np.asarray(spectrum)
    if grid is not None:
        grid.check(spectrum, "spectrum")
    elif spectrum.ndim < 2:
        raise GridMismatchError(f"inverse_dft2 needs a 2D spectrum, got shape {spectrum.shape}")
    return np.fft.ifft2(spectrum, axes=(-2, -1), norm="ortho")


def phase_ramp(grid: Grid2, delta) -> np.ndarray:
    """
    The linear phase exp(-2*pi*i*(k1*d1/H + k2*d2/W)) that a shift
    by delta multiplies a spectrum with (shift theorem).

    Works for fractional deltas too; frequencies are taken in the
    symmetric range so the ramp stays Hermitian where possible.
    """
    ky = np.fft.fftfreq(grid.height)[:, None]
    kx = np.fft.fftfreq(grid.width)[None, :]
    return np.exp(-2j * np.pi * (ky * float(delta[0]) + kx * float(delta[1])))


# =====================================================
# SHIFTS
# =====================================================

def circular_shift(x: np.ndarray, delta) -> np.ndarray:
    """
    Circularly shift the last two axes.

    out[i, j] = x[(i - d1) mod H, (j - d2) mod W]
    """
    return np.roll(np.asarray(x), (int(delta[0]), int(delta[1])), axis=(-2, -1))


def fractional_shift(x: np.ndarray, delta) -> np.ndarray:
    """
    Shift a real signal by a non-integer amount through the
    shift theorem. Integer deltas agree with circular_shift.
    """
    x = np.asarray(x, dtype=float)
    shifted = inverse_dft2(dft2(x) * phase_ramp(Grid2.of(x), delta))
    return shifted.real


# =====================================================
# CORRELATION
# =====================================================

def correlate(x: np.ndarray, w: np.ndarray, method: str = "spectral") -> np.ndarray:
    """
    Circular cross-correlation c[n] = sum_k x[k] * w[k + n].

    PARAMETERS:
    -----------
    x, w : np.ndarray
        Real 2D arrays on the same grid.
    method : str
        "spectral" (fast, via the correlation theorem) or
        "direct" (O(N^2) summation, used as a reference).

    RETURNS:
    --------
    np.ndarray
        Real 2D correlation on the same grid.
    """
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    grid = Grid2.of(x)
    grid.check(w, "w")

    if method == "direct":
        out = np.empty(grid.shape)
        for i in range(grid.height):
            for j in range(grid.width):
                # roll by -n puts w[k + n] at position k
                out[i, j] = np.sum(x * np.roll(w, (-i, -j), axis=(0, 1)))
        return out

    if method != "spectral":
        raise ValueError(f"unknown correlation method: {method}")

    # Under the unitary convention the theorem carries a sqrt(N)
    spectrum = np.conj(dft2(x)) * dft2(w)
    return np.sqrt(grid.size) * inverse_dft2(spectrum).real


# =====================================================
# CROP / EMBED (the B and B-transpose operators)
# =====================================================

def crop_center(x: np.ndarray, crop: CropSpec) -> np.ndarray:
    """Return the centered inner window of x (last two axes)."""
    x = np.asarray(x)
    crop.outer.check(x, "cropped array")
    rows, cols = crop.slices
    return x[..., rows, cols].copy()


def embed_center(w: np.ndarray, crop: CropSpec) -> np.ndarray:
    """Place w at the center of a zero canvas on the outer grid."""
    w = np.asarray(w)
    crop.inner.check(w, "embedded array")
    out = np.zeros(w.shape[:-2] + crop.outer.shape, dtype=w.dtype)
    rows, cols = crop.slices
    out[..., rows, cols] = w
    return out


def crop_of_inverse(spectrum: np.ndarray, crop: CropSpec) -> np.ndarray:
    """crop_center(real(inverse_dft2(spectrum))): spectrum -> inner spatial signal."""
    return crop_center(inverse_dft2(spectrum, crop.outer).real, crop)


def embed_of_forward(w: np.ndarray, crop: CropSpec) -> np.ndarray:
    """dft2(embed_center(w)): inner spatial signal -> outer spectrum."""
    return dft2(embed_center(w, crop))


# =====================================================
# INTERPOLATION
# =====================================================

def upsample_spectrum(x: np.ndarray, out_shape: tuple[int, int]) -> np.ndarray:
    """
    Band-limited interpolation of a real 2D signal by spectral
    zero-padding.

    The output lives on a finer grid covering the same period, so
    sample (i, j) of x sits at (i * out_h / h, j * out_w / w). For an
    integer upsampling factor the original samples are reproduced.
    """
    x = np.asarray(x, dtype=float)
    h, w = x.shape
    out_h, out_w = int(out_shape[0]), int(out_shape[1])
    if out_h < h or out_w < w:
        raise GridMismatchError(f"cannot upsample {h}x{w} down to {out_h}x{out_w}")

    centered = np.fft.fftshift(np.fft.fft2(x))
    top, left = out_h // 2 - h // 2, out_w // 2 - w // 2
    padded = np.zeros((out_h, out_w), dtype=complex)
    padded[top:top + h, left:left + w] = centered

    scale = (out_h * out_w) / (h * w)
    return np.fft.ifft2(np.fft.ifftshift(padded)).real * scale
