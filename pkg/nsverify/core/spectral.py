"""Fourier representation of periodic fields and the operators built on it.

Convention: f(x) = sum_k f_k exp(i k.x), so the k=0 coefficient is the
spatial mean and Parseval reads  int |f|^2 dx = |Omega| sum_k |f_k|^2.
"""
import logging

import numpy as np
import scipy.fft

from ..config import Config
from ..exceptions import FieldError, GridError, NotApplicableError
from ..models.field import Field, MeanVector
from ..models.grid import TorusGrid

logger = logging.getLogger(__name__)

# Relative size below which a coefficient counts as zero in structural checks
STRUCTURE_TOL = 1e-12


def make_grid(L, N, dim):
    """Validate and build a ``TorusGrid``; see the type for the layout."""
    if not N or int(N) != N:
        raise GridError(f"N must be an integer, got {N!r}")
    return TorusGrid(float(L), int(N), int(dim))


def _forward(data, grid):
    return scipy.fft.rfftn(data, axes=grid.spatial_axes, norm='forward', workers=Config.FFT_WORKERS)


def _inverse(coeffs, grid, shape=None):
    shape = shape or grid.physical_shape
    return scipy.fft.irfftn(coeffs, s=shape, axes=grid.spatial_axes, norm='forward',
                            workers=Config.FFT_WORKERS)


def transform(field, target):
    if target not in ('spectral', 'physical'):
        raise FieldError(f"unknown target representation {target!r}")
    if field.representation == target:
        return field
    if target == 'spectral':
        data = _forward(field.data, field.grid)
    else:
        data = _inverse(field.data, field.grid)
    return field.replace(data=data, representation=target)


def to_spectral(field):
    return transform(field, 'spectral')


def to_physical(field):
    return transform(field, 'physical')


def _check_axis(grid, direction):
    if not isinstance(direction, (int, np.integer)) or not 0 <= direction < grid.dim:
        raise GridError(f"axis {direction!r} is invalid for a {grid.dim}D grid")


def spectral_derivative(field, direction, order=1):
    """Multiply every mode by (i k_direction)^order."""
    grid = field.grid
    _check_axis(grid, direction)
    if order not in (1, 2):
        raise FieldError(f"derivative order must be 1 or 2, got {order}")
    field = to_spectral(field)
    if order == 1:
        factor = 1j * grid.derivative_wavenumbers[direction]
    else:
        factor = -grid.k_vectors[direction] ** 2
    return field.replace(data=field.data * factor)


def gradient(field):
    """Component ``c * dim + j`` of the result is d_j of component c."""
    field = to_spectral(field)
    kd = field.grid.derivative_wavenumbers
    data = 1j * kd[np.newaxis, :] * field.data[:, np.newaxis]
    data = data.reshape((field.ncomp * field.grid.dim,) + field.grid.spectral_shape)
    return field.replace(data=data, divergence_free=False)


def hessian(field):
    """Component ``(c * dim + i) * dim + j`` is d_i d_j of component c."""
    field = to_spectral(field)
    k = field.grid.k_vectors
    kk = -(k[:, np.newaxis] * k[np.newaxis, :])
    data = kk[np.newaxis] * field.data[:, np.newaxis, np.newaxis]
    data = data.reshape((field.ncomp * field.grid.dim ** 2,) + field.grid.spectral_shape)
    return field.replace(data=data, divergence_free=False)


def laplacian(field):
    field = to_spectral(field)
    return field.replace(data=-field.grid.k_squared * field.data)


def divergence(field):
    """Scalar spectral field i k . v (full wavenumbers, Nyquist included)."""
    _require_vector(field)
    field = to_spectral(field)
    div = 1j * np.sum(field.grid.k_vectors * field.data, axis=0)
    return field.replace(data=div[np.newaxis], divergence_free=False)


def divergence_norm(field):
    """Relative discrete divergence ||k.v|| / ||k v||; zero for the zero field."""
    _require_vector(field)
    field = to_spectral(field)
    grid = field.grid
    kdotv = np.sum(grid.k_vectors * field.data, axis=0)
    num = np.sum(grid.hermitian_weights * np.abs(kdotv) ** 2)
    den = np.sum(grid.hermitian_weights * grid.k_squared * np.sum(np.abs(field.data) ** 2, axis=0))
    if den == 0.0:
        return 0.0
    return float(np.sqrt(num / den))


def _require_vector(field):
    if not field.is_vector:
        raise FieldError(f"expected a {field.grid.dim}-component vector field, got {field.ncomp}")


def leray_project(field):
    """Remove the gradient part mode by mode: v <- v - k (k.v)/|k|^2; k=0 untouched."""
    _require_vector(field)
    field = to_spectral(field)
    grid = field.grid
    k = grid.k_vectors
    k2 = np.where(grid.k_squared == 0.0, 1.0, grid.k_squared)
    kdotv = np.sum(k * field.data, axis=0)
    data = field.data - k * (kdotv / k2)
    return field.replace(data=data, divergence_free=True)


def dealias(field):
    """2/3 rule: zero every mode with some |m| > N/3."""
    field = to_spectral(field)
    return field.replace(data=field.data * field.grid.dealias_mask)


def mean(field):
    field = to_spectral(field)
    zero = (slice(None),) + (0,) * field.grid.dim
    return MeanVector(field.data[zero].real.copy(), field.time_stamp)


def mean_free(field):
    """Zero the k=0 coefficient. The result is always spectral."""
    field = to_spectral(field)
    data = field.data.copy()
    data[(slice(None),) + (0,) * field.grid.dim] = 0.0
    return field.replace(data=data)


def with_mean(field, mean_vector):
    """Return ``field`` with its k=0 coefficient set to ``mean_vector``."""
    field = to_spectral(field)
    value = np.asarray(getattr(mean_vector, 'value', mean_vector), dtype=float)
    if value.shape != (field.ncomp,):
        raise FieldError(f"mean of length {value.size} does not fit {field.ncomp} components")
    data = field.data.copy()
    data[(slice(None),) + (0,) * field.grid.dim] = value
    return field.replace(data=data)


def parseval_sum(field, weight=None):
    """|Omega| sum_k w(k) |f_k|^2 over all components (full spectrum counted)."""
    field = to_spectral(field)
    grid = field.grid
    power = np.sum(np.abs(field.data) ** 2, axis=0) * grid.hermitian_weights
    if weight is not None:
        power = power * weight
    return float(grid.volume * np.sum(power))


def random_divfree_field(grid, seed, spectrum_decay=2.0, h1_norm=None, time_stamp=0.0):
    """Reproducible mean-free, divergence-free, dealiased random velocity field.

    Mode amplitudes fall off like |k|^(-spectrum_decay). When ``h1_norm`` is
    given the field is rescaled so that ||u||_{H^1} equals it.
    """
    if not spectrum_decay > 0:
        raise FieldError(f"spectrum decay must be positive, got {spectrum_decay}")
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((grid.dim,) + grid.physical_shape)
    coeffs = _forward(noise, grid)
    k2 = grid.k_squared
    envelope = np.where(k2 > 0.0, np.power(np.where(k2 > 0.0, k2, 1.0), -0.5 * spectrum_decay), 0.0)
    coeffs = coeffs * envelope * grid.dealias_mask
    field = Field(grid, coeffs, 'spectral', time_stamp=time_stamp)
    field = mean_free(leray_project(field))
    if h1_norm is not None:
        current = parseval_sum(field, 1.0 + k2)
        if current == 0.0:
            raise FieldError("random field vanished; the grid has no resolvable modes")
        field = field * (float(h1_norm) / np.sqrt(current))
    return field


def zero_pad(field, factor=2):
    """Physical values of ``field`` on a grid refined by ``factor``.

    Nyquist modes are dropped (they have no unambiguous counterpart on the
    finer grid). Returns an array of shape (ncomp, *(factor N,)*dim).
    """
    field = to_spectral(field)
    grid = field.grid
    N, M = grid.N, factor * grid.N
    half = N // 2
    fine_shape = (M,) * (grid.dim - 1) + (M // 2 + 1,)
    fine = np.zeros((field.ncomp,) + fine_shape, dtype=np.complex128)
    src = field.data
    # positive and negative halves of every full axis, skipping the Nyquist row
    pos = slice(0, half)
    neg_src = slice(half + 1, N)
    neg_dst = slice(M - half + 1, M)
    blocks = [[(pos, pos), (neg_src, neg_dst)]] * (grid.dim - 1)
    last = (slice(0, half), slice(0, half))
    for choice in np.ndindex(*([2] * (grid.dim - 1))):
        s_idx = [slice(None)]
        d_idx = [slice(None)]
        for axis, c in enumerate(choice):
            s, d = blocks[axis][c]
            s_idx.append(s)
            d_idx.append(d)
        s_idx.append(last[0])
        d_idx.append(last[1])
        fine[tuple(d_idx)] = src[tuple(s_idx)]
    return scipy.fft.irfftn(fine, s=(M,) * grid.dim, axes=grid.spatial_axes, norm='forward',
                            workers=Config.FFT_WORKERS)


def advect(a, b):
    """Dealiased (a . grad) b for spectral fields on one grid."""
    if a.grid != b.grid:
        raise GridError(f"grid mismatch: {a.grid!r} vs {b.grid!r}")
    _require_vector(a)
    grid = a.grid
    a_phys = _inverse(dealias(a).data, grid)
    grad_b = _inverse(gradient(dealias(b)).data, grid)
    grad_b = grad_b.reshape((b.ncomp, grid.dim) + grid.physical_shape)
    product = np.einsum('j...,cj...->c...', a_phys, grad_b)
    data = _forward(product, grid) * grid.dealias_mask
    return Field(grid, data, 'spectral', time_stamp=b.time_stamp)


def lift_to_3d(field):
    """Embed a 2D field as an x3-invariant 3D field (third component zero for vectors)."""
    grid = field.grid
    if grid.dim != 2:
        raise GridError(f"can only lift 2D fields, got {grid!r}")
    target = grid.lifted()
    phys = to_physical(field).data
    ncomp = 3 if field.ncomp == 2 else field.ncomp
    out = np.zeros((ncomp,) + target.physical_shape)
    out[:field.ncomp] = phys[..., np.newaxis]
    lifted = Field(target, out, 'physical', divergence_free=field.divergence_free,
                   time_stamp=field.time_stamp)
    return to_spectral(lifted) if field.is_spectral else lifted


def is_x3_invariant(field, tol=STRUCTURE_TOL):
    """True when all x3-dependent modes and, for vectors, the third component vanish."""
    if field.grid.dim != 3:
        return False
    data = to_spectral(field).data
    scale = max(float(np.max(np.abs(data))), np.finfo(float).tiny)
    if np.max(np.abs(data[..., 1:])) > tol * scale:
        return False
    if field.is_vector and np.max(np.abs(data[2])) > tol * scale:
        return False
    return True


def restrict_to_plane(field):
    """Inverse of ``lift_to_3d``; rejects fields that depend on x3."""
    if field.grid.dim == 2:
        return field
    if not is_x3_invariant(field):
        raise NotApplicableError("field depends on x3 or has a third velocity component")
    phys = to_physical(field).data
    ncomp = 2 if field.is_vector else field.ncomp
    plane = Field(field.grid.plane(), phys[:ncomp, ..., 0].copy(), 'physical',
                  divergence_free=field.divergence_free, time_stamp=field.time_stamp)
    return to_spectral(plane) if field.is_spectral else plane
