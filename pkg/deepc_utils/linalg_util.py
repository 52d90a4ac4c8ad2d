# coding=utf-8
# Copyright 2025 The Federated DeePC Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Utility library of numerical linear algebra helpers."""

import numpy as np
import scipy.linalg

# Unit roundoff used by the numerical-rank rule.
MACHINE_EPSILON = 2.0**-52


def as_matrix(value, name, rows=None, cols=None):
  """Converts `value` to a 2-D float array and checks its shape.

  Args:
    value: Anything `np.asarray` accepts. Scalars become 1x1 matrices and
      vectors become column vectors.
    name: Name used in error messages.
    rows: Expected number of rows, or None to skip the check.
    cols: Expected number of columns, or None to skip the check.

  Returns:
    A float64 array with two dimensions.

  Raises:
    ValueError: If the array has more than two dimensions or the wrong shape.
  """
  matrix = np.asarray(value, dtype=np.float64)
  if matrix.ndim == 0:
    matrix = matrix.reshape(1, 1)
  elif matrix.ndim == 1:
    matrix = matrix.reshape(-1, 1)
  elif matrix.ndim > 2:
    raise ValueError(f"{name} must be at most 2-D, got shape {matrix.shape}.")
  if rows is not None and matrix.shape[0] != rows:
    raise ValueError(
        f"{name} must have {rows} rows, got shape {matrix.shape}.")
  if cols is not None and matrix.shape[1] != cols:
    raise ValueError(
        f"{name} must have {cols} columns, got shape {matrix.shape}.")
  return matrix


def as_vector(value, name, length=None):
  """Converts `value` to a 1-D float array of the given length."""
  vector = np.asarray(value, dtype=np.float64).reshape(-1)
  if length is not None and vector.shape[0] != length:
    raise ValueError(
        f"{name} must have length {length}, got {vector.shape[0]}.")
  return vector


def rank_tolerance(singular_values, shape):
  """Returns the threshold below which singular values count as zero.

  The threshold is max(rows, cols) * sigma_max * 2**-52.

  Args:
    singular_values: Singular values of the matrix, in any order.
    shape: Shape of the matrix the values belong to.

  Returns:
    The tolerance as a float.
  """
  if np.size(singular_values) == 0:
    return 0.0
  return max(shape) * float(np.max(singular_values)) * MACHINE_EPSILON


def numerical_rank(matrix):
  """Rank of `matrix` counting singular values above `rank_tolerance`."""
  matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
  if matrix.size == 0:
    return 0
  singular_values = scipy.linalg.svd(matrix, compute_uv=False)
  tolerance = rank_tolerance(singular_values, matrix.shape)
  return int(np.sum(singular_values > tolerance))


def spectral_norm(matrix):
  """Largest singular value of `matrix`."""
  matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
  if matrix.size == 0:
    return 0.0
  return float(scipy.linalg.svdvals(matrix)[0])


def is_positive_definite(matrix):
  """Whether `matrix` is symmetric with a strictly positive spectrum."""
  matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
  if matrix.shape[0] != matrix.shape[1]:
    return False
  if not np.allclose(matrix, matrix.T, rtol=0.0, atol=1e-12):
    return False
  return bool(scipy.linalg.eigvalsh(matrix)[0] > 0.0)


def null_space_split(matrix):
  """Splits R^n into the row space and null space of `matrix`.

  Args:
    matrix: A k x n array, possibly with k = 0 or rank deficiency.

  Returns:
    A tuple `(left, singular_values, row_basis, null_basis)` where `left`
    holds the leading left singular vectors, `singular_values` the nonzero
    singular values, and `row_basis` (n x r) and `null_basis` (n x (n - r))
    are orthonormal bases.
  """
  n = matrix.shape[1]
  if matrix.shape[0] == 0:
    return (np.zeros((0, 0)), np.zeros(0), np.zeros((n, 0)), np.eye(n))
  left, singular_values, right_t = scipy.linalg.svd(matrix, full_matrices=True)
  rank = int(np.sum(
      singular_values > rank_tolerance(singular_values, matrix.shape)))
  return (left[:, :rank], singular_values[:rank], right_t[:rank].T,
          right_t[rank:].T)
