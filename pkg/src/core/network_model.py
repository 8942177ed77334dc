"""
Traffic network model: resistor network, Laplacian and effective resistances.

Each unordered location pair {i, j} becomes one resistor with conductance
beta_ij/xi_ij + beta_ji/xi_ji. Effective resistances come from the
Laplacian pseudoinverse, computed as (L + J/N)^-1 - J/N.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd
from scipy.sparse.csgraph import connected_components

from ..shared.error_handler import ConfigurationError, ScenarioInvariantError, ValidationError
from ..shared.models import DemandParams, off_diagonal_mask
from .linalg import solve_symmetric

logger = logging.getLogger(__name__)

__all__ = [
    'ResistorNetwork',
    'EffectiveResistances',
    'build_resistor_network',
    'resistor_network_from_params',
    'laplacian',
    'laplacian_pseudoinverse',
    'effective_resistances',
    'load_travel_times_csv',
]


@dataclass(frozen=True, eq=False)
class ResistorNetwork:
    """Symmetric resistances r_ij, zero on the diagonal."""
    resistance: np.ndarray

    @property
    def n(self) -> int:
        return self.resistance.shape[0]

    @property
    def conductance(self) -> np.ndarray:
        mask = off_diagonal_mask(self.n)
        out = np.zeros_like(self.resistance)
        out[mask] = 1.0 / self.resistance[mask]
        return out


@dataclass(frozen=True, eq=False)
class EffectiveResistances:
    r_eff: np.ndarray
    pseudoinverse: np.ndarray

    @property
    def n(self) -> int:
        return self.r_eff.shape[0]


def _check_pair(beta: np.ndarray, xi: np.ndarray) -> None:
    if beta.ndim != 2 or beta.shape[0] != beta.shape[1]:
        raise ValidationError(f"beta must be square, got {beta.shape}", field='beta')
    if xi.shape != beta.shape:
        raise ValidationError(f"beta {beta.shape} and xi {xi.shape} dimensions differ", field='travel_time')
    mask = off_diagonal_mask(beta.shape[0])
    if np.any(beta[mask] <= 0):
        raise ValidationError("beta must be positive off the diagonal", field='beta')
    if np.any(xi[mask] <= 0):
        raise ValidationError("Travel times must be positive off the diagonal", field='travel_time')


def build_resistor_network(beta: np.ndarray, xi: np.ndarray) -> ResistorNetwork:
    """r_ij = 1 / (beta_ij/xi_ij + beta_ji/xi_ji), mirrored, zero diagonal."""
    beta = np.asarray(beta, dtype=float)
    xi = np.asarray(xi, dtype=float)
    _check_pair(beta, xi)
    n = beta.shape[0]
    mask = off_diagonal_mask(n)
    ratio = np.zeros_like(beta)
    ratio[mask] = beta[mask] / xi[mask]
    conductance = ratio + ratio.T
    resistance = np.zeros_like(beta)
    resistance[mask] = 1.0 / conductance[mask]
    resistance.setflags(write=False)
    return ResistorNetwork(resistance)


def resistor_network_from_params(theta: DemandParams, xi: np.ndarray) -> ResistorNetwork:
    return build_resistor_network(theta.beta, xi)


def laplacian(net: ResistorNetwork) -> np.ndarray:
    """Weighted graph Laplacian with weights 1/r_ij."""
    weights = net.conductance
    lap = -weights
    np.fill_diagonal(lap, weights.sum(axis=1))
    return lap


def _check_laplacian(lap: np.ndarray) -> None:
    if lap.ndim != 2 or lap.shape[0] != lap.shape[1]:
        raise ValidationError(f"Laplacian must be square, got {lap.shape}")
    scale = 1.0 + float(np.max(np.abs(lap)))
    if not np.allclose(lap, lap.T, rtol=0, atol=1e-12 * scale):
        raise ValidationError("Laplacian must be symmetric")
    if np.max(np.abs(lap.sum(axis=1))) > 1e-9 * scale:
        raise ValidationError("Laplacian rows must sum to zero")
    if np.any(lap[off_diagonal_mask(lap.shape[0])] > 0):
        raise ValidationError("Laplacian off-diagonal entries must be non-positive")


def laplacian_pseudoinverse(lap: np.ndarray) -> np.ndarray:
    """
    Moore-Penrose inverse of a connected-graph Laplacian.

    Uses L+ = (L + J/N)^-1 - J/N; a disconnected graph (rank below N-1)
    is an invalid scenario.
    """
    lap = np.asarray(lap, dtype=float)
    _check_laplacian(lap)
    n = lap.shape[0]
    n_components, _ = connected_components(lap != 0, directed=False)
    if n_components != 1:
        raise ScenarioInvariantError(
            f"Network graph is disconnected ({n_components} components)",
            inequality='rank(L) = N - 1'
        )
    shift = np.full((n, n), 1.0 / n)
    inverse = solve_symmetric(lap + shift, np.eye(n))
    pinv = inverse - shift
    return 0.5 * (pinv + pinv.T)


def effective_resistances(lap: np.ndarray) -> EffectiveResistances:
    """R_ij = L+_ii + L+_jj - 2 L+_ij."""
    pinv = laplacian_pseudoinverse(lap)
    diag = np.diag(pinv)
    r_eff = diag[:, None] + diag[None, :] - 2.0 * pinv
    r_eff = 0.5 * (r_eff + r_eff.T)
    np.fill_diagonal(r_eff, 0.0)
    r_eff.setflags(write=False)
    pinv.setflags(write=False)
    return EffectiveResistances(r_eff, pinv)


def load_travel_times_csv(path: Union[str, Path]) -> np.ndarray:
    """
    Read a header-less N×N travel-time matrix.

    Entries must be non-negative reals and the off-diagonal strictly
    positive; the diagonal is ignored and set to zero.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"Travel-time CSV not found: {path}", source=str(path))
    try:
        frame = pd.read_csv(path, header=None, dtype=float, skip_blank_lines=True)
    except (ValueError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ConfigurationError(f"Unreadable travel-time CSV {path}: {e}", source=str(path))

    matrix = frame.to_numpy(dtype=float)
    if np.isnan(matrix).any():
        raise ConfigurationError(f"Travel-time CSV {path} has missing or ragged entries", source=str(path))
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ConfigurationError(
            f"Travel-time CSV {path} must be square, got {matrix.shape[0]}x{matrix.shape[1]}",
            source=str(path)
        )
    if np.any(matrix < 0):
        raise ConfigurationError(f"Travel-time CSV {path} has negative entries", source=str(path))
    np.fill_diagonal(matrix, 0.0)
    if np.any(matrix[off_diagonal_mask(matrix.shape[0])] <= 0):
        raise ConfigurationError(f"Travel-time CSV {path} has zero off-diagonal entries", source=str(path))
    logger.debug(f"Loaded {matrix.shape[0]}x{matrix.shape[0]} travel times from {path}")
    return matrix
