"""
Types shared by the Gibbs samplers: model kinds, priors, chain settings,
the per-chain latent state and the retained chain output.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator

from app.crp import Concentration, CrpState


class ModelMismatchError(Exception):
    """Exception raised when model, data and state do not fit together."""
    pass


class ModelKind(str, Enum):
    STATIC = "static"
    DYNAMIC1 = "dynamic1"
    DYNAMIC2 = "dynamic2"

    @property
    def is_dynamic(self) -> bool:
        return self is not ModelKind.STATIC


class Hyperparameters(BaseModel):
    """Prior constants; defaults are the karate-club settings."""
    a_alpha: float = Field(default=5.0, gt=0, description="Gamma shape of alpha")
    b_alpha: float = Field(default=5.0, gt=0, description="Gamma rate of alpha")
    a_nu: float = Field(default=5.0, gt=0, description="Gamma shape of nu")
    b_nu: float = Field(default=5.0, gt=0, description="Gamma rate of nu")
    var_theta: float = Field(default=1.0, gt=0, description="Base variance of popularities")
    var_beta: float = Field(default=1.0, gt=0, description="Base variance of community rates")
    var_eta: float = Field(default=1.0, gt=0, description="Prior variance of persistence (dynamic2)")


class ChainConfig(BaseModel):
    """Chain count, lengths, thinning and seeding for run_chains."""
    chains: int = Field(default=3, ge=1)
    iterations: int = Field(default=40_000, ge=1)
    burn_in: int = Field(default=30_000, ge=0)
    thin: int = Field(default=5, ge=1)
    seed: int = Field(default=20_240_601, ge=0, lt=2**64)
    jobs: int = Field(default=1, ge=1, description="Chains sampled concurrently")
    progress_every: int = Field(default=1000, ge=1, description="Sweeps between progress log lines")

    @model_validator(mode="after")
    def _check_lengths(self) -> "ChainConfig":
        if self.burn_in >= self.iterations:
            raise ValueError(f"burn_in ({self.burn_in}) must be below iterations ({self.iterations})")
        return self

    @property
    def retained(self) -> int:
        """Draws kept per chain."""
        return (self.iterations - self.burn_in) // self.thin


@dataclass
class SamplerState:
    """
    Full latent state of one chain.

    zeta is a symmetric (T, n, n) array with zero diagonal. c_state runs
    over n actors (static, dynamic2) or n*T actor-times (dynamic1, unit
    index t*n + i).
    """
    model: ModelKind
    n: int
    T: int
    zeta: np.ndarray
    z_state: CrpState
    c_state: CrpState
    alpha: Concentration
    nu: Concentration
    eta: float = 0.0

    @property
    def K(self) -> int:
        return self.z_state.k

    @property
    def L(self) -> int:
        return self.c_state.k

    def c_labels_by_time(self) -> np.ndarray:
        """(T, n) popularity labels, repeated over t for time-invariant models."""
        c = self.c_state.assignments
        if self.model == ModelKind.DYNAMIC1:
            return c.reshape(self.T, self.n)
        return np.broadcast_to(c, (self.T, self.n))

    def theta_by_time(self) -> np.ndarray:
        """(T, n) popularity θ of every actor at every time."""
        theta = self.c_state.unit_values()
        if self.model == ModelKind.DYNAMIC1:
            return theta.reshape(self.T, self.n)
        return np.broadcast_to(theta, (self.T, self.n))

    def copy(self) -> "SamplerState":
        return SamplerState(
            model=self.model,
            n=self.n,
            T=self.T,
            zeta=self.zeta.copy(),
            z_state=self.z_state.copy(),
            c_state=self.c_state.copy(),
            alpha=Concentration(self.alpha.value, self.alpha.prior_shape, self.alpha.prior_rate),
            nu=Concentration(self.nu.value, self.nu.prior_shape, self.nu.prior_rate),
            eta=self.eta,
        )


@dataclass
class TrueParameters:
    """Latent quantities used to generate a network (0-based labels)."""
    z: np.ndarray
    c: np.ndarray
    beta_star: np.ndarray
    theta_star: np.ndarray
    eta: float = 0.0
    alpha: Optional[float] = None
    nu: Optional[float] = None


@dataclass
class ChainDraw:
    """One retained draw."""
    z: np.ndarray
    c: np.ndarray
    K: int
    L: int
    alpha: float
    nu: float
    eta: float
    beta_star: np.ndarray
    theta_star: np.ndarray

    @classmethod
    def from_state(cls, state: SamplerState) -> "ChainDraw":
        return cls(
            z=state.z_state.assignments.copy(),
            c=state.c_state.assignments.copy(),
            K=state.K,
            L=state.L,
            alpha=state.alpha.value,
            nu=state.nu.value,
            eta=state.eta,
            beta_star=state.z_state.value_array(),
            theta_star=state.c_state.value_array(),
        )


@dataclass
class ChainMeta:
    seed: int
    stream: int
    model: ModelKind
    iterations: int
    burn_in: int
    thin: int
    wall_time: float = 0.0
    algorithm: str = "PCG64"


@dataclass
class ChainOutput:
    """Thinned post-burn-in draws of one chain."""
    meta: ChainMeta
    draws: List[ChainDraw] = field(default_factory=list)

    def scalar(self, name: str) -> np.ndarray:
        return np.array([getattr(d, name) for d in self.draws], dtype=float)

    def z_matrix(self) -> np.ndarray:
        """(draws, n) community labels."""
        return np.array([d.z for d in self.draws])

    def c_matrix(self) -> np.ndarray:
        """(draws, units) popularity labels."""
        return np.array([d.c for d in self.draws])

    def beta_by_actor(self) -> np.ndarray:
        """(draws, n) β*_{z_i}."""
        return np.array([d.beta_star[d.z] for d in self.draws])

    def theta_by_unit(self) -> np.ndarray:
        """(draws, units) θ*_{c_u}."""
        return np.array([d.theta_star[d.c] for d in self.draws])
