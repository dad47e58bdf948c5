"""Benchmark models shared by the acceptance suite, the scripts and the CLI configs."""
from dataclasses import dataclass

import numpy as np

from . import levy as lv
from .sde import DriftConstants, DriftSpec


@dataclass(frozen=True)
class OUStable:
    """dX = -X dt + dZ, Z isotropic 1.5-stable with jumps capped at ``r_max``."""
    alpha: float = 1.5
    scale: float = 0.1
    r_max: float = 10.0
    eps: float = 0.3
    kappa: float = 1.0
    dt: float = 0.01

    def levy(self):
        return lv.stable(self.alpha, scale=self.scale, r_max=self.r_max)

    def jump_cfg(self):
        return lv.JumpSimConfig(epsilon_cutoff=self.eps)

    def drift(self):
        # <b(x) - b(y), x - y> = -|x - y|^2 and <b(x), x> = -|x|^2
        return DriftSpec(b=lambda x: -x, dim=1, name="ou",
                         constants=DriftConstants(K1=0.0, K2=1.0, l0=0.0, K3=0.0, lambda_dissip=1.0,
                                                  C0_dissip=0.0))


@dataclass(frozen=True)
class SineDrift:
    """b(x) = -x + 2 sin x with a 1.5-stable noise of large scale.

    |sin x - sin y| <= 2|sin(r/2)| <= min(r, 2) gives K1 = 1 for all r and
    <b(x) - b(y), x - y> <= -(1 - 4/l0) r^2 for r >= l0.
    """
    alpha: float = 1.5
    scale: float = 150.0
    kappa: float = 1.0
    l0: float = 8.0

    @property
    def K1(self):
        return 1.0

    @property
    def K2(self):
        return 1.0 - 4.0 / self.l0

    def levy(self):
        return lv.stable(self.alpha, scale=self.scale)

    def drift(self):
        return DriftSpec(b=lambda x: -x + 2.0 * np.sin(x), dim=1, name="sine",
                         constants=DriftConstants(K1=self.K1, K2=self.K2, l0=self.l0, K3=0.0))


@dataclass(frozen=True)
class MeanFieldLinear:
    """b1(x) = -x, b2(u) = -Kb2 u, jumps 1.5-stable restricted to |z| <= 2, mu0 = N(2, 1)."""
    alpha: float = 1.5
    scale: float = 1.0
    r_max: float = 2.0
    eps: float = 0.1
    Kb2: float = 0.2
    mu0_mean: float = 2.0
    mu0_sd: float = 1.0
    dt: float = 0.01

    def levy(self):
        return lv.stable(self.alpha, scale=self.scale, r_max=self.r_max)

    def jump_cfg(self):
        return lv.JumpSimConfig(epsilon_cutoff=self.eps)

    def drift(self):
        return DriftSpec(b1=lambda x: -x, b2_matrix=[[-self.Kb2]], dim=1, name="meanfield-linear",
                         constants=DriftConstants(K1b1=0.0, K2b1=1.0, rb1=0.0, Kb2=self.Kb2, B0=self.Kb2,
                                                  lambda_dissip=1.0, C0_dissip=0.0))

    def mu0(self):
        m, s = self.mu0_mean, self.mu0_sd

        def sample(n, rng):
            return m + s * rng.standard_normal((n, 1))
        return sample
