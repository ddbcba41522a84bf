"""Kernels and samples shared by several test modules."""

import numpy as np

from semimarkov.simulate import SimulationConfig, simulate_smc
from semimarkov.smc import MarkovRenewalSample, SemiMarkovKernel


def geometric_pmf(mean, t_max):
    """Geometric sojourn pmf on ``1..t_max`` (tail folded into ``t_max``)."""
    pmf = np.zeros(t_max + 1)
    if mean == 1.0:
        pmf[1] = 1.0
        return pmf
    q = 1.0 - 1.0 / mean
    pmf[1:] = (1 - q) * q ** np.arange(t_max)
    pmf[t_max] += 1.0 - pmf.sum()
    return pmf


P3 = np.array([[0.0, 0.6, 0.4],
               [0.5, 0.0, 0.5],
               [0.3, 0.7, 0.0]])
MEANS3 = np.array([[1.0, 2.0, 3.0],
                   [1.5, 1.0, 2.5],
                   [4.0, 1.2, 1.0]])


def three_state_kernel(t_max=12):
    """Hand-specified 3-state kernel with geometric sojourns of varied means."""
    g = np.array([[geometric_pmf(MEANS3[i, j], t_max) for j in range(3)]
                  for i in range(3)])
    return SemiMarkovKernel.from_probabilities(P3, g, state_values=[-1.0, 0.0, 1.0])


def simulate_jumps(kernel, n_jumps, seed, replication=0):
    """A sample of exactly ``n_jumps`` completed transitions."""
    horizon = int(n_jumps * 6) + 10
    traj = simulate_smc(kernel, SimulationConfig(horizon, seed), replication)
    if len(traj.J) < n_jumps + 1:
        raise RuntimeError("horizon too short for the requested jumps")
    J, T = traj.J[:n_jumps + 1], traj.T[:n_jumps + 1]
    return MarkovRenewalSample(J, T, int(T[-1]) + 1, kernel.state_values)


# PASS/FAIL lines of the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES = []
