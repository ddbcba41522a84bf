"""Semi-Markov chains with volatility indexes for intraday returns.

The pipeline runs tick ingestion -> minute returns -> discrete states ->
(indexed) semi-Markov kernel -> Monte Carlo simulation -> autocorrelation
diagnostics.  See the README for the command-line interface.
"""

__version__ = "0.1.0"

from .diagnostics import (AcfCurve, SweepConfig, SweepResult, acf_returns, acf_squared,
                          autocorrelation, mean_acf, mse_acf, sweep_lambda, sweep_m)
from .discretization import (IndexDiscretizer, IndexGrid, ReturnDiscretizer, ReturnGrid,
                             StateSeries, discretize_returns, fit_index_grid,
                             fit_return_grid)
from .exceptions import (ConfigError, DataError, EstimationError, SemiMarkovError,
                         UnobservedRowError, UsageError)
from .index import IndexConfig, IndexSeries, compute_index, index_at_time
from .indexed_kernel import IndexedKernel, estimate_indexed_kernel
from .ingestion import (PriceSeries, RawReturnSeries, TickSeries, TradingCalendar,
                        compute_returns, parse_ticks, resample_minutes)
from .models import IndexedSemiMarkovChain, SemiMarkovChain
from .simulate import (SimulationConfig, Trajectory, expand_to_minutes,
                       monte_carlo_transition, simulate_indexed, simulate_smc)
from .smc import (MarkovRenewalSample, SemiMarkovKernel, backward_recurrence,
                  estimate_kernel, extract_mrp, solve_evolution)
from .synthetic import SyntheticGeneratorSpec, generate_synthetic
