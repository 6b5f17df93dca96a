"""Self-induced stochastic resonance in the stochastic FitzHugh-Nagumo model.

Modules: ``fhn_model`` (vector field, fixed points, regime), ``potential``
(effective double-well, barriers, escape times), ``sde`` (Euler-Maruyama
paths and datasets), ``spikes`` (ISI statistics and CV sweeps), ``nn`` (MLP,
reverse mode, Adam), ``pinn`` (composite loss and training), ``surrogate``
(open-loop rollouts) and ``cli``.
"""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("sisr-pinn")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"
