"""Monte Carlo laboratory for positive self-similar Markov processes.

Modules: ``levy`` (triplets and path streams), ``expfun`` (exponential
functionals and their tails), ``lamperti`` (the Lamperti bijection and the
entrance law at 0), ``reversal`` (last passages and the overshoot
decomposition), ``envelope`` (integral tests and LIL normalisations) and
``harness`` (configuration, experiments and the ``pssmp`` command).
"""
from . import envelope, expfun, lamperti, levy, reversal, rng, stats

__version__ = "0.1.0"

__all__ = ["envelope", "expfun", "lamperti", "levy", "reversal", "rng", "stats"]
