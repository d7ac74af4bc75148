"""Variational approximations of Gibbs posteriors with computable risk bounds.

Submodules: core (data model), risk (empirical and expected risks),
bounds (rate functions and the empirical bound), optim (annealing,
convex hinge solver, ranking SGD), smc (tempering sampler),
completion (mean-field matrix completion), cli (command line).
"""

__version__ = "0.1.0"

_SUBMODULES = ("core", "risk", "bounds", "optim", "smc", "completion", "cli", "errors")


def __getattr__(name):
    # submodules load lazily so the CLI can pin BLAS threads before numpy imports
    if name in _SUBMODULES:
        import importlib
        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
