"""Simulation and spectral analysis of excitable fronts on tubular
surfaces: straight and warped cylinders, co-moving-frame front
construction, per-mode linearized spectra, and persistence experiments.

Importing the package is deliberately lightweight; submodules (which
pull in numpy/scipy) load on first attribute access so the command-line
entry point can pin thread counts before any numerics are imported.
"""

__version__ = "0.1.0"

_SUBMODULES = (
    "cli",
    "config",
    "errors",
    "front",
    "geometry",
    "grid_ops",
    "model",
    "runner",
    "spectral",
    "storage",
    "timestepper",
)


def __getattr__(name):
    if name in _SUBMODULES:
        import importlib

        module = importlib.import_module(f".{name}", __name__)
        globals()[name] = module
        return module
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(set(globals()) | set(_SUBMODULES))
