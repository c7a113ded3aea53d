"""Graph-neural-network surrogate docking."""

__version__ = "0.1.0"

_ESTIMATORS = ("MolecularGraphFeaturizer", "SurrogateDockingRegressor")


def __getattr__(name):
    # scikit-learn is imported only when the estimators are asked for
    if name in _ESTIMATORS:
        from . import estimators
        return getattr(estimators, name)
    raise AttributeError(f"module 'dsdock' has no attribute {name!r}")


__all__ = ["__version__", *_ESTIMATORS]
