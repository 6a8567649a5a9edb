"""Backend selection for the packed log-posterior evaluator.

Importing the compiled extension is attempted once; failure (no compiler at
install time, pure checkout) silently selects the vectorized numpy twin.
Both backends are importable side by side for benchmarking and equivalence
tests.
"""

from __future__ import annotations

from . import _slowcore

try:
    from . import _fastcore
except ImportError:
    _fastcore = None

__all__ = ["HAVE_COMPILED", "active_backend", "make_evaluator"]

HAVE_COMPILED = _fastcore is not None


def active_backend() -> str:
    return "compiled" if HAVE_COMPILED else "python"


class PostEvaluator:
    """Callable wrapper tagging an evaluator with its layout and origin."""

    __slots__ = ("_fn", "layout", "backend_name")

    def __init__(self, fn, layout, backend_name):
        self._fn = fn
        self.layout = layout
        self.backend_name = backend_name

    def __call__(self, vec) -> float:
        return self._fn(vec)


def make_evaluator(data, layout, prior, backend: str = "auto"):
    if backend == "auto":
        backend = active_backend()
    if backend == "compiled":
        if not HAVE_COMPILED:
            raise RuntimeError(
                "compiled backend requested but the extension is not built")
        kind = data.kind
        fn = _fastcore.Evaluator(
            counts=data.counts,
            sizes=data.sizes,
            directed=kind.directed,
            weighted=kind.weighted,
            q=layout.q,
            free_rows=layout.free_rows,
            free_cols=layout.free_cols,
            cauchy_scale_sigma=prior.cauchy_scale_sigma,
            cauchy_scale_tau=prior.cauchy_scale_tau,
        )
    elif backend == "python":
        fn = _slowcore.make_evaluator(data, layout, prior)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return PostEvaluator(fn, layout, backend)
