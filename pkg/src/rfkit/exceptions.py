"""Exception types shared across rfkit modules."""


class RfkitError(Exception):
    """Base class for rfkit errors."""


class DimensionError(RfkitError, ValueError):
    """Input shape does not match the operator or contract."""


class OracleSizeError(RfkitError, ValueError):
    """Dense reference path requested above its size guard."""


class BlobError(RfkitError, ValueError):
    """Operator blob is malformed, wrong version, or inconsistent."""


class InsufficientDataError(RfkitError, ValueError):
    """Fewer samples than the computation needs."""


class DegeneratePairsError(RfkitError, ValueError):
    """Zero pairwise distance makes a ratio undefined.

    ``pairs`` holds the offending (i, j) column index pairs.
    """

    def __init__(self, pairs):
        self.pairs = list(pairs)
        shown = ", ".join(f"({i}, {j})" for i, j in self.pairs[:8])
        more = "" if len(self.pairs) <= 8 else f" and {len(self.pairs) - 8} more"
        super().__init__(f"identical columns at pairs {shown}{more}")


class DegenerateCloudError(RfkitError, ValueError):
    """Point cloud collapses to a single point after centering."""


class DegenerateProfileError(RfkitError, ValueError):
    """Profile vector has zero norm."""


class UnidentifiableProfileError(RfkitError, ValueError):
    """Whitened estimator denominator is numerically zero."""


class InvalidRankError(RfkitError, ValueError):
    """Requested component count exceeds what the data supports."""


class GraphConnectivityError(RfkitError, ValueError):
    """Neighbor graph is disconnected.

    ``component_sizes`` lists the size of each connected component.
    """

    def __init__(self, component_sizes):
        self.component_sizes = list(component_sizes)
        super().__init__(
            f"neighbor graph has {len(self.component_sizes)} connected components "
            f"(sizes {self.component_sizes}); increase k_neighbors or clean the data"
        )


class NumericError(RfkitError, ValueError):
    """Local numerical failure attributable to a specific sample.

    ``index`` is the offending column index, when known.
    """

    def __init__(self, message, index=None):
        self.index = index
        super().__init__(message if index is None else f"{message} (sample {index})")


class SolverDivergenceError(RfkitError, RuntimeError):
    """Time integration produced non-finite values.

    ``time`` is the integration time at failure, when known.
    """

    def __init__(self, message, time=None):
        self.time = time
        super().__init__(message if time is None else f"{message} (t = {time:g})")


class ParseError(RfkitError, ValueError):
    """On-disk matrix is malformed."""
