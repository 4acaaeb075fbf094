"""This module contains the piecewise functions, numerical kernels and the
text output helpers that the solvers and the command line driver share.  The
multiprocessing fan-out also lives here.

"""

from __future__ import division
import logging

import numpy as np
import numexpr as ne
import sharedmem
import numba

logger = logging.getLogger(__name__)

# relative slack used whenever a float is compared against a grid multiple
GRID_RTOL = 1e-9


class StepFunction(object):

    r"""A right-continuous piecewise-constant function.

    The function takes ``values[0]`` before the first break, ``values[i]`` on
    ``[breaks[i-1], breaks[i])`` and ``values[-1]`` from the last break on.

    Paramaters
    ----------

    breaks : array_like
        Strictly increasing interior breakpoints.

    values : array_like
        One more value than there are breaks.

    start, stop : float
        The support the function is meant to describe.  Evaluation outside it
        is allowed and extends the first and last values.

    """

    def __init__(self, breaks, values, start=0.0, stop=np.inf):

        self.breaks = np.atleast_1d(np.asarray(breaks, dtype='double'))
        self.values = np.atleast_1d(np.asarray(values, dtype='double'))
        self.start = float(start)
        self.stop = float(stop)

        if self.values.shape[0] != self.breaks.shape[0] + 1:
            raise ValueError("a step function needs one more value than breaks "
                             "(got %d breaks, %d values)"
                             % (self.breaks.shape[0], self.values.shape[0]))
        if np.any(np.diff(self.breaks) <= 0):
            raise ValueError("step function breaks must be strictly increasing")

    @classmethod
    def constant(cls, value, start=0.0, stop=np.inf):
        return cls([], [value], start, stop)

    is_linear = False

    def __call__(self, t):
        idx = np.searchsorted(self.breaks, t, side='right')
        return self.values[idx]

    def left_limit(self, t):
        idx = np.searchsorted(self.breaks, t, side='left')
        return self.values[idx]

    def knots(self, a, b):
        """Breaks strictly inside ``(a, b)``."""
        return self.breaks[(self.breaks > a) & (self.breaks < b)]

    @property
    def total_variation(self):
        return float(np.sum(np.abs(np.diff(self.values))))

    @property
    def minimum(self):
        return float(np.min(self.values))

    def integral(self, a, b):
        """Exact integral over ``[a, b]``."""
        if b <= a:
            return 0.0
        edges = np.concatenate(([a], self.knots(a, b), [b]))
        widths = np.diff(edges)
        heights = self(edges[:-1] + widths / 2)
        return float(ne.evaluate('sum(widths * heights)'))


class PiecewiseLinear(object):

    r"""A continuous piecewise-linear function given by its nodes.

    Outside the node range the end values are held constant.

    """

    def __init__(self, nodes, values):

        self.nodes = np.atleast_1d(np.asarray(nodes, dtype='double'))
        self.values = np.atleast_1d(np.asarray(values, dtype='double'))

        if self.nodes.shape != self.values.shape:
            raise ValueError("piecewise-linear nodes and values differ in length")
        if np.any(np.diff(self.nodes) < 0):
            raise ValueError("piecewise-linear nodes must be nondecreasing")

    is_linear = True

    def __call__(self, t):
        return np.interp(t, self.nodes, self.values)

    left_limit = __call__

    def knots(self, a, b):
        return self.nodes[(self.nodes > a) & (self.nodes < b)]

    @property
    def minimum(self):
        return float(np.min(self.values))

    def integral(self, a, b):
        if b <= a:
            return 0.0
        edges = np.concatenate(([a], self.knots(a, b), [b]))
        heights = self(edges)
        return float(np.sum(np.diff(edges) * (heights[:-1] + heights[1:]) / 2))


def as_function(value, start=0.0, stop=np.inf):
    """Promote a scalar to a constant `StepFunction`, pass functions through."""
    if isinstance(value, (StepFunction, PiecewiseLinear)):
        return value
    return StepFunction.constant(float(value), start, stop)


def merged_knots(functions, a, b):
    """Sorted union of ``a``, ``b`` and every function's knots in between."""
    knots = [np.array([a, b], dtype='double')]
    for func in functions:
        knots.append(func.knots(a, b))
    return np.unique(np.concatenate(knots))


def l1_distance(f, g, a, b):
    r"""Exact L1 distance between two step functions on ``[a, b]``."""
    edges = merged_knots((f, g), a, b)
    widths = np.diff(edges)
    mids = edges[:-1] + widths / 2
    fm = f(mids)
    gm = g(mids)
    return float(ne.evaluate('sum(abs(fm - gm) * widths)'))


@numba.jit(nopython=True)
def shift_row(row, ghost):
    out = np.empty_like(row)
    out[0] = ghost
    for i in range(1, row.shape[0]):
        out[i] = row[i - 1]
    return out


@numba.jit(nopython=True)
def shift_rows(rows, ghosts):
    out = np.empty_like(rows)
    for k in range(rows.shape[0]):
        out[k, 0] = ghosts[k]
        for i in range(1, rows.shape[1]):
            out[k, i] = rows[k, i - 1]
    return out


def steps_of(times, quantum):

    r"""Integer multiples of `quantum` closest to `times`.

    Raises
    ------
    ValueError
        When any time is not a multiple of the quantum.

    """

    times = np.atleast_1d(np.asarray(times, dtype='double'))
    steps = np.round(times / quantum)
    off = np.abs(times - steps * quantum)
    if np.any(off > GRID_RTOL * max(1.0, quantum) * np.maximum(1.0, np.abs(steps))):
        bad = times[np.argmax(off)]
        raise ValueError("time %.9g is not a multiple of the quantum %.9g" % (bad, quantum))
    return steps.astype(int)


def grid_points(start, stop, Ns, quantum=None):

    r"""`Ns` evenly spaced points on ``[start, stop]``, optionally snapped
    onto multiples of `quantum` (duplicates removed)."""

    points = np.linspace(start, stop, Ns)
    if quantum is not None:
        points = np.unique(np.round(points / quantum)) * quantum
    return points


def parallel_map(func, items, ncpus=1):

    r"""Map `func` over `items`, keeping the input order.

    With ``ncpus > 1`` the work is forked out to a `sharedmem.Pool`.

    """

    items = list(items)
    if ncpus <= 1 or len(items) < 2:
        return [func(item) for item in items]

    with sharedmem.Pool(np=ncpus) as pool:
        return pool.map(func, items)


def format_number(value):
    """Locale independent 9 significant digit rendering."""
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return '%d' % value
    return '%.9g' % value


def write_table(path, header, rows):

    r"""Write comma-delimited text with one header row.

    Paramaters
    ----------

    path : str
        Output file.

    header : sequence of str
        Column names.

    rows : iterable of sequences
        Numbers are written with `format_number`, strings verbatim.

    """

    table = np.array([[format_number(v) for v in row] for row in rows], dtype=object)
    table = table.reshape(-1, len(header))
    np.savetxt(path, table, fmt='%s', delimiter=',', header=','.join(header), comments='')
    logger.debug("wrote %d rows to %s", len(table), path)
