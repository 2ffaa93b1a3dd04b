import numpy as np
import pytest

from qdcircuit.types import CorrelationHistogram, TimeTagStream


def make_stream(ch1_ps, ch2_ps, duration_ps=None):
    """Two-channel stream from per-channel timestamp lists."""
    t = np.concatenate([np.asarray(ch1_ps, np.int64), np.asarray(ch2_ps, np.int64)])
    c = np.concatenate([np.ones(len(ch1_ps), np.uint8), np.full(len(ch2_ps), 2, np.uint8)])
    order = np.argsort(t, kind="stable")
    if duration_ps is None:
        duration_ps = int(t.max()) + 1 if t.size else 0
    return TimeTagStream(c[order], t[order], duration_ps, (1, 2))


def model_histogram(fn, bin_width_ps=50, max_tau_ps=30_000, tag="cw-poisson"):
    """Noiseless normalized histogram sampling ``fn(tau_ns)`` at bin centers."""
    tau = np.arange(-max_tau_ps, max_tau_ps + 1, bin_width_ps, dtype=float)
    values = fn(tau * 1e-3)
    return CorrelationHistogram(bin_width_ps, tau, np.zeros(tau.size, np.int64), values, tag, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def gaussian_map(x0=1000.0, y0=750.0, sigma=400.0, peak=500.0, baseline=5.0, pitch=250.0,
                 shape=(11, 11), rng=None):
    """Scalar CL map of one emitter; Poisson noise when ``rng`` is given."""
    from qdcircuit.types import CLMap

    rows, cols = np.mgrid[0:shape[0], 0:shape[1]]
    x, y = cols * pitch, rows * pitch
    img = baseline + peak * np.exp(-0.5 * ((x - x0) ** 2 + (y - y0) ** 2) / sigma ** 2)
    if rng is not None:
        img = rng.poisson(img).astype(float)
    return CLMap(img, pitch)


def rotation_zoom(angle_deg, zoom):
    a = np.deg2rad(angle_deg)
    return zoom * np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])


FIELD_CORNERS = np.array([[0.0, 0.0], [100_000.0, 0.0], [100_000.0, 100_000.0], [0.0, 100_000.0]])
