# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <http://www.gnu.org/licenses/>.
from collections import OrderedDict
from dataclasses import replace
import logging

import numpy
import pandas
from scipy.optimize import brentq
from scipy.stats import gmean

from .memory_model import GatherWorkload, gather_scatter_utilization
from .operator_models import PagedAttentionConfig, paged_attention
from .tpc_model import kernel_presets

__all__ = [
    'CALIBRATION_TARGETS',
    'STREAM_PLATEAUS',
    'calibration_report',
    'fit_pipeline_overlap',
    'fit_random_access_beta',
    'fit_small_transfer_overhead',
    'fit_stream_efficiency',
    'paged_attention_grid',
]

LOG = logging.getLogger(__package__)

STREAM_PLATEAUS = {"ADD": 330e9, "SCALE": 530e9, "TRIAD": 670e9}
SMALL_VECTOR_SIZES = (16, 32, 64, 128)
LARGE_VECTOR_SIZES = (256, 512, 1024, 2048)

CALIBRATION_TARGETS = {
    "gaudi2": {
        "stream_plateaus": STREAM_PLATEAUS,
        "large_vector_utilization": 0.64,
        "pipeline_speedup": 7.4,
    },
    "a100": {
        "small_vector_utilization": 0.36,
    },
}


def paged_attention_grid(seq_lens=(1024, 2048, 4096), batches=(8, 16, 32), padded_fraction=0.0):
    """Llama-3.1-8B decode configurations over sequence lengths and batch sizes."""
    return [PagedAttentionConfig(batch=b, seq_len=s, padded_fraction=padded_fraction)
            for s in seq_lens for b in batches]


def _with_calibration(spec, **changes):
    return replace(spec, calibration=replace(spec.calibration, **changes))


def _with_memory(spec, **changes):
    return replace(spec, memory=replace(spec.memory, **changes))


def fit_stream_efficiency(spec, plateaus=None):
    """Fit the streaming efficiency to measured memory-bound plateaus.

    Each plateau gives the efficiency ``plateau / (oi * peak_bandwidth)``;
    the fit is their geometric mean.

    Parameters
    ----------
    spec : :class:`accelperf.device_model.DeviceSpec`
        The device.

    plateaus : dict, optional
        Kernel name to flops/sec, defaults to :data:`STREAM_PLATEAUS`.

    Returns
    -------
    efficiency : float
    """
    if plateaus is None:
        plateaus = STREAM_PLATEAUS
    presets = kernel_presets()
    ratios = [flops / (presets[name].operational_intensity * spec.memory.peak_bandwidth)
              for name, flops in plateaus.items()]
    efficiency = float(gmean(ratios))
    if not 0 < efficiency <= 1:
        raise ValueError("fitted stream_efficiency {:.4f} is outside (0; 1]".format(efficiency))
    LOG.info("%s: fitted stream_efficiency = %.4f", spec.name, efficiency)
    return efficiency


def _mean_gather_utilization(spec, sizes):
    return numpy.mean([gather_scatter_utilization(GatherWorkload(vector_bytes=s), spec).utilization
                       for s in sizes])


def fit_random_access_beta(spec, target=0.64, sizes=LARGE_VECTOR_SIZES):
    """Fit the random-access ceiling to a mean gather utilization.

    Utilization is proportional to the ceiling, so the fit is closed form.
    """
    unit = _with_memory(spec, random_access_beta=1.0, scatter_beta=None)
    beta = target / _mean_gather_utilization(unit, sizes)
    if not 0 < beta <= 1:
        raise ValueError("fitted random_access_beta {:.4f} is outside (0; 1]".format(beta))
    LOG.info("%s: fitted random_access_beta = %.4f", spec.name, beta)
    return float(beta)


def fit_small_transfer_overhead(spec, target=0.36, sizes=SMALL_VECTOR_SIZES, upper=4096.0):
    """Fit the per-transaction overhead to a mean small-vector utilization.

    Parameters
    ----------
    spec : :class:`accelperf.device_model.DeviceSpec`
        The device; its ``random_access_beta`` is kept.

    target : float
        Mean utilization over `sizes`.

    sizes : sequence of int
        Vector sizes in bytes.

    upper : float
        Largest overhead considered.

    Returns
    -------
    overhead : float
        Overhead in bytes.
    """
    def residual(overhead):
        return _mean_gather_utilization(_with_memory(spec, small_transfer_overhead_bytes=overhead), sizes) - target

    if residual(0.0) < 0:
        raise ValueError("target {} is above the utilization without overhead ({:.4f})".format(
            target, residual(0.0) + target))
    if residual(upper) > 0:
        raise ValueError("target {} needs an overhead above {} bytes".format(target, upper))
    overhead = brentq(residual, 0.0, upper, xtol=1e-6)
    LOG.info("%s: fitted small_transfer_overhead_bytes = %.2f", spec.name, overhead)
    return float(overhead)


def _mean_speedup(spec, configs):
    return numpy.mean([paged_attention("block_table", cfg, spec).time
                       / paged_attention("block_list", cfg, spec).time
                       for cfg in configs])


def fit_pipeline_overlap(spec, configs=None, target=7.4):
    """Fit the pipeline overlap to a mean BlockList over BlockTable speedup.

    Parameters
    ----------
    spec : :class:`accelperf.device_model.DeviceSpec`
        The device.

    configs : list of :class:`accelperf.operator_models.PagedAttentionConfig`, optional
        Workloads to average over, defaults to :func:`paged_attention_grid`.

    target : float
        Mean speedup.

    Returns
    -------
    overlap : float
        Value in [0, 1].
    """
    if configs is None:
        configs = paged_attention_grid()

    def residual(overlap):
        return _mean_speedup(_with_calibration(spec, pipeline_overlap=overlap), configs) - target

    low, high = residual(0.0), residual(1.0)
    if low > 0 or high < 0:
        raise ValueError("target speedup {} is outside the reachable range [{:.3f}; {:.3f}]".format(
            target, low + target, high + target))
    overlap = brentq(residual, 0.0, 1.0, xtol=1e-8)
    LOG.info("%s: fitted pipeline_overlap = %.4f", spec.name, overlap)
    return float(overlap)


def calibration_report(spec, targets=None):
    """Bundled calibration constants next to values refitted to measurements.

    Parameters
    ----------
    spec : :class:`accelperf.device_model.DeviceSpec`
        The device.

    targets : dict, optional
        Measurements to fit to, with any of the keys ``stream_plateaus``,
        ``large_vector_utilization``, ``small_vector_utilization`` and
        ``pipeline_speedup``. Defaults to the entry of
        :data:`CALIBRATION_TARGETS` for the device's name.

    Returns
    -------
    report : :class:`pandas.DataFrame`
        Columns ``constant``, ``bundled``, ``fitted`` and ``target``, one
        row per constant with a target. Failed fits are reported as NaN.
    """
    if targets is None:
        targets = CALIBRATION_TARGETS.get(spec.name, {})

    fits = OrderedDict([
        ("stream_plateaus", ("stream_efficiency", spec.calibration.stream_efficiency,
                             lambda t: fit_stream_efficiency(spec, t))),
        ("large_vector_utilization", ("random_access_beta", spec.memory.random_access_beta,
                                      lambda t: fit_random_access_beta(spec, t))),
        ("small_vector_utilization", ("small_transfer_overhead_bytes", spec.memory.small_transfer_overhead_bytes,
                                      lambda t: fit_small_transfer_overhead(spec, t))),
        ("pipeline_speedup", ("pipeline_overlap", spec.calibration.pipeline_overlap,
                              lambda t: fit_pipeline_overlap(spec, target=t))),
    ])
    unknown = sorted(set(targets) - set(fits))
    if unknown:
        raise ValueError("unknown calibration target {!r}".format(unknown[0]))

    rows = []
    for key, (name, bundled, fit) in fits.items():
        if key not in targets:
            continue
        try:
            fitted = fit(targets[key])
        except ValueError as e:
            LOG.warning("%s: cannot fit %s: %s", spec.name, name, e)
            fitted = float("nan")
        target = targets[key]
        if isinstance(target, dict):
            target = ", ".join("{}={:g}".format(k, v) for k, v in target.items())
        rows.append((name, float(bundled), fitted, str(target)))
    return pandas.DataFrame.from_records(rows, columns=["constant", "bundled", "fitted", "target"])
