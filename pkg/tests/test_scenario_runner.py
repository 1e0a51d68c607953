from io import StringIO

import numpy
from numpy.testing import assert_almost_equal
import pandas
import pytest

import accelperf
from accelperf.device_model import spec_digest
from accelperf.exceptions import ScenarioError
from accelperf.presets import list_presets
from accelperf.scenario_runner import (
    KINDS,
    compare_devices,
    compare_reports,
    load_scenario,
    run_scenario,
)
from accelperf.testing import assert_roofline_dominance


def _scenario(**overrides):
    doc = {
        "name": "test",
        "kind": "gather_sweep",
        "devices": ["gaudi2"],
        "axes": {"vector_bytes": [64, 256]},
    }
    doc.update(overrides)
    return doc


@pytest.fixture()
def specs(gaudi2, a100):
    return {"gaudi2": gaudi2, "a100": a100}


class TestLoadScenario:

    @staticmethod
    def test_bundled():
        scenario = load_scenario("fig7c")
        assert scenario.kind == "gemm_sweep"
        assert scenario.devices == ("gaudi2",)
        assert scenario.axis_names == ["m", "k", "n", "mode"]
        assert dict(scenario.axes)["n"] == tuple(2 ** i for i in range(4, 15))
        assert scenario.n_rows == 22
        assert scenario.metrics == list(KINDS["gemm_sweep"][2])

    @staticmethod
    def test_shapes():
        scenario = load_scenario("fig4")
        shapes = dict(scenario.axes)["shape"]
        assert shapes[0] == "128x128x128"
        assert shapes[-1] == "16384x16384x16"
        assert scenario.metrics == ["geometry", "utilization", "achieved_flops", "attainable_flops", "oi", "bound"]

    @staticmethod
    def test_range():
        scenario = load_scenario("fig8c")
        assert dict(scenario.axes)["cores"] == tuple(range(1, 25))

    @staticmethod
    def test_from_file(temp_file):
        temp_file.write("""
name: from-file
kind: stream_sweep
devices: gaudi2
axes:
  kernel: TRIAD
  access_bytes: {geometric: {start: 64, stop: 1000, factor: 4}}
  extra_ops_per_element: {range: {start: 0, stop: 1, step: 0.25}}
""")
        temp_file.close()
        scenario = load_scenario(temp_file.name)
        assert scenario.name == "from-file"
        assert scenario.devices == ("gaudi2",)
        axes = dict(scenario.axes)
        assert axes["kernel"] == ("TRIAD",)
        assert axes["access_bytes"] == (64, 256)
        assert axes["extra_ops_per_element"] == (0.0, 0.25, 0.5, 0.75, 1.0)

    @staticmethod
    def test_from_stream():
        scenario = load_scenario(StringIO("name: s\nkind: gather_sweep\naxes: {vector_bytes: 64}\n"))
        assert scenario.devices == ()
        assert scenario.axes == (("vector_bytes", (64,)),)

    @staticmethod
    @pytest.mark.parametrize("overrides,match", [
        ({"kind": "conv_sweep"}, "kind must be one of"),
        ({"axes": {"vector_bytes": [64], "stride": [1]}}, "unknown axis 'stride' for kind gather_sweep"),
        ({"axes": {"vector_bytes": []}}, "axis 'vector_bytes' is empty"),
        ({"axes": {"direction": ["gather"]}}, "kind gather_sweep requires axis 'vector_bytes'"),
        ({"axes": {"vector_bytes": [64.5]}}, "axis 'vector_bytes' expects integers"),
        ({"axes": {"vector_bytes": [64], "direction": [1]}}, "axis 'direction' expects strings"),
        ({"axes": {}}, "axes must be a non-empty mapping"),
        ({"axes": {"vector_bytes": {"linear": {"start": 1}}}}, "generator must be 'range' or 'geometric'"),
        ({"axes": {"vector_bytes": {"range": {"start": 1, "stop": 8, "step": 0}}}}, "positive step"),
        ({"axes": {"vector_bytes": {"geometric": {"start": 1, "stop": 8, "factor": 1}}}}, "factor > 1"),
        ({"devices": ["gaudi2", "a100", "h100"]}, "at most two device names"),
        ({"columns": ["flops"]}, "columns must be a non-empty subset"),
        ({"owner": "me"}, "unknown key 'owner'"),
    ])
    def test_invalid(overrides, match):
        with pytest.raises(ScenarioError, match=match):
            load_scenario(_scenario(**overrides))

    @staticmethod
    @pytest.mark.parametrize("axes,match", [
        ({"shape": [[1, 2, 3]], "m": [4]}, "cannot be combined"),
        ({"m": [1], "k": [2]}, "requires axis 'shape' or axes 'm', 'k' and 'n'"),
        ({"shape": [[1, 2]]}, r"axis 'shape' expects \[m, k, n\] triples"),
    ])
    def test_invalid_gemm_axes(axes, match):
        with pytest.raises(ScenarioError, match=match):
            load_scenario(_scenario(kind="gemm_sweep", axes=axes))

    @staticmethod
    def test_unknown_name():
        with pytest.raises(ScenarioError, match="cannot resolve scenario 'fig99'"):
            load_scenario("fig99")

    @staticmethod
    def test_malformed(temp_file):
        temp_file.write("axes: [unclosed")
        temp_file.close()
        with pytest.raises(ScenarioError, match="malformed document"):
            load_scenario(temp_file.name)


class TestRunScenario:

    @staticmethod
    @pytest.mark.parametrize("name", list_presets()["scenarios"])
    def test_bundled(name, specs):
        scenario = load_scenario(name)
        report = run_scenario(scenario)

        assert len(report) == scenario.n_rows * len(scenario.devices)
        assert list(report.data.columns) == ["device"] + scenario.axis_names + scenario.metrics
        assert report.axes == ["device"] + scenario.axis_names
        assert report.metadata["n_rows"] == len(report)
        numeric = report.data[scenario.metrics].select_dtypes(include=[numpy.number])
        assert not numeric.isnull().values.any()
        assert_roofline_dominance(report, specs)

    @staticmethod
    def test_metadata(gaudi2):
        report = run_scenario(load_scenario("fig9"), devices=[gaudi2])
        meta = report.metadata
        assert meta["scenario"] == "fig9"
        assert meta["kind"] == "gather_sweep"
        assert meta["tool_version"] == accelperf.__version__
        assert len(meta["devices"]) == 1
        assert meta["devices"][0]["name"] == "gaudi2"
        assert meta["devices"][0]["spec_digest"] == spec_digest(gaudi2)
        calibration = meta["devices"][0]["calibration"]
        assert calibration["pipeline_overlap"] == 0.286
        assert calibration["stream_efficiency"] == gaudi2.calibration.stream_efficiency
        assert calibration["random_access_beta"] == gaudi2.memory.random_access_beta
        assert calibration["scatter_beta"] == gaudi2.memory.random_access_beta
        assert calibration["small_transfer_overhead_bytes"] == gaudi2.memory.small_transfer_overhead_bytes
        assert calibration["mean_latency"] == gaudi2.memory.mean_latency
        assert calibration["alpha_latency"] == gaudi2.interconnect.alpha_latency
        assert meta["axes"]["direction"] == ["gather", "scatter"]

    @staticmethod
    def test_deterministic():
        scenario = load_scenario("fig10")
        first = run_scenario(scenario)
        second = run_scenario(scenario, n_jobs=2)
        pandas.testing.assert_frame_equal(first.data, second.data)
        assert first.metadata == second.metadata

    @staticmethod
    def test_row_order():
        axes = {"vector_bytes": [256, 64], "direction": ["scatter", "gather"]}
        report = run_scenario(load_scenario(_scenario(axes=axes)))
        rows = list(report.data[["vector_bytes", "direction"]].itertuples(index=False, name=None))
        assert rows == [(64, "gather"), (64, "scatter"), (256, "gather"), (256, "scatter")]

    @staticmethod
    def test_row_order_devices_outermost(gaudi2, a100):
        axes = {"direction": ["scatter", "gather"], "vector_bytes": [512, 64, 256]}
        report = run_scenario(load_scenario(_scenario(axes=axes)), devices=[gaudi2, a100])
        assert list(report.data["device"]) == ["gaudi2"] * 6 + ["a100"] * 6
        for _, frame in report.data.groupby("device", sort=False):
            rows = list(frame[["direction", "vector_bytes"]].itertuples(index=False, name=None))
            assert rows == sorted(rows)

    @staticmethod
    def test_gemm_axes(gaudi2):
        scenario = load_scenario(_scenario(kind="gemm_sweep", axes={"m": [256], "k": [4096], "n": [512, 256]}))
        report = run_scenario(scenario, devices=[gaudi2])
        assert list(report.data["n"]) == [256, 512]
        assert not report.data["utilization"].isnull().any()

    @staticmethod
    def test_device_override(a100):
        report = run_scenario(load_scenario(_scenario()), devices=[a100, "gaudi2"])
        assert list(report.data["device"]) == ["a100", "a100", "gaudi2", "gaudi2"]

    @staticmethod
    def test_no_device():
        with pytest.raises(ScenarioError, match="does not reference a device"):
            run_scenario(load_scenario(_scenario(devices=[])))

    @staticmethod
    def test_unknown_device():
        with pytest.raises(ScenarioError, match="cannot resolve device 'tpu'"):
            run_scenario(load_scenario(_scenario(devices=["tpu"])))

    @staticmethod
    def test_evaluation_error():
        scenario = load_scenario(_scenario(kind="stream_sweep", axes={"kernel": ["ADD"], "cores": [24, 25]}))
        with pytest.raises(ScenarioError, match=r"stream_sweep on gaudi2 with cores=25, kernel=ADD: cores must be"):
            run_scenario(scenario)

    @staticmethod
    def test_unknown_kernel():
        scenario = load_scenario(_scenario(kind="stream_sweep", axes={"kernel": ["COPY"]}))
        with pytest.raises(ScenarioError, match="kernel must be one of ADD, SCALE, TRIAD"):
            run_scenario(scenario)

    @staticmethod
    def test_configurable_geometry():
        report = run_scenario(load_scenario("fig7c"))
        data = report.data.pivot(index="n", columns="mode", values="utilization")
        gain = data["configurable"] - data["fixed"]
        assert (gain >= 0).all()
        assert 0.10 <= gain.max() <= 0.20
        assert gain.idxmax() == 128

    @staticmethod
    def test_stream_plateaus():
        report = run_scenario(load_scenario("fig8c"))
        full = report.data[report.data["cores"] == 24].set_index("kernel")
        assert (full["bound"] == "memory").all()
        assert full.loc["ADD", "flops"] == pytest.approx(330e9, rel=0.1)
        assert full.loc["SCALE", "flops"] == pytest.approx(530e9, rel=0.1)
        assert full.loc["TRIAD", "flops"] == pytest.approx(670e9, rel=0.1)

    @staticmethod
    def test_gemm_devices():
        report = run_scenario(load_scenario("fig5"))
        data = report.data.pivot(index="shape", columns="device", values="utilization")
        diff = (data["gaudi2"] - data["a100"]).mean()
        assert 0.01 < diff < 0.09
        assert data.loc["8192x8192x8192", "gaudi2"] >= 0.999

    @staticmethod
    def test_paged_attention_padding():
        report = run_scenario(load_scenario("fig17b"))
        data = report.data.pivot(index="padded_fraction", columns="variant", values="time")
        speedup = data["block_table"] / data["block_list"]
        assert numpy.all(numpy.diff(speedup.values) > 0)


class TestCompare:

    @staticmethod
    def test_compare_devices(gaudi2, a100):
        report = compare_devices(load_scenario("fig9"), gaudi2, a100)
        assert len(report) == 16
        assert report.axes == ["vector_bytes", "direction"]
        for column in ("utilization_a", "utilization_b", "utilization_ratio", "time_ratio"):
            assert column in report.data.columns
        assert_almost_equal(report.data["utilization_ratio"].values,
                            report.data["utilization_a"].values / report.data["utilization_b"].values)
        assert set(report.summary) == {"utilization_ratio", "useful_bytes_per_sec_ratio",
                                       "fetched_bytes_per_sec_ratio", "time_ratio"}
        assert [d["name"] for d in report.metadata["devices"]] == ["gaudi2", "a100"]

    @staticmethod
    def test_summary_row(gaudi2, a100):
        report = compare_devices(load_scenario("fig17c"), "gaudi2", "a100")
        assert list(report.summary) == ["time_ratio", "tokens_per_sec_ratio"]
        frame = report.to_frame(include_summary=True)
        assert len(frame) == len(report) + 1
        last = frame.iloc[-1]
        assert last["variant"] == "geomean"
        assert_almost_equal(last["tokens_per_sec_ratio"], report.summary["tokens_per_sec_ratio"])
        assert len(report.to_frame()) == len(report)

    @staticmethod
    def test_non_numeric_metrics(gaudi2, a100):
        report = compare_devices(load_scenario("fig4"), gaudi2, a100)
        assert "geometry_a" in report.data.columns
        assert "geometry_ratio" not in report.data.columns
        assert "bound_ratio" not in report.data.columns

    @staticmethod
    def test_same_device(gaudi2):
        report = compare_devices(load_scenario("fig10"), gaudi2, gaudi2)
        for value in report.summary.values():
            assert_almost_equal(value, 1.0)

    @staticmethod
    def test_mismatch(gaudi2):
        report_a = run_scenario(load_scenario("fig9"), devices=[gaudi2])
        report_b = run_scenario(load_scenario("fig10"), devices=[gaudi2])
        with pytest.raises(ScenarioError, match="reports have different axes or metrics"):
            compare_reports(report_a, report_b)

    @staticmethod
    def test_mismatched_values(gaudi2):
        report_a = run_scenario(load_scenario(_scenario()), devices=[gaudi2])
        report_b = run_scenario(load_scenario(_scenario(axes={"vector_bytes": [64, 512]})), devices=[gaudi2])
        with pytest.raises(ScenarioError, match="mismatched axis values"):
            compare_reports(report_a, report_b)
