import numpy as np
import pytest
from pydantic import ValidationError

from sideband_tomo.schemas import (
    BeamConfig,
    CavityConfig,
    CavityParams,
    ExperimentConfig,
    GroundTruth,
    MeasurementSetting,
    ModelSpec,
    ObservableKind,
    ScanDataset,
    ScanRecord,
    Scheme,
    StationaryBeamMoments,
    single_param,
)
from sideband_tomo.services import scan_io
from sideband_tomo.services.reconstruction import fit_wls

HEADER = ",".join(scan_io.SCAN_COLUMNS)


def _config(beams, truth=None, **kwargs):
    return ExperimentConfig(
        beams=[BeamConfig(name=n, cavity=CavityConfig(d=0.85, bandwidth_mhz=12.0), scheme=s) for n, s in beams],
        analysis_frequency_mhz=21.0,
        ground_truth=truth,
        **kwargs,
    )


# --- fixture ---
def test_fixture_entries():
    fixture, _ = scan_io.load_fixture()
    assert fixture.beams == ("pump", "signal", "idler")
    assert fixture.real[0, 0] == 1.30
    assert fixture.real[3, 5] == -0.91
    assert fixture.real[5, 3] == -0.91
    np.testing.assert_array_equal(np.diag(fixture.real), [1.30, 1.07, 1.52, 2.87, 1.52, 3.64])
    # sideband imbalance of each beam
    assert [fixture.imag[k, k + 1] for k in (0, 2, 4)] == [-0.04, 0.34, 0.17]
    assert fixture.imag[3, 2] == -0.34
    assert fixture.delta_uncertainty == 0.2
    assert fixture.cross_uncertainty == 0.05


def test_fixture_is_hermitian():
    fixture, _ = scan_io.load_fixture()
    np.testing.assert_array_equal(fixture.real, fixture.real.T)
    np.testing.assert_array_equal(fixture.imag, -fixture.imag.T)
    S = fixture.spectral()
    np.testing.assert_array_equal(S.matrix, S.matrix.conj().T)


def test_write_fixture(tmp_path):
    path = tmp_path / "fixture.csv"
    scan_io.write_fixture(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "row,col,re,im"
    assert len(lines) == 1 + 21
    assert lines[1].startswith("P[pump],P[pump],1.3")


# --- config expansion ---
def test_default_config_expands_to_beams_and_pairs():
    datasets = scan_io.expand_config(scan_io.default_config())
    assert list(datasets) == ["pump", "signal", "idler", "pump-signal", "pump-idler", "signal-idler"]
    assert len(datasets["pump"]) == 450
    assert len(datasets["pump-signal"]) == 900


def test_noiseless_vacuum_scan_is_shot_noise():
    truth = GroundTruth(beams={"x": StationaryBeamMoments.vacuum()})
    data = scan_io.generate_scan(_config([("x", Scheme.RD)], truth, noise_sigma=0.0))
    assert all(r.sigma is None for r in data.records)
    np.testing.assert_allclose([r.value for r in data.records], 1.0, atol=1e-12)


def test_hd_pairs_double_the_partner_phase():
    truth = GroundTruth(beams={"a": StationaryBeamMoments(), "b": StationaryBeamMoments()})
    datasets = scan_io.expand_config(_config([("a", Scheme.HD), ("b", Scheme.HD)], truth, seed=1))
    for record in datasets["a-b"].records[:20]:
        first, second = record.settings
        assert second.phi == pytest.approx((2 * first.phi) % (2 * np.pi))


def test_rd_pairs_follow_the_sync_map():
    truth = GroundTruth(beams={"a": StationaryBeamMoments(), "b": StationaryBeamMoments()})
    config = _config([("a", Scheme.RD), ("b", Scheme.RD)], truth, sync={"slope": -1.0, "offset": 0.5})
    record = scan_io.expand_config(config)["a-b"].records[0]
    first, second = record.settings
    assert second.delta == pytest.approx(-first.delta + 0.5)


def test_mixed_scheme_pairs_are_skipped(caplog):
    truth = GroundTruth(beams={"a": StationaryBeamMoments(), "b": StationaryBeamMoments()})
    datasets = scan_io.expand_config(_config([("a", Scheme.HD), ("b", Scheme.RD)], truth))
    assert list(datasets) == ["a", "b"]
    assert "schemes differ" in caplog.text


def test_unphysical_ground_truth_rejected():
    truth = GroundTruth(beams={"x": StationaryBeamMoments(alpha=0.5, beta=0.5)})
    with pytest.raises(ValueError) as e:
        scan_io.expand_config(_config([("x", Scheme.RD)], truth))
    assert e.value.args[0] == "unphysical_ground_truth"


def test_fixture_needs_fixture_beams():
    with pytest.raises(ValueError) as e:
        scan_io.expand_config(_config([("pump", Scheme.RD), ("laser", Scheme.RD)]))
    assert e.value.args[0] == "fixture_beams_mismatch"
    assert e.value.args[1] == ["laser"]


def test_same_seed_same_bytes(tmp_path):
    config = scan_io.default_config().model_copy(update={"seed": 42})
    first, second = tmp_path / "first.csv", tmp_path / "second.csv"
    scan_io.write_scan(first, scan_io.generate_scan(config))
    scan_io.write_scan(second, scan_io.generate_scan(config))
    assert first.read_bytes() == second.read_bytes()
    other = tmp_path / "other.csv"
    scan_io.write_scan(other, scan_io.generate_scan(config.model_copy(update={"seed": 43})))
    assert other.read_bytes() != first.read_bytes()


def test_fixture_scan_reproduces_sideband_imbalance():
    data = scan_io.generate_scan(scan_io.default_config())
    fit = fit_wls(data, ModelSpec.for_dataset(data))
    for beam, delta in zip(scan_io.FIXTURE_BEAMS, (-0.04, 0.34, 0.17)):
        estimate = fit.estimates[single_param("delta", beam)]
        assert abs(estimate.value - delta) < 3 * estimate.stderr


def test_config_file(tmp_path):
    config = _config(
        [("x", Scheme.RD)],
        GroundTruth(beams={"x": StationaryBeamMoments(alpha=2.0, beta=0.6, delta=0.1)}),
        seed=9,
    )
    path = tmp_path / "experiment.json"
    scan_io.write_config(path, config)
    assert scan_io.load_config(path) == config
    assert config.omega_ratio("x") == pytest.approx(1.75)


@pytest.mark.parametrize(
    "payload",
    [
        '{"beams": [], "analysis_frequency_mhz": 21}',
        '{"schema_version": 2, "beams": [{"name": "x", "cavity": {"d": 0.5, "bandwidth_mhz": 1}}], "analysis_frequency_mhz": 21}',
        '{"beams": [{"name": "x", "cavity": {"d": 1.5, "bandwidth_mhz": 1}}], "analysis_frequency_mhz": 21}',
        '{"beams": [{"name": "x", "cavity": {"d": 0.5, "bandwidth_mhz": 1}}, {"name": "x", "cavity": {"d": 0.5, "bandwidth_mhz": 1}}], "analysis_frequency_mhz": 21}',
    ],
)
def test_config_validation(tmp_path, payload):
    path = tmp_path / "bad.json"
    path.write_text(payload)
    with pytest.raises(ValidationError):
        scan_io.load_config(path)


# --- scan files ---
def test_scan_file_round_trip(tmp_path):
    config = _config(
        [("a", Scheme.RD), ("b", Scheme.RD)],
        GroundTruth(beams={"a": StationaryBeamMoments(), "b": StationaryBeamMoments(alpha=1.5)}),
        grid={"count": 15},
    )
    data = scan_io.generate_scan(config)
    path = tmp_path / "scan.csv"
    scan_io.write_scan(path, data)
    lines = path.read_text().splitlines()
    assert lines[0] == "# cavity,a,0.84999999999999998,1.75"
    assert lines[2] == HEADER
    assert scan_io.read_scan(path) == data


def _write(tmp_path, text):
    path = tmp_path / "scan.csv"
    path.write_text(text)
    return path


def test_read_scan_reports_line_of_bad_sigma(tmp_path):
    path = _write(
        tmp_path,
        f"# cavity,x,0.85,1.75\n{HEADER}\nx,,RD,0.1,,NoisePower,1.2,0.01\nx,,RD,0.2,,NoisePower,1.3,0\n",
    )
    with pytest.raises(ValueError) as e:
        scan_io.read_scan(path)
    assert e.value.args[0] == "malformed_scan"
    assert e.value.args[1].startswith(f"{path}:4:")
    assert "sigma" in e.value.args[1]


def test_read_scan_needs_cavity_for_rd(tmp_path):
    path = _write(tmp_path, f"{HEADER}\nx,,RD,0.1,,NoisePower,1.2,0.01\n")
    with pytest.raises(ValueError) as e:
        scan_io.read_scan(path)
    assert "no cavity line" in e.value.args[1]


def test_read_scan_hd_needs_no_cavity(tmp_path):
    path = _write(tmp_path, f"{HEADER}\na,b,HD,0.1,0.2,CrossIm,0.05,\n")
    data = scan_io.read_scan(path)
    record = data.records[0]
    assert record.kind == ObservableKind.CrossIm
    assert record.sigma is None
    assert record.beams == ("a", "b")


@pytest.mark.parametrize(
    "text, message",
    [
        ("beam,value\n", "expected header"),
        (f"{HEADER}\nx,,HD,0.1,,NoisePower,1.2\n", "expected 8 fields"),
        (f"{HEADER}\nx,,HD,0.1,,CrossRe,1.2,0.1\n", "beam2"),
        (f"{HEADER}\nx,,HD,nan,,NoisePower,1.2,0.1\n", "finite"),
        (f"{HEADER}\n# cavity,x,0.85,1.75\n", "precede the header"),
    ],
)
def test_read_scan_rejects_malformed_rows(tmp_path, text, message):
    with pytest.raises(ValueError) as e:
        scan_io.read_scan(_write(tmp_path, text))
    assert e.value.args[0] == "malformed_scan"
    assert message in e.value.args[1]


def test_read_scan_rejects_empty_file(tmp_path):
    with pytest.raises(ValueError) as e:
        scan_io.read_scan(_write(tmp_path, f"{HEADER}\n"))
    assert "no records" in e.value.args[1]


def test_write_scan_rejects_inconsistent_cavities(tmp_path):
    records = [
        ScanRecord(
            settings=(MeasurementSetting.rd("x", CavityParams(d=d, omega_ratio=1.75), 0.0),),
            kind=ObservableKind.NoisePower,
            value=1.0,
        )
        for d in (0.8, 0.9)
    ]
    with pytest.raises(ValueError) as e:
        scan_io.write_scan(tmp_path / "scan.csv", ScanDataset(records=records))
    assert e.value.args[0] == "inconsistent_cavity"
