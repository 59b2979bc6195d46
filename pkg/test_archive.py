import pytest

from sideband_tomo.db import make_session_factory
from sideband_tomo.schemas import FitResult, FitRunResponse, ParameterEstimate
from sideband_tomo.services import archive_service


@pytest.fixture
def db(tmp_path):
    session = make_session_factory(f"sqlite:///{tmp_path / 'archive.db'}")()
    yield session
    session.close()


def _result():
    return FitResult(
        parameters=("alpha[x]", "beta[x]", "gamma[x]", "delta[x]"),
        estimates={
            "alpha[x]": ParameterEstimate(value=1.5, stderr=0.01, identifiable=True),
            "beta[x]": ParameterEstimate(value=2.8, stderr=0.02, identifiable=True),
            "gamma[x]": ParameterEstimate(value=-0.02, stderr=0.01, identifiable=True),
            "delta[x]": ParameterEstimate(value=0.0, stderr=float("inf"), identifiable=False),
        },
        chi2=37.5,
        dof=37,
        n_records=40,
        rank=3,
        condition_number=float("inf"),
    )


def test_save_and_get(db):
    run = archive_service.save_fit(db, _result(), "hd scan", "full", ["a.csv", "b.csv"])
    stored = FitRunResponse.model_validate(archive_service.get_run(db, run.id))
    assert stored.label == "hd scan"
    assert stored.sources == "a.csv;b.csv"
    assert stored.condition_number is None
    assert [e.parameter for e in stored.estimates] == ["alpha[x]", "beta[x]", "gamma[x]", "delta[x]"]
    assert stored.estimates[3].stderr is None
    assert not stored.estimates[3].identifiable
    assert stored.estimates[0].estimate == 1.5


def test_list_runs(db):
    assert archive_service.list_runs(db) == []
    first = archive_service.save_fit(db, _result(), "first", "full", [])
    second = archive_service.save_fit(db, _result(), "second", "no-hidden", [])
    assert {r.id for r in archive_service.list_runs(db)} == {first.id, second.id}


def test_unknown_run(db):
    with pytest.raises(ValueError) as e:
        archive_service.get_run(db, "missing")
    assert e.value.args[0] == "run_not_found"
