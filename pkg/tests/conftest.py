import pytest

from nativqa.corpus import Locale


@pytest.fixture
def doha_en():
    return Locale("en", "Doha", "high")


@pytest.fixture
def assam_as():
    return Locale("as", "Assam", "extremely_low")


@pytest.fixture(scope="session")
def fixture_pipeline_runs(tmp_path_factory):
    """The bundled fixture pipeline executed twice in sibling work trees.

    Yields [(workdir, counts), ...] plus the wall-clock duration of both runs
    via the ``duration`` attribute on the returned list.
    """
    import time

    from pipeline_driver import prepare_workdir, run_full_pipeline

    root = tmp_path_factory.mktemp("pipeline")

    class Runs(list):
        duration = 0.0

    runs = Runs()
    start = time.monotonic()
    for name in ("run1", "run2"):
        work = prepare_workdir(root / name)
        counts = run_full_pipeline(work)
        runs.append((work, counts))
    runs.duration = time.monotonic() - start
    return runs
