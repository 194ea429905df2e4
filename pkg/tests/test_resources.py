from core.resources import format_bytes, get_run_environment, get_worker_count


def test_worker_count():
    assert get_worker_count(3) == 3
    assert get_worker_count(0) == 1
    assert get_worker_count() >= 1


def test_run_environment_keys():
    info = get_run_environment()
    for key in ("system", "python", "numpy", "scipy", "physical_cores", "memory_total"):
        assert key in info


def test_format_bytes():
    assert format_bytes(512) == "512.00 B"
    assert format_bytes(1024) == "1.00 KB"
    assert format_bytes(3 * 1024 ** 3) == "3.00 GB"
