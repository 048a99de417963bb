from flatnf.selftest import CHECKS, run_all


def test_all_shipped_checks_pass():
    results = run_all()
    assert [name for name, _, _ in results] == list(CHECKS)
    failed = [(name, detail) for name, ok, detail in results if not ok]
    assert not failed


def test_crashing_check_is_reported(monkeypatch):
    def boom():
        raise RuntimeError("kaput")

    monkeypatch.setitem(CHECKS, "boom", boom)
    name, ok, detail = run_all()[-1]
    assert name == "boom" and not ok and "kaput" in detail
