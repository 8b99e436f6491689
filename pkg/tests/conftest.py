import pytest

from fgbg.assets import BackgroundAsset, ForegroundAsset, make_manifest
from fgbg.synth import generate_corpus

# --- shared builders ---------------------------------------------------------


def fake_manifest(n_classes=2, n_per_class=5, infill=0.3):
    """Manifest with no real image files; enough for planning-only tests."""
    fgs, bgs = [], []
    for c in range(n_classes):
        for i in range(n_per_class):
            stem = f"c{c:03d}_{i:04d}"
            frac = 0.08 + 0.04 * ((i + c) % 3)
            fgs.append(
                ForegroundAsset(f"{stem}_fg", c, f"/nonexistent/{stem}_fg.png", frac, f"src_{stem}")
            )
            bgs.append(
                BackgroundAsset(
                    f"{stem}_bg", c, f"/nonexistent/{stem}_bg.png", frac, infill, f"src_{stem}"
                )
            )
    return make_manifest(fgs, bgs)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """A real rendered corpus shared by pixel-level tests."""
    root = tmp_path_factory.mktemp("corpus")
    manifest = generate_corpus(root, n_classes=2, n_per_class=5, seed=7, size=160)
    return manifest, root


# --- acceptance summary: one pass/fail line per criterion ---------------------

_acceptance: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        _acceptance[report.nodeid.split("::")[-1]] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if _acceptance:
        terminalreporter.section("acceptance criteria")
        for name, outcome in _acceptance.items():
            label = "PASS" if outcome == "passed" else "FAIL"
            terminalreporter.write_line(f"{label}  {name}")
