import pathlib

import pytest

# * same limit as [tool.black] and [tool.ruff] in pyproject.toml
MAX_LINE = 120
ROOT = pathlib.Path(__file__).resolve().parents[1]
SOURCES = sorted((ROOT / "app").rglob("*.py"))


class TestSourceLayout:
    """
    * test suite for source files staying within the formatter line limit
    """

    @pytest.mark.parametrize("path", SOURCES, ids=lambda p: str(p.relative_to(ROOT)))
    def test_line_length(self, path):
        long_lines = [
            n for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1) if len(line) > MAX_LINE
        ]
        assert not long_lines, f"{path.name}: lines over {MAX_LINE} columns at {long_lines}"
