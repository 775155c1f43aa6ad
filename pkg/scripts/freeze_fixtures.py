"""Regenerate the frozen oracle values used by the test suite."""
from pathlib import Path

from hicontrast.oracles import write_fixtures

if __name__ == "__main__":
    target = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "oracles.json"
    target.parent.mkdir(parents=True, exist_ok=True)
    write_fixtures(target)
    print(f"wrote {target}")
