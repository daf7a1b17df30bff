import runpy
from pathlib import Path

import pytest

SCRIPTS = Path(__file__).resolve().parent.parent / "scripts"


@pytest.mark.parametrize("name", ["run_sweep.py", "phase1_synthetic.py"])
def test_script_runs(name, tmp_path, capsys):
    main = runpy.run_path(str(SCRIPTS / name))["main"]
    assert main(["--out-dir", str(tmp_path)]) == 0
    assert capsys.readouterr().out
