"""
The experiment pipeline from the command line
=============================================

Everything above is also reachable through the ``esme`` command. Each output
directory is tied to one configuration by a short hash; results from different
configurations never mix.
"""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

config = json.loads((Path(__file__).parent / "configs" / "diffusion.json").read_text())
config.update({"N": 200, "replications": 4, "dt": "0.005"})

with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    cfg_path = tmp / "small.json"
    cfg_path.write_text(json.dumps(config))
    out = tmp / "run"

    def esme(*args):
        cmd = [sys.executable, "-m", "esme.cli", *args]
        proc = subprocess.run(cmd, capture_output=True, text=True)
        print("$ esme", " ".join(args[:1]), "->", proc.returncode)
        return proc

    esme("expand", "--config", str(cfg_path), "--out", str(out))
    esme("replicate", "--config", str(cfg_path), "--out", str(out))
    print((out / "replications.csv").read_text())
    print(json.dumps(json.loads((out / "summary.json").read_text())["status_counts"]))

    # A different seed is a different configuration: the directory is refused.
    esme("replicate", "--config", str(cfg_path), "--out", str(out), "--seed", "7")
