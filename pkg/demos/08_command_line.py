"""
Running experiments from a config file
======================================

Every experiment is also available as a subcommand.  A YAML file holds the
overrides; the run writes the resolved config, the records and a summary,
all named after the config hash.
"""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

out = Path(tempfile.mkdtemp())
cfg = out / "spectrum.yaml"
cfg.write_text("scatterers:\n  N: 2\ngaps:\n  count: 5\n")

res = subprocess.run(
    [sys.executable, "-m", "pointscatter", "spectrum", "--config", str(cfg), "--out-dir", str(out)],
    capture_output=True, text=True, check=True,
)
paths = json.loads(res.stdout)
print(Path(paths["records"]).read_text())
print(json.dumps(json.loads(Path(paths["summary"]).read_text())["summary"], indent=1))

# A misspelled key is rejected with exit code 2 and names the key.
cfg.write_text("scaterers:\n  N: 2\n")
res = subprocess.run([sys.executable, "-m", "pointscatter", "spectrum", "--config", str(cfg)], capture_output=True, text=True)
print("exit", res.returncode, res.stderr.strip())
