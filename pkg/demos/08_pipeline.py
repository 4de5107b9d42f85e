"""
The batch pipeline, end to end
==============================

Every training stage reads the artifacts of the stage before it inside a
run directory: gen-data -> train tracker -> train fm -> train pretrain ->
train rl -> eval. The `convrec` CLI drives the same functions; here the
stages run on a deliberately tiny setup so the whole chain finishes in
seconds. The benchmark-scale configuration lives in configs/benchmark.json.
"""

import json
import pathlib
import tempfile

from convrec.cli import main

run = pathlib.Path(tempfile.mkdtemp()) / "demo-run"
config = {
    "catalog": {"n_users": 12, "n_items": 40, "ratings_per_user": 10},
    "tracker": {"hidden": 24, "max_epochs": 4, "patience": 2},
    "fm": {"max_epochs": 12, "patience": 3},
    "pretrain": {"episodes": 60, "max_epochs": 5},
    "rl": {"epochs": 1, "batches_per_epoch": 2, "batch_size": 12},
}
cfg_path = run.parent / "demo.json"
cfg_path.write_text(json.dumps(config))

for argv in (
    ["gen-data", "--run", str(run), "--config", str(cfg_path)],
    ["train", "tracker", "--run", str(run), "--config", str(cfg_path)],
    ["train", "fm", "--run", str(run), "--config", str(cfg_path)],
    ["train", "pretrain", "--run", str(run), "--config", str(cfg_path)],
    ["train", "rl", "--run", str(run), "--config", str(cfg_path),
     "--allow-random-init"],
    ["eval", "--run", str(run), "--config", str(cfg_path),
     "--policies", "maxent@1,maxent_full,crm", "--episodes", "50"],
):
    print(f"\n$ convrec {' '.join(argv)}")
    code = main(argv)
    assert code in (0, None), f"stage failed with exit code {code}"

print("\nrun directory now holds:")
for p in sorted(run.rglob("*")):
    if p.is_file():
        print(f"  {p.relative_to(run)}")

print("\nmetrics/eval.csv:")
print((run / "metrics" / "eval.csv").read_text())
