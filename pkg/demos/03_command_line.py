# ---
# jupyter:
#   jupytext:
#     formats: py:percent
#     text_representation:
#       extension: .py
#       format_name: percent
# ---

# %% [markdown]
# # Driving the pipeline from the command line
#
# Each `powerpool` subcommand writes into a fresh directory together with a
# `manifest.json` that records the resolved settings and SHA-256 digests.
# Here the commands run through `powerpool.cli.main` in a temporary folder.
# From a shell the same arguments follow the `powerpool` executable.

# %%
import json
import tempfile
from pathlib import Path

from powerpool.cli import main

work = Path(tempfile.mkdtemp(prefix="powerpool-demo-"))


def sh(*args):
    args = [str(a) for a in args]
    print("$ powerpool", " ".join(args))
    assert main(args) == 0


sh("gen-truth", "--out", work / "truth", "--days", 1200, "--resolution", 4, "--seed", 7)
sh("gen-forecast", "--out", work / "fc", "--truth", work / "truth/truth.csf",
   "--issue-start", 800, "--issue-count", 380, "--leads", "1,7", "--n-members", 20)
sh("sweep-p", "--out", work / "sweep", "--truth", work / "truth/truth.csf",
   "--forecast", work / "fc/forecast_lead07.csf", "--p-count", 25)
sh("fit-exponent", "--out", work / "fit", "--summary", work / "sweep/summary.json")
sh("eval-leads", "--out", work / "leads", "--truth", work / "truth/truth.csf",
   "--forecasts", f"{work}/fc/forecast_lead01.csf,{work}/fc/forecast_lead07.csf",
   "--summary", work / "sweep/summary.json")
sh("roc-svg", "--out", work / "roc", "--truth", work / "truth/truth.csf",
   "--forecast", work / "fc/forecast_lead07.csf", "--q", 0.95, "--p", 30)

# %%
print(json.dumps(json.loads((work / "fit/fit.json").read_text()), indent=2))
print((work / "leads/leads_q0.9.csv").read_text())
print(sorted(p.name for p in work.rglob("*") if p.is_file()))

# %% [markdown]
# Running a command against a directory that already holds results fails
# with exit status 2 instead of overwriting anything.

# %%
print("exit status:", main(["fit-exponent", "--out", str(work / "fit"),
                             "--summary", str(work / "sweep/summary.json")]))
