"""Smoke test for the Python bindings.

Build and install first:  pip install --no-build-isolation -e crates/python
(or `maturin develop -m crates/python/Cargo.toml`), then run this file.
"""

import sys
import tempfile
from pathlib import Path

import aiad


def check(cond, what):
    print(("ok   " if cond else "FAIL ") + what)
    return cond


def main():
    ok = True

    w = aiad.wilcoxon([1, 2, 3, 4, 5, 6], [2, 4, 6, 8, 10, 12])
    ok &= check(abs(w["p_value"] - 0.03125) < 1e-15, "wilcoxon exact p")

    s = aiad.Session({"domain": "daytrip", "seed": 1, "particles": 64,
                      "planner": {"iterations": 300, "subsample": 16}})
    before = s.view()
    advice = s.advice()
    record = s.act(advice)
    after = s.view()
    ok &= check(record["accepted"] is True, "accepted advice is logged as accepted")
    ok &= check(after["interactions"] == 1, "interaction counted")
    ok &= check(after["belief"] != before["belief"], "belief updated")

    try:
        s.act({"toggle": 10_000})
        ok &= check(False, "illegal action rejected")
    except aiad.IllegalActionError:
        ok &= check(s.view() == after, "illegal action rejected without state change")

    with tempfile.TemporaryDirectory() as tmp:
        spec = Path(tmp) / "spec.toml"
        spec.write_text(
            'domain = "inventory"\nruns = 2\nparticles = 32\noutput = "out"\n'
            '[[modes]]\nname = "aiad"\nkind = "aiad"\n'
            '[[modes]]\nname = "unassisted"\nkind = "unassisted"\n'
            '[settings.planner]\niterations = 200\nsubsample = 16\n'
            '[inventory]\nhorizon = 4\n'
        )
        summary = aiad.run_experiment(str(spec))
        ok &= check([m["name"] for m in summary["modes"]] == ["aiad", "unassisted"], "experiment summary")
        report = aiad.replay(str(Path(tmp) / "out" / "runs" / "r001_aiad.jsonl"))
        ok &= check(report["identical"], "replay is byte-identical")

    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
