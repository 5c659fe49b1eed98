"""
Synthetic highway encounters
============================

Draw cut-ins and drive-bys, check them with the rule labeller and save a
line plot of a few of each.
"""

import collections

from drivegen import plot
from drivegen.trajectory import ScenarioLabel, SynthParams, rule_label, synth_dataset

counts = {ScenarioLabel.CutIn: 200, ScenarioLabel.DriveByLeft: 100,
          ScenarioLabel.DriveByRight: 100}
ds = synth_dataset(counts, SynthParams(), seed=1)
print(len(ds), "trajectories, lengths", ds.lengths.min(), "to", ds.lengths.max())

# The rule labeller only looks at lateral offsets, so it is an independent check.
agree = collections.Counter((t.label, rule_label(t)) for t in ds)
for (given, found), n in sorted(agree.items(), key=lambda kv: -kv[1]):
    print(f"  {given.value:>12} -> {found.value:<12} {n}")

few = [t for t in ds if t.label is ScenarioLabel.CutIn][:15]
few += [t for t in ds if t.label is not ScenarioLabel.CutIn][:15]
with open("scenarios.svg", "w") as fh:
    fh.write(plot.trajectory_lines(few, title="cut-ins and drive-bys"))
print("wrote scenarios.svg")
