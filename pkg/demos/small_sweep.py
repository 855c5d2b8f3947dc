"""A small correlation sweep written to ./sweep_out, then the ranking summary."""

from cfnoma.bench import ExperimentSpec, run_experiment
from cfnoma.cli import format_summary
from cfnoma.system import SystemConfig

spec = ExperimentSpec(
    base=SystemConfig(rng_seed=7),
    methods=("matching-sca", "sdma", "bb-noma", "cb-noma"),
    corrs=(0.3, 0.9),
    ks=(3, 6),
    realizations=5,
    out_dir="sweep_out",
)

if __name__ == "__main__":
    result = run_experiment(spec)
    print(format_summary(result.summary))
