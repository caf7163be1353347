"""Script to generate the sample datasets

Run this script to write the synthetic datasets used in the README examples
to data/ (or GBMAP_DATA_DIR), each with a JSON metadata sidecar.
"""

import sys
from pathlib import Path

# Add gbmap to path
sys.path.insert(0, str(Path(__file__).parent))

from gbmap.config import DATA_DIR
from gbmap.data import gen_cluster_vis, gen_drift_fixture, gen_synth_cos, write_csv
from gbmap.models import TaskKind


def generate_sample_data(seed: int = 0):
    """Write synth-cos regression/classification, cluster and drift datasets"""
    datasets = {
        "synth_cos_r.csv": gen_synth_cos(10_000, 20, seed=seed),
        "synth_cos_c.csv": gen_synth_cos(10_000, 20, seed=seed, task=TaskKind.CLASSIFICATION),
        "cluster_vis.csv": gen_cluster_vis(seed),
        "drift_fixture.csv": gen_drift_fixture(seed=seed),
    }

    DATA_DIR.mkdir(parents=True, exist_ok=True)
    for name, dataset in datasets.items():
        path = write_csv(dataset, DATA_DIR / name)
        print(f"  - {path.name}: {dataset.n} rows, {len(dataset.covariate_names)} covariates")

    print(f"\nSample data generated successfully in {DATA_DIR}")


if __name__ == "__main__":
    generate_sample_data()
