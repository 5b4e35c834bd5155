"""Data ingestion, synthetic data, experiment orchestration and the CLI."""
from .data import (
    Cluster, IngestConfig, SynthSpec, dump_dataset, load_dataset, load_locations, read_dataset,
    sample_tasks, synth_generate, write_dataset,
)
from .experiment import ExperimentConfig, TimingRecord, run_experiment, sweep
