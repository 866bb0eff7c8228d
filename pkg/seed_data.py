"""
Seed script to generate sample input files
Writes a SINR trace of the default three-UE scenario and a logged OLLA
dataset that can be uploaded to /fqi or passed to `experiment_cli.py fqi`.
"""
import sys

from config import BASE_DIR
from channel_model import generate, get_scenario, write_trace
from offline_fqi import synthesize_dataset, write_dataset

SAMPLE_SLOTS = 2000


def seed_samples():
    """Write the sample trace and dataset under data/"""
    try:
        print("Starting sample generation...")

        # SINR trace
        print("\n1. Generating SINR trace...")
        scenario = get_scenario("cell-3ue", num_slots=SAMPLE_SLOTS)
        trace = generate(scenario, realization=0)
        trace_path = write_trace(trace, BASE_DIR / "data" / "sample_trace.csv")
        print(f"   ✓ Wrote trace: {trace_path} ({trace.num_ues} UEs x {trace.num_slots} slots)")

        # Logged dataset
        print("\n2. Logging OLLA on the same scenario...")
        frame = synthesize_dataset(scenario, realization=0, seed=0)
        dataset_path = write_dataset(frame, BASE_DIR / "data" / "sample_dataset.csv")
        print(f"   ✓ Wrote dataset: {dataset_path} ({len(frame)} rows)")

        print("\n" + "="*60)
        print(" Sample generation completed successfully!")
        print("="*60)
        print("\n Try:")
        print("   python experiment_cli.py fqi --dataset data/sample_dataset.csv")
        print("   python experiment_cli.py run --method olla --trace data/sample_trace.csv")

    except Exception as e:
        print(f"\nError during sample generation: {e}")
        sys.exit(1)


if __name__ == "__main__":
    seed_samples()
