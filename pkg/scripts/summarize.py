"""Print the headline numbers of finished runs as plain text.

    python scripts/summarize.py out/ee_vs_rrh out/ee_vs_nt ...
"""
import csv
import json
import sys
from pathlib import Path


def _table(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def summarize(run_dir: Path):
    meta = json.loads((run_dir / "report.json").read_text())
    print(f"== {run_dir} ({meta['experiment']}, failure rate {meta['failure_rate']:.3f})")
    exp = meta["experiment"]
    if exp == "ccdf_baselines":
        for r in _table(run_dir / "papr_summary.csv"):
            print(f"  {r['scheme']:22s} PAPR at 1e-3: {float(r['papr_db_at_1e-3']):6.2f} dB")
    elif exp == "ee_vs_rrh":
        for r in _table(run_dir / "ee_vs_rrh.csv"):
            print(f"  {r['n_rrh']:>3s} RRHs  proposed {float(r['ee_proposed_median']):.4g} bit/J  "
                  f"constant eta {float(r['ee_constant_eta_median']):.4g} bit/J  "
                  f"ratio {float(r['median_ratio']):.3f}")
    elif exp in ("ee_vs_nt", "waveform_compare"):
        for r in _table(run_dir / f"{exp}.csv"):
            print(f"  {r['n_antennas']:>3s} antennas  worst PAPR ls/rnn/fitra "
                  f"{float(r['worst_papr_db_ls']):.2f}/{float(r['worst_papr_db_rnn']):.2f}/"
                  f"{float(r['worst_papr_db_fitra']):.2f} dB  EE ls/rnn/fitra "
                  f"{float(r['ee_bits_per_joule_ls']):.3g}/{float(r['ee_bits_per_joule_rnn']):.3g}/"
                  f"{float(r['ee_bits_per_joule_fitra']):.3g} bit/J")
    elif exp == "validate":
        for r in _table(run_dir / "validate.csv"):
            print(f"  {r['check']:36s} {float(r['value']):.3e} (tol {r['tolerance']}) {r['passed']}")


if __name__ == "__main__":
    for arg in sys.argv[1:]:
        summarize(Path(arg))
