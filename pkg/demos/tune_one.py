"""Triage and tune one simulated device with quickly trained models.

    python3 demos/tune_one.py [device_seed]
"""
import sys

from qdtune.characterize import characterize_device
from qdtune.datasets import gen_records
from qdtune.device import Device, new_random_device
from qdtune.training import TASKS, train_models
from qdtune.tuner import TunerConfig, run_tuning


def main(seed=0):
    print("training on small corpora (300 per class) ...")
    corpora = {t: gen_records(t, 300, 1) for t in TASKS}
    models = train_models(corpora, evaluate=False)["models"]

    dev = Device(new_random_device(seed), session_seed=0)
    rep = characterize_device(dev, pinch_model=models["pinchoff"], device_id=f"seed{seed}")
    print(f"verdict {rep.verdict}, n_1D {rep.n_1d}, TB valid range {rep.tb_valid_range}")
    if not rep.working:
        return 1
    res = run_tuning(dev, rep, TunerConfig(max_2d=10), models)
    for e in res.log:
        extra = {k: e[k] for k in ("reason", "counts") if k in e}
        print(f"{e['step']:>3}  {e['from']:>14} -> {e['to']:<14} {extra or ''}")
    print(f"success={res.success} regime={res.regime_classifier} oracle={res.regime_oracle} "
          f"n_1D={res.n_1d} n_2D={res.n_2d}")
    print("final voltages:", {g: round(v, 3) for g, v in res.voltages.items()})
    return 0 if res.success else 2


if __name__ == "__main__":
    sys.exit(main(int(sys.argv[1]) if len(sys.argv) > 1 else 0))
