"""Train on the default synthetic set and compare with the centroid oracle.

Run with ``python3 demos/train_synthetic.py`` from the repository root.
"""

from pathlib import Path

from dualspace.config import load_run_config
from dualspace.synthetic import SyntheticSpec, ambiguous_subset, generate_synthetic
from dualspace.training import evaluate, train

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "desk.cfg"


def main():
    ds = generate_synthetic(SyntheticSpec())
    cfg = load_run_config(CONFIG).model
    train_videos, test_videos = ds.split("train"), ds.split("test")
    print(f"{len(train_videos)} training videos, {len(test_videos)} test videos")

    result = train(
        train_videos,
        cfg,
        ds.bank,
        test_videos,
        progress=lambda row: print(f"epoch {row.epoch:2d}  bce {row.bce:.4f}  test AP {row.ap:.4f}"),
    )
    hard = evaluate(ambiguous_subset(test_videos), result.store, cfg)
    print(f"centroid oracle AP {ds.meta['oracle_ap_test']:.4f}")
    print(f"ambiguous subset AP {hard.ap:.4f}")


if __name__ == "__main__":
    main()
