"""Train GMSNet once per loss function and write one trace CSV per loss."""
import argparse
import math
from pathlib import Path

from meshsmith.delaunay import DatasetSpec, build_dataset
from meshsmith.training import TrainConfig, train_gmsnet


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/losses")
    ap.add_argument("--epochs", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train, val, _ = build_dataset(DatasetSpec(seed=args.seed))
    for kind in ("metric", "cos", "minmax", "ar"):
        _, trace = train_gmsnet(train, val, TrainConfig(epochs=args.epochs, loss_kind=kind, seed=args.seed))
        trace.to_csv(out / f"{kind}.csv")
        finite = [v for v in trace.val_loss if math.isfinite(v)]
        best = min(finite) if finite else math.nan
        print(f"{kind:>7}: epoch 1 val {trace.val_loss[0]:.4g}, best {best:.4g}")


if __name__ == "__main__":
    main()
