"""Write a ray-cast frame pair and its labels to a directory.

    python scripts/make_synthetic_fixtures.py OUT_DIR [--seed N] [--mover]

Produces frame_t.png, frame_t1.png, depth_t.npy, depth_t.png (KITTI encoding),
calib.txt, pose.txt, flow_fwd.flo, flow_bwd.flo, instances.npy, object_mask.png and
corrupted_mask.png, ready for the ``tempeo`` CLI.
"""

import argparse
from pathlib import Path

import numpy as np

from tempeo import dataio
from tempeo.imagery import ScalarMap
from tempeo.synth import make_pair, random_mover


def write_pair(out: Path, seed: int, mover: bool) -> None:
    rng = np.random.default_rng(seed)
    pair = make_pair(rng, mover=random_mover(rng) if mover else None)
    out.mkdir(parents=True, exist_ok=True)
    dataio.write_image(out / "frame_t.png", pair.frame_t)
    dataio.write_image(out / "frame_t1.png", pair.frame_t1)
    np.save(out / "depth_t.npy", pair.depth_t.data)
    dataio.write_depth_png_kitti(out / "depth_t.png", pair.depth_t)
    dataio.write_calib(out / "calib.txt", pair.k)
    dataio.write_pose_record(out / "pose.txt", pair.pose)
    dataio.write_flow_flo(out / "flow_fwd.flo", pair.flow_forward)
    dataio.write_flow_flo(out / "flow_bwd.flo", pair.flow_backward)
    np.save(out / "instances.npy", pair.instances_t)
    dataio.write_mask_png(out / "object_mask.png",
                          ScalarMap(pair.object_mask_t.astype(float), "probability"))
    dataio.write_mask_png(out / "corrupted_mask.png",
                          ScalarMap(pair.corrupted_t.astype(float), "probability"))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out", type=Path)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--mover", action="store_true", help="add an independently moving box")
    args = ap.parse_args()
    write_pair(args.out, args.seed, args.mover)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
