#!/usr/bin/env python3
"""The synthetic benchmark: discs vs. annuli across styled domains.

Class 0 is a filled disc, class 1 an annulus; the hole is the only cue that
matters.  Each domain renders the same classes under its own photometric
style — intensity gain and bias, background texture, blur — so that the
*label* space is shared while the *appearance* drifts.  The target domain
sits far from every source (heavy texture in particular), which is what the
adaptation losses are later asked to bridge.

The script prints the style table, generates every domain, verifies the
disk round-trip, and drops contact sheets into demos/output/benchmark/.

Runtime: a few seconds.
"""

from pathlib import Path

import numpy as np
from PIL import Image

from btmuda.data.dataset import load_domain_dir, write_domain_dir
from btmuda.data.synth import SynthConfig, gen_domain, make_domain_specs

OUT = Path(__file__).resolve().parent / "output" / "benchmark"


def contact_sheet(images, labels, path, cols=8, rows=4):
    """Tile the first rows*cols samples, discs in the top half, annuli below."""
    size = images.shape[1]
    order = np.concatenate([np.where(labels == 0)[0], np.where(labels == 1)[0]])
    sheet = np.ones(((size + 2) * rows, (size + 2) * cols), dtype=np.uint8) * 32
    for slot, idx in enumerate(order[: rows * cols]):
        r, c = divmod(slot, cols)
        tile = np.clip(np.rint(images[idx] * 255), 0, 255).astype(np.uint8)
        sheet[r * (size + 2) + 1:r * (size + 2) + 1 + size,
              c * (size + 2) + 1:c * (size + 2) + 1 + size] = tile
    Image.fromarray(sheet, mode="L").save(path)


def main():
    cfg = SynthConfig(samples_per_domain=200, eval_samples=64)
    specs = make_domain_specs(cfg)

    print("domain styles (after scaling by the inter-domain shift "
          f"s_inter = {cfg.s_inter}):\n")
    print(f"   {'id':<8}{'role':<9}{'gain':>7}{'bias':>7}{'texture':>9}{'blur':>7}")
    for s in specs:
        print(f"   {s.id:<8}{s.role:<9}{s.gain:>7.3f}{s.bias:>7.3f}"
              f"{s.texture:>9.3f}{s.blur:>7.2f}")
    print("\nThe target's texture amplitude dwarfs every source: a classifier"
          "\nthat never saw it must rely on what the domains share.")

    OUT.mkdir(parents=True, exist_ok=True)
    print(f"\ngenerating {cfg.samples_per_domain} samples per domain "
          f"({cfg.image_size}x{cfg.image_size})...")
    for spec in specs:
        ds = gen_domain(cfg, spec)
        balance = float(np.mean(ds.labels))
        sheet = OUT / f"{spec.id}.png"
        contact_sheet(ds.images, ds.labels, sheet)
        print(f"   {spec.id:<7} mean intensity {ds.images.mean():.3f}  "
              f"class-1 share {balance:.2f}  -> {sheet.relative_to(OUT.parent.parent)}")

    print("\nround-trip check on the target eval split:")
    ev = gen_domain(cfg, specs[-1], count=cfg.eval_samples, split="eval")
    write_domain_dir(OUT, ev, with_labels=True)
    back = load_domain_dir(OUT / ev.domain_id, image_size=cfg.image_size)
    worst = float(np.abs(back.images - ev.images).max())
    print(f"   wrote {len(ev)} PNGs, reloaded them; "
          f"max per-pixel error {worst:.6f} (8-bit quantization bound "
          f"{1.0 / 255.0:.6f})")
    print("\nThe same tree (plus a manifest) is what `btmuda gen-synth` writes.")


if __name__ == "__main__":
    main()
