"""Write a scene to disk, run the command-line pipeline on it, read the report.

Run: python3 demos/03_files_and_metrics.py
"""
# %%
import json
import tempfile
from pathlib import Path

import numpy as np

from psrelight import io, masked_mse, ssim
from psrelight.cli import main

work = Path(tempfile.mkdtemp(prefix="psrelight-"))
scene, stack, sol = work / "scene", work / "stack", work / "solve"

# %% gen -> relight -> solve -> eval, the same calls the shell would make
main(["gen", "--preset", "sphere", "--res", "48", "--seed", "7", "--out", str(scene)])
main(["relight", "--scene", str(scene), "--lights", "hemisphere:16:2:7", "--out-dir", str(stack)])
main(["solve", "--images-dir", str(stack), "--geometry", str(scene), "--out", str(sol)])
main(["eval", "--est", str(sol), "--gt", str(scene), "--mask", str(scene / "mask.pfm"),
      "--metrics", "mae,mse,rough-grad", "--out", str(work / "eval.json")])
print(json.dumps(json.loads((work / "eval.json").read_text())["metrics"], indent=1))

# %% PFM files are plain float32; a 1x1 map is a 12-byte header plus 4 bytes
io.write_map(work / "half.pfm", np.array([[0.5]]))
print((work / "half.pfm").read_bytes())

# %% relight the estimate and compare with the stored images
from psrelight import render_direct  # noqa: E402

gt = io.read_bundle(scene)
est = gt.replace(normal=io.read_map(sol / "normal.pfm"), albedo=io.read_map(sol / "albedo.pfm"),
                 roughness=io.read_map(sol / "roughness.pfm"))
images, lights = io.read_stack(stack)
for k in (0, 5, 10):
    re = render_direct(est, lights[k])
    print(f"light {k}: SSIM {ssim(np.clip(re, 0, 1), np.clip(images[k], 0, 1)):.5f}, "
          f"MSE {masked_mse(re, images[k], gt.mask):.2e}")
print("outputs in", work)
