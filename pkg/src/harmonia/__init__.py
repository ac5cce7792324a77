"""Parametric image harmonization: global RGB curves plus a local shading
map, trained with a dual-stream semi-supervised procedure at desk scale.

Most callers want:

    harmonia.image       - image/mask arrays, compositing, resampling, PNG I/O
    harmonia.transforms  - curve/shading parameters and their application
    harmonia.datastream  - training-sample construction for both streams
    harmonia.trainer     - the optimization loop and checkpoints
    harmonia.metrics     - MSE / PSNR / SSIM and Bradley-Terry ranking
    harmonia.service     - the HTTP facade (FastAPI app factory)
"""

__version__ = "0.1.0"
