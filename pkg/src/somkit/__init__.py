"""somkit: stochastic object models from noisy, indirectly measured images.

Subpackages cover the full desk-scale pipeline: ground-truth object
ensembles (lumpy backgrounds or ingested rasters), a stylized parallel-beam
CT / identity imaging simulator, few-step diffusion-GAN training with the
imaging operator in the loop, posterior sampling, and task-based image
quality evaluation (Hotelling observer, SSIM PDFs, Fréchet feature
distance, radial spectra).
"""

__version__ = "0.1.0"
