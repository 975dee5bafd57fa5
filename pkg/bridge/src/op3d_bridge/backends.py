"""Scoring backends served by the worker.

Every backend answers one or both request modes:

- diffusion: given a decoded image and prompts, return per-prompt lists of
  squared denoising errors for worker-sampled (t, eps) pairs.
- similarity: return one similarity per prompt.

The echo and toy backends need no model weights; the CLIP and latent
diffusion adapters lazily import their heavy dependencies so the worker
module stays importable everywhere.
"""

from __future__ import annotations

import hashlib

import numpy as np


def linear_schedule(T: int = 600, beta_start: float = 1e-4, beta_end: float = 0.02):
    betas = np.linspace(beta_start, beta_end, T)
    return betas, np.cumprod(1.0 - betas)


def decode_gray(png_bytes: bytes) -> np.ndarray:
    from io import BytesIO

    from PIL import Image

    return np.asarray(Image.open(BytesIO(png_bytes)).convert("L"), dtype=np.float64) / 255.0


class EchoBackend:
    """Protocol test double: perfect denoising, first prompt wins."""

    name = "echo"
    modes = ("diffusion", "similarity")
    T = 600

    def sq_err_lists(self, png: bytes, prompts, trials: int, seed: int):
        return [[0.0] * trials for _ in prompts]

    def similarities(self, png: bytes, prompts):
        return [1.0] + [0.0] * (len(prompts) - 1)


class ToyBackend:
    """Deterministic stand-in with real (t, eps) sampling but no model.

    The "latent" is a downsampled copy of the image scaled to [-1, 1]; the
    "denoiser" is a fixed prompt-keyed contraction of the noised latent. The
    numbers are meaningless as semantics but exercise the full diffusion
    request path with seeded reproducibility.
    """

    name = "toy"
    modes = ("diffusion", "similarity")

    def __init__(self, latent: int = 16, T: int = 600):
        self.latent = latent
        self.T = T
        self.betas, self.alpha_bars = linear_schedule(T)

    def _encode(self, png: bytes) -> np.ndarray:
        img = decode_gray(png)
        h, w = img.shape
        step_r, step_c = max(h // self.latent, 1), max(w // self.latent, 1)
        small = img[: step_r * self.latent : step_r, : step_c * self.latent : step_c]
        return small * 2.0 - 1.0

    @staticmethod
    def _prompt_gain(prompt: str) -> float:
        digest = hashlib.sha256(prompt.encode("utf-8")).digest()
        return 0.25 + 0.75 * (digest[0] / 255.0)

    def sq_err_lists(self, png: bytes, prompts, trials: int, seed: int):
        f0 = self._encode(png)
        rng = np.random.Generator(np.random.Philox(key=np.array([seed, 0], dtype=np.uint64)))
        draws = []
        for _ in range(trials):
            t = int(rng.integers(1, self.T + 1))
            eps = rng.standard_normal(f0.shape)
            draws.append((t, eps))
        out = []
        for prompt in prompts:
            gain = self._prompt_gain(prompt)
            errs = []
            for t, eps in draws:
                ab = self.alpha_bars[t - 1]
                f_t = np.sqrt(ab) * f0 + np.sqrt(1.0 - ab) * eps
                eps_hat = gain * np.tanh(f_t)
                errs.append(float(np.mean((eps - eps_hat) ** 2)))
            out.append(errs)
        return out

    def similarities(self, png: bytes, prompts):
        f0 = self._encode(png)
        anchor = float(np.tanh(np.abs(f0).mean()))
        return [anchor * self._prompt_gain(p) for p in prompts]


class ClipBackend:
    """Similarity via a pretrained contrastive image-text model."""

    name = "clip"
    modes = ("similarity",)
    T = 0

    def __init__(self, model_id: str = "openai/clip-vit-base-patch32", device: str = "cpu"):
        import torch
        from transformers import CLIPModel, CLIPProcessor

        self.torch = torch
        self.device = device
        self.model = CLIPModel.from_pretrained(model_id).to(device).eval()
        self.processor = CLIPProcessor.from_pretrained(model_id)

    def similarities(self, png: bytes, prompts):
        from io import BytesIO

        from PIL import Image

        image = Image.open(BytesIO(png)).convert("RGB")
        inputs = self.processor(text=list(prompts), images=image,
                                return_tensors="pt", padding=True).to(self.device)
        with self.torch.no_grad():
            out = self.model(**inputs)
            img = out.image_embeds / out.image_embeds.norm(dim=-1, keepdim=True)
            txt = out.text_embeds / out.text_embeds.norm(dim=-1, keepdim=True)
            sims = (txt @ img.T).squeeze(-1)
        return [float(s) for s in sims]


class LatentDiffusionBackend:
    """Noise-prediction scoring through a pretrained latent diffusion model.

    Requests encode the image once; the worker-sampled (t, eps) pairs are
    pushed through the scheduler's forward process and the UNet predicts the
    noise conditioned on each prompt.
    """

    name = "sd"
    modes = ("diffusion",)

    def __init__(self, model_id: str = "runwayml/stable-diffusion-v1-5",
                 device: str = "cpu", image_px: int = 256):
        import torch
        from diffusers import StableDiffusionPipeline

        self.torch = torch
        self.device = device
        self.image_px = image_px
        pipe = StableDiffusionPipeline.from_pretrained(model_id)
        pipe = pipe.to(device)
        self.vae = pipe.vae.eval()
        self.unet = pipe.unet.eval()
        self.tokenizer = pipe.tokenizer
        self.text_encoder = pipe.text_encoder.eval()
        alphas = pipe.scheduler.alphas_cumprod.cpu().numpy()
        self.alpha_bars = alphas
        self.T = len(alphas)

    def _encode(self, png: bytes):
        from io import BytesIO

        import numpy as np
        from PIL import Image

        image = Image.open(BytesIO(png)).convert("RGB").resize((self.image_px, self.image_px))
        arr = np.asarray(image, dtype=np.float32) / 127.5 - 1.0
        tensor = self.torch.from_numpy(arr).permute(2, 0, 1)[None].to(self.device)
        with self.torch.no_grad():
            latent = self.vae.encode(tensor).latent_dist.mean * 0.18215
        return latent

    def _embed(self, prompt: str):
        tokens = self.tokenizer(prompt, padding="max_length",
                                max_length=self.tokenizer.model_max_length,
                                truncation=True, return_tensors="pt").to(self.device)
        with self.torch.no_grad():
            return self.text_encoder(tokens.input_ids)[0]

    def sq_err_lists(self, png: bytes, prompts, trials: int, seed: int):
        torch = self.torch
        f0 = self._encode(png)
        gen = np.random.Generator(np.random.Philox(key=np.array([seed, 0], dtype=np.uint64)))
        draws = []
        for _ in range(trials):
            t = int(gen.integers(1, self.T + 1))
            eps = torch.from_numpy(
                gen.standard_normal(tuple(f0.shape)).astype("float32")
            ).to(self.device)
            draws.append((t, eps))
        out = []
        for prompt in prompts:
            emb = self._embed(prompt)
            errs = []
            for t, eps in draws:
                ab = float(self.alpha_bars[t - 1])
                f_t = (ab ** 0.5) * f0 + ((1.0 - ab) ** 0.5) * eps
                with torch.no_grad():
                    pred = self.unet(f_t, t - 1, encoder_hidden_states=emb).sample
                errs.append(float(((eps - pred) ** 2).mean()))
            out.append(errs)
        return out


BACKENDS = {
    "echo": EchoBackend,
    "toy": ToyBackend,
    "clip": ClipBackend,
    "sd": LatentDiffusionBackend,
}


def load_backend(name: str, **kwargs):
    try:
        factory = BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown backend {name!r}; choose from {sorted(BACKENDS)}") from None
    return factory(**kwargs)
