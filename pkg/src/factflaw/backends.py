"""Generative backends for the aspect, flaw, and justification stages.

Two implementations ship with the package:

* :class:`TinyLMBackend` - a character-level causal transformer small enough
  to fine-tune on a laptop CPU. Its base weights are frozen at construction;
  all task adaptation goes through low-rank adapter matrices, so the base
  model stays byte-identical across fine-tuning runs.
* :class:`MockBackend` - a deterministic text generator whose output parses
  with the stage parsers; used for tests and offline pipeline runs.

Anything with ``generate(prompt) -> str`` can serve as an inference backend;
fine-tuning additionally needs the adapter/log-likelihood API that
TinyLMBackend exposes.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import re
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Protocol, Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

logger = logging.getLogger(__name__)


class BackendError(Exception):
    pass


class GenerativeBackend(Protocol):
    max_context: int

    def generate(self, prompt: str, max_new_tokens: int | None = None) -> str: ...


# --------------------------------------------------------------------------
# Character tokenizer

PAD_ID, BOS_ID, SEP_ID, EOS_ID, UNK_ID = 0, 1, 2, 3, 4
_FIRST_CHAR_ID = 5
_CHARS = [chr(c) for c in range(32, 127)] + ["\n"]
_STOI = {ch: _FIRST_CHAR_ID + i for i, ch in enumerate(_CHARS)}
_ITOS = {i: ch for ch, i in _STOI.items()}
VOCAB_SIZE = _FIRST_CHAR_ID + len(_CHARS)


def encode_text(text: str) -> list[int]:
    return [_STOI.get(ch, UNK_ID) for ch in text]


def decode_ids(ids: Sequence[int]) -> str:
    return "".join(_ITOS.get(i, "") for i in ids)


# --------------------------------------------------------------------------
# Low-rank adapter


class LoraLinear(nn.Module):
    """Frozen linear layer plus a trainable low-rank increment.

    The increment starts at zero (B initialized to zeros), so a freshly
    adapted model behaves exactly like the base model.
    """

    def __init__(self, in_features: int, out_features: int, bias: bool = True):
        super().__init__()
        self.base = nn.Linear(in_features, out_features, bias=bias)
        for p in self.base.parameters():
            p.requires_grad_(False)
        self.lora_a: nn.Parameter | None = None
        self.lora_b: nn.Parameter | None = None
        self.scale = 0.0

    def init_adapter(self, rank: int, alpha: float, generator: torch.Generator) -> None:
        if rank < 1:
            raise BackendError(f"adapter rank must be >= 1, got {rank}")
        in_features = self.base.in_features
        out_features = self.base.out_features
        a = torch.empty(rank, in_features)
        a.normal_(mean=0.0, std=0.02, generator=generator)
        self.lora_a = nn.Parameter(a)
        self.lora_b = nn.Parameter(torch.zeros(out_features, rank))
        self.scale = alpha / rank

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = self.base(x)
        if self.lora_a is not None:
            out = out + (x @ self.lora_a.T @ self.lora_b.T) * self.scale
        return out


class _Block(nn.Module):
    def __init__(self, d_model: int, n_heads: int, d_ff: int):
        super().__init__()
        self.n_heads = n_heads
        self.ln1 = nn.LayerNorm(d_model)
        self.ln2 = nn.LayerNorm(d_model)
        self.q = LoraLinear(d_model, d_model)
        self.k = LoraLinear(d_model, d_model)
        self.v = LoraLinear(d_model, d_model)
        self.o = LoraLinear(d_model, d_model)
        self.fc1 = LoraLinear(d_model, d_ff)
        self.fc2 = LoraLinear(d_ff, d_model)
        for module in (self.ln1, self.ln2):
            for p in module.parameters():
                p.requires_grad_(False)

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        batch, length, d_model = x.shape
        head_dim = d_model // self.n_heads
        y = self.ln1(x)

        def split(t: torch.Tensor) -> torch.Tensor:
            return t.view(batch, length, self.n_heads, head_dim).transpose(1, 2)

        att = (split(self.q(y)) @ split(self.k(y)).transpose(-2, -1)) / math.sqrt(head_dim)
        att = att.masked_fill(mask[:length, :length] == 0, float("-inf")).softmax(-1)
        y = (att @ split(self.v(y))).transpose(1, 2).reshape(batch, length, d_model)
        x = x + self.o(y)
        return x + self.fc2(F.relu(self.fc1(self.ln2(x))))


@dataclass(frozen=True)
class TinyLMConfig:
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    d_ff: int = 128
    max_len: int = 256
    base_seed: int = 13


class TinyCausalLM(nn.Module):
    def __init__(self, config: TinyLMConfig):
        super().__init__()
        self.config = config
        torch.manual_seed(config.base_seed)
        self.tok_emb = nn.Embedding(VOCAB_SIZE, config.d_model)
        self.pos_emb = nn.Embedding(config.max_len, config.d_model)
        self.blocks = nn.ModuleList(
            [_Block(config.d_model, config.n_heads, config.d_ff) for _ in range(config.n_layers)]
        )
        self.ln_f = nn.LayerNorm(config.d_model)
        self.head = LoraLinear(config.d_model, VOCAB_SIZE, bias=False)
        for module in (self.tok_emb, self.pos_emb, self.ln_f):
            for p in module.parameters():
                p.requires_grad_(False)
        self.register_buffer(
            "causal_mask", torch.tril(torch.ones(config.max_len, config.max_len))
        )

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        length = ids.shape[1]
        if length > self.config.max_len:
            raise BackendError(f"sequence length {length} exceeds context {self.config.max_len}")
        x = self.tok_emb(ids) + self.pos_emb(torch.arange(length))
        for block in self.blocks:
            x = block(x, self.causal_mask)
        return self.head(self.ln_f(x))

    def adapter_modules(self) -> list[LoraLinear]:
        return [m for m in self.modules() if isinstance(m, LoraLinear)]


class TinyLMBackend:
    """Adapter-tunable character LM satisfying the generation backend contract.

    By default an over-long prompt is an error. With ``truncate_prompts=True``
    the backend instead keeps the prompt's tail (the end of a stage prompt
    carries the evidence and the answer cue) and logs a warning, which lets
    full pipeline prompts run through the small context window.
    """

    backend_id = "tiny-char-transformer-v1"

    def __init__(self, config: TinyLMConfig | None = None, truncate_prompts: bool = False):
        self.config = config or TinyLMConfig()
        self.model = TinyCausalLM(self.config)
        self.truncate_prompts = truncate_prompts
        self.rank: int | None = None
        self.alpha: float | None = None

    @property
    def max_context(self) -> int:
        return self.config.max_len

    def _fit_prompt(self, prompt: str, reserve: int) -> str:
        budget = self.config.max_len - reserve - 2  # BOS and SEP
        if len(prompt) <= budget:
            return prompt
        if not self.truncate_prompts:
            raise BackendError(
                f"prompt of {len(prompt)} chars exceeds context budget {budget}"
            )
        logger.warning("truncating prompt from %d to %d chars", len(prompt), budget)
        return prompt[-budget:]

    # -- adapters ----------------------------------------------------------

    def init_adapters(self, rank: int, seed: int = 13, alpha: float | None = None) -> None:
        """(Re)create the low-rank adapter set; base weights are untouched."""
        if rank < 1:
            raise BackendError(f"adapter rank must be >= 1, got {rank}")
        self.rank = rank
        self.alpha = alpha if alpha is not None else 2.0 * rank
        generator = torch.Generator().manual_seed(seed)
        for module in self.model.adapter_modules():
            module.init_adapter(rank, self.alpha, generator)

    def adapter_parameters(self) -> list[nn.Parameter]:
        params = [p for p in self.model.parameters() if p.requires_grad]
        if not params:
            raise BackendError("adapters not initialized; call init_adapters first")
        return params

    def base_parameter_count(self) -> int:
        return sum(p.numel() for p in self.model.parameters() if not p.requires_grad)

    def base_checksum(self) -> str:
        """SHA-256 over all frozen base parameters, in name order."""
        digest = hashlib.sha256()
        for name, param in sorted(self.model.named_parameters()):
            if not param.requires_grad:
                digest.update(name.encode("utf-8"))
                digest.update(param.detach().numpy().tobytes())
        return digest.hexdigest()

    def save_adapters(self, directory: str | Path, template_id: str = "") -> None:
        if self.rank is None:
            raise BackendError("no adapters to save")
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        state = {
            name: param for name, param in self.model.state_dict().items() if "lora_" in name
        }
        torch.save(state, directory / "adapters.pt")
        manifest = {
            "rank": self.rank,
            "alpha": self.alpha,
            "base_model_id": self.backend_id,
            "base_config": asdict(self.config),
            "template_id": template_id,
            # Which linear layers carry adapters (an implementation choice
            # worth auditing alongside the rank).
            "adapter_layers": sorted(
                name for name, module in self.model.named_modules()
                if isinstance(module, LoraLinear)
            ),
        }
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=2), "utf-8")

    def load_adapters(self, directory: str | Path) -> None:
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text("utf-8"))
        if manifest["base_model_id"] != self.backend_id:
            raise BackendError(
                f"adapter checkpoint is for {manifest['base_model_id']}, not {self.backend_id}"
            )
        self.init_adapters(int(manifest["rank"]), alpha=float(manifest["alpha"]))
        state = torch.load(directory / "adapters.pt", weights_only=True)
        missing, unexpected = self.model.load_state_dict(state, strict=False)
        if unexpected:
            raise BackendError(f"unexpected adapter tensors: {unexpected}")

    # -- training ----------------------------------------------------------

    def prepare_batch(
        self, examples: Sequence[tuple[str, str]]
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Pack (input, target) pairs into padded id/loss-mask tensors.

        Sequences look like BOS + input + SEP + target + EOS; the loss mask
        selects only the target (and EOS) positions.
        """
        sequences = []
        for prompt, target in examples:
            target_ids = encode_text(target)
            if len(target_ids) + 3 > self.config.max_len:
                raise BackendError(
                    f"target of {len(target_ids)} tokens cannot fit context "
                    f"{self.config.max_len}"
                )
            prompt = self._fit_prompt(prompt, reserve=len(target_ids) + 1)
            ids = [BOS_ID] + encode_text(prompt) + [SEP_ID] + target_ids + [EOS_ID]
            target_start = 2 + len(encode_text(prompt))
            sequences.append((ids, target_start))
        width = max(len(ids) for ids, _ in sequences)
        batch = torch.full((len(sequences), width), PAD_ID, dtype=torch.long)
        mask = torch.zeros((len(sequences), width), dtype=torch.bool)
        for row, (ids, target_start) in enumerate(sequences):
            batch[row, : len(ids)] = torch.tensor(ids)
            mask[row, target_start : len(ids)] = True
        return batch, mask

    def batch_log_likelihood(self, batch: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        """Mean token-level log likelihood of the masked target positions."""
        logits = self.model(batch[:, :-1])
        log_probs = F.log_softmax(logits, dim=-1)
        token_lp = log_probs.gather(-1, batch[:, 1:].unsqueeze(-1)).squeeze(-1)
        target_mask = mask[:, 1:]
        return (token_lp * target_mask).sum() / target_mask.sum()

    # -- inference ---------------------------------------------------------

    def generate(self, prompt: str, max_new_tokens: int | None = None) -> str:
        """Greedy decoding; deterministic for a given prompt and weights."""
        self.model.eval()
        reserve = min(max_new_tokens or 64, self.config.max_len // 4)
        prompt = self._fit_prompt(prompt, reserve=reserve)
        ids = [BOS_ID] + encode_text(prompt) + [SEP_ID]
        budget = max_new_tokens if max_new_tokens is not None else self.config.max_len
        generated: list[int] = []
        with torch.no_grad():
            for _ in range(budget):
                if len(ids) >= self.config.max_len:
                    break
                logits = self.model(torch.tensor([ids]))
                next_id = int(logits[0, -1].argmax())
                if next_id == EOS_ID:
                    break
                ids.append(next_id)
                generated.append(next_id)
        return decode_ids(generated)


# --------------------------------------------------------------------------
# Deterministic mock backend


def _stable_int(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")


_MOCK_TITLES = (
    "Source reliability",
    "Numerical accuracy",
    "Timeline consistency",
    "Expert consensus",
    "Context completeness",
    "Causal attribution",
)

_CLAIM_LINE = re.compile(r"^Claim:\s*$", re.MULTILINE)
_CHECKLIST_ITEM = re.compile(r"^- (?P<name>[A-Za-z]+):", re.MULTILINE)
_PRESENT_LINE = re.compile(r"PRESENT - (.+)")


class MockBackend:
    """Prompt-driven deterministic generator for offline pipeline runs.

    The response depends only on the prompt text: the claim is read from the
    prompt body, a flaw checklist (if any) decides which findings to emit,
    and a justification echoes any PRESENT findings it sees. Output always
    parses with the corresponding stage parser.
    """

    backend_id = "mock-v1"
    max_context = 200_000

    def __init__(self, present_every: int = 3, n_aspects: int | None = None):
        self.present_every = present_every
        self.n_aspects = n_aspects
        self.calls = 0

    def _claim(self, prompt: str) -> str:
        match = _CLAIM_LINE.search(prompt)
        if not match:
            return prompt[:80].strip()
        rest = prompt[match.end():].lstrip("\n")
        return rest.split("\n", 1)[0].strip()

    def generate(self, prompt: str, max_new_tokens: int | None = None) -> str:
        self.calls += 1
        claim = self._claim(prompt)
        checklist = _CHECKLIST_ITEM.findall(prompt)
        if checklist:
            lines = []
            for name in checklist:
                if _stable_int(f"flaw:{name}:{claim}") % self.present_every == 0:
                    lines.append(
                        f"FLAW {name}: PRESENT - Checked against the evidence, the "
                        f"claim shows {name.lower()} problems."
                    )
                else:
                    lines.append(f"FLAW {name}: ABSENT")
            return "\n".join(lines)
        if "ASPECT" in prompt:
            seed = _stable_int("aspects:" + claim)
            count = self.n_aspects or (1 + seed % 4)
            lines = []
            for i in range(count):
                title = _MOCK_TITLES[(seed + i) % len(_MOCK_TITLES)]
                lines.append(
                    f"ASPECT {i + 1}: {title}: How the {title.lower()} of the claim "
                    f"that {claim.rstrip('.')} holds up."
                )
            return "\n".join(lines)
        present = _PRESENT_LINE.findall(prompt)
        parts = [f"The claim that {claim.rstrip('.')} was weighed against the evidence."]
        if present:
            parts.append("Problems identified: " + " ".join(present))
        else:
            parts.append("No defect was identified; the available record backs the claim.")
        return " ".join(parts)
