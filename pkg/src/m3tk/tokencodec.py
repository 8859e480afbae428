"""Multi-modal vocabulary, token-stream documents, and the decoding harness.

The lexicon concatenates text words, language-modality tags, one motion
sub-vocabulary per modality (body, left hand, right hand, face), and the
special tokens, with deterministic contiguous ids. Decoding runs a greedy
argmax per modality head over a pluggable predictor, fusing the chosen
step's embeddings by equal-weight average, and stops after the first step
in which any modality emits EOS.

Also hosts the recognition preprocessing ops: signing-window trimming and
cross-modal feature interleaving.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .errors import ContractError, DataError, FormatError, UsageError
from .quantizers import LevelSpec, MODALITIES

TAG_SUFFIX = {"body": "B", "left_hand": "LH", "right_hand": "RH", "face": "F"}
WORD_PREFIX = {"body": "b", "left_hand": "lh", "right_hand": "rh", "face": "f"}
SPECIALS = ("<EOS>", "<PAD>", "<BOS>")


@dataclass(frozen=True)
class Vocabulary:
    """Bijective word <-> id map over the full multi-modal lexicon."""

    words: tuple[str, ...]
    text_range: range
    tag_range: range
    modality_ranges: dict[str, range]
    eos_id: int
    pad_id: int
    bos_id: int

    def __post_init__(self):
        object.__setattr__(self, "_ids", {w: i for i, w in enumerate(self.words)})

    def __len__(self) -> int:
        return len(self.words)

    def id_of(self, word: str) -> int:
        try:
            return self._ids[word]
        except KeyError:
            raise DataError(f"unknown token word '{word}'") from None

    def word_of(self, token_id: int) -> str:
        if not (0 <= token_id < len(self.words)):
            raise DataError(f"token id {token_id} outside vocabulary")
        return self.words[token_id]

    def modality_of(self, token_id: int) -> str | None:
        for modality, span in self.modality_ranges.items():
            if token_id in span:
                return modality
        return None

    def motion_id(self, modality: str, code: int) -> int:
        span = self.modality_ranges[modality]
        if not (0 <= code < len(span)):
            raise DataError(f"{modality} code {code} outside [0, {len(span)})")
        return span.start + code

    def motion_code(self, modality: str, token_id: int) -> int:
        span = self.modality_ranges[modality]
        if token_id not in span:
            raise DataError(f"id {token_id} is not a {modality} token")
        return token_id - span.start

    def tag_id(self, language: str, modality: str) -> int:
        return self.id_of(f"<{language}_{TAG_SUFFIX[modality]}>")


def build_vocabulary(text_words: Sequence[str], languages: Sequence[str],
                     level_specs: dict) -> Vocabulary:
    """Deterministic id assignment: text, tags, then body / left hand /
    right hand / face motion words, then EOS / PAD / BOS.

    ``level_specs`` maps each modality to a LevelSpec or a plain codebook
    size. Motion words are 1-based: <b_1> ... <b_C>.
    """
    words: list[str] = []
    seen: set[str] = set()
    for word in text_words:
        if word in seen:
            raise DataError(f"duplicate text word '{word}'")
        seen.add(word)
        words.append(word)
    text_range = range(0, len(words))

    for language in languages:
        for modality in MODALITIES:
            tag = f"<{language}_{TAG_SUFFIX[modality]}>"
            if tag in seen:
                raise DataError(f"duplicate tag '{tag}'")
            seen.add(tag)
            words.append(tag)
    tag_range = range(text_range.stop, len(words))

    modality_ranges: dict[str, range] = {}
    for modality in MODALITIES:
        if modality not in level_specs:
            raise UsageError(f"level_specs is missing modality '{modality}'")
        spec = level_specs[modality]
        size = spec.codebook_size if isinstance(spec, LevelSpec) else int(spec)
        if size < 1:
            raise UsageError(f"{modality} codebook size must be positive")
        start = len(words)
        prefix = WORD_PREFIX[modality]
        for code in range(size):
            word = f"<{prefix}_{code + 1}>"
            if word in seen:
                raise DataError(f"duplicate word '{word}'")
            seen.add(word)
            words.append(word)
        modality_ranges[modality] = range(start, len(words))

    special_ids = {}
    for token in SPECIALS:
        if token in seen:
            raise DataError(f"duplicate special token '{token}'")
        seen.add(token)
        special_ids[token] = len(words)
        words.append(token)

    return Vocabulary(
        words=tuple(words),
        text_range=text_range,
        tag_range=tag_range,
        modality_ranges=modality_ranges,
        eos_id=special_ids["<EOS>"],
        pad_id=special_ids["<PAD>"],
        bos_id=special_ids["<BOS>"],
    )


# ---------------------------------------------------------------------------
# multi-modal steps and documents


@dataclass(frozen=True)
class MultiModalStep:
    """One decoding time step: one token id per modality."""

    body: int
    left_hand: int
    right_hand: int
    face: int

    def ids(self) -> tuple[int, int, int, int]:
        return (self.body, self.left_hand, self.right_hand, self.face)

    def id_for(self, modality: str) -> int:
        return getattr(self, modality)

    def validate(self, vocab: Vocabulary) -> None:
        for modality in MODALITIES:
            token_id = self.id_for(modality)
            if token_id == vocab.eos_id:
                continue
            if token_id not in vocab.modality_ranges[modality]:
                raise DataError(
                    f"id {token_id} is neither a {modality} token nor EOS")

    def eos_modalities(self, vocab: Vocabulary) -> list[str]:
        return [m for m in MODALITIES if self.id_for(m) == vocab.eos_id]


DOC_HEADER = "m3t-tokens v1"


def serialize_streams(steps: Sequence[MultiModalStep], vocab: Vocabulary) -> str:
    """Line-oriented document: header, one 4-word line per step, and an
    <EOS:modality> marker when the final step carries an EOS."""
    lines = [f"{DOC_HEADER} steps={len(steps)}"]
    for step in steps:
        step.validate(vocab)
        lines.append(" ".join(vocab.word_of(i) for i in step.ids()))
    if steps:
        eos = steps[-1].eos_modalities(vocab)
        if eos:
            lines.append(f"<EOS:{eos[0]}>")
    return "\n".join(lines) + "\n"


def parse_streams(text: str, vocab: Vocabulary) -> list[MultiModalStep]:
    lines = text.splitlines()
    if not lines:
        raise FormatError("empty token document")
    head = lines[0].split()
    if head[:2] != DOC_HEADER.split():
        raise FormatError("line 1: not a m3t-tokens v1 document")
    meta = dict(part.split("=", 1) for part in head[2:] if "=" in part)
    try:
        n_steps = int(meta["steps"])
    except (KeyError, ValueError) as exc:
        raise FormatError("line 1: header must carry steps=<N>") from exc

    steps: list[MultiModalStep] = []
    lineno = 1
    for raw in lines[1:]:
        lineno += 1
        line = raw.strip()
        if not line:
            continue
        if line.startswith("<EOS:") and line.endswith(">"):
            modality = line[5:-1]
            if modality not in MODALITIES:
                raise FormatError(f"line {lineno}: unknown EOS modality '{modality}'")
            if not steps or vocab.eos_id not in steps[-1].ids():
                raise FormatError(
                    f"line {lineno}: EOS marker without a terminal EOS step")
            continue
        parts = line.split()
        if len(parts) != 4:
            raise FormatError(
                f"line {lineno}: expected 4 token words, got {len(parts)}")
        ids = []
        for modality, word in zip(MODALITIES, parts):
            try:
                token_id = vocab.id_of(word)
            except DataError as exc:
                raise FormatError(f"line {lineno}: {exc}") from None
            if token_id != vocab.eos_id and token_id not in vocab.modality_ranges[modality]:
                raise FormatError(
                    f"line {lineno}: '{word}' is not a {modality} token")
            ids.append(token_id)
        steps.append(MultiModalStep(*ids))
    if len(steps) != n_steps:
        raise FormatError(
            f"header declares {n_steps} steps, document carries {len(steps)}")
    return steps


# ---------------------------------------------------------------------------
# embedding fusion and greedy decoding


def fuse_embeddings(step_embeddings) -> np.ndarray:
    """Equal-weight average of the four modality embeddings."""
    vectors = [np.asarray(v, np.float64) for v in step_embeddings]
    if len(vectors) != 4:
        raise UsageError(f"fusion takes 4 embeddings, got {len(vectors)}")
    dims = {v.shape for v in vectors}
    if len(dims) != 1 or vectors[0].ndim != 1:
        raise UsageError(f"embeddings must share one 1D shape, got {dims}")
    return (vectors[0] + vectors[1] + vectors[2] + vectors[3]) / 4.0


class Predictor(Protocol):
    """Seam for the (out-of-scope) transformer backbone: given the fused
    embedding history and the prompt tags, produce one logit vector per
    modality of length C_m + 1 (the trailing slot is EOS)."""

    def next_logits(self, history: list[np.ndarray],
                    prompt_tags: dict[str, int]) -> dict[str, np.ndarray]: ...


def embedding_table(vocab: Vocabulary, dim: int = 16, seed: int = 0) -> np.ndarray:
    """Deterministic seeded token embeddings for the decode harness."""
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, 1.0, size=(len(vocab), dim))


def greedy_decode(predictor: Predictor, vocab: Vocabulary,
                  prompt_tags: dict[str, int], max_steps: int,
                  embed_dim: int = 16, seed: int = 0) -> list[MultiModalStep]:
    """Greedy multi-head decoding with any-modality EOS termination.

    Each step takes the per-modality argmax (ties break to the lowest id),
    extends the history with the fused embedding of the chosen step, and
    stops after the first step whose argmax in any modality is EOS (that
    step is included) or at ``max_steps``. All four streams always have
    equal length.
    """
    if max_steps < 1:
        raise UsageError(f"max_steps must be >= 1, got {max_steps}")
    for modality in MODALITIES:
        if modality not in prompt_tags:
            raise UsageError(f"missing prompt tag for modality '{modality}'")

    table = embedding_table(vocab, dim=embed_dim, seed=seed)
    history = [table[prompt_tags[m]] for m in MODALITIES]
    steps: list[MultiModalStep] = []
    for _ in range(max_steps):
        logits = predictor.next_logits(list(history), dict(prompt_tags))
        if not isinstance(logits, dict) or set(logits) != set(MODALITIES):
            raise ContractError("predictor must return one logit vector per modality")
        chosen: dict[str, int] = {}
        saw_eos = False
        for modality in MODALITIES:
            vec = np.asarray(logits[modality], np.float64)
            expected = len(vocab.modality_ranges[modality]) + 1
            if vec.shape != (expected,):
                raise ContractError(
                    f"{modality} logits must have shape ({expected},), got {vec.shape}")
            best = int(np.argmax(vec))
            if best == expected - 1:
                chosen[modality] = vocab.eos_id
                saw_eos = True
            else:
                chosen[modality] = vocab.motion_id(modality, best)
        step = MultiModalStep(**chosen)
        steps.append(step)
        history.append(fuse_embeddings([table[step.id_for(m)] for m in MODALITIES]))
        if saw_eos:
            break
    return steps


def strip_eos(steps: Sequence[MultiModalStep],
              vocab: Vocabulary) -> list[MultiModalStep]:
    """Drop the terminal EOS-bearing step before detokenization."""
    steps = list(steps)
    if steps and steps[-1].eos_modalities(vocab):
        steps = steps[:-1]
    return steps


def steps_to_streams(steps: Sequence[MultiModalStep], vocab: Vocabulary,
                     language: str = "UNK"):
    """Split step ids back into per-modality TokenStream index lists."""
    from .quantizers import TokenStream

    out = {}
    for modality in MODALITIES:
        indices = []
        includes_eos = False
        for step in steps:
            token_id = step.id_for(modality)
            if token_id == vocab.eos_id:
                includes_eos = True
                break
            indices.append(vocab.motion_code(modality, token_id))
        out[modality] = TokenStream(modality=modality, language=language,
                                    indices=indices, includes_eos=includes_eos)
    return out


# ---------------------------------------------------------------------------
# recognition preprocessing


@dataclass(frozen=True)
class TrimWindow:
    """Half-open frame range [start, end); empty when no frame is active."""

    start: int
    end: int

    @property
    def is_empty(self) -> bool:
        return self.start >= self.end


def trim_signing_window(wrist_positions: np.ndarray,
                        rest_wrist_positions: np.ndarray,
                        h_thresh: float, d_thresh: float,
                        up_axis: int = 1) -> TrimWindow:
    """Largest contiguous run of frames with an active hand.

    A frame is active when any wrist sits higher than its rest height plus
    ``h_thresh`` or farther than ``d_thresh`` from its rest position.
    ``wrist_positions`` is (T, n_wrists, 3), rest is (n_wrists, 3).
    """
    if h_thresh <= 0 or d_thresh <= 0:
        raise UsageError("thresholds must be positive")
    pos = np.asarray(wrist_positions, np.float64)
    rest = np.asarray(rest_wrist_positions, np.float64)
    if pos.ndim != 3 or pos.shape[2] != 3 or rest.shape != pos.shape[1:]:
        raise UsageError(
            f"wrists must be (T, W, 3) with rest (W, 3), got {pos.shape}, {rest.shape}")

    height = pos[:, :, up_axis] - rest[None, :, up_axis]
    displacement = np.linalg.norm(pos - rest[None], axis=2)
    active = np.any((height > h_thresh) | (displacement > d_thresh), axis=1)

    best = TrimWindow(0, 0)
    start = None
    for t, flag in enumerate(active):
        if flag and start is None:
            start = t
        elif not flag and start is not None:
            if t - start > best.end - best.start:
                best = TrimWindow(start, t)
            start = None
    if start is not None and len(active) - start > best.end - best.start:
        best = TrimWindow(start, len(active))
    return best


def interleave_features(body, left_hand, right_hand, face) -> list:
    """Merge four equal-length feature sequences, per-step order
    body, left_hand, right_hand, face; output length is 4*T."""
    seqs = [list(body), list(left_hand), list(right_hand), list(face)]
    lengths = {len(s) for s in seqs}
    if len(lengths) != 1:
        raise UsageError(f"sequences must share one length, got {sorted(lengths)}")
    out = []
    for items in zip(*seqs):
        out.extend(items)
    return out


def deinterleave_features(sequence: Sequence) -> tuple[list, list, list, list]:
    items = list(sequence)
    if len(items) % 4:
        raise UsageError(f"interleaved length must be a multiple of 4, got {len(items)}")
    return (items[0::4], items[1::4], items[2::4], items[3::4])


# ---------------------------------------------------------------------------
# single-modality token documents (CLI surface)


def serialize_token_stream(stream, codebook_size: int) -> str:
    """One-word-per-line variant of the token document for a single
    modality; the header carries the modality, codebook size, and language
    so the file is self-describing."""
    if stream.indices and max(stream.indices) >= codebook_size:
        raise DataError("token index outside declared codebook")
    lines = [f"{DOC_HEADER} steps={len(stream.indices)} "
             f"modality={stream.modality} codebook={codebook_size} "
             f"language={stream.language}"]
    prefix = WORD_PREFIX[stream.modality]
    for code in stream.indices:
        lines.append(f"<{prefix}_{code + 1}>")
    if stream.includes_eos:
        lines.append("<EOS>")
    return "\n".join(lines) + "\n"


def parse_token_stream(text: str):
    from .quantizers import TokenStream

    lines = text.splitlines()
    if not lines:
        raise FormatError("empty token document")
    head = lines[0].split()
    if head[:2] != DOC_HEADER.split():
        raise FormatError("line 1: not a m3t-tokens v1 document")
    meta = dict(part.split("=", 1) for part in head[2:] if "=" in part)
    try:
        n_steps = int(meta["steps"])
        modality = meta["modality"]
        codebook = int(meta["codebook"])
    except (KeyError, ValueError) as exc:
        raise FormatError(
            "line 1: single-modality header needs steps=, modality=, codebook=") from exc
    if modality not in MODALITIES:
        raise FormatError(f"line 1: unknown modality '{modality}'")
    language = meta.get("language", "UNK")
    prefix = WORD_PREFIX[modality]

    indices: list[int] = []
    includes_eos = False
    for lineno, raw in enumerate(lines[1:], start=2):
        word = raw.strip()
        if not word:
            continue
        if word == "<EOS>":
            includes_eos = True
            continue
        if not (word.startswith(f"<{prefix}_") and word.endswith(">")):
            raise FormatError(f"line {lineno}: unknown token word '{word}'")
        try:
            code = int(word[len(prefix) + 2:-1]) - 1
        except ValueError:
            raise FormatError(f"line {lineno}: unknown token word '{word}'") from None
        if not (0 <= code < codebook):
            raise FormatError(
                f"line {lineno}: token {word} outside codebook of {codebook}")
        indices.append(code)
    if len(indices) != n_steps:
        raise FormatError(
            f"header declares {n_steps} steps, document carries {len(indices)}")
    return TokenStream(modality=modality, language=language, indices=indices,
                       includes_eos=includes_eos), codebook
