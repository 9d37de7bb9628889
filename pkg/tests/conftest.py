from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from graphwright import (
    TraceStep,
    load_builtin,
    registry_to_dict,
    render_trace,
    replay,
)

# the full text-to-image program over the bundled mini-sd schema: both
# conditioning branches wired from distinct encoder instances
PROGRAM_7 = [
    'checkpointloader_0_model, checkpointloader_0_clip, checkpointloader_0_vae = CheckpointLoader()',
    'emptylatent_0_latent = EmptyLatent()',
    'textencode_0_conditioning = TextEncode(clip=checkpointloader_0_clip, text="a cat")',
    'textencode_1_conditioning = TextEncode(clip=checkpointloader_0_clip, text="blurry")',
    'sampler_0_latent = Sampler(model=checkpointloader_0_model, positive=textencode_0_conditioning, '
    'negative=textencode_1_conditioning, latent=emptylatent_0_latent)',
    'decode_0_image = Decode(latent=sampler_0_latent, vae=checkpointloader_0_vae)',
    'SaveImage(images=decode_0_image)',
]

# six lines, one node per touched type, negative conditioning left off
PROGRAM_6 = [
    'checkpointloader_0_model, checkpointloader_0_clip, checkpointloader_0_vae = CheckpointLoader()',
    'emptylatent_0_latent = EmptyLatent()',
    'textencode_0_conditioning = TextEncode(clip=checkpointloader_0_clip, text="a cat")',
    'sampler_0_latent = Sampler(model=checkpointloader_0_model, positive=textencode_0_conditioning, '
    'latent=emptylatent_0_latent)',
    'decode_0_image = Decode(latent=sampler_0_latent, vae=checkpointloader_0_vae)',
    'SaveImage(images=decode_0_image)',
]

# smallest executable mini-sd graph: decode an empty latent and save it
PROGRAM_MIN = [
    'checkpointloader_0_model, checkpointloader_0_clip, checkpointloader_0_vae = CheckpointLoader()',
    'emptylatent_0_latent = EmptyLatent()',
    'decode_0_image = Decode(latent=emptylatent_0_latent, vae=checkpointloader_0_vae)',
    'SaveImage(images=decode_0_image)',
]


@pytest.fixture(scope="session")
def mini_sd():
    return load_builtin("mini-sd")


@pytest.fixture(scope="session")
def mini_edit():
    return load_builtin("mini-edit")


@pytest.fixture(scope="session")
def mini_sd_dict(mini_sd):
    return registry_to_dict(mini_sd)


@pytest.fixture(scope="session")
def complete_graph(mini_sd):
    episode, outcomes = replay(PROGRAM_7, mini_sd)
    assert all(o.accepted for o in outcomes)
    return episode.graph


@pytest.fixture(scope="session")
def minimal_graph(mini_sd):
    episode, outcomes = replay(PROGRAM_MIN, mini_sd)
    assert all(o.accepted for o in outcomes)
    return episode.graph


def make_trace(lines, preamble="planning the pipeline") -> str:
    """A well-formed trace whose node steps mirror the workflow lines."""
    return render_trace([TraceStep(l) for l in lines], list(lines), preamble=preamble)
