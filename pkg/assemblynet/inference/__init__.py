from .voting import VoteAccumulator, vote, vote_labels, finalize_vote, aggregate_tile_votes
from .segment import (
    CascadeResult,
    assemble_channels,
    mc_dropout_infer,
    accumulate_assembly_votes,
    segment_assembly,
    cascade_segment,
)
