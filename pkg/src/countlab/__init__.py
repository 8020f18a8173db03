"""Desk-scale laboratory for teaching a contrastive dual encoder to count.

The pipeline: generate synthetic scenes with known object counts, curate
(scene, caption) pairs whose spelled numbers survive detector verification,
train a tiny dual encoder with a counterfactual counting loss alongside the
standard contrastive objective, and evaluate with nine-way zero-shot count
classification and count-based retrieval.
"""

from .captions import (
    CaptionRecord,
    CounterfactualCaption,
    NumberWord,
    enumerate_caption_variants,
    extract_spelled_numbers,
    is_counting_candidate,
    make_counterfactual,
)
from .config import RunConfig, load_run_config
from .curation import (
    AcceptedRecord,
    Benchmark,
    CountingSet,
    CurationDecision,
    balance,
    build_benchmark,
    dataset_stats,
    filter_record,
)
from .encoder import (
    EncoderDims,
    Params,
    Vocabulary,
    encode_image,
    encode_text,
    grad_check,
    init_params,
    load_params,
    save_params,
    similarity,
)
from .errors import CountLabError, DataError, DivergenceError, UsageError
from .evaluation import (
    EvalReport,
    RetrievalResult,
    aggregate_zero_shot,
    emit_report,
    retrieval_count_precision,
    retrieve_topk,
    zero_shot_count,
)
from .scenes import (
    DetectionResult,
    DetectorNoise,
    Raster,
    SceneSpec,
    caption_for_scene,
    detect,
    render,
    sample_scene,
    write_pgm,
)
from .training import (
    CountingTriplet,
    GeneralExample,
    LossReport,
    TrainConfig,
    combined_loss,
    compose_batch,
    effective_lambda,
    l_clip,
    l_count,
    train,
)

__version__ = "0.1.0"
