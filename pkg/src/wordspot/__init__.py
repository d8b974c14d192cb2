"""Interactive query-by-example word spotting for manuscript transcription."""

from .boxes import BoundingBox, cluster_lines, iou, union_box
from .config import EngineConfig
from .corpus import Page, Project, load_corpus, load_project, save_project
from .errors import (DimensionMismatchError, EmptyCorpusError, EmptyTemplateError,
                     IllegalTransitionError, InvalidParamsError, IoFailureError,
                     OutOfPageError, PageTooSmallError, ParseError, SchemaError,
                     SchemaMismatchError, SearchCancelledError, UnknownMatchError,
                     UnknownQueryError, UnreadableImageError, WordspotError)
from .evaluate import EvalResult, evaluate, load_ground_truth, load_predictions
from .feedback import (FeedbackEvent, Match, ModelDelta, QueryWord,
                       adaptive_threshold, apply_feedback, build_query_model,
                       integrate_candidates, replay, rescore_pending,
                       run_initial_search)
from .imgproc import (BandpassCleaner, BandpassParams, ComponentStats,
                      OtsuBinarizer, bandpass_clean, binarize_otsu,
                      connected_components, difference_of_gaussians,
                      gaussian_blur, remove_speckle)
from .search import SearchHandle, search_corpus
from .snapbox import SnapResult, WordTemplate, extract_template, snap_box
from .spotting import (Candidate, QueryModel, WordSpotter, combined_score_map,
                       masked_ncc, ncc_score_map, nms, scale_template, score_page)

__version__ = "0.1.0"
