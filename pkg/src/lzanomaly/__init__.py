"""Universal anomaly detection with LZ78 probability assignment."""

from .detect import (
    ClassifierConfig,
    Decision,
    RocReport,
    Verdict,
    classify,
    majority_classify,
    majority_score,
    roc_curve,
    subsequence_scores,
    threshold_for_fpr,
)
from .model import (
    LZModel,
    TreeNode,
    conditional_probability,
    decode,
    deserialize,
    encode,
    new_model,
    phrase_probability,
    sample,
    sequence_log_probability,
    sequence_probability,
    serialize,
    train,
)
from .preprocess import (
    FeatureKind,
    Flow,
    NetworkEvent,
    Quantizer,
    build_flows,
    extract_feature,
    fit_uniform_quantizer,
    parse_records,
    quantize,
)
from .profile import (
    EmpiricalType,
    TupleDistribution,
    WindowHistogram,
    empirical_type,
    kl_divergence,
    mse_distance,
    tuple_distribution,
    type_class_probability,
    window_histogram,
)

__version__ = "0.1.0"
