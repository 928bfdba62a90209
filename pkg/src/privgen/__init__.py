"""privgen: token-level differentially private paraphrasing.

Blends per-privacy-group next-token distributions with a public distribution
under a symmetric Renyi-divergence budget, accounts the privacy spent, ships
the standard DPI baselines behind the same interface, and evaluates leakage
with a token-recovery attack harness.
"""

from .accounting import (
    AccountantLedger,
    PrivacyReport,
    build_report,
    data_dependent_epsilon,
    ledger_from_transcript,
    rdp_to_dp,
    theoretical_epsilon,
)
from .attacks import (
    AttackInstance,
    AttackResult,
    CandidateSet,
    loss_score,
    min_k_score,
    perplexity,
    run_token_recovery,
    sequence_logprobs,
)
from .backend import DistributionProvider, MockModel
from .baselines import (
    DpDecodingConfig,
    DpPromptConfig,
    baseline_generate,
    dp_decoding_epsilon,
    dp_decoding_step,
    dp_prompt_epsilon,
    dp_prompt_step,
)
from .dist import (
    Dist,
    RenyiOrder,
    mix,
    renyi_divergence,
    renyi_divergence_general,
    softmax_with_temperature,
    symmetric_renyi,
)
from .document import (
    AnnotatedDocument,
    ContextView,
    PrivacyGroup,
    PromptBundle,
    Span,
    assemble_prompt,
    load_document,
    partition,
    render_view,
    save_document,
)
from .errors import (
    BackendError,
    DegenerateDocumentError,
    DivergenceUndefinedError,
    GenerationAbortedError,
    InvalidInputError,
    MalformedDocumentError,
    PrivgenError,
)
from .fusion import FusionConfig, FusionTranscript, StepRecord, fuse_step, generate, read_transcript, write_transcript
from .mollify import MollificationOutcome, find_max_lambda
from .wire import ProtocolServer, RemoteBackend, RemoteBackendConfig, serve_provider

__version__ = "0.1.0"
