"""Score-based reconstructions: DDIP and the DPS baseline."""

from diffrecon.recon.ddip import (
    FineTuner,
    closed_form_update,
    ddip_reconstruct,
    em_surrogate,
    fine_tune_step,
    hqs_image_update,
    hqs_iterates,
    hqs_objective,
    init_x_Tprime,
)
from diffrecon.recon.dps import (
    LikelihoodGrad,
    ddim_reference,
    dps_likelihood_grad,
    dps_reconstruct,
    likelihood_direction,
)
from diffrecon.recon.models import (
    DdipConfig,
    DdipRunState,
    DpsConfig,
    ReconDiagnostics,
    ReconProblem,
    ReconResult,
    StepRecord,
)

__all__ = [
    "DdipConfig",
    "DdipRunState",
    "DpsConfig",
    "FineTuner",
    "LikelihoodGrad",
    "ReconDiagnostics",
    "ReconProblem",
    "ReconResult",
    "StepRecord",
    "closed_form_update",
    "ddim_reference",
    "ddip_reconstruct",
    "dps_likelihood_grad",
    "dps_reconstruct",
    "em_surrogate",
    "fine_tune_step",
    "hqs_image_update",
    "hqs_iterates",
    "hqs_objective",
    "init_x_Tprime",
    "likelihood_direction",
]
