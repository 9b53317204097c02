"""Simulation and tail analysis of maximal daters in monotone-separable
queueing networks: four concrete models, a pathwise property harness,
saturation-rule stability analysis, sandwich bounds through single-server
queues, closed-form tail asymptotes, and Monte Carlo tail estimation."""

from .distributions import (
    ARRIVAL_ROLE,
    ROUTE_ROLE,
    SERVICE_ROLE,
    Deterministic,
    DeterministicArrivals,
    Exponential,
    Lognormal,
    Pareto,
    RenewalArrivals,
    RngStream,
    Weibull,
    arrivals_from_config,
    dist_from_config,
    is_subexponential_family,
    normal_ppf,
    normal_tail,
)
from .netcore import (
    Kernel,
    PerturbationPlan,
    Window,
    verify_axioms,
    verify_dater_lemmas,
)
from .models import (
    JacksonModel,
    JacksonRoute,
    MultiServerModel,
    SingleServerModel,
    TandemModel,
    jackson_simulate,
    jackson_single_customer,
    kw_step,
    lindley_path,
    model_from_config,
    tandem_dater_supform,
    tandem_path,
)
from .bounds import (
    Gamma0Estimate,
    estimate_gamma0,
    lower_bound_path,
    sandwich_check,
    select_L,
    stability_verdict,
    upper_bound_path,
)
from .asymptotics import (
    integrated_tail_of_Y,
    multiserver_exact,
    network_lower_const,
    network_upper_const,
    tandem_exact,
    tandem_exact_const,
    tandem_w2,
    veraverbeke,
)
from .estimation import (
    HorizonPolicy,
    TailEstimate,
    batch_stationary_daters,
    big_jump_diagnostic,
    check_assumption_H,
    collect_daters,
    comonotone_vector_sampler,
    estimate_tail,
    hill_tail_index,
    independent_vector_sampler,
    interarrival_insensitivity_check,
    jackson_work_sampler,
    moment_order_check,
    stationary_dater_sample,
)

__version__ = "0.1.0"
