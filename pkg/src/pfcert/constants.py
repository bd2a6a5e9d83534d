NETWORK_SCHEMA_VERSION = "pfcert.network/1"
POLYSYSTEM_SCHEMA_VERSION = "pfcert.polysystem/1"
PROBLEM_SCHEMA_VERSION = "pfcert.problem/1"
CERTIFICATE_SCHEMA_VERSION = "pfcert.certificate/1"
STATUS_SCHEMA_VERSION = "pfcert.status/1"
REPORT_SCHEMA_VERSION = "pfcert.report/1"
VALIDATION_SCHEMA_VERSION = "pfcert.validation/1"

RELAXATION_DEGREE = 4

NEWTON_TOL = 1e-8
NEWTON_MAX_ITER = 50

EPS_RES = 1e-7
EPS_PSD = 1e-8
FEASIBILITY_TOL = 1e-7
IPM_MAX_ITERS = 100
SCS_MAX_ITERS = 100_000
IPM_MAX_VARS = 2_000

BISECTION_TOL = 1e-3
STRICTNESS_MARGIN = 1e-6
COUNTEREXAMPLE_TOL = 1e-6
SINGULARITY_THRESHOLD = 1e-8

EXIT_OK = 0
EXIT_NOT_CERTIFIED = 2
EXIT_UNKNOWN = 3
EXIT_INPUT_ERROR = 4
