INTERCEPT_NAME = "(Intercept)"
COV_PREFIX = "cov_"
RESIDUAL_NAME = "residual"

ML = "ML"
REML = "REML"
METHODS = (ML, REML)

OBSERVED = "observed"
EXPECTED = "expected"
INFORMATION_KINDS = (OBSERVED, EXPECTED)

CASEWISE_LEVEL = 1
CLUSTERWISE_LEVEL = 2
