"""Fixed numerical tolerances shared by the library, the CLI and the test-suite.

=========================  ========  ==============================================
name                       value     used for
=========================  ========  ==============================================
EXACT_TOL                  1e-12     exact algebra (antisymmetry, Jacobi, inverses)
COMPOSED_TOL               1e-10     composed checks (BCH associativity, Ad hom.)
EXAMPLE_LAW_TOL            1e-13     explicit 4-dim group law vs BCH route
FD_STEP                    1e-5      central differences for gradients / oracle
MIXED_FD_STEP              1e-4      mixed second derivative of coefficients
BLOWUP_NORM                1e9       coordinate norm that aborts a path
EXPLOSION_PROXY_NORM       1e6       no-explosion proxy threshold
MEDIAN_REL_ERROR           1e-3      derivative battery, median
P95_REL_ERROR              1e-2      derivative battery, 95th percentile
IBP_SIGMAS                 3.0       integration-by-parts pass band
BLOWUP_FRACTION            0.01      tolerated blowup fraction before exit 4
=========================  ========  ==============================================
"""

EXACT_TOL = 1e-12
COMPOSED_TOL = 1e-10
EXAMPLE_LAW_TOL = 1e-13
FD_STEP = 1e-5
MIXED_FD_STEP = 1e-4
BLOWUP_NORM = 1e9
EXPLOSION_PROXY_NORM = 1e6
MEDIAN_REL_ERROR = 1e-3
P95_REL_ERROR = 1e-2
IBP_SIGMAS = 3.0
BLOWUP_FRACTION = 0.01
