"""Walk through the verification suites that back the training method.

Each suite checks one mathematical claim against an independent oracle:

  lemmas     Monte-Carlo unbiasedness of the two-point and single-point
             zeroth-order estimators, and convergence of the momentum
             feedback matrix to the transposed Jacobian of a linear map.
  prop1      the closed-form variance of the single-point estimator
             against the measured variance on a linear probe.
  prop2      positivity of the inner product between the true error
             projection and the momentum-feedback projection.
  fd         the online surrogate-gradient update against central finite
             differences of a temporally detached relaxed network.
  oracle_eq  brute-force re-implementations: a scalar-loop LIF rollout,
             the trace recurrence in closed form, 1x1-conv/FC duality,
             and exact-Jacobian feedback reproducing backprop.
"""

from opzo import verify

for suite in verify.SUITES:
    print(f"== {suite}")
    for r in verify.run_suite(suite):
        status = "ok " if r.passed else "FAIL"
        print(f"  [{status}] {r.name}: {r.detail}")
