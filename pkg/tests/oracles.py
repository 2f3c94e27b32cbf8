"""Reference values computed independently with mpmath (30 digits) and frozen.

    s(b)          = zeta(b) - 1   (EXX1_S_AT_3 is s(3))
    loop_sum(b)   = s(b) + exp(-2b) / (1 - s(b))      (exx1 at its base vertex)
    critical root = mp.findroot(loop_sum - 1, 1.83)
"""

S_AT_2 = 0.644934066848226436472415166646
EXX1_S_AT_3 = 0.202056903159594285399738161512
EXX1_CRITICAL_BETA = 1.82960953495178660589468827094
EXX1_LOOP_SUM_AT_3 = 0.205163330405448542673291032852
EXX1_GREEN_AT_3 = 1.25812011228684625991734766303
TWO_LOOPS_GREEN_AT_2 = 1.37112250518172556537048347681
