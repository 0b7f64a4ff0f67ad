"""A short training run on the one-dimensional Schrodinger problem.

The full desk preset (`bsde-eigen train --config ls_d1`) runs 6000 steps.
This one stops at 1500 so it finishes in a few minutes. The eigenfunction
error falls steadily while lambda is still drifting toward the reference;
the full 6000 steps bring it to within about 3e-4.
"""
from bsde_eigen import problems, trainer
from bsde_eigen.normalization import PiecewiseConstant

problem = problems.linear_schrodinger(1, c=[0.2])
config = trainer.TrainConfig(
    T=0.2, N=80, K=512, hidden=(40, 40), iterations=1500,
    lr=PiecewiseConstant((5e-4, 1e-4), (1000,)),
    gamma=PiecewiseConstant((0.1, 0.2), (1000,)),
    record_every=100, report_last=500,
)

print("reference lambda", problem.eigenpairs[0].lam)
result = trainer.train(problem, config)
for rec in result.history[::3]:
    print(f"step {rec.step:5d}  loss {rec.loss:10.4f}  lambda {rec.lam: .5f}  Z {rec.Z:.3f}  err_psi {rec.err_psi_l2:.3f}")
print("averaged over the last 500 steps:", result.summary(config.report_last))
