"""Recover an analytically known posterior end to end.

The normal-normal toy has a closed-form posterior, so this is the fastest
way to see the whole training loop work: five rounds of 500 simulations,
then a comparison of the learned posterior moments against the truth.
"""

import numpy as np

from lfbi import TrainConfig, get_model, sample_posterior, train
from lfbi.simulators import gauss_toy_posterior


def main():
    model = get_model("gauss_toy")
    mu, sd = gauss_toy_posterior(model)
    print(f"analytic posterior: mean {mu:.4f}  std {sd:.4f}")

    config = TrainConfig(rounds=5, n_per_round=500, seed=0)
    state = train(model, config)
    for d in state.diagnostics:
        print(f"round {d.round_index}: tau {d.tau:.3f}  ess {d.ess:.1f} "
              f"({d.ess_status})  val loss {d.val_loss:.4f}")

    post = sample_posterior(state, 5000, np.random.default_rng(0))
    print(f"learned posterior:  mean {post.mean():.4f}  std {post.std():.4f}")


if __name__ == "__main__":
    main()
