"""Published hyperparameters and accuracy figures at 32 threads.

``HPARAMS[dataset][algo]`` gives (lambda, eta, gamma); ``ACCURACY[dataset][algo]``
gives (rmse, mae). The synthetic presets are this package's own settings for
the desk-scale planted and power-law matrices.
"""

HPARAMS = {
    "ml1m": {
        "hogwild": (3e-2, 6e-4, 0.0),
        "dsgd": (3e-2, 6e-4, 0.0),
        "asgd": (3e-2, 6e-4, 0.0),
        "fpsgd": (3e-2, 6e-4, 0.0),
        "a2psgd": (5e-2, 1e-4, 0.9),
    },
    "epinions": {
        "hogwild": (5e-1, 2e-3, 0.0),
        "dsgd": (5e-1, 2e-3, 0.0),
        "asgd": (5e-1, 2e-3, 0.0),
        "fpsgd": (5e-1, 2e-3, 0.0),
        "a2psgd": (4e-1, 2e-4, 0.9),
    },
    # planted rank-4 500x500, 5% train density, noise 0.01
    "planted": {
        "hogwild": (1e-3, 0.1, 0.0),
        "dsgd": (1e-3, 0.1, 0.0),
        "asgd": (1e-3, 0.1, 0.0),
        "fpsgd": (1e-3, 0.1, 0.0),
        "serial-sgd": (1e-3, 0.1, 0.0),
        "a2psgd": (1e-3, 1e-2, 0.9),
        "serial-nag": (1e-3, 1e-2, 0.9),
    },
    # Zipf(1.2) 10^4 x 10^4, 10^6 nonzeros, planted rank 8, noise 0.1
    "powerlaw": {
        "hogwild": (1e-2, 1.2e-2, 0.0),
        "dsgd": (1e-2, 1.2e-2, 0.0),
        "asgd": (1e-2, 1.2e-2, 0.0),
        "fpsgd": (1e-2, 1.2e-2, 0.0),
        "serial-sgd": (1e-2, 1.2e-2, 0.0),
        "a2psgd": (1e-2, 2e-3, 0.9),
        "serial-nag": (1e-2, 2e-3, 0.9),
    },
}
HPARAMS["ml1m"]["serial-sgd"] = HPARAMS["ml1m"]["fpsgd"]
HPARAMS["ml1m"]["serial-nag"] = HPARAMS["ml1m"]["a2psgd"]
HPARAMS["epinions"]["serial-sgd"] = HPARAMS["epinions"]["fpsgd"]
HPARAMS["epinions"]["serial-nag"] = HPARAMS["epinions"]["a2psgd"]

ACCURACY = {
    "ml1m": {
        "hogwild": (0.8602, 0.6761),
        "dsgd": (0.8583, 0.6746),
        "asgd": (0.8584, 0.6747),
        "fpsgd": (0.8585, 0.6747),
        "a2psgd": (0.8552, 0.6741),
    },
    "epinions": {
        "hogwild": (2.0239, 1.4910),
        "dsgd": (2.0266, 1.4956),
        "asgd": (2.0264, 1.4953),
        "fpsgd": (2.0316, 1.5037),
        "a2psgd": (2.0165, 1.4705),
    },
}

ML1M_RATINGS = 1_000_209
