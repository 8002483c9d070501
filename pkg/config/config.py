# Synthetic corpus generation (gen-data)
corpus = {
    'T': 48,
    'N': 4,
    'd_in': 32,
    'vocab': 16,
    'noise_sigma': 0.25,
    'min_len': 4,
    'max_len': 16,
    'seed': 7,
    'count': 2000,
    'heldout': 500,
}

# Architecture; d_in is taken from the training corpus
model = {
    'd_model': 32,
    'heads': 8,
    'graph_layers': 1,
    'use_attention': True,
    'update_strategy': 'gated',
    'seed': 7,
}

# Three-stage training and inference settings. The 'desk' preset runs
# 10/10/20 epochs, 'full' runs 50/50/100.
train = {
    'preset': 'desk',
    'learning_rate': 1e-4,
    'batch_size': 16,
    'K': 5,
    'alpha1': 0.6,
    'alpha2': 0.4,
    'beta1': 0.2,
    'beta2': 0.2,
    'gamma1': 1.0,
    'gamma2': 0.5,
    'theta': 0.75,
    'theta_margin': 0.1,
    'direction': 'left_while_right',
    # processes computing per-example gradients; results do not depend on it
    'workers': 4,
    'seed': 7,
}

evaluation = {
    'n_list': [1, 5],
    'm_list': [0.5, 0.7],
    'threads': 1,
}

logging = {
    'root': {'level': 'INFO', 'handlers': ['console']},
    'loggers': {
        'slp': {'level': 'INFO', 'handlers': ['console'], 'propagate': False},
        'py.warnings': {'handlers': ['console']},
        '__force_dict__': True
    },
    'handlers': {
        'console': {
            'level': 'DEBUG',
            'class': 'logging.StreamHandler',
            'formatter': 'color'
        }
    },
    'formatters': {
        'simple': {
            'format': ('%(asctime)s %(levelname)-5.5s [%(name)s]'
                       '[%(threadName)s] %(message)s')
        },
        'color': {
            '()': 'pecan.log.ColorFormatter',
            'format': ('%(asctime)s [%(padded_color_levelname)s] [%(name)s]'
                       '[%(threadName)s] %(message)s'),
        '__force_dict__': True
        }
    }
}

# Optional run registry. Every command records a row per run when this is set;
# create the schema first with `slp populate`.
# sqlalchemy = {
#     'url': 'sqlite:////tmp/slp-runs.db',
#     'echo': False,
# }
