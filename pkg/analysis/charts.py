import logging
from pathlib import Path

import matplotlib

matplotlib.use('Agg')

import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402
import seaborn as sns  # noqa: E402

logger = logging.getLogger(__name__)

plt.style.use('seaborn-v0_8')
sns.set_palette('husl')


def accuracy_chart(results: pd.DataFrame, path, title: str = 'Accuracy per aggregation method') -> Path:
    """Bar per method: mean accuracy over seeds with a one-std error bar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    order = list(dict.fromkeys(results['method']))

    fig, ax = plt.subplots(figsize=(max(6, 0.9 * len(order)), 4.5))
    sns.barplot(data=results, x='method', y='accuracy', order=order, errorbar='sd',
                capsize=0.15, ax=ax)
    ax.set_ylim(0, 1.05)
    ax.set_xlabel('')
    ax.set_ylabel('Accuracy')
    ax.set_title(title)
    ax.tick_params(axis='x', rotation=30)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    logger.info("wrote accuracy chart %s", path)
    return path
