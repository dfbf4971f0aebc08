from pathlib import Path
from typing import List, Optional, Sequence

from learners.base import LearnerError


def _quote(text: str) -> str:
    return '"' + text.replace('\\', '\\\\').replace('"', '\\"') + '"'


def tree_to_dot(model, feature_names: Optional[Sequence[str]] = None) -> str:
    """
    Graphviz rendering of a fitted decision tree CAM. Internal nodes read
    ``feature <= threshold``, leaves carry the predicted class; edges are
    labelled true/false for the test outcome.
    """
    if getattr(model, 'algo', None) != 'dt':
        raise LearnerError(f"tree export needs a dt model, got {getattr(model, 'algo', None)!r}")
    root = model.export_tree()
    if feature_names is None:
        feature_names = [f'x{i}' for i in range(model.n_features_in_)]

    lines: List[str] = ['digraph Tree {', 'node [shape=box] ;']
    counter = 0

    def emit(node) -> int:
        nonlocal counter
        node_id = counter
        counter += 1
        stats = f"gini = {node.impurity:.3f}\\nsamples = {node.samples}"
        if node.is_leaf:
            label = f"class = {node.label}\\n{stats}"
        else:
            label = f"{feature_names[node.feature]} <= {node.threshold:.2f}\\n{stats}"
        lines.append(f'{node_id} [label={_quote(label)}] ;')
        if not node.is_leaf:
            left = emit(node.left)
            lines.append(f'{node_id} -> {left} [label="true"] ;')
            right = emit(node.right)
            lines.append(f'{node_id} -> {right} [label="false"] ;')
        return node_id

    emit(root)
    lines.append('}')
    return '\n'.join(lines) + '\n'


def write_dot(model, path, feature_names: Optional[Sequence[str]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(tree_to_dot(model, feature_names), encoding='utf-8')
    return path
