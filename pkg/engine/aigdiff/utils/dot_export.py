"""
GraphViz DOT export for Dags.
"""

from typing import Optional, Sequence

from aigdiff.models.dag import EDGE_NEGATED, NODE_TYPE_NAMES, Dag

_EDGE_STYLE = {EDGE_NEGATED: "dashed"}


def to_dot(dag: Dag, labels: Optional[Sequence[str]] = None) -> str:
    """
    Render a Dag as DOT text.

    Args:
        dag: Graph to render
        labels: Optional per-node names; defaults to the node ids

    Returns:
        DOT source; absent edges are omitted and negation edges are dashed
    """
    if dag.n == 0:
        return "digraph { }"

    names = list(labels) if labels is not None else [str(i) for i in range(dag.n)]
    lines = ["digraph {", "  rankdir=BT;"]
    for i in range(dag.n):
        kind = int(dag.node_index[i])
        type_name = NODE_TYPE_NAMES[kind] if kind < len(NODE_TYPE_NAMES) else f"type{kind}"
        lines.append(f'  n{i} [label="{names[i]}\\n{type_name} L{int(dag.levels[i])}"];')
    for child, parent, cat in dag.edge_list():
        style = _EDGE_STYLE.get(cat, "solid")
        lines.append(f"  n{child} -> n{parent} [style={style}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
