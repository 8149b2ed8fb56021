import logging
import os
from typing import Dict
from typing import Optional

import graphviz

from topology import COMPRESSOR
from topology import CONDENSER
from topology import EVAPORATOR
from topology import VALVE
from topology import Topology

logger = logging.getLogger(__name__)

# Constants
DEFAULT_FONT = "Helvetica"
KIND_COLORS = {
    COMPRESSOR: "#d9e8f5",
    CONDENSER: "#f5d9d9",
    VALVE: "#e8e8e8",
    EVAPORATOR: "#d9f0d9",
}
KIND_SHAPES = {COMPRESSOR: "circle", CONDENSER: "box", VALVE: "diamond", EVAPORATOR: "box"}


class TopologyDotGenerator:
    def __init__(self, topology: Topology, title: str = "", pressures: Optional[Dict] = None):
        self.topology = topology
        self.title = title
        # latest solved junction pressures in Pa, shown under the node names
        self.pressures = pressures or {}

    def generate(self, dark_mode: bool = False) -> str:
        """DOT source for the cycle: components, manifold nodes and refrigerant flow edges"""
        dot_output = [
            "digraph cycle {",
            "rankdir=LR;",
            'bgcolor="#b1b1b1";' if dark_mode else 'bgcolor="white";',
            "graph [nodesep=0.6, ranksep=0.9];",
            f'node [fontsize=11, fontname="{DEFAULT_FONT}", style=filled];',
            f'edge [fontname="{DEFAULT_FONT}", arrowsize=0.7];',
            'labelloc="t";',
            f'label="{self._generate_title()}";',
        ]
        for component in self.topology.components:
            dot_output.append(self._generate_component_node(component.name, component.kind))
        for node in self.topology.pressure_nodes:
            dot_output.append(self._generate_pressure_node(node))
        for source, target in self.topology.edges:
            dot_output.append(f'"{source}" -> "{target}";')
        dot_output.append("}")
        return "\n".join(dot_output)

    def _generate_title(self) -> str:
        t = self.topology
        summary = (
            f"n_c={t.n_c}, n_v={t.n_v}, n_p={t.n_p}, state dimension {t.state_dim}"
        )
        return f"{self.title}\\n{summary}" if self.title else summary

    def _generate_component_node(self, name: str, kind: str) -> str:
        return (
            f'"{name}" [label="{name}\\n{kind}", shape={KIND_SHAPES[kind]}, '
            f'fillcolor="{KIND_COLORS[kind]}"];'
        )

    def _generate_pressure_node(self, node: str) -> str:
        label = node
        if node in self.pressures:
            label = f"{node}\\n{self.pressures[node] / 1e5:.2f} bar"
        return f'"{node}" [shape=point, xlabel="{label}", width=0.12];'


def write_dot(path: str, topology: Topology, pressures: Optional[Dict] = None) -> str:
    with open(path, "w") as fh:
        fh.write(TopologyDotGenerator(topology, pressures=pressures).generate())
    return path


def render_dot(dot_path: str, format: str = "svg") -> Optional[str]:
    """
    Render a stored DOT file next to itself (topology.dot -> topology.svg).
    Returns None when the Graphviz ``dot`` binary is missing or fails.
    """
    with open(dot_path) as fh:
        source = graphviz.Source(fh.read(), filename=dot_path, format=format)
    outfile = f"{os.path.splitext(dot_path)[0]}.{format}"
    try:
        output = source.render(outfile=outfile, cleanup=False)
    except (graphviz.ExecutableNotFound, graphviz.CalledProcessError) as e:
        logger.warning("could not render %s: %s", dot_path, e)
        return None
    logger.info("rendered topology diagram to %s", output)
    return output
