from dataclasses import dataclass
from dataclasses import field
from typing import Dict
from typing import List
from typing import Tuple

COMPRESSOR = "compressor"
CONDENSER = "condenser"
VALVE = "valve"
EVAPORATOR = "evaporator"

LIQUID_NODE = "p_liq"
SUCTION_NODE = "p_suct"


def discharge_node(k: int) -> str:
    return f"p_dis_{k}"


@dataclass
class Component:
    name: str
    kind: str
    index: int  # 0-based position within its kind


@dataclass
class Topology:
    """Parallel-merge cycle: n_c compressor/condenser branches, n_v valve/evaporator branches"""

    n_c: int
    n_v: int
    components: List[Component]
    edges: List[Tuple[str, str]]
    pressure_nodes: List[str]
    _by_name: Dict[str, Component] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._by_name = {c.name: c for c in self.components}

    @property
    def n_p(self) -> int:
        return len(self.pressure_nodes)

    @property
    def n_cond(self) -> int:
        return self.n_c

    @property
    def n_evap(self) -> int:
        return self.n_v

    @property
    def n_hx(self) -> int:
        return self.n_c + self.n_v

    @property
    def state_dim(self) -> int:
        return 2 * self.n_hx

    def of_kind(self, kind: str) -> List[Component]:
        return [c for c in self.components if c.kind == kind]

    def component(self, name: str) -> Component:
        return self._by_name[name]

    @property
    def heat_exchangers(self) -> List[Component]:
        """Condensers first, then evaporators; this is the state ordering"""
        return self.of_kind(CONDENSER) + self.of_kind(EVAPORATOR)

    def mass_index(self, hx: int) -> int:
        return hx

    def energy_index(self, hx: int) -> int:
        return self.n_hx + hx

    def inlets(self, name: str) -> List[str]:
        return [a for a, b in self.edges if b == name]

    def outlets(self, name: str) -> List[str]:
        return [b for a, b in self.edges if a == name]

    def validate(self) -> None:
        for c in self.components:
            if len(self.inlets(c.name)) != 1 or len(self.outlets(c.name)) != 1:
                raise ValueError(f"component {c.name} must have exactly one inlet and one outlet")
        condensers = {c.name for c in self.of_kind(CONDENSER)}
        if set(self.inlets(LIQUID_NODE)) != condensers:
            raise ValueError("liquid manifold must collect every condenser outlet")
        compressors = {c.name for c in self.of_kind(COMPRESSOR)}
        if set(self.outlets(SUCTION_NODE)) != compressors:
            raise ValueError("suction manifold must feed every compressor inlet")


def build_topology(n_c: int, n_v: int) -> Topology:
    """
    Build the parallel-merge cycle.

    Each compressor discharges into its own condenser through a discharge
    node, all condensers merge into the liquid manifold, the manifold feeds
    n_v valve/evaporator pairs, and all evaporators merge into the suction
    manifold that feeds every compressor.
    """
    if n_c < 1 or n_v < 1:
        raise ValueError(f"need at least one branch on each side, got n_c={n_c}, n_v={n_v}")

    components: List[Component] = []
    edges: List[Tuple[str, str]] = []

    for k in range(n_c):
        comp = Component(f"C{k + 1}", COMPRESSOR, k)
        cond = Component(f"Hc{k + 1}", CONDENSER, k)
        components.extend([comp, cond])
        edges.append((SUCTION_NODE, comp.name))
        edges.append((comp.name, discharge_node(k + 1)))
        edges.append((discharge_node(k + 1), cond.name))
        edges.append((cond.name, LIQUID_NODE))

    for k in range(n_v):
        valve = Component(f"V{k + 1}", VALVE, k)
        evap = Component(f"He{k + 1}", EVAPORATOR, k)
        components.extend([valve, evap])
        edges.append((LIQUID_NODE, valve.name))
        edges.append((valve.name, evap.name))
        edges.append((evap.name, SUCTION_NODE))

    pressure_nodes = [discharge_node(k + 1) for k in range(n_c)] + [LIQUID_NODE, SUCTION_NODE]
    topology = Topology(n_c, n_v, components, edges, pressure_nodes)
    topology.validate()
    return topology
