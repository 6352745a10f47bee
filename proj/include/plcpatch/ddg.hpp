#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "plcpatch/isa.hpp"

namespace plcpatch {

// Trace-built data dependence graph. Three node kinds: instruction nodes
// (one per pc within a run), memory nodes (one per address), and transition
// nodes (origin of a register value with no recorded definer). Edges:
//   stores: INSTRUCTION -> MEMORY
//   loads:  MEMORY -> INSTRUCTION
//   next:   TRANSITION-or-INSTRUCTION -> INSTRUCTION (register dataflow)

enum class DdgNodeKind : uint8_t { Instruction, Memory, Transition };
enum class DdgEdgeKind : uint8_t { Stores, Loads, Next };

using NodeId = uint32_t;
constexpr NodeId NO_NODE = 0xFFFFFFFF;

struct DdgNode {
    DdgNodeKind kind;
    uint32_t pc = 0;       // Instruction
    uint32_t addr = 0;     // Memory
    uint8_t reg = 0;       // Transition
    uint32_t seq = 0;      // Transition ordinal per register
    std::string operands;  // Instruction: decoded-operand summary
};

struct DdgEdge {
    NodeId from;
    NodeId to;
    DdgEdgeKind kind;
};

class NoCandidateError : public std::runtime_error {
public:
    explicit NoCandidateError(const std::string& what) : std::runtime_error(what) {}
};

class Ddg {
public:
    NodeId add_instr_node(uint32_t pc, const std::string& operands);
    NodeId add_mem_node(uint32_t addr);
    void add_edge(NodeId from, NodeId to, DdgEdgeKind kind);

    // Feeds one interpreter event into the graph (Instruction node for the
    // event's pc must be added by the caller first via record()).
    void record(const TraceEvent& ev);

    // Clears per-register cursors; memory writer cursors survive. Used at
    // scan-cycle boundaries so register chains do not leak across cycles.
    void reset_register_cursors();

    std::optional<NodeId> instr_node(uint32_t pc) const;
    std::optional<NodeId> mem_node(uint32_t addr) const;
    const DdgNode& node(NodeId id) const { return nodes_[id]; }
    const std::vector<DdgNode>& nodes() const { return nodes_; }
    const std::vector<DdgEdge>& edges() const { return edges_; }

    // pc of the instruction that most recently stored to addr, if any.
    std::optional<uint32_t> last_writer_pc(uint32_t addr) const;

    // Backward (edge-reversed) DFS from the instruction node at `start_pc`.
    // Collects memory-node addresses whose most recent storing instruction
    // lies inside [block_start, block_end), in first-visit order. Child order
    // is edge-insertion order, so results are deterministic.
    std::vector<uint32_t> dfs_localize(uint32_t start_pc, uint32_t block_start,
                                       uint32_t block_end) const;

    // Graphviz dot rendering for --dump-ddg.
    std::string to_dot() const;

    // Canonical text form: relabels node ids by a stable key so isomorphic
    // graphs produced from identical traces compare equal.
    std::string canonical_form() const;

private:
    std::vector<DdgNode> nodes_;
    std::vector<DdgEdge> edges_;
    std::map<uint32_t, NodeId> by_pc_;
    std::map<uint32_t, NodeId> by_addr_;
    std::map<uint32_t, std::pair<NodeId, uint32_t>> writer_;  // addr -> (instr node, pc)
    std::map<uint8_t, NodeId> reg_cursor_;                    // reg -> last definer node
    std::map<uint8_t, uint32_t> transition_seq_;
    std::vector<std::vector<NodeId>> preds_;  // reverse adjacency, per node

    NodeId reg_definer(uint8_t reg);
};

}  // namespace plcpatch
