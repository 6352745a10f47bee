#include "plcpatch/ddg.hpp"

#include <algorithm>
#include <sstream>

namespace plcpatch {

NodeId Ddg::add_instr_node(uint32_t pc, const std::string& operands) {
    if (auto it = by_pc_.find(pc); it != by_pc_.end()) return it->second;
    NodeId id = NodeId(nodes_.size());
    DdgNode n;
    n.kind = DdgNodeKind::Instruction;
    n.pc = pc;
    n.operands = operands;
    nodes_.push_back(std::move(n));
    preds_.emplace_back();
    by_pc_[pc] = id;
    return id;
}

NodeId Ddg::add_mem_node(uint32_t addr) {
    if (auto it = by_addr_.find(addr); it != by_addr_.end()) return it->second;
    NodeId id = NodeId(nodes_.size());
    DdgNode n;
    n.kind = DdgNodeKind::Memory;
    n.addr = addr;
    nodes_.push_back(std::move(n));
    preds_.emplace_back();
    by_addr_[addr] = id;
    return id;
}

void Ddg::add_edge(NodeId from, NodeId to, DdgEdgeKind kind) {
    const DdgNode& f = nodes_.at(from);
    const DdgNode& t = nodes_.at(to);
    switch (kind) {
        case DdgEdgeKind::Stores:
            if (f.kind != DdgNodeKind::Instruction || t.kind != DdgNodeKind::Memory)
                throw std::logic_error("stores edge must be INSTRUCTION->MEMORY");
            break;
        case DdgEdgeKind::Loads:
            if (f.kind != DdgNodeKind::Memory || t.kind != DdgNodeKind::Instruction)
                throw std::logic_error("loads edge must be MEMORY->INSTRUCTION");
            break;
        case DdgEdgeKind::Next:
            if (f.kind == DdgNodeKind::Memory || t.kind != DdgNodeKind::Instruction)
                throw std::logic_error("next edge must be TRANSITION/INSTRUCTION->INSTRUCTION");
            break;
    }
    // duplicate edges from loop iterations collapse
    for (NodeId p : preds_[to])
        if (p == from) {
            for (const auto& e : edges_)
                if (e.from == from && e.to == to && e.kind == kind) return;
        }
    edges_.push_back({from, to, kind});
    preds_[to].push_back(from);
}

NodeId Ddg::reg_definer(uint8_t reg) {
    if (auto it = reg_cursor_.find(reg); it != reg_cursor_.end()) return it->second;
    // first observed use: materialize a transition-node origin
    uint32_t seq = transition_seq_[reg]++;
    NodeId id = NodeId(nodes_.size());
    DdgNode n;
    n.kind = DdgNodeKind::Transition;
    n.reg = reg;
    n.seq = seq;
    nodes_.push_back(std::move(n));
    preds_.emplace_back();
    reg_cursor_[reg] = id;
    return id;
}

void Ddg::record(const TraceEvent& ev) {
    NodeId instr = add_instr_node(ev.pc, "");
    // register operands of memory instructions chain the same way register
    // writers do, so a store is reachable backward through its value and
    // address sources
    auto link_srcs = [&]() {
        for (uint8_t i = 0; i < ev.n_srcs; ++i) {
            uint8_t src = ev.src_regs[i];
            if (src == REG_PC) continue;
            NodeId def = reg_definer(src);
            if (def != instr) add_edge(def, instr, DdgEdgeKind::Next);
        }
    };
    switch (ev.kind) {
        case EventKind::MemWrite: {
            NodeId mem = add_mem_node(ev.addr);
            link_srcs();
            add_edge(instr, mem, DdgEdgeKind::Stores);
            writer_[ev.addr] = {instr, ev.pc};
            break;
        }
        case EventKind::MemRead: {
            NodeId mem = add_mem_node(ev.addr);
            link_srcs();
            add_edge(mem, instr, DdgEdgeKind::Loads);
            break;
        }
        case EventKind::RegWrite: {
            link_srcs();
            reg_cursor_[ev.reg] = instr;
            break;
        }
        case EventKind::Branch:
            break;
    }
}

void Ddg::reset_register_cursors() { reg_cursor_.clear(); }

std::optional<NodeId> Ddg::instr_node(uint32_t pc) const {
    if (auto it = by_pc_.find(pc); it != by_pc_.end()) return it->second;
    return std::nullopt;
}

std::optional<NodeId> Ddg::mem_node(uint32_t addr) const {
    if (auto it = by_addr_.find(addr); it != by_addr_.end()) return it->second;
    return std::nullopt;
}

std::optional<uint32_t> Ddg::last_writer_pc(uint32_t addr) const {
    if (auto it = writer_.find(addr); it != writer_.end()) return it->second.second;
    return std::nullopt;
}

std::vector<uint32_t> Ddg::dfs_localize(uint32_t start_pc, uint32_t block_start,
                                        uint32_t block_end) const {
    auto start = instr_node(start_pc);
    if (!start) throw NoCandidateError("start pc not present in the graph");

    std::vector<uint32_t> candidates;
    std::vector<bool> visited(nodes_.size(), false);
    std::vector<NodeId> stack{*start};
    while (!stack.empty()) {
        NodeId id = stack.back();
        stack.pop_back();
        if (visited[id]) continue;
        visited[id] = true;
        const DdgNode& n = nodes_[id];
        if (n.kind == DdgNodeKind::Memory) {
            if (auto it = writer_.find(n.addr); it != writer_.end()) {
                uint32_t wpc = it->second.second;
                if (wpc >= block_start && wpc < block_end) candidates.push_back(n.addr);
            }
        }
        // push predecessors so that the earliest-inserted edge is explored first
        const auto& ps = preds_[id];
        for (auto it = ps.rbegin(); it != ps.rend(); ++it)
            if (!visited[*it]) stack.push_back(*it);
    }
    if (candidates.empty())
        throw NoCandidateError("no in-block memory node reachable from start");
    return candidates;
}

namespace {

std::string node_key(const DdgNode& n) {
    std::ostringstream os;
    switch (n.kind) {
        case DdgNodeKind::Instruction: os << "I:" << std::hex << n.pc; break;
        case DdgNodeKind::Memory: os << "M:" << std::hex << n.addr; break;
        case DdgNodeKind::Transition: os << "T:r" << int(n.reg) << ":" << n.seq; break;
    }
    return os.str();
}

const char* edge_label(DdgEdgeKind k) {
    switch (k) {
        case DdgEdgeKind::Stores: return "stores";
        case DdgEdgeKind::Loads: return "loads";
        case DdgEdgeKind::Next: return "next";
    }
    return "?";
}

}  // namespace

std::string Ddg::to_dot() const {
    std::ostringstream os;
    os << "digraph ddg {\n";
    for (size_t i = 0; i < nodes_.size(); ++i) {
        const DdgNode& n = nodes_[i];
        const char* shape = n.kind == DdgNodeKind::Instruction
                                ? "box"
                                : (n.kind == DdgNodeKind::Memory ? "ellipse" : "diamond");
        os << "  n" << i << " [shape=" << shape << " label=\"" << node_key(n);
        if (n.kind == DdgNodeKind::Instruction && !n.operands.empty())
            os << "\\n" << n.operands;
        os << "\"];\n";
    }
    for (const auto& e : edges_)
        os << "  n" << e.from << " -> n" << e.to << " [label=\"" << edge_label(e.kind) << "\"];\n";
    os << "}\n";
    return os.str();
}

std::string Ddg::canonical_form() const {
    std::vector<std::string> keys(nodes_.size());
    for (size_t i = 0; i < nodes_.size(); ++i) keys[i] = node_key(nodes_[i]);
    std::vector<std::string> lines;
    lines.reserve(nodes_.size() + edges_.size());
    for (const auto& k : keys) lines.push_back("node " + k);
    for (const auto& e : edges_)
        lines.push_back("edge " + keys[e.from] + " -" + edge_label(e.kind) + "-> " + keys[e.to]);
    std::sort(lines.begin(), lines.end());
    std::string out;
    for (const auto& l : lines) {
        out += l;
        out += "\n";
    }
    return out;
}

}  // namespace plcpatch
