#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "plcpatch/isa.hpp"

namespace plcpatch {

class AsmError : public std::runtime_error {
public:
    AsmError(int line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line(line) {}
    int line;
};

// Output of one assembly unit: raw bytes placed at `base`, plus the resolved
// label table for the caller.
struct AsmFragment {
    uint32_t base = 0;
    std::vector<uint8_t> bytes;
    std::map<std::string, uint32_t> labels;

    uint32_t label(const std::string& name) const;
    uint32_t end() const { return base + uint32_t(bytes.size()); }
};

// Two-pass assembler over the subset syntax (docs/assembly.md):
//   labels (`name:`), mnemonics with optional condition suffix, `!` writeback,
//   `ldr rX, =expr` pooled literals, `.word`, `.zero`, `.pool`, `; comments`.
// `externs` pre-defines symbols usable in operand expressions.
AsmFragment assemble(const std::string& source, uint32_t base,
                     const std::map<std::string, uint32_t>& externs = {});

// Decode a code range back to canonical source (one instruction per line).
// Words that do not decode render as `.word 0x...`.
std::string disassemble_range(const MemoryImage& img, uint32_t base, uint32_t len);

}  // namespace plcpatch
