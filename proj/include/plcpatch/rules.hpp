#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "plcpatch/memory_image.hpp"

namespace plcpatch {

class RuleError : public std::runtime_error {
public:
    explicit RuleError(const std::string& what) : std::runtime_error(what) {}
};
class RuleParseError : public RuleError {
public:
    using RuleError::RuleError;
};
class UnknownSymbolError : public RuleError {
public:
    using RuleError::RuleError;
};
class UnknownPatchIdError : public RuleError {
public:
    using RuleError::RuleError;
};

enum class RuleAction : uint8_t { Warn, Alert };

enum class RuleSymbol : uint8_t {
    WriteAddress,
    ReadAddress,
    RuntimeStack,
    RuntimeData,
    RuntimeAddressTable,
    AppStackBase,
    Literal,
};

enum class RuleCmp : uint8_t { Ge, Gt, Le, Lt, Eq, Ne, InRegion };

// One conjunct of a rule definition. For InRegion the rhs is a region kind;
// PROFILE_DEVIATION is a bare-term conjunct flagged separately.
struct RuleTerm {
    bool profile_deviation = false;
    RuleSymbol lhs = RuleSymbol::WriteAddress;
    RuleCmp cmp = RuleCmp::Ge;
    RuleSymbol rhs = RuleSymbol::Literal;
    uint32_t rhs_literal = 0;
    RegionKind region = RegionKind::AddressTable;  // for InRegion
};

struct Rule {
    std::string name;
    std::string message;
    RuleAction action = RuleAction::Alert;
    std::string patch_identifier;
    std::vector<RuleTerm> terms;  // conjunction
};

// A memory access offered to the engine. Unmapped attempts are included
// (mapped = false) so out-of-range accesses remain classifiable.
struct AccessSample {
    bool is_write = false;
    uint32_t pc = 0;
    uint32_t addr = 0;
    uint32_t value = 0;
    bool mapped = true;
    uint64_t cycle = 0;      // global scan-cycle ordinal (0 = first cycle)
    uint64_t cycle_step = 0; // step index within the run
    // frame attribution for profile checks (innermost application frame)
    bool has_frame = false;
    uint32_t frame_base = 0;
    uint32_t fn_entry = 0;
};

struct Detection {
    std::string rule;
    RuleAction action = RuleAction::Alert;
    std::string patch_identifier;
    std::string message;
    uint32_t pc = 0;
    uint32_t violating_address = 0;
    bool is_write = false;
    uint64_t cycle = 0;
    uint64_t cycle_step = 0;
};

// Frame-relative write/read offsets observed per function under legitimate
// inputs. Offsets are relative to the function's frame base, never absolute.
struct StackWriteProfile {
    std::map<uint32_t, std::set<uint32_t>> write_offsets;  // fn entry -> offsets
    std::map<uint32_t, std::set<uint32_t>> read_offsets;

    bool covers_write(uint32_t fn_entry, uint32_t offset) const {
        auto it = write_offsets.find(fn_entry);
        return it != write_offsets.end() && it->second.count(offset) > 0;
    }
    bool empty() const { return write_offsets.empty() && read_offsets.empty(); }
};

struct EvalContext {
    const StackWriteProfile* profile = nullptr;
    // Table cells under patch management: stores to them are reported WARN,
    // never ALERT (the deployed restore patch compensates them).
    const std::set<uint32_t>* immune_cells = nullptr;
    std::vector<Detection>* warn_sink = nullptr;  // optional WARN log
};

// Known skeleton patch identifiers live here so rule files can be validated
// at parse time.
const std::set<std::string>& registered_patch_ids();

std::vector<Rule> parse_ruleset(const std::string& text);
const std::string& default_ruleset_text();

// First matching ALERT rule wins, in rule-list order; WARN matches go to
// ctx.warn_sink and evaluation continues. Stores into the address table
// during the first scan cycle (cycle 0) never match: the table is initialized
// once during that cycle.
std::optional<Detection> evaluate(const std::vector<Rule>& rules, const AccessSample& sample,
                                  const MemoryImage& image, const EvalContext& ctx = {});

}  // namespace plcpatch
